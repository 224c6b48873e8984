//! Byte-deterministic CSV serialization.

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::simulator::EnsembleResult;

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Dense row-major CSV without a header, one matrix row per line.
pub fn write_matrix_csv<W: Write>(out: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Per-run outcomes: `run,consensus_value,iters,converged`.
pub fn write_ensemble_csv<W: Write>(out: &mut W, ensemble: &EnsembleResult) -> io::Result<()> {
    writeln!(out, "run,consensus_value,iters,converged")?;
    for (run, r) in ensemble.results.iter().enumerate() {
        writeln!(out, "{run},{},{},{}", fmt_f64(r.consensus_value), r.iters, r.converged)?;
    }
    Ok(())
}

/// Recorded states: `run,k,node,value` with 1-based node labels.
pub fn write_trajectory_csv<W: Write>(out: &mut W, ensemble: &EnsembleResult) -> io::Result<()> {
    writeln!(out, "run,k,node,value")?;
    for (run, r) in ensemble.results.iter().enumerate() {
        for point in r.trajectory.iter().flatten() {
            for (node, &value) in point.x.iter().enumerate() {
                writeln!(out, "{run},{},{},{}", point.k, node + 1, fmt_f64(value))?;
            }
        }
    }
    Ok(())
}
