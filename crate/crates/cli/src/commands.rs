use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use asyncavg::error_analysis::{analyze as analyze_instance, eigen_residual, AnalysisReport};
use asyncavg::export::{fmt_f64, write_ensemble_csv, write_matrix_csv, write_trajectory_csv};
use asyncavg::simulator::{run_ensemble, EnsembleResult, SimulationConfig, RNG_ALGORITHM};
use asyncavg::switched_model::{
    effective_mode_count, enumerate_modes, formal_mode_count, mean_matrix_enumerated, mean_matrix_reduced,
    mode_probability, ENUMERATION_CAP,
};

use crate::config::ExperimentConfig;
use crate::CliError;

const DEFAULT_OUTPUT_DIR: &str = "out";

/// Tolerances checked by `verify`.
pub const MEAN_MATRIX_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const PROBABILITY_SUM_TOL: f64 = 1e-10;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub quiet: bool,
}

impl Options {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn resolve_dir(&self, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let dir = self
            .output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(config_path: &Path, opts: &Options) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(runs) = opts.runs {
        config.runs = runs;
    }
    Ok(config)
}

fn run_analysis(config: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    Ok(analyze_instance(&config.weights, &config.delays, &config.x0)?)
}

/// Writes `report.txt` and `report.csv`.
pub fn analyze(config_path: &Path, opts: &Options) -> Result<AnalysisReport, CliError> {
    let config = load(config_path, opts)?;
    let report = run_analysis(&config)?;
    let dir = opts.resolve_dir(&config)?;

    let mut text = format!("# topology = {}\n", config.topology_label);
    text.push_str(&format!("# pi = [{}]\n", join_f64(config.delays.pi())));
    text.push_str(&report.to_key_value());
    write_text(&dir.join("report.txt"), &text)?;
    write_text(&dir.join("report.csv"), &format!("{}\n{}\n", AnalysisReport::csv_header(), report.csv_row()))?;

    opts.say(format!("exact_expected_error = {}", fmt_f64(report.exact_expected_error)));
    opts.say(format!("bound = {}", fmt_f64(report.bound)));
    if report.zero_error_case {
        opts.say("identical diagonal weights: expected average error is zero");
    }
    Ok(report)
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ")
}

/// Keys of `summary.csv`: the analysis fields followed by ensemble statistics.
pub fn summary_keys() -> Vec<&'static str> {
    let mut keys = AnalysisReport::KEYS.to_vec();
    keys.extend(["runs", "seed", "empirical_mean", "empirical_std", "std_defined", "not_converged"]);
    keys
}

#[derive(Debug)]
pub struct SimulationOutcome {
    pub analysis: AnalysisReport,
    pub ensemble: EnsembleResult,
    pub output_dir: PathBuf,
}

/// Writes `ensemble.csv`, `summary.csv`, `summary.txt`, and with a nonzero
/// trajectory stride `trajectories.csv` and `mean_trajectory.csv`.
pub fn simulate(config_path: &Path, opts: &Options) -> Result<SimulationOutcome, CliError> {
    let config = load(config_path, opts)?;
    let analysis = run_analysis(&config)?;
    let sim = SimulationConfig {
        weights: config.weights.clone(),
        delays: config.delays.clone(),
        x0: config.x0.clone(),
        runs: config.runs,
        seed: config.seed,
        tol: config.tol,
        max_iters: config.max_iters,
        trajectory_stride: config.trajectory_stride,
    };
    let ensemble = run_ensemble(&sim)?;
    let dir = opts.resolve_dir(&config)?;

    let mut out = create(&dir.join("ensemble.csv"))?;
    write_ensemble_csv(&mut out, &ensemble)?;
    out.flush()?;

    if config.trajectory_stride > 0 {
        let mut out = create(&dir.join("trajectories.csv"))?;
        write_trajectory_csv(&mut out, &ensemble)?;
        out.flush()?;

        let mut out = create(&dir.join("mean_trajectory.csv"))?;
        writeln!(out, "k,node,mean_value")?;
        for point in ensemble.mean_trajectory.iter().flatten() {
            for (node, &v) in point.x.iter().enumerate() {
                writeln!(out, "{},{},{}", point.k, node + 1, fmt_f64(v))?;
            }
        }
        out.flush()?;
    }

    let mut values = analysis.values();
    values.extend([
        ensemble.results.len().to_string(),
        config.seed.to_string(),
        fmt_f64(ensemble.empirical_mean),
        fmt_f64(ensemble.empirical_std),
        ensemble.std_defined.to_string(),
        ensemble.not_converged.to_string(),
    ]);
    let keys = summary_keys();
    write_text(&dir.join("summary.csv"), &format!("{}\n{}\n", keys.join(","), values.join(",")))?;

    let mut text = format!("# rng = {RNG_ALGORITHM}\n# topology = {}\n", config.topology_label);
    for (k, v) in keys.iter().zip(&values) {
        text.push_str(&format!("{k} = {v}\n"));
    }
    write_text(&dir.join("summary.txt"), &text)?;

    opts.say(format!("runs = {}", ensemble.results.len()));
    opts.say(format!("empirical_mean = {}", fmt_f64(ensemble.empirical_mean)));
    opts.say(format!("expected_async_average = {}", fmt_f64(analysis.expected_async_average)));
    opts.say(format!("exact_average = {}", fmt_f64(analysis.exact_average)));
    if ensemble.not_converged > 0 {
        opts.say(format!("not_converged = {}", ensemble.not_converged));
    }
    Ok(SimulationOutcome { analysis, ensemble, output_dir: dir })
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub formal_modes: Option<u128>,
    pub effective_modes: usize,
    pub max_mean_discrepancy: f64,
    pub eigen_residual: f64,
    pub probability_sum: f64,
    pub max_row_sum_deviation: f64,
    pub passed: bool,
}

/// Compares the enumerated and reduced mean matrices, checks the closed-form
/// eigenvector residual and the mode probability total. Fails with exit code
/// 3 when any check is out of tolerance.
pub fn verify(config_path: &Path, opts: &Options) -> Result<Verification, CliError> {
    let config = load(config_path, opts)?;
    let (a, delays) = (&config.weights, &config.delays);
    let q = delays.q();
    let modes = enumerate_modes(a, q).map_err(|e| {
        CliError::Domain(format!("{e}; reduce the node count, the link count, or q so that q^m <= {ENUMERATION_CAP}"))
    })?;
    let enumerated = mean_matrix_enumerated(a, delays)?;
    let reduced = mean_matrix_reduced(a, delays);

    let probability_sum: f64 = modes.iter().map(|m| mode_probability(m, delays)).sum();
    let v = Verification {
        formal_modes: formal_mode_count(a.n(), q),
        effective_modes: modes.len(),
        max_mean_discrepancy: reduced.max_abs_diff(&enumerated),
        eigen_residual: eigen_residual(&reduced).max(eigen_residual(&enumerated)),
        probability_sum,
        max_row_sum_deviation: reduced.row_sum_deviation().max(enumerated.row_sum_deviation()),
        passed: false,
    };
    let passed = v.max_mean_discrepancy <= MEAN_MATRIX_TOL
        && v.eigen_residual <= RESIDUAL_TOL
        && (v.probability_sum - 1.0).abs() <= PROBABILITY_SUM_TOL
        && v.max_row_sum_deviation <= MEAN_MATRIX_TOL;
    let v = Verification { passed, ..v };

    let dir = opts.resolve_dir(&config)?;
    let formal = match v.formal_modes {
        Some(count) => count.to_string(),
        None => format!("{q}^{}", a.n() * (a.n() - 1)),
    };
    let effective = effective_mode_count(a, q).map_or_else(String::new, |c| c.to_string());
    let lines = [
        format!("formal_modes = {formal}"),
        format!("effective_modes = {effective}"),
        format!("max_mean_discrepancy = {}", fmt_f64(v.max_mean_discrepancy)),
        format!("eigen_residual = {}", fmt_f64(v.eigen_residual)),
        format!("probability_sum = {}", fmt_f64(v.probability_sum)),
        format!("max_row_sum_deviation = {}", fmt_f64(v.max_row_sum_deviation)),
        format!("passed = {}", v.passed),
    ];
    write_text(&dir.join("verify.txt"), &(lines.join("\n") + "\n"))?;
    for (name, mean) in [("mean_matrix_reduced.csv", &reduced), ("mean_matrix_enumerated.csv", &enumerated)] {
        let mut out = create(&dir.join(name))?;
        write_matrix_csv(&mut out, mean.matrix())?;
        out.flush()?;
    }
    for line in &lines {
        opts.say(line);
    }

    if v.passed {
        Ok(v)
    } else {
        Err(CliError::VerificationFailed(format!(
            "discrepancy {:e} (tol {MEAN_MATRIX_TOL:e}), residual {:e} (tol {RESIDUAL_TOL:e}), probability sum {}",
            v.max_mean_discrepancy, v.eigen_residual, v.probability_sum
        )))
    }
}

fn read_single_row(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let context = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(context)?;
    let headers = reader.headers().map_err(context)?.clone();
    let record = reader
        .records()
        .next()
        .ok_or_else(|| CliError::Parse(format!("{}: no data row", path.display())))?
        .map_err(context)?;
    Ok(headers.iter().map(String::from).zip(record.iter().map(String::from)).collect())
}

fn field<'a>(row: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str, CliError> {
    row.get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Parse(format!("{}: missing column '{key}'", path.display())))
}

fn number(text: &str, key: &str) -> Result<f64, CliError> {
    text.parse().map_err(|_| CliError::Parse(format!("column '{key}': '{text}' is not a number")))
}

pub const COMBINED_KEYS: [&str; 9] = [
    "n",
    "q",
    "exact_average",
    "expected_async_average",
    "empirical_mean",
    "gap",
    "exact_expected_error",
    "bound",
    "bound_satisfied",
];

/// One merged record. Every field except `gap` and `bound_satisfied` is the
/// input text copied verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedReport {
    pub values: Vec<String>,
}

impl CombinedReport {
    pub fn get(&self, key: &str) -> Option<&str> {
        COMBINED_KEYS.iter().position(|k| *k == key).map(|i| self.values[i].as_str())
    }
}

/// Merges `report.csv` from `analyze` with `summary.csv` from `simulate`.
/// `gap` is `|analytic E[x*] − empirical mean|`; `bound_satisfied` compares
/// the analytic error against the bound.
pub fn report(analysis_csv: &Path, summary_csv: &Path, opts: &Options) -> Result<CombinedReport, CliError> {
    let analysis = read_single_row(analysis_csv)?;
    let summary = read_single_row(summary_csv)?;
    for key in ["n", "q"] {
        let (lhs, rhs) = (field(&analysis, key, analysis_csv)?, field(&summary, key, summary_csv)?);
        if lhs != rhs {
            return Err(CliError::HeaderMismatch(format!("{key} = {lhs} in analysis but {rhs} in ensemble summary")));
        }
    }

    let copy = |key: &str| field(&analysis, key, analysis_csv).map(str::to_string);
    let expected = copy("expected_async_average")?;
    let empirical = field(&summary, "empirical_mean", summary_csv)?.to_string();
    let error = copy("exact_expected_error")?;
    let bound = copy("bound")?;
    let gap = (number(&expected, "expected_async_average")? - number(&empirical, "empirical_mean")?).abs();
    let satisfied = number(&error, "exact_expected_error")? <= number(&bound, "bound")?;

    let values = vec![
        copy("n")?,
        copy("q")?,
        copy("exact_average")?,
        expected,
        empirical,
        fmt_f64(gap),
        error,
        bound,
        if satisfied { "yes" } else { "no" }.to_string(),
    ];
    let combined = CombinedReport { values };

    let dir = match &opts.output_dir {
        Some(dir) => dir.clone(),
        None => analysis_csv.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    write_text(
        &dir.join("combined.csv"),
        &format!("{}\n{}\n", COMBINED_KEYS.join(","), combined.values.join(",")),
    )?;

    let width = COMBINED_KEYS.iter().map(|k| k.len()).max().unwrap_or(0);
    for (k, v) in COMBINED_KEYS.iter().zip(&combined.values) {
        opts.say(format!("{k:<width$}  {v}"));
    }
    Ok(combined)
}
