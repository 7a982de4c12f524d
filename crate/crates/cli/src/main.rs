//! isom — robust isotonic regression from the command line.
//!
//! Subcommands:
//! - `fit` — fit an isotonic M-estimator to a two-column CSV, emit JSON,
//!   fitted CSV, and plot data
//! - `table1` — Monte Carlo MSE benchmark of the L2 / L1 / Huber estimators
//! - `chernoff` — simulate the slope-at-zero limit law and its variance
//! - `avar` — asymptotic variance of the fit at an interior point
//! - `influence` / `breakdown` / `probe` — robustness diagnostics
//!
//! Every command is a pure function of its inputs, flags, and seed; the
//! default seed comes from the `ISOM_SEED` environment variable.
//!
//! Exit codes: 2 for input parse errors, 3 for a degenerate scale,
//! 4 for bad flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use isom_core::asymptotics::{
    avar, limit_m_scale, simulate_chernoff, ChernoffConfig, ErrorModel, VAR_CHERNOFF_DEFAULT,
};
use isom_core::montecarlo::{table1, MseTable};
use isom_core::robustness::{
    breakdown_lower_bound, breakdown_lower_bound_with_scale, contamination_probe, influence,
    ContaminationSpec,
};
use isom_core::scale::{DEFAULT_BISQUARE_B, DEFAULT_BISQUARE_C};
use isom_core::solver::{fit, FitDocument};
use isom_core::{DesignSample, IsoError, ScaleMethod, ScoreFamily};

const EXIT_PARSE: i32 = 2;
const EXIT_DEGENERATE: i32 = 3;
const EXIT_FLAGS: i32 = 4;

#[derive(Parser)]
#[command(name = "isom", about = "Robust isotonic regression toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Fit an isotonic M-estimator to a two-column CSV of (t, x) rows.
    Fit {
        /// Input CSV: comma-separated t,x rows; '#' comments and one
        /// optional header line are allowed.
        #[arg(long)]
        input: PathBuf,

        /// Score family: l2 | l1 | huber:k=0.98 | sl1:m=1000 | shuber:k=0.98,m=1000
        #[arg(long, default_value = "huber:k=0.98")]
        family: String,

        /// Scale: fixed:<sigma> | diffm | diffm:c=...,b=... | madl1
        #[arg(long, default_value = "diffm")]
        scale: String,

        /// `increasing` or `decreasing`; decreasing negates x around the fit.
        #[arg(long, default_value = "increasing")]
        direction: String,

        /// Write the fit JSON here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,

        /// Write per-point results (t,x,fitted,residual) as CSV.
        #[arg(long)]
        fitted_csv: Option<PathBuf>,

        /// Write plot data: the raw scatter and the step-function vertices.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Monte Carlo MSE benchmark: {L2, L1, M} x {normal, student3} x {100, 500}.
    Table1 {
        /// RNG seed; defaults to $ISOM_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,

        /// Replicates per cell.
        #[arg(long, default_value_t = 500)]
        reps: usize,

        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,

        /// `json` or `csv`.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Simulate the slope at zero of the GCM of W(v) + v^2.
    Chernoff {
        #[arg(long, default_value_t = 10_000)]
        reps: usize,

        /// RNG seed; defaults to $ISOM_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,

        /// Grid truncation half-width L.
        #[arg(long, default_value_t = 3.0)]
        half_width: f64,

        /// Grid spacing.
        #[arg(long, default_value_t = 0.005)]
        step: f64,
    },
    /// Asymptotic variance of n^(1/3) (mu_hat(t0) - mu(t0)).
    Avar {
        /// Score family (same syntax as `fit --family`).
        #[arg(long)]
        family: String,

        /// Error model: normal | normal:sigma=... | student:df=...
        #[arg(long)]
        error: String,

        /// Trend slope mu'(t0).
        #[arg(long)]
        mu_prime: f64,

        /// Design density H'(t0).
        #[arg(long, default_value_t = 1.0)]
        h: f64,

        /// Residual scale sigma0 used to standardize the score.
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,

        /// Replace --sigma0 by the population value of the bisquare
        /// M-scale under the error model.
        #[arg(long, default_value_t = false)]
        sigma0_limit: bool,

        /// Variance of the limit-law slope.
        #[arg(long, default_value_t = VAR_CHERNOFF_DEFAULT)]
        var_chernoff: f64,
    },
    /// Squared-bias influence of a point mass at (t_star, x_star).
    Influence {
        #[arg(long)]
        family: String,

        /// Error model: normal | normal:sigma=... | student:df=...
        #[arg(long)]
        error: String,

        #[arg(long)]
        t_star: f64,

        #[arg(long)]
        x_star: f64,

        #[arg(long)]
        t0: f64,

        /// Trend value mu(t0).
        #[arg(long)]
        mu_t0: f64,

        /// Trend slope mu'(t0).
        #[arg(long)]
        mu_prime: f64,

        /// Design density H'(t0).
        #[arg(long, default_value_t = 1.0)]
        h: f64,

        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
    },
    /// Breakdown-point lower bound at design mass H(t0).
    Breakdown {
        #[arg(long = "H")]
        h: f64,

        /// Cap by the breakdown point of a plug-in scale estimator.
        #[arg(long)]
        scale_breakdown: Option<f64>,
    },
    /// Finite-sample contamination probe on a CSV series.
    Probe {
        #[arg(long)]
        csv: PathBuf,

        #[arg(long, default_value = "huber:k=0.98")]
        family: String,

        #[arg(long, default_value = "diffm")]
        scale: String,

        /// Number of observations to replace.
        #[arg(long)]
        outliers: usize,

        /// Contamination location t_star (also the evaluation point unless
        /// --t0 is given).
        #[arg(long)]
        at: f64,

        /// Replacement response value.
        #[arg(long)]
        value: f64,

        #[arg(long)]
        t0: Option<f64>,
    },
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn flags(message: impl Into<String>) -> Self {
        CliError { code: EXIT_FLAGS, message: message.into() }
    }

    fn parse(message: impl Into<String>) -> Self {
        CliError { code: EXIT_PARSE, message: message.into() }
    }
}

impl From<IsoError> for CliError {
    fn from(e: IsoError) -> Self {
        let code = match e {
            IsoError::DegenerateSample => EXIT_DEGENERATE,
            IsoError::ConfigError(_) | IsoError::DomainError(_) | IsoError::InvalidInput(_) => {
                EXIT_FLAGS
            }
            _ => EXIT_PARSE,
        };
        CliError { code, message: e.to_string() }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_FLAGS,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn default_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| std::env::var("ISOM_SEED").ok().and_then(|v| v.parse().ok())).unwrap_or(0)
}

fn parse_family(s: &str) -> Result<ScoreFamily, CliError> {
    ScoreFamily::from_str(s).map_err(|e| CliError::flags(format!("--family {s}: {e}")))
}

fn parse_scale(s: &str) -> Result<ScaleMethod, CliError> {
    ScaleMethod::from_str(s).map_err(|e| CliError::flags(format!("--scale {s}: {e}")))
}

fn parse_error_model(s: &str) -> Result<ErrorModel, CliError> {
    let model = if s == "normal" {
        ErrorModel::Normal { sigma: 1.0 }
    } else if let Some(rest) = s.strip_prefix("normal:sigma=") {
        let sigma =
            rest.parse().map_err(|_| CliError::flags(format!("--error {s}: bad sigma")))?;
        ErrorModel::Normal { sigma }
    } else if let Some(rest) = s.strip_prefix("student:df=") {
        let df = rest.parse().map_err(|_| CliError::flags(format!("--error {s}: bad df")))?;
        ErrorModel::StudentT { df }
    } else {
        return Err(CliError::flags(format!(
            "--error {s}: expected normal, normal:sigma=..., or student:df=..."
        )));
    };
    model.validate().map_err(|e| CliError::flags(format!("--error {s}: {e}")))?;
    Ok(model)
}

/// Reads a two-column (t, x) CSV. '#' lines are comments; one non-numeric
/// header line is tolerated at the top; NaN and infinite values are
/// rejected with the offending row named.
fn read_series(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut saw_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = if fields.len() == 2 {
            match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
                (Ok(t), Ok(x)) => Some((t, x)),
                _ => None,
            }
        } else {
            None
        };
        match parsed {
            Some((t, x)) if t.is_finite() && x.is_finite() => rows.push((t, x)),
            Some(_) => {
                return Err(CliError::parse(format!(
                    "{}:{}: non-finite value in row '{line}'",
                    path.display(),
                    idx + 1
                )));
            }
            None if !saw_content => {} // header line
            None => {
                return Err(CliError::parse(format!(
                    "{}:{}: expected two comma-separated numbers, got '{line}'",
                    path.display(),
                    idx + 1
                )));
            }
        }
        saw_content = true;
    }
    if rows.is_empty() {
        return Err(CliError::parse(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn emit(text: String, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn mse_table_csv(table: &MseTable) -> String {
    let mut out = String::from("estimator,error,n,scaled_mse,mc_stderr,avar\n");
    for r in &table.rows {
        let avar = r.avar.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{avar}",
            r.estimator, r.error, r.n, r.scaled_mse, r.mc_stderr
        );
    }
    out
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Commands::Fit { input, family, scale, direction, output, fitted_csv, plot_data } => {
            cmd_fit(&input, &family, &scale, &direction, output, fitted_csv, plot_data)
        }
        Commands::Table1 { seed, reps, out, format } => {
            if reps == 0 {
                return Err(CliError::flags("--reps must be >= 1"));
            }
            let table = table1(default_seed(seed), reps)?;
            let text = match format.as_str() {
                "json" => json(&table),
                "csv" => mse_table_csv(&table),
                other => return Err(CliError::flags(format!("--format {other}: json or csv"))),
            };
            emit(text, out.as_deref())
        }
        Commands::Chernoff { reps, seed, half_width, step } => {
            let config =
                ChernoffConfig { half_width, step, reps, seed: default_seed(seed) };
            let sample = simulate_chernoff(config)?;
            let mut doc = serde_json::to_value(sample.summary()).expect("serializable");
            doc["config"] = serde_json::to_value(config).expect("serializable");
            emit(serde_json::to_string_pretty(&doc).expect("serializable"), None)
        }
        Commands::Avar { family, error, mu_prime, h, sigma0, sigma0_limit, var_chernoff } => {
            let f = parse_family(&family)?;
            let model = parse_error_model(&error)?;
            let sigma0 = if sigma0_limit {
                limit_m_scale(&model, DEFAULT_BISQUARE_C, DEFAULT_BISQUARE_B)?
            } else {
                sigma0
            };
            let report = avar(&f, &model, mu_prime, h, sigma0, var_chernoff)?;
            let mut doc = serde_json::to_value(&report).expect("serializable");
            doc["sigma0"] = sigma0.into();
            emit(serde_json::to_string_pretty(&doc).expect("serializable"), None)
        }
        Commands::Influence { family, error, t_star, x_star, t0, mu_t0, mu_prime, h, sigma0 } => {
            let f = parse_family(&family)?;
            let model = parse_error_model(&error)?;
            let value = influence(&f, t_star, x_star, t0, mu_t0, mu_prime, h, sigma0, &model)?;
            emit(json(&serde_json::json!({ "influence": value })), None)
        }
        Commands::Breakdown { h, scale_breakdown } => {
            let bound = match scale_breakdown {
                Some(sb) => breakdown_lower_bound_with_scale(h, sb)?,
                None => breakdown_lower_bound(h)?,
            };
            emit(json(&serde_json::json!({ "H": h, "bound": bound })), None)
        }
        Commands::Probe { csv, family, scale, outliers, at, value, t0 } => {
            let f = parse_family(&family)?;
            let method = parse_scale(&scale)?;
            let sample = DesignSample::new(read_series(&csv)?)?;
            let spec = ContaminationSpec {
                t_star: at,
                x_star: value,
                epsilon: outliers as f64 / sample.len() as f64,
                outlier_count: outliers,
            };
            let report = contamination_probe(&sample, &f, &method, &spec, t0.unwrap_or(at))?;
            emit(json(&report), None)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    input: &Path,
    family: &str,
    scale: &str,
    direction: &str,
    output: Option<PathBuf>,
    fitted_csv: Option<PathBuf>,
    plot_data: Option<PathBuf>,
) -> Result<(), CliError> {
    let f = parse_family(family)?;
    let method = parse_scale(scale)?;
    let decreasing = match direction {
        "increasing" => false,
        "decreasing" => true,
        other => {
            return Err(CliError::flags(format!(
                "--direction {other}: increasing or decreasing"
            )));
        }
    };

    let mut rows = read_series(input)?;
    if decreasing {
        for r in &mut rows {
            r.1 = -r.1;
        }
    }
    let sample = DesignSample::new(rows)?;
    let fit = fit(&sample, &f, &method)?;

    // undo the negation so all emitted artifacts are in user coordinates
    let sign = if decreasing { -1.0 } else { 1.0 };
    let t = sample.t();
    let x: Vec<f64> = sample.x().iter().map(|&v| sign * v).collect();
    let fitted: Vec<f64> = fit.fitted.iter().map(|&v| sign * v).collect();

    let mut doc: FitDocument = fit.to_document();
    for b in &mut doc.blocks {
        b.level *= sign;
    }
    emit(json(&doc), output.as_deref())?;

    if let Some(path) = fitted_csv {
        let mut out = String::from("t,x,fitted,residual\n");
        for i in 0..sample.len() {
            let _ = writeln!(out, "{},{},{},{}", t[i], x[i], fitted[i], x[i] - fitted[i]);
        }
        emit(out, Some(&path))?;
    }

    if let Some(path) = plot_data {
        let mut out = String::from("series,t,value\n");
        for i in 0..sample.len() {
            let _ = writeln!(out, "point,{},{}", t[i], x[i]);
        }
        for b in &fit.blocks {
            let level = sign * b.level;
            let _ = writeln!(out, "step,{},{level}", t[b.start]);
            let _ = writeln!(out, "step,{},{level}", t[b.end - 1]);
        }
        emit(out, Some(&path))?;
    }
    Ok(())
}
