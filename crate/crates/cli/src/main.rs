//! `tdoaloc`: closed-form TDOA localization from the command line.
//!
//! Exit status is 0 on success, 1 for usage and input errors, 2 for numerical
//! failures. Errors print a single line on stderr.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdoaloc::*;

mod format;

#[derive(Parser, Debug)]
#[command(name = "tdoaloc", version, about = "Closed-form maximum likelihood TDOA localization with three receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the source from a reduced TDOA measurement.
    Localize {
        #[arg(long)]
        config: PathBuf,
        /// `iso S` for Σ₂ = S²I, or `S11 S12 S22`.
        #[arg(long, num_args = 2..=3, value_name = "SIGMA2", required = true, allow_negative_numbers = true)]
        sigma2: Vec<String>,
        #[arg(long, num_args = 2, value_names = ["T10", "T20"], required = true, allow_negative_numbers = true)]
        tau: Vec<f64>,
        /// `M`, `M0`, `M1`, `M2` or `blind`.
        #[arg(long, default_value = "blind")]
        model: String,
        /// Significance level of the acceptance test.
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        /// Degrees of freedom of the acceptance test.
        #[arg(long, default_value_t = DEFAULT_DF)]
        df: f64,
    },
    /// Region of a source position.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
    },
    /// Facet and ellipse projections of a measurement.
    Project {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 2..=3, value_name = "SIGMA2", required = true, allow_negative_numbers = true)]
        sigma2: Vec<String>,
        #[arg(long, num_args = 2, value_names = ["T10", "T20"], required = true, allow_negative_numbers = true)]
        tau: Vec<f64>,
    },
    /// Coefficients of the sextic bounding the four-projection region.
    Discriminant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 2..=3, value_name = "SIGMA2", required = true, allow_negative_numbers = true)]
        sigma2: Vec<String>,
    },
    /// Asymptotic MSE, bias and remainder at a source position.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 2..=3, value_name = "SIGMA2", required = true, allow_negative_numbers = true)]
        sigma2: Vec<String>,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
    },
    /// Monte Carlo sweep over a grid of sources.
    Campaign {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::MissingKey(_)
            | Error::InvalidSpec(_)
            | Error::NonFinite
            | Error::CollinearSensors { .. }
            | Error::NotPositiveDefinite => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(std::env::args_os().map(plain_negative)) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

/// clap only recognizes negative numbers without a signed exponent, so `-3.4e-1`
/// is rewritten to `-0.34`. The shortest decimal form parses back to the same value.
fn plain_negative(arg: std::ffi::OsString) -> std::ffi::OsString {
    match arg.to_str() {
        Some(s) if s.starts_with('-') && s.contains(['e', 'E']) => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => format!("{v}").into(),
            _ => arg,
        },
        _ => arg,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<SensorConfig, Failure> {
    SensorConfig::from_key_value_str(&read(path)?)
        .map_err(|e| Failure::from(e).prefixed(&path.display().to_string()))
}

impl Failure {
    fn prefixed(self, context: &str) -> Self {
        match self {
            Failure::Usage(m) => Failure::Usage(format!("{context}: {m}")),
            Failure::Numerical(m) => Failure::Numerical(format!("{context}: {m}")),
        }
    }
}

/// `Σ₂` from `iso S` or `S11 S12 S22`, given in the caller's receiver order.
fn parse_sigma2(tokens: &[String], cfg: &SensorConfig) -> Result<Metric2, Failure> {
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Failure::Usage(format!("--sigma2: `{s}` is not a number")))
    };
    let m = match tokens {
        [kw, s] if kw == "iso" => {
            let s = num(s)?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(Failure::Usage("--sigma2 iso: standard deviation must be positive".into()));
            }
            Mat2::new(s * s, 0.0, 0.0, s * s)
        }
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            Mat2::new(a, b, b, c)
        }
        _ => return Err(Failure::Usage("--sigma2 expects `iso S` or `S11 S12 S22`".into())),
    };
    Ok(Metric2::new(cfg.relabel_covariance(&m))?)
}

fn parse_model(s: &str, cfg: &SensorConfig) -> Result<Option<ModelId>, Failure> {
    if s == "blind" {
        return Ok(None);
    }
    let m: ModelId = s
        .parse()
        .map_err(|_| Failure::Usage(format!("--model: expected M, M0, M1, M2 or blind, got `{s}`")))?;
    Ok(Some(m.relabel(cfg)))
}

fn run(cmd: Command) -> Result<String, Failure> {
    match cmd {
        Command::Localize { config, sigma2, tau, model, level, df } => {
            let cfg = load_config(&config)?;
            let metric = parse_sigma2(&sigma2, &cfg)?;
            let t = cfg.relabel_tdoa(&Tdoa2::new(tau[0], tau[1]));
            if !(t.tau10.is_finite() && t.tau20.is_finite()) {
                return Err(Failure::Usage("--tau: values must be finite".into()));
            }
            let test = LrtTest::new(level, df)?;
            let estimates = match parse_model(&model, &cfg)? {
                Some(m) => vec![mle_restricted_with(&cfg, &metric, &t, m, &test)],
                None => mle_blind_with(&cfg, &metric, &t, &test),
            };
            Ok(format::estimates(&cfg, &estimates))
        }
        Command::Classify { config, x } => {
            let cfg = load_config(&config)?;
            let region = cfg.region_classify(&Vec2::new(x[0], x[1]));
            Ok(format!("{}\n", cfg.relabel_region(region).label()))
        }
        Command::Project { config, sigma2, tau } => {
            let cfg = load_config(&config)?;
            let metric = parse_sigma2(&sigma2, &cfg)?;
            let t = cfg.relabel_tdoa(&Tdoa2::new(tau[0], tau[1]));
            let facets = project_facets(&cfg, &metric, &t);
            let ellipse = project_ellipse(&cfg, &metric, &t)?;
            Ok(format::projections(&cfg, &facets, &ellipse))
        }
        Command::Discriminant { config, sigma2 } => {
            let cfg = load_config(&config)?;
            let metric = parse_sigma2(&sigma2, &cfg)?;
            let sextic = discriminant_sextic(&cfg, &metric)?;
            Ok(format::sextic(&cfg, &sextic))
        }
        Command::Report { config, sigma2, x } => {
            let cfg = load_config(&config)?;
            let metric = parse_sigma2(&sigma2, &cfg)?;
            let r = report(&cfg, &metric, &Vec2::new(x[0], x[1]))?;
            Ok(format!("{}\n{}\n", AsymptoticReport::CSV_HEADER, r.csv_row()))
        }
        Command::Campaign { spec } => {
            let spec_path = spec;
            let spec = CampaignSpec::from_key_value_str(&read(&spec_path)?)
                .map_err(|e| Failure::from(e).prefixed(&spec_path.display().to_string()))?;
            let out = run_campaign(&spec);
            for line in &out.log {
                eprintln!("{line}");
            }
            let csv = out.to_csv();
            match &spec.out {
                Some(path) => {
                    fs::write(path, csv)
                        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
    }
}
