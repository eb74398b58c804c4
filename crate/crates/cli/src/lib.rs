//! Command-line experiments over the `siegel-core` toolkit.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;
use thiserror::Error;

use config::{FlagLayer, OutputFormat};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("numerical defect: {0}")]
    Defect(String),
    #[error("io: {0}")]
    Io(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Defect(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Defect(_) => "numerical_defect",
            CliError::Io(_) => "io",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}, "exit_code": self.exit_code()})
    }
}

#[derive(Debug, Parser)]
#[command(name = "siegel-lab", version, about = "Experiments on Brjuno sums, linearization and polynomial cycle census")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Working precision in bits for rotation numbers and escalated linearization.
    #[arg(long, global = true)]
    pub precision: Option<u32>,
    /// Default truncation order of power series.
    #[arg(long = "truncation-order", global = true)]
    pub truncation_order: Option<usize>,
    /// Largest period searched for.
    #[arg(long = "q-max", global = true)]
    pub q_max: Option<usize>,
    /// Observation time for critical orbits.
    #[arg(long = "t-cap", global = true)]
    pub t_cap: Option<usize>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_parser = parse_tolerance)]
    pub tol: Vec<(String, f64)>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Output file; standard output when absent.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn flag_layer(&self) -> FlagLayer {
        FlagLayer {
            precision_bits: self.precision,
            truncation_order: self.truncation_order,
            q_max: self.q_max,
            t_cap: self.t_cap,
            tolerances: self.tol.clone(),
            seed: self.seed,
            output_format: self.format,
            output_path: self.output.clone(),
        }
    }
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad tolerance value '{v}'"))?;
    Ok((k.trim().to_string(), v))
}

/// Complex literal such as `0.25+0i`, `-1`, `2i` or `0.1-0.3i`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    t.parse::<Complex64>().map_err(|_| format!("cannot parse complex number '{s}'"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FamilyArg {
    Unicritical,
    Petal,
}

/// Polynomial given either by coefficients or by a named family.
#[derive(Debug, Args, Clone)]
pub struct PolyArgs {
    /// Coefficients `c_0 .. c_d` as JSON `[[re, im], ...]`.
    #[arg(long, conflicts_with = "family")]
    pub poly: Option<String>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Degree of the named family.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Family parameter.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub c: Option<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Formal,
    Koenigs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Continued fraction and Brjuno partial sums.
    Brjuno {
        /// `golden`, `silver`, `pi`, `e`, `sqrt:N`, a decimal in (0,1),
        /// a comma-separated quotient list, or `power-tower`.
        #[arg(long)]
        quotients: String,
        #[arg(long, default_value_t = 20)]
        terms: usize,
    },
    /// Formal linearization of a germ with an indifferent or attracting multiplier.
    Linearize {
        /// Rotation number of the multiplier (same names as `brjuno`).
        #[arg(long = "lambda-rot", conflicts_with = "lambda")]
        lambda_rot: Option<String>,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        lambda: Option<Complex64>,
        /// `quadratic` (lambda z + z^2), `cubic` (lambda z + z^3) or
        /// JSON coefficients `[[re, im], ...]` whose linear term is replaced by lambda.
        #[arg(long, default_value = "quadratic")]
        map: String,
        #[arg(long)]
        order: Option<usize>,
        /// Extra root-test window `lo,hi`; repeatable.
        #[arg(long)]
        window: Vec<String>,
        #[arg(long, value_enum, default_value_t = Method::Formal)]
        method: Method,
    },
    /// Periodic cycles with multipliers, classes and weights.
    Cycles {
        #[command(flatten)]
        poly: PolyArgs,
    },
    /// Index counts and saturation verdicts.
    FsAudit {
        #[command(flatten)]
        poly: PolyArgs,
    },
    /// Saturating perturbation plan and multiplier persistence.
    Perturb {
        #[command(flatten)]
        poly: PolyArgs,
        /// Exponent at the points of B2; defaults to the smallest valid value.
        #[arg(long)]
        n: Option<usize>,
        /// Order of the local perturbation families.
        #[arg(long = "family-order", default_value_t = 12)]
        family_order: usize,
    },
    /// Batched fs-audit over sampled family parameters.
    Sweep {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Number of sampled parameters.
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long = "c-center", value_parser = parse_complex, allow_hyphen_values = true, default_value = "0+0i")]
        c_center: Complex64,
        /// Parameters are drawn uniformly from the disk of this radius.
        #[arg(long = "c-radius", default_value_t = 1.0)]
        c_radius: f64,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Parses `args`, runs the command, writes the report and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Input(e.to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let env = std::env::var(config::PRECISION_ENV).ok();
    let cfg = match config::resolve(cli.global.config.as_deref(), env.as_deref(), &cli.global.flag_layer()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e.to_json());
            return e.exit_code();
        }
    };
    let (report, failure) = match commands::run(&cli.command, &cfg) {
        Ok(out) => (Some(out.report), out.failure),
        Err(e) => (None, Some(e)),
    };
    if let Some(r) = &report {
        let written = report::render(r, &cfg).and_then(|text| report::emit_report(&text, cfg.output_path.as_deref()));
        if let Err(e) = written {
            eprintln!("{}", e.to_json());
            return e.exit_code();
        }
    }
    match failure {
        Some(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
        None => 0,
    }
}
