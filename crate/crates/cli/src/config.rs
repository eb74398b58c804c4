//! Effective experiment configuration: defaults, then a JSON file, then the
//! environment, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRECISION_ENV: &str = "SIEGEL_LAB_PRECISION";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub precision_bits: u32,
    pub truncation_order: usize,
    pub q_max: usize,
    pub t_cap: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

/// Tolerance names understood by the subcommands.
pub const TOLERANCE_NAMES: &[&str] = &[
    "cluster",
    "collision",
    "converge",
    "divisor_floor",
    "indifference",
    "landing_gap",
    "match",
    "orbit_collision",
    "siegel_radius",
    "superattracting",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let tolerances = [
            ("cluster", 1e-3),
            ("collision", siegel_core::perturb::COLLISION_TOL),
            ("converge", 1e-6),
            ("divisor_floor", siegel_core::linearizer::DIVISOR_FLOOR),
            ("indifference", siegel_core::polydyn::INDIFFERENCE_TOL),
            ("landing_gap", 1e-3),
            ("match", 1e-6),
            ("orbit_collision", 1e-9),
            ("siegel_radius", 1e-3),
            ("superattracting", siegel_core::polydyn::SUPERATTRACTING_TOL),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            precision_bits: siegel_core::rotation::DEFAULT_PRECISION_BITS,
            truncation_order: 200,
            q_max: 4,
            t_cap: 200,
            tolerances,
            seed: 0,
            output_format: OutputFormat::Json,
            output_path: None,
        }
    }
}

/// Fields a config file may set; absent fields keep the previous layer.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigLayer {
    precision_bits: Option<u32>,
    truncation_order: Option<usize>,
    q_max: Option<usize>,
    t_cap: Option<usize>,
    tolerances: Option<BTreeMap<String, f64>>,
    seed: Option<u64>,
    output_format: Option<OutputFormat>,
    output_path: Option<PathBuf>,
}

/// Overrides taken from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct FlagLayer {
    pub precision_bits: Option<u32>,
    pub truncation_order: Option<usize>,
    pub q_max: Option<usize>,
    pub t_cap: Option<usize>,
    pub tolerances: Vec<(String, f64)>,
    pub seed: Option<u64>,
    pub output_format: Option<OutputFormat>,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    fn apply_file(&mut self, layer: ConfigLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = layer.$f { self.$f = v; } )* };
        }
        take!(precision_bits, truncation_order, q_max, t_cap, seed, output_format);
        if let Some(p) = layer.output_path {
            self.output_path = Some(p);
        }
        if let Some(t) = layer.tolerances {
            self.tolerances.extend(t);
        }
    }

    fn apply_flags(&mut self, f: &FlagLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = f.$f { self.$f = v; } )* };
        }
        take!(precision_bits, truncation_order, q_max, t_cap, seed, output_format);
        if let Some(p) = &f.output_path {
            self.output_path = Some(p.clone());
        }
        for (k, v) in &f.tolerances {
            self.tolerances.insert(k.clone(), *v);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (k, v) in &self.tolerances {
            if !TOLERANCE_NAMES.contains(&k.as_str()) {
                return Err(CliError::Input(format!("unknown tolerance '{k}'")));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(CliError::Input(format!("tolerance '{k}' must be positive, got {v}")));
            }
        }
        if self.precision_bits < 64 {
            return Err(CliError::Input(format!("precision_bits must be at least 64, got {}", self.precision_bits)));
        }
        if self.truncation_order < 2 {
            return Err(CliError::Input("truncation_order must be at least 2".into()));
        }
        if self.q_max == 0 || self.t_cap == 0 {
            return Err(CliError::Input("q_max and t_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Layers `default < file < env < flags`.
pub fn resolve(file: Option<&Path>, env_precision: Option<&str>, flags: &FlagLayer) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let layer: ConfigLayer = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        cfg.apply_file(layer);
    }
    if let Some(v) = env_precision {
        cfg.precision_bits = v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{PRECISION_ENV} must be an integer, got '{v}'")))?;
    }
    cfg.apply_flags(flags);
    cfg.validate()?;
    Ok(cfg)
}
