//! JSON run configurations.

use std::fs;
use std::path::{Path, PathBuf};

use ostrovsky_core::convergence::SweepConfig;
use ostrovsky_core::estimates::{AuditOptions, Tolerances};
use ostrovsky_core::limit::FluxKind;
use ostrovsky_core::nonlocal::Profile;
use ostrovsky_core::{Coupling, RegParams};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Regularized,
    Limit,
}

/// One simulation. `beta` and `coupling` are mutually exclusive; with
/// neither, `beta = 0`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solver: Solver,
    pub n: usize,
    pub length: f64,
    pub profile: Profile,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub coupling: Option<Coupling>,
    #[serde(default = "one")]
    pub gamma: f64,
    pub t_end: f64,
    /// Defaults to `t_end / 200`.
    #[serde(default)]
    pub save_every: Option<f64>,
    #[serde(default = "safety")]
    pub safety: f64,
    /// Refuse regularized runs whose spectral tail fraction exceeds this.
    #[serde(default)]
    pub max_tail_fraction: Option<f64>,
    /// Test hook: `false` disables the 2/3 rule.
    #[serde(default = "yes")]
    pub dealias: bool,
    /// Limit solver flux; `central` is a test hook.
    #[serde(default)]
    pub flux: FluxKind,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub audit: AuditOptions,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Options read by `audit` from an optional config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub audit: AuditOptions,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// A sweep plus its output directory.
#[derive(Clone, Debug, Deserialize)]
pub struct SweepFile {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub sweep: SweepConfig,
}

fn one() -> f64 {
    1.0
}

fn safety() -> f64 {
    0.4
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn params(&self) -> Result<RegParams, CliError> {
        let params = match (self.beta, self.coupling) {
            (Some(_), Some(_)) => return Err(CliError::Usage("set either `beta` or `coupling`, not both".into())),
            (_, Some(c)) => RegParams::coupled(self.eps, self.gamma, c)?,
            (beta, None) => RegParams::new(self.eps, beta.unwrap_or(0.0), self.gamma)?,
        };
        Ok(params)
    }

    pub fn save_every(&self) -> f64 {
        self.save_every.unwrap_or(self.t_end / 200.0)
    }
}

/// Parses a JSON document, naming the file, line and column on failure.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })
}
