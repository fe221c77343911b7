use std::path::PathBuf;

use clap::Args;
use expou::{ModelParams, RawParams};

use crate::output::{CliError, Context};

/// Model parameters: an optional JSON file, then per-field overrides.
/// Without a file the base is `m = 0.1`, `α = 10`, `β = 1%`, `ρ = −0.9`.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    /// Flat JSON parameter file (`m`, `alpha`, `k`, `rho`, optional `mu`, `y0`, `gamma`, `s0`).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, conflicts_with = "beta")]
    pub k: Option<f64>,
    /// Stationary variance of Y; sets k = √(2αβ).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<ModelParams, CliError> {
        let mut raw = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path).ctx("model_core", "read parameter file")?;
                serde_json::from_str::<RawParams>(&text).ctx("model_core", "parse parameter file")?
            }
            None => expou::reproduce::reference_params(0.01)
                .ctx("model_core", "default parameters")?
                .raw(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut raw.m, self.m);
        set(&mut raw.alpha, self.alpha);
        set(&mut raw.k, self.k);
        set(&mut raw.rho, self.rho);
        set(&mut raw.gamma, self.gamma);
        set(&mut raw.y0, self.y0);
        set(&mut raw.mu, self.mu);
        if let Some(beta) = self.beta {
            if !(beta >= 0.0) {
                return Err(CliError::new("model_core", "validate", format!("beta must be non-negative, got {beta}")));
            }
            raw.k = (2.0 * raw.alpha * beta).sqrt();
        }
        expou::model::validate(raw).ctx("model_core", "validate")
    }
}
