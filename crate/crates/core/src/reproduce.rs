//! Measurements behind the reference tables and the density figure.
//!
//! Nothing here knows the expected numbers; callers compare.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edgeworth::{cumulants_closed_form, TheoreticalCumulants};
use crate::inversion::{invert_half_axis, invert_on_lattice, FrequencyGrid, InversionError, Method};
use crate::linear_cf::{LinearCf, LinearCfError};
use crate::mc::{simulate, Dynamics, SimConfig, SimError};
use crate::model::{Horizon, ModelParams, ParamError};
use crate::stats::{build_histogram, estimate_cumulants, BinRule, CumulantSet, StatsError};

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Cf(#[from] LinearCfError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error("{0}")]
    Input(String),
}

/// Volatility-of-volatility levels of the cumulant scaling table.
pub const TABLE1_BETAS: [f64; 7] = [0.005, 0.01, 0.02, 0.05, 0.10, 0.25, 0.50];
/// Horizons of the linear-versus-exponential table.
pub const TABLE2_HORIZONS: [f64; 5] = [0.01, 0.1, 0.2, 0.5, 1.0];

/// `m = 0.1`, `α = 10`, `ρ = −0.9`, `γ = y0 = 0`.
pub fn reference_params(beta: f64) -> Result<ModelParams, ParamError> {
    ModelParams::from_beta(0.1, 10.0, beta, -0.9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            paths: 500_000,
            dt: 1e-3,
            seed: 20_080_101,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub beta: f64,
    pub theory: TheoreticalCumulants,
    pub mc: Option<CumulantSet>,
}

/// Closed-form cumulants at `t − t0 = 1` for each `β`, with exponential
/// dynamics MC for those `β ≤ mc_up_to`.
pub fn table1(
    base: &ModelParams,
    betas: &[f64],
    mc: &McSettings,
    mc_up_to: f64,
) -> Result<Vec<Table1Row>, ReproduceError> {
    let h = Horizon::new(0.0, 1.0)?;
    betas
        .iter()
        .map(|&beta| {
            let params = with_beta(base, beta)?;
            let theory = cumulants_closed_form(&params, &h);
            let mc = if beta <= mc_up_to && mc.paths > 0 {
                let cfg = SimConfig::for_horizon(1.0, mc.dt, mc.paths, mc.seed, Dynamics::Exponential);
                let ens = simulate(&params, &cfg, &[])?;
                Some(estimate_cumulants(&ens.x_final, mc.confidence)?)
            } else {
                None
            };
            Ok(Table1Row { beta, theory, mc })
        })
        .collect()
}

/// Copy of `base` with `k` set from `β = k²/(2α)`.
pub fn with_beta(base: &ModelParams, beta: f64) -> Result<ModelParams, ParamError> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(ParamError::Invalid {
            field: "beta",
            value: beta,
            reason: "stationary variance must be non-negative",
        });
    }
    base.with(|r| r.k = (2.0 * r.alpha * beta).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub horizon: f64,
    pub exponential: CumulantSet,
    pub linear: CumulantSet,
}

/// Both dynamics on the same random streams, recorded at `horizons`.
pub fn table2(
    params: &ModelParams,
    horizons: &[f64],
    mc: &McSettings,
) -> Result<Vec<Table2Row>, ReproduceError> {
    let Some(&last) = horizons.last() else {
        return Err(ReproduceError::Input("no horizons given".into()));
    };
    let run = |dynamics| {
        let cfg = SimConfig::for_horizon(last, mc.dt, mc.paths, mc.seed, dynamics);
        let ens = simulate(params, &cfg, horizons)?;
        (0..horizons.len())
            .map(|i| Ok(estimate_cumulants(&ens.x_at(i), mc.confidence)?))
            .collect::<Result<Vec<_>, ReproduceError>>()
    };
    let exp = run(Dynamics::Exponential)?;
    let lin = run(Dynamics::Linear)?;
    Ok(horizons
        .iter()
        .zip(exp.into_iter().zip(lin))
        .map(|(&horizon, (exponential, linear))| Table2Row {
            horizon,
            exponential,
            linear,
        })
        .collect())
}

/// One histogram bin against the inverted density at its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub mc_density: f64,
    pub cf_density: f64,
    /// Binomial standard error of `mc_density`.
    pub se: f64,
}

impl DensityBin {
    /// `(mc − cf) / se`; `None` for an empty bin.
    pub fn z_score(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.mc_density - self.cf_density) / self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub horizon: f64,
    pub paths: usize,
    pub bins: Vec<DensityBin>,
    /// `∫ p dx` of the inverted density over its whole lattice.
    pub normalization: f64,
}

/// Linear-dynamics MC histogram (Freedman–Diaconis bins) against the FFT
/// inversion of the exact characteristic function at bin centers.
pub fn density_comparison(
    params: &ModelParams,
    horizon: f64,
    mc: &McSettings,
    grid: FrequencyGrid,
) -> Result<DensityComparison, ReproduceError> {
    let h = Horizon::new(0.0, horizon)?;
    let cf = LinearCf::new(params, &h, 0.0, None)?;
    let cfg = SimConfig::for_horizon(horizon, mc.dt, mc.paths, mc.seed, Dynamics::Linear);
    let ens = simulate(params, &cfg, &[])?;
    let hist = build_histogram(&ens.x_final, &BinRule::FreedmanDiaconis)?;
    let centers = hist.centers();
    let inverted = invert_half_axis(|phi| cf.f(phi), grid, &centers, Method::Fft)?;
    let total = hist.total();
    let bins = hist
        .bin_edges
        .windows(2)
        .zip(&hist.counts)
        .zip(hist.densities.iter().zip(&inverted.p))
        .map(|((e, &count), (&mc_density, &cf_density))| {
            let w = e[1] - e[0];
            let q = count as f64 / total as f64;
            DensityBin {
                lo: e[0],
                hi: e[1],
                count,
                mc_density,
                cf_density,
                se: (q * (1.0 - q) / total as f64).sqrt() / w,
            }
        })
        .collect();
    let center = 0.5 * (hist.bin_edges[0] + hist.bin_edges[hist.bin_edges.len() - 1]);
    let lattice = invert_on_lattice(|phi| cf.f(phi), grid, center)?;
    Ok(DensityComparison {
        horizon,
        paths: mc.paths,
        bins,
        normalization: lattice.normalization(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> McSettings {
        McSettings {
            paths: 4000,
            dt: 1e-2,
            seed: 9,
            confidence: 0.95,
        }
    }

    #[test]
    fn table1_theory_only_rows_skip_mc() {
        let base = reference_params(0.01).unwrap();
        let rows = table1(&base, &[0.01, 0.5], &small(), 0.02).unwrap();
        assert!(rows[0].mc.is_some() && rows[1].mc.is_none());
        assert!((rows[0].theory.k2 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn table2_shares_streams() {
        let p = reference_params(0.01).unwrap();
        let rows = table2(&p, &[0.1, 0.5], &small()).unwrap();
        assert_eq!(rows.len(), 2);
        // same noise, nearly the same dynamics at small β
        let d = (rows[1].exponential.k2 - rows[1].linear.k2).abs() / rows[1].linear.k2;
        assert!(d < 0.02, "{d}");
        assert!(table2(&p, &[], &small()).is_err());
    }

    #[test]
    fn with_beta_sets_k() {
        let p = with_beta(&reference_params(0.01).unwrap(), 0.02).unwrap();
        assert!((p.beta() - 0.02).abs() < 1e-15);
        assert!(with_beta(&p, -1.0).is_err());
    }

    #[test]
    fn density_comparison_on_small_run() {
        let p = reference_params(0.01).unwrap();
        let grid = FrequencyGrid::new(400.0, 1 << 14).unwrap();
        let c = density_comparison(&p, 0.5, &small(), grid).unwrap();
        assert!((c.normalization - 1.0).abs() < 1e-3);
        let total: u64 = c.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 4000);
        let worst = c
            .bins
            .iter()
            .filter(|b| b.count >= 10)
            .filter_map(|b| b.z_score())
            .map(f64::abs)
            .fold(0.0, f64::max);
        assert!(worst < 5.0, "{worst}");
    }
}
