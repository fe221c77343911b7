//! Euler-Maruyama simulation of the exponential and the linearised model.
//!
//! Exponential dynamics, per step of length `dt`:
//!
//! ```text
//! ΔX = -1/2 m² e^{2Y} dt + m e^{Y} √dt ε₁
//! ΔY = α(γ - Y) dt + k √dt (ρ ε₁ + √(1-ρ²) ε₂)
//! ```
//!
//! Linear dynamics (`Z = Y - γ + 1`, `m̄ = m e^γ`):
//!
//! ```text
//! ΔX = -1/2 m̄² (2Z - 1) dt + m̄ Z √dt ε₁
//! ΔZ = α(1 - Z) dt + k √dt (ρ ε₁ + √(1-ρ²) ε₂)
//! ```
//!
//! `Z` is not reflected at zero. Full paths are never stored: only `X` (and
//! optionally the hidden state) at the requested checkpoints.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::rng::{per_path_stream, PathStream};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("checkpoint {time} is not on the grid i*dt (dt = {dt}, n_steps = {n_steps})")]
    OffGrid { time: f64, dt: f64, n_steps: usize },
    #[error("checkpoints must be strictly increasing (got {prev} then {next})")]
    Unordered { prev: f64, next: f64 },
    #[error("non-finite value on path {path}; parameters and dt produce overflow")]
    NonFinite { path: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    #[default]
    Exponential,
    Linear,
}

impl std::str::FromStr for Dynamics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Self::Exponential),
            "linear" | "lin" => Ok(Self::Linear),
            other => Err(format!("unknown dynamics `{other}` (expected exponential|linear)")),
        }
    }
}

/// Starting value of the hidden volatility state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialVol {
    /// `Y(t0) = y0` (linear: `Z(t0) = y0 - γ + 1`).
    #[default]
    Fixed,
    /// `Y(t0) ~ N(γ, β)` (linear: `Z(t0) ~ N(1, β)`), drawn from the path's
    /// own stream before the first step.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub dynamics: Dynamics,
    pub record_hidden: bool,
    #[serde(default)]
    pub initial: InitialVol,
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: usize, n_paths: usize, seed: u64, dynamics: Dynamics) -> Self {
        Self {
            dt,
            n_steps,
            n_paths,
            seed,
            dynamics,
            record_hidden: false,
            initial: InitialVol::Fixed,
        }
    }

    /// Config whose grid ends exactly at `horizon` (rounded to whole steps).
    pub fn for_horizon(
        horizon: f64,
        dt: f64,
        n_paths: usize,
        seed: u64,
        dynamics: Dynamics,
    ) -> Self {
        let n_steps = ((horizon / dt).round() as usize).max(1);
        Self::new(dt, n_steps, n_paths, seed, dynamics)
    }

    pub fn with_hidden(mut self, record: bool) -> Self {
        self.record_hidden = record;
        self
    }

    pub fn with_initial(mut self, initial: InitialVol) -> Self {
        self.initial = initial;
        self
    }

    /// Final time of the grid, `n_steps * dt`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(SimError::Config("n_steps must be at least 1".into()));
        }
        if self.n_paths == 0 {
            return Err(SimError::Config("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Checkpointed simulation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub params: ModelParams,
    /// Elapsed times `t - t0` of the checkpoints.
    pub checkpoint_times: Vec<f64>,
    checkpoint_steps: Vec<usize>,
    /// Terminal centered log-return per path.
    pub x_final: Vec<f64>,
    /// Path-major `n_paths × n_checkpoints` values of `X`.
    x_grid: Vec<f64>,
    /// Same layout as `x_grid`, hidden state `Y` or `Z`.
    hidden: Option<Vec<f64>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.x_final.len()
    }

    pub fn n_checkpoints(&self) -> usize {
        self.checkpoint_times.len()
    }

    /// `X` across all paths at checkpoint `idx`.
    pub fn x_at(&self, idx: usize) -> Vec<f64> {
        column(&self.x_grid, self.n_checkpoints(), idx)
    }

    /// Hidden state across all paths at checkpoint `idx`, if recorded.
    pub fn hidden_at(&self, idx: usize) -> Option<Vec<f64>> {
        self.hidden
            .as_ref()
            .map(|h| column(h, self.n_checkpoints(), idx))
    }

    /// Checkpoint values of `X` for one path.
    pub fn path(&self, path: usize) -> &[f64] {
        let n = self.n_checkpoints();
        &self.x_grid[path * n..(path + 1) * n]
    }

    /// Writes `path_id,checkpoint_time,x[,y_or_z]` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        let nc = self.n_checkpoints();
        let hidden_name = match self.config.dynamics {
            Dynamics::Exponential => "y",
            Dynamics::Linear => "z",
        };
        match &self.hidden {
            Some(_) => writeln!(w, "path_id,checkpoint_time,x,{hidden_name}")?,
            None => writeln!(w, "path_id,checkpoint_time,x")?,
        }
        for p in 0..self.n_paths() {
            for c in 0..nc {
                let t = self.checkpoint_times[c];
                let x = self.x_grid[p * nc + c];
                match &self.hidden {
                    Some(h) => writeln!(w, "{p},{t},{x:e},{:e}", h[p * nc + c])?,
                    None => writeln!(w, "{p},{t},{x:e}")?,
                }
            }
        }
        Ok(())
    }
}

fn column(data: &[f64], stride: usize, idx: usize) -> Vec<f64> {
    assert!(idx < stride, "checkpoint index {idx} out of range");
    data.iter().skip(idx).step_by(stride).copied().collect()
}

/// Maps checkpoint times onto step indices of the grid `i * dt`.
fn checkpoint_steps(cfg: &SimConfig, checkpoints: &[f64]) -> Result<Vec<usize>, SimError> {
    let mut steps = Vec::with_capacity(checkpoints.len());
    for (i, &t) in checkpoints.iter().enumerate() {
        if i > 0 && !(t > checkpoints[i - 1]) {
            return Err(SimError::Unordered {
                prev: checkpoints[i - 1],
                next: t,
            });
        }
        let off = SimError::OffGrid {
            time: t,
            dt: cfg.dt,
            n_steps: cfg.n_steps,
        };
        if !t.is_finite() || t < 0.0 {
            return Err(off);
        }
        let step = (t / cfg.dt).round();
        if (step * cfg.dt - t).abs() > 1e-9 * t.max(cfg.dt) || step as usize > cfg.n_steps {
            return Err(off);
        }
        steps.push(step as usize);
    }
    Ok(steps)
}

/// Correlated Gaussian shocks `(ε₁, ρ ε₁ + √(1-ρ²) ε₂)`.
#[inline]
pub fn correlated_shocks(stream: &mut PathStream, rho: f64, rho_c: f64) -> (f64, f64) {
    let e1 = stream.normal();
    let e2 = stream.normal();
    (e1, rho * e1 + rho_c * e2)
}

/// Simulates `cfg.n_paths` paths and records `X` at `checkpoints` (elapsed
/// times on the step grid). The result depends only on the inputs, never on
/// the rayon thread count.
pub fn simulate(
    params: &ModelParams,
    cfg: &SimConfig,
    checkpoints: &[f64],
) -> Result<PathEnsemble, SimError> {
    cfg.validate()?;
    let steps = checkpoint_steps(cfg, checkpoints)?;
    let nc = steps.len();
    let n = cfg.n_paths;

    let mut x_final = vec![0.0; n];
    // With no checkpoints a one-slot scratch row keeps the zipped iterators
    // the same length; it is dropped afterwards.
    let row = nc.max(1);
    let mut x_grid = vec![0.0; n * row];
    let mut hidden = cfg.record_hidden.then(|| vec![0.0; n * row]);

    let kernel = Kernel::new(params, cfg);
    match hidden.as_mut() {
        Some(h) => x_final
            .par_iter_mut()
            .zip(x_grid.par_chunks_mut(row))
            .zip(h.par_chunks_mut(row))
            .enumerate()
            .for_each(|(p, ((xf, xs), hs))| {
                *xf = kernel.run(p as u64, &steps, &mut xs[..nc], Some(&mut hs[..nc]));
            }),
        None => x_final
            .par_iter_mut()
            .zip(x_grid.par_chunks_mut(row))
            .enumerate()
            .for_each(|(p, (xf, xs))| {
                *xf = kernel.run(p as u64, &steps, &mut xs[..nc], None);
            }),
    }
    if nc == 0 {
        x_grid.clear();
        if let Some(h) = hidden.as_mut() {
            h.clear();
        }
    }

    if let Some(path) = x_final.iter().position(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { path });
    }
    Ok(PathEnsemble {
        config: *cfg,
        params: *params,
        checkpoint_times: checkpoints.to_vec(),
        checkpoint_steps: steps,
        x_final,
        x_grid,
        hidden,
    })
}

/// Per-run constants shared by all paths.
struct Kernel {
    dynamics: Dynamics,
    initial: InitialVol,
    seed: u64,
    n_steps: usize,
    dt: f64,
    sdt: f64,
    vol: f64,
    alpha: f64,
    level: f64,
    start: f64,
    k_sdt: f64,
    rho: f64,
    rho_c: f64,
    stationary_sd: f64,
}

impl Kernel {
    fn new(params: &ModelParams, cfg: &SimConfig) -> Self {
        let (vol, level, start) = match cfg.dynamics {
            Dynamics::Exponential => (params.m(), params.gamma(), params.y0()),
            Dynamics::Linear => (params.m_bar(), 1.0, params.z0()),
        };
        let rho = params.rho();
        Self {
            dynamics: cfg.dynamics,
            initial: cfg.initial,
            seed: cfg.seed,
            n_steps: cfg.n_steps,
            dt: cfg.dt,
            sdt: cfg.dt.sqrt(),
            vol,
            alpha: params.alpha(),
            level,
            start,
            k_sdt: params.k() * cfg.dt.sqrt(),
            rho,
            rho_c: (1.0 - rho * rho).max(0.0).sqrt(),
            stationary_sd: params.beta().sqrt(),
        }
    }

    /// Runs one path; fills `xs` (and `hs`) at the checkpoint steps and
    /// returns the terminal `X`.
    fn run(&self, path: u64, steps: &[usize], xs: &mut [f64], mut hs: Option<&mut [f64]>) -> f64 {
        let mut stream = per_path_stream(self.seed, path);
        let mut state = match self.initial {
            InitialVol::Fixed => self.start,
            InitialVol::Stationary => self.level + self.stationary_sd * stream.normal(),
        };
        let mut x = 0.0;
        let mut next = 0;
        let mut record = |i: usize, x: f64, state: f64, next: &mut usize| {
            while *next < steps.len() && steps[*next] == i {
                xs[*next] = x;
                if let Some(h) = hs.as_deref_mut() {
                    h[*next] = state;
                }
                *next += 1;
            }
        };
        record(0, x, state, &mut next);
        for i in 1..=self.n_steps {
            let (e1, ey) = correlated_shocks(&mut stream, self.rho, self.rho_c);
            match self.dynamics {
                Dynamics::Exponential => {
                    let v = self.vol * state.exp();
                    x += -0.5 * v * v * self.dt + v * self.sdt * e1;
                }
                Dynamics::Linear => {
                    let v = self.vol * state;
                    x += -0.5 * self.vol * self.vol * (2.0 * state - 1.0) * self.dt
                        + v * self.sdt * e1;
                }
            }
            state += self.alpha * (self.level - state) * self.dt + self.k_sdt * ey;
            record(i, x, state, &mut next);
        }
        x
    }
}
