//! Density from a characteristic function by half-axis Fourier inversion,
//!
//! ```text
//! p(x) = (1/π) Re ∫₀^∞ e^{-iφx} f(φ) dφ,
//! ```
//!
//! valid for Hermitian `f`, discretised with the trapezoid rule on
//! `φ_j = jΔφ`, `Δφ = φ_max/N`, `j = 0..N-1`. The FFT route evaluates the sum
//! on the lattice `x_k = x₀ + kΔx`, `Δx = 2π/φ_max`, centred on the
//! requested range, and interpolates linearly onto the requested points.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("invalid frequency grid: {0}")]
    Grid(String),
    #[error(
        "frequency grid too coarse: requested x span {span} exceeds π/Δφ = {bound} \
         (Δφ = {dphi}); increase n or decrease phi_max"
    )]
    Nyquist { span: f64, bound: f64, dphi: f64 },
    #[error("x values must be finite and strictly increasing")]
    XValues,
    #[error("nothing retained: threshold {threshold} exceeds the peak density {peak}")]
    EmptyAfterTrim { threshold: f64, peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub phi_max: f64,
    pub n_points: usize,
}

impl FrequencyGrid {
    pub fn new(phi_max: f64, n_points: usize) -> Result<Self, InversionError> {
        if !(phi_max > 0.0) || !phi_max.is_finite() {
            return Err(InversionError::Grid(format!("phi_max must be positive, got {phi_max}")));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(InversionError::Grid(format!(
                "n_points must be a power of two ≥ 2, got {n_points}"
            )));
        }
        Ok(Self { phi_max, n_points })
    }

    /// `φ_max = 10³`, `N = 2²²`.
    pub fn standard() -> Self {
        Self {
            phi_max: 1e3,
            n_points: 1 << 22,
        }
    }

    pub fn dphi(&self) -> f64 {
        self.phi_max / self.n_points as f64
    }

    /// FFT lattice spacing `2π/φ_max`.
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.phi_max
    }

    /// Largest admissible span of requested `x` values, `π/Δφ`.
    pub fn max_span(&self) -> f64 {
        PI / self.dphi()
    }

    /// First point of the FFT lattice centred on `center`.
    pub fn lattice_start(&self, center: f64) -> f64 {
        center - (self.n_points / 2) as f64 * self.dx()
    }

    /// `x_k` of the lattice centred on `center`.
    pub fn lattice_point(&self, center: f64, k: usize) -> f64 {
        self.lattice_start(center) + k as f64 * self.dx()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fft,
    Trapezoid,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(Self::Fft),
            "trapezoid" | "trap" => Ok(Self::Trapezoid),
            other => Err(format!("unknown method `{other}` (expected fft|trapezoid)")),
        }
    }
}

/// Tabulated density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub method: Method,
    pub grid: FrequencyGrid,
}

impl DensityGrid {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Trapezoid integral of `p · w(x)`.
    fn integrate(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.x
            .windows(2)
            .zip(self.p.windows(2))
            .map(|(x, p)| 0.5 * (x[1] - x[0]) * (p[0] * w(x[0]) + p[1] * w(x[1])))
            .sum()
    }

    /// `∫ p dx` over the tabulated support.
    pub fn normalization(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// Mean and variance of the tabulated density (normalised by its mass).
    pub fn mean_variance(&self) -> (f64, f64) {
        let mass = self.normalization();
        let mean = self.integrate(|x| x) / mass;
        let var = self.integrate(|x| (x - mean) * (x - mean)) / mass;
        (mean, var)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,p")?;
        for (x, p) in self.x.iter().zip(&self.p) {
            writeln!(w, "{x:e},{p:e}")?;
        }
        Ok(())
    }
}

fn trapezoid_weight(j: usize) -> f64 {
    if j == 0 {
        0.5
    } else {
        1.0
    }
}

/// Inverts `cf` onto `x_values` (strictly increasing).
pub fn invert_half_axis<F>(
    cf: F,
    grid: FrequencyGrid,
    x_values: &[f64],
    method: Method,
) -> Result<DensityGrid, InversionError>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let grid = FrequencyGrid::new(grid.phi_max, grid.n_points)?;
    if x_values.iter().any(|x| !x.is_finite()) || x_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(InversionError::XValues);
    }
    if x_values.is_empty() {
        return Ok(DensityGrid {
            x: Vec::new(),
            p: Vec::new(),
            method,
            grid,
        });
    }
    let (lo, hi) = (x_values[0], *x_values.last().unwrap());
    let span = hi - lo;
    if span > grid.max_span() {
        return Err(InversionError::Nyquist {
            span,
            bound: grid.max_span(),
            dphi: grid.dphi(),
        });
    }
    let dphi = grid.dphi();
    let samples: Vec<Complex64> = (0..grid.n_points)
        .into_par_iter()
        .map(|j| cf(j as f64 * dphi) * trapezoid_weight(j))
        .collect();
    let p = match method {
        Method::Trapezoid => x_values
            .par_iter()
            .map(|&x| {
                let mut acc = 0.0;
                for (j, s) in samples.iter().enumerate() {
                    let (sin, cos) = (j as f64 * dphi * x).sin_cos();
                    // Re[s e^{-iφx}]
                    acc += s.re * cos + s.im * sin;
                }
                acc * dphi / PI
            })
            .collect(),
        Method::Fft => {
            let center = 0.5 * (lo + hi);
            let lattice = fft_lattice(&samples, &grid, center);
            let x0 = grid.lattice_start(center);
            let dx = grid.dx();
            x_values
                .iter()
                .map(|&x| {
                    let pos = (x - x0) / dx;
                    let k = (pos.floor() as usize).min(grid.n_points - 2);
                    let w = pos - k as f64;
                    lattice[k] * (1.0 - w) + lattice[k + 1] * w
                })
                .collect()
        }
    };
    Ok(DensityGrid {
        x: x_values.to_vec(),
        p,
        method,
        grid,
    })
}

/// Density on the whole FFT lattice centred on `center`.
pub fn invert_on_lattice<F>(cf: F, grid: FrequencyGrid, center: f64) -> Result<DensityGrid, InversionError>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let grid = FrequencyGrid::new(grid.phi_max, grid.n_points)?;
    let dphi = grid.dphi();
    let samples: Vec<Complex64> = (0..grid.n_points)
        .into_par_iter()
        .map(|j| cf(j as f64 * dphi) * trapezoid_weight(j))
        .collect();
    let p = fft_lattice(&samples, &grid, center);
    let x = (0..grid.n_points).map(|k| grid.lattice_point(center, k)).collect();
    Ok(DensityGrid {
        x,
        p,
        method: Method::Fft,
        grid,
    })
}

fn fft_lattice(samples: &[Complex64], grid: &FrequencyGrid, center: f64) -> Vec<f64> {
    let dphi = grid.dphi();
    let x0 = grid.lattice_start(center);
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(j, s)| s * Complex64::from_polar(1.0, -(j as f64) * dphi * x0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(grid.n_points).process(&mut buf);
    buf.iter().map(|c| c.re * dphi / PI).collect()
}

/// Keeps the contiguous support around the mode where `p ≥ threshold`;
/// negative ripples and values below the threshold end the support on
/// either side.
pub fn tail_trim(density: &DensityGrid, threshold: f64) -> Result<DensityGrid, InversionError> {
    let peak_idx = density
        .p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let peak = peak_idx.map_or(f64::NEG_INFINITY, |i| density.p[i]);
    let Some(mode) = peak_idx.filter(|_| peak >= threshold) else {
        return Err(InversionError::EmptyAfterTrim { threshold, peak });
    };
    let mut lo = mode;
    while lo > 0 && density.p[lo - 1] >= threshold {
        lo -= 1;
    }
    let mut hi = mode;
    while hi + 1 < density.len() && density.p[hi + 1] >= threshold {
        hi += 1;
    }
    Ok(DensityGrid {
        x: density.x[lo..=hi].to_vec(),
        p: density.p[lo..=hi].to_vec(),
        method: density.method,
        grid: density.grid,
    })
}
