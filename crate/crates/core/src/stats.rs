//! Cumulant estimation with confidence intervals, and density histograms.
//!
//! `κ` is always the excess kurtosis `k4 / k2²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::rng::per_path_stream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample too small: n = {n}, need at least {min}")]
    TooSmall { n: usize, min: usize },
    #[error("confidence level must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("degenerate sample: zero variance")]
    ZeroVariance,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("invalid binning: {0}")]
    Binning(String),
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sample mean and central moments `m_r = Σ(x - x̄)^r / n` for `r = 0..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    pub central: [f64; 9],
}

impl SampleMoments {
    pub fn from_sample(sample: &[f64]) -> Result<Self, StatsError> {
        if sample.is_empty() {
            return Err(StatsError::TooSmall { n: 0, min: 1 });
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let n = sample.len();
        let nf = n as f64;
        let mean = neumaier_sum(sample.iter().copied()) / nf;
        let mut sums = [0.0f64; 9];
        let mut comp = [0.0f64; 9];
        for &x in sample {
            let d = x - mean;
            let mut p = d;
            for r in 1..9 {
                let t = sums[r] + p;
                if sums[r].abs() >= p.abs() {
                    comp[r] += (sums[r] - t) + p;
                } else {
                    comp[r] += (p - t) + sums[r];
                }
                sums[r] = t;
                p *= d;
            }
        }
        let mut central = [0.0; 9];
        central[0] = 1.0;
        for r in 1..9 {
            central[r] = (sums[r] + comp[r]) / nf;
        }
        Ok(Self { n, mean, central })
    }

    /// Unbiased k-statistics `(k1, k2, k3, k4)`.
    pub fn k_statistics(&self) -> [f64; 4] {
        let n = self.n as f64;
        let [_, _, m2, m3, m4, ..] = self.central;
        let k2 = n / (n - 1.0) * m2;
        let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
        let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2)
            / ((n - 1.0) * (n - 2.0) * (n - 3.0));
        [self.mean, k2, k3, k4]
    }

    /// Asymptotic `n · Cov(m_r, m_s)` of two sample central moments.
    fn n_cov(&self, r: usize, s: usize) -> f64 {
        let mu = &self.central;
        let (rf, sf) = (r as f64, s as f64);
        mu[r + s] - mu[r] * mu[s] - rf * mu[r - 1] * mu[s + 1] - sf * mu[r + 1] * mu[s - 1]
            + rf * sf * mu[r - 1] * mu[s - 1] * mu[2]
    }

    /// Asymptotic variance of a statistic, times `n`.
    fn n_variance(&self, stat: Statistic) -> Result<f64, StatsError> {
        let mu2 = self.central[2];
        if matches!(stat, Statistic::Skew | Statistic::Kurt) && !(mu2 > 0.0) {
            return Err(StatsError::ZeroVariance);
        }
        let v = match stat {
            Statistic::Mean => mu2,
            Statistic::K2 => self.n_cov(2, 2),
            Statistic::Skew => {
                let g = [-1.5 * self.central[3] / mu2.powf(2.5), mu2.powf(-1.5)];
                quad_form(g, [self.n_cov(2, 2), self.n_cov(2, 3), self.n_cov(3, 3)])
            }
            Statistic::Kurt => {
                let g = [-2.0 * self.central[4] / mu2.powi(3), 1.0 / (mu2 * mu2)];
                quad_form(g, [self.n_cov(2, 2), self.n_cov(2, 4), self.n_cov(4, 4)])
            }
        };
        Ok(v.max(0.0))
    }
}

fn quad_form(g: [f64; 2], cov: [f64; 3]) -> f64 {
    g[0] * g[0] * cov[0] + 2.0 * g[0] * g[1] * cov[1] + g[1] * g[1] * cov[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    K2,
    Skew,
    Kurt,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Self::Mean, Self::K2, Self::Skew, Self::Kurt];
}

/// How confidence half-widths are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CiMethod {
    DeltaMethod,
    Bootstrap { resamples: usize, seed: u64 },
    /// Delta method for `n ≥ 10⁴`, otherwise a 1000-resample bootstrap.
    Auto,
}

pub const AUTO_BOOTSTRAP_BELOW: usize = 10_000;
const AUTO_RESAMPLES: usize = 1000;
const AUTO_SEED: u64 = 0x5eed_b007;

impl CiMethod {
    fn resolve(self, n: usize) -> CiMethod {
        match self {
            CiMethod::Auto if n >= AUTO_BOOTSTRAP_BELOW => CiMethod::DeltaMethod,
            CiMethod::Auto => CiMethod::Bootstrap {
                resamples: AUTO_RESAMPLES,
                seed: AUTO_SEED,
            },
            m => m,
        }
    }
}

/// Half-widths of the confidence intervals of each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfWidths {
    pub k1: f64,
    pub k2: f64,
    pub skew: f64,
    pub kurt: f64,
}

impl HalfWidths {
    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => self.k1,
            Statistic::K2 => self.k2,
            Statistic::Skew => self.skew,
            Statistic::Kurt => self.kurt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub n: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub skew: f64,
    pub kurt: f64,
    pub confidence: f64,
    pub method: CiMethod,
    pub half_widths: HalfWidths,
}

impl CumulantSet {
    pub fn value(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => self.k1,
            Statistic::K2 => self.k2,
            Statistic::Skew => self.skew,
            Statistic::Kurt => self.kurt,
        }
    }

    pub const CSV_HEADER: &'static str =
        "n,k1,k2,k3,k4,skew,kurt,hw_k1,hw_k2,hw_skew,hw_kurt,confidence";

    pub fn csv_row(&self) -> String {
        let h = &self.half_widths;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.n, self.k1, self.k2, self.k3, self.k4, self.skew, self.kurt, h.k1, h.k2, h.skew,
            h.kurt, self.confidence
        )
    }
}

/// Two-sided normal quantile for a confidence level.
pub fn z_value(confidence: f64) -> Result<f64, StatsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Confidence(confidence));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + 0.5 * confidence))
}

/// Normal-asymptotic half-width of a statistic; skewness and kurtosis use the
/// delta method on moments up to order eight.
pub fn ci_half_width(
    stat: Statistic,
    moments: &SampleMoments,
    confidence: f64,
) -> Result<f64, StatsError> {
    const MIN_N: usize = 100;
    if moments.n < MIN_N {
        return Err(StatsError::TooSmall {
            n: moments.n,
            min: MIN_N,
        });
    }
    let z = z_value(confidence)?;
    Ok(z * (moments.n_variance(stat)? / moments.n as f64).sqrt())
}

/// `[k1, k2, ς, κ]` of a sample.
fn point_estimates(m: &SampleMoments) -> Result<[f64; 4], StatsError> {
    let [k1, k2, k3, k4] = m.k_statistics();
    if !(k2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok([k1, k2, k3 / k2.powf(1.5), k4 / (k2 * k2)])
}

/// Percentile-bootstrap half-widths `(q_hi - q_lo) / 2` for `[k1, k2, ς, κ]`.
pub fn bootstrap_half_widths(
    sample: &[f64],
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<[f64; 4], StatsError> {
    z_value(confidence)?;
    if resamples < 2 {
        return Err(StatsError::TooSmall {
            n: resamples,
            min: 2,
        });
    }
    let n = sample.len();
    let reps: Vec<[f64; 4]> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut s = per_path_stream(seed, b as u64);
            let draw: Vec<f64> = (0..n).map(|_| sample[s.index(n)]).collect();
            SampleMoments::from_sample(&draw)
                .and_then(|m| point_estimates(&m))
                .unwrap_or([f64::NAN; 4])
        })
        .collect();
    let tail = 0.5 * (1.0 - confidence);
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        let mut col: Vec<f64> = reps.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
        if col.len() < 2 {
            return Err(StatsError::ZeroVariance);
        }
        col.sort_by(f64::total_cmp);
        *o = 0.5 * (quantile_sorted(&col, 1.0 - tail) - quantile_sorted(&col, tail));
    }
    Ok(out)
}

/// k-statistics, normalised cumulants and CI half-widths, with the default
/// [`CiMethod::Auto`].
pub fn estimate_cumulants(sample: &[f64], confidence: f64) -> Result<CumulantSet, StatsError> {
    estimate_cumulants_with(sample, confidence, CiMethod::Auto)
}

pub fn estimate_cumulants_with(
    sample: &[f64],
    confidence: f64,
    method: CiMethod,
) -> Result<CumulantSet, StatsError> {
    const MIN_N: usize = 8;
    if sample.len() < MIN_N {
        return Err(StatsError::TooSmall {
            n: sample.len(),
            min: MIN_N,
        });
    }
    z_value(confidence)?;
    let m = SampleMoments::from_sample(sample)?;
    let [k1, k2, k3, k4] = m.k_statistics();
    let [_, _, skew, kurt] = point_estimates(&m)?;
    let method = method.resolve(m.n);
    let hw = match method {
        CiMethod::Bootstrap { resamples, seed } => {
            bootstrap_half_widths(sample, confidence, resamples, seed)?
        }
        _ => {
            let mut hw = [0.0; 4];
            for (h, s) in hw.iter_mut().zip(Statistic::ALL) {
                *h = ci_half_width(s, &m, confidence)?;
            }
            hw
        }
    };
    Ok(CumulantSet {
        n: m.n,
        k1,
        k2,
        k3,
        k4,
        skew,
        kurt,
        confidence,
        method,
        half_widths: HalfWidths {
            k1: hw[0],
            k2: hw[1],
            skew: hw[2],
            kurt: hw[3],
        },
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Quantile of unsorted data.
pub fn quantile(sample: &[f64], p: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BinRule {
    /// Width `2·IQR·n^{-1/3}` over the sample range.
    FreedmanDiaconis,
    /// Equal-width bins over `[lo, hi]`; points outside are dropped.
    Uniform { lo: f64, hi: f64, bins: usize },
    /// Explicit edges; points outside are dropped.
    Edges { edges: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub densities: Vec<f64>,
}

const MAX_FD_BINS: usize = 100_000;

/// Normalised density histogram of the points falling inside the bins.
pub fn build_histogram(sample: &[f64], rule: &BinRule) -> Result<Histogram, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::TooSmall { n: 0, min: 1 });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let edges = match rule {
        BinRule::FreedmanDiaconis => fd_edges(sample),
        BinRule::Uniform { lo, hi, bins } => {
            if *bins == 0 || !(hi > lo) {
                return Err(StatsError::Binning(format!(
                    "need bins ≥ 1 and hi > lo, got {bins} bins on [{lo}, {hi}]"
                )));
            }
            let w = (hi - lo) / *bins as f64;
            (0..=*bins).map(|i| lo + i as f64 * w).collect()
        }
        BinRule::Edges { edges } => {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(StatsError::Binning(
                    "edges must be strictly increasing with at least two entries".into(),
                ));
            }
            edges.clone()
        }
    };
    let mut counts = vec![0u64; edges.len() - 1];
    let (lo, hi) = (edges[0], *edges.last().unwrap());
    for &x in sample {
        if x < lo || x > hi {
            continue;
        }
        let i = edges.partition_point(|&e| e <= x).saturating_sub(1);
        let last = counts.len() - 1;
        counts[i.min(last)] += 1;
    }
    Histogram::from_counts(edges, counts)
}

fn fd_edges(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let (lo, hi) = (s[0], *s.last().unwrap());
    if !(hi > lo) {
        return vec![lo - 0.5, lo + 0.5];
    }
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let width = 2.0 * iqr * (s.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, MAX_FD_BINS)
    } else {
        1
    };
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
    edges[bins] = hi;
    edges
}

impl Histogram {
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self, StatsError> {
        if edges.len() != counts.len() + 1 {
            return Err(StatsError::Binning("edges/counts length mismatch".into()));
        }
        let total: u64 = counts.iter().sum();
        let densities = edges
            .windows(2)
            .zip(&counts)
            .map(|(w, &c)| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / (total as f64 * (w[1] - w[0]))
                }
            })
            .collect();
        Ok(Self {
            bin_edges: edges,
            counts,
            densities,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Merges sparse bins left to right until every bin holds at least
    /// `min_count` points; a sparse remainder joins the last full bin.
    pub fn merge_sparse(&self, min_count: u64) -> Histogram {
        let mut edges = vec![self.bin_edges[0]];
        let mut counts: Vec<u64> = Vec::new();
        let mut acc = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            acc += c;
            if acc >= min_count {
                counts.push(acc);
                edges.push(self.bin_edges[i + 1]);
                acc = 0;
            }
        }
        let end = *self.bin_edges.last().unwrap();
        if acc > 0 || counts.is_empty() {
            if let Some(last) = counts.last_mut() {
                *last += acc;
                *edges.last_mut().unwrap() = end;
            } else {
                counts.push(acc);
                edges.push(end);
            }
        } else {
            *edges.last_mut().unwrap() = end;
        }
        Histogram::from_counts(edges, counts).expect("consistent by construction")
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count,density")?;
        for i in 0..self.n_bins() {
            writeln!(
                w,
                "{:e},{:e},{},{:e}",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.counts[i],
                self.densities[i]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut s = per_path_stream(seed, 0);
        (0..n).map(|_| s.normal()).collect()
    }

    #[test]
    fn gaussian_sample_has_vanishing_shape_cumulants() {
        let x = normals(1_000_000, 1);
        let c = estimate_cumulants(&x, 0.95).unwrap();
        assert!(c.skew.abs() < 0.01, "skew {}", c.skew);
        assert!(c.kurt.abs() < 0.02, "kurt {}", c.kurt);
        assert_eq!(c.method, CiMethod::DeltaMethod);
        assert!((c.half_widths.skew - 1.96 * (6e-6f64).sqrt()).abs() < 3e-4);
        assert!((c.half_widths.kurt - 1.96 * (24e-6f64).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn mean_half_width_is_textbook() {
        let mut x = normals(10_000, 2);
        let m = SampleMoments::from_sample(&x).unwrap();
        let sd = m.central[2].sqrt();
        for v in &mut x {
            *v /= sd;
        }
        let m = SampleMoments::from_sample(&x).unwrap();
        let hw = ci_half_width(Statistic::Mean, &m, 0.95).unwrap();
        assert!((hw - 0.0196).abs() < 1e-4, "{hw}");
    }

    #[test]
    fn small_n_is_rejected_by_delta_method() {
        let m = SampleMoments::from_sample(&normals(50, 3)).unwrap();
        assert!(matches!(
            ci_half_width(Statistic::Skew, &m, 0.95),
            Err(StatsError::TooSmall { .. })
        ));
        assert!(estimate_cumulants(&[1.0; 5], 0.95).is_err());
    }

    #[test]
    fn zero_variance_is_rejected() {
        assert_eq!(
            estimate_cumulants(&[2.0; 20], 0.95).unwrap_err(),
            StatsError::ZeroVariance
        );
    }

    #[test]
    fn bootstrap_is_used_for_small_samples_and_agrees_with_delta() {
        let x = normals(5_000, 4);
        let c = estimate_cumulants(&x, 0.95).unwrap();
        assert!(matches!(c.method, CiMethod::Bootstrap { .. }));
        let d = estimate_cumulants_with(&x, 0.95, CiMethod::DeltaMethod).unwrap();
        for s in Statistic::ALL {
            let (a, b) = (c.half_widths.get(s), d.half_widths.get(s));
            assert!((a / b - 1.0).abs() < 0.2, "{s:?}: {a} vs {b}");
        }
        let again = estimate_cumulants(&x, 0.95).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn k_statistics_are_unbiased() {
        // Exponential(1): k1 = 1, k2 = 1, k3 = 2, k4 = 6.
        let reps = 20_000;
        let n = 10;
        let mut s = per_path_stream(5, 0);
        let mut acc = [0.0; 4];
        for _ in 0..reps {
            let x: Vec<f64> = (0..n).map(|_| -(1.0 - s.uniform()).ln()).collect();
            let k = SampleMoments::from_sample(&x).unwrap().k_statistics();
            for j in 0..4 {
                acc[j] += k[j] / reps as f64;
            }
        }
        assert!((acc[0] - 1.0).abs() < 0.03, "{acc:?}");
        assert!((acc[1] - 1.0).abs() < 0.05, "{acc:?}");
        assert!((acc[2] - 2.0).abs() < 0.3, "{acc:?}");
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let mut s = per_path_stream(6, 0);
        let x: Vec<f64> = (0..100_000).map(|_| s.uniform()).collect();
        let h = build_histogram(&x, &BinRule::Uniform { lo: 0.0, hi: 1.0, bins: 10 }).unwrap();
        assert!(h.densities.iter().all(|d| (d - 1.0).abs() < 0.05));
        let area: f64 = h.densities.iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_histogram_matches_pdf_within_binomial_error() {
        let x = normals(1_000_000, 7);
        let h = build_histogram(&x, &BinRule::FreedmanDiaconis).unwrap().merge_sparse(10);
        let n = h.total() as f64;
        let normal = Normal::standard();
        for i in 0..h.n_bins() {
            let (a, b) = (h.bin_edges[i], h.bin_edges[i + 1]);
            let p = normal.cdf(b) - normal.cdf(a);
            let se = (n * p * (1.0 - p)).sqrt().max(1.0);
            let dev = (h.counts[i] as f64 - n * p).abs();
            assert!(dev < 5.0 * se, "bin {i}: {} vs {}", h.counts[i], n * p);
        }
    }

    #[test]
    fn merged_bins_hold_min_count() {
        let mut s = per_path_stream(8, 0);
        let x: Vec<f64> = (0..20_000).map(|_| s.normal().powi(3) * 5.0).collect();
        let h = build_histogram(&x, &BinRule::FreedmanDiaconis).unwrap();
        assert!(h.counts.iter().any(|&c| c < 10));
        let m = h.merge_sparse(10);
        assert!(m.counts.iter().all(|&c| c >= 10));
        assert_eq!(m.total(), h.total());
        assert_eq!(m.bin_edges[0], h.bin_edges[0]);
        assert_eq!(m.bin_edges.last(), h.bin_edges.last());
        let area: f64 = m.densities.iter().zip(m.widths()).map(|(d, w)| d * w).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile_sorted(&[1.0], 0.3), 1.0);
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}
