//! Derivative-free minimisation: Brent line searches inside a principal-axis
//! direction-set method.
//!
//! Each sweep minimises along every current direction and may swap the
//! overall displacement in for the direction of largest decrease (Powell).
//! When the set becomes nearly linearly dependent it is replaced by its
//! principal axes, weighted by the latest step lengths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("objective failed at {x:?}: {message}")]
    Evaluation { x: Vec<f64>, message: String },
    #[error("invalid optimiser input: {0}")]
    Input(String),
}

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const TINY: f64 = 1e-20;

/// Scalar objective that may fail.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Result<f64, String>;
}

impl<F: FnMut(&[f64]) -> Result<f64, String>> Objective for F {
    fn eval(&mut self, x: &[f64]) -> Result<f64, String> {
        self(x)
    }
}

/// Result of a 1-D minimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMin {
    pub x: f64,
    pub f: f64,
    pub evaluations: usize,
}

/// Expands `(a, b)` downhill until `f(b) ≤ f(a)`, `f(b) ≤ f(c)`.
/// Returns `((a, fa), (b, fb), (c, fc))`.
fn bracket<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a0: f64,
    fa0: f64,
    b0: f64,
    max_evals: usize,
    evals: &mut usize,
) -> Result<((f64, f64), (f64, f64), (f64, f64)), E> {
    const GLIMIT: f64 = 100.0;
    let (mut a, mut fa) = (a0, fa0);
    let mut b = b0;
    let mut fb = f(b)?;
    *evals += 1;
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GOLD * (b - a);
    let mut fc = f(c)?;
    *evals += 1;
    while fb > fc && *evals < max_evals {
        let r = (b - a) * (fb - fc);
        let q = (b - c) * (fb - fa);
        let denom = 2.0 * (q - r).abs().max(TINY) * (q - r).signum();
        let mut u = b - ((b - c) * q - (b - a) * r) / denom;
        let ulim = b + GLIMIT * (c - b);
        let mut fu;
        if (b - u) * (u - c) > 0.0 {
            fu = f(u)?;
            *evals += 1;
            if fu < fc {
                return Ok(((b, fb), (u, fu), (c, fc)));
            } else if fu > fb {
                return Ok(((a, fa), (b, fb), (u, fu)));
            }
            u = c + GOLD * (c - b);
            fu = f(u)?;
            *evals += 1;
        } else if (c - u) * (u - ulim) > 0.0 {
            fu = f(u)?;
            *evals += 1;
            if fu < fc {
                b = c;
                c = u;
                u = c + GOLD * (c - b);
                fb = fc;
                fc = fu;
                fu = f(u)?;
                *evals += 1;
            }
        } else if (u - ulim) * (ulim - c) >= 0.0 {
            u = ulim;
            fu = f(u)?;
            *evals += 1;
        } else {
            u = c + GOLD * (c - b);
            fu = f(u)?;
            *evals += 1;
        }
        a = b;
        b = c;
        c = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    Ok(((a, fa), (b, fb), (c, fc)))
}

/// Brent's parabolic-interpolation / golden-section search on a bracket
/// `a < b < c` (or reversed) with `f(b)` below both ends.
pub fn brent<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    (a, b, c): (f64, f64, f64),
    fb: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LineMin, E> {
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let (mut x, mut w, mut v) = (b, b, b);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evaluations = 0;
    for _ in 0..max_iter {
        let xm = 0.5 * (lo + hi);
        let tol1 = tol * x.abs() + tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() >= (0.5 * q * etemp).abs() || p <= q * (lo - x) || p >= q * (hi - x) {
                e = if x >= xm { lo - x } else { hi - x };
                d = CGOLD * e;
            } else {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
            }
        } else {
            e = if x >= xm { lo - x } else { hi - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(LineMin {
        x,
        f: fx,
        evaluations,
    })
}

/// Brackets and minimises a 1-D function starting from `x0` with trial step
/// `step`.
pub fn minimize_1d<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    x0: f64,
    step: f64,
    tol: f64,
) -> Result<LineMin, E> {
    let f0 = f(x0)?;
    let mut evals = 1;
    let ((a, _), (b, fb), (c, _)) = bracket(&mut f, x0, f0, x0 + step, 200, &mut evals)?;
    let mut m = brent(&mut f, (a, b, c), fb, tol, 200)?;
    m.evaluations += evals;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAxisOptions {
    /// Initial trial step along each direction.
    pub step: f64,
    /// Relative/absolute tolerance of the line searches.
    pub line_tol: f64,
    /// Stop when a sweep decreases `f` by less than
    /// `ftol · (|f| + |f_prev|)/2 + 1e-300`.
    pub ftol: f64,
    /// Stop when a sweep moves the point by less than this (Euclidean).
    pub xtol: f64,
    pub max_sweeps: usize,
}

impl Default for PrincipalAxisOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            line_tol: 1e-6,
            ftol: 1e-10,
            xtol: 1e-7,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub sweeps: usize,
    /// Best point after each sweep, starting with the initial point.
    pub trace: Vec<TracePoint>,
}

/// Minimises `objective` from `x0`.
pub fn principal_axis<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    opts: &PrincipalAxisOptions,
) -> Result<Minimum, OptimizeError> {
    let n = x0.len();
    if n == 0 {
        return Err(OptimizeError::Input("empty starting point".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimizeError::Input(format!("non-finite starting point {x0:?}")));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| -> Result<f64, OptimizeError> {
        *evaluations += 1;
        let v = objective.eval(x).map_err(|message| OptimizeError::Evaluation {
            x: x.to_vec(),
            message,
        })?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };

    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(x.as_slice(), &mut evaluations)?;
    let mut dirs = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![TracePoint {
        x: x.as_slice().to_vec(),
        f: fx,
    }];
    let mut step = opts.step;
    let mut sweeps = 0;
    let mut lengths = vec![opts.step; n];

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let start = x.clone();
        let f_start = fx;
        let mut biggest = (0usize, 0.0f64);
        for j in 0..n {
            let u = dirs.column(j).into_owned();
            let before = fx;
            let s = line_search(&mut eval, &mut x, &mut fx, &u, step, opts.line_tol, &mut evaluations)?;
            lengths[j] = s.abs().max(lengths[j] * 0.5);
            if before - fx > biggest.1 {
                biggest = (j, before - fx);
            }
        }
        let disp = &x - &start;
        let moved = disp.norm();
        if moved > 0.0 {
            let u = &disp / moved;
            let extrap = &x + &disp;
            let fe = eval(extrap.as_slice(), &mut evaluations)?;
            let keep = fe < f_start && {
                let t = 2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - biggest.1).powi(2);
                t < biggest.1 * (f_start - fe).powi(2)
            };
            if keep {
                let s = line_search(&mut eval, &mut x, &mut fx, &u, step, opts.line_tol, &mut evaluations)?;
                let last = n - 1;
                let old = dirs.column(last).into_owned();
                dirs.set_column(biggest.0, &old);
                dirs.set_column(last, &u);
                lengths[biggest.0] = lengths[last];
                lengths[last] = (moved + s.abs()).max(opts.xtol);
            }
        }
        trace.push(TracePoint {
            x: x.as_slice().to_vec(),
            f: fx,
        });

        let total = (&x - &start).norm();
        let decrease = f_start - fx;
        if total < opts.xtol
            || decrease.abs() <= opts.ftol * 0.5 * (f_start.abs() + fx.abs()) + 1e-300
        {
            break;
        }
        if degenerate(&dirs) {
            dirs = principal_axes(&dirs, &lengths);
        }
        step = (total * 0.5).clamp(opts.xtol * 10.0, opts.step);
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        evaluations,
        sweeps,
        trace,
    })
}

fn line_search(
    eval: &mut impl FnMut(&[f64], &mut usize) -> Result<f64, OptimizeError>,
    x: &mut DVector<f64>,
    fx: &mut f64,
    u: &DVector<f64>,
    step: f64,
    tol: f64,
    evaluations: &mut usize,
) -> Result<f64, OptimizeError> {
    let base = x.clone();
    let f0 = *fx;
    let mut g = |s: f64| -> Result<f64, OptimizeError> {
        if s == 0.0 {
            return Ok(f0);
        }
        let p = &base + u * s;
        eval(p.as_slice(), evaluations)
    };
    let mut local = 0usize;
    let ((a, _), (b, fb), (c, _)) = bracket(&mut g, 0.0, f0, step, 60, &mut local)?;
    let m = brent(&mut g, (a, b, c), fb, tol, 100)?;
    if m.f < f0 {
        *x = &base + u * m.x;
        *fx = m.f;
        Ok(m.x)
    } else {
        Ok(0.0)
    }
}

fn degenerate(dirs: &DMatrix<f64>) -> bool {
    let gram = dirs.transpose() * dirs;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.min() < 1e-6 * eig.eigenvalues.max()
}

/// Orthonormal principal axes of the direction set weighted by the most
/// recent step lengths along each direction.
fn principal_axes(dirs: &DMatrix<f64>, lengths: &[f64]) -> DMatrix<f64> {
    let n = dirs.ncols();
    let scaled = DMatrix::from_fn(n, n, |i, j| dirs[(i, j)] * lengths[j]);
    let eig = SymmetricEigen::new(&scaled * scaled.transpose());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut next = DMatrix::<f64>::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        next.set_column(k, &eig.eigenvectors.column(i));
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_minimum() {
        let m = minimize_1d(|x: f64| Ok::<_, ()>((x - 2.5).powi(2) + 1.0), 0.0, 0.1, 1e-10).unwrap();
        assert!((m.x - 2.5).abs() < 1e-6);
        assert!((m.f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brent_on_non_quadratic() {
        let m = minimize_1d(|x: f64| Ok::<_, ()>(x.cosh() - 0.5 * x), 3.0, -0.5, 1e-10).unwrap();
        assert!((m.x - 0.5f64.asinh()).abs() < 1e-6, "{}", m.x);
    }

    #[test]
    fn quadratic_bowl() {
        let mut f = |x: &[f64]| Ok((x[0] - 5.0).powi(2) + 10.0 * (x[1] + 0.3).powi(2));
        let m = principal_axis(&mut f, &[1.0, 0.5], &PrincipalAxisOptions::default()).unwrap();
        assert!((m.x[0] - 5.0).abs() < 1e-4 && (m.x[1] + 0.3).abs() < 1e-4, "{:?}", m.x);
        assert!(m.trace.windows(2).all(|w| w[1].f <= w[0].f));
    }

    #[test]
    fn rotated_valley() {
        // Rosenbrock.
        let mut f = |x: &[f64]| Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let opts = PrincipalAxisOptions {
            max_sweeps: 500,
            ftol: 1e-14,
            xtol: 1e-10,
            line_tol: 1e-9,
            ..Default::default()
        };
        let m = principal_axis(&mut f, &[-1.2, 1.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 2e-3, "{:?}", m);
    }

    #[test]
    fn evaluation_errors_carry_the_point() {
        let mut f = |x: &[f64]| if x[0] > 0.5 { Err("boom".to_string()) } else { Ok(-x[0]) };
        match principal_axis(&mut f, &[0.0], &PrincipalAxisOptions::default()) {
            Err(OptimizeError::Evaluation { x, message }) => {
                assert!(x[0] > 0.5);
                assert_eq!(message, "boom");
            }
            other => panic!("{other:?}"),
        }
    }
}
