//! Least-squares fitting: Lorentzian (Levenberg–Marquardt), polynomials, and a
//! bounded Nelder–Mead simplex for small derivative-free problems.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("x, y and weights must have equal lengths")]
    LengthMismatch,
    #[error("normal equations are singular (rank deficient design)")]
    Singular,
    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("fitted linewidth is not positive ({0})")]
    NegativeWidth(f64),
}

/// Lorentzian fit y = offset + peak·(Γ/2)²/((Γ/2)² + (x − center)²).
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzianFit {
    pub center: f64,
    /// Full width at half maximum Γ.
    pub fwhm: f64,
    pub peak: f64,
    pub offset: f64,
    /// Covariance of (center, fwhm, peak, offset).
    pub covariance: [[f64; 4]; 4],
    pub residuals: Vec<f64>,
    pub residual_rms: f64,
    pub max_abs_residual: f64,
    /// χ² per degree of freedom when weights were given, else the residual variance.
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LorentzianFit {
    /// One-sigma uncertainties of (center, fwhm, peak, offset).
    pub fn sigmas(&self) -> [f64; 4] {
        core::array::from_fn(|k| self.covariance[k][k].max(0.0).sqrt())
    }

    /// Area under the Lorentzian above the offset, peak·πΓ/2 (in x units).
    pub fn area(&self) -> f64 {
        self.peak * core::f64::consts::PI * self.fwhm / 2.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        lorentzian(x, self.center, self.fwhm, self.peak, self.offset)
    }
}

#[inline]
pub fn lorentzian(x: f64, center: f64, fwhm: f64, peak: f64, offset: f64) -> f64 {
    let h2 = fwhm * fwhm / 4.0;
    offset + peak * h2 / (h2 + (x - center).powi(2))
}

/// Fits a Lorentzian plus constant offset.
///
/// `sigma` holds per-point standard errors; without it all points weigh the
/// same and the covariance is scaled by the residual variance.
pub fn fit_lorentzian(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LorentzianFit, FitError> {
    let n = x.len();
    if y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(FitError::LengthMismatch);
    }
    if n < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: n });
    }
    // Work in normalized coordinates so all four parameters are O(1).
    let xc = 0.5 * (x[0] + x[n - 1]);
    let xs = 0.5 * (x[n - 1] - x[0]).abs().max(f64::MIN_POSITIVE);
    let ys = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = x.iter().map(|v| (v - xc) / xs).collect();
    let v: Vec<f64> = y.iter().map(|t| t / ys).collect();
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|e| ys / e).collect(),
        None => vec![1.0; n],
    };

    let mut p = initial_guess(&u, &v);
    let residuals = |p: &Vector4<f64>| -> Vec<f64> {
        u.iter().zip(&v).zip(&w).map(|((&a, &b), &wt)| (b - lorentzian(a, p[0], p[1], p[2], p[3])) * wt).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|e| e * e).sum::<f64>();

    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 500 {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&u, &w, &r, &p);
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let small_step = step.norm() <= 1e-14 * (p.norm() + 1e-14);
                let small_gain = (c - ct) <= 1e-15 * c.max(1e-300);
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: we are at a minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence { iterations });
    }
    let width = p[1].abs();
    if !(width > 0.0) {
        return Err(FitError::NegativeWidth(p[1] * xs));
    }
    p[1] = width;

    let dof = (n - 4).max(1) as f64;
    let (jtj, _) = normal_equations(&u, &w, &r, &p);
    let inv = jtj.try_inverse().ok_or(FitError::Singular)?;
    let variance_scale = if sigma.is_some() { 1.0 } else { c / dof };
    let scales = [xs, xs, ys, ys];
    let mut covariance = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            covariance[i][j] = inv[(i, j)] * variance_scale * scales[i] * scales[j];
        }
    }
    let phys_res: Vec<f64> = u
        .iter()
        .zip(y)
        .map(|(&a, &b)| b - ys * lorentzian(a, p[0], p[1], p[2], p[3]))
        .collect();
    let residual_rms = (phys_res.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let max_abs_residual = phys_res.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(LorentzianFit {
        center: xc + xs * p[0],
        fwhm: xs * p[1],
        peak: ys * p[2],
        offset: ys * p[3],
        covariance,
        residuals: phys_res,
        residual_rms,
        max_abs_residual,
        reduced_chi2: c / dof * if sigma.is_some() { 1.0 } else { ys * ys },
        converged,
        iterations,
    })
}

fn normal_equations(u: &[f64], w: &[f64], r: &[f64], p: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    let h = p[1] / 2.0;
    let h2 = h * h;
    for ((&x, &wt), &res) in u.iter().zip(w).zip(r) {
        let d = x - p[0];
        let den = h2 + d * d;
        let shape = h2 / den;
        // derivatives of the model with respect to (center, fwhm, peak, offset)
        let j = Vector4::new(
            p[2] * h2 * 2.0 * d / (den * den),
            p[2] * h * d * d / (den * den),
            shape,
            1.0,
        ) * wt;
        jtj += j * j.transpose();
        jtr += j * res;
    }
    (jtj, jtr)
}

fn initial_guess(u: &[f64], v: &[f64]) -> Vector4<f64> {
    let n = u.len();
    let (imax, vmax) = v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &y)| if y > b.1 { (i, y) } else { b });
    let edge = 0.5 * (v[0] + v[n - 1]);
    let base = edge.min(v.iter().cloned().fold(f64::INFINITY, f64::min).max(edge - 1.0));
    let half = base + 0.5 * (vmax - base);
    let mut lo = imax;
    while lo > 0 && v[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi < n - 1 && v[hi] > half {
        hi += 1;
    }
    let width = (u[hi] - u[lo]).max(2.0 * (u[1] - u[0]).abs());
    Vector4::new(u[imax], width, vmax - base, base)
}

/// Polynomial least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFit {
    /// Coefficients c_0 + c_1 x + c_2 x² + …
    pub coeffs: Vec<f64>,
    /// Covariance of the coefficients.
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub r_squared: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.coeffs.len()).map(|k| self.covariance[k][k].max(0.0).sqrt()).collect()
    }
}

/// Fits a polynomial of the given degree, optionally weighted by per-point errors.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize, sigma: Option<&[f64]>) -> Result<PolyFit, FitError> {
    let n = x.len();
    let m = degree + 1;
    if y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(FitError::LengthMismatch);
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < m {
        return Err(FitError::TooFewPoints { needed: m, got: distinct.len() });
    }
    // Scale x to [−1, 1]-ish so the Vandermonde columns are comparable.
    let xs = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|e| 1.0 / e).collect(),
        None => vec![1.0; n],
    };
    let a = DMatrix::from_fn(n, m, |i, k| (x[i] / xs).powi(k as i32) * w[i]);
    let b = DVector::from_iterator(n, y.iter().zip(&w).map(|(v, wt)| v * wt));
    let ata = a.transpose() * &a;
    let inv = ata.clone().try_inverse().ok_or(FitError::Singular)?;
    let sol = &inv * (a.transpose() * &b);
    let fitted = &a * &sol;
    let ssr: f64 = (&b - &fitted).iter().map(|e| e * e).sum();
    let dof = n.saturating_sub(m).max(1) as f64;
    let var = if sigma.is_some() { 1.0 } else { ssr / dof };
    let coeffs: Vec<f64> = (0..m).map(|k| sol[k] / xs.powi(k as i32)).collect();
    let covariance = (0..m)
        .map(|i| (0..m).map(|j| inv[(i, j)] * var / (xs.powi(i as i32) * xs.powi(j as i32))).collect())
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let raw_ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - coeffs.iter().rev().fold(0.0, |acc, c| acc * xi + c)).powi(2))
        .sum();
    Ok(PolyFit {
        coeffs,
        covariance,
        residual_rms: (raw_ssr / n as f64).sqrt(),
        r_squared: if sst > 0.0 { 1.0 - raw_ssr / sst } else { 1.0 },
    })
}

/// Result of a Nelder–Mead minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Bounded Nelder–Mead minimizer.
///
/// Vertices are clamped into `[lower, upper]`. Stops when the spread of
/// function values across the simplex falls below `tol` relative to the
/// best value, or after `max_iter` iterations.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
    tol: f64,
) -> SimplexResult {
    let d = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for k in 0..d {
            x[k] = x[k].clamp(lower[k], upper[k]);
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    pts.push(start.clone());
    for k in 0..d {
        let mut p = start.clone();
        p[k] += step[k];
        if p[k] > upper[k] {
            p[k] = start[k] - step[k];
        }
        clamp(&mut p);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(core::cmp::Ordering::Equal));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = (vals[d] - vals[0]).abs();
        if spread <= tol * vals[0].abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; d];
        for p in &pts[..d] {
            for k in 0..d {
                centroid[k] += p[k] / d as f64;
            }
        }
        let mut xr = combine(&centroid, &pts[d], -1.0);
        clamp(&mut xr);
        let fr = f(&xr);
        if fr < vals[0] {
            let mut xe = combine(&centroid, &pts[d], -2.0);
            clamp(&mut xe);
            let fe = f(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let x = combine(&centroid, &xr, 0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = combine(&centroid, &pts[d], 0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < vals[d].min(fr) {
                pts[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    pts[i] = combine(&pts[0], &pts[i], 0.5);
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=d).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    SimplexResult { x: pts[best].clone(), value: vals[best], iterations, converged }
}
