//! Least-squares helpers: polynomial fits and exponential-rate extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `c[0] + c[1] x + ... ` with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_sum_sq: f64,
}

/// Ordinary least-squares polynomial fit of the given degree.
///
/// The abscissa is rescaled to `[-1, 1]` before forming the normal equations.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter("x and y lengths differ".into()));
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= degree {
        return Err(Error::IllConditionedFit(format!(
            "{} distinct abscissae cannot determine a degree-{degree} polynomial",
            distinct.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let lo = distinct[0];
    let hi = *distinct.last().unwrap();
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let p = degree + 1;

    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - center) / half;
        let powers: Vec<f64> = (0..p).map(|k| u.powi(k as i32)).collect();
        for r in 0..p {
            aty[r] += powers[r] * yi;
            for c in 0..p {
                ata[r][c] += powers[r] * powers[c];
            }
        }
    }
    let inv = invert(&ata).ok_or_else(|| Error::IllConditionedFit("singular normal equations".into()))?;
    let scaled: Vec<f64> = (0..p).map(|r| (0..p).map(|c| inv[r][c] * aty[c]).sum()).collect();

    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let u = (xi - center) / half;
            let fit: f64 = scaled.iter().enumerate().map(|(k, c)| c * u.powi(k as i32)).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let dof = x.len().saturating_sub(p);
    let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };

    // map coefficients of u = (x - center)/half back to x: expand binomially
    let mut coefficients = vec![0.0; p];
    let mut cov_scaled = vec![vec![0.0; p]; p];
    for r in 0..p {
        for c in 0..p {
            cov_scaled[r][c] = sigma2 * inv[r][c];
        }
    }
    // transformation matrix T with coefficient_x = T * coefficient_u
    let mut t = vec![vec![0.0; p]; p];
    for k in 0..p {
        // u^k = (x - center)^k / half^k = sum_j C(k, j) x^j (-center)^{k-j} / half^k
        for j in 0..=k {
            t[j][k] = binomial(k, j) * (-center).powi((k - j) as i32) / half.powi(k as i32);
        }
    }
    for j in 0..p {
        coefficients[j] = (0..p).map(|k| t[j][k] * scaled[k]).sum();
    }
    let std_errors = (0..p)
        .map(|j| {
            let mut v = 0.0;
            for a in 0..p {
                for b in 0..p {
                    v += t[j][a] * cov_scaled[a][b] * t[j][b];
                }
            }
            v.max(0.0).sqrt()
        })
        .collect();
    Ok(PolyFit { coefficients, std_errors, residual_sum_sq: rss })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Exponential growth rate of a series `y ~ exp(2 lambda t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Half the fitted slope of `ln y` against `t`.
    pub lambda: f64,
    pub stderr: f64,
    /// Intercept of `ln y`.
    pub intercept: f64,
    pub points: usize,
}

/// Linear least squares of `ln y` against `t` over the closed window `[a, b]`.
pub fn fit_exponent(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<ExponentFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidParameter("t and y lengths differ".into()));
    }
    let (a, b) = window;
    let span = (b - a).abs().max(1.0);
    let eps = 1e-9 * span;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti >= a - eps && ti <= b + eps {
            if !(yi > 0.0) {
                return Err(Error::InvalidParameter(format!("non-positive value {yi} at t = {ti}")));
            }
            xs.push(ti);
            ys.push(yi.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::IllConditionedFit(format!("{} points in window, need at least 4", xs.len())));
    }
    let fit = polyfit(&xs, &ys, 1)?;
    Ok(ExponentFit {
        lambda: fit.coefficients[1] / 2.0,
        stderr: fit.std_errors[1] / 2.0,
        intercept: fit.coefficients[0],
        points: xs.len(),
    })
}
