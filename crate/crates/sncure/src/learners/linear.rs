//! Weighted linear least squares via the normal equations with a ridge
//! jitter sized to the design, so exactly collinear pseudo-data columns do
//! not abort the fit.

use super::Dataset;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefs
                .iter()
                .zip(row)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

const RIDGE_JITTER: f64 = 1e-9;

pub(super) fn fit_linear(data: &Dataset) -> Result<LinearModel> {
    let p = data.n_cols();
    let d = p + 1; // intercept column appended last
    if data.positive_rows() < d {
        return Err(Error::DegenerateDesign(format!(
            "{} positively weighted rows for {} parameters",
            data.positive_rows(),
            d
        )));
    }

    // accumulate X'WX and X'Wy in fixed row order
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut row_buf = vec![0.0; d];
    for i in 0..data.n_rows() {
        let w = data.weight(i);
        if w == 0.0 {
            continue;
        }
        row_buf[..p].copy_from_slice(data.row(i));
        row_buf[p] = 1.0;
        let wy = w * data.target(i);
        for r in 0..d {
            let wr = w * row_buf[r];
            for c in r..d {
                gram[r * d + c] += wr * row_buf[c];
            }
            rhs[r] += row_buf[r] * wy;
        }
    }
    for r in 0..d {
        for c in 0..r {
            gram[r * d + c] = gram[c * d + r];
        }
    }

    let trace: f64 = (0..d).map(|r| gram[r * d + r]).sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateDesign("zero design trace".into()));
    }
    let jitter = RIDGE_JITTER * trace / p as f64;
    for r in 0..d {
        gram[r * d + r] += jitter;
    }

    let sol = cholesky_solve(&gram, &rhs, d)
        .ok_or_else(|| Error::DegenerateDesign("normal equations singular beyond ridge tolerance".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDesign("non-finite solution".into()));
    }

    Ok(LinearModel {
        intercept: sol[d - 1],
        coefs: sol[..d - 1].to_vec(),
    })
}

/// Cholesky factorization and solve for a symmetric positive-definite system.
fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[i * d + k] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            y[i] -= l[k * d + i] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_identity() {
        let a = vec![2.0, 0.0, 0.0, 3.0];
        let sol = cholesky_solve(&a, &[4.0, 9.0], 2).unwrap();
        assert_abs_diff_eq!(sol[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn collinear_columns_survive_jitter() {
        // duplicated column: exactly singular normal equations, rescued by
        // the ridge jitter as long as there are enough rows
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let x = i as f64 / 10.0;
            feats.extend_from_slice(&[x, x]);
            ys.push(3.0 * x + 1.0);
        }
        let data = Dataset::unweighted(feats, 2, ys).unwrap();
        let m = fit_linear(&data).unwrap();
        // prediction is well defined even though the coefficient split is not
        assert_abs_diff_eq!(m.predict_row(&[1.0, 1.0]), 4.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_weight_rows_ignored() {
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for i in 0..30 {
            let x = i as f64 / 7.0;
            feats.push(x);
            ys.push(2.0 * x);
            ws.push(1.0);
        }
        // a junk row with zero weight must not perturb the fit
        feats.push(100.0);
        ys.push(-999.0);
        ws.push(0.0);
        let data = Dataset::new(feats, 1, ys, ws).unwrap();
        let m = fit_linear(&data).unwrap();
        assert_abs_diff_eq!(m.coefs[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.intercept, 0.0, epsilon = 1e-6);
    }
}
