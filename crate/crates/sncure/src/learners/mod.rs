//! Regression learners used for all nuisance fits: weighted linear least
//! squares, gradient-boosted regression trees with exact greedy splits, and a
//! convex stacking ensemble of both. Every fit is deterministic — no RNG,
//! ties broken by fixed iteration order.

mod ensemble;
mod gbt;
mod linear;

pub use ensemble::EnsembleModel;
pub use gbt::{GbtModel, GbtParams};
pub use linear::LinearModel;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Weighted regression problem: row-major features, one target and one
/// nonnegative weight per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_cols: usize,
        targets: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n_rows = targets.len();
        if n_rows == 0 {
            return Err(Error::EmptyData);
        }
        if features.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix has {} cells, expected {}x{}",
                features.len(),
                n_rows,
                n_cols
            )));
        }
        if weights.len() != n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} rows",
                weights.len(),
                n_rows
            )));
        }
        if features.iter().any(|v| !v.is_finite())
            || targets.iter().any(|v| !v.is_finite())
            || weights.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("dataset".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig("negative weight".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::DegenerateDesign("all weights zero".into()));
        }
        Ok(Self {
            features,
            n_rows,
            n_cols,
            targets,
            weights,
        })
    }

    pub fn unweighted(features: Vec<f64>, n_cols: usize, targets: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; targets.len()];
        Self::new(features, n_cols, targets, w)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Rows with strictly positive weight.
    pub fn positive_rows(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Copy of the rows selected by `idx`, preserving order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.n_cols);
        let mut targets = Vec::with_capacity(idx.len());
        let mut weights = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
            weights.push(self.weights[i]);
        }
        Self::new(features, self.n_cols, targets, weights)
    }
}

/// Which learner to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerSpec {
    Linear,
    Gbt(GbtParams),
    /// Convex stack of the listed members, weighted to minimize V-fold
    /// cross-validated weighted MSE.
    Ensemble(Vec<LearnerSpec>),
}

impl LearnerSpec {
    /// Linear member plus boosted trees over the default hyperparameter grid.
    pub fn default_ensemble() -> Self {
        LearnerSpec::Ensemble(vec![
            LearnerSpec::Linear,
            LearnerSpec::Gbt(GbtParams::new(50, 0.01)),
            LearnerSpec::Gbt(GbtParams::new(50, 0.1)),
            LearnerSpec::Gbt(GbtParams::new(200, 0.01)),
            LearnerSpec::Gbt(GbtParams::new(200, 0.1)),
        ])
    }

    /// Single small boosted-tree learner; the cheap nonparametric choice for
    /// replication loops.
    pub fn light_gbt() -> Self {
        LearnerSpec::Gbt(GbtParams::new(50, 0.1))
    }
}

/// A fitted model, immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    Constant(f64),
    Linear(LinearModel),
    Gbt(GbtModel),
    Ensemble(EnsembleModel),
}

impl Predictor {
    pub fn expected_width(&self) -> Option<usize> {
        match self {
            Predictor::Constant(_) => None,
            Predictor::Linear(m) => Some(m.coefs.len()),
            Predictor::Gbt(m) => Some(m.n_features()),
            Predictor::Ensemble(m) => m.members.iter().find_map(|(_, p)| p.expected_width()),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if let Some(w) = self.expected_width() {
            if row.len() != w {
                return Err(Error::WidthMismatch {
                    expected: w,
                    got: row.len(),
                });
            }
        }
        Ok(self.predict_row_unchecked(row))
    }

    pub(crate) fn predict_row_unchecked(&self, row: &[f64]) -> f64 {
        match self {
            Predictor::Constant(c) => *c,
            Predictor::Linear(m) => m.predict_row(row),
            Predictor::Gbt(m) => m.predict_row(row),
            Predictor::Ensemble(m) => m.predict_row(row),
        }
    }

    /// Predictions for a row-major feature matrix.
    pub fn predict(&self, features: &[f64], n_cols: usize) -> Result<Vec<f64>> {
        if n_cols == 0 || features.len() % n_cols != 0 {
            return Err(Error::DimensionMismatch(
                "feature matrix not divisible into rows".into(),
            ));
        }
        features
            .chunks_exact(n_cols)
            .map(|row| self.predict_row(row))
            .collect()
    }
}

/// Fit `spec` to `data`, minimizing weighted squared error within the class.
pub fn fit(spec: &LearnerSpec, data: &Dataset) -> Result<Predictor> {
    let p = match spec {
        LearnerSpec::Linear => Predictor::Linear(linear::fit_linear(data)?),
        LearnerSpec::Gbt(params) => Predictor::Gbt(gbt::fit_gbt(params, data)?),
        LearnerSpec::Ensemble(members) => {
            Predictor::Ensemble(ensemble::fit_ensemble(members, data)?)
        }
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid_xy(f: impl Fn(f64, f64) -> f64, n: usize) -> Dataset {
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let x1 = -1.0 + 2.0 * (i as f64) / (n as f64 - 1.0);
            let x2 = ((i * 7919) % n) as f64 / n as f64 - 0.5;
            feats.extend_from_slice(&[x1, x2]);
            ys.push(f(x1, x2));
        }
        Dataset::unweighted(feats, 2, ys).unwrap()
    }

    #[test]
    fn constant_target_all_specs() {
        let data = grid_xy(|_, _| 3.25, 40);
        for spec in [
            LearnerSpec::Linear,
            LearnerSpec::Gbt(GbtParams::new(50, 0.1)),
            LearnerSpec::default_ensemble(),
        ] {
            let p = fit(&spec, &data).unwrap();
            for i in 0..data.n_rows() {
                assert_abs_diff_eq!(p.predict_row(data.row(i)).unwrap(), 3.25, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn linear_recovers_exact_plane() {
        // y = 2*x1 - x2 exactly; closed-form solution is (2, -1) with zero
        // intercept, so the fitted coefficients must match to 1e-8.
        let data = grid_xy(|x1, x2| 2.0 * x1 - x2, 120);
        let p = fit(&LearnerSpec::Linear, &data).unwrap();
        let Predictor::Linear(m) = &p else { panic!() };
        assert_abs_diff_eq!(m.coefs[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.coefs[1], -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.intercept, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn gbt_beats_mean_predictor_on_quadratic() {
        let data = grid_xy(|x1, _| x1 * x1, 500);
        let p = fit(&LearnerSpec::Gbt(GbtParams::new(200, 0.1)), &data).unwrap();
        let mean = (0..data.n_rows()).map(|i| data.target(i)).sum::<f64>() / 500.0;
        let (mut mse_fit, mut mse_mean) = (0.0, 0.0);
        for i in 0..data.n_rows() {
            let y = data.target(i);
            mse_fit += (y - p.predict_row(data.row(i)).unwrap()).powi(2);
            mse_mean += (y - mean).powi(2);
        }
        assert!(
            mse_fit < mse_mean,
            "boosting must beat the mean predictor: {mse_fit} vs {mse_mean}"
        );
    }

    #[test]
    fn gbt_train_loss_non_increasing() {
        let data = grid_xy(|x1, x2| x1 * x1 + 0.3 * x2, 300);
        let p = fit(&LearnerSpec::Gbt(GbtParams::new(100, 0.1)), &data).unwrap();
        let Predictor::Gbt(m) = &p else { panic!() };
        let losses = m.round_losses();
        assert_eq!(losses.len(), 100);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn wls_matches_normal_equations_oracle() {
        // Independent oracle: Gaussian elimination on the weighted normal
        // equations, written here without reference to the implementation.
        let n = 80;
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..n {
            let (x1, x2, x3) = (next() * 4.0, next() * 4.0, next() * 4.0);
            feats.extend_from_slice(&[x1, x2, x3]);
            ys.push(1.5 - 0.7 * x1 + 0.2 * x2 + 2.3 * x3 + next() * 0.1);
            ws.push(0.25 + (next() + 0.5).abs());
        }
        let data = Dataset::new(feats.clone(), 3, ys.clone(), ws.clone()).unwrap();
        let p = fit(&LearnerSpec::Linear, &data).unwrap();
        let Predictor::Linear(m) = &p else { panic!() };

        // oracle: solve (X'WX) b = X'Wy with X augmented by an intercept
        let d = 4;
        let mut g = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for i in 0..n {
            let row = [feats[3 * i], feats[3 * i + 1], feats[3 * i + 2], 1.0];
            for r in 0..d {
                for c in 0..d {
                    g[r * d + c] += ws[i] * row[r] * row[c];
                }
                b[r] += ws[i] * row[r] * ys[i];
            }
        }
        // Gaussian elimination with partial pivoting
        let mut aug: Vec<Vec<f64>> = (0..d)
            .map(|r| {
                let mut v: Vec<f64> = g[r * d..(r + 1) * d].to_vec();
                v.push(b[r]);
                v
            })
            .collect();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&a, &bb| aug[a][col].abs().total_cmp(&aug[bb][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            for r in 0..d {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for c in col..=d {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..d).map(|r| aug[r][d] / aug[r][r]).collect();

        for j in 0..3 {
            assert_abs_diff_eq!(m.coefs[j], sol[j], epsilon = 1e-8);
        }
        assert_abs_diff_eq!(m.intercept, sol[3], epsilon = 1e-8);
    }

    #[test]
    fn predict_width_mismatch() {
        let data = grid_xy(|x1, _| x1, 30);
        let p = fit(&LearnerSpec::Linear, &data).unwrap();
        assert!(matches!(
            p.predict_row(&[1.0]),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn linear_predictor_arithmetic() {
        let m = LinearModel {
            intercept: 0.0,
            coefs: vec![2.0, -1.0],
        };
        assert_eq!(m.predict_row(&[1.0, 1.0]), 1.0);
    }

    #[test]
    fn ensemble_of_constants_is_convex_combination() {
        let m = EnsembleModel {
            members: vec![
                (0.3, Predictor::Constant(1.0)),
                (0.7, Predictor::Constant(5.0)),
            ],
        };
        assert_abs_diff_eq!(m.predict_row(&[0.0]), 0.3 + 0.7 * 5.0, epsilon = 1e-15);
    }

    #[test]
    fn ensemble_weights_on_simplex() {
        let data = grid_xy(|x1, x2| x1 * x1 - x2, 200);
        let p = fit(&LearnerSpec::default_ensemble(), &data).unwrap();
        let Predictor::Ensemble(m) = &p else { panic!() };
        let sum: f64 = m.members.iter().map(|(w, _)| w).sum();
        assert!(m.members.iter().all(|(w, _)| *w >= 0.0));
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn determinism_bit_identical() {
        let data = grid_xy(|x1, x2| x1 * x1 + x2, 150);
        let p1 = fit(&LearnerSpec::default_ensemble(), &data).unwrap();
        let p2 = fit(&LearnerSpec::default_ensemble(), &data).unwrap();
        for i in 0..data.n_rows() {
            let a = p1.predict_row(data.row(i)).unwrap();
            let b = p2.predict_row(data.row(i)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn degenerate_and_empty() {
        assert!(matches!(
            Dataset::unweighted(vec![], 2, vec![]),
            Err(Error::EmptyData)
        ));
        // 5 rows, 12 columns: underdetermined
        let feats = vec![0.5; 5 * 12];
        let data = Dataset::unweighted(feats, 12, vec![1.0; 5]).unwrap();
        assert!(matches!(
            fit(&LearnerSpec::Linear, &data),
            Err(Error::DegenerateDesign(_))
        ));
    }
}
