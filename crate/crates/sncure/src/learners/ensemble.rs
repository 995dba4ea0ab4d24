//! Convex stacking: member models are combined with nonnegative weights
//! summing to one, chosen to minimize V-fold cross-validated weighted MSE.
//! The simplex program is solved by pairwise coordinate descent, which is
//! exact for the quadratic objective and fully deterministic.

use super::{fit, Dataset, LearnerSpec, Predictor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const CV_FOLDS: usize = 5;
const DESCENT_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    /// `(weight, member)` pairs; weights are nonnegative and sum to one.
    pub members: Vec<(f64, Predictor)>,
}

impl EnsembleModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|(w, p)| w * p.predict_row_unchecked(row))
            .sum()
    }
}

pub(super) fn fit_ensemble(specs: &[LearnerSpec], data: &Dataset) -> Result<EnsembleModel> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("ensemble with no members".into()));
    }
    if specs
        .iter()
        .any(|s| matches!(s, LearnerSpec::Ensemble(_)))
    {
        return Err(Error::InvalidConfig("nested ensembles not supported".into()));
    }
    let n = data.n_rows();
    let folds = CV_FOLDS.min(n);

    // out-of-fold predictions per member; members whose fit fails on any
    // fold are dropped from the stack
    let mut oof: Vec<Option<Vec<f64>>> = vec![Some(vec![0.0; n]); specs.len()];
    let mut first_err: Option<Error> = None;
    if folds >= 2 {
        for v in 0..folds {
            let train: Vec<usize> = (0..n).filter(|i| i % folds != v).collect();
            let valid: Vec<usize> = (0..n).filter(|i| i % folds == v).collect();
            let train_data = data.subset(&train)?;
            for (j, spec) in specs.iter().enumerate() {
                if oof[j].is_none() {
                    continue;
                }
                match fit(spec, &train_data) {
                    Ok(p) => {
                        let preds = oof[j].as_mut().unwrap();
                        for &i in &valid {
                            preds[i] = p.predict_row_unchecked(data.row(i));
                        }
                    }
                    Err(e) => {
                        if first_err.is_none() {
                            first_err = Some(e);
                        }
                        oof[j] = None;
                    }
                }
            }
        }
    } else {
        // a single usable fold: stack on in-sample predictions
        for (j, spec) in specs.iter().enumerate() {
            match fit(spec, data) {
                Ok(p) => {
                    let preds = oof[j].as_mut().unwrap();
                    for i in 0..n {
                        preds[i] = p.predict_row_unchecked(data.row(i));
                    }
                }
                Err(e) => {
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                    oof[j] = None;
                }
            }
        }
    }

    let alive: Vec<usize> = (0..specs.len()).filter(|&j| oof[j].is_some()).collect();
    if alive.is_empty() {
        return Err(first_err.unwrap_or(Error::EmptyData));
    }

    let preds: Vec<&[f64]> = alive.iter().map(|&j| oof[j].as_deref().unwrap()).collect();
    let weights = simplex_weights(data, &preds);

    let mut members = Vec::with_capacity(alive.len());
    for (slot, &j) in alive.iter().enumerate() {
        let p = fit(&specs[j], data)?;
        members.push((weights[slot], p));
    }
    debug_assert!({
        let s: f64 = members.iter().map(|(w, _)| w).sum();
        (s - 1.0).abs() < 1e-9 && members.iter().all(|(w, _)| *w >= 0.0)
    });
    Ok(EnsembleModel { members })
}

/// Minimize sum_i w_i (y_i - sum_j c_j p_ji)^2 over the probability simplex.
fn simplex_weights(data: &Dataset, preds: &[&[f64]]) -> Vec<f64> {
    let m = preds.len();
    let n = data.n_rows();
    if m == 1 {
        return vec![1.0];
    }
    let mut c = vec![1.0 / m as f64; m];
    let mut resid: Vec<f64> = (0..n)
        .map(|i| {
            data.target(i) - c.iter().zip(preds).map(|(cj, pj)| cj * pj[i]).sum::<f64>()
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut max_step = 0.0f64;
        for a in 0..m {
            for b in a + 1..m {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    let d = preds[a][i] - preds[b][i];
                    let w = data.weight(i);
                    num += w * resid[i] * d;
                    den += w * d * d;
                }
                if den <= 0.0 {
                    continue;
                }
                // move delta of mass from member b to member a
                let delta = (num / den).clamp(-c[a], c[b]);
                if delta != 0.0 {
                    c[a] += delta;
                    c[b] -= delta;
                    for i in 0..n {
                        resid[i] -= delta * (preds[a][i] - preds[b][i]);
                    }
                    max_step = max_step.max(delta.abs());
                }
            }
        }
        if max_step < DESCENT_TOL {
            break;
        }
    }

    // guard against ulp drift off the simplex
    for cj in c.iter_mut() {
        *cj = cj.max(0.0);
    }
    let s: f64 = c.iter().sum();
    for cj in c.iter_mut() {
        *cj /= s;
    }
    c
}
