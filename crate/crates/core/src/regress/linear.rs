//! Ordinary least squares via jittered normal equations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::error::{Error, Result};

/// Ridge jitter added to the Gram diagonal.
pub const RIDGE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub normalize: bool,
    /// Per-feature `(mean, stdev)` used to z-score inputs when `normalize`.
    pub scaling: Option<Vec<(f64, f64)>>,
}

fn zscore(v: f64, (mean, sd): (f64, f64)) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        (v - mean) / sd
    }
}

pub fn fit_linear(x: &[Vec<f64>], y: &[f64], normalize: bool) -> Result<LinearModel> {
    let p = check_xy(x, y)?;
    let n = x.len();

    let scaling = normalize.then(|| {
        (0..p)
            .map(|j| {
                let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
                (mean, var.sqrt())
            })
            .collect::<Vec<_>>()
    });
    let design: Vec<Vec<f64>> = match &scaling {
        Some(s) => x
            .iter()
            .map(|r| r.iter().zip(s).map(|(&v, &sc)| zscore(v, sc)).collect())
            .collect(),
        None => x.to_vec(),
    };

    // Centering leaves the intercept unpenalized.
    let col_mean: Vec<f64> = (0..p)
        .map(|j| design.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| design[i][j] - col_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let w = if p <= n {
        let mut gram = xc.transpose() * &xc;
        for d in 0..p {
            gram[(d, d)] += RIDGE_JITTER;
        }
        solve_spd(gram, xc.transpose() * &yc)?
    } else {
        // (X'X + λI)^-1 X'y == X'(XX' + λI)^-1 y; the n×n system is smaller.
        let mut gram = &xc * xc.transpose();
        for d in 0..n {
            gram[(d, d)] += RIDGE_JITTER;
        }
        xc.transpose() * solve_spd(gram, yc)?
    };

    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean
        - weights
            .iter()
            .zip(&col_mean)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(LinearModel {
        weights,
        intercept,
        normalize,
        scaling,
    })
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    match a.clone().cholesky() {
        Some(c) => Ok(c.solve(&b)),
        None => a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular normal equations".into())),
    }
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        let dot: f64 = match &self.scaling {
            Some(s) => x
                .iter()
                .zip(s)
                .zip(&self.weights)
                .map(|((&v, &sc), w)| zscore(v, sc) * w)
                .sum(),
            None => x.iter().zip(&self.weights).map(|(v, w)| v * w).sum(),
        };
        Ok(dot + self.intercept)
    }
}
