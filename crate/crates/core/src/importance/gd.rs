use serde::{Deserialize, Serialize};

use super::{ImportanceMethod, ImportanceVector};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_GD_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_GD_ITERATIONS: usize = 10;

/// State of the linear-weight descent after the last iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdState {
    pub theta: Vec<f64>,
    pub eta: f64,
    pub iterations: usize,
    /// Sanitized gradient of the last iteration.
    pub gradient: Vec<f64>,
    /// Mean squared error evaluated before the last update.
    pub objective: f64,
}

impl GdState {
    pub fn importance(&self) -> ImportanceVector {
        ImportanceVector::from_raw(ImportanceMethod::Gd, &self.theta)
    }
}

/// Replaces non-finite components with zero, then clips to `[-1, 1]`.
pub fn sanitize_gradient(gradient: &mut [f64]) {
    for g in gradient {
        if !g.is_finite() {
            *g = 0.0;
        }
        *g = g.clamp(-1.0, 1.0);
    }
}

/// Runs `iterations` steps of `theta -= eta * clip(2/N X^T (X theta - y))`
/// from `theta = 1`.
pub fn gd_fit(x: &FeatureMatrix, y: &[f64], eta: f64, iterations: usize) -> Result<GdState> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let n = y.len() as f64;
    let f = x.n_cols();
    let mut state = GdState {
        theta: vec![1.0; f],
        eta,
        iterations,
        gradient: vec![0.0; f],
        objective: f64::NAN,
    };
    for _ in 0..iterations {
        state.gradient.iter_mut().for_each(|g| *g = 0.0);
        let mut sse = 0.0;
        for (row, &target) in x.rows().zip(y) {
            let pred: f64 = row.iter().zip(&state.theta).map(|(a, b)| a * b).sum();
            let err = pred - target;
            sse += err * err;
            for (g, &xij) in state.gradient.iter_mut().zip(row) {
                *g += xij * err;
            }
        }
        state.objective = sse / n;
        state.gradient.iter_mut().for_each(|g| *g *= 2.0 / n);
        sanitize_gradient(&mut state.gradient);
        for (t, g) in state.theta.iter_mut().zip(&state.gradient) {
            *t -= eta * g;
        }
    }
    Ok(state)
}

pub fn gd_importance(x: &FeatureMatrix, y: &[f64], eta: f64, iterations: usize) -> Result<ImportanceVector> {
    Ok(gd_fit(x, y, eta, iterations)?.importance())
}
