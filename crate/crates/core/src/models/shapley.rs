//! Exact Shapley attribution over all feature coalitions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelError, Regressor};
use crate::linalg::Matrix;

pub const MAX_SHAPLEY_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapley {
    pub phi: Vec<f64>,
    /// `v(empty)`: mean prediction over the background rows.
    pub base_value: f64,
    pub prediction: f64,
}

/// Value of coalition `S`: mean over background rows `b` of the model at
/// `x` on `S` and `b` elsewhere.
fn coalition_value<M: Regressor + ?Sized>(model: &M, x: &[f64], background: &Matrix<f64>, mask: usize) -> f64 {
    let mut row = vec![0.0; x.len()];
    let mut acc = 0.0;
    for b in background.row_iter() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if mask >> j & 1 == 1 { x[j] } else { b[j] };
        }
        acc += model.predict_row(&row);
    }
    acc / background.rows() as f64
}

pub fn shapley_exact<M: Regressor + ?Sized>(model: &M, x: &[f64], background: &Matrix<f64>) -> Result<Shapley, ModelError> {
    let d = x.len();
    if d > MAX_SHAPLEY_FEATURES {
        return Err(ModelError::TooManyFeatures { d, max: MAX_SHAPLEY_FEATURES });
    }
    if background.cols() != d || background.rows() == 0 {
        return Err(ModelError::Shape(format!("background {}x{} for {d} features", background.rows(), background.cols())));
    }
    let values: Vec<f64> = (0..1usize << d).into_par_iter().map(|m| coalition_value(model, x, background, m)).collect();
    let mut fact = vec![1.0_f64; d + 1];
    for k in 1..=d {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - 1 - s] / fact[d]).collect();
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in (0..1usize << d).filter(|m| m & bit == 0) {
            *p += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(Shapley { phi, base_value: values[0], prediction: values[(1 << d) - 1] })
}
