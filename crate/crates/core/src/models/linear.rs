use serde::{Deserialize, Serialize};

use super::{ModelError, Regressor};
use crate::linalg::{dot, lstsq_qr, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl Regressor for LinearModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coef, x)
    }
}

/// Ordinary least squares with intercept via Householder QR.
pub fn fit_ols(x: &Matrix<f64>, y: &[f64]) -> Result<LinearModel, ModelError> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < d + 1 {
        return Err(ModelError::TooFewRows { needed: d + 1, got: n });
    }
    let design = Matrix::from_vec(n, 1, vec![1.0; n])?.hstack(x)?;
    let beta = lstsq_qr(&design, y)?;
    Ok(LinearModel { intercept: beta[0], coef: beta[1..].to_vec() })
}
