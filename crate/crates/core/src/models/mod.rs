//! Regressors, cross-validation, conformal intervals, Shapley attribution
//! and forecasting.
//!
//! Models work on `f64` feature matrices that have already been through a
//! [`Preprocessor`]; targets are left in their original units.

mod cqr;
mod cv;
mod forecast;
mod linear;
mod metrics;
mod prep;
mod shapley;
mod svr;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;
use crate::linalg::{LinalgError, Matrix};

pub use cqr::{coverage, cqr_calibrate, cqr_intervals, PredictionInterval};
pub use cv::{
    grid_search_svr, kfold_assignments, learning_curve, repeated_kfold, FoldScore, GridCell, GridSearch,
    LearningPoint, ScoreReport, SvrGrid,
};
pub use forecast::{forecast_next_year, Forecast, ForecastRow};
pub use linear::{fit_ols, LinearModel};
pub use metrics::{mae, metrics, mse, r2, Metrics};
pub use prep::{InputVariant, Preprocessor};
pub use shapley::{shapley_exact, Shapley, MAX_SHAPLEY_FEATURES};
pub use svr::{default_max_updates, fit_svr, fit_svr_capped, kernel_value, kkt_violation, Kernel, SvrModel, SvrParams, KKT_TOL, MIN_UPDATES};
pub use tree::{
    fit_gbt, fit_quantile_gbt, fit_rf, pinball_loss, BinnedData, GbtModel, GbtParams, Loss, RfModel, RfParams, Tree,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("no convergence after {iterations} iterations (KKT violation {violation:.3e})")]
    NoConvergence { iterations: usize, violation: f64 },
    #[error("calibration set too small: rank {rank} exceeds {n} scores")]
    CalibrationTooSmall { rank: usize, n: usize },
    #[error("exact Shapley limited to {max} features, got {d}")]
    TooManyFeatures { d: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad model artifact: {0}")]
    BadArtifact(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl From<LinalgError> for ModelError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::RankDeficient { column } => ModelError::RankDeficient { column },
            LinalgError::TooFewRows { needed, got } => ModelError::TooFewRows { needed, got },
            LinalgError::Shape(s) => ModelError::Shape(s),
        }
    }
}

pub trait Regressor: Send + Sync {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &Matrix<f64>) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// What to fit. The seed is supplied at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Ols,
    Svr(SvrParams),
    Gbt(GbtParams),
    Rf(RfParams),
    QuantileGbt { params: GbtParams, tau: f64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ols => "ols",
            ModelSpec::Svr(_) => "svr",
            ModelSpec::Gbt(_) => "gbt",
            ModelSpec::Rf(_) => "rf",
            ModelSpec::QuantileGbt { .. } => "quantile_gbt",
        }
    }

    pub fn fit(&self, x: &Matrix<f64>, y: &[f64], seed: u64) -> Result<FittedModel, ModelError> {
        Ok(match self {
            ModelSpec::Ols => FittedModel::Ols(fit_ols(x, y)?),
            ModelSpec::Svr(p) => FittedModel::Svr(fit_svr(x, y, p)?),
            ModelSpec::Gbt(p) => FittedModel::Gbt(fit_gbt(x, y, p)?),
            ModelSpec::Rf(p) => FittedModel::Rf(fit_rf(x, y, p, seed)?),
            ModelSpec::QuantileGbt { params, tau } => FittedModel::Gbt(fit_quantile_gbt(x, y, *tau, params)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Ols(LinearModel),
    Svr(SvrModel),
    Gbt(GbtModel),
    Rf(RfModel),
}

impl Regressor for FittedModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Ols(m) => m.predict_row(x),
            FittedModel::Svr(m) => m.predict_row(x),
            FittedModel::Gbt(m) => m.predict_row(x),
            FittedModel::Rf(m) => m.predict_row(x),
        }
    }
}

pub const ARTIFACT_MAGIC: &str = "mangrove-model";
pub const SCHEMA_VERSION: u32 = 1;

/// Self-describing JSON model file: preprocessing plus fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub magic: String,
    pub schema_version: u32,
    pub spec: ModelSpec,
    pub preprocessor: Preprocessor,
    pub model: FittedModel,
}

impl ModelArtifact {
    pub fn new(spec: ModelSpec, preprocessor: Preprocessor, model: FittedModel) -> Self {
        Self { magic: ARTIFACT_MAGIC.into(), schema_version: SCHEMA_VERSION, spec, preprocessor, model }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::BadArtifact(e.to_string()))?;
        if v.get("magic").and_then(|m| m.as_str()) != Some(ARTIFACT_MAGIC) {
            return Err(ModelError::BadArtifact("missing magic".into()));
        }
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(s) if s == u64::from(SCHEMA_VERSION) => {}
            other => return Err(ModelError::BadArtifact(format!("unsupported schema version {other:?}"))),
        }
        serde_json::from_value(v).map_err(|e| ModelError::BadArtifact(e.to_string()))
    }

    /// Predictions for raw (unpreprocessed) feature rows.
    pub fn predict_raw(&self, x: &Matrix<f64>) -> Vec<f64> {
        self.model.predict(&self.preprocessor.transform(x))
    }
}
