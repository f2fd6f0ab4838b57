use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::features::{rfe, zero_variance_columns, PcaModel, ScalerParams};
use crate::linalg::Matrix;

/// Model input: standardized predictors, an RFE subset of them, or their
/// leading principal components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputVariant {
    Scaled,
    Rfe { n_select: usize },
    Pca { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage {
    Identity,
    Select { columns: Vec<usize> },
    Pca { model: PcaModel<f64>, k: usize },
}

/// Training-split preprocessing, replayed unchanged on any later rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub variant: InputVariant,
    pub input_columns: Vec<String>,
    /// Input columns kept after dropping zero-variance ones.
    pub kept: Vec<usize>,
    pub scaler: ScalerParams<f64>,
    pub stage: Stage,
}

impl Preprocessor {
    pub fn fit(x: &Matrix<f64>, names: &[String], y: &[f64], variant: InputVariant) -> Result<Self, ModelError> {
        if names.len() != x.cols() {
            return Err(ModelError::Shape("column names".into()));
        }
        let constant = zero_variance_columns(x);
        let kept: Vec<usize> = (0..x.cols()).filter(|j| !constant.contains(j)).collect();
        let xk = x.select_columns(&kept);
        let scaler = ScalerParams::fit(&xk)?;
        let z = scaler.apply(&xk);
        let stage = match variant {
            InputVariant::Scaled => Stage::Identity,
            InputVariant::Rfe { n_select } => {
                if n_select >= kept.len() {
                    Stage::Identity
                } else {
                    Stage::Select { columns: rfe(&z, y, n_select)?.selected }
                }
            }
            InputVariant::Pca { threshold } => {
                let model = PcaModel::fit(&z)?;
                let k = model.select(threshold);
                Stage::Pca { model, k }
            }
        };
        Ok(Self { variant, input_columns: names.to_vec(), kept, scaler, stage })
    }

    pub fn transform(&self, x: &Matrix<f64>) -> Matrix<f64> {
        let z = self.scaler.apply(&x.select_columns(&self.kept));
        match &self.stage {
            Stage::Identity => z,
            Stage::Select { columns } => z.select_columns(columns),
            Stage::Pca { model, k } => model.transform(&z, *k),
        }
    }

    pub fn output_names(&self) -> Vec<String> {
        let kept: Vec<String> = self.kept.iter().map(|&j| self.input_columns[j].clone()).collect();
        match &self.stage {
            Stage::Identity => kept,
            Stage::Select { columns } => columns.iter().map(|&j| kept[j].clone()).collect(),
            Stage::Pca { k, .. } => (1..=*k).map(|c| format!("pc{c}")).collect(),
        }
    }

    /// `scaled`, `rfe<n>` or `pca<k>`.
    pub fn label(&self) -> String {
        match (&self.variant, &self.stage) {
            (InputVariant::Scaled, _) => "scaled".into(),
            (InputVariant::Rfe { n_select }, _) => format!("rfe{n_select}"),
            (InputVariant::Pca { .. }, Stage::Pca { k, .. }) => format!("pca{k}"),
            (InputVariant::Pca { .. }, _) => "pca".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn constant_column_dropped_before_scaling() {
        let x = Matrix::from_rows(&[[1.0, 5.0, 0.0], [2.0, 5.0, 1.0], [3.0, 5.0, 5.0]]).unwrap();
        let p = Preprocessor::fit(&x, &names(3), &[1.0, 2.0, 3.0], InputVariant::Scaled).unwrap();
        assert_eq!(p.kept, vec![0, 2]);
        assert_eq!(p.output_names(), vec!["x0", "x2"]);
        assert_eq!(p.transform(&x).cols(), 2);
    }

    #[test]
    fn pca_label_carries_k() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.1], [3.0, 5.9], [4.0, 8.0]]).unwrap();
        let p = Preprocessor::fit(&x, &names(2), &[0.0; 4], InputVariant::Pca { threshold: 0.69 }).unwrap();
        assert_eq!(p.label(), "pca1");
    }
}
