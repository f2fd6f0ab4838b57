use serde::{Deserialize, Serialize};

use super::{ModelArtifact, ModelError};
use crate::features::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub cell_id: u64,
    /// Year being predicted.
    pub year: i32,
    pub area: f64,
    pub predicted: f64,
    pub change: f64,
    /// Predicted area below zero; kept as is.
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub rows: Vec<ForecastRow>,
    pub mean_change: f64,
    pub n_negative: usize,
}

impl Forecast {
    pub fn from_predictions(frame: &FeatureTable, predicted: &[f64]) -> Result<Self, ModelError> {
        let j = frame.column_index("area").ok_or_else(|| ModelError::Shape("frame has no area column".into()))?;
        if predicted.len() != frame.n_rows() || predicted.is_empty() {
            return Err(ModelError::Shape(format!("{} predictions for {} rows", predicted.len(), frame.n_rows())));
        }
        let rows: Vec<ForecastRow> = (0..frame.n_rows())
            .map(|i| {
                let area = frame.x[(i, j)];
                ForecastRow {
                    cell_id: frame.cell_ids[i],
                    year: frame.years[i] + 1,
                    area,
                    predicted: predicted[i],
                    change: predicted[i] - area,
                    negative: predicted[i] < 0.0,
                }
            })
            .collect();
        let mean_change = rows.iter().map(|r| r.change).sum::<f64>() / rows.len() as f64;
        let n_negative = rows.iter().filter(|r| r.negative).count();
        Ok(Self { rows, mean_change, n_negative })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_id,year,area,predicted,change,negative\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.cell_id, r.year, r.area, r.predicted, r.change, r.negative));
        }
        out
    }
}

/// One-step forecast from final-year rows (raw features, areas scaled as
/// in training).
pub fn forecast_next_year(model: &ModelArtifact, frame: &FeatureTable) -> Result<Forecast, ModelError> {
    Forecast::from_predictions(frame, &model.predict_raw(&frame.x))
}
