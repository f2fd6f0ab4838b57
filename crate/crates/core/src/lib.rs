//! Gridded coastal-vegetation forecasting.
//!
//! Polygon layers are parsed ([`ingest`]), aggregated onto a fixed lon/lat
//! grid ([`grid`]), assembled into a yearly per-cell panel ([`panel`]),
//! joined with 1° climate grids ([`ecv`]) and turned into a feature table
//! ([`features`]) on which regression models are fitted, compared and
//! explained ([`models`], [`stats`]).
//!
//! Geometry, grid and linear-algebra code is generic over [`Real`]
//! (`f32`/`f64`); the aliases below fix the scalar to `f64`.

pub mod ecv;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod panel;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod workflow;

pub use scalar::Real;

pub type Vertex = geometry::Vertex<f64>;
pub type Ring = geometry::Ring<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type BBox = geometry::BBox<f64>;
pub type VectorLayer = ingest::VectorLayer<f64>;
pub type Bounds = grid::Bounds<f64>;
pub type GridSpec = grid::GridSpec<f64>;
pub type Cell = grid::Cell<f64>;
pub type CellYearRecord = grid::CellYearRecord<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type ScalerParams = features::ScalerParams<f64>;
pub type PcaModel = features::PcaModel<f64>;

use thiserror::Error;

/// Any failure surfaced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    Panel(#[from] panel::PanelError),
    #[error(transparent)]
    Ecv(#[from] ecv::EcvError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
