//! Polygon layer ingestion: ESRI `.shp` main files, WKT text and geometry
//! normalization ahead of gridding.

mod shapefile;
mod wkt;

pub use shapefile::{parse_shapefile, write_shapefile, FILE_CODE, SHAPE_NULL, SHAPE_POLYGON, VERSION};
pub use wkt::parse_wkt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fix_polygon, BBox, Polygon};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("bad file code {found} (expected 9994)")]
    BadMagic { found: i32 },
    #[error("header truncated: {len} bytes, need 100")]
    TruncatedHeader { len: usize },
    #[error("unsupported shape type {shape_type} (record {record:?})")]
    UnsupportedShapeType { shape_type: i32, record: Option<i32> },
    #[error("record {record} truncated at byte {offset}")]
    TruncatedRecord { record: i32, offset: usize },
    #[error("record number {found} does not follow {previous}")]
    NonMonotoneRecordNumbers { previous: i32, found: i32 },
    #[error("record {record} malformed: {reason}")]
    MalformedRecord { record: i32, reason: String },
    #[error("invalid coordinate ({lon}, {lat}) in record {record}")]
    InvalidCoordinate { record: i32, lon: f64, lat: f64 },
    #[error("WKT syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("ring starting at byte {offset} has fewer than 3 distinct vertices")]
    EmptyRing { offset: usize },
    #[error("every ring of the polygon is degenerate")]
    AllRingsDegenerate,
}

/// All polygons of one year's layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorLayer<T> {
    pub year: i32,
    pub polygons: Vec<Polygon<T>>,
    pub source_bbox: BBox<T>,
}

impl<T: Real> VectorLayer<T> {
    pub fn new(year: i32, polygons: Vec<Polygon<T>>) -> Self {
        let source_bbox = polygons.iter().fold(BBox::empty(), |b, p| b.union(&p.bbox()));
        Self { year, polygons, source_bbox }
    }

    pub fn total_area(&self) -> T {
        self.polygons.iter().map(Polygon::area).fold(T::zero(), |a, b| a + b)
    }
}

/// Normalizes one polygon; see [`fix_polygon`].
pub fn fix_geometry<T: Real>(polygon: &Polygon<T>) -> Result<Polygon<T>, IngestError> {
    fix_polygon(polygon).ok_or(IngestError::AllRingsDegenerate)
}

/// What layer-level fixing changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixReport {
    pub input_polygons: usize,
    pub dropped_polygons: usize,
    pub dropped_holes: usize,
    /// Rings with crossing edges. Counted, not repaired.
    pub self_intersecting_rings: usize,
}

/// Fixes every polygon of a layer, dropping the fully degenerate ones.
pub fn fix_layer<T: Real>(layer: &VectorLayer<T>) -> (VectorLayer<T>, FixReport) {
    let mut report = FixReport { input_polygons: layer.polygons.len(), ..Default::default() };
    let mut out = Vec::with_capacity(layer.polygons.len());
    for p in &layer.polygons {
        match fix_polygon(p) {
            Some(fixed) => {
                report.dropped_holes += p.holes.len() - fixed.holes.len();
                report.self_intersecting_rings +=
                    fixed.rings().filter(|r| r.count_self_intersections() > 0).count();
                out.push(fixed);
            }
            None => report.dropped_polygons += 1,
        }
    }
    (VectorLayer::new(layer.year, out), report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fix_layer_drops_degenerate_polygons() {
        let good = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let flat = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let bowtie = Polygon::from_coords(&[(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 3.0)]);
        let layer = VectorLayer::new(2016, vec![good, flat, bowtie]);
        let (fixed, report) = fix_layer(&layer);
        assert_eq!(fixed.polygons.len(), 2);
        assert_eq!(report.dropped_polygons, 1);
        assert_eq!(report.self_intersecting_rings, 1);
    }

    #[test]
    fn fix_geometry_reports_degenerate() {
        let flat = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 0.0)]);
        assert_eq!(fix_geometry(&flat), Err(IngestError::AllRingsDegenerate));
    }

    #[test]
    fn source_bbox_covers_vertices() {
        let a = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let b = Polygon::from_coords(&[(-3.0, 2.0), (-2.0, 2.0), (-2.0, 5.0)]);
        let layer = VectorLayer::new(2007, vec![a, b]);
        assert_eq!(layer.source_bbox, BBox { min_lon: -3.0, min_lat: 0.0, max_lon: 1.0, max_lat: 5.0 });
    }
}
