//! Analysis grid generation and polygon/grid intersection.
//!
//! The grid tiles a lon/lat bounding box with square cells in planar degree
//! space, numbered row-major from the south-west corner
//! (`cell_id = row * n_cols + col`). Polygons are binned to candidate cells
//! by their bounding box and clipped against each candidate with
//! Sutherland–Hodgman. Per-cell sums are accumulated in polygon order, so
//! results do not depend on the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Polygon, Ring, Vertex};
use crate::ingest::VectorLayer;
use crate::scalar::{ceil_tolerant, Real};

/// Kilometres per degree used to turn the 100 km cell side into degrees.
pub const KM_PER_DEGREE: f64 = 111.0;
/// Side of a 10 000 km² cell, in degrees.
pub const DEFAULT_CELL_SIDE: f64 = 100.0 / KM_PER_DEGREE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("degenerate bounds: lon [{min_lon}, {max_lon}], lat [{min_lat}, {max_lat}]")]
    DegenerateBounds { min_lon: f64, max_lon: f64, min_lat: f64, max_lat: f64 },
    #[error("cell side must be positive and finite, got {0}")]
    InvalidCellSide(f64),
    #[error("cell id {0} outside grid")]
    UnknownCell(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub min_lon: T,
    pub max_lon: T,
    pub min_lat: T,
    pub max_lat: T,
}

impl<T: Real> Bounds<T> {
    pub fn new(min_lon: T, max_lon: T, min_lat: T, max_lat: T) -> Self {
        Self { min_lon, max_lon, min_lat, max_lat }
    }

    /// Extent of the global mangrove layers.
    pub fn mangrove_extent() -> Self {
        Self::new(T::lit(-175.339555556), T::lit(179.979555556), T::lit(-38.856666667), T::lit(33.799333333))
    }

    pub fn translated(&self, dlon: T, dlat: T) -> Self {
        Self::new(self.min_lon + dlon, self.max_lon + dlon, self.min_lat + dlat, self.max_lat + dlat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell<T> {
    pub cell_id: u64,
    pub col: usize,
    pub row: usize,
    pub left: T,
    pub right: T,
    pub bottom: T,
    pub top: T,
}

impl<T: Real> Cell<T> {
    pub fn center(&self) -> Vertex<T> {
        let two = T::lit(2.0);
        Vertex::new((self.left + self.right) / two, (self.bottom + self.top) / two)
    }

    pub fn bbox(&self) -> BBox<T> {
        BBox { min_lon: self.left, min_lat: self.bottom, max_lon: self.right, max_lat: self.top }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub bounds: Bounds<T>,
    pub cell_side: T,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn generate(bounds: Bounds<T>, cell_side: T) -> Result<Self, GridError> {
        let b = bounds;
        if !(cell_side.is_finite() && cell_side > T::zero()) {
            return Err(GridError::InvalidCellSide(cell_side.to_f64_lossy()));
        }
        let ordered = b.min_lon < b.max_lon && b.min_lat < b.max_lat;
        let finite = [b.min_lon, b.max_lon, b.min_lat, b.max_lat].iter().all(|v| v.is_finite());
        if !ordered || !finite {
            return Err(GridError::DegenerateBounds {
                min_lon: b.min_lon.to_f64_lossy(),
                max_lon: b.max_lon.to_f64_lossy(),
                min_lat: b.min_lat.to_f64_lossy(),
                max_lat: b.max_lat.to_f64_lossy(),
            });
        }
        let n_cols = ceil_tolerant((b.max_lon - b.min_lon) / cell_side).to_usize().unwrap_or(0).max(1);
        let n_rows = ceil_tolerant((b.max_lat - b.min_lat) / cell_side).to_usize().unwrap_or(0).max(1);
        Ok(Self { bounds, cell_side, n_cols, n_rows })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn cell_at(&self, col: usize, row: usize) -> Cell<T> {
        let side = self.cell_side;
        let left = self.bounds.min_lon + T::from_usize(col).unwrap() * side;
        let bottom = self.bounds.min_lat + T::from_usize(row).unwrap() * side;
        Cell {
            cell_id: (row * self.n_cols + col) as u64,
            col,
            row,
            left,
            right: (left + side).min(self.bounds.max_lon),
            bottom,
            top: (bottom + side).min(self.bounds.max_lat),
        }
    }

    pub fn cell(&self, cell_id: u64) -> Result<Cell<T>, GridError> {
        let id = cell_id as usize;
        if id >= self.n_cells() {
            return Err(GridError::UnknownCell(cell_id));
        }
        Ok(self.cell_at(id % self.n_cols, id / self.n_cols))
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell<T>> + '_ {
        (0..self.n_rows).flat_map(move |r| (0..self.n_cols).map(move |c| self.cell_at(c, r)))
    }

    fn axis_index(&self, v: T, min: T, n: usize) -> usize {
        let k = ((v - min) / self.cell_side).floor();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(n - 1)
        }
    }

    /// Inclusive column and row ranges whose cells may overlap `bbox`.
    ///
    /// Padded by one cell on each side so floor-rounding at cell edges
    /// never drops a candidate; exact rejection happens per cell.
    pub fn candidate_range(&self, bbox: &BBox<T>) -> Option<((usize, usize), (usize, usize))> {
        let b = &self.bounds;
        if bbox.is_empty()
            || bbox.max_lon < b.min_lon
            || bbox.min_lon > b.max_lon
            || bbox.max_lat < b.min_lat
            || bbox.min_lat > b.max_lat
        {
            return None;
        }
        let c0 = self.axis_index(bbox.min_lon, b.min_lon, self.n_cols).saturating_sub(1);
        let c1 = (self.axis_index(bbox.max_lon, b.min_lon, self.n_cols) + 1).min(self.n_cols - 1);
        let r0 = self.axis_index(bbox.min_lat, b.min_lat, self.n_rows).saturating_sub(1);
        let r1 = (self.axis_index(bbox.max_lat, b.min_lat, self.n_rows) + 1).min(self.n_rows - 1);
        Some(((c0, c1), (r0, r1)))
    }
}

/// Per-(cell, year) aggregate; column order matches the CSV artifact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellYearRecord<T> {
    pub cell_id: u64,
    pub year: i32,
    pub left: T,
    pub top: T,
    pub bottom: T,
    pub right: T,
    pub area: T,
    pub perimeter: T,
}

impl<T: Real> CellYearRecord<T> {
    pub fn from_cell(cell: &Cell<T>, year: i32, area: T, perimeter: T) -> Self {
        Self { cell_id: cell.cell_id, year, left: cell.left, top: cell.top, bottom: cell.bottom, right: cell.right, area, perimeter }
    }
}

/// Sutherland–Hodgman clip of an open vertex list against an axis-aligned
/// rectangle. Returns the open clipped list (possibly empty).
pub fn clip_ring_to_rect<T: Real>(open: &[Vertex<T>], rect: &BBox<T>) -> Vec<Vertex<T>> {
    #[derive(Clone, Copy)]
    enum Edge {
        Left,
        Right,
        Bottom,
        Top,
    }
    let inside = |e: Edge, p: Vertex<T>| match e {
        Edge::Left => p.lon >= rect.min_lon,
        Edge::Right => p.lon <= rect.max_lon,
        Edge::Bottom => p.lat >= rect.min_lat,
        Edge::Top => p.lat <= rect.max_lat,
    };
    // crossing point of segment a→b with the edge line, snapped onto the line
    let cross = |e: Edge, a: Vertex<T>, b: Vertex<T>| match e {
        Edge::Left | Edge::Right => {
            let x = if matches!(e, Edge::Left) { rect.min_lon } else { rect.max_lon };
            let t = (x - a.lon) / (b.lon - a.lon);
            Vertex::new(x, a.lat + t * (b.lat - a.lat))
        }
        Edge::Bottom | Edge::Top => {
            let y = if matches!(e, Edge::Bottom) { rect.min_lat } else { rect.max_lat };
            let t = (y - a.lat) / (b.lat - a.lat);
            Vertex::new(a.lon + t * (b.lon - a.lon), y)
        }
    };

    let mut output: Vec<Vertex<T>> = open.to_vec();
    for e in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top] {
        if output.is_empty() {
            break;
        }
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_in = inside(e, prev);
        for &cur in &input {
            let cur_in = inside(e, cur);
            if cur_in {
                if !prev_in {
                    output.push(cross(e, prev, cur));
                }
                output.push(cur);
            } else if prev_in {
                output.push(cross(e, prev, cur));
            }
            prev = cur;
            prev_in = cur_in;
        }
    }
    output
}

fn clip_ring<T: Real>(ring: &Ring<T>, rect: &BBox<T>) -> Option<Ring<T>> {
    let mut open = clip_ring_to_rect(ring.open(), rect);
    open.dedup();
    while open.len() > 1 && open.first() == open.last() {
        open.pop();
    }
    if open.len() < 3 {
        return None;
    }
    let r = Ring::new(open);
    if r.signed_area() == T::zero() {
        return None;
    }
    Some(r)
}

/// Clips every ring of a polygon to `rect`. `None` when nothing of the
/// outer ring remains. Ring orientation is preserved.
pub fn clip_polygon_to_rect<T: Real>(polygon: &Polygon<T>, rect: &BBox<T>) -> Option<Polygon<T>> {
    let outer = clip_ring(&polygon.outer, rect)?;
    let holes = polygon.holes.iter().filter_map(|h| clip_ring(h, rect)).collect();
    Some(Polygon::new(outer, holes))
}

/// Area and perimeter that one fixed polygon contributes to one cell.
///
/// Area is the sum of signed clipped ring areas (outer positive, holes
/// negative). Perimeter is the length of the clipped rings, including the
/// edges created along the cell boundary.
pub fn cell_contribution<T: Real>(polygon: &Polygon<T>, cell: &Cell<T>) -> Option<(T, T)> {
    let rect = cell.bbox();
    let pb = polygon.bbox();
    if pb.max_lon <= rect.min_lon || pb.min_lon >= rect.max_lon || pb.max_lat <= rect.min_lat || pb.min_lat >= rect.max_lat {
        return None;
    }
    if rect.contains_bbox(&pb) {
        return Some((polygon.signed_area(), polygon.perimeter()));
    }
    // clip in the cell's own frame so rounding scales with the cell, not
    // with the distance from the origin
    let local = polygon.translated(-rect.min_lon, -rect.min_lat);
    let window = BBox {
        min_lon: T::zero(),
        min_lat: T::zero(),
        max_lon: rect.max_lon - rect.min_lon,
        max_lat: rect.max_lat - rect.min_lat,
    };
    let clipped = clip_polygon_to_rect(&local, &window)?;
    Some((clipped.signed_area(), clipped.perimeter()))
}

fn polygon_contributions<T: Real>(polygon: &Polygon<T>, grid: &GridSpec<T>) -> Vec<(u64, T, T)> {
    let Some(((c0, c1), (r0, r1))) = grid.candidate_range(&polygon.bbox()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            let cell = grid.cell_at(col, row);
            if let Some((a, p)) = cell_contribution(polygon, &cell) {
                out.push((cell.cell_id, a, p));
            }
        }
    }
    out
}

/// Folds per-polygon contributions (in polygon order) into sorted records.
pub fn accumulate_records<T: Real>(
    grid: &GridSpec<T>,
    year: i32,
    contributions: impl IntoIterator<Item = (u64, T, T)>,
) -> Vec<CellYearRecord<T>> {
    let mut sums: BTreeMap<u64, (T, T)> = BTreeMap::new();
    for (id, a, p) in contributions {
        let e = sums.entry(id).or_insert((T::zero(), T::zero()));
        e.0 = e.0 + a;
        e.1 = e.1 + p;
    }
    sums.into_iter()
        .map(|(id, (a, p))| {
            let cell = grid.cell(id).expect("contribution cell inside grid");
            CellYearRecord::from_cell(&cell, year, a.max(T::zero()), p.max(T::zero()))
        })
        .collect()
}

/// Intersects a fixed layer with the grid: one record per overlapped cell,
/// sorted by `cell_id`.
pub fn intersect_layer<T: Real>(layer: &VectorLayer<T>, grid: &GridSpec<T>) -> Vec<CellYearRecord<T>> {
    let per_polygon: Vec<Vec<(u64, T, T)>> =
        layer.polygons.par_iter().map(|p| polygon_contributions(p, grid)).collect();
    accumulate_records(grid, layer.year, per_polygon.into_iter().flatten())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Polygon<f64> {
        Polygon::from_coords(&[(x, y), (x + s, y), (x + s, y + s), (x, y + s)])
    }

    #[test]
    fn two_by_two_grid() {
        let g = GridSpec::generate(Bounds::new(0.0, 2.0, 0.0, 2.0), 1.0).unwrap();
        assert_eq!(g.n_cells(), 4);
        let ids: Vec<u64> = g.cells().map(|c| c.cell_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let c3 = g.cell(3).unwrap();
        assert_eq!((c3.left, c3.right, c3.bottom, c3.top), (1.0, 2.0, 1.0, 2.0));
    }

    #[test]
    fn single_cell_grid_equals_bounds() {
        let g = GridSpec::generate(Bounds::new(0.0, 1.0, 0.0, 1.0), 1.0).unwrap();
        assert_eq!(g.n_cells(), 1);
        let c = g.cell(0).unwrap();
        assert_eq!((c.left, c.right, c.bottom, c.top), (0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn mangrove_extent_grid_dimensions() {
        let g = GridSpec::generate(Bounds::mangrove_extent(), 0.900901).unwrap();
        assert_eq!((g.n_cols, g.n_rows), (395, 81));
        let g = GridSpec::generate(Bounds::<f64>::mangrove_extent(), DEFAULT_CELL_SIDE).unwrap();
        assert_eq!((g.n_cols, g.n_rows), (395, 81));
        let last = g.cell_at(394, 80);
        assert_eq!(last.right, 179.979555556);
        assert_eq!(last.top, 33.799333333);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(matches!(GridSpec::generate(Bounds::new(1.0, 1.0, 0.0, 2.0), 1.0), Err(GridError::DegenerateBounds { .. })));
        assert!(matches!(GridSpec::generate(Bounds::new(0.0, 1.0, 0.0, 2.0), 0.0), Err(GridError::InvalidCellSide(_))));
    }

    #[test]
    fn half_cut_of_unit_square() {
        let r = BBox { min_lon: 0.0, min_lat: 0.0, max_lon: 0.5, max_lat: 1.0 };
        let c = clip_polygon_to_rect(&square(0.0, 0.0, 1.0), &r).unwrap();
        assert_eq!(c.area(), 0.5);
        assert_eq!(c.perimeter(), 3.0);
    }

    #[test]
    fn square_centered_on_corner_splits_in_quarters() {
        let g = GridSpec::generate(Bounds::new(0.0, 2.0, 0.0, 2.0), 1.0).unwrap();
        let layer = VectorLayer::new(2000, vec![square(0.5, 0.5, 1.0)]);
        let recs = intersect_layer(&layer, &g);
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_eq!(r.area, 0.25);
            assert_eq!(r.perimeter, 2.0);
        }
    }

    #[test]
    fn contained_square_and_additivity() {
        let g = GridSpec::generate(Bounds::new(0.0, 10.0, 0.0, 10.0), 10.0).unwrap();
        let one = intersect_layer(&VectorLayer::new(1996, vec![square(1.0, 1.0, 1.0)]), &g);
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].area, one[0].perimeter), (1.0, 4.0));
        let two = intersect_layer(&VectorLayer::new(1996, vec![square(1.0, 1.0, 1.0), square(5.0, 5.0, 1.0)]), &g);
        assert_eq!(two.len(), 1);
        assert_eq!((two[0].area, two[0].perimeter), (2.0, 8.0));
        assert_eq!(two[0].year, 1996);
    }

    #[test]
    fn hole_area_is_subtracted_per_cell() {
        let outer = Ring::from_coords(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        let hole = Ring::from_coords(&[(0.5, 0.5), (0.5, 1.5), (1.5, 1.5), (1.5, 0.5)]);
        let g = GridSpec::generate(Bounds::new(0.0, 2.0, 0.0, 2.0), 1.0).unwrap();
        let recs = intersect_layer(&VectorLayer::new(2000, vec![Polygon::new(outer, vec![hole])]), &g);
        let total: f64 = recs.iter().map(|r| r.area).sum();
        assert!((total - 3.0).abs() < 1e-15);
        for r in recs {
            assert!((r.area - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn polygon_outside_grid_is_ignored() {
        let g = GridSpec::generate(Bounds::new(0.0, 2.0, 0.0, 2.0), 1.0).unwrap();
        let recs = intersect_layer(&VectorLayer::new(2000, vec![square(5.0, 5.0, 1.0)]), &g);
        assert!(recs.is_empty());
    }

    #[test]
    fn single_precision_clip() {
        let r = BBox { min_lon: 0.0f32, min_lat: 0.0, max_lon: 0.5, max_lat: 1.0 };
        let sq = Polygon::<f32>::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(clip_polygon_to_rect(&sq, &r).unwrap().area(), 0.5f32);
    }
}
