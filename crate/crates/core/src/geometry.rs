//! Planar polygon primitives in degree space.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex<T> {
    pub lon: T,
    pub lat: T,
}

impl<T: Real> Vertex<T> {
    #[inline]
    pub fn new(lon: T, lat: T) -> Self {
        Self { lon, lat }
    }

    /// Finite and inside the WGS 84 degree ranges.
    pub fn is_valid_lonlat(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && self.lon.abs() <= T::lit(180.0)
            && self.lat.abs() <= T::lit(90.0)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub min_lon: T,
    pub min_lat: T,
    pub max_lon: T,
    pub max_lat: T,
}

impl<T: Real> BBox<T> {
    pub fn empty() -> Self {
        Self {
            min_lon: T::infinity(),
            min_lat: T::infinity(),
            max_lon: T::neg_infinity(),
            max_lat: T::neg_infinity(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min_lon > self.max_lon || self.min_lat > self.max_lat
    }

    pub fn expand(&mut self, v: Vertex<T>) {
        self.min_lon = self.min_lon.min(v.lon);
        self.min_lat = self.min_lat.min(v.lat);
        self.max_lon = self.max_lon.max(v.lon);
        self.max_lat = self.max_lat.max(v.lat);
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min_lon: self.min_lon.min(other.min_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lon: self.max_lon.max(other.max_lon),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }

    pub fn contains(&self, v: Vertex<T>) -> bool {
        v.lon >= self.min_lon && v.lon <= self.max_lon && v.lat >= self.min_lat && v.lat <= self.max_lat
    }

    pub fn contains_bbox(&self, other: &Self) -> bool {
        other.min_lon >= self.min_lon
            && other.max_lon <= self.max_lon
            && other.min_lat >= self.min_lat
            && other.max_lat <= self.max_lat
    }
}

/// A closed ring: the last vertex repeats the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring<T> {
    vertices: Vec<Vertex<T>>,
}

impl<T: Real> Ring<T> {
    /// Builds a ring, appending the first vertex when the input is open.
    pub fn new(mut vertices: Vec<Vertex<T>>) -> Self {
        if let (Some(&first), Some(&last)) = (vertices.first(), vertices.last()) {
            if first != last || vertices.len() == 1 {
                vertices.push(first);
            }
        }
        Self { vertices }
    }

    pub fn from_coords(coords: &[(T, T)]) -> Self {
        Self::new(coords.iter().map(|&(lon, lat)| Vertex::new(lon, lat)).collect())
    }

    /// Closed vertex list.
    pub fn vertices(&self) -> &[Vertex<T>] {
        &self.vertices
    }

    /// Vertex list without the closing repeat.
    pub fn open(&self) -> &[Vertex<T>] {
        match self.vertices.len() {
            0 => &[],
            n => &self.vertices[..n - 1],
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> T {
        signed_area(self.open())
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> T {
        self.vertices
            .windows(2)
            .map(|w| (w[1].lon - w[0].lon).hypot(w[1].lat - w[0].lat))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > T::zero()
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Self { vertices: v }
    }

    pub fn bbox(&self) -> BBox<T> {
        let mut b = BBox::empty();
        for &v in &self.vertices {
            b.expand(v);
        }
        b
    }

    pub fn translated(&self, dlon: T, dlat: T) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| Vertex::new(v.lon + dlon, v.lat + dlat)).collect(),
        }
    }

    /// Even-odd point-in-ring test.
    pub fn contains_point(&self, p: Vertex<T>) -> bool {
        let mut inside = false;
        for w in self.vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Number of crossing pairs among non-adjacent edges.
    pub fn count_self_intersections(&self) -> usize {
        let edges: Vec<(Vertex<T>, Vertex<T>)> = self.vertices.windows(2).map(|w| (w[0], w[1])).collect();
        let m = edges.len();
        let mut count = 0;
        for i in 0..m {
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Shoelace over an open vertex list, accumulated relative to the first
/// vertex to limit cancellation far from the origin.
pub fn signed_area<T: Real>(open: &[Vertex<T>]) -> T {
    if open.len() < 3 {
        return T::zero();
    }
    let o = open[0];
    let mut twice = T::zero();
    for i in 1..open.len() - 1 {
        let (a, b) = (open[i], open[i + 1]);
        twice = twice + (a.lon - o.lon) * (b.lat - o.lat) - (b.lon - o.lon) * (a.lat - o.lat);
    }
    twice / T::lit(2.0)
}

fn orient<T: Real>(a: Vertex<T>, b: Vertex<T>, c: Vertex<T>) -> T {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment<T: Real>(a: Vertex<T>, b: Vertex<T>, p: Vertex<T>) -> bool {
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect<T: Real>(p1: Vertex<T>, p2: Vertex<T>, q1: Vertex<T>, q2: Vertex<T>) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let zero = T::zero();
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero)) && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero)) {
        return true;
    }
    (d1 == zero && on_segment(q1, q2, p1))
        || (d2 == zero && on_segment(q1, q2, p2))
        || (d3 == zero && on_segment(p1, p2, q1))
        || (d4 == zero && on_segment(p1, p2, q2))
}

/// One outer ring plus holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon<T> {
    pub outer: Ring<T>,
    pub holes: Vec<Ring<T>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(outer: Ring<T>, holes: Vec<Ring<T>>) -> Self {
        Self { outer, holes }
    }

    pub fn from_coords(outer: &[(T, T)]) -> Self {
        Self { outer: Ring::from_coords(outer), holes: Vec::new() }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring<T>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Outer area minus hole areas, never negative.
    pub fn area(&self) -> T {
        let holes = self.holes.iter().map(Ring::area).fold(T::zero(), |a, b| a + b);
        (self.outer.area() - holes).max(T::zero())
    }

    /// Sum of signed ring areas; equals `area()` for fixed polygons.
    pub fn signed_area(&self) -> T {
        self.rings().map(Ring::signed_area).fold(T::zero(), |a, b| a + b)
    }

    pub fn perimeter(&self) -> T {
        self.rings().map(Ring::perimeter).fold(T::zero(), |a, b| a + b)
    }

    pub fn bbox(&self) -> BBox<T> {
        self.outer.bbox()
    }

    pub fn translated(&self, dlon: T, dlat: T) -> Self {
        Self {
            outer: self.outer.translated(dlon, dlat),
            holes: self.holes.iter().map(|h| h.translated(dlon, dlat)).collect(),
        }
    }

    pub fn contains_point(&self, p: Vertex<T>) -> bool {
        self.outer.contains_point(p) && !self.holes.iter().any(|h| h.contains_point(p))
    }

    pub fn to_wkt(&self) -> String {
        let mut s = String::from("POLYGON (");
        write_rings(&mut s, self);
        s.push(')');
        s
    }
}

fn write_rings<T: Real>(s: &mut String, p: &Polygon<T>) {
    for (ri, ring) in p.rings().enumerate() {
        if ri > 0 {
            s.push_str(", ");
        }
        s.push('(');
        for (i, v) in ring.vertices().iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{} {}", v.lon, v.lat);
        }
        s.push(')');
    }
}

pub fn multipolygon_to_wkt<T: Real>(polys: &[Polygon<T>]) -> String {
    let mut s = String::from("MULTIPOLYGON (");
    for (i, p) in polys.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push('(');
        write_rings(&mut s, p);
        s.push(')');
    }
    s.push(')');
    s
}

/// Drops repeated consecutive vertices and rejects rings with fewer than
/// three distinct vertices or (numerically) zero area.
pub fn clean_ring<T: Real>(ring: &Ring<T>) -> Option<Ring<T>> {
    let mut open: Vec<Vertex<T>> = Vec::with_capacity(ring.len());
    for &v in ring.open() {
        if open.last() != Some(&v) {
            open.push(v);
        }
    }
    while open.len() > 1 && open.last() == open.first() {
        open.pop();
    }
    if open.len() < 3 {
        return None;
    }
    let area = signed_area(&open);
    let b = ring.bbox();
    let extent = (b.max_lon - b.min_lon).max(b.max_lat - b.min_lat);
    if area.abs() <= T::lit(4.0) * T::epsilon() * extent * extent {
        return None;
    }
    Some(Ring::new(open))
}

/// Normalizes a parsed polygon: duplicate vertices removed, degenerate
/// rings dropped, outer ring counter-clockwise and holes clockwise.
///
/// Returns `None` when the outer ring is degenerate; holes cannot stand
/// without it.
pub fn fix_polygon<T: Real>(polygon: &Polygon<T>) -> Option<Polygon<T>> {
    let outer = clean_ring(&polygon.outer)?;
    let outer = if outer.is_ccw() { outer } else { outer.reversed() };
    let holes = polygon
        .holes
        .iter()
        .filter_map(clean_ring)
        .map(|h| if h.is_ccw() { h.reversed() } else { h })
        .collect();
    Some(Polygon { outer, holes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon<f64> {
        Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    #[test]
    fn unit_square_area_and_perimeter() {
        let p = unit_square();
        assert_eq!(p.outer.len(), 5);
        assert_eq!(p.area(), 1.0);
        assert_eq!(p.perimeter(), 4.0);
        assert!(p.outer.is_ccw());
    }

    #[test]
    fn triangle_area_half_base_height() {
        let p = Polygon::from_coords(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        assert_eq!(p.area(), 6.0);
        assert_eq!(p.perimeter(), 12.0);
    }

    #[test]
    fn fix_flips_clockwise_square() {
        let cw = Polygon::from_coords(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        assert!(cw.outer.signed_area() < 0.0);
        let fixed = fix_polygon(&cw).unwrap();
        assert!(fixed.outer.is_ccw());
        assert_eq!(fixed.area(), 1.0);
    }

    #[test]
    fn fix_removes_repeated_vertex() {
        let p = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let fixed = fix_polygon(&p).unwrap();
        assert_eq!(fixed.outer.len(), 5);
    }

    #[test]
    fn collinear_ring_is_degenerate() {
        let p = Polygon::from_coords(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(fix_polygon(&p).is_none());
    }

    #[test]
    fn hole_is_reoriented_clockwise() {
        let outer = Ring::from_coords(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        let hole = Ring::from_coords(&[(1.0, 1.0), (1.5, 1.0), (1.0, 1.5)]);
        let fixed = fix_polygon(&Polygon::new(outer, vec![hole])).unwrap();
        assert!(fixed.holes[0].signed_area() < 0.0);
        assert_eq!(fixed.area(), 5.875);
        assert_eq!(fixed.signed_area(), 5.875);
    }

    #[test]
    fn bowtie_has_one_self_intersection() {
        let r = Ring::from_coords(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(r.count_self_intersections(), 1);
        assert_eq!(unit_square().outer.count_self_intersections(), 0);
    }

    #[test]
    fn point_in_polygon_respects_holes() {
        let outer = Ring::from_coords(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]);
        let hole = Ring::from_coords(&[(1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (2.0, 1.0)]);
        let p = Polygon::new(outer, vec![hole]);
        assert!(p.contains_point(Vertex::new(3.0, 3.0)));
        assert!(!p.contains_point(Vertex::new(1.5, 1.5)));
        assert!(!p.contains_point(Vertex::new(5.0, 1.5)));
    }

    #[test]
    fn works_in_single_precision() {
        let p = Polygon::<f32>::from_coords(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        assert_eq!(p.area(), 6.0f32);
    }
}
