#![allow(dead_code)]

use mangrove_core::geometry::{Polygon, Ring, Vertex};
use rand::Rng;

/// Star-shaped, simple, counter-clockwise polygon with `n.max(4)`
/// vertices. Angular gaps stay below half a turn, so the centre is in the
/// kernel.
pub fn star(r: &mut impl Rng, cx: f64, cy: f64, radius: f64, n: usize) -> Polygon<f64> {
    let n = n.max(4);
    let step = std::f64::consts::TAU / n as f64;
    let pts: Vec<Vertex<f64>> = (0..n)
        .map(|k| {
            let a = step * (k as f64 + r.random_range(-0.3..0.3));
            let rho = radius * r.random_range(0.3..1.0);
            Vertex::new(cx + rho * a.cos(), cy + rho * a.sin())
        })
        .collect();
    Polygon::new(Ring::new(pts), Vec::new())
}

/// Twelve-point star with evenly spread angles and a small clockwise
/// square hole that stays inside it.
pub fn star_with_hole(r: &mut impl Rng, cx: f64, cy: f64, radius: f64) -> Polygon<f64> {
    let step = std::f64::consts::TAU / 12.0;
    let pts: Vec<Vertex<f64>> = (0..12)
        .map(|k| {
            let a = step * (k as f64 + r.random_range(-0.3..0.3));
            let rho = radius * r.random_range(0.5..1.0);
            Vertex::new(cx + rho * a.cos(), cy + rho * a.sin())
        })
        .collect();
    let h = 0.1 * radius;
    let hole = Ring::from_coords(&[(cx - h, cy - h), (cx - h, cy + h), (cx + h, cy + h), (cx + h, cy - h)]);
    Polygon::new(Ring::new(pts), vec![hole])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
