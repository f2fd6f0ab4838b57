//! Synthetic polygon layers and climate grids with a known yearly decline.
//!
//! Each chosen cell holds one star-shaped polygon that keeps its shape and
//! centre and is rescaled every year. Its area follows
//! `A0 (1 - decline)^(t - t0) (1 + ecv_effect * anomaly) (1 + noise * N(0, 1))`
//! with a log-normal `A0`.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ecv::{EcvGrid, N_CHANNELS};
use crate::geometry::{signed_area, Polygon, Ring, Vertex};
use crate::grid::{Bounds, GridError, GridSpec, DEFAULT_CELL_SIDE};
use crate::ingest::VectorLayer;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cells: usize,
    pub bounds: Bounds<f64>,
    pub cell_side: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub observed_years: Vec<i32>,
    /// Fractional area loss per year.
    pub decline: f64,
    pub ecv_effect: f64,
    pub noise: f64,
    /// Median polygon area in square degrees.
    pub median_area: f64,
    pub area_sigma: f64,
    /// Fraction of climate grid points treated as land (all channels missing).
    pub land_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cells: 5000,
            bounds: Bounds::mangrove_extent(),
            cell_side: DEFAULT_CELL_SIDE,
            first_year: 1996,
            last_year: 2016,
            observed_years: vec![1996, 2007, 2008, 2009, 2010, 2015, 2016],
            decline: 0.015,
            ecv_effect: 0.004,
            noise: 0.002,
            median_area: 2e-4,
            area_sigma: 1.0,
            land_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub grid: GridSpec<f64>,
    pub cells: Vec<u64>,
    /// One layer per observed year.
    pub layers: Vec<VectorLayer<f64>>,
    /// One grid per year from first to last.
    pub ecv: Vec<EcvGrid>,
}

/// Smooth climate fields; the phases vary with the seed.
struct Fields {
    phase: [f64; 4],
}

impl Fields {
    fn temperature(&self, lat: f64, lon: f64, year: i32) -> f64 {
        28.0 - 0.3 * lat.abs() + 1.5 * (lon / 30.0 + self.phase[0]).sin() + 0.8 * (lat / 12.0 + self.phase[1]).cos()
            + 0.03 * f64::from(year - 1996)
            + 0.4 * (f64::from(year) * 0.9 + self.phase[2]).sin()
    }

    fn salinity(&self, lat: f64, lon: f64, year: i32) -> f64 {
        35.0 + 0.6 * (lat / 15.0 + self.phase[3]).cos() + 0.4 * (lon / 40.0).sin() - 0.01 * f64::from(year - 1996)
    }

    /// Six channels before observation noise.
    fn channels(&self, lat: f64, lon: f64, year: i32) -> [f64; N_CHANNELS] {
        let t = self.temperature(lat, lon, year);
        let s = self.salinity(lat, lon, year);
        let thermo = 3.0 * (t - 25.0);
        let halo = -4.0 * (s - 35.0);
        [2.0 + 0.15 * t, s, t, thermo, halo, thermo + halo]
    }

    fn anomaly(&self, lat: f64, lon: f64, year: i32) -> f64 {
        (self.temperature(lat, lon, year) - self.temperature(lat, lon, 1996)).tanh()
    }
}

const STAR_VERTICES: usize = 16;

/// Unit star shape: vertex offsets and the area they enclose.
fn star_shape(r: &mut rng::Rng) -> (Vec<(f64, f64)>, f64, f64) {
    let step = 2.0 * PI / STAR_VERTICES as f64;
    let pts: Vec<(f64, f64)> = (0..STAR_VERTICES)
        .map(|i| {
            let th = i as f64 * step + r.random_range(-0.3..0.3) * step;
            let rho = 1.0 + 0.3 * r.random_range(-1.0..1.0);
            (rho * th.cos(), rho * th.sin())
        })
        .collect();
    let verts: Vec<Vertex<f64>> = pts.iter().map(|&(x, y)| Vertex::new(x, y)).collect();
    let reach = pts.iter().map(|(x, y)| x.abs().max(y.abs())).fold(0.0, f64::max);
    (pts, signed_area(&verts), reach)
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthData, GridError> {
    let grid = GridSpec::generate(cfg.bounds, cfg.cell_side)?;
    let mut r = rng::child(seed, 0);
    let n = cfg.n_cells.min(grid.n_cells());
    let mut cells: Vec<u64> = sample(&mut r, grid.n_cells(), n).into_iter().map(|c| c as u64).collect();
    cells.sort_unstable();
    let fields = Fields { phase: [r.random_range(0.0..PI), r.random_range(0.0..PI), r.random_range(0.0..PI), r.random_range(0.0..PI)] };

    let lognormal = LogNormal::new(cfg.median_area.ln(), cfg.area_sigma).expect("valid log-normal");
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let mut polys: Vec<Vec<Polygon<f64>>> = vec![Vec::with_capacity(n); cfg.observed_years.len()];
    for &id in &cells {
        let cell = grid.cell(id)?;
        let c = cell.center();
        let mut cr = rng::child(seed, 1 + id);
        let (shape, unit_area, reach) = star_shape(&mut cr);
        let a0: f64 = lognormal.sample(&mut cr);
        let areas: Vec<f64> = cfg
            .observed_years
            .iter()
            .map(|&y| {
                let trend = (1.0 - cfg.decline).powi(y - cfg.first_year);
                let z: f64 = StandardNormal.sample(&mut cr);
                a0 * trend * (1.0 + cfg.ecv_effect * fields.anomaly(c.lat, c.lon, y)) * (1.0 + cfg.noise * z)
            })
            .collect();
        // keep the largest yearly polygon within 40% of the cell half-width
        let half = 0.5 * (cell.right - cell.left).min(cell.top - cell.bottom);
        let max_scale = 0.8 * half / reach;
        let cap = max_scale * max_scale * unit_area;
        let peak = areas.iter().cloned().fold(0.0, f64::max);
        let shrink = if peak > cap { cap / peak } else { 1.0 };
        let room = half - reach * (peak * shrink / unit_area).sqrt();
        let cx = c.lon + cr.random_range(-room..room);
        let cy = c.lat + cr.random_range(-room..room);
        for (k, &a) in areas.iter().enumerate() {
            let s = (a.max(0.0) * shrink / unit_area).sqrt();
            let ring = Ring::new(shape.iter().map(|&(x, y)| Vertex::new(cx + s * x, cy + s * y)).collect());
            polys[k].push(Polygon::new(ring, Vec::new()));
        }
    }
    let layers = cfg.observed_years.iter().zip(polys).map(|(&y, p)| VectorLayer::new(y, p)).collect();

    let b = &cfg.bounds;
    let lats: Vec<f64> = ((b.min_lat.floor() as i32)..(b.max_lat.ceil() as i32)).map(|v| f64::from(v) + 0.5).collect();
    let lons: Vec<f64> = ((b.min_lon.floor() as i32)..(b.max_lon.ceil() as i32)).map(|v| f64::from(v) + 0.5).collect();
    let mut lr = rng::child(seed, u64::MAX);
    let land: Vec<bool> = (0..lats.len() * lons.len()).map(|_| lr.random::<f64>() < cfg.land_fraction).collect();
    let noise_sd = [0.05, 0.02, 0.1, 0.3, 0.3, 0.3];
    let ecv = years
        .iter()
        .map(|&year| {
            let mut yr = rng::child(seed, (1 << 40) + year as u64);
            let mut values = Vec::with_capacity(land.len());
            let mut known = Vec::with_capacity(land.len());
            for &lat in &lats {
                for &lon in &lons {
                    let k = values.len();
                    let mut v = fields.channels(lat, lon, year);
                    for (ch, x) in v.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(&mut yr);
                        *x = ((*x + noise_sd[ch] * z) * 1e4).round() / 1e4;
                    }
                    values.push(v);
                    known.push([!land[k]; N_CHANNELS]);
                }
            }
            EcvGrid { year, lat_centers: lats.clone(), lon_centers: lons.clone(), values, known }
        })
        .collect();
    Ok(SynthData { grid, cells, layers, ecv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::intersect_layer;

    fn small() -> SynthConfig {
        SynthConfig {
            n_cells: 40,
            bounds: Bounds::new(0.0, 10.0, 0.0, 5.0),
            cell_side: 1.0,
            observed_years: vec![1996, 2000],
            last_year: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn polygons_stay_inside_their_cells() {
        let d = generate(&small(), 3).unwrap();
        assert_eq!(d.cells.len(), 40);
        for layer in &d.layers {
            let recs = intersect_layer(layer, &d.grid);
            assert_eq!(recs.len(), 40);
            let total: f64 = recs.iter().map(|r| r.area).sum();
            assert!((total - layer.total_area()).abs() < 1e-12 * total.max(1.0));
        }
        assert_eq!(d.ecv.len(), 5);
    }

    #[test]
    fn decline_shows_in_total_area() {
        let d = generate(&small(), 5).unwrap();
        assert!(d.layers[1].total_area() < d.layers[0].total_area());
    }

    #[test]
    fn seed_determines_output() {
        let (a, b) = (generate(&small(), 9).unwrap(), generate(&small(), 9).unwrap());
        assert_eq!(a.layers[0].polygons, b.layers[0].polygons);
        assert_eq!(a.ecv, b.ecv);
    }
}
