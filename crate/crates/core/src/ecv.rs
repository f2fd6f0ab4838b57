//! Essential climate variable grids: CSV loading, nearest-neighbour fill
//! of missing (land) points and the nearest-point join onto analysis cells.
//!
//! Distances are Euclidean in degree space. Ties go to the smallest
//! latitude, then the smallest longitude.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureTable;
use crate::panel::SupervisedTable;

pub const N_CHANNELS: usize = 6;

/// Channel names in CSV column order.
pub const CHANNELS: [&str; N_CHANNELS] =
    ["heat_content", "salinity", "temperature", "thermosteric_sea_level", "halosteric_sea_level", "total_steric"];

pub const CSV_HEADER: [&str; 9] = [
    "year",
    "lat",
    "lon",
    "heat_content",
    "salinity",
    "temperature",
    "thermosteric_sea_level",
    "halosteric_sea_level",
    "total_steric",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcvError {
    #[error("line {line}: duplicate point (year {year}, lat {lat}, lon {lon})")]
    DuplicatePoint { line: u64, year: i32, lat: f64, lon: f64 },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: not a number: {value:?}")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("header does not match the expected ECV columns")]
    BadHeader,
    #[error("year {year}: {axis} spacing is not uniform")]
    IrregularSpacing { year: i32, axis: &'static str },
    #[error("year {year}: channels without any known value: {channels:?}")]
    AllMissingChannel { year: i32, channels: Vec<String> },
    #[error("no ECV grid for year {0}")]
    MissingYearGrid(i32),
    #[error("year {year}: channel {channel} missing at the point nearest ({lat}, {lon})")]
    MissingValue { year: i32, channel: String, lat: f64, lon: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

/// One year's regular lat/lon grid of the six channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcvGrid {
    pub year: i32,
    pub lat_centers: Vec<f64>,
    pub lon_centers: Vec<f64>,
    /// Row-major over (lat, lon).
    pub values: Vec<[f64; N_CHANNELS]>,
    /// `true` where the value is known.
    pub known: Vec<[bool; N_CHANNELS]>,
}

impl EcvGrid {
    #[inline]
    pub fn index(&self, i_lat: usize, j_lon: usize) -> usize {
        i_lat * self.lon_centers.len() + j_lon
    }

    pub fn n_points(&self) -> usize {
        self.lat_centers.len() * self.lon_centers.len()
    }

    pub fn missing_count(&self) -> usize {
        self.known.iter().flatten().filter(|k| !**k).count()
    }

    pub fn get(&self, i_lat: usize, j_lon: usize, channel: usize) -> Option<f64> {
        let k = self.index(i_lat, j_lon);
        self.known[k][channel].then(|| self.values[k][channel])
    }

    fn step(centers: &[f64]) -> f64 {
        if centers.len() < 2 {
            f64::INFINITY
        } else {
            centers[1] - centers[0]
        }
    }

    /// Index of the known point of `channel` nearest `(lat, lon)`, by
    /// expanding square rings around the closest grid index.
    pub fn nearest_known(&self, channel: usize, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let (n_lat, n_lon) = (self.lat_centers.len(), self.lon_centers.len());
        if n_lat == 0 || n_lon == 0 {
            return None;
        }
        let i0 = nearest_axis(&self.lat_centers, lat);
        let j0 = nearest_axis(&self.lon_centers, lon);
        let (dlat, dlon) = (Self::step(&self.lat_centers), Self::step(&self.lon_centers));
        let (elat, elon) = ((lat - self.lat_centers[i0]).abs(), (lon - self.lon_centers[j0]).abs());
        let mut best: Option<(f64, usize, usize)> = None;
        let max_r = n_lat.max(n_lon);
        for r in 0..=max_r {
            if let Some((d2, _, _)) = best {
                let rf = r as f64;
                let lb_lat = if r == 0 { 0.0 } else { (rf * dlat - elat).max(0.0) };
                let lb_lon = if r == 0 { 0.0 } else { (rf * dlon - elon).max(0.0) };
                let lb = lb_lat.min(lb_lon);
                // slack keeps exact ties reachable despite rounding in the bound
                if lb > d2.sqrt() * (1.0 + 1e-9) + 1e-12 {
                    break;
                }
            }
            let (ri, rj) = (r as isize, r as isize);
            for di in -ri..=ri {
                let i = i0 as isize + di;
                if i < 0 || i >= n_lat as isize {
                    continue;
                }
                let full_row = di.abs() == ri;
                let mut consider = |dj: isize| {
                    let j = j0 as isize + dj;
                    if j < 0 || j >= n_lon as isize {
                        return;
                    }
                    let (i, j) = (i as usize, j as usize);
                    if !self.known[self.index(i, j)][channel] {
                        return;
                    }
                    let d2 = (self.lat_centers[i] - lat).powi(2) + (self.lon_centers[j] - lon).powi(2);
                    let better = match best {
                        None => true,
                        Some((bd, bi, bj)) => d2 < bd || (d2 == bd && (i, j) < (bi, bj)),
                    };
                    if better {
                        best = Some((d2, i, j));
                    }
                };
                if full_row {
                    for dj in -rj..=rj {
                        consider(dj);
                    }
                } else {
                    consider(-rj);
                    if rj != 0 {
                        consider(rj);
                    }
                }
            }
        }
        best.map(|(_, i, j)| (i, j))
    }

    /// Index of the grid point nearest `(lat, lon)` regardless of mask.
    pub fn nearest_point(&self, lat: f64, lon: f64) -> (usize, usize) {
        (nearest_axis(&self.lat_centers, lat), nearest_axis(&self.lon_centers, lon))
    }
}

/// Nearest index on a sorted axis; ties go to the lower index.
fn nearest_axis(centers: &[f64], v: f64) -> usize {
    let hi = centers.partition_point(|&c| c < v);
    if hi == 0 {
        return 0;
    }
    if hi == centers.len() {
        return centers.len() - 1;
    }
    let lo = hi - 1;
    if v - centers[lo] <= centers[hi] - v {
        lo
    } else {
        hi
    }
}

/// Parses the ECV CSV (one or more years) into per-year grids, sorted by
/// year. Empty fields are missing values; coordinates absent from the file
/// are missing in every channel.
pub fn load_ecv_csv(text: &str) -> Result<Vec<EcvGrid>, EcvError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| EcvError::Csv(e.to_string()))?.clone();
    if header.len() != CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(EcvError::BadHeader);
    }
    type Point = (i32, u64, u64);
    let mut points: BTreeMap<i32, Vec<(f64, f64, [Option<f64>; N_CHANNELS])>> = BTreeMap::new();
    let mut seen: std::collections::HashSet<Point> = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EcvError::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != CSV_HEADER.len() {
            return Err(EcvError::RaggedRow { line, expected: CSV_HEADER.len(), found: rec.len() });
        }
        let num = |k: usize| -> Result<Option<f64>, EcvError> {
            let s = &rec[k];
            if s.is_empty() {
                return Ok(None);
            }
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(EcvError::NonNumeric { line, column: CSV_HEADER[k].to_string(), value: s.to_string() }),
            }
        };
        let year = rec[0]
            .parse::<i32>()
            .map_err(|_| EcvError::NonNumeric { line, column: "year".into(), value: rec[0].to_string() })?;
        let coord = |k: usize| -> Result<f64, EcvError> {
            num(k)?.ok_or_else(|| EcvError::NonNumeric { line, column: CSV_HEADER[k].to_string(), value: String::new() })
        };
        let (lat, lon) = (coord(1)?, coord(2)?);
        if !seen.insert((year, lat.to_bits(), lon.to_bits())) {
            return Err(EcvError::DuplicatePoint { line, year, lat, lon });
        }
        let mut vals = [None; N_CHANNELS];
        for (c, v) in vals.iter_mut().enumerate() {
            *v = num(3 + c)?;
        }
        points.entry(year).or_default().push((lat, lon, vals));
    }

    let mut grids = Vec::with_capacity(points.len());
    for (year, pts) in points {
        let mut lats: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut lons: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for v in [&mut lats, &mut lons] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        check_uniform(&lats).then_some(()).ok_or(EcvError::IrregularSpacing { year, axis: "lat" })?;
        check_uniform(&lons).then_some(()).ok_or(EcvError::IrregularSpacing { year, axis: "lon" })?;
        let n = lats.len() * lons.len();
        let mut grid = EcvGrid {
            year,
            values: vec![[0.0; N_CHANNELS]; n],
            known: vec![[false; N_CHANNELS]; n],
            lat_centers: lats,
            lon_centers: lons,
        };
        for (lat, lon, vals) in pts {
            let i = grid.lat_centers.binary_search_by(|c| c.total_cmp(&lat)).unwrap();
            let j = grid.lon_centers.binary_search_by(|c| c.total_cmp(&lon)).unwrap();
            let k = grid.index(i, j);
            for (c, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    grid.values[k][c] = *v;
                    grid.known[k][c] = true;
                }
            }
        }
        grids.push(grid);
    }
    Ok(grids)
}

fn check_uniform(centers: &[f64]) -> bool {
    if centers.len() < 3 {
        return true;
    }
    let step = centers[1] - centers[0];
    centers.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step.abs().max(1e-12))
}

/// Serializes grids back to the CSV layout; missing values become empty
/// fields and points missing in every channel are omitted.
pub fn write_ecv_csv(grids: &[EcvGrid]) -> String {
    let mut out = String::with_capacity(64 * grids.iter().map(EcvGrid::n_points).sum::<usize>());
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for g in grids {
        for (i, lat) in g.lat_centers.iter().enumerate() {
            for (j, lon) in g.lon_centers.iter().enumerate() {
                let k = g.index(i, j);
                if g.known[k].iter().all(|x| !x) {
                    continue;
                }
                out.push_str(&format!("{},{},{}", g.year, lat, lon));
                for c in 0..N_CHANNELS {
                    out.push(',');
                    if g.known[k][c] {
                        out.push_str(&g.values[k][c].to_string());
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Result of [`fill_missing_nearest`].
#[derive(Debug, Clone, PartialEq)]
pub struct FillOutcome {
    pub grid: EcvGrid,
    pub filled: usize,
    /// Channels with no known value; they stay missing.
    pub all_missing: Vec<usize>,
}

impl FillOutcome {
    /// Turns unresolvable channels into an error.
    pub fn into_result(self) -> Result<EcvGrid, EcvError> {
        if self.all_missing.is_empty() {
            Ok(self.grid)
        } else {
            Err(EcvError::AllMissingChannel {
                year: self.grid.year,
                channels: self.all_missing.iter().map(|&c| CHANNELS[c].to_string()).collect(),
            })
        }
    }
}

/// Each missing value inherits the value of the nearest known point of the
/// same channel. Known values are copied bit-exactly.
pub fn fill_missing_nearest(grid: &EcvGrid) -> FillOutcome {
    let mut out = grid.clone();
    let mut filled = 0;
    let mut all_missing = Vec::new();
    for c in 0..N_CHANNELS {
        if !grid.known.iter().any(|k| k[c]) {
            all_missing.push(c);
            continue;
        }
        for i in 0..grid.lat_centers.len() {
            for j in 0..grid.lon_centers.len() {
                let k = grid.index(i, j);
                if grid.known[k][c] {
                    continue;
                }
                let (bi, bj) = grid
                    .nearest_known(c, grid.lat_centers[i], grid.lon_centers[j])
                    .expect("channel has a known value");
                out.values[k][c] = grid.values[grid.index(bi, bj)][c];
                out.known[k][c] = true;
                filled += 1;
            }
        }
    }
    FillOutcome { grid: out, filled, all_missing }
}

/// Left join: each row takes the six channels of the same-year grid point
/// nearest its cell centre. Row count and order are preserved.
pub fn join_cells(table: &SupervisedTable, grids: &[EcvGrid]) -> Result<FeatureTable, EcvError> {
    let by_year: BTreeMap<i32, &EcvGrid> = grids.iter().map(|g| (g.year, g)).collect();
    let mut rows = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        let g = by_year.get(&r.year).ok_or(EcvError::MissingYearGrid(r.year))?;
        let (i, j) = g.nearest_point(r.lat_center, r.lon_center);
        let k = g.index(i, j);
        let mut ecv = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            if !g.known[k][c] {
                return Err(EcvError::MissingValue {
                    year: r.year,
                    channel: CHANNELS[c].to_string(),
                    lat: g.lat_centers[i],
                    lon: g.lon_centers[j],
                });
            }
            ecv[c] = g.values[k][c];
        }
        rows.push((*r, ecv));
    }
    Ok(FeatureTable::from_joined(&rows))
}
