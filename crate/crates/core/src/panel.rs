//! Yearly per-cell panel: alignment across observed years, linear fill of
//! the unobserved years, and the next-year lag target.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::CellYearRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("cell {cell_id} has conflicting bounds across inputs")]
    ConflictingCellBounds { cell_id: u64 },
    #[error("cell {cell_id} appears twice in year {year}")]
    DuplicateCell { cell_id: u64, year: i32 },
    #[error("year {0} supplied more than once")]
    DuplicateYear(i32),
    #[error("record for year {found} inside the list for year {expected}")]
    YearMismatch { expected: i32, found: i32 },
    #[error("interpolation needs at least two observed years, got {0}")]
    SingleObservedYear(usize),
}

const BOUNDS_TOL: f64 = 1e-9;

/// Rows sorted by `(cell_id, year)`; every cell present in every year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub rows: Vec<CellYearRecord>,
    pub years: Vec<i32>,
    pub observed_years: Vec<i32>,
}

impl Panel {
    pub fn cell_ids(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.cell_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Rows of one cell, in year order.
    pub fn series(&self) -> impl Iterator<Item = &[CellYearRecord]> {
        self.rows.chunk_by(|a, b| a.cell_id == b.cell_id)
    }

    pub fn get(&self, cell_id: u64, year: i32) -> Option<&CellYearRecord> {
        self.rows
            .binary_search_by(|r| (r.cell_id, r.year).cmp(&(cell_id, year)))
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Union of cells over the observed years. A cell absent from a year's
/// intersection output had no polygons there and gets zero area and
/// perimeter.
pub fn align_cells(yearly: &[(i32, Vec<CellYearRecord>)]) -> Result<Panel, PanelError> {
    let mut years = BTreeSet::new();
    let mut bounds: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
    let mut values: BTreeMap<(u64, i32), (f64, f64)> = BTreeMap::new();
    for (year, records) in yearly {
        if !years.insert(*year) {
            return Err(PanelError::DuplicateYear(*year));
        }
        for r in records {
            if r.year != *year {
                return Err(PanelError::YearMismatch { expected: *year, found: r.year });
            }
            let b = [r.left, r.top, r.bottom, r.right];
            match bounds.get(&r.cell_id) {
                Some(prev) if prev.iter().zip(&b).any(|(p, q)| (p - q).abs() > BOUNDS_TOL) => {
                    return Err(PanelError::ConflictingCellBounds { cell_id: r.cell_id });
                }
                Some(_) => {}
                None => {
                    bounds.insert(r.cell_id, b);
                }
            }
            if values.insert((r.cell_id, *year), (r.area, r.perimeter)).is_some() {
                return Err(PanelError::DuplicateCell { cell_id: r.cell_id, year: *year });
            }
        }
    }
    let years: Vec<i32> = years.into_iter().collect();
    let mut rows = Vec::with_capacity(bounds.len() * years.len());
    for (&cell_id, b) in &bounds {
        for &year in &years {
            let (area, perimeter) = values.get(&(cell_id, year)).copied().unwrap_or((0.0, 0.0));
            rows.push(CellYearRecord { cell_id, year, left: b[0], top: b[1], bottom: b[2], right: b[3], area, perimeter });
        }
    }
    Ok(Panel { rows, years: years.clone(), observed_years: years })
}

/// Fills every year between the first and last observed year by linear
/// interpolation of area and perimeter between the bracketing observed
/// years. Observed values are copied unchanged; nothing is extrapolated.
pub fn interpolate_years(panel: &Panel) -> Result<Panel, PanelError> {
    let observed = &panel.observed_years;
    if observed.len() < 2 {
        return Err(PanelError::SingleObservedYear(observed.len()));
    }
    let (first, last) = (observed[0], observed[observed.len() - 1]);
    let years: Vec<i32> = (first..=last).collect();
    let mut rows = Vec::with_capacity(years.len() * panel.rows.len() / panel.years.len().max(1));
    for series in panel.series() {
        let known: Vec<&CellYearRecord> = series.iter().filter(|r| observed.binary_search(&r.year).is_ok()).collect();
        let mut seg = 0;
        for &year in &years {
            while seg + 2 < known.len() && known[seg + 1].year <= year {
                seg += 1;
            }
            let (a, b) = (known[seg], known[seg + 1]);
            let mut rec = *a;
            rec.year = year;
            if year == a.year {
            } else if year == b.year {
                rec.area = b.area;
                rec.perimeter = b.perimeter;
            } else {
                let t = f64::from(year - a.year) / f64::from(b.year - a.year);
                rec.area = a.area + (b.area - a.area) * t;
                rec.perimeter = a.perimeter + (b.perimeter - a.perimeter) * t;
            }
            rows.push(rec);
        }
    }
    Ok(Panel { rows, years, observed_years: observed.clone() })
}

/// One modeling row before the climate join.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRow {
    pub cell_id: u64,
    pub year: i32,
    pub lat_center: f64,
    pub lon_center: f64,
    pub area: f64,
    pub perimeter: f64,
    /// Area of the same cell one year later; `None` for forecast frames.
    pub area_next: Option<f64>,
}

impl SupervisedRow {
    fn from_record(r: &CellYearRecord, area_next: Option<f64>) -> Self {
        Self {
            cell_id: r.cell_id,
            year: r.year,
            lat_center: (r.top + r.bottom) / 2.0,
            lon_center: (r.left + r.right) / 2.0,
            area: r.area,
            perimeter: r.perimeter,
            area_next,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedTable {
    pub rows: Vec<SupervisedRow>,
}

/// Adds the next-year target; rows without a following year are dropped.
pub fn build_supervised(panel: &Panel) -> SupervisedTable {
    let mut rows = Vec::new();
    for series in panel.series() {
        for w in series.windows(2) {
            if w[1].year == w[0].year + 1 {
                rows.push(SupervisedRow::from_record(&w[0], Some(w[1].area)));
            }
        }
    }
    SupervisedTable { rows }
}

/// Rows of the last panel year, without target, for one-step forecasts.
pub fn final_year_frame(panel: &Panel) -> SupervisedTable {
    let last = panel.years.last().copied();
    SupervisedTable {
        rows: panel
            .rows
            .iter()
            .filter(|r| Some(r.year) == last)
            .map(|r| SupervisedRow::from_record(r, None))
            .collect(),
    }
}
