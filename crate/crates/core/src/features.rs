//! Feature table, exploratory statistics, scaling, splitting, recursive
//! feature elimination, PCA and k-means.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecv::N_CHANNELS;
use crate::linalg::{jacobi_eigen, lstsq_min_norm, lstsq_qr, LinalgError, Matrix};
use crate::panel::{Panel, SupervisedRow};
use crate::rng;
use crate::scalar::{ceil_tolerant, Real};

/// Predictor columns in table order.
pub const PREDICTORS: [&str; 10] = [
    "lat_center",
    "lon_center",
    "area",
    "perimeter",
    "heat_content",
    "salinity",
    "temperature",
    "thermosteric_sea_level",
    "halosteric_sea_level",
    "total_steric",
];

pub const TARGET: &str = "area_next";

/// Multiplier bringing square-degree areas to values nearer to metres.
pub const AREA_SCALE: f64 = 1e5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("column {column} has zero variance")]
    ZeroVarianceColumn { column: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("cannot select {n_select} of {n_features} features")]
    InvalidSelection { n_select: usize, n_features: usize },
    #[error("k = {k} is invalid for {rows} rows")]
    InvalidK { k: usize, rows: usize },
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("table has no target column")]
    MissingTarget,
    #[error("feature csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Modeling matrix with row keys and optional target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub cell_ids: Vec<u64>,
    pub years: Vec<i32>,
    pub columns: Vec<String>,
    pub x: Matrix<f64>,
    pub target: Option<Vec<f64>>,
}

impl FeatureTable {
    /// Builds the table from joined rows. The target is kept only when
    /// every row has one.
    pub fn from_joined(rows: &[(SupervisedRow, [f64; N_CHANNELS])]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * PREDICTORS.len());
        for (r, ecv) in rows {
            data.extend_from_slice(&[r.lat_center, r.lon_center, r.area, r.perimeter]);
            data.extend_from_slice(ecv);
        }
        let target = rows.iter().map(|(r, _)| r.area_next).collect::<Option<Vec<f64>>>();
        Self {
            cell_ids: rows.iter().map(|(r, _)| r.cell_id).collect(),
            years: rows.iter().map(|(r, _)| r.year).collect(),
            columns: PREDICTORS.iter().map(|s| s.to_string()).collect(),
            x: Matrix::from_vec(rows.len(), PREDICTORS.len(), data).expect("row width"),
            target,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name == TARGET {
            return self.target.clone();
        }
        self.column_index(name).map(|j| self.x.column(j))
    }

    pub fn target(&self) -> Result<&[f64], FeatureError> {
        self.target.as_deref().ok_or(FeatureError::MissingTarget)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            cell_ids: idx.iter().map(|&i| self.cell_ids[i]).collect(),
            years: idx.iter().map(|&i| self.years[i]).collect(),
            columns: self.columns.clone(),
            x: self.x.select_rows(idx),
            target: self.target.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            cell_ids: self.cell_ids.clone(),
            years: self.years.clone(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            x: self.x.select_columns(idx),
            target: self.target.clone(),
        }
    }

    /// Multiplies area, perimeter and the target by [`AREA_SCALE`].
    pub fn scale_areas(&self) -> Self {
        let mut out = self.clone();
        for name in ["area", "perimeter"] {
            if let Some(j) = self.column_index(name) {
                for i in 0..out.x.rows() {
                    out.x[(i, j)] = scale_area(out.x[(i, j)]);
                }
            }
        }
        if let Some(t) = &mut out.target {
            t.iter_mut().for_each(|v| *v = scale_area(*v));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("cell_id,year,");
        out.push_str(&self.columns.join(","));
        out.push(',');
        out.push_str(TARGET);
        out.push('\n');
        for i in 0..self.n_rows() {
            out.push_str(&format!("{},{}", self.cell_ids[i], self.years[i]));
            for v in self.x.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push(',');
            if let Some(t) = &self.target {
                out.push_str(&t[i].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, FeatureError> {
        let err = |line: u64, message: String| FeatureError::Csv { line, message };
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.len() < 3 || names[0] != "cell_id" || names[1] != "year" || names[names.len() - 1] != TARGET {
            return Err(err(1, "expected cell_id,year,...,area_next".into()));
        }
        let columns: Vec<String> = names[2..names.len() - 1].iter().map(|s| s.to_string()).collect();
        let d = columns.len();
        let (mut cell_ids, mut years, mut data, mut target) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut has_target = true;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(0, e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let parse = |k: usize| rec[k].parse::<f64>().map_err(|_| err(line, format!("bad number {:?}", &rec[k])));
            cell_ids.push(rec[0].parse::<u64>().map_err(|_| err(line, "bad cell_id".into()))?);
            years.push(rec[1].parse::<i32>().map_err(|_| err(line, "bad year".into()))?);
            for k in 0..d {
                data.push(parse(2 + k)?);
            }
            if rec[d + 2].is_empty() {
                has_target = false;
            } else {
                target.push(parse(d + 2)?);
            }
        }
        let n = cell_ids.len();
        Ok(Self { cell_ids, years, columns, x: Matrix::from_vec(n, d, data)?, target: has_target.then_some(target) })
    }
}

pub fn scale_area(v: f64) -> f64 {
    v * AREA_SCALE
}

/// Pearson correlation matrix. Zero-variance columns are listed and get
/// zero correlation with every other column.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation<T> {
    pub matrix: Matrix<T>,
    pub zero_variance: Vec<usize>,
}

pub fn correlation_matrix<T: Real>(x: &Matrix<T>) -> Result<Correlation<T>, FeatureError> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(FeatureError::TooFewRows { needed: 2, got: n });
    }
    let means = x.column_means();
    let mut cross = Matrix::<T>::zeros(d, d);
    for r in x.row_iter() {
        for a in 0..d {
            let ca = r[a] - means[a];
            for b in a..d {
                cross[(a, b)] = cross[(a, b)] + ca * (r[b] - means[b]);
            }
        }
    }
    let sd: Vec<T> = (0..d).map(|j| cross[(j, j)].sqrt()).collect();
    let zero_variance: Vec<usize> = (0..d).filter(|&j| sd[j] == T::zero()).collect();
    let mut m = Matrix::identity(d);
    for a in 0..d {
        for b in a + 1..d {
            let r = if sd[a] == T::zero() || sd[b] == T::zero() {
                T::zero()
            } else {
                (cross[(a, b)] / (sd[a] * sd[b])).max(-T::one()).min(T::one())
            };
            m[(a, b)] = r;
            m[(b, a)] = r;
        }
    }
    Ok(Correlation { matrix: m, zero_variance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bins {
    /// Fixed width; edges are multiples of the width.
    Width(f64),
    /// Fixed count spanning the data range.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins are half-open `[lo, hi)` except the last one under `Bins::Count`,
    /// which is closed.
    pub fn from_values(values: &[f64], bins: Bins) -> Self {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if values.is_empty() {
            return Self { edges: vec![0.0, 1.0], counts: vec![0] };
        }
        let (edges, locate): (Vec<f64>, Box<dyn Fn(f64) -> usize>) = match bins {
            Bins::Width(w) => {
                let start = (lo / w).floor() * w;
                let n = ((hi - start) / w).floor() as usize + 1;
                let edges = (0..=n).map(|k| start + k as f64 * w).collect();
                (edges, Box::new(move |v: f64| (((v - start) / w).floor() as usize).min(n - 1)))
            }
            Bins::Count(k) => {
                let k = k.max(1);
                let (a, b) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
                let w = (b - a) / k as f64;
                let edges = (0..=k).map(|i| if i == k { b } else { a + i as f64 * w }).collect();
                (edges, Box::new(move |v: f64| (((v - a) / w).floor() as usize).min(k - 1)))
            }
        };
        let mut counts = vec![0u64; edges.len() - 1];
        for &v in values {
            counts[locate(v)] += 1;
        }
        Self { edges, counts }
    }
}

/// Year-over-year area differences of every cell in the panel.
pub fn area_differences(panel: &Panel) -> Vec<f64> {
    let mut out = Vec::new();
    for s in panel.series() {
        for w in s.windows(2) {
            if w[1].year == w[0].year + 1 {
                out.push(w[1].area - w[0].area);
            }
        }
    }
    out
}

pub fn area_diff_histogram(panel: &Panel, bins: Bins) -> Histogram {
    Histogram::from_values(&area_differences(panel), bins)
}

/// Linear-interpolation quantile at position `(n - 1) q` of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75))
}

/// Indices (ascending) of values outside `[Q1 - factor IQR, Q3 + factor IQR]`.
pub fn iqr_outliers(values: &[f64], factor: f64) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let (q1, q3) = quartiles(values);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - factor * iqr, q3 + factor * iqr);
    values.iter().enumerate().filter(|(_, &v)| v < lo || v > hi).map(|(i, _)| i).collect()
}

pub fn zero_variance_columns<T: Real>(x: &Matrix<T>) -> Vec<usize> {
    (0..x.cols())
        .filter(|&j| {
            let c = x.column(j);
            c.iter().all(|&v| v == c[0])
        })
        .collect()
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Real> ScalerParams<T> {
    pub fn fit(x: &Matrix<T>) -> Result<Self, FeatureError> {
        if x.rows() == 0 {
            return Err(FeatureError::TooFewRows { needed: 1, got: 0 });
        }
        let means = x.column_means();
        let n = T::from_usize(x.rows()).unwrap();
        let mut stds = vec![T::zero(); x.cols()];
        for r in x.row_iter() {
            for (j, s) in stds.iter_mut().enumerate() {
                let c = r[j] - means[j];
                *s = *s + c * c;
            }
        }
        for (j, s) in stds.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            // spread below rounding noise of the mean counts as constant
            if *s <= means[j].abs() * T::epsilon() * T::lit(4.0) || *s == T::zero() {
                return Err(FeatureError::ZeroVarianceColumn { column: j });
            }
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        out
    }

    pub fn inverse(&self, z: &Matrix<T>) -> Matrix<T> {
        let mut out = z.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.stds[j] + self.means[j];
            }
        }
        out
    }
}

/// Seeded random split; returns sorted `(train, test)` row indices.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), FeatureError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FeatureError::InvalidRatio(ratio));
    }
    let n_test = (ceil_tolerant(n as f64 * (1.0 - ratio)) as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(table: &FeatureTable, ratio: f64, seed: u64) -> Result<(FeatureTable, FeatureTable), FeatureError> {
    let (train, test) = split_indices(table.n_rows(), ratio, seed)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Least-squares coefficients (without intercept) of `y ~ 1 + X`. Falls
/// back to the minimum-norm solution on collinear columns.
pub fn linear_coefficients(x: &Matrix<f64>, y: &[f64]) -> Result<(f64, Vec<f64>), FeatureError> {
    let ones = Matrix::from_vec(x.rows(), 1, vec![1.0; x.rows()])?;
    match lstsq_qr(&ones.hstack(x)?, y) {
        Ok(beta) => Ok((beta[0], beta[1..].to_vec())),
        Err(LinalgError::RankDeficient { .. }) => Ok(lstsq_min_norm(x, y)?),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// Surviving column indices, ascending.
    pub selected: Vec<usize>,
    /// Eliminated column indices in removal order.
    pub eliminated: Vec<usize>,
}

impl RfeResult {
    /// Rank per column: 1 for selected, then 2, 3, ... for later removals.
    pub fn ranking(&self, n_features: usize) -> Vec<usize> {
        let mut rank = vec![1; n_features];
        for (k, &j) in self.eliminated.iter().rev().enumerate() {
            rank[j] = k + 2;
        }
        rank
    }
}

/// Recursive feature elimination with a linear base model: drop the
/// feature with the smallest |coefficient| until `n_select` remain.
/// Coefficients within a relative 1e-9 tie; the higher index goes first.
pub fn rfe(x: &Matrix<f64>, y: &[f64], n_select: usize) -> Result<RfeResult, FeatureError> {
    let d = x.cols();
    if n_select == 0 || n_select > d {
        return Err(FeatureError::InvalidSelection { n_select, n_features: d });
    }
    let mut active: Vec<usize> = (0..d).collect();
    let mut eliminated = Vec::new();
    while active.len() > n_select {
        let (_, coef) = linear_coefficients(&x.select_columns(&active), y)?;
        let mags: Vec<f64> = coef.iter().map(|c| c.abs()).collect();
        let scale = mags.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0;
        for k in 1..active.len() {
            if mags[k] <= mags[worst] + 1e-9 * scale {
                worst = k;
            }
        }
        eliminated.push(active.remove(worst));
    }
    Ok(RfeResult { selected: active, eliminated })
}

/// Principal components of the sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    pub means: Vec<T>,
    /// One unit component per row, by descending eigenvalue.
    pub components: Matrix<T>,
    pub eigenvalues: Vec<T>,
    pub explained_ratio: Vec<T>,
}

impl<T: Real> PcaModel<T> {
    pub fn fit(x: &Matrix<T>) -> Result<Self, FeatureError> {
        if x.rows() < 2 {
            return Err(FeatureError::TooFewRows { needed: 2, got: x.rows() });
        }
        let cov = x.covariance()?;
        let scale = (0..cov.cols()).fold(T::one(), |m, j| m.max(cov[(j, j)]));
        let eig = jacobi_eigen(&cov, T::solver_eps() * scale, 100)?;
        let eigenvalues: Vec<T> = eig.values.iter().map(|&v| v.max(T::zero())).collect();
        let total: T = eigenvalues.iter().copied().sum();
        let explained_ratio = eigenvalues.iter().map(|&v| if total > T::zero() { v / total } else { T::zero() }).collect();
        Ok(Self { means: x.column_means(), components: eig.vectors.transpose(), eigenvalues, explained_ratio })
    }

    /// Smallest component count whose cumulative ratio reaches `threshold`.
    pub fn select(&self, threshold: T) -> usize {
        let mut acc = T::zero();
        for (k, &r) in self.explained_ratio.iter().enumerate() {
            acc = acc + r;
            if acc >= threshold - T::lit(1e-12) {
                return k + 1;
            }
        }
        self.explained_ratio.len()
    }

    pub fn transform(&self, x: &Matrix<T>, k: usize) -> Matrix<T> {
        let k = k.min(self.components.rows());
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, r) in x.row_iter().enumerate() {
            for c in 0..k {
                let comp = self.components.row(c);
                out[(i, c)] = r.iter().zip(comp).zip(&self.means).map(|((&v, &w), &m)| (v - m) * w).sum();
            }
        }
        out
    }

    pub fn inverse_transform(&self, scores: &Matrix<T>) -> Matrix<T> {
        let d = self.means.len();
        let mut out = Matrix::zeros(scores.rows(), d);
        for (i, s) in scores.row_iter().enumerate() {
            for j in 0..d {
                out[(i, j)] = self.means[j] + s.iter().enumerate().map(|(c, &v)| v * self.components[(c, j)]).sum::<T>();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Matrix<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Empty clusters reseeded during the run.
    pub restarts: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(x: &Matrix<f64>, centers: &Matrix<f64>, labels: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, r) in x.row_iter().enumerate() {
        let (mut best, mut bd) = (0, f64::INFINITY);
        for c in 0..centers.rows() {
            let d = sq_dist(r, centers.row(c));
            if d < bd {
                best = c;
                bd = d;
            }
        }
        labels[i] = best;
        dist[i] = bd;
        inertia += bd;
    }
    inertia
}

/// k-means++ seeding followed by Lloyd iterations until the largest
/// centre move is below 1e-8 or 300 iterations.
pub fn kmeans(x: &Matrix<f64>, k: usize, seed: u64) -> Result<KMeansResult, FeatureError> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(FeatureError::InvalidK { k, rows: n });
    }
    let mut rng = rng::seeded(seed);
    let d = x.cols();
    let mut centers = Matrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(x.row(first));
    let mut dist: Vec<f64> = x.row_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&w| w > 0.0).unwrap();
            }
            pick
        } else {
            c.min(n - 1)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (i, r) in x.row_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(r, x.row(pick)));
        }
    }

    let mut labels = vec![0; n];
    let mut history = Vec::new();
    let mut restarts = 0;
    let mut iterations = 0;
    for _ in 0..300 {
        iterations += 1;
        history.push(assign(x, &centers, &mut labels, &mut dist));
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, r) in x.row_iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut moved: f64 = 0.0;
        let mut taken = vec![false; n];
        for c in 0..k {
            let new: Vec<f64> = if counts[c] == 0 {
                // reseed at the point farthest from its centre
                restarts += 1;
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                x.row(far).to_vec()
            } else {
                sums.row(c).iter().map(|s| s / counts[c] as f64).collect()
            };
            moved = moved.max(sq_dist(&new, centers.row(c)).sqrt());
            centers.row_mut(c).copy_from_slice(&new);
        }
        if moved < 1e-8 {
            break;
        }
    }
    let inertia = assign(x, &centers, &mut labels, &mut dist);
    Ok(KMeansResult { labels, centers, inertia, history, iterations, restarts })
}

/// The `k` whose inertia lies farthest below the chord joining the first
/// and last points of the curve.
pub fn elbow(ks: &[usize], inertia: &[f64]) -> Option<usize> {
    if ks.len() != inertia.len() || ks.is_empty() {
        return None;
    }
    let (k0, k1) = (ks[0] as f64, ks[ks.len() - 1] as f64);
    let (i0, i1) = (inertia[0], inertia[inertia.len() - 1]);
    let mut best = (f64::NEG_INFINITY, ks[0]);
    for (&k, &v) in ks.iter().zip(inertia) {
        let chord = if k1 == k0 { i0 } else { i0 + (i1 - i0) * (k as f64 - k0) / (k1 - k0) };
        let gap = chord - v;
        if gap > best.0 {
            best = (gap, k);
        }
    }
    Some(best.1)
}
