//! Pipeline stages over in-memory artifacts.
//!
//! Each stage takes the text or bytes of its inputs and returns the files
//! it produces, keyed by path relative to the output directory. Reading,
//! writing and run bookkeeping belong to the caller.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ecv::{fill_missing_nearest, join_cells, load_ecv_csv, write_ecv_csv, EcvGrid};
use crate::features::{
    area_diff_histogram, correlation_matrix, elbow, iqr_outliers, kmeans, split_indices, zero_variance_columns, Bins,
    FeatureTable, PcaModel, ScalerParams, AREA_SCALE, TARGET,
};
use crate::grid::{intersect_layer, Bounds, GridSpec, DEFAULT_CELL_SIDE};
use crate::ingest::{fix_layer, parse_shapefile, write_shapefile};
use crate::linalg::Matrix;
use crate::models::{
    coverage, cqr_calibrate, cqr_intervals, fit_quantile_gbt, forecast_next_year, grid_search_svr, learning_curve,
    metrics, repeated_kfold, shapley_exact, Forecast, GbtParams, GridSearch, InputVariant, Metrics, ModelArtifact,
    ModelSpec, Preprocessor, Regressor, RfParams, ScoreReport, SvrGrid, SvrParams,
};
use crate::panel::{align_cells, build_supervised, final_year_frame, interpolate_years, Panel};
use crate::report::{self, Series};
use crate::rng;
use crate::stats::{compare_feature_selection, compare_models, Decision, NamedScores};
use crate::synth::{self, SynthConfig};
use crate::{CellYearRecord, Error, Result};

pub type Files = BTreeMap<String, Vec<u8>>;

const STREAM_SPLIT: u64 = 1;
const STREAM_ROWS: u64 = 2;
const STREAM_CV: u64 = 3;
const STREAM_FIT: u64 = 4;
const STREAM_GRID: u64 = 5;
const STREAM_LEARN: u64 = 6;
const STREAM_KMEANS: u64 = 7;
const STREAM_SHAP: u64 = 8;
const STREAM_CQR: u64 = 9;

pub const MODELS: [&str; 4] = ["ols", "svr", "gbt", "rf"];

/// Every tunable of the stages. Missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bounds: Bounds<f64>,
    pub cell_side: f64,
    pub observed_years: Vec<i32>,
    pub histogram_bins: usize,
    pub outlier_factor: f64,
    pub drop_outliers: bool,
    pub split_ratio: f64,
    pub kmeans_max_k: usize,
    pub kmeans_rows: usize,
    pub models: Vec<String>,
    pub variants: Vec<InputVariant>,
    /// Training rows used per model; models not listed use every row.
    pub row_caps: BTreeMap<String, usize>,
    pub cv_splits: usize,
    pub cv_repeats: usize,
    pub learning_fractions: Vec<f64>,
    pub learning_splits: usize,
    /// Used as is when `svr_search` is off.
    pub svr: SvrParams,
    pub svr_search: bool,
    pub svr_grid: SvrGrid,
    pub grid_rows: usize,
    pub grid_folds: usize,
    pub gbt: GbtParams,
    pub rf: RfParams,
    pub alpha: f64,
    pub rfe_sweep: Vec<usize>,
    pub cqr_alpha: f64,
    /// Fraction of the CQR rows held out for calibration.
    pub cqr_calibration: f64,
    pub cqr_rows: usize,
    /// Artifact stem under `models/`, e.g. `gbt_scaled`.
    pub shap_model: String,
    pub shap_background: usize,
    pub shap_rows: usize,
    pub forecast_model: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bounds: Bounds::mangrove_extent(),
            cell_side: DEFAULT_CELL_SIDE,
            observed_years: vec![1996, 2007, 2008, 2009, 2010, 2015, 2016],
            histogram_bins: 60,
            outlier_factor: 3.0,
            drop_outliers: false,
            split_ratio: 0.8,
            kmeans_max_k: 10,
            kmeans_rows: 5000,
            models: MODELS.iter().map(|m| m.to_string()).collect(),
            variants: vec![InputVariant::Scaled, InputVariant::Rfe { n_select: 5 }, InputVariant::Pca { threshold: 0.69 }],
            row_caps: [("svr", 300), ("gbt", 3000), ("rf", 1500)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            cv_splits: 10,
            cv_repeats: 10,
            learning_fractions: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            learning_splits: 5,
            svr: SvrParams::default(),
            svr_search: true,
            svr_grid: SvrGrid::default(),
            grid_rows: 150,
            grid_folds: 3,
            gbt: GbtParams::default(),
            rf: RfParams::default(),
            alpha: 0.05,
            rfe_sweep: vec![5, 6, 7, 8, 9],
            cqr_alpha: 0.1,
            cqr_calibration: 0.5,
            cqr_rows: 4000,
            shap_model: "gbt_scaled".into(),
            shap_background: 50,
            shap_rows: 100,
            forecast_model: "ols_scaled".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(m) = self.models.iter().find(|m| !MODELS.contains(&m.as_str())) {
            return bad(format!("unknown model {m:?}"));
        }
        if self.observed_years.len() < 2 || self.observed_years.windows(2).any(|w| w[0] >= w[1]) {
            return bad("observed_years must hold two or more ascending years".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) || !(self.cqr_calibration > 0.0 && self.cqr_calibration < 1.0) {
            return bad("split_ratio and cqr_calibration must lie in (0, 1)".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.cqr_alpha > 0.0 && self.cqr_alpha < 1.0) {
            return bad("alpha and cqr_alpha must lie in (0, 1)".into());
        }
        if self.cv_splits < 2 || self.cv_repeats == 0 || self.grid_folds < 2 || self.learning_splits < 2 {
            return bad("need at least 2 folds and 1 repeat".into());
        }
        if self.variants.is_empty() || self.histogram_bins == 0 || self.kmeans_max_k == 0 {
            return bad("variants, histogram_bins and kmeans_max_k must be non-empty".into());
        }
        Ok(())
    }
}

/// File stem for a variant: `scaled`, `rfe` or `pca`.
pub fn variant_key(v: &InputVariant) -> &'static str {
    match v {
        InputVariant::Scaled => "scaled",
        InputVariant::Rfe { .. } => "rfe",
        InputVariant::Pca { .. } => "pca",
    }
}

fn model_spec(name: &str, cfg: &PipelineConfig, svr: SvrParams) -> Result<ModelSpec> {
    Ok(match name {
        "ols" => ModelSpec::Ols,
        "svr" => ModelSpec::Svr(svr),
        "gbt" => ModelSpec::Gbt(cfg.gbt),
        "rf" => ModelSpec::Rf(cfg.rf),
        other => return Err(Error::Config(format!("unknown model {other:?}"))),
    })
}

/// Sorted subset of `cap` rows: a prefix of one seeded permutation, so
/// smaller caps give nested subsets.
fn cap_rows(n: usize, cap: Option<usize>, seed: u64) -> Vec<usize> {
    match cap {
        Some(c) if c < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng::child(seed, STREAM_ROWS));
            let mut out = idx[..c].to_vec();
            out.sort_unstable();
            out
        }
        _ => (0..n).collect(),
    }
}

fn to_csv<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_with_header<S: Serialize>(header: &[&str], rows: impl IntoIterator<Item = S>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn selected<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

pub fn synth_stage(cfg: &SynthConfig, seed: u64) -> Result<Files> {
    let data = synth::generate(cfg, seed)?;
    let mut files = Files::new();
    for layer in &data.layers {
        files.insert(format!("inputs/layers/{}.shp", layer.year), write_shapefile(&layer.polygons));
    }
    for g in &data.ecv {
        files.insert(format!("inputs/ecv/{}.csv", g.year), write_ecv_csv(std::slice::from_ref(g)).into_bytes());
    }
    Ok(files)
}

pub fn grid_stage(cfg: &PipelineConfig) -> Result<Files> {
    let grid = GridSpec::generate(cfg.bounds, cfg.cell_side)?;
    Ok(Files::from([("grid.csv".into(), to_csv(grid.cells())?)]))
}

#[derive(Serialize)]
struct FixRow {
    year: i32,
    input_polygons: usize,
    dropped_polygons: usize,
    dropped_holes: usize,
    self_intersecting_rings: usize,
}

/// Parses, repairs and grids every yearly layer.
pub fn intersect_stage(cfg: &PipelineConfig, layers: &[(i32, Vec<u8>)]) -> Result<Files> {
    let grid = GridSpec::generate(cfg.bounds, cfg.cell_side)?;
    let mut files = Files::new();
    let mut fixes = Vec::new();
    for (year, bytes) in layers {
        let (layer, fix) = fix_layer(&parse_shapefile(bytes, *year)?);
        files.insert(format!("intersect/{year}.csv"), to_csv(intersect_layer(&layer, &grid))?);
        fixes.push(FixRow {
            year: *year,
            input_polygons: fix.input_polygons,
            dropped_polygons: fix.dropped_polygons,
            dropped_holes: fix.dropped_holes,
            self_intersecting_rings: fix.self_intersecting_rings,
        });
    }
    files.insert("intersect/fix_report.csv".into(), to_csv(fixes)?);
    Ok(files)
}

pub fn panel_stage(cfg: &PipelineConfig, yearly: &[(i32, String)]) -> Result<Files> {
    let parsed = yearly
        .iter()
        .map(|(y, text)| Ok((*y, from_csv::<CellYearRecord>(text)?)))
        .collect::<Result<Vec<_>>>()?;
    let years: Vec<i32> = parsed.iter().map(|p| p.0).collect();
    if years != cfg.observed_years {
        return Err(Error::Config(format!("intersected years {years:?} differ from observed_years")));
    }
    let panel = interpolate_years(&align_cells(&parsed)?)?;
    let hist = area_diff_histogram(&panel, Bins::Count(cfg.histogram_bins));
    let mut files = Files::new();
    files.insert("panel.csv".into(), to_csv(&panel.rows)?);
    files.insert("eda/area_diff_histogram.csv".into(), report::histogram_csv(&hist).into_bytes());
    files.insert(
        "eda/area_diff_histogram.svg".into(),
        report::svg_histogram("Year-on-year area change per cell", "area(y) - area(y-1) [deg^2]", &hist).into_bytes(),
    );
    Ok(files)
}

fn read_panel(cfg: &PipelineConfig, text: &str) -> Result<Panel> {
    let mut rows: Vec<CellYearRecord> = from_csv(text)?;
    rows.sort_by_key(|r| (r.cell_id, r.year));
    let mut years: Vec<i32> = rows.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();
    Ok(Panel { rows, years, observed_years: cfg.observed_years.clone() })
}

#[derive(Serialize)]
struct FillRow {
    year: i32,
    points: usize,
    missing: usize,
    filled: usize,
}

/// Nearest-known fill of every climate grid, then the lag-target table and
/// the final-year forecast frame.
pub fn join_stage(cfg: &PipelineConfig, panel_csv: &str, ecv_texts: &[String]) -> Result<Files> {
    let panel = read_panel(cfg, panel_csv)?;
    let mut by_year: BTreeMap<i32, EcvGrid> = BTreeMap::new();
    for text in ecv_texts {
        for g in load_ecv_csv(text)? {
            let year = g.year;
            if by_year.insert(year, g).is_some() {
                return Err(Error::Config(format!("climate grid for {year} supplied twice")));
            }
        }
    }
    let mut fills = Vec::new();
    let mut grids = Vec::new();
    for g in by_year.values() {
        let out = fill_missing_nearest(g);
        fills.push(FillRow { year: g.year, points: g.n_points(), missing: g.missing_count(), filled: out.filled });
        grids.push(out.into_result()?);
    }
    let table = join_cells(&build_supervised(&panel), &grids)?;
    let frame = join_cells(&final_year_frame(&panel), &grids)?;
    Ok(Files::from([
        ("features.csv".into(), table.to_csv().into_bytes()),
        ("frame.csv".into(), frame.to_csv().into_bytes()),
        ("ecv_fill.csv".into(), to_csv(fills)?),
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdaSummary {
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub area_outliers: usize,
    pub outliers_dropped: bool,
    pub zero_variance_columns: usize,
    pub pca_components: usize,
    pub elbow_k: usize,
}

/// Area scaling, EDA tables and figures, and the train/test split.
pub fn features_stage(cfg: &PipelineConfig, features_csv: &str, frame_csv: &str, seed: u64) -> Result<(EdaSummary, Files)> {
    let mut table = FeatureTable::from_csv(features_csv)?.scale_areas();
    let frame = FeatureTable::from_csv(frame_csv)?.scale_areas();
    let y = table.target()?.to_vec();
    let mut files = Files::new();

    let mut labels = table.columns.clone();
    labels.push(TARGET.into());
    let with_target = table.x.hstack(&Matrix::from_vec(y.len(), 1, y.clone())?)?;
    let corr = correlation_matrix(&with_target)?;
    files.insert("eda/correlation.csv".into(), report::matrix_csv(&labels, &corr.matrix).into_bytes());
    files.insert("eda/correlation.svg".into(), report::svg_heatmap("Correlation of variables", &labels, &corr.matrix).into_bytes());

    let area_col = table.column("area").ok_or_else(|| Error::Config("feature table has no area column".into()))?;
    let outliers = iqr_outliers(&area_col, cfg.outlier_factor);
    files.insert(
        "eda/area_outliers.csv".into(),
        csv_with_header(
            &["row", "cell_id", "year", "area"],
            outliers.iter().map(|&i| (i, table.cell_ids[i], table.years[i], area_col[i])),
        )?,
    );
    let n_rows = table.n_rows();
    if cfg.drop_outliers && !outliers.is_empty() {
        let keep: Vec<usize> = (0..n_rows).filter(|i| outliers.binary_search(i).is_err()).collect();
        table = table.select_rows(&keep);
    }

    let (tr, te) = split_indices(table.n_rows(), cfg.split_ratio, rng::derive_seed(seed, STREAM_SPLIT))?;
    let (train, test) = (table.select_rows(&tr), table.select_rows(&te));

    let zero = zero_variance_columns(&train.x);
    let kept: Vec<usize> = (0..train.x.cols()).filter(|j| !zero.contains(j)).collect();
    let xk = train.x.select_columns(&kept);
    let z = ScalerParams::fit(&xk)?.apply(&xk);
    let pca = PcaModel::fit(&z)?;
    let k_pca = cfg.variants.iter().find_map(|v| match v {
        InputVariant::Pca { threshold } => Some(pca.select(*threshold)),
        _ => None,
    });
    let mut cum = 0.0;
    let pca_rows: Vec<(usize, f64, f64, f64)> = pca
        .eigenvalues
        .iter()
        .zip(&pca.explained_ratio)
        .enumerate()
        .map(|(c, (&e, &r))| {
            cum += r;
            (c + 1, e, r, cum)
        })
        .collect();
    files.insert(
        "eda/pca.csv".into(),
        csv_with_header(&["component", "eigenvalue", "explained_ratio", "cumulative"], &pca_rows)?,
    );

    let sub = cap_rows(z.rows(), Some(cfg.kmeans_rows), rng::derive_seed(seed, STREAM_KMEANS));
    let zs = z.select_rows(&sub);
    let ks: Vec<usize> = (1..=cfg.kmeans_max_k.min(zs.rows())).collect();
    let fits = ks
        .iter()
        .map(|&k| kmeans(&zs, k, rng::derive_seed(seed, STREAM_KMEANS + ((k as u64) << 8))))
        .collect::<Result<Vec<_>, _>>()?;
    let inertia: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let elbow_k = elbow(&ks, &inertia).unwrap_or(1);
    files.insert(
        "eda/kmeans_elbow.csv".into(),
        csv_with_header(&["k", "inertia", "iterations", "restarts"], fits.iter().zip(&ks).map(|(f, k)| (k, f.inertia, f.iterations, f.restarts)))?,
    );
    let curve = Series { name: format!("elbow at k = {elbow_k}"), points: ks.iter().map(|&k| k as f64).zip(inertia.iter().copied()).collect() };
    files.insert("eda/kmeans_elbow.svg".into(), report::svg_lines("k-means inertia", "k", "inertia", &[curve]).into_bytes());

    files.insert("train.csv".into(), train.to_csv().into_bytes());
    files.insert("test.csv".into(), test.to_csv().into_bytes());
    files.insert("forecast_frame.csv".into(), frame.to_csv().into_bytes());
    let summary = EdaSummary {
        rows: n_rows,
        train_rows: train.n_rows(),
        test_rows: test.n_rows(),
        area_outliers: outliers.len(),
        outliers_dropped: cfg.drop_outliers,
        zero_variance_columns: zero.len(),
        pca_components: k_pca.unwrap_or(0),
        elbow_k,
    };
    files.insert("eda/summary.csv".into(), to_csv([&summary])?);
    Ok((summary, files))
}

fn feature_table(text: &str) -> Result<(FeatureTable, Vec<f64>)> {
    let t = FeatureTable::from_csv(text)?;
    let y = t.target()?.to_vec();
    Ok((t, y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub variant: String,
    pub label: String,
    pub n_train: usize,
    pub folds: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub test_r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub reports: Vec<ScoreReport>,
    pub summary: Vec<SummaryRow>,
    pub grid: Option<GridSearch>,
    pub svr: SvrParams,
}

impl TrainOutcome {
    pub fn summary_row(&self, model: &str, variant: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.model == model && s.variant == variant)
    }
}

/// SVR parameters: the grid-search winner on a row subset, or the
/// configured ones.
pub fn select_svr(cfg: &PipelineConfig, train: &FeatureTable, y: &[f64], seed: u64) -> Result<(SvrParams, Option<GridSearch>)> {
    if !cfg.svr_search {
        return Ok((cfg.svr, None));
    }
    let idx = cap_rows(train.n_rows(), Some(cfg.grid_rows), seed);
    let xs = train.x.select_rows(&idx);
    let ys = selected(y, &idx);
    let prep = Preprocessor::fit(&xs, &train.columns, &ys, InputVariant::Scaled)?;
    let g = grid_search_svr(&prep.transform(&xs), &ys, &cfg.svr_grid, cfg.grid_folds, rng::derive_seed(seed, STREAM_GRID))?;
    Ok((g.best(), Some(g)))
}

/// Cross-validated scores, a final fit and a test score for every
/// (model, input variant) pair, plus learning curves per model.
pub fn train_stage(cfg: &PipelineConfig, train_csv: &str, test_csv: &str, seed: u64) -> Result<(TrainOutcome, Files)> {
    let (train, y) = feature_table(train_csv)?;
    let (test, y_test) = feature_table(test_csv)?;
    let mut files = Files::new();
    let (svr, grid) = if cfg.models.iter().any(|m| m == "svr") { select_svr(cfg, &train, &y, seed)? } else { (cfg.svr, None) };
    if let Some(g) = &grid {
        files.insert("train/svr_grid.csv".into(), g.to_csv().into_bytes());
    }
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    let mut all_scores = String::from(ScoreReport::CSV_HEADER);
    all_scores.push('\n');
    for name in &cfg.models {
        let spec = model_spec(name, cfg, svr)?;
        let idx = cap_rows(train.n_rows(), cfg.row_caps.get(name).copied(), seed);
        let xs = train.x.select_rows(&idx);
        let ys = selected(&y, &idx);
        for (vi, variant) in cfg.variants.iter().enumerate() {
            let key = variant_key(variant);
            let prep = Preprocessor::fit(&xs, &train.columns, &ys, *variant)?;
            let xz = prep.transform(&xs);
            let mut rep = repeated_kfold(&spec, &xz, &ys, cfg.cv_splits, cfg.cv_repeats, rng::derive_seed(seed, STREAM_CV))?;
            rep.variant = prep.label();
            let model = spec.fit(&xz, &ys, rng::derive_seed(seed, STREAM_FIT))?;
            let artifact = ModelArtifact::new(spec.clone(), prep, model);
            let t: Metrics = metrics(&y_test, &artifact.predict_raw(&test.x));
            let [mse, mae, r2] = rep.summary();
            summary.push(SummaryRow {
                model: name.clone(),
                variant: key.into(),
                label: rep.variant.clone(),
                n_train: idx.len(),
                folds: rep.folds.len(),
                mse_mean: mse.0,
                mse_std: mse.1,
                mae_mean: mae.0,
                mae_std: mae.1,
                r2_mean: r2.0,
                r2_std: r2.1,
                test_mse: t.mse,
                test_mae: t.mae,
                test_r2: t.r2,
            });
            let rows = rep.csv_rows();
            files.insert(format!("train/scores/{name}_{key}.csv"), format!("{}\n{rows}", ScoreReport::CSV_HEADER).into_bytes());
            all_scores.push_str(&rows);
            files.insert(format!("models/{name}_{key}.json"), artifact.to_json().into_bytes());
            if vi == 0 {
                let curve = learning_curve(
                    &spec,
                    &artifact.preprocessor.transform(&xs),
                    &ys,
                    &cfg.learning_fractions,
                    cfg.learning_splits,
                    rng::derive_seed(seed, STREAM_LEARN),
                )?;
                files.insert(format!("train/learning/{name}.csv"), to_csv(&curve)?);
                let series = [
                    Series { name: "training".into(), points: curve.iter().map(|p| (p.n_train as f64, p.train_r2)).collect() },
                    Series { name: "validation".into(), points: curve.iter().map(|p| (p.n_train as f64, p.validation_r2)).collect() },
                ];
                files.insert(
                    format!("train/learning/{name}.svg"),
                    report::svg_lines(&format!("Learning curve: {name} ({})", rep.variant), "training rows", "R^2", &series).into_bytes(),
                );
            }
            reports.push(rep);
        }
    }
    files.insert("train/scores.csv".into(), all_scores.into_bytes());
    files.insert("train/summary.csv".into(), to_csv(&summary)?);
    Ok((TrainOutcome { reports, summary, grid, svr }, files))
}

#[derive(Deserialize)]
struct ScoreLine {
    model: String,
    variant: String,
    repeat: usize,
    fold: usize,
    mse: f64,
    mae: f64,
    r2: f64,
}

/// Inverse of the combined score CSV; reports keep first-seen order.
pub fn parse_scores(text: &str) -> Result<Vec<ScoreReport>> {
    let mut out: Vec<ScoreReport> = Vec::new();
    for line in from_csv::<ScoreLine>(text)? {
        let fold = crate::models::FoldScore { repeat: line.repeat, fold: line.fold, mse: line.mse, mae: line.mae, r2: line.r2 };
        match out.iter_mut().find(|r| r.model == line.model && r.variant == line.variant) {
            Some(r) => r.folds.push(fold),
            None => out.push(ScoreReport { model: line.model, variant: line.variant, splits: 0, repeats: 0, folds: vec![fold] }),
        }
    }
    for r in &mut out {
        r.repeats = r.folds.iter().map(|f| f.repeat + 1).max().unwrap_or(0);
        r.splits = r.folds.iter().map(|f| f.fold + 1).max().unwrap_or(0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub models: Decision,
    /// Model the feature-count sweep ran on.
    pub sweep_model: String,
    pub feature_selection: Decision,
}

/// Model comparison on scaled inputs, then the RFE feature-count sweep on
/// the winning (or highest-mean) model against its scaled variant.
pub fn compare_stage(cfg: &PipelineConfig, scores_csv: &str, train_csv: &str, seed: u64) -> Result<(CompareOutcome, Files)> {
    let reports = parse_scores(scores_csv)?;
    let scaled: Vec<NamedScores> =
        reports.iter().filter(|r| r.variant == "scaled").map(|r| NamedScores::new(r.model.clone(), r.r2_scores())).collect();
    if scaled.len() < 2 {
        return Err(Error::Config("model comparison needs scaled-input scores of at least two models".into()));
    }
    let models = compare_models(&scaled, cfg.alpha)?;
    let sweep_model = models.best.clone().unwrap_or_else(|| {
        scaled.iter().fold(&scaled[0], |b, s| if s.mean() > b.mean() { s } else { b }).name.clone()
    });
    let base = scaled.iter().find(|s| s.name == sweep_model).cloned().expect("sweep model has scores");

    let (train, y) = feature_table(train_csv)?;
    let (svr, _) = if sweep_model == "svr" { select_svr(cfg, &train, &y, seed)? } else { (cfg.svr, None) };
    let spec = model_spec(&sweep_model, cfg, svr)?;
    let idx = cap_rows(train.n_rows(), cfg.row_caps.get(&sweep_model).copied(), seed);
    let xs = train.x.select_rows(&idx);
    let ys = selected(&y, &idx);
    let mut sweep = Vec::new();
    let mut rows = format!("{}\n", ScoreReport::CSV_HEADER);
    for &n in cfg.rfe_sweep.iter().filter(|&&n| n >= 1 && n < train.columns.len()) {
        let prep = Preprocessor::fit(&xs, &train.columns, &ys, InputVariant::Rfe { n_select: n })?;
        let mut rep = repeated_kfold(&spec, &prep.transform(&xs), &ys, cfg.cv_splits, cfg.cv_repeats, rng::derive_seed(seed, STREAM_CV))?;
        rep.variant = prep.label();
        rows.push_str(&rep.csv_rows());
        sweep.push(NamedScores::new(rep.variant.clone(), rep.r2_scores()));
    }
    let feature_selection = compare_feature_selection(&NamedScores::new("scaled", base.scores), &sweep, cfg.alpha)?;
    let text = format!(
        "Model comparison (scaled inputs)\n{}\nFeature selection on {sweep_model}\n{}",
        models.to_text(),
        feature_selection.to_text()
    );
    let mut csv = models.to_csv();
    csv.push_str(feature_selection.to_csv().split_once('\n').map_or("", |(_, rest)| rest));
    let files = Files::from([
        ("compare/decision.txt".into(), text.into_bytes()),
        ("compare/decision.csv".into(), csv.into_bytes()),
        ("compare/rfe_sweep.csv".into(), rows.into_bytes()),
    ]);
    Ok((CompareOutcome { models, sweep_model, feature_selection }, files))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Importance {
    pub feature: String,
    pub mean_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapOutcome {
    /// Descending by mean |phi|.
    pub importance: Vec<Importance>,
    pub max_efficiency_residual: f64,
}

#[derive(Serialize)]
struct ShapRow<'a> {
    row: usize,
    cell_id: u64,
    year: i32,
    feature: &'a str,
    value: f64,
    phi: f64,
}

/// Exact Shapley values of one saved model on test rows, against a
/// background drawn from the training rows. Attributions refer to the
/// model's own (preprocessed) inputs.
pub fn shap_stage(cfg: &PipelineConfig, model_json: &str, train_csv: &str, test_csv: &str, seed: u64) -> Result<(ShapOutcome, Files)> {
    let artifact = ModelArtifact::from_json(model_json)?;
    let (train, _) = feature_table(train_csv)?;
    let test = FeatureTable::from_csv(test_csv)?;
    let prep = &artifact.preprocessor;
    let bg_idx = cap_rows(train.n_rows(), Some(cfg.shap_background), rng::derive_seed(seed, STREAM_SHAP));
    let background = prep.transform(&train.x.select_rows(&bg_idx));
    let rows = cap_rows(test.n_rows(), Some(cfg.shap_rows), rng::derive_seed(seed, STREAM_SHAP + 1));
    let xz = prep.transform(&test.x.select_rows(&rows));
    let names = prep.output_names();
    let mut values = Vec::new();
    let mut abs_sum = vec![0.0; names.len()];
    let mut residual: f64 = 0.0;
    let mut per_feature: Vec<Vec<(f64, f64)>> = vec![Vec::new(); names.len()];
    for (k, &r) in rows.iter().enumerate() {
        let x = xz.row(k);
        let s = shapley_exact(&artifact.model, x, &background)?;
        let direct = artifact.model.predict_row(x);
        residual = residual.max((s.phi.iter().sum::<f64>() - (direct - s.base_value)).abs());
        for (j, &p) in s.phi.iter().enumerate() {
            abs_sum[j] += p.abs();
            per_feature[j].push((x[j], p));
            values.push(ShapRow { row: r, cell_id: test.cell_ids[r], year: test.years[r], feature: &names[j], value: x[j], phi: p });
        }
    }
    let n = rows.len().max(1) as f64;
    let mut importance: Vec<Importance> =
        names.iter().zip(&abs_sum).map(|(f, s)| Importance { feature: f.clone(), mean_abs_phi: s / n }).collect();
    importance.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    let mut files = Files::new();
    files.insert("shap/values.csv".into(), to_csv(&values)?);
    files.insert("shap/importance.csv".into(), to_csv(&importance)?);
    files.insert(
        "shap/importance.svg".into(),
        report::svg_bars(
            "Mean |SHAP value|",
            "mean |phi|",
            &importance.iter().map(|i| i.feature.clone()).collect::<Vec<_>>(),
            &importance.iter().map(|i| i.mean_abs_phi).collect::<Vec<_>>(),
        )
        .into_bytes(),
    );
    let summary: Vec<Series> = importance
        .iter()
        .take(6)
        .map(|imp| {
            let j = names.iter().position(|f| *f == imp.feature).expect("feature name");
            Series { name: imp.feature.clone(), points: per_feature[j].iter().map(|&(v, p)| (p, v)).collect() }
        })
        .collect();
    files.insert("shap/summary.svg".into(), report::svg_lines("SHAP values by feature", "phi", "feature value", &summary).into_bytes());
    for feature in ["salinity", "area"] {
        if let Some(j) = names.iter().position(|f| f == feature) {
            let mut pts = per_feature[j].clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            files.insert(format!("shap/dependence_{feature}.csv"), csv_with_header(&["value", "phi"], &pts)?);
            files.insert(
                format!("shap/dependence_{feature}.svg"),
                report::svg_scatter(&format!("Dependence: {feature}"), &format!("{feature} (standardized)"), "phi", &pts).into_bytes(),
            );
        }
    }
    files.insert(
        "shap/summary.csv".into(),
        csv_with_header(&["rows", "background", "max_efficiency_residual"], [(rows.len(), bg_idx.len(), residual)])?,
    );
    Ok((ShapOutcome { importance, max_efficiency_residual: residual }, files))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CqrOutcome {
    pub alpha: f64,
    pub offset: f64,
    pub n_calibration: usize,
    pub n_test: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Quantile boosting at `alpha/2` and `1 - alpha/2` on scaled inputs,
/// conformalized on a held-out calibration split and scored on the test
/// split.
pub fn cqr_stage(cfg: &PipelineConfig, train_csv: &str, test_csv: &str, seed: u64) -> Result<(CqrOutcome, Files)> {
    let (train, y) = feature_table(train_csv)?;
    let (test, y_test) = feature_table(test_csv)?;
    let idx = cap_rows(train.n_rows(), Some(cfg.cqr_rows), rng::derive_seed(seed, STREAM_CQR));
    let (fit_pos, cal_pos) = split_indices(idx.len(), 1.0 - cfg.cqr_calibration, rng::derive_seed(seed, STREAM_CQR + 1))?;
    let fit_idx = selected(&idx, &fit_pos);
    let cal_idx = selected(&idx, &cal_pos);
    let xf = train.x.select_rows(&fit_idx);
    let yf = selected(&y, &fit_idx);
    let prep = Preprocessor::fit(&xf, &train.columns, &yf, InputVariant::Scaled)?;
    let a = cfg.cqr_alpha;
    let lo = fit_quantile_gbt(&prep.transform(&xf), &yf, a / 2.0, &cfg.gbt)?;
    let hi = fit_quantile_gbt(&prep.transform(&xf), &yf, 1.0 - a / 2.0, &cfg.gbt)?;
    let xc = prep.transform(&train.x.select_rows(&cal_idx));
    let q = cqr_calibrate(&lo.predict(&xc), &hi.predict(&xc), &selected(&y, &cal_idx), a)?;
    let xt = prep.transform(&test.x);
    let intervals = cqr_intervals(&lo.predict(&xt), &hi.predict(&xt), q);
    let cov = coverage(&intervals, &y_test);
    let mean_width = intervals.iter().map(|iv| iv.upper - iv.lower).sum::<f64>() / intervals.len().max(1) as f64;
    let outcome = CqrOutcome { alpha: a, offset: q, n_calibration: cal_idx.len(), n_test: test.n_rows(), coverage: cov, mean_width };
    let rows = (0..test.n_rows()).map(|i| {
        let iv = intervals[i];
        (test.cell_ids[i], test.years[i], y_test[i], iv.lower, iv.upper, iv.lower <= y_test[i] && y_test[i] <= iv.upper)
    });
    let files = Files::from([
        ("cqr/intervals.csv".into(), csv_with_header(&["cell_id", "year", "y", "lower", "upper", "covered"], rows)?),
        ("cqr/summary.csv".into(), to_csv([outcome])?),
    ]);
    Ok((outcome, files))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastSummary {
    pub model: String,
    pub target_year: i32,
    pub cells: usize,
    /// In the scaled units of the training table.
    pub mean_change: f64,
    pub mean_change_deg2: f64,
    pub negative_predictions: usize,
}

/// One-step forecast from the final-year frame with a saved model.
pub fn forecast_stage(model_name: &str, model_json: &str, frame_csv: &str) -> Result<(Forecast, Files)> {
    let artifact = ModelArtifact::from_json(model_json)?;
    let frame = FeatureTable::from_csv(frame_csv)?;
    let f = forecast_next_year(&artifact, &frame)?;
    let summary = ForecastSummary {
        model: model_name.into(),
        target_year: f.rows.first().map_or(0, |r| r.year),
        cells: f.rows.len(),
        mean_change: f.mean_change,
        mean_change_deg2: f.mean_change / AREA_SCALE,
        negative_predictions: f.n_negative,
    };
    let files = Files::from([
        ("forecast/forecast.csv".into(), f.to_csv().into_bytes()),
        ("forecast/summary.csv".into(), to_csv([summary])?),
    ]);
    Ok((f, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_nest() {
        let a = cap_rows(50, Some(10), 3);
        let b = cap_rows(50, Some(20), 3);
        assert!(a.iter().all(|i| b.contains(i)));
        assert_eq!(cap_rows(5, Some(10), 3), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn toy_grid_has_four_cells() {
        let cfg = PipelineConfig { bounds: Bounds::new(0.0, 2.0, 0.0, 2.0), cell_side: 1.0, ..Default::default() };
        let files = grid_stage(&cfg).unwrap();
        let text = String::from_utf8(files["grid.csv"].clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("cell_id,col,row,left,right,bottom,top\n"));
    }

    #[test]
    fn config_rejects_unknown_model() {
        let cfg = PipelineConfig { models: vec!["mlp".into()], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
