use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_svr, metrics, r2, FittedModel, Kernel, ModelError, ModelSpec, Regressor, SvrParams};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::ceil_tolerant;

/// Shuffled k-fold partition: fold sizes differ by at most one and the
/// first `n % splits` folds take the extra row. Indices within a fold are
/// ascending.
pub fn kfold_assignments(n: usize, splits: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed));
    let (base, extra) = (n / splits, n % splits);
    let mut folds = Vec::with_capacity(splits);
    let mut start = 0;
    for f in 0..splits {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    folds
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut in_fold = vec![false; n];
    fold.iter().for_each(|&i| in_fold[i] = true);
    (0..n).filter(|&i| !in_fold[i]).collect()
}

fn select(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model: String,
    pub variant: String,
    pub splits: usize,
    pub repeats: usize,
    pub folds: Vec<FoldScore>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = if n > 1.0 { v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

impl ScoreReport {
    pub fn r2_scores(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.r2).collect()
    }

    pub fn mean_r2(&self) -> f64 {
        mean_std(self.folds.iter().map(|f| f.r2)).0
    }

    /// Mean and sample standard deviation of `(mse, mae, r2)`.
    pub fn summary(&self) -> [(f64, f64); 3] {
        [
            mean_std(self.folds.iter().map(|f| f.mse)),
            mean_std(self.folds.iter().map(|f| f.mae)),
            mean_std(self.folds.iter().map(|f| f.r2)),
        ]
    }

    pub const CSV_HEADER: &'static str = "model,variant,repeat,fold,mse,mae,r2";

    pub fn csv_rows(&self) -> String {
        self.folds
            .iter()
            .map(|f| format!("{},{},{},{},{},{},{}\n", self.model, self.variant, f.repeat, f.fold, f.mse, f.mae, f.r2))
            .collect()
    }
}

fn fold_seed(seed: u64, repeat: usize, fold: usize) -> u64 {
    rng::derive_seed(seed, (1 << 32) | ((repeat as u64) << 16) | fold as u64)
}

/// Runs every (repeat, fold) fit; results come back in canonical order.
fn cross_validate(
    spec: &ModelSpec,
    x: &Matrix<f64>,
    y: &[f64],
    splits: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<(FoldScore, Option<f64>)>, ModelError> {
    let n = x.rows();
    if splits < 2 || splits > n || repeats == 0 {
        return Err(ModelError::InvalidParams(format!("{splits} splits x {repeats} repeats on {n} rows")));
    }
    let plan: Vec<(usize, usize, Vec<usize>)> = (0..repeats)
        .flat_map(|r| {
            kfold_assignments(n, splits, rng::derive_seed(seed, r as u64))
                .into_iter()
                .enumerate()
                .map(move |(f, fold)| (r, f, fold))
        })
        .collect();
    plan.par_iter()
        .map(|(r, f, test)| {
            let train = complement(n, test);
            let model = spec.fit(&x.select_rows(&train), &select(y, &train), fold_seed(seed, *r, *f))?;
            let m = metrics(&select(y, test), &model.predict(&x.select_rows(test)));
            let kkt = match &model {
                FittedModel::Svr(s) => Some(s.kkt_violation),
                _ => None,
            };
            Ok((FoldScore { repeat: *r, fold: *f, mse: m.mse, mae: m.mae, r2: m.r2 }, kkt))
        })
        .collect()
}

/// Repeated shuffled k-fold; `splits * repeats` fold scores.
pub fn repeated_kfold(
    spec: &ModelSpec,
    x: &Matrix<f64>,
    y: &[f64],
    splits: usize,
    repeats: usize,
    seed: u64,
) -> Result<ScoreReport, ModelError> {
    let folds = cross_validate(spec, x, y, splits, repeats, seed)?.into_iter().map(|(s, _)| s).collect();
    Ok(ScoreReport { model: spec.name().into(), variant: String::new(), splits, repeats, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub fraction: f64,
    pub n_train: usize,
    pub train_r2: f64,
    pub validation_r2: f64,
}

/// Mean train and validation R² when fitting on growing prefixes of each
/// shuffled training fold.
pub fn learning_curve(
    spec: &ModelSpec,
    x: &Matrix<f64>,
    y: &[f64],
    fractions: &[f64],
    splits: usize,
    seed: u64,
) -> Result<Vec<LearningPoint>, ModelError> {
    let n = x.rows();
    if splits < 2 || splits > n {
        return Err(ModelError::InvalidParams(format!("{splits} splits on {n} rows")));
    }
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(ModelError::InvalidParams("fractions must lie in (0, 1]".into()));
    }
    let folds = kfold_assignments(n, splits, seed);
    let trains: Vec<Vec<usize>> = folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let mut t = complement(n, fold);
            t.shuffle(&mut rng::child(seed, 1 + f as u64));
            t
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..fractions.len()).flat_map(|s| (0..splits).map(move |f| (s, f))).collect();
    let scores: Vec<(f64, f64, usize)> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let m = (ceil_tolerant(fractions[s] * trains[f].len() as f64) as usize).clamp(1, trains[f].len());
            let train = &trains[f][..m];
            let xt = x.select_rows(train);
            let yt = select(y, train);
            let model = spec.fit(&xt, &yt, fold_seed(seed, s, f))?;
            let tr = r2(&yt, &model.predict(&xt));
            let va = r2(&select(y, &folds[f]), &model.predict(&x.select_rows(&folds[f])));
            Ok((tr, va, m))
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(fractions
        .iter()
        .enumerate()
        .map(|(s, &fraction)| {
            let chunk = &scores[s * splits..(s + 1) * splits];
            LearningPoint {
                fraction,
                n_train: chunk.iter().map(|c| c.2).sum::<usize>() / splits,
                train_r2: chunk.iter().map(|c| c.0).sum::<f64>() / splits as f64,
                validation_r2: chunk.iter().map(|c| c.1).sum::<f64>() / splits as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub kernels: Vec<Kernel>,
}

impl Default for SvrGrid {
    fn default() -> Self {
        Self {
            c: vec![0.1, 10.0, 100.0],
            gamma: vec![1.0, 0.01],
            epsilon: vec![0.01, 0.0001],
            kernels: vec![Kernel::Linear, Kernel::Rbf, Kernel::Poly],
        }
    }
}

impl SvrGrid {
    /// Cells with C outermost and kernel innermost.
    pub fn cells(&self) -> Vec<SvrParams> {
        let mut out = Vec::with_capacity(self.len());
        for &c in &self.c {
            for &gamma in &self.gamma {
                for &epsilon in &self.epsilon {
                    for &kernel in &self.kernels {
                        out.push(SvrParams { c, gamma, epsilon, kernel });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.c.len() * self.gamma.len() * self.epsilon.len() * self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: SvrParams,
    /// NaN when some fold hit the iteration cap.
    pub mean_r2: f64,
    pub max_kkt_violation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub cells: Vec<GridCell>,
    pub best_index: usize,
}

impl GridSearch {
    pub fn best(&self) -> SvrParams {
        self.cells[self.best_index].params
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,gamma,epsilon,kernel,mean_r2,max_kkt_violation,converged\n");
        for g in &self.cells {
            let p = g.params;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.c,
                p.gamma,
                p.epsilon,
                p.kernel.name(),
                g.mean_r2,
                g.max_kkt_violation,
                g.converged
            ));
        }
        out
    }
}

/// Exhaustive search scored by mean k-fold R² over one shared fold
/// assignment; ties go to the earlier cell and cells that hit the solver's
/// iteration cap are reported but never selected. The linear kernel ignores gamma, so its duplicates are fitted
/// once.
pub fn grid_search_svr(x: &Matrix<f64>, y: &[f64], grid: &SvrGrid, folds: usize, seed: u64) -> Result<GridSearch, ModelError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(ModelError::InvalidParams("empty grid".into()));
    }
    let canonical = |p: &SvrParams| match p.kernel {
        Kernel::Linear => SvrParams { gamma: grid.gamma[0], ..*p },
        _ => *p,
    };
    let mut unique: Vec<SvrParams> = Vec::new();
    let key: Vec<usize> = cells
        .iter()
        .map(|p| {
            let c = canonical(p);
            unique.iter().position(|u| *u == c).unwrap_or_else(|| {
                unique.push(c);
                unique.len() - 1
            })
        })
        .collect();
    let n = x.rows();
    if folds < 2 || folds > n {
        return Err(ModelError::InvalidParams(format!("{folds} folds on {n} rows")));
    }
    let assignment = kfold_assignments(n, folds, rng::derive_seed(seed, 0));
    // folds run in order; a cell stops at its first fold that fails to converge
    let scored: Vec<(f64, f64, bool)> = unique
        .par_iter()
        .map(|p| {
            let (mut sum, mut kkt) = (0.0, 0.0_f64);
            for test in &assignment {
                let train = complement(n, test);
                match fit_svr(&x.select_rows(&train), &select(y, &train), p) {
                    Ok(m) => {
                        kkt = kkt.max(m.kkt_violation);
                        sum += r2(&select(y, test), &m.predict(&x.select_rows(test)));
                    }
                    Err(ModelError::NoConvergence { violation, .. }) => return Ok((f64::NAN, kkt.max(violation), false)),
                    Err(e) => return Err(e),
                }
            }
            Ok((sum / folds as f64, kkt, true))
        })
        .collect::<Result<_, ModelError>>()?;
    let cells: Vec<GridCell> = cells
        .iter()
        .zip(&key)
        .map(|(p, &k)| GridCell { params: *p, mean_r2: scored[k].0, max_kkt_violation: scored[k].1, converged: scored[k].2 })
        .collect();
    let best_index = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.converged)
        .fold(None, |best: Option<usize>, (i, c)| match best {
            Some(b) if cells[b].mean_r2 >= c.mean_r2 => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| ModelError::NoConvergence {
            iterations: 0,
            violation: cells.iter().map(|c| c.max_kkt_violation).fold(f64::INFINITY, f64::min),
        })?;
    Ok(GridSearch { cells, best_index })
}
