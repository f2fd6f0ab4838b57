//! Regression trees on pre-binned features, and the ensembles built from
//! them: gradient boosting (squared or pinball loss) and random forests.
//!
//! Each feature is cut into at most `max_bins` bins. When a feature has
//! no more distinct values than that, every midpoint between consecutive
//! distinct values is a candidate split, so splits are exact.

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelError, Regressor};
use crate::linalg::Matrix;
use crate::rng;

pub const DEFAULT_MAX_BINS: usize = 256;

/// Column-major bin codes plus the split thresholds between bins.
#[derive(Debug, Clone)]
pub struct BinnedData {
    n_rows: usize,
    codes: Vec<u8>,
    /// `thresholds[f][k]` separates bin `k` (left, `x <= t`) from bin `k + 1`.
    thresholds: Vec<Vec<f64>>,
}

impl BinnedData {
    pub fn new(x: &Matrix<f64>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let n = x.rows();
        let mut codes = vec![0u8; n * x.cols()];
        let mut thresholds = Vec::with_capacity(x.cols());
        for f in 0..x.cols() {
            let col = x.column(f);
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let mut uniq = sorted.clone();
            uniq.dedup();
            let mid = |a: f64, b: f64| a + (b - a) / 2.0;
            let mut t: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| mid(w[0], w[1])).collect()
            } else {
                (1..max_bins)
                    .filter_map(|b| {
                        let v = sorted[b * n / max_bins];
                        let k = uniq.partition_point(|&u| u < v);
                        (k > 0).then(|| mid(uniq[k - 1], uniq[k]))
                    })
                    .collect()
            };
            t.dedup();
            for (i, &v) in col.iter().enumerate() {
                codes[f * n + i] = t.partition_point(|&c| c < v) as u8;
            }
            thresholds.push(t);
        }
        Self { n_rows: n, codes, thresholds }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, f: usize) -> usize {
        self.thresholds[f].len() + 1
    }

    #[inline]
    fn code(&self, f: usize, i: usize) -> usize {
        self.codes[f * self.n_rows + i] as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Grow<'a> {
    data: &'a BinnedData,
    max_depth: Option<usize>,
    min_leaf: usize,
    lambda: f64,
    max_features: usize,
}

impl Grow<'_> {
    /// Grows a tree fitting `g` on `rows`; leaves get `leaf(rows)`.
    fn grow(
        &self,
        g: &[f64],
        rows: Vec<usize>,
        rng: &mut rng::Rng,
        leaf: &dyn Fn(&[usize]) -> f64,
    ) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((slot, rows, depth)) = stack.pop() {
            match self.best_split(g, &rows, depth, rng) {
                None => nodes[slot] = Node::Leaf { value: leaf(&rows) },
                Some((feature, bin)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| self.data.code(feature, i) <= bin);
                    let (li, ri) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[slot] =
                        Node::Split { feature, threshold: self.data.thresholds[feature][bin], left: li as u32, right: ri as u32 };
                    stack.push((ri, r, depth + 1));
                    stack.push((li, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    fn best_split(&self, g: &[f64], rows: &[usize], depth: usize, rng: &mut rng::Rng) -> Option<(usize, usize)> {
        let n = rows.len();
        if self.max_depth.is_some_and(|d| depth >= d) || n < 2 * self.min_leaf || n < 2 {
            return None;
        }
        let mean = rows.iter().map(|&i| g[i]).sum::<f64>() / n as f64;
        let ss: f64 = rows.iter().map(|&i| (g[i] - mean) * (g[i] - mean)).sum();
        if ss == 0.0 {
            return None;
        }
        // without regularisation the gain is shift invariant; centring avoids cancellation
        let shift = if self.lambda == 0.0 { mean } else { 0.0 };
        let d = self.data.n_features();
        let features: Vec<usize> = if self.max_features >= d {
            (0..d).collect()
        } else {
            let mut f = sample(rng, d, self.max_features).into_vec();
            f.sort_unstable();
            f
        };
        let total: f64 = rows.iter().map(|&i| g[i] - shift).sum();
        let parent = total * total / (n as f64 + self.lambda);
        let mut best: Option<(f64, usize, usize)> = None;
        let (mut sums, mut counts) = (Vec::new(), Vec::new());
        for f in features {
            let nb = self.data.n_bins(f);
            if nb < 2 {
                continue;
            }
            sums.clear();
            sums.resize(nb, 0.0);
            counts.clear();
            counts.resize(nb, 0usize);
            for &i in rows {
                let b = self.data.code(f, i);
                sums[b] += g[i] - shift;
                counts[b] += 1;
            }
            let (mut gl, mut nl) = (0.0, 0usize);
            for b in 0..nb - 1 {
                gl += sums[b];
                nl += counts[b];
                let nr = n - nl;
                if nl < self.min_leaf.max(1) {
                    continue;
                }
                if nr < self.min_leaf.max(1) {
                    break;
                }
                let gr = total - gl;
                let gain = gl * gl / (nl as f64 + self.lambda) + gr * gr / (nr as f64 + self.lambda) - parent;
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        match best {
            Some((gain, f, b)) if gain > 1e-12 * ss => Some((f, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_rounds: 100, max_depth: 3, learning_rate: 0.1, lambda: 1.0, max_bins: DEFAULT_MAX_BINS }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<(), ModelError> {
        let ok = self.learning_rate > 0.0 && self.learning_rate <= 1.0 && self.lambda >= 0.0 && self.max_bins >= 2;
        ok.then_some(()).ok_or_else(|| ModelError::InvalidParams(format!("{self:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Squared,
    Pinball { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: Loss,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training loss after each round.
    pub train_loss: Vec<f64>,
}

impl Regressor for GbtModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

pub fn pinball_loss(y: &[f64], pred: &[f64], tau: f64) -> f64 {
    y.iter()
        .zip(pred)
        .map(|(&a, &p)| {
            let r = a - p;
            if r >= 0.0 {
                tau * r
            } else {
                (tau - 1.0) * r
            }
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Lower order statistic at rank `ceil(n tau)`: a minimiser of the
/// pinball loss over constants.
fn lower_quantile(mut v: Vec<f64>, tau: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = crate::scalar::ceil_tolerant(v.len() as f64 * tau).max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn check_xy(x: &Matrix<f64>, y: &[f64]) -> Result<(), ModelError> {
    if x.rows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
    }
    if y.is_empty() {
        return Err(ModelError::TooFewRows { needed: 1, got: 0 });
    }
    Ok(())
}

fn boost(x: &Matrix<f64>, y: &[f64], params: &GbtParams, loss: Loss) -> Result<GbtModel, ModelError> {
    params.validate()?;
    check_xy(x, y)?;
    let data = BinnedData::new(x, params.max_bins);
    let grow = Grow {
        data: &data,
        max_depth: Some(params.max_depth),
        min_leaf: 1,
        lambda: params.lambda,
        max_features: data.n_features(),
    };
    let n = y.len();
    let mut pred = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = Vec::with_capacity(params.n_rounds);
    // unused by full-feature trees but required by the grower
    let mut rng = rng::seeded(0);
    for _ in 0..params.n_rounds {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
        let tree = match loss {
            Loss::Squared => {
                let lambda = params.lambda;
                let leaf = |rows: &[usize]| rows.iter().map(|&i| resid[i]).sum::<f64>() / (rows.len() as f64 + lambda);
                grow.grow(&resid, (0..n).collect(), &mut rng, &leaf)
            }
            Loss::Pinball { tau } => {
                let g: Vec<f64> = resid.iter().map(|&r| if r > 0.0 { tau } else { tau - 1.0 }).collect();
                let leaf = |rows: &[usize]| lower_quantile(rows.iter().map(|&i| resid[i]).collect(), tau);
                grow.grow(&g, (0..n).collect(), &mut rng, &leaf)
            }
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
        train_loss.push(match loss {
            Loss::Squared => super::mse(y, &pred),
            Loss::Pinball { tau } => pinball_loss(y, &pred, tau),
        });
    }
    Ok(GbtModel { loss, base_score: 0.0, learning_rate: params.learning_rate, trees, train_loss })
}

/// Gradient boosting on squared loss; leaf value `sum(residual) / (count + lambda)`.
pub fn fit_gbt(x: &Matrix<f64>, y: &[f64], params: &GbtParams) -> Result<GbtModel, ModelError> {
    boost(x, y, params, Loss::Squared)
}

/// Gradient boosting on pinball loss; leaf value is the `tau`-quantile of
/// the residuals in the leaf.
pub fn fit_quantile_gbt(x: &Matrix<f64>, y: &[f64], tau: f64, params: &GbtParams) -> Result<GbtModel, ModelError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(ModelError::InvalidParams(format!("tau = {tau}")));
    }
    boost(x, y, params, Loss::Pinball { tau })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
    pub max_bins: usize,
}

impl Default for RfParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, min_leaf: 1, bootstrap: true, max_features: None, max_bins: DEFAULT_MAX_BINS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub trees: Vec<Tree>,
}

impl Regressor for RfModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged CART trees with per-split feature subsampling. Tree `t` draws
/// from its own stream derived from `seed`, so the forest does not depend
/// on the thread schedule.
pub fn fit_rf(x: &Matrix<f64>, y: &[f64], params: &RfParams, seed: u64) -> Result<RfModel, ModelError> {
    check_xy(x, y)?;
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(ModelError::InvalidParams(format!("{params:?}")));
    }
    let data = BinnedData::new(x, params.max_bins);
    let d = data.n_features();
    let grow = Grow {
        data: &data,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        lambda: 0.0,
        max_features: params.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1)),
    };
    let n = y.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::child(seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n).collect()
            };
            let leaf = |rows: &[usize]| rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
            grow.grow(y, rows, &mut r, &leaf)
        })
        .collect();
    Ok(RfModel { trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_gbt_is_mean() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [1.0, 2.0, 3.0, 6.0];
        let p = GbtParams { n_rounds: 1, max_depth: 0, learning_rate: 1.0, lambda: 0.0, ..Default::default() };
        let m = fit_gbt(&x, &y, &p).unwrap();
        assert_eq!(m.predict_row(&[10.0]), 3.0);
        let p = GbtParams { lambda: 1.0, learning_rate: 0.5, ..p };
        let m = fit_gbt(&x, &y, &p).unwrap();
        assert!((m.predict_row(&[0.0]) - 0.5 * 3.0 * 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_stump_is_order_statistic() {
        let x = Matrix::from_rows(&(0..10).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (1..=10).map(|v| v as f64 * 1.5).collect();
        let p = GbtParams { n_rounds: 1, max_depth: 0, learning_rate: 1.0, ..Default::default() };
        let m = fit_quantile_gbt(&x, &y, 0.9, &p).unwrap();
        assert_eq!(m.predict_row(&[0.0]), 13.5);
    }

    #[test]
    fn pure_tree_interpolates() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i * 7 % 40) as f64, (i % 3) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64).collect();
        let p = RfParams { n_trees: 1, bootstrap: false, max_features: Some(2), ..Default::default() };
        let m = fit_rf(&x, &y, &p, 1).unwrap();
        assert_eq!(m.predict(&x), y);
    }

    #[test]
    fn constant_target_forest() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        let m = fit_rf(&x, &[4.0; 3], &RfParams { n_trees: 5, ..Default::default() }, 3).unwrap();
        assert!(m.predict(&x).iter().all(|&p| p == 4.0));
    }

    #[test]
    fn quantile_bins_cap_distinct_values() {
        let x = Matrix::from_rows(&(0..1000).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let b = BinnedData::new(&x, 16);
        assert_eq!(b.n_bins(0), 16);
        assert!(b.codes.windows(2).all(|w| w[0] <= w[1]));
    }
}
