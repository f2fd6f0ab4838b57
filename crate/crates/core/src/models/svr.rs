//! Epsilon-insensitive support vector regression solved in the dual by
//! SMO with second-order working-set selection.
//!
//! The 2n dual variables are `alpha` (first n, label +1) and `alpha*`
//! (last n, label -1); the model keeps `beta = alpha - alpha*` for the
//! support vectors.

use serde::{Deserialize, Serialize};

use super::{ModelError, Regressor};
use crate::linalg::{dot, Matrix};

/// Stopping tolerance on the maximal violating pair, and the tolerance of
/// the post-fit KKT check.
pub const KKT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;
pub const POLY_DEGREE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf,
    Poly,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Rbf => "rbf",
            Kernel::Poly => "poly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self { c: 100.0, gamma: 1.0, epsilon: 1e-4, kernel: Kernel::Linear }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.c > 0.0 && self.c.is_finite() && self.gamma > 0.0 && self.gamma.is_finite() && self.epsilon >= 0.0;
        ok.then_some(()).ok_or_else(|| ModelError::InvalidParams(format!("{self:?}")))
    }
}

pub fn kernel_value(kernel: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => dot(a, b),
        Kernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
        Kernel::Poly => (gamma * dot(a, b) + 1.0).powi(POLY_DEGREE),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub params: SvrParams,
    pub support: Matrix<f64>,
    /// `alpha - alpha*` per support vector, each within `[-C, C]`.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Largest KKT violation found by an independent check after solving.
    pub kkt_violation: f64,
}

impl Regressor for SvrModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        self.support.row_iter().zip(&self.coef).map(|(s, c)| c * kernel_value(p.kernel, p.gamma, s, x)).sum::<f64>()
            - self.rho
    }
}

fn gram(x: &Matrix<f64>, p: &SvrParams) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_value(p.kernel, p.gamma, x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Largest violation of the optimality conditions of the dual solution
/// `(alpha, alpha_star, rho)`, recomputed from scratch, in target units.
pub fn kkt_violation(
    x: &Matrix<f64>,
    y: &[f64],
    params: &SvrParams,
    alpha: &[f64],
    alpha_star: &[f64],
    rho: f64,
) -> f64 {
    let n = x.rows();
    let (c, eps) = (params.c, params.epsilon);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n)
            .map(|j| (alpha[j] - alpha_star[j]) * kernel_value(params.kernel, params.gamma, x.row(j), x.row(i)))
            .sum::<f64>()
            - rho;
        let r = y[i] - f;
        let v_up = if alpha[i] <= 0.0 {
            (r - eps).max(0.0)
        } else if alpha[i] >= c {
            (eps - r).max(0.0)
        } else {
            (r - eps).abs()
        };
        let v_dn = if alpha_star[i] <= 0.0 {
            (-eps - r).max(0.0)
        } else if alpha_star[i] >= c {
            (r + eps).max(0.0)
        } else {
            (r + eps).abs()
        };
        worst = worst.max(v_up).max(v_dn);
        if alpha[i] < 0.0 || alpha[i] > c || alpha_star[i] < 0.0 || alpha_star[i] > c {
            worst = f64::INFINITY;
        }
    }
    worst
}

/// Update budget: `10 n` passes of `n` updates, but never fewer than
/// [`MIN_UPDATES`].
pub fn default_max_updates(n: usize) -> usize {
    (10 * n * n).max(MIN_UPDATES)
}

/// Linear kernels with large `C` leave most dual variables at the bound,
/// and SMO walks them there in small steps, so small problems get this
/// floor (the same one LIBSVM uses).
pub const MIN_UPDATES: usize = 10_000_000;

/// Fits the dual to tolerance [`KKT_TOL`] within [`default_max_updates`].
pub fn fit_svr(x: &Matrix<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel, ModelError> {
    fit_svr_capped(x, y, params, default_max_updates(x.rows()))
}

/// [`fit_svr`] with an explicit update budget.
pub fn fit_svr_capped(x: &Matrix<f64>, y: &[f64], params: &SvrParams, max_iter: usize) -> Result<SvrModel, ModelError> {
    params.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(ModelError::TooFewRows { needed: 1, got: 0 });
    }
    let k = gram(x, params);
    let m = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |a: usize, b: usize| k[(a % n) * n + (b % n)];
    let qd: Vec<f64> = (0..m).map(|t| kk(t, t)).collect();
    let mut alpha = vec![0.0; m];
    let mut grad: Vec<f64> = (0..m).map(|t| if t < n { params.epsilon - y[t] } else { params.epsilon + y[t - n] }).collect();
    let mut iter = 0;
    loop {
        // maximal violating pair, second-order choice of j
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..n {
            if alpha[t] < c && -grad[t] >= gmax {
                gmax = -grad[t];
                i = t;
            }
        }
        for t in n..m {
            if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        let (mut gmax2, mut jbest, mut obj_min) = (f64::NEG_INFINITY, usize::MAX, f64::INFINITY);
        let (ki, qi): (&[f64], f64) = if i == usize::MAX { (&[], 0.0) } else { (&k[(i % n) * n..(i % n + 1) * n], qd[i]) };
        let mut consider = |t: usize, diff: f64, kit: f64| {
            if diff > 0.0 {
                let quad = qi + qd[t] - 2.0 * kit;
                let obj = -diff * diff / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    jbest = t;
                    obj_min = obj;
                }
            }
        };
        for t in 0..n {
            if alpha[t] > 0.0 {
                gmax2 = gmax2.max(grad[t]);
                if i != usize::MAX {
                    consider(t, gmax + grad[t], ki[t]);
                }
            }
        }
        for t in n..m {
            if alpha[t] < c {
                gmax2 = gmax2.max(-grad[t]);
                if i != usize::MAX {
                    consider(t, gmax - grad[t], ki[t - n]);
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < KKT_TOL || jbest == usize::MAX || i == usize::MAX {
            break;
        }
        if iter >= max_iter {
            return Err(ModelError::NoConvergence { iterations: iter, violation: gap });
        }
        iter += 1;
        let j = jbest;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = sign(i) * sign(j) * kk(i, j);
        if sign(i) != sign(j) {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (si, sj) = (sign(i), sign(j));
        let (ri, rj) = (&k[(i % n) * n..(i % n + 1) * n], &k[(j % n) * n..(j % n + 1) * n]);
        for t in 0..n {
            let u = si * ri[t] * di + sj * rj[t] * dj;
            grad[t] += u;
            grad[t + n] -= u;
        }
    }

    // offset: mean over free variables, else midpoint of the feasible range
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..m {
        let yg = sign(t) * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let (a, a_star) = alpha.split_at(n);
    let violation = kkt_violation(x, y, params, a, a_star, rho);
    let sv: Vec<usize> = (0..n).filter(|&i| a[i] - a_star[i] != 0.0).collect();
    Ok(SvrModel {
        params: *params,
        support: x.select_rows(&sv),
        coef: sv.iter().map(|&i| a[i] - a_star[i]).collect(),
        rho,
        iterations: iter,
        kkt_violation: violation,
    })
}
