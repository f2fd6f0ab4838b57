//! Special functions and the two hypothesis tests used to compare models.
//!
//! Cross-validation fold scores are not independent draws; the tests are
//! applied to them as-is and their p-values should be read with that in
//! mind.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("sample needs at least 2 values with positive variance")]
    DegenerateSample,
    #[error("all groups are identical constants")]
    DegenerateGroups,
    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("continued fraction did not converge")]
    NoConvergence,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence)
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !(0.0..=1.0).contains(&x) {
        return Err(StatsError::DomainError(format!("I_x(a, b) with a = {a}, b = {b}, x = {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x)? / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x)? / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Two-sided tail probability of Student's t.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64, StatsError> {
    if t.is_nan() || !(df > 0.0) {
        return Err(StatsError::DomainError(format!("t = {t}, df = {df}")));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Upper tail probability of Fisher's F.
pub fn f_upper_p(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    if f.is_nan() || f < 0.0 || !(df1 > 0.0 && df2 > 0.0) {
        return Err(StatsError::DomainError(format!("F = {f}, df = ({df1}, {df2})")));
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    reg_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df1: f64,
    /// Denominator degrees of freedom for F; `None` for t.
    pub df2: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl TestResult {
    fn new(statistic: f64, df1: f64, df2: Option<f64>, p_value: f64, alpha: f64) -> Self {
        Self { statistic, df1, df2, p_value, alpha, reject: p_value <= alpha }
    }

    pub fn df_label(&self) -> String {
        match self.df2 {
            Some(d2) => format!("{}/{}", self.df1, d2),
            None => self.df1.to_string(),
        }
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::DegenerateSample);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if !(va > 0.0 && vb > 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TestResult::new(t, df, None, t_two_sided_p(t, df)?, alpha))
}

/// One-way ANOVA F test.
pub fn anova_oneway(groups: &[&[f64]], alpha: f64) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: groups.len() });
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(StatsError::DegenerateSample);
    }
    let k = groups.len() as f64;
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n_total as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let (df1, df2) = (k - 1.0, n_total as f64 - k);
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(StatsError::DegenerateGroups);
        }
        return Ok(TestResult::new(f64::INFINITY, df1, Some(df2), 0.0, alpha));
    }
    let f = (ssb / df1) / (ssw / df2);
    Ok(TestResult::new(f, df1, Some(df2), f_upper_p(f, df1, df2)?, alpha))
}

/// Per-fold scores of one model or input variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScores {
    pub name: String,
    pub scores: Vec<f64>,
}

impl NamedScores {
    pub fn new(name: impl Into<String>, scores: Vec<f64>) -> Self {
        Self { name: name.into(), scores }
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestKind {
    Anova,
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub kind: TestKind,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decision {
    pub comparisons: Vec<Comparison>,
    /// Highest-mean entry, declared only when the test rejects.
    pub best: Option<String>,
}

impl Decision {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("comparison,test,statistic,df,p_value,reject\n");
        for c in &self.comparisons {
            let kind = match c.kind {
                TestKind::Anova => "anova",
                TestKind::Welch => "welch_t",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.label,
                kind,
                c.result.statistic,
                c.result.df_label(),
                c.result.p_value,
                c.result.reject
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comparisons {
            let verdict = if c.result.reject { "reject H0" } else { "fail to reject H0" };
            let name = match c.kind {
                TestKind::Anova => "F",
                TestKind::Welch => "t",
            };
            out.push_str(&format!(
                "{}: {} = {:.6}, df = {}, p = {:.6} -> {} at alpha = {}\n",
                c.label,
                name,
                c.result.statistic,
                c.result.df_label(),
                c.result.p_value,
                verdict,
                c.result.alpha
            ));
        }
        match &self.best {
            Some(b) => out.push_str(&format!("best: {b}\n")),
            None => out.push_str("best: none (no significant difference)\n"),
        }
        out
    }
}

fn argmax_mean(entries: &[NamedScores]) -> usize {
    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.mean() > entries[best].mean() {
            best = i;
        }
    }
    best
}

/// ANOVA across three or more entries, Welch's t-test for exactly two.
fn test_group(label: &str, entries: &[NamedScores], alpha: f64) -> Result<Comparison, StatsError> {
    if entries.len() == 2 {
        let result = welch_t_test(&entries[0].scores, &entries[1].scores, alpha)?;
        return Ok(Comparison { label: label.into(), kind: TestKind::Welch, result });
    }
    let groups: Vec<&[f64]> = entries.iter().map(|e| e.scores.as_slice()).collect();
    Ok(Comparison { label: label.into(), kind: TestKind::Anova, result: anova_oneway(&groups, alpha)? })
}

/// Tests for any difference between models; names the best-mean model
/// when the null is rejected.
pub fn compare_models(models: &[NamedScores], alpha: f64) -> Result<Decision, StatsError> {
    let c = test_group("models", models, alpha)?;
    let best = c.result.reject.then(|| models[argmax_mean(models)].name.clone());
    Ok(Decision { comparisons: vec![c], best })
}

/// Two-stage feature-selection check: a test across the RFE feature counts,
/// then the best-mean count against the scaled-input variant. The best
/// count is taken whether or not the first stage rejects.
pub fn compare_feature_selection(
    scaled: &NamedScores,
    rfe_sweep: &[NamedScores],
    alpha: f64,
) -> Result<Decision, StatsError> {
    let mut comparisons = Vec::new();
    let best_rfe = match rfe_sweep.len() {
        0 => return Err(StatsError::TooFewGroups { needed: 1, got: 0 }),
        1 => &rfe_sweep[0],
        _ => {
            comparisons.push(test_group("rfe_counts", rfe_sweep, alpha)?);
            &rfe_sweep[argmax_mean(rfe_sweep)]
        }
    };
    let pair = [best_rfe.clone(), scaled.clone()];
    let t = test_group(&format!("{}_vs_{}", best_rfe.name, scaled.name), &pair, alpha)?;
    let best = t.result.reject.then(|| pair[argmax_mean(&pair)].name.clone());
    comparisons.push(t);
    Ok(Decision { comparisons, best })
}
