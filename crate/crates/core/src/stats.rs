//! Pearson correlation with Student-t significance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, FeatureId};
use crate::error::{PreprocessError, StatsError};

/// Continued fraction stops when a convergent changes by less than this.
const CF_EPS: f64 = 1e-16;
const CF_MAX_ITER: usize = 10_000;
/// Lentz floor; keeps intermediate denominators away from zero.
const FPMIN: f64 = 1e-300;

/// Lanczos approximation (g = 7, 9 terms), relative error around 1e-15.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let floor = |v: f64| if v.abs() < FPMIN { FPMIN } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / floor(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / floor(1.0 + aa * d);
        c = floor(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / floor(1.0 + aa * d);
        c = floor(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    regularized_incomplete_beta(df / (df + t2), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: x.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(StatsError::ConstantVector);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantVector);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn t_statistic(r: f64, n: usize) -> Result<f64, StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: n });
    }
    if r.abs() >= 1.0 {
        return Err(StatsError::InfiniteT);
    }
    Ok(r * ((n - 2) as f64).sqrt() / (1.0 - r * r).sqrt())
}

/// Two-sided p-value of a sample correlation with `n − 2` degrees of freedom.
pub fn p_value(r: f64, n: usize) -> Result<f64, StatsError> {
    let t = t_statistic(r, n)?;
    Ok(student_t_two_sided(t, (n - 2) as f64))
}

/// Natural log of [`p_value`], finite where the p-value itself underflows.
pub fn ln_p_value(r: f64, n: usize) -> Result<f64, StatsError> {
    t_statistic(r, n)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    // with x = df / (df + t²) = 1 − r²
    let (a, b) = (0.5 * (n - 2) as f64, 0.5);
    let x = 1.0 - r * r;
    let ln_front = a * (-r * r).ln_1p() + b * (r * r).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front + beta_continued_fraction(a, b, x).ln() - a.ln())
    } else {
        Ok((-(ln_front.exp() * beta_continued_fraction(b, a, r * r) / b)).ln_1p())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    VerySignificant,
    Significant,
    NotSignificant,
}

impl Significance {
    pub fn classify(p: f64) -> Significance {
        if p < 0.01 {
            Significance::VerySignificant
        } else if p < 0.05 {
            Significance::Significant
        } else {
            Significance::NotSignificant
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Significance::VerySignificant => "**",
            Significance::Significant => "*",
            Significance::NotSignificant => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub feature: FeatureId,
    pub r: f64,
    pub t: f64,
    pub p: f64,
    pub significance: Significance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    /// Sorted by |r|, strongest first.
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    pub fn entry(&self, feature: FeatureId) -> Option<&CorrelationEntry> {
        self.entries.iter().find(|e| e.feature == feature)
    }

    /// `feature,r,t,p,stars` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,r,t,p,stars\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{:e},{}", e.feature.name(), e.r, e.t, e.p, e.significance.stars());
        }
        out
    }
}

/// Correlation of every feature with end-point P.
pub fn correlation_report(dataset: &Dataset) -> Result<CorrelationReport, StatsError> {
    let n = dataset.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: n });
    }
    let mut target = Vec::with_capacity(n);
    let mut columns = vec![Vec::with_capacity(n); FeatureId::ALL.len()];
    for record in dataset {
        let x = record.feature_vector().map_err(PreprocessError::from)?;
        target.push(record.endpoint_p.ok_or_else(|| PreprocessError::MissingEndpoint(record.heat_id.clone()))?);
        for (column, v) in columns.iter_mut().zip(x) {
            column.push(v);
        }
    }
    let mut entries = Vec::with_capacity(FeatureId::ALL.len());
    for (feature, column) in FeatureId::ALL.into_iter().zip(&columns) {
        let r = pearson_r(column, &target)?;
        let (t, p) = match t_statistic(r, n) {
            Ok(t) => (t, student_t_two_sided(t, (n - 2) as f64)),
            Err(StatsError::InfiniteT) => (r.signum() * f64::INFINITY, 0.0),
            Err(e) => return Err(e),
        };
        entries.push(CorrelationEntry { feature, r, t, p, significance: Significance::classify(p) });
    }
    // stable sort keeps feature order among equal |r|
    entries.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()));
    Ok(CorrelationReport { n, entries })
}
