//! Correlation statistics, score-to-accuracy regression, confidence
//! intervals, source selection and predictor agreement.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tmetrics::ScoreKind;
use crate::xfer::TrainMode;

/// One transfer experiment: post-transfer accuracy and both scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub source: String,
    pub target: String,
    pub method: TrainMode,
    pub accuracy: f64,
    pub leep: f64,
    pub logme: f64,
    pub n: usize,
    #[serde(default = "ok_status")]
    pub status: String,
}

fn ok_status() -> String {
    "ok".into()
}

impl TransferRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Leep => self.leep,
            ScoreKind::Logme => self.logme,
        }
    }
}

fn check_pairs(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::InvalidParameter(format!("need at least {min} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined: zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

struct Fenwick(Vec<usize>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }
    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    /// Count of inserted positions `< i`.
    fn below(&self, i: usize) -> usize {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Dense ranks (0-based, equal values share a rank) and the number of ranks.
fn dense_ranks(v: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup();
    let ranks = v
        .iter()
        .map(|x| sorted.partition_point(|s| s < x))
        .collect();
    (ranks, sorted.len())
}

/// For each element, concordant minus discordant partners, in O(n log n).
fn concordance_balance(a: &[f64], b: &[f64]) -> Vec<i64> {
    let n = a.len();
    let (rb, nb) = dense_ranks(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i].partial_cmp(&a[j]).expect("finite"));
    let mut s = vec![0i64; n];
    // Ascending sweep counts partners with strictly smaller a; descending
    // sweep counts partners with strictly larger a.
    for pass in 0..2 {
        let seq: Vec<usize> = if pass == 0 {
            order.clone()
        } else {
            order.iter().rev().copied().collect()
        };
        let mut tree = Fenwick::new(nb);
        let mut inserted = 0usize;
        let mut k = 0;
        while k < n {
            let mut end = k;
            while end < n && a[seq[end]] == a[seq[k]] {
                end += 1;
            }
            for &i in &seq[k..end] {
                let lower = tree.below(rb[i]) as i64;
                let upper = (inserted - tree.below(rb[i] + 1)) as i64;
                // Smaller-a partners concord when their b is lower; larger-a
                // partners concord when their b is higher.
                s[i] += if pass == 0 { lower - upper } else { upper - lower };
            }
            for &i in &seq[k..end] {
                tree.add(rb[i]);
                inserted += 1;
            }
            k = end;
        }
    }
    s
}

fn tau_one_side(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        desc(a, i, j).then_with(|| desc(b, i, j)).then(i.cmp(&j))
    });
    let mut w = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        w[i] = 1.0 / (1.0 + r as f64);
    }
    let s = concordance_balance(a, b);
    let num: f64 = w.iter().zip(&s).map(|(wi, &si)| wi * si as f64).sum();
    let den = (n - 1) as f64 * w.iter().sum::<f64>();
    num / den
}

fn desc(v: &[f64], i: usize, j: usize) -> std::cmp::Ordering {
    v[j].partial_cmp(&v[i]).expect("finite")
}

/// Weighted Kendall tau with hyperbolic rank weights `1/(1 + rank)` where
/// rank 0 is the largest value; each pair carries the sum of its members'
/// weights. The result averages the x-ranked and y-ranked statistics.
pub fn weighted_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y, 2)?;
    Ok((0.5 * (tau_one_side(x, y) + tau_one_side(y, x))).clamp(-1.0, 1.0))
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pairs(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all scores are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

pub const Z_TABLE: [(f64, f64); 3] = [(0.90, 1.645), (0.95, 1.960), (0.99, 2.576)];

pub fn z_score(confidence: f64) -> Result<f64> {
    Z_TABLE
        .iter()
        .find(|(c, _)| (c - confidence).abs() < 1e-9)
        .map(|&(_, z)| z)
        .ok_or_else(|| Error::InvalidParameter(format!("unsupported confidence level {confidence}")))
}

/// Mean absolute residual scaled by the two-sided normal quantile.
pub fn margin_of_error(residuals: &[f64], confidence: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::Empty("no residuals".into()));
    }
    let z = z_score(confidence)?;
    Ok(residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64 * z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceZ {
    pub confidence: f64,
    pub z: f64,
}

/// Linear map from a transferability score to expected top-1 accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPredictor {
    pub metric: ScoreKind,
    pub beta0: f64,
    pub beta1: f64,
    pub mean_abs_residual: f64,
    pub n_fit: usize,
    pub confidence_table: Vec<ConfidenceZ>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPrediction {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub clamped: bool,
}

impl AccuracyPredictor {
    pub fn fit(metric: ScoreKind, scores: &[f64], accuracies: &[f64]) -> Result<Self> {
        check_pairs(scores, accuracies, 3)?;
        let (beta0, beta1) = linear_fit(scores, accuracies)?;
        let mar = scores
            .iter()
            .zip(accuracies)
            .map(|(s, a)| (a - (beta0 * s + beta1)).abs())
            .sum::<f64>()
            / scores.len() as f64;
        Ok(Self {
            metric,
            beta0,
            beta1,
            mean_abs_residual: mar,
            n_fit: scores.len(),
            confidence_table: Z_TABLE.iter().map(|&(confidence, z)| ConfidenceZ { confidence, z }).collect(),
        })
    }

    /// Fits on the successful records of `records`.
    pub fn fit_records(metric: ScoreKind, records: &[TransferRecord]) -> Result<Self> {
        let ok: Vec<&TransferRecord> = records.iter().filter(|r| r.is_ok()).collect();
        let s: Vec<f64> = ok.iter().map(|r| r.score(metric)).collect();
        let a: Vec<f64> = ok.iter().map(|r| r.accuracy).collect();
        Self::fit(metric, &s, &a)
    }

    pub fn point(&self, score: f64) -> f64 {
        self.beta0 * score + self.beta1
    }

    pub fn margin(&self, confidence: f64) -> Result<f64> {
        self.confidence_table
            .iter()
            .find(|e| (e.confidence - confidence).abs() < 1e-9)
            .map(|e| e.z * self.mean_abs_residual)
            .ok_or_else(|| Error::InvalidParameter(format!("unsupported confidence level {confidence}")))
    }

    fn check_fitted(&self) -> Result<()> {
        if self.n_fit < 3 || !self.beta0.is_finite() || !self.beta1.is_finite() || !(self.mean_abs_residual >= 0.0) {
            return Err(Error::InvalidParameter("predictor is not fitted".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.check_fitted()?;
        Ok(p)
    }
}

/// Point estimate and interval, each clamped to `[0, 1]`.
pub fn predict_accuracy(p: &AccuracyPredictor, score: f64, confidence: f64) -> Result<AccuracyPrediction> {
    p.check_fitted()?;
    if !score.is_finite() {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    let m = p.margin(confidence)?;
    let est = p.point(score);
    let raw = [est, est - m, est + m];
    let [estimate, lower, upper] = raw.map(|v| v.clamp(0.0, 1.0));
    Ok(AccuracyPrediction {
        estimate,
        lower,
        upper,
        clamped: raw != [estimate, lower, upper],
    })
}

/// Highest-scoring source; ties go to the lexicographically smallest label.
pub fn select_source(scores: &BTreeMap<String, f64>) -> Result<String> {
    let mut best: Option<(&String, f64)> = None;
    for (k, &v) in scores {
        if v.is_nan() {
            return Err(Error::InvalidParameter(format!("score of `{k}` is NaN")));
        }
        match best {
            Some((_, b)) if v <= b => {
                if v == b {
                    log::info!("source tie at {v}; keeping the lexicographically smaller label");
                }
            }
            _ => best = Some((k, v)),
        }
    }
    best.map(|(k, _)| k.clone())
        .ok_or_else(|| Error::Empty("no candidate sources".into()))
}

/// Fraction of records on which both predictors err in the same direction.
/// A zero residual agrees with either sign.
pub fn agreement_frequency(
    records: &[TransferRecord],
    leep_pred: &AccuracyPredictor,
    logme_pred: &AccuracyPredictor,
) -> Result<f64> {
    let ok: Vec<&TransferRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::Empty("no records".into()));
    }
    let agree = ok
        .iter()
        .filter(|r| {
            let a = r.accuracy - leep_pred.point(r.leep);
            let b = r.accuracy - logme_pred.point(r.logme);
            a == 0.0 || b == 0.0 || (a > 0.0) == (b > 0.0)
        })
        .count();
    Ok(agree as f64 / ok.len() as f64)
}

/// Fraction of records whose accuracy lies within the predictor's interval.
pub fn interval_coverage(records: &[TransferRecord], p: &AccuracyPredictor, confidence: f64) -> Result<f64> {
    let ok: Vec<&TransferRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(Error::Empty("no records".into()));
    }
    let mut inside = 0;
    for r in &ok {
        let pr = predict_accuracy(p, r.score(p.metric), confidence)?;
        if pr.lower <= r.accuracy && r.accuracy <= pr.upper {
            inside += 1;
        }
    }
    Ok(inside as f64 / ok.len() as f64)
}
