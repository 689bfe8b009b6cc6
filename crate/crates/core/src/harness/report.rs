use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::DiagonalEntry;
use crate::error::{Error, Result};
use crate::statfit::{
    agreement_frequency, linear_fit, pearson_r, predict_accuracy, weighted_tau, AccuracyPredictor, TransferRecord,
};
use crate::tmetrics::ScoreKind;
use crate::xfer::TrainMode;

/// Accuracy matrix indexed `[source][target]`; `None` where no successful
/// record exists. Diagonal cells come from `diagonal` when given.
pub fn heatmap_matrix(
    labels: &[String],
    records: &[TransferRecord],
    diagonal: &[DiagonalEntry],
    method: TrainMode,
) -> Vec<Vec<Option<f64>>> {
    let idx = |l: &str| labels.iter().position(|x| x == l);
    let mut m = vec![vec![None; labels.len()]; labels.len()];
    for r in records.iter().filter(|r| r.method == method && r.is_ok()) {
        if let (Some(s), Some(t)) = (idx(&r.source), idx(&r.target)) {
            m[s][t] = Some(r.accuracy);
        }
    }
    for d in diagonal {
        if let Some(i) = idx(&d.window) {
            m[i][i] = Some(d.accuracy);
        }
    }
    m
}

/// Writes the heatmap as CSV: one row per source window, one column per
/// target window. Missing cells are left empty.
pub fn emit_heatmap(
    labels: &[String],
    records: &[TransferRecord],
    diagonal: &[DiagonalEntry],
    method: TrainMode,
    out: &Path,
) -> Result<Vec<Vec<Option<f64>>>> {
    let m = heatmap_matrix(labels, records, diagonal, method);
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["source\\target".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(&m) {
        let mut cells = vec![label.clone()];
        cells.extend(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterFit {
    pub metric: ScoreKind,
    pub method: TrainMode,
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub weighted_tau: f64,
}

fn scatter_fit(records: &[&TransferRecord], metric: ScoreKind, method: TrainMode) -> Result<ScatterFit> {
    if records.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "scatter fit needs at least 3 records, got {}",
            records.len()
        )));
    }
    let s: Vec<f64> = records.iter().map(|r| r.score(metric)).collect();
    let a: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let (slope, intercept) = linear_fit(&s, &a)?;
    Ok(ScatterFit {
        metric,
        method,
        n: records.len(),
        slope,
        intercept,
        pearson_r: pearson_r(&s, &a)?,
        weighted_tau: weighted_tau(&s, &a)?,
    })
}

/// Writes `(target, source, score, accuracy, fitted)` rows to `out` and the
/// global fit with its correlations to `<out stem>_fit.csv`.
pub fn emit_scatter_fit(
    records: &[TransferRecord],
    metric: ScoreKind,
    method: TrainMode,
    out: &Path,
) -> Result<ScatterFit> {
    let mut rows: Vec<&TransferRecord> = records.iter().filter(|r| r.method == method && r.is_ok()).collect();
    rows.sort_by(|a, b| a.target.cmp(&b.target).then(a.source.cmp(&b.source)));
    let fit = scatter_fit(&rows, metric, method)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["target", "source", "score", "accuracy", "fitted"])?;
    for r in &rows {
        let s = r.score(metric);
        w.write_record([
            r.target.clone(),
            r.source.clone(),
            s.to_string(),
            r.accuracy.to_string(),
            (fit.slope * s + fit.intercept).to_string(),
        ])?;
    }
    w.flush()?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("scatter");
    let mut fw = csv::Writer::from_path(out.with_file_name(format!("{stem}_fit.csv")))?;
    fw.serialize(&fit)?;
    fw.flush()?;
    Ok(fit)
}

/// Per target column: the best source (diagonal included) and whether it
/// lies within one window step of the target. `grid` gives the window
/// layout as (outer, inner) counts; the distance is taken per coordinate.
pub fn diagonal_dominance(m: &[Vec<Option<f64>>], grid: (usize, usize)) -> Vec<(usize, usize, bool)> {
    let n = m.len();
    let coord = |i: usize| (i / grid.1, i % grid.1);
    (0..n)
        .filter_map(|t| {
            let mut best: Option<(usize, f64)> = None;
            for (s, row) in m.iter().enumerate() {
                if let Some(v) = row[t] {
                    if best.map_or(true, |(_, b)| v > b) {
                        best = Some((s, v));
                    }
                }
            }
            best.map(|(s, _)| {
                let (a, b) = (coord(s), coord(t));
                (t, s, a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1)
            })
        })
        .collect()
}

/// Mean off-diagonal accuracy with the source index below the target
/// (first) and above it (second).
pub fn triangle_means(m: &[Vec<Option<f64>>]) -> (f64, f64) {
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (s, row) in m.iter().enumerate() {
        for (t, c) in row.iter().enumerate() {
            match (c, s.cmp(&t)) {
                (Some(v), std::cmp::Ordering::Less) => lo.push(*v),
                (Some(v), std::cmp::Ordering::Greater) => hi.push(*v),
                _ => {}
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    (mean(&lo), mean(&hi))
}

/// Mean `|m[s][t] - m[t][s]|` over off-diagonal cells where both are present.
pub fn mean_abs_asymmetry(m: &[Vec<Option<f64>>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for s in 0..m.len() {
        for t in 0..m.len() {
            if s != t {
                if let (Some(a), Some(b)) = (m[s][t], m[t][s]) {
                    total += (a - b).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}

/// Deployment check for one held-out domain: the predictor is fitted on
/// transfers among the remaining domains, the source with the best score on
/// the held-out target is selected, and its actual accuracy is compared with
/// the predicted interval. Returns `(target, inside)` per domain.
pub fn held_out_hits(
    records: &[TransferRecord],
    metric: ScoreKind,
    confidence: f64,
) -> Result<Vec<(String, bool)>> {
    let ok: Vec<&TransferRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let mut domains: Vec<&str> = ok.iter().flat_map(|r| [r.source.as_str(), r.target.as_str()]).collect();
    domains.sort_unstable();
    domains.dedup();
    let mut out = Vec::new();
    for d in domains {
        let known: Vec<TransferRecord> =
            ok.iter().filter(|r| r.source != d && r.target != d).map(|r| (*r).clone()).collect();
        let Some(chosen) = ok
            .iter()
            .filter(|r| r.target == d)
            .max_by(|a, b| a.score(metric).total_cmp(&b.score(metric)))
        else {
            continue;
        };
        let p = AccuracyPredictor::fit_records(metric, &known)?;
        let pr = predict_accuracy(&p, chosen.score(metric), confidence)?;
        out.push((d.to_string(), pr.lower <= chosen.accuracy && chosen.accuracy <= pr.upper));
    }
    if out.is_empty() {
        return Err(Error::Empty("no held-out targets".into()));
    }
    Ok(out)
}

/// Fraction of held-out domains whose deployed prediction interval contains
/// the realised accuracy; see [`held_out_hits`].
pub fn coverage_held_out(records: &[TransferRecord], metric: ScoreKind, confidence: f64) -> Result<f64> {
    let hits = held_out_hits(records, metric, confidence)?;
    Ok(hits.iter().filter(|(_, h)| *h).count() as f64 / hits.len() as f64)
}

/// Trend statistics of one sweep for a single transfer method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub method: TrainMode,
    pub records: usize,
    pub failed: usize,
    pub dominance_hits: usize,
    pub dominance_targets: usize,
    pub low_to_high: f64,
    pub high_to_low: f64,
    pub mean_abs_asymmetry: f64,
    pub leep: Option<ScatterFit>,
    pub logme: Option<ScatterFit>,
    pub leep_logme_r: Option<f64>,
    pub coverage_leep: Option<f64>,
    pub coverage_logme: Option<f64>,
    pub agreement: Option<f64>,
}

impl SweepSummary {
    pub fn compute(
        labels: &[String],
        grid: (usize, usize),
        records: &[TransferRecord],
        diagonal: &[DiagonalEntry],
        method: TrainMode,
    ) -> Self {
        let mine: Vec<TransferRecord> = records.iter().filter(|r| r.method == method).cloned().collect();
        let ok: Vec<&TransferRecord> = mine.iter().filter(|r| r.is_ok()).collect();
        let m = heatmap_matrix(labels, &mine, diagonal, method);
        let dom = diagonal_dominance(&m, grid);
        let (low_to_high, high_to_low) = triangle_means(&m);
        let leep = scatter_fit(&ok, ScoreKind::Leep, method).ok();
        let logme = scatter_fit(&ok, ScoreKind::Logme, method).ok();
        let l: Vec<f64> = ok.iter().map(|r| r.leep).collect();
        let g: Vec<f64> = ok.iter().map(|r| r.logme).collect();
        let agreement = match (
            AccuracyPredictor::fit_records(ScoreKind::Leep, &mine),
            AccuracyPredictor::fit_records(ScoreKind::Logme, &mine),
        ) {
            (Ok(a), Ok(b)) => agreement_frequency(&mine, &a, &b).ok(),
            _ => None,
        };
        Self {
            method,
            records: mine.len(),
            failed: mine.len() - ok.len(),
            dominance_hits: dom.iter().filter(|d| d.2).count(),
            dominance_targets: dom.len(),
            low_to_high,
            high_to_low,
            mean_abs_asymmetry: mean_abs_asymmetry(&m),
            leep,
            logme,
            leep_logme_r: pearson_r(&l, &g).ok(),
            coverage_leep: coverage_held_out(&mine, ScoreKind::Leep, 0.95).ok(),
            coverage_logme: coverage_held_out(&mine, ScoreKind::Logme, 0.95).ok(),
            agreement,
        }
    }
}
