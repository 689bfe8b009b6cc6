//! LEEP and LogME transferability scores.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkernel::{softmax_rows, ModelCheckpoint};
use crate::xfer::LabeledSet;

const MARGINAL_FLOOR: f64 = 1e-12;
const LOG_CLAMP: f64 = 1e-300;
const STOCHASTIC_TOL: f64 = 1e-6;
const LOGME_TOL: f64 = 1e-6;
const LOGME_MAX_ITER: usize = 100;
const SPECTRUM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScoreKind {
    Leep,
    Logme,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Leep => "leep",
            ScoreKind::Logme => "logme",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityScore {
    pub kind: ScoreKind,
    pub value: f64,
    pub n_examples: usize,
    pub source_id: String,
    pub target_id: String,
}

/// LEEP from source-class probabilities `theta` (n x C_s) and target labels.
pub fn leep_from_probs(theta: ArrayView2<f64>, labels: &[usize], num_target_classes: usize) -> Result<f64> {
    let (n, cs) = theta.dim();
    if n == 0 {
        return Err(Error::Empty("LEEP on an empty target".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} examples", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= num_target_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: num_target_classes,
        });
    }
    for (i, row) in theta.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Degenerate(format!("row {i} of model outputs is not a distribution")));
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut joint = Array2::<f64>::zeros((num_target_classes, cs));
    for (row, &y) in theta.rows().into_iter().zip(labels) {
        for (z, &p) in row.iter().enumerate() {
            joint[[y, z]] += p * inv_n;
        }
    }
    let mut target_marginal = vec![0.0; num_target_classes];
    for &y in labels {
        target_marginal[y] += inv_n;
    }
    let mut cond = Array2::<f64>::zeros((num_target_classes, cs));
    for z in 0..cs {
        let pz: f64 = joint.column(z).sum();
        for y in 0..num_target_classes {
            cond[[y, z]] = if pz < MARGINAL_FLOOR {
                target_marginal[y]
            } else {
                joint[[y, z]] / pz
            };
        }
    }
    let mut total = 0.0;
    for (row, &y) in theta.rows().into_iter().zip(labels) {
        let eep: f64 = row.iter().zip(cond.row(y)).map(|(p, c)| p * c).sum();
        // A probability; rounding can push it a few ulps above one.
        total += eep.clamp(LOG_CLAMP, 1.0).ln();
    }
    Ok(total * inv_n)
}

/// Spectrum of `F^T F` shared by every class of one LogME evaluation.
pub struct LogmeSpectrum {
    n: usize,
    sigma: Vec<f64>,
    /// Columns are eigenvectors.
    v: DMatrix<f64>,
    f: DMatrix<f64>,
}

/// Result of evidence maximisation for one binary target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvidenceFit {
    pub alpha: f64,
    pub beta: f64,
    pub evidence: f64,
    pub iterations: usize,
}

impl LogmeSpectrum {
    pub fn new(features: ArrayView2<f64>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Empty("LogME needs at least one example and one feature".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite feature value".into()));
        }
        let f = DMatrix::from_fn(n, d, |i, j| features[[i, j]]);
        let eig = SymmetricEigen::new(f.transpose() * &f);
        let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let sigma = eig
            .eigenvalues
            .iter()
            .map(|&s| if s > SPECTRUM_FLOOR * max { s } else { 0.0 })
            .collect();
        Ok(Self {
            n,
            sigma,
            v: eig.eigenvectors,
            f,
        })
    }

    /// Log-evidence of `y` at fixed precisions, in the eigenbasis.
    fn evaluate(&self, z: &[f64], yy: f64, alpha: f64, beta: f64) -> (f64, f64, f64, f64) {
        let n = self.n as f64;
        let d = self.sigma.len() as f64;
        let mut gamma = 0.0;
        let mut m2 = 0.0;
        let mut res2 = yy;
        let mut logdet = 0.0;
        for (&s, &zk) in self.sigma.iter().zip(z) {
            let a = alpha + beta * s;
            logdet += a.ln();
            if s > 0.0 {
                gamma += beta * s / a;
                m2 += (beta * zk / a).powi(2);
                // Projection of y onto this direction is zk^2 / s; the fit
                // leaves the fraction alpha / a of it.
                res2 += zk * zk / s * ((alpha / a).powi(2) - 1.0);
            }
        }
        let res2 = res2.max(0.0);
        let evidence = 0.5 * n * beta.ln() + 0.5 * d * alpha.ln()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * beta * res2
            - 0.5 * alpha * m2
            - 0.5 * logdet;
        (evidence, gamma, m2, res2)
    }

    /// Maximises the evidence of the binary target `y` over (alpha, beta).
    pub fn fit(&self, y: &[f64]) -> Result<EvidenceFit> {
        if y.len() != self.n {
            return Err(Error::ShapeMismatch(format!("{} targets for {} examples", y.len(), self.n)));
        }
        let n = self.n as f64;
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if yy == 0.0 {
            return Err(Error::Degenerate("all-zero target".into()));
        }
        if self.sigma.iter().all(|&s| s == 0.0) {
            let beta = n / yy;
            return Ok(EvidenceFit {
                alpha: f64::INFINITY,
                beta,
                evidence: 0.5 * n * beta.ln() - 0.5 * n - 0.5 * n * (2.0 * std::f64::consts::PI).ln(),
                iterations: 0,
            });
        }
        let fty = self.f.tr_mul(&nalgebra::DVector::from_column_slice(y));
        let z: Vec<f64> = (self.v.transpose() * fty).iter().copied().collect();
        let (mut alpha, mut beta) = (1.0, 1.0);
        let mut iterations = 0;
        for it in 1..=LOGME_MAX_ITER {
            iterations = it;
            let (_, gamma, m2, res2) = self.evaluate(&z, yy, alpha, beta);
            let new_alpha = gamma / m2.max(LOG_CLAMP);
            let new_beta = (n - gamma) / res2.max(LOG_CLAMP);
            let done = ((new_alpha - alpha) / alpha).abs() < LOGME_TOL && ((new_beta - beta) / beta).abs() < LOGME_TOL;
            alpha = new_alpha;
            beta = new_beta;
            if done {
                break;
            }
        }
        let (evidence, ..) = self.evaluate(&z, yy, alpha, beta);
        Ok(EvidenceFit {
            alpha,
            beta,
            evidence,
            iterations,
        })
    }
}

/// Mean over classes of the per-example maximum log-evidence of a one-hot
/// linear model on `features`.
pub fn logme(features: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Result<f64> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} examples", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: num_classes,
        });
    }
    let spectrum = LogmeSpectrum::new(features)?;
    let mut scores = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
        if !y.contains(&1.0) {
            log::warn!("LogME: class {c} has no examples, skipped");
            continue;
        }
        scores.push(spectrum.fit(&y)?.evidence / n as f64);
    }
    if scores.is_empty() {
        return Err(Error::Empty("LogME: no class has examples".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn check_target(source: &ModelCheckpoint, target: &LabeledSet) -> Result<()> {
    if target.is_empty() {
        return Err(Error::Empty(format!("target `{}` is empty", target.name)));
    }
    if target.x.ncols() != source.spec.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "target has {} features per example, model expects {}",
            target.x.ncols(),
            source.spec.input_len()
        )));
    }
    Ok(())
}

fn score(kind: ScoreKind, value: f64, source: &ModelCheckpoint, target: &LabeledSet) -> TransferabilityScore {
    TransferabilityScore {
        kind,
        value,
        n_examples: target.len(),
        source_id: source.provenance.dataset.clone(),
        target_id: target.name.clone(),
    }
}

pub fn leep(source: &ModelCheckpoint, target: &LabeledSet) -> Result<TransferabilityScore> {
    check_target(source, target)?;
    let net = source.to_network::<f32>()?;
    let probs = net.softmax_probs(target.x.view())?;
    let v = leep_from_probs(probs.view(), &target.labels, target.num_classes())?;
    Ok(score(ScoreKind::Leep, v, source, target))
}

/// LogME on the penultimate activations of `source`.
pub fn logme_for(source: &ModelCheckpoint, target: &LabeledSet) -> Result<TransferabilityScore> {
    check_target(source, target)?;
    let net = source.to_network::<f32>()?;
    let feats = net.penultimate_features(target.x.view())?.mapv(f64::from);
    let v = logme(feats.view(), &target.labels, target.num_classes())?;
    Ok(score(ScoreKind::Logme, v, source, target))
}

/// Both scores from a single evaluation pass.
pub fn score_pair(source: &ModelCheckpoint, target: &LabeledSet) -> Result<(TransferabilityScore, TransferabilityScore)> {
    check_target(source, target)?;
    let net = source.to_network::<f32>()?;
    let (feats, logits) = net.features_and_logits(target.x.view())?;
    let probs = softmax_rows(logits.view());
    let l = leep_from_probs(probs.view(), &target.labels, target.num_classes())?;
    let g = logme(feats.mapv(f64::from).view(), &target.labels, target.num_classes())?;
    Ok((
        score(ScoreKind::Leep, l, source, target),
        score(ScoreKind::Logme, g, source, target),
    ))
}
