use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::IqFrame;
use crate::error::{Error, Result};

/// Rotates sample `t` by `exp(j (2 pi fo_frac t + phase0))`.
pub fn apply_fo(frame: &IqFrame, fo_frac: f64, phase0: f64) -> Result<IqFrame> {
    if !fo_frac.is_finite() || fo_frac.abs() >= 0.5 {
        return Err(Error::InvalidParameter(format!("|fo_frac| = {fo_frac} must be < 0.5")));
    }
    if !phase0.is_finite() {
        return Err(Error::InvalidParameter("phase0 must be finite".into()));
    }
    let rotated: Vec<Complex64> = frame
        .to_complex()
        .into_iter()
        .enumerate()
        .map(|(t, s)| s * Complex64::from_polar(1.0, 2.0 * PI * fo_frac * t as f64 + phase0))
        .collect();
    IqFrame::from_complex(&rotated)
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the frame's
/// measured mean power.
pub fn apply_awgn<R: Rng + ?Sized>(frame: &IqFrame, snr_db: f64, rng: &mut R) -> Result<IqFrame> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter("snr_db must be finite".into()));
    }
    let power = frame.mean_power();
    if power <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut noise = || sigma * rng.sample::<f64, _>(StandardNormal);
    let mut i = Vec::with_capacity(frame.len());
    let mut q = Vec::with_capacity(frame.len());
    for (&a, &b) in frame.i().iter().zip(frame.q()) {
        i.push(a + noise());
        q.push(b + noise());
    }
    IqFrame::new(i, q)
}

/// Circular complex Gaussian samples with unit mean power.
pub fn synth_awgn_class<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> Result<IqFrame> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut i = Vec::with_capacity(n_samples);
    let mut q = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        i.push(s * rng.sample::<f64, _>(StandardNormal));
        q.push(s * rng.sample::<f64, _>(StandardNormal));
    }
    IqFrame::new(i, q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasuredSnr {
    Db(f64),
    /// `noisy` equals `clean` exactly.
    Infinite,
}

impl MeasuredSnr {
    pub fn db(self) -> f64 {
        match self {
            MeasuredSnr::Db(v) => v,
            MeasuredSnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, MeasuredSnr::Infinite)
    }
}

/// `10 log10(sum |clean|^2 / sum |noisy - clean|^2)`.
pub fn measure_snr(clean: &IqFrame, noisy: &IqFrame) -> Result<MeasuredSnr> {
    if clean.len() != noisy.len() {
        return Err(Error::ShapeMismatch(format!(
            "clean has {} samples, noisy has {}",
            clean.len(),
            noisy.len()
        )));
    }
    let signal = clean.energy();
    let noise: f64 = (0..clean.len())
        .map(|t| (noisy.sample(t) - clean.sample(t)).norm_sqr())
        .sum();
    if noise == 0.0 {
        return Ok(MeasuredSnr::Infinite);
    }
    Ok(MeasuredSnr::Db(10.0 * (signal / noise).log10()))
}
