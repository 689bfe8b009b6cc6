//! Complex-baseband signal synthesis and the impairment chain.
//!
//! Every generator takes an explicit seeded RNG and is otherwise pure, so a
//! frame is a deterministic function of `(class, params, sps, impairments,
//! seed)`.

mod analog;
mod filters;
mod fsk;
mod impair;
mod linear;
mod modclass;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub use analog::{analytic_signal, lowpass_message, synth_analog, synth_analog_with_message};
pub use filters::{gaussian_frequency_pulse, lowpass_taps, rrc_taps};
pub use fsk::{cpm_phase, synth_fsk, synth_fsk_with_symbols};
pub use impair::{apply_awgn, apply_fo, measure_snr, synth_awgn_class, MeasuredSnr};
pub use linear::{constellation, pulse_shape, synth_linear, synth_linear_with_symbols};
pub use modclass::{Family, FskShape, ImpairmentSpec, ModClass, ModName, ModParams};

/// Nominal master sample rate used to turn Hz carrier spacings into
/// normalized frequencies.
pub const MASTER_SAMPLE_RATE_HZ: f64 = 1.0e6;

/// Default number of complex samples per observation.
pub const DEFAULT_FRAME_LEN: usize = 128;

/// One complex-baseband observation stored as an in-phase row and a
/// quadrature row of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame {
    i: Vec<f64>,
    q: Vec<f64>,
}

impl IqFrame {
    pub fn new(i: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::ShapeMismatch(format!(
                "I row has {} samples, Q row has {}",
                i.len(),
                q.len()
            )));
        }
        if i.is_empty() {
            return Err(Error::Empty("IQ frame".into()));
        }
        if i.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample in IQ frame".into()));
        }
        Ok(Self { i, q })
    }

    pub fn from_complex(samples: &[Complex64]) -> Result<Self> {
        Self::new(
            samples.iter().map(|c| c.re).collect(),
            samples.iter().map(|c| c.im).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    pub fn i(&self) -> &[f64] {
        &self.i
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn sample(&self, t: usize) -> Complex64 {
        Complex64::new(self.i[t], self.q[t])
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.i
            .iter()
            .zip(&self.q)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    /// Mean of `|s[t]|^2`.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.i
            .iter()
            .zip(&self.q)
            .map(|(a, b)| a * a + b * b)
            .sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            i: self.i.iter().map(|v| v * k).collect(),
            q: self.q.iter().map(|v| v * k).collect(),
        }
    }

    /// Row-major `[I..., Q...]` single-precision copy, the layout used by
    /// datasets and the classifier input.
    pub fn to_f32_rows(&self) -> Vec<f32> {
        self.i.iter().chain(&self.q).map(|&v| v as f32).collect()
    }

    pub fn from_f32_rows(rows: &[f32]) -> Result<Self> {
        if rows.len() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot be split into two equal rows",
                rows.len()
            )));
        }
        let n = rows.len() / 2;
        Self::new(
            rows[..n].iter().map(|&v| v as f64).collect(),
            rows[n..].iter().map(|&v| v as f64).collect(),
        )
    }
}

/// Samples per symbol drawn for one example: 2 or 3.
pub fn draw_sps<R: Rng + ?Sized>(rng: &mut R) -> usize {
    if rng.gen_bool(0.5) {
        2
    } else {
        3
    }
}

/// Produces one clean, unit-power frame of `frame_len` samples for any class.
///
/// `sps` is ignored by the analog and noise families, which are generated at
/// the sample rate.
pub fn synthesize_clean<R: Rng + ?Sized>(
    class: &ModClass,
    frame_len: usize,
    sps: usize,
    rng: &mut R,
) -> Result<IqFrame> {
    match class.family() {
        Family::Linear => {
            let overlap = match class.params {
                ModParams::Linear { symbol_overlap, .. } => symbol_overlap,
                _ => unreachable!("family and params validated together"),
            };
            let n_symbols = frame_len.div_ceil(sps) + 2 * overlap + 4;
            synth_linear(class, n_symbols, sps, frame_len, rng)
        }
        Family::Fsk => {
            let overlap = match class.params {
                ModParams::Fsk { symbol_overlap, .. } => symbol_overlap,
                _ => unreachable!("family and params validated together"),
            };
            let n_symbols = frame_len.div_ceil(sps) + 2 * overlap + 4;
            synth_fsk(class, n_symbols, sps, frame_len, rng)
        }
        Family::Analog => synth_analog(class, frame_len, rng),
        Family::Noise => synth_awgn_class(frame_len, rng),
    }
}

/// Clean synthesis followed by frequency offset and additive noise.
pub fn synthesize<R: Rng + ?Sized>(
    class: &ModClass,
    frame_len: usize,
    sps: usize,
    impairments: &ImpairmentSpec,
    rng: &mut R,
) -> Result<IqFrame> {
    let clean = synthesize_clean(class, frame_len, sps, rng)?;
    let rotated = apply_fo(&clean, impairments.fo_frac, impairments.phase0)?;
    apply_awgn(&rotated, impairments.snr_db, rng)
}
