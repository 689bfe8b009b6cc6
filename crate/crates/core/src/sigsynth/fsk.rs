use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::filters::gaussian_frequency_pulse;
use super::linear::crop_steady_state;
use super::modclass::{Family, FskShape, ModClass, ModParams};
use super::IqFrame;
use crate::error::{Error, Result};

/// Continuous phase of a binary CPM signal.
///
/// `symbols` are +/-1 amplitudes, `pulse` is a frequency pulse whose taps sum
/// to `sps`, and `deviation` is in cycles/sample. Output length is
/// `symbols.len() * sps + pulse.len() - 1`.
pub fn cpm_phase(symbols: &[f64], pulse: &[f64], sps: usize, deviation: f64) -> Vec<f64> {
    let n = symbols.len() * sps + pulse.len() - 1;
    let mut freq = vec![0.0; n];
    for (k, &a) in symbols.iter().enumerate() {
        for (j, &p) in pulse.iter().enumerate() {
            freq[k * sps + j] += a * p;
        }
    }
    let step = 2.0 * PI * deviation;
    let mut acc = 0.0;
    freq.iter()
        .map(|f| {
            acc += step * f;
            acc
        })
        .collect()
}

fn frequency_pulse(class: &ModClass, sps: usize) -> Result<Vec<f64>> {
    match (class.family(), class.params) {
        (
            Family::Fsk,
            ModParams::Fsk {
                shape,
                symbol_overlap,
                ..
            },
        ) => match shape {
            FskShape::Rect => Ok(vec![1.0; sps]),
            FskShape::Gaussian { beta } => gaussian_frequency_pulse(beta, symbol_overlap, sps),
        },
        _ => Err(Error::InvalidParameter(format!("{} is not an FSK class", class.name))),
    }
}

/// Full-length constant-envelope output for a given +/-1 symbol stream.
pub fn synth_fsk_with_symbols(class: &ModClass, symbols: &[f64], sps: usize) -> Result<Vec<Complex64>> {
    if sps < 1 {
        return Err(Error::InvalidParameter("sps must be >= 1".into()));
    }
    let pulse = frequency_pulse(class, sps)?;
    let deviation = class.fsk_deviation(sps).expect("fsk class");
    Ok(cpm_phase(symbols, &pulse, sps, deviation)
        .into_iter()
        .map(|phi| Complex64::from_polar(1.0, phi))
        .collect())
}

/// Random binary FSK/MSK/GFSK/GMSK frame with the phase transient cropped.
pub fn synth_fsk<R: Rng + ?Sized>(
    class: &ModClass,
    n_symbols: usize,
    sps: usize,
    frame_len: usize,
    rng: &mut R,
) -> Result<IqFrame> {
    class.validate()?;
    let pulse_len = frequency_pulse(class, sps)?.len();
    let symbols: Vec<f64> = (0..n_symbols)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let full = synth_fsk_with_symbols(class, &symbols, sps)?;
    crop_steady_state(&full, n_symbols * sps, pulse_len, frame_len)
}
