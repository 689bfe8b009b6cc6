use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use super::filters::rrc_taps;
use super::modclass::{Family, ModClass, ModName, ModParams};
use super::IqFrame;
use crate::error::{Error, Result};

fn normalize(points: Vec<Complex64>) -> Vec<Complex64> {
    let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
    let k = energy.sqrt().recip();
    points.into_iter().map(|p| p * k).collect()
}

fn psk(order: usize, offset: f64) -> Vec<Complex64> {
    (0..order)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64 + offset))
        .collect()
}

fn square_grid(side: usize, drop_corners: bool) -> Vec<Complex64> {
    let half = side as f64 - 1.0;
    let mut pts = Vec::with_capacity(side * side);
    for a in 0..side {
        for b in 0..side {
            let re = 2.0 * a as f64 - half;
            let im = 2.0 * b as f64 - half;
            if drop_corners && re.abs() == half && im.abs() == half {
                continue;
            }
            pts.push(Complex64::new(re, im));
        }
    }
    pts
}

fn rings(spec: &[(usize, f64, f64)]) -> Vec<Complex64> {
    spec.iter()
        .flat_map(|&(count, radius, offset)| {
            (0..count).map(move |k| {
                Complex64::from_polar(radius, 2.0 * PI * k as f64 / count as f64 + offset)
            })
        })
        .collect()
}

/// Unit-average-energy constellation for a linear class.
pub fn constellation(name: ModName) -> Result<Vec<Complex64>> {
    use ModName::*;
    let pts = match name {
        Bpsk => psk(2, 0.0),
        Qpsk | Oqpsk => psk(4, PI / 4.0),
        Psk8 => psk(8, 0.0),
        Psk16 => psk(16, 0.0),
        Qam16 => square_grid(4, false),
        // 6x6 grid with the four corners removed.
        Qam32 => square_grid(6, true),
        Qam64 => square_grid(8, false),
        Apsk16 => rings(&[(4, 1.0, PI / 4.0), (12, 2.7, PI / 12.0)]),
        Apsk32 => rings(&[(4, 1.0, PI / 4.0), (12, 2.64, PI / 12.0), (16, 4.64, 0.0)]),
        other => {
            return Err(Error::InvalidParameter(format!(
                "{other} has no symbol constellation"
            )))
        }
    };
    Ok(normalize(pts))
}

/// Upsamples `symbols` by `sps` and filters both rails with `taps`.
///
/// Returns the full convolution (length `symbols.len() * sps + taps.len() - 1`).
/// With `q_delay > 0` the quadrature impulse train is delayed by that many
/// samples before filtering (offset modulation).
pub fn pulse_shape(symbols: &[Complex64], taps: &[f64], sps: usize, q_delay: usize) -> Vec<Complex64> {
    let n_in = symbols.len() * sps;
    let n_out = n_in + taps.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    for (k, s) in symbols.iter().enumerate() {
        let i_at = k * sps;
        let q_at = i_at + q_delay;
        for (j, &h) in taps.iter().enumerate() {
            out[i_at + j].re += s.re * h;
            if q_at < n_in {
                out[q_at + j].im += s.im * h;
            }
        }
    }
    out
}

fn linear_params(class: &ModClass) -> Result<(f64, usize)> {
    match (class.family(), class.params) {
        (
            Family::Linear,
            ModParams::Linear {
                excess_bandwidth,
                symbol_overlap,
                ..
            },
        ) => Ok((excess_bandwidth, symbol_overlap)),
        _ => Err(Error::InvalidParameter(format!("{} is not a linear class", class.name))),
    }
}

/// Crops `frame_len` samples from the center of the filter's steady-state
/// region of a full convolution.
pub(crate) fn crop_steady_state(
    full: &[Complex64],
    input_len: usize,
    filter_len: usize,
    frame_len: usize,
) -> Result<IqFrame> {
    let steady = (input_len + 1).saturating_sub(filter_len);
    if steady < frame_len {
        return Err(Error::InvalidParameter(format!(
            "only {steady} steady-state samples available for a {frame_len}-sample frame"
        )));
    }
    let start = filter_len - 1 + (steady - frame_len) / 2;
    IqFrame::from_complex(&full[start..start + frame_len])
}

/// Shapes a given symbol stream with the class's RRC pulse.
///
/// The filter is rescaled so that i.i.d. unit-energy symbols produce unit
/// mean power. Output is the full, uncropped convolution.
pub fn synth_linear_with_symbols(
    class: &ModClass,
    symbols: &[Complex64],
    sps: usize,
) -> Result<Vec<Complex64>> {
    let (beta, overlap) = linear_params(class)?;
    let mut taps = rrc_taps(beta, overlap, sps)?;
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let gain = (sps as f64 / energy).sqrt();
    taps.iter_mut().for_each(|t| *t *= gain);
    let q_delay = if class.name == ModName::Oqpsk { sps / 2 } else { 0 };
    Ok(pulse_shape(symbols, &taps, sps, q_delay))
}

/// Random symbols, RRC pulse shaping, and steady-state cropping.
pub fn synth_linear<R: Rng + ?Sized>(
    class: &ModClass,
    n_symbols: usize,
    sps: usize,
    frame_len: usize,
    rng: &mut R,
) -> Result<IqFrame> {
    class.validate()?;
    let (_, overlap) = linear_params(class)?;
    let points = constellation(class.name)?;
    let symbols: Vec<Complex64> = (0..n_symbols)
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect();
    let full = synth_linear_with_symbols(class, &symbols, sps)?;
    crop_steady_state(&full, n_symbols * sps, 2 * overlap * sps + 1, frame_len)
}
