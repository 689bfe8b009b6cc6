use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Unnormalized root-raised-cosine impulse response at `t` symbol periods.
pub(crate) fn rrc_response(t: f64, beta: f64) -> f64 {
    if t == 0.0 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let x = 4.0 * beta * t;
    if (1.0 - x * x).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * t * (1.0 - beta)).sin() + x * (PI * t * (1.0 + beta)).cos())
        / (PI * t * (1.0 - x * x))
}

/// Root-raised-cosine taps spanning `symbol_overlap` symbols on each side of
/// the center, peak-normalized so the center tap is 1.
pub fn rrc_taps(excess_bandwidth: f64, symbol_overlap: usize, sps: usize) -> Result<Vec<f64>> {
    if !excess_bandwidth.is_finite() || excess_bandwidth <= 0.0 || excess_bandwidth > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "excess bandwidth {excess_bandwidth} outside (0, 1]"
        )));
    }
    if symbol_overlap < 1 {
        return Err(Error::InvalidParameter("symbol overlap must be >= 1".into()));
    }
    if sps < 2 {
        return Err(Error::InvalidParameter(format!("sps {sps} < 2")));
    }
    let half = (symbol_overlap * sps) as isize;
    let peak = rrc_response(0.0, excess_bandwidth);
    Ok((-half..=half)
        .map(|k| rrc_response(k as f64 / sps as f64, excess_bandwidth) / peak)
        .collect())
}

/// Gaussian-smoothed rectangular frequency pulse for GFSK/GMSK.
///
/// The Gaussian is truncated to `symbol_overlap` symbols and convolved with a
/// one-symbol rectangle. Taps sum to `sps`, so a run of identical symbols
/// settles at exactly the nominal deviation.
pub fn gaussian_frequency_pulse(beta: f64, symbol_overlap: usize, sps: usize) -> Result<Vec<f64>> {
    if !beta.is_finite() || beta <= 0.0 || beta > 1.0 {
        return Err(Error::InvalidParameter(format!("gaussian beta {beta} outside (0, 1]")));
    }
    if symbol_overlap < 1 || sps < 1 {
        return Err(Error::InvalidParameter(
            "gaussian pulse needs overlap >= 1 and sps >= 1".into(),
        ));
    }
    let half = (symbol_overlap * sps / 2) as isize;
    let gauss: Vec<f64> = (-half..=half)
        .map(|k| {
            let t = k as f64 / sps as f64;
            (2.0 * PI / LN_2).sqrt() * beta * (-2.0 * PI * PI * beta * beta * t * t / LN_2).exp()
        })
        .collect();
    let mut pulse = vec![0.0; gauss.len() + sps - 1];
    for (i, g) in gauss.iter().enumerate() {
        for p in &mut pulse[i..i + sps] {
            *p += g;
        }
    }
    let sum: f64 = pulse.iter().sum();
    let scale = sps as f64 / sum;
    pulse.iter_mut().for_each(|p| *p *= scale);
    Ok(pulse)
}

/// Hamming-windowed sinc low-pass with unit DC gain; `cutoff` in
/// cycles/sample.
pub fn lowpass_taps(cutoff: f64, n_taps: usize) -> Result<Vec<f64>> {
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::InvalidParameter(format!("cutoff {cutoff} outside (0, 0.5)")));
    }
    if n_taps % 2 == 0 || n_taps < 3 {
        return Err(Error::InvalidParameter("lowpass needs an odd tap count >= 3".into()));
    }
    let m = (n_taps - 1) as f64;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|k| {
            let x = k as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / m).cos();
            sinc * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    Ok(taps)
}
