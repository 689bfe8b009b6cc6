use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use super::filters::lowpass_taps;
use super::modclass::{Family, ModClass, ModName, ModParams};
use super::IqFrame;
use crate::error::{Error, Result};

const MESSAGE_CUTOFF: f64 = 0.1;
const MESSAGE_TAPS: usize = 63;

/// Unit-variance Gaussian noise low-passed to 10% of the sample rate.
pub fn lowpass_message<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> Vec<f64> {
    let taps = lowpass_taps(MESSAGE_CUTOFF, MESSAGE_TAPS).expect("static filter design");
    let gain = taps.iter().map(|t| t * t).sum::<f64>().sqrt().recip();
    let white: Vec<f64> = (0..n_samples + taps.len() - 1)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    (0..n_samples)
        .map(|t| {
            taps.iter()
                .enumerate()
                .map(|(k, h)| h * white[t + taps.len() - 1 - k])
                .sum::<f64>()
                * gain
        })
        .collect()
}

/// Analytic signal `x + j H{x}` computed by zeroing negative frequencies.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *b *= w;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|b| *b *= scale);
    buf
}

fn normalize_power(samples: Vec<Complex64>) -> Result<IqFrame> {
    let p = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let k = if p > 0.0 { p.sqrt().recip() } else { 1.0 };
    IqFrame::from_complex(&samples.into_iter().map(|s| s * k).collect::<Vec<_>>())
}

/// Modulates a given real message. AM outputs are rescaled to unit power.
pub fn synth_analog_with_message(class: &ModClass, message: &[f64]) -> Result<IqFrame> {
    class.validate()?;
    let mu = match (class.family(), class.params) {
        (Family::Analog, ModParams::Analog { modulation_index }) => modulation_index,
        _ => return Err(Error::InvalidParameter(format!("{} is not an analog class", class.name))),
    };
    if message.is_empty() {
        return Err(Error::Empty("analog message".into()));
    }
    let real = |f: &dyn Fn(f64) -> f64| -> Vec<Complex64> {
        message.iter().map(|&m| Complex64::new(f(m), 0.0)).collect()
    };
    let samples = match class.name {
        ModName::AmDsb => real(&|m| 1.0 + mu * m),
        ModName::AmDsbsc => real(&|m| mu * m),
        ModName::AmUsb | ModName::AmLsb => {
            let scaled: Vec<f64> = message.iter().map(|m| mu * m).collect();
            let mut a = analytic_signal(&scaled);
            if class.name == ModName::AmLsb {
                a.iter_mut().for_each(|s| *s = s.conj());
            }
            a
        }
        ModName::FmNb | ModName::FmWb => {
            let mut phase = 0.0;
            message
                .iter()
                .map(|m| {
                    phase += mu * m;
                    Complex64::from_polar(1.0, phase)
                })
                .collect()
        }
        _ => unreachable!("analog family"),
    };
    normalize_power(samples)
}

pub fn synth_analog<R: Rng + ?Sized>(class: &ModClass, n_samples: usize, rng: &mut R) -> Result<IqFrame> {
    class.validate()?;
    if class.family() != Family::Analog {
        return Err(Error::InvalidParameter(format!("{} is not an analog class", class.name)));
    }
    let message = lowpass_message(n_samples, rng);
    synth_analog_with_message(class, &message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn analog(name: ModName, mu: f64) -> ModClass {
        ModClass::new(name, ModParams::Analog { modulation_index: mu }).unwrap()
    }

    fn dft_bin(x: &[Complex64], k: isize) -> Complex64 {
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(t, s)| s * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * t as f64 / n))
            .sum()
    }

    // Power series; accurate for the small arguments used here.
    fn bessel_j(order: i32, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact_m = 1.0;
        for m in 0..30 {
            if m > 0 {
                fact_m *= m as f64;
            }
            let fact_mn: f64 = (1..=(m + order)).map(|v| v as f64).product();
            sum += (-1f64).powi(m) / (fact_m * fact_mn) * (x / 2.0).powi(2 * m + order);
        }
        sum
    }

    #[test]
    fn message_is_roughly_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = lowpass_message(100_000, &mut rng);
        let var = m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn dsb_with_zero_message_is_a_dc_carrier() {
        let f = synth_analog_with_message(&analog(ModName::AmDsb, 0.7), &[0.0; 64]).unwrap();
        for t in 0..64 {
            assert!((f.sample(t) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn usb_of_a_tone_rejects_the_image() {
        let n = 256;
        let k = 10;
        let tone: Vec<f64> = (0..n).map(|t| (2.0 * PI * k as f64 * t as f64 / n as f64).cos()).collect();
        let usb = synth_analog_with_message(&analog(ModName::AmUsb, 0.6), &tone).unwrap();
        let x = usb.to_complex();
        let pos = dft_bin(&x, k).norm();
        let neg = dft_bin(&x, -k).norm();
        let rejection_db = 20.0 * (pos / neg.max(1e-300)).log10();
        assert!(rejection_db >= 30.0, "{rejection_db} dB");
        let lsb = synth_analog_with_message(&analog(ModName::AmLsb, 0.6), &tone).unwrap();
        let y = lsb.to_complex();
        assert!(dft_bin(&y, -k).norm() > 1e3 * dft_bin(&y, k).norm());
    }

    #[test]
    fn narrowband_fm_sidebands_follow_bessel_ratio() {
        let n = 512;
        let k = 16;
        let omega = 2.0 * PI * k as f64 / n as f64;
        let mu = 0.1;
        let tone: Vec<f64> = (0..n).map(|t| (omega * t as f64).sin()).collect();
        let fm = synth_analog_with_message(&analog(ModName::FmNb, mu), &tone).unwrap();
        let x = fm.to_complex();
        // Running sum of sin(w t) has peak phase deviation mu / (2 sin(w/2)).
        let beta = mu / (2.0 * (omega / 2.0).sin());
        let expected = bessel_j(1, beta) / bessel_j(0, beta);
        let measured = dft_bin(&x, k).norm() / dft_bin(&x, 0).norm();
        assert!((measured - expected).abs() < 0.05 * expected, "{measured} vs {expected}");
    }

    #[test]
    fn outputs_have_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in [ModName::AmDsb, ModName::AmDsbsc, ModName::AmLsb, ModName::AmUsb, ModName::FmNb, ModName::FmWb] {
            let class = ModClass::random(name, &mut rng);
            let f = synth_analog(&class, 128, &mut rng).unwrap();
            assert!((f.mean_power() - 1.0).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn index_outside_table_is_rejected() {
        let bad = ModClass {
            name: ModName::FmNb,
            params: ModParams::Analog { modulation_index: 0.9 },
        };
        assert!(synth_analog_with_message(&bad, &[0.0; 8]).is_err());
    }
}
