use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExampleMeta;
use crate::error::{Error, Result};

const EDGE_TOL: f64 = 1e-9;

/// An (SNR range, FO range) rectangle selecting a source or target domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainWindow {
    pub snr_db: [f64; 2],
    pub fo_frac: [f64; 2],
    pub label: String,
}

impl DomainWindow {
    pub fn new(snr_db: [f64; 2], fo_frac: [f64; 2], label: impl Into<String>) -> Self {
        Self {
            snr_db,
            fo_frac,
            label: label.into(),
        }
    }

    pub fn contains(&self, meta: &ExampleMeta) -> bool {
        self.snr_db[0] <= meta.snr_db
            && meta.snr_db <= self.snr_db[1]
            && self.fo_frac[0] <= meta.fo_frac
            && meta.fo_frac <= self.fo_frac[1]
    }

    pub fn validate_within(&self, snr_range: [f64; 2], fo_range: [f64; 2]) -> Result<()> {
        let ordered = self.snr_db[0] <= self.snr_db[1] && self.fo_frac[0] <= self.fo_frac[1];
        let inside = self.snr_db[0] >= snr_range[0] - EDGE_TOL
            && self.snr_db[1] <= snr_range[1] + EDGE_TOL
            && self.fo_frac[0] >= fo_range[0] - EDGE_TOL
            && self.fo_frac[1] <= fo_range[1] + EDGE_TOL;
        if !ordered || !inside {
            return Err(Error::InvalidParameter(format!(
                "window `{}` SNR {:?} x FO {:?} is not an ordered rectangle inside SNR {:?} x FO {:?}",
                self.label, self.snr_db, self.fo_frac, snr_range, fo_range
            )));
        }
        Ok(())
    }
}

/// On-disk window description used by the `subset` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub snr_lo: f64,
    pub snr_hi: f64,
    pub fo_lo: f64,
    pub fo_hi: f64,
    pub per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

impl WindowConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn window(&self) -> DomainWindow {
        let label = self.label.clone().unwrap_or_else(|| {
            format!(
                "snr[{},{}]fo[{},{}]",
                self.snr_lo, self.snr_hi, self.fo_lo, self.fo_hi
            )
        });
        DomainWindow::new([self.snr_lo, self.snr_hi], [self.fo_lo, self.fo_hi], label)
    }
}

/// Sliding windows of `width` advanced by `step` across `[lo, hi]`.
///
/// The span must be covered by a whole number of steps.
pub fn sweep_windows(lo: f64, hi: f64, width: f64, step: f64) -> Result<Vec<[f64; 2]>> {
    if !(width > 0.0 && step > 0.0 && lo < hi && width <= hi - lo + EDGE_TOL) {
        return Err(Error::InvalidParameter(format!(
            "cannot slide width {width} by {step} over [{lo}, {hi}]"
        )));
    }
    let steps = (hi - lo - width) / step;
    let whole = steps.round();
    if (steps - whole).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "span {} minus width {width} is not a multiple of step {step}",
            hi - lo
        )));
    }
    Ok((0..=whole as usize)
        .map(|k| {
            let a = lo + k as f64 * step;
            [a, a + width]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_sweep_window_counts() {
        let snr = sweep_windows(-10.0, 20.0, 5.0, 1.0).unwrap();
        assert_eq!(snr.len(), 26);
        assert_eq!(snr[0], [-10.0, -5.0]);
        assert_eq!(snr[25], [15.0, 20.0]);
        let fo = sweep_windows(-0.10, 0.10, 0.05, 0.005).unwrap();
        assert_eq!(fo.len(), 31);
        assert!((fo[30][1] - 0.10).abs() < 1e-12);
        assert_eq!(sweep_windows(-10.0, 20.0, 10.0, 5.0).unwrap().len(), 5);
        assert_eq!(sweep_windows(-0.10, 0.10, 0.10, 0.025).unwrap().len(), 5);
    }

    #[test]
    fn inconsistent_step_is_rejected() {
        assert!(sweep_windows(-10.0, 20.0, 5.0, 4.0).is_err());
        assert!(sweep_windows(0.0, 1.0, 2.0, 0.5).is_err());
        assert!(sweep_windows(0.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn window_config_parses() {
        let cfg: WindowConfig = toml::from_str(
            "snr_lo = -10.0\nsnr_hi = -5.0\nfo_lo = -0.05\nfo_hi = 0.05\nper_class = 100\nseed = 7\n",
        )
        .unwrap();
        let w = cfg.window();
        assert_eq!(w.snr_db, [-10.0, -5.0]);
        assert_eq!(cfg.per_class, 100);
        assert!(w.validate_within([-10.0, 20.0], [-0.1, 0.1]).is_ok());
    }
}
