//! Sweep configuration, planning, execution and CSV reporting.

mod report;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataspec::{sweep_windows, DomainWindow, MasterSpec, DESK_CLASSES};
use crate::error::{Error, Result};
use crate::nnkernel::ModelSpec;
use crate::tmetrics::ScoreKind;
use crate::xfer::TrainMode;

pub use report::{
    coverage_held_out, diagonal_dominance, emit_heatmap, held_out_hits, emit_scatter_fit, heatmap_matrix, mean_abs_asymmetry,
    triangle_means, ScatterFit, SweepSummary,
};
pub use run::{
    build_windows, load_diagonal, load_records, run_sweep, split_window, transfer_job, DiagonalEntry, SweepOutcome, WindowData, DIAGONAL_CSV,
    RECORDS_CSV,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "SNR")]
    Snr,
    #[serde(rename = "FO")]
    Fo,
    #[serde(rename = "SNR_FO")]
    SnrFo,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '+'], "_").as_str() {
            "SNR" => Ok(SweepAxis::Snr),
            "FO" => Ok(SweepAxis::Fo),
            "SNR_FO" => Ok(SweepAxis::SnrFo),
            _ => Err(Error::InvalidParameter(format!("unknown sweep axis `{s}`"))),
        }
    }
}

/// How windows tile the swept parameter(s). A non-swept parameter is held
/// at its `fixed_*` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub snr_span: [f64; 2],
    pub snr_width: f64,
    pub snr_step: f64,
    pub fo_span: [f64; 2],
    pub fo_width: f64,
    pub fo_step: f64,
    pub fixed_snr: [f64; 2],
    pub fixed_fo: [f64; 2],
}

/// Per-class example counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Drawn from the target window's train split.
    pub transfer_train: usize,
    /// Drawn from the target window's validation split.
    pub transfer_val: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWidths {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingKnobs {
    pub pretrain_epochs: usize,
    pub transfer_epochs: usize,
    pub batch: usize,
    /// Re-initialise the head before transfer. Unset keeps the per-method
    /// default: fresh for head re-training, inherited for fine-tuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reinit_head: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub seed: u64,
    pub methods: Vec<TrainMode>,
    pub master: MasterSpec,
    pub windows: WindowPlan,
    pub splits: SplitSizes,
    pub model: ModelWidths,
    pub training: TrainingKnobs,
    /// Concurrent transfer jobs; 1 runs everything on the calling thread.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl SweepConfig {
    /// Full-size sweep definitions: 23 classes, the reference network and
    /// 100 epochs per training run.
    pub fn paper(axis: SweepAxis) -> Self {
        let windows = match axis {
            SweepAxis::Snr => WindowPlan {
                snr_span: [-10.0, 20.0],
                snr_width: 5.0,
                snr_step: 1.0,
                fo_span: [-0.05, 0.05],
                fo_width: 0.10,
                fo_step: 0.10,
                fixed_snr: [-10.0, 20.0],
                fixed_fo: [-0.05, 0.05],
            },
            SweepAxis::Fo => WindowPlan {
                snr_span: [0.0, 20.0],
                snr_width: 20.0,
                snr_step: 20.0,
                fo_span: [-0.10, 0.10],
                fo_width: 0.05,
                fo_step: 0.005,
                fixed_snr: [0.0, 20.0],
                fixed_fo: [-0.10, 0.10],
            },
            SweepAxis::SnrFo => WindowPlan {
                snr_span: [-10.0, 20.0],
                snr_width: 10.0,
                snr_step: 5.0,
                fo_span: [-0.10, 0.10],
                fo_width: 0.10,
                fo_step: 0.025,
                fixed_snr: [-10.0, 20.0],
                fixed_fo: [-0.10, 0.10],
            },
        };
        Self {
            axis,
            seed: 0,
            methods: vec![TrainMode::HeadRetrain, TrainMode::FineTune],
            master: MasterSpec::paper_scale(),
            windows,
            splits: SplitSizes {
                train: 200,
                val: 40,
                test: 100,
                transfer_train: 100,
                transfer_val: 20,
            },
            model: ModelWidths {
                conv1: 1500,
                conv2: 96,
                hidden: 65,
            },
            training: TrainingKnobs {
                pretrain_epochs: 100,
                transfer_epochs: 100,
                batch: 64,
                reinit_head: None,
            },
            workers: 1,
        }
    }

    /// Single-machine sweeps: 6 classes, 5 windows per swept axis, a small
    /// network and short training.
    pub fn desk(axis: SweepAxis) -> Self {
        let mut cfg = Self::paper(axis);
        cfg.master = MasterSpec {
            classes: DESK_CLASSES.iter().map(|s| s.to_string()).collect(),
            ..MasterSpec::default()
        };
        cfg.methods = vec![TrainMode::HeadRetrain];
        cfg.model = ModelWidths {
            conv1: 64,
            conv2: 32,
            hidden: 32,
        };
        cfg.training = TrainingKnobs {
            pretrain_epochs: 15,
            transfer_epochs: 30,
            batch: 32,
            reinit_head: None,
        };
        match axis {
            SweepAxis::Snr => {
                cfg.windows.snr_width = 10.0;
                cfg.windows.snr_step = 5.0;
            }
            SweepAxis::Fo => {
                cfg.windows.fo_span = [-0.075, 0.075];
                cfg.windows.fo_width = 0.05;
                cfg.windows.fo_step = 0.025;
            }
            SweepAxis::SnrFo => {}
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::compact(
            self.model.conv1,
            self.model.conv2,
            self.model.hidden,
            self.master.classes.len(),
            self.master.frame_len,
        )
    }

    /// Windows in sweep order; for the joint sweep, SNR is the outer index.
    pub fn windows(&self) -> Result<Vec<DomainWindow>> {
        let w = &self.windows;
        let snr = match self.axis {
            SweepAxis::Fo => vec![w.fixed_snr],
            _ => sweep_windows(w.snr_span[0], w.snr_span[1], w.snr_width, w.snr_step)?,
        };
        let fo = match self.axis {
            SweepAxis::Snr => vec![w.fixed_fo],
            _ => sweep_windows(w.fo_span[0], w.fo_span[1], w.fo_width, w.fo_step)?,
        };
        let mut out = Vec::with_capacity(snr.len() * fo.len());
        for s in &snr {
            for f in &fo {
                let win = DomainWindow::new(*s, *f, window_label(*s, *f));
                win.validate_within(self.master.snr_range_db, self.master.fo_range_frac)?;
                out.push(win);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.master.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no transfer methods selected".into()));
        }
        if self.methods.contains(&TrainMode::Pretrain) {
            return Err(Error::Config("PRETRAIN is not a transfer method".into()));
        }
        let s = &self.splits;
        if s.transfer_train > s.train || s.transfer_val > s.val || s.train == 0 || s.val == 0 || s.test == 0 {
            return Err(Error::Config(
                "transfer splits must fit inside the train/val splits, and all splits must be non-empty".into(),
            ));
        }
        if self.training.batch == 0 || self.workers == 0 {
            return Err(Error::Config("batch and workers must be positive".into()));
        }
        self.model_spec().validate()?;
        Ok(())
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Compact window label, FO in percent of the sample rate.
pub fn window_label(snr: [f64; 2], fo: [f64; 2]) -> String {
    format!(
        "snr{}..{}_fo{}..{}",
        trim(snr[0]),
        trim(snr[1]),
        trim(fo[0] * 100.0),
        trim(fo[1] * 100.0)
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransferJob {
    pub source: usize,
    pub target: usize,
    pub method: TrainMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub config: SweepConfig,
    pub windows: Vec<DomainWindow>,
    pub jobs: Vec<TransferJob>,
}

impl SweepPlan {
    pub fn jobs_per_method(&self) -> usize {
        let n = self.windows.len();
        n * (n - 1)
    }

    /// Window layout as (SNR windows, FO windows).
    pub fn grid(&self) -> (usize, usize) {
        let n = self.windows.len();
        match self.config.axis {
            SweepAxis::Snr => (n, 1),
            SweepAxis::Fo => (1, n),
            SweepAxis::SnrFo => {
                let fo = self.windows.iter().filter(|w| w.snr_db == self.windows[0].snr_db).count();
                (n / fo, fo)
            }
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.windows.iter().map(|w| w.label.clone()).collect()
    }

    pub fn job_key(&self, job: &TransferJob) -> (String, String, TrainMode) {
        (
            self.windows[job.source].label.clone(),
            self.windows[job.target].label.clone(),
            job.method,
        )
    }
}

/// Windows plus every off-diagonal (source, target) job for each method,
/// method-major then source-major.
pub fn plan_sweep(config: &SweepConfig) -> Result<SweepPlan> {
    config.validate()?;
    let windows = config.windows()?;
    if windows.len() < 2 {
        return Err(Error::Config("a sweep needs at least two windows".into()));
    }
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for s in 0..windows.len() {
            for t in 0..windows.len() {
                if s != t {
                    jobs.push(TransferJob {
                        source: s,
                        target: t,
                        method,
                    });
                }
            }
        }
    }
    debug_assert_eq!(jobs.len(), windows.len() * (windows.len() - 1) * config.methods.len());
    Ok(SweepPlan {
        config: config.clone(),
        windows,
        jobs,
    })
}

/// Writes heatmaps, scatter fits and `summary.json` for a sweep directory
/// and returns one summary per method.
pub fn write_report(workdir: &Path) -> Result<Vec<SweepSummary>> {
    let config = SweepConfig::load(&workdir.join("config.toml"))?;
    let plan = plan_sweep(&config)?;
    let records = load_records(&workdir.join(RECORDS_CSV))?;
    let diagonal = load_diagonal(&workdir.join(DIAGONAL_CSV))?;
    let labels = plan.labels();
    let mut out = Vec::new();
    for &method in &config.methods {
        let m = method.as_str().to_ascii_lowercase();
        emit_heatmap(&labels, &records, &diagonal, method, &workdir.join(format!("heatmap_{m}.csv")))?;
        for kind in [ScoreKind::Leep, ScoreKind::Logme] {
            let path = workdir.join(format!("scatter_{}_{m}.csv", kind.as_str().to_ascii_lowercase()));
            if let Err(e) = emit_scatter_fit(&records, kind, method, &path) {
                log::warn!("{} scatter for {}: {e}", kind.as_str(), method.as_str());
            }
        }
        out.push(SweepSummary::compute(&labels, plan.grid(), &records, &diagonal, method));
    }
    std::fs::write(workdir.join("summary.json"), serde_json::to_string_pretty(&out)?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_plans_match_published_counts() {
        for (axis, windows, per_method) in [
            (SweepAxis::Snr, 26, 650),
            (SweepAxis::Fo, 31, 930),
            (SweepAxis::SnrFo, 25, 600),
        ] {
            let plan = plan_sweep(&SweepConfig::paper(axis)).unwrap();
            assert_eq!(plan.windows.len(), windows);
            assert_eq!(plan.jobs_per_method(), per_method);
            assert_eq!(plan.jobs.len(), 2 * per_method);
        }
    }

    #[test]
    fn desk_plans_have_five_windows() {
        for axis in [SweepAxis::Snr, SweepAxis::Fo] {
            let plan = plan_sweep(&SweepConfig::desk(axis)).unwrap();
            assert_eq!(plan.windows.len(), 5);
            assert_eq!(plan.jobs.len(), 20);
            assert!(plan.jobs.iter().all(|j| j.source != j.target));
        }
        let fo = SweepConfig::desk(SweepAxis::Fo).windows().unwrap();
        assert_eq!(fo[0].label, "snr0..20_fo-7.5..-2.5");
        assert!((fo[4].fo_frac[0] - 0.025).abs() < 1e-12 && (fo[4].fo_frac[1] - 0.075).abs() < 1e-12);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SweepConfig::desk(SweepAxis::Snr);
        let back: SweepConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = SweepConfig::desk(SweepAxis::Snr);
        cfg.windows.snr_step = 3.0;
        assert!(plan_sweep(&cfg).is_err());
        let mut cfg = SweepConfig::desk(SweepAxis::Snr);
        cfg.methods.clear();
        assert!(plan_sweep(&cfg).is_err());
        let mut cfg = SweepConfig::desk(SweepAxis::Fo);
        cfg.windows.fo_span = [-0.2, 0.2];
        assert!(plan_sweep(&cfg).is_err());
    }
}
