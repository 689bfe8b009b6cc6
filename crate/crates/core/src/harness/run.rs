use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SplitSizes, SweepConfig, SweepPlan, TransferJob};
use crate::dataspec::{generate_master, read_sigmf, split, subset, write_sigmf, Dataset, MasterSpec};
use crate::error::{Error, Result};
use crate::nnkernel::ModelCheckpoint;
use crate::seed;
use crate::statfit::TransferRecord;
use crate::tmetrics::score_pair;
use crate::xfer::{evaluate_top1, fine_tune, head_retrain, pretrain, LabeledSet, TrainMode, TrainRecipe};

const SUBSET: u64 = 0x7375_6273;
const SPLIT: u64 = 0x7370_6c74;
const PRETRAIN: u64 = 0x7072_6574;
const TRANSFER: u64 = 0x7866_6572;

pub const RECORDS_CSV: &str = "records.csv";
pub const DIAGONAL_CSV: &str = "diagonal.csv";

/// Source model evaluated on its own window's test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEntry {
    pub window: String,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub val_loss: f64,
}

/// Class-balanced splits of one window.
#[derive(Clone, Debug)]
pub struct WindowData {
    pub label: String,
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
    pub transfer_train: LabeledSet,
    pub transfer_val: LabeledSet,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Every row of the record table, in file order.
    pub records: Vec<TransferRecord>,
    pub diagonal: Vec<DiagonalEntry>,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(|r| r.is_ok())
    }
}

fn load_or_build_master(spec: &MasterSpec, dir: &Path) -> Result<Dataset> {
    let marker = dir.join("master.json");
    if marker.exists() {
        let stored: MasterSpec = serde_json::from_str(&fs::read_to_string(&marker)?)?;
        if &stored != spec {
            return Err(Error::Config(format!(
                "{} holds a master dataset built from a different spec",
                dir.display()
            )));
        }
        return read_sigmf(&dir.join("master"));
    }
    let t = Instant::now();
    let ds = generate_master(spec)?;
    write_sigmf(&ds, &dir.join("master"))?;
    fs::write(&marker, serde_json::to_string_pretty(spec)?)?;
    log::info!("generated master ({} examples) in {:.1?}", ds.len(), t.elapsed());
    Ok(ds)
}

fn check_workdir(config: &SweepConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("config.toml");
    let text = config.to_toml()?;
    if path.exists() {
        let stored = SweepConfig::load(&path)?;
        if &stored != config {
            return Err(Error::Config(format!(
                "{} was created with a different sweep config",
                dir.display()
            )));
        }
    } else {
        fs::write(&path, text)?;
    }
    Ok(())
}

/// Train/val/test splits of one window dataset plus the transfer subsets
/// drawn from its train and validation splits.
pub fn split_window(ds: &Dataset, sizes: &SplitSizes, base_seed: u64) -> Result<WindowData> {
    let mut rng = seed::rng(base_seed, &[SPLIT, seed::of_label(&ds.name)]);
    let sp = split(ds, sizes.train, sizes.val, sizes.test, &mut rng)?;
    let tt = sp.train.take_per_class(format!("{}/transfer_train", ds.name), sizes.transfer_train)?;
    let tv = sp.val.take_per_class(format!("{}/transfer_val", ds.name), sizes.transfer_val)?;
    Ok(WindowData {
        label: ds.name.clone(),
        train: LabeledSet::from_dataset(&sp.train)?,
        val: LabeledSet::from_dataset(&sp.val)?,
        test: LabeledSet::from_dataset(&sp.test)?,
        transfer_train: LabeledSet::from_dataset(&tt)?,
        transfer_val: LabeledSet::from_dataset(&tv)?,
    })
}

/// Subsets and splits every window of the plan from the master dataset.
pub fn build_windows(plan: &SweepPlan, master: &Dataset) -> Result<Vec<WindowData>> {
    let cfg = &plan.config;
    let s = &cfg.splits;
    plan.windows
        .iter()
        .map(|win| {
            let mut rng = seed::rng(cfg.seed, &[SUBSET, seed::of_label(&win.label)]);
            let ds = subset(master, win, s.train + s.val + s.test, &mut rng)?;
            split_window(&ds, s, cfg.seed)
        })
        .collect()
}

fn pretrain_window(cfg: &SweepConfig, data: &WindowData, models: &Path) -> Result<(ModelCheckpoint, DiagonalEntry)> {
    let path = models.join(format!("{}.ckpt", data.label));
    let ckpt = if path.exists() {
        ModelCheckpoint::load(&path)?
    } else {
        let t = Instant::now();
        let recipe = TrainRecipe::new(TrainMode::Pretrain, seed::derive(cfg.seed, &[PRETRAIN, seed::of_label(&data.label)]))
            .with_epochs(cfg.training.pretrain_epochs)
            .with_batch(cfg.training.batch);
        let ckpt = pretrain(&cfg.model_spec(), &data.train, &data.val, &recipe)?;
        ckpt.save(&path)?;
        log::info!("pretrained {} in {:.1?}", data.label, t.elapsed());
        ckpt
    };
    let accuracy = evaluate_top1(&ckpt, &data.test)?;
    let entry = DiagonalEntry {
        window: data.label.clone(),
        accuracy,
        best_epoch: ckpt.provenance.epoch,
        val_loss: ckpt.provenance.val_loss,
    };
    Ok((ckpt, entry))
}

/// One transfer run evaluated on the target's test split.
pub fn transfer_job(
    cfg: &SweepConfig,
    method: TrainMode,
    source: &ModelCheckpoint,
    source_label: &str,
    tgt: &WindowData,
    scores: (f64, f64),
) -> Result<TransferRecord> {
    let job_seed = seed::derive(
        cfg.seed,
        &[
            TRANSFER,
            seed::of_label(source_label),
            seed::of_label(&tgt.label),
            seed::of_label(method.as_str()),
        ],
    );
    let mut recipe = TrainRecipe::new(method, job_seed)
        .with_epochs(cfg.training.transfer_epochs)
        .with_batch(cfg.training.batch);
    if let Some(r) = cfg.training.reinit_head {
        recipe.reinit_head = r;
    }
    let model = match method {
        TrainMode::HeadRetrain => head_retrain(source, &tgt.transfer_train, &tgt.transfer_val, &recipe)?,
        TrainMode::FineTune => fine_tune(source, &tgt.transfer_train, &tgt.transfer_val, &recipe)?,
        TrainMode::Pretrain => return Err(Error::InvalidParameter("PRETRAIN is not a transfer job".into())),
    };
    Ok(TransferRecord {
        source: source_label.to_string(),
        target: tgt.label.clone(),
        method,
        accuracy: evaluate_top1(&model, &tgt.test)?,
        leep: scores.0,
        logme: scores.1,
        n: tgt.transfer_train.len(),
        status: "ok".into(),
    })
}

fn failed_record(src: &str, tgt: &str, method: TrainMode, err: &Error) -> TransferRecord {
    TransferRecord {
        source: src.into(),
        target: tgt.into(),
        method,
        accuracy: f64::NAN,
        leep: f64::NAN,
        logme: f64::NAN,
        n: 0,
        status: format!("error: {err}").replace(['\n', '\r'], " "),
    }
}

pub fn load_records(path: &Path) -> Result<Vec<TransferRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_diagonal(path: &Path) -> Result<Vec<DiagonalEntry>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn append_records(path: &Path, rows: &[TransferRecord]) -> Result<()> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the plan inside `workdir`: master dataset, one pretrained model per
/// window, then every transfer job. Completed jobs found in the record table
/// are skipped, so an interrupted sweep can be resumed by calling this again.
/// A failing job is written as a row with a non-`ok` status.
pub fn run_sweep(plan: &SweepPlan, workdir: &Path) -> Result<SweepOutcome> {
    let cfg = &plan.config;
    check_workdir(cfg, workdir)?;
    let master = load_or_build_master(&cfg.master, workdir)?;
    let windows = build_windows(plan, &master)?;
    drop(master);

    let models = workdir.join("models");
    fs::create_dir_all(&models)?;
    let mut sources = Vec::with_capacity(windows.len());
    let mut diagonal = Vec::with_capacity(windows.len());
    for w in &windows {
        let (ckpt, entry) = pretrain_window(cfg, w, &models)?;
        sources.push(ckpt);
        diagonal.push(entry);
    }
    let mut dw = csv::Writer::from_path(workdir.join(DIAGONAL_CSV))?;
    for d in &diagonal {
        dw.serialize(d)?;
    }
    dw.flush()?;

    let records_path = workdir.join(RECORDS_CSV);
    let mut done: HashSet<(String, String, TrainMode)> = HashSet::new();
    if records_path.exists() {
        for r in load_records(&records_path)? {
            done.insert((r.source, r.target, r.method));
        }
    }
    let pending: Vec<&TransferJob> = plan.jobs.iter().filter(|j| !done.contains(&plan.job_key(j))).collect();
    let skipped = plan.jobs.len() - pending.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} of {} jobs already recorded", plan.jobs.len());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut scores: BTreeMap<(usize, usize), std::result::Result<(f64, f64), String>> = BTreeMap::new();
    let mut failed = 0;
    let t = Instant::now();
    for chunk in pending.chunks(cfg.workers) {
        for j in chunk {
            scores.entry((j.source, j.target)).or_insert_with(|| {
                score_pair(&sources[j.source], &windows[j.target].transfer_train)
                    .map(|(l, g)| (l.value, g.value))
                    .map_err(|e| e.to_string())
            });
        }
        let rows: Vec<TransferRecord> = pool.install(|| {
            chunk
                .par_iter()
                .map(|j| {
                    let (src, tgt) = (&windows[j.source], &windows[j.target]);
                    let res = match &scores[&(j.source, j.target)] {
                        Ok(s) => transfer_job(cfg, j.method, &sources[j.source], &src.label, tgt, *s),
                        Err(e) => Err(Error::Degenerate(format!("scoring failed: {e}"))),
                    };
                    res.unwrap_or_else(|e| failed_record(&src.label, &tgt.label, j.method, &e))
                })
                .collect()
        });
        for r in &rows {
            if r.is_ok() {
                log::info!(
                    "{} {} -> {}: acc {:.3} leep {:.4} logme {:.4}",
                    r.method.as_str(),
                    r.source,
                    r.target,
                    r.accuracy,
                    r.leep,
                    r.logme
                );
            } else {
                failed += 1;
                log::warn!("{} {} -> {}: {}", r.method.as_str(), r.source, r.target, r.status);
            }
        }
        append_records(&records_path, &rows)?;
    }
    if !pending.is_empty() {
        log::info!("{} transfer jobs in {:.1?}", pending.len(), t.elapsed());
    }

    Ok(SweepOutcome {
        records: load_records(&records_path)?,
        diagonal,
        executed: pending.len(),
        skipped,
        failed,
    })
}
