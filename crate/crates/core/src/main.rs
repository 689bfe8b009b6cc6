use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rfxfer::dataspec::{generate_master, read_sigmf, subset, write_sigmf, DomainWindow, WindowConfig};
use rfxfer::harness::{
    plan_sweep, run_sweep, split_window, transfer_job, write_report, SweepAxis, SweepConfig,
};
use rfxfer::nnkernel::ModelCheckpoint;
use rfxfer::seed;
use rfxfer::statfit::{predict_accuracy, select_source, AccuracyPredictor};
use rfxfer::tmetrics::{score_pair, ScoreKind};
use rfxfer::xfer::{evaluate_top1, pretrain_with_report, TrainMode, TrainRecipe};

#[derive(Parser)]
#[command(name = "rfxfer", version, about = "RF transfer-learning sweeps and transferability scoring")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config. A window description for `subset`, a sweep config otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, global = true, default_value = "desk")]
    scale: String,
    /// Sweep axis of the preset: snr, fo or snr_fo.
    #[arg(long, global = true, default_value = "snr")]
    axis: String,
}

impl Common {
    fn sweep_config(&self) -> anyhow::Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(p) => SweepConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => {
                let axis: SweepAxis = self.axis.parse()?;
                match self.scale.as_str() {
                    "desk" => SweepConfig::desk(axis),
                    "paper" => SweepConfig::paper(axis),
                    s => bail!("unknown scale `{s}` (desk or paper)"),
                }
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.master.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the master dataset as SigMF.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_class: Option<usize>,
        /// Comma-separated class names.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
    },
    /// Draw a class-balanced window subset from a master dataset.
    Subset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        master: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        snr: Option<Vec<f64>>,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        fo: Option<Vec<f64>>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Train a source model on a window dataset.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Transfer a source model to a target window and report test accuracy.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "HEAD")]
        method: TrainMode,
        #[arg(long)]
        epochs: Option<usize>,
        /// Override head re-initialisation (default: true for HEAD, false for FINETUNE).
        #[arg(long)]
        reinit_head: Option<bool>,
    },
    /// LEEP and LogME of one or more source models on a target window.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        source: Vec<PathBuf>,
        #[arg(long)]
        target: PathBuf,
    },
    /// Fit a score-to-accuracy predictor from a record table.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "leep")]
        metric: String,
        #[arg(long, default_value = "HEAD")]
        method: TrainMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict post-transfer accuracy with an interval.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        score: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Run a full sweep and write its report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present_any = ["plan_only", "dump_config"])]
        workdir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Print the plan without running it.
        #[arg(long)]
        plan_only: bool,
        /// Print the effective config as TOML and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Rebuild heatmaps, scatter fits and the summary of a sweep directory.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workdir: PathBuf,
    },
}

fn parse_metric(s: &str) -> anyhow::Result<ScoreKind> {
    match s.to_ascii_lowercase().as_str() {
        "leep" => Ok(ScoreKind::Leep),
        "logme" => Ok(ScoreKind::Logme),
        _ => bail!("unknown metric `{s}` (leep or logme)"),
    }
}

fn load_window(path: &Path, cfg: &SweepConfig) -> anyhow::Result<rfxfer::harness::WindowData> {
    let ds = read_sigmf(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(split_window(&ds, &cfg.splits, cfg.seed)?)
}

fn run(cmd: Cmd) -> anyhow::Result<bool> {
    match cmd {
        Cmd::Generate {
            common,
            out,
            per_class,
            classes,
        } => {
            let mut spec = common.sweep_config()?.master;
            if let Some(n) = per_class {
                spec.per_class = n;
            }
            if let Some(c) = classes {
                spec.classes = c;
            }
            let ds = generate_master(&spec)?;
            write_sigmf(&ds, &out)?;
            println!("{} examples, checksum {}", ds.len(), ds.checksum());
        }
        Cmd::Subset {
            common,
            master,
            out,
            snr,
            fo,
            per_class,
            label,
        } => {
            let mut wc = match &common.config {
                Some(p) => WindowConfig::load(p)?,
                None => WindowConfig {
                    label: None,
                    snr_lo: -10.0,
                    snr_hi: 20.0,
                    fo_lo: -0.1,
                    fo_hi: 0.1,
                    per_class: 340,
                    seed: 0,
                },
            };
            if let Some(v) = snr {
                (wc.snr_lo, wc.snr_hi) = (v[0], v[1]);
            }
            if let Some(v) = fo {
                (wc.fo_lo, wc.fo_hi) = (v[0], v[1]);
            }
            if let Some(n) = per_class {
                wc.per_class = n;
            }
            if let Some(l) = label {
                wc.label = Some(l);
            }
            if let Some(s) = common.seed {
                wc.seed = s;
            }
            let win: DomainWindow = wc.window();
            let store = read_sigmf(&master)?;
            let ds = subset(&store, &win, wc.per_class, &mut seed::rng(wc.seed, &[seed::of_label(&win.label)]))?;
            write_sigmf(&ds, &out)?;
            println!("{}: {} examples", ds.name, ds.len());
        }
        Cmd::Pretrain {
            common,
            data,
            out,
            epochs,
        } => {
            let cfg = common.sweep_config()?;
            let w = load_window(&data, &cfg)?;
            let recipe = TrainRecipe::new(TrainMode::Pretrain, cfg.seed)
                .with_epochs(epochs.unwrap_or(cfg.training.pretrain_epochs))
                .with_batch(cfg.training.batch);
            let spec = rfxfer::nnkernel::ModelSpec::compact(
                cfg.model.conv1,
                cfg.model.conv2,
                cfg.model.hidden,
                w.train.num_classes(),
                cfg.master.frame_len,
            );
            let (ckpt, report) = pretrain_with_report(&spec, &w.train, &w.val, &recipe, None)?;
            ckpt.save(&out)?;
            println!(
                "best epoch {} val loss {:.4} test accuracy {:.4}",
                report.best_epoch,
                report.best_val_loss,
                evaluate_top1(&ckpt, &w.test)?
            );
        }
        Cmd::Transfer {
            common,
            source,
            target,
            method,
            epochs,
            reinit_head,
        } => {
            let mut cfg = common.sweep_config()?;
            if let Some(e) = epochs {
                cfg.training.transfer_epochs = e;
            }
            if reinit_head.is_some() {
                cfg.training.reinit_head = reinit_head;
            }
            let ckpt = ModelCheckpoint::load(&source)?;
            let label = ckpt.provenance.dataset.trim_end_matches("/train").to_string();
            let tgt = load_window(&target, &cfg)?;
            let (l, g) = score_pair(&ckpt, &tgt.transfer_train)?;
            let rec = transfer_job(&cfg, method, &ckpt, &label, &tgt, (l.value, g.value))?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.serialize(&rec)?;
            w.flush()?;
        }
        Cmd::Score { common, source, target } => {
            let cfg = common.sweep_config()?;
            let tgt = load_window(&target, &cfg)?;
            let mut leeps = BTreeMap::new();
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["source", "target", "leep", "logme", "n"])?;
            for p in &source {
                let ckpt = ModelCheckpoint::load(p)?;
                let (l, g) = score_pair(&ckpt, &tgt.transfer_train)?;
                let name = p.display().to_string();
                w.write_record([
                    name.clone(),
                    tgt.label.clone(),
                    l.value.to_string(),
                    g.value.to_string(),
                    l.n_examples.to_string(),
                ])?;
                leeps.insert(name, l.value);
            }
            w.flush()?;
            if leeps.len() > 1 {
                eprintln!("best source by LEEP: {}", select_source(&leeps)?);
            }
        }
        Cmd::Fit {
            common: _,
            records,
            metric,
            method,
            out,
        } => {
            let kind = parse_metric(&metric)?;
            let recs: Vec<_> = rfxfer::harness::load_records(&records)?
                .into_iter()
                .filter(|r| r.method == method)
                .collect();
            let p = AccuracyPredictor::fit_records(kind, &recs)?;
            p.save(&out)?;
            println!(
                "accuracy = {:.6} * {} + {:.6}, mean |residual| {:.6}, n = {}",
                p.beta0,
                kind.as_str(),
                p.beta1,
                p.mean_abs_residual,
                p.n_fit
            );
        }
        Cmd::Predict {
            common: _,
            predictor,
            score,
            confidence,
        } => {
            let p = AccuracyPredictor::load(&predictor)?;
            let r = predict_accuracy(&p, score, confidence)?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Cmd::Sweep {
            common,
            workdir,
            workers,
            plan_only,
            dump_config,
        } => {
            let mut cfg = common.sweep_config()?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if dump_config {
                print!("{}", cfg.to_toml()?);
                return Ok(true);
            }
            let plan = plan_sweep(&cfg)?;
            println!(
                "{} windows, {} transfer jobs ({} per method)",
                plan.windows.len(),
                plan.jobs.len(),
                plan.jobs_per_method()
            );
            if plan_only {
                for w in &plan.windows {
                    println!("{}", w.label);
                }
                return Ok(true);
            }
            let workdir = workdir.expect("clap requires --workdir here");
            let outcome = run_sweep(&plan, &workdir)?;
            println!(
                "ran {} jobs, skipped {}, failed {}",
                outcome.executed, outcome.skipped, outcome.failed
            );
            print_summaries(&workdir)?;
            return Ok(outcome.all_ok());
        }
        Cmd::Report { common: _, workdir } => {
            print_summaries(&workdir)?;
        }
    }
    Ok(true)
}

fn print_summaries(workdir: &Path) -> anyhow::Result<()> {
    for s in write_report(workdir)? {
        println!("{}", serde_json::to_string_pretty(&s)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
