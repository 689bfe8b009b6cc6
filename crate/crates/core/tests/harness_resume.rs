use std::fs;

use rfxfer::harness::*;
use rfxfer::xfer::TrainMode;

fn tiny() -> SweepConfig {
    let mut cfg = SweepConfig::desk(SweepAxis::Snr);
    cfg.master.classes = vec!["BPSK".into(), "QPSK".into()];
    cfg.master.per_class = 160;
    cfg.master.frame_len = 32;
    cfg.master.seed = 3;
    cfg.seed = 3;
    cfg.methods = vec![TrainMode::HeadRetrain, TrainMode::FineTune];
    cfg.windows.snr_span = [0.0, 20.0];
    cfg.windows.snr_width = 10.0;
    cfg.windows.snr_step = 10.0;
    cfg.splits = SplitSizes {
        train: 12,
        val: 4,
        test: 6,
        transfer_train: 6,
        transfer_val: 2,
    };
    cfg.model = ModelWidths {
        conv1: 4,
        conv2: 4,
        hidden: 4,
    };
    cfg.training = TrainingKnobs {
        pretrain_epochs: 2,
        transfer_epochs: 1,
        batch: 8,
        reinit_head: None,
    };
    cfg
}

#[test]
fn interrupted_sweep_resumes_without_duplicates() {
    let plan = plan_sweep(&tiny()).unwrap();
    assert_eq!(plan.windows.len(), 2);
    assert_eq!(plan.jobs.len(), 4);

    let full = tempfile::tempdir().unwrap();
    let once = run_sweep(&plan, full.path()).unwrap();
    assert_eq!((once.executed, once.skipped, once.failed), (4, 0, 0));
    assert!(once.all_ok());

    // keep the header and the first two rows, as if the process died mid-sweep
    let part = tempfile::tempdir().unwrap();
    run_sweep(&plan, part.path()).unwrap();
    let path = part.path().join(RECORDS_CSV);
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(3).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();

    let resumed = run_sweep(&plan, part.path()).unwrap();
    assert_eq!((resumed.executed, resumed.skipped), (2, 2));
    assert_eq!(resumed.records, once.records);
    assert_eq!(fs::read_to_string(&path).unwrap(), fs::read_to_string(full.path().join(RECORDS_CSV)).unwrap());

    let again = run_sweep(&plan, part.path()).unwrap();
    assert_eq!((again.executed, again.skipped), (0, 4));
    assert_eq!(again.records.len(), 4);
    assert_eq!(again.diagonal, once.diagonal);
}

#[test]
fn workdir_refuses_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.methods = vec![TrainMode::HeadRetrain];
    run_sweep(&plan_sweep(&cfg).unwrap(), dir.path()).unwrap();
    cfg.training.transfer_epochs = 2;
    assert!(run_sweep(&plan_sweep(&cfg).unwrap(), dir.path()).is_err());
}

#[test]
fn parallel_workers_match_serial_rows() {
    let mut cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let serial = run_sweep(&plan_sweep(&cfg).unwrap(), a.path()).unwrap();
    cfg.workers = 3;
    let b = tempfile::tempdir().unwrap();
    let par = run_sweep(&plan_sweep(&cfg).unwrap(), b.path()).unwrap();
    assert_eq!(serial.records, par.records);
}

#[test]
fn report_files_are_written() {
    let mut cfg = tiny();
    cfg.methods = vec![TrainMode::HeadRetrain];
    cfg.windows.snr_step = 5.0;
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&plan_sweep(&cfg).unwrap(), dir.path()).unwrap();
    let summaries = write_report(dir.path()).unwrap();
    assert_eq!(summaries.len(), 1);
    assert_eq!(summaries[0].records, out.records.len());
    for f in ["heatmap_head.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // a scatter file is written exactly when its fit is defined
    assert_eq!(dir.path().join("scatter_leep_head.csv").exists(), summaries[0].leep.is_some());
    assert_eq!(dir.path().join("scatter_logme_head_fit.csv").exists(), summaries[0].logme.is_some());
    let heat = fs::read_to_string(dir.path().join("heatmap_head.csv")).unwrap();
    assert_eq!(heat.lines().count(), 4);
    assert!(heat.starts_with("source\\target,"));
}
