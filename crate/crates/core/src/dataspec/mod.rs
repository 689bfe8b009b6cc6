//! Master dataset generation, domain-window subsetting, splits and SigMF
//! persistence.

mod sigmf;
mod window;

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;
use crate::sigsynth::{self, ImpairmentSpec, ModClass, ModName, ModParams};

pub use sigmf::{import_foreign_sigmf, read_sigmf, write_sigmf, UnlabeledFrames};
pub use window::{sweep_windows, DomainWindow, WindowConfig};

/// Desk-scale class set: one or more representatives of every family.
pub const DESK_CLASSES: [&str; 6] = ["BPSK", "QPSK", "QAM16", "GFSK5k", "FM-NB", "AWGN"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MasterSpec {
    pub classes: Vec<String>,
    pub per_class: usize,
    pub frame_len: usize,
    pub snr_range_db: [f64; 2],
    pub fo_range_frac: [f64; 2],
    pub seed: u64,
}

impl Default for MasterSpec {
    fn default() -> Self {
        Self {
            classes: DESK_CLASSES.iter().map(|s| s.to_string()).collect(),
            per_class: 4000,
            frame_len: sigsynth::DEFAULT_FRAME_LEN,
            snr_range_db: [-10.0, 20.0],
            fo_range_frac: [-0.10, 0.10],
            seed: 0,
        }
    }
}

impl MasterSpec {
    /// Full-size configuration: all 23 classes, 600000 examples each.
    pub fn paper_scale() -> Self {
        Self {
            classes: ModName::ALL.iter().map(|n| n.as_str().to_string()).collect(),
            per_class: 600_000,
            ..Self::default()
        }
    }

    pub fn total_examples(&self) -> usize {
        self.classes.len() * self.per_class
    }

    pub fn validate(&self) -> Result<Vec<ModName>> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter("master spec has no classes".into()));
        }
        if self.per_class == 0 || self.frame_len == 0 {
            return Err(Error::InvalidParameter(
                "per_class and frame_len must be positive".into(),
            ));
        }
        let [slo, shi] = self.snr_range_db;
        let [flo, fhi] = self.fo_range_frac;
        if !(slo.is_finite() && shi.is_finite() && slo < shi) {
            return Err(Error::InvalidParameter(format!("bad SNR range [{slo}, {shi}]")));
        }
        if !(flo < fhi && flo >= -0.5 && fhi < 0.5) {
            return Err(Error::InvalidParameter(format!("bad FO range [{flo}, {fhi}]")));
        }
        let names = self
            .classes
            .iter()
            .map(|c| c.parse::<ModName>())
            .collect::<Result<Vec<_>>>()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.classes.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::InvalidParameter(format!("class {dup} listed twice")));
        }
        Ok(names)
    }
}

/// Generation metadata stored alongside every example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub id: u64,
    pub class: String,
    pub snr_db: f64,
    pub fo_frac: f64,
    pub phase0: f64,
    pub sps: usize,
    pub params: ModParams,
    pub seed: u64,
}

/// An in-memory labeled collection of frames.
///
/// Samples are single precision, row-major `[I..., Q...]` per example, which
/// is both the persisted precision and the classifier input layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub class_names: Vec<String>,
    pub frame_len: usize,
    pub snr_range_db: [f64; 2],
    pub fo_range_frac: [f64; 2],
    samples: Vec<f32>,
    metas: Vec<ExampleMeta>,
}

impl Dataset {
    pub fn empty(
        name: impl Into<String>,
        class_names: Vec<String>,
        frame_len: usize,
        snr_range_db: [f64; 2],
        fo_range_frac: [f64; 2],
    ) -> Self {
        Self {
            name: name.into(),
            class_names,
            frame_len,
            snr_range_db,
            fo_range_frac,
            samples: Vec::new(),
            metas: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.metas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metas.is_empty()
    }

    pub fn row_len(&self) -> usize {
        2 * self.frame_len
    }

    pub fn push(&mut self, meta: ExampleMeta, rows: &[f32]) -> Result<()> {
        if rows.len() != self.row_len() {
            return Err(Error::ShapeMismatch(format!(
                "example has {} values, dataset rows hold {}",
                rows.len(),
                self.row_len()
            )));
        }
        if self.class_index(&meta.class).is_none() {
            return Err(Error::UnknownClass(meta.class));
        }
        self.samples.extend_from_slice(rows);
        self.metas.push(meta);
        Ok(())
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.row_len();
        &self.samples[i * n..(i + 1) * n]
    }

    pub fn meta(&self, i: usize) -> &ExampleMeta {
        &self.metas[i]
    }

    pub fn metas(&self) -> &[ExampleMeta] {
        &self.metas
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == class)
    }

    pub fn label(&self, i: usize) -> usize {
        self.class_index(&self.metas[i].class)
            .expect("push validates class names")
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }

    pub fn ids(&self) -> Vec<u64> {
        self.metas.iter().map(|m| m.id).collect()
    }

    /// Copies the listed examples, in order, into a new dataset.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        let mut out = Dataset::empty(
            name,
            self.class_names.clone(),
            self.frame_len,
            self.snr_range_db,
            self.fo_range_frac,
        );
        for &i in indices {
            out.samples.extend_from_slice(self.frame(i));
            out.metas.push(self.metas[i].clone());
        }
        out
    }

    /// First `per_class` examples of each class, in dataset order.
    pub fn take_per_class(&self, name: impl Into<String>, per_class: usize) -> Result<Dataset> {
        let mut picked = Vec::new();
        for (c, class) in self.class_names.iter().enumerate() {
            let idx: Vec<usize> = (0..self.len()).filter(|&i| self.label(i) == c).collect();
            if idx.len() < per_class {
                return Err(Error::Shortfall {
                    class: class.clone(),
                    needed: per_class,
                    available: idx.len(),
                });
            }
            picked.extend_from_slice(&idx[..per_class]);
        }
        Ok(self.select(name, &picked))
    }

    /// SHA-256 over samples and metadata.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for c in &self.class_names {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for v in &self.samples {
            h.update(v.to_le_bytes());
        }
        h.update(serde_json::to_vec(&self.metas).expect("metadata serializes"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn generate_example(
    spec: &MasterSpec,
    name: ModName,
    class_index: usize,
    i: usize,
) -> Result<(ExampleMeta, Vec<f32>)> {
    let example_seed = seed::derive(spec.seed, &[class_index as u64, i as u64]);
    let mut rng = seed::rng(example_seed, &[]);
    let [slo, shi] = spec.snr_range_db;
    let [flo, fhi] = spec.fo_range_frac;
    let impairments = ImpairmentSpec {
        snr_db: rng.gen_range(slo..shi),
        fo_frac: rng.gen_range(flo..fhi),
        phase0: rng.gen_range(0.0..2.0 * PI),
    };
    let sps = sigsynth::draw_sps(&mut rng);
    let class = ModClass::random(name, &mut rng);
    let frame = sigsynth::synthesize(&class, spec.frame_len, sps, &impairments, &mut rng)?;
    let meta = ExampleMeta {
        id: (class_index * spec.per_class + i) as u64,
        class: name.as_str().to_string(),
        snr_db: impairments.snr_db,
        fo_frac: impairments.fo_frac,
        phase0: impairments.phase0,
        sps,
        params: class.params,
        seed: example_seed,
    };
    Ok((meta, frame.to_f32_rows()))
}

/// Builds the master dataset: `per_class` examples of every class with SNR
/// and FO drawn uniformly from the master ranges. Examples are generated in
/// parallel from per-example seeds, so the result is independent of thread
/// count.
pub fn generate_master(spec: &MasterSpec) -> Result<Dataset> {
    let names = spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..names.len())
        .flat_map(|c| (0..spec.per_class).map(move |i| (c, i)))
        .collect();
    let examples: Vec<Result<(ExampleMeta, Vec<f32>)>> = jobs
        .par_iter()
        .map(|&(c, i)| generate_example(spec, names[c], c, i))
        .collect();
    let mut ds = Dataset::empty(
        "master",
        spec.classes.clone(),
        spec.frame_len,
        spec.snr_range_db,
        spec.fo_range_frac,
    );
    ds.samples.reserve(jobs.len() * ds.row_len());
    for ex in examples {
        let (meta, rows) = ex?;
        ds.push(meta, &rows)?;
    }
    Ok(ds)
}

/// Samples `per_class` examples of every class whose metadata falls inside
/// `window`, without replacement.
pub fn subset<R: Rng + ?Sized>(
    store: &Dataset,
    window: &DomainWindow,
    per_class: usize,
    rng: &mut R,
) -> Result<Dataset> {
    window.validate_within(store.snr_range_db, store.fo_range_frac)?;
    let mut picked = Vec::with_capacity(per_class * store.class_names.len());
    for (c, class) in store.class_names.iter().enumerate() {
        let candidates: Vec<usize> = (0..store.len())
            .filter(|&i| store.label(i) == c && window.contains(store.meta(i)))
            .collect();
        if candidates.len() < per_class {
            return Err(Error::Shortfall {
                class: class.clone(),
                needed: per_class,
                available: candidates.len(),
            });
        }
        let mut chosen: Vec<usize> = sample(rng, candidates.len(), per_class)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    let mut out = store.select(window.label.clone(), &picked);
    out.snr_range_db = window.snr_db;
    out.fo_range_frac = window.fo_frac;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Class-balanced, mutually disjoint train/val/test splits.
pub fn split<R: Rng + ?Sized>(
    handle: &Dataset,
    train_per_class: usize,
    val_per_class: usize,
    test_per_class: usize,
    rng: &mut R,
) -> Result<Splits> {
    let need = train_per_class + val_per_class + test_per_class;
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for (c, class) in handle.class_names.iter().enumerate() {
        let mut idx: Vec<usize> = (0..handle.len()).filter(|&i| handle.label(i) == c).collect();
        if idx.len() < need {
            return Err(Error::Shortfall {
                class: class.clone(),
                needed: need,
                available: idx.len(),
            });
        }
        idx.shuffle(rng);
        tr.extend_from_slice(&idx[..train_per_class]);
        va.extend_from_slice(&idx[train_per_class..train_per_class + val_per_class]);
        te.extend_from_slice(&idx[train_per_class + val_per_class..need]);
    }
    let name = |s: &str| format!("{}/{s}", handle.name);
    Ok(Splits {
        train: handle.select(name("train"), &tr),
        val: handle.select(name("val"), &va),
        test: handle.select(name("test"), &te),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_master(per_class: usize, seed: u64) -> Dataset {
        generate_master(&MasterSpec {
            per_class,
            seed,
            ..MasterSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn paper_scale_total() {
        assert_eq!(MasterSpec::paper_scale().total_examples(), 13_800_000);
    }

    #[test]
    fn desk_master_metadata_in_range() {
        let spec = MasterSpec {
            per_class: 2000,
            ..MasterSpec::default()
        };
        let ds = generate_master(&spec).unwrap();
        assert_eq!(ds.len(), 12_000);
        assert_eq!(ds.class_counts(), vec![2000; 6]);
        for m in ds.metas() {
            assert!((-10.0..20.0).contains(&m.snr_db));
            assert!((-0.1..0.1).contains(&m.fo_frac));
            assert!(m.sps == 2 || m.sps == 3);
        }
        assert!(ds.samples().iter().all(|v| v.is_finite()));
        let ids: HashSet<u64> = ds.ids().into_iter().collect();
        assert_eq!(ids.len(), ds.len());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = small_master(30, 9);
        let b = small_master(30, 9);
        let c = small_master(30, 10);
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn invalid_class_is_rejected() {
        let spec = MasterSpec {
            classes: vec!["BPSK".into(), "QAM1024".into()],
            ..MasterSpec::default()
        };
        assert!(matches!(generate_master(&spec), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn subset_respects_window() {
        let master = small_master(600, 1);
        let w = DomainWindow::new([-10.0, -5.0], [-0.05, 0.05], "low");
        let mut rng = seed::rng(3, &[]);
        let sub = subset(&master, &w, 20, &mut rng).unwrap();
        assert_eq!(sub.class_counts(), vec![20; 6]);
        for m in sub.metas() {
            assert!((-10.0..=-5.0).contains(&m.snr_db));
            assert!((-0.05..=0.05).contains(&m.fo_frac));
        }
        let ids: HashSet<u64> = sub.ids().into_iter().collect();
        assert_eq!(ids.len(), sub.len());
    }

    #[test]
    fn subset_shortfall_names_the_class() {
        let master = small_master(50, 1);
        let w = DomainWindow::new([-10.0, -9.0], [-0.01, 0.01], "tiny");
        let mut rng = seed::rng(3, &[]);
        match subset(&master, &w, 10, &mut rng) {
            Err(Error::Shortfall { class, needed, .. }) => {
                assert_eq!(class, "BPSK");
                assert_eq!(needed, 10);
            }
            other => panic!("expected shortfall, got {other:?}"),
        }
    }

    #[test]
    fn subset_window_outside_master_is_rejected() {
        let master = small_master(10, 1);
        let w = DomainWindow::new([15.0, 25.0], [-0.05, 0.05], "out");
        let mut rng = seed::rng(3, &[]);
        assert!(subset(&master, &w, 1, &mut rng).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_balanced() {
        let master = small_master(400, 2);
        let mut rng = seed::rng(4, &[]);
        let s = split(&master, 200, 40, 100, &mut rng).unwrap();
        assert_eq!(s.train.class_counts(), vec![200; 6]);
        assert_eq!(s.val.class_counts(), vec![40; 6]);
        assert_eq!(s.test.class_counts(), vec![100; 6]);
        let tr: HashSet<u64> = s.train.ids().into_iter().collect();
        let va: HashSet<u64> = s.val.ids().into_iter().collect();
        let te: HashSet<u64> = s.test.ids().into_iter().collect();
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        assert!(matches!(
            split(&master, 300, 100, 10, &mut rng),
            Err(Error::Shortfall { .. })
        ));
    }

    #[test]
    fn take_per_class_keeps_order() {
        let master = small_master(10, 2);
        let t = master.take_per_class("t", 3).unwrap();
        assert_eq!(t.class_counts(), vec![3; 6]);
        assert_eq!(t.meta(0).id, master.meta(0).id);
        assert!(master.take_per_class("t", 11).is_err());
    }
}
