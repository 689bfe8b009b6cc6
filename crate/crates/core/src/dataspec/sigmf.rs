//! SigMF-compatible persistence: one `.sigmf-meta` / `.sigmf-data` pair per
//! (dataset, class), `cf32_le` interleaved I/Q, per-example metadata in the
//! annotations array.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Dataset, ExampleMeta};
use crate::error::{Error, Result};
use crate::sigsynth::{ModParams, MASTER_SAMPLE_RATE_HZ};

const DATATYPE: &str = "cf32_le";
const SIGMF_VERSION: &str = "1.0.0";

#[derive(Debug, Serialize, Deserialize)]
struct Global {
    #[serde(rename = "core:datatype")]
    datatype: String,
    #[serde(rename = "core:version")]
    version: String,
    #[serde(rename = "core:sample_rate")]
    sample_rate: f64,
    #[serde(rename = "core:description", default)]
    description: String,
    #[serde(rename = "rfxfer:dataset")]
    dataset: String,
    #[serde(rename = "rfxfer:class")]
    class: String,
    #[serde(rename = "rfxfer:class_names")]
    class_names: Vec<String>,
    #[serde(rename = "rfxfer:frame_len")]
    frame_len: usize,
    #[serde(rename = "rfxfer:snr_range_db")]
    snr_range_db: [f64; 2],
    #[serde(rename = "rfxfer:fo_range_frac")]
    fo_range_frac: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Capture {
    #[serde(rename = "core:sample_start")]
    sample_start: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Annotation {
    #[serde(rename = "core:sample_start")]
    sample_start: u64,
    #[serde(rename = "core:sample_count")]
    sample_count: u64,
    #[serde(rename = "core:label")]
    label: String,
    #[serde(rename = "rfxfer:index")]
    index: usize,
    #[serde(rename = "rfxfer:id")]
    id: u64,
    #[serde(rename = "rfxfer:snr_db")]
    snr_db: f64,
    #[serde(rename = "rfxfer:fo_frac")]
    fo_frac: f64,
    #[serde(rename = "rfxfer:phase0")]
    phase0: f64,
    #[serde(rename = "rfxfer:sps")]
    sps: usize,
    #[serde(rename = "rfxfer:seed")]
    seed: u64,
    #[serde(rename = "rfxfer:params")]
    params: ModParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    global: Global,
    captures: Vec<Capture>,
    annotations: Vec<Annotation>,
}

fn stem(ds_name: &str, class_index: usize, class: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect()
    };
    format!("{}_{:02}_{}", clean(ds_name), class_index, clean(class))
}

fn data_path(meta_path: &Path) -> PathBuf {
    meta_path.with_extension("sigmf-data")
}

/// Writes `ds` into directory `dir` (created if missing).
pub fn write_sigmf(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = ds.frame_len;
    for (c, class) in ds.class_names.iter().enumerate() {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == c).collect();
        let mut data = Vec::with_capacity(members.len() * n * 8);
        let mut annotations = Vec::with_capacity(members.len());
        for (k, &i) in members.iter().enumerate() {
            let rows = ds.frame(i);
            for t in 0..n {
                data.extend_from_slice(&rows[t].to_le_bytes());
                data.extend_from_slice(&rows[n + t].to_le_bytes());
            }
            let m = ds.meta(i);
            annotations.push(Annotation {
                sample_start: (k * n) as u64,
                sample_count: n as u64,
                label: m.class.clone(),
                index: i,
                id: m.id,
                snr_db: m.snr_db,
                fo_frac: m.fo_frac,
                phase0: m.phase0,
                sps: m.sps,
                seed: m.seed,
                params: m.params,
            });
        }
        let meta = Meta {
            global: Global {
                datatype: DATATYPE.into(),
                version: SIGMF_VERSION.into(),
                sample_rate: MASTER_SAMPLE_RATE_HZ,
                description: format!("{} examples of {class} from dataset {}", members.len(), ds.name),
                dataset: ds.name.clone(),
                class: class.clone(),
                class_names: ds.class_names.clone(),
                frame_len: n,
                snr_range_db: ds.snr_range_db,
                fo_range_frac: ds.fo_range_frac,
            },
            captures: vec![Capture { sample_start: 0 }],
            annotations,
        };
        let meta_path = dir.join(format!("{}.sigmf-meta", stem(&ds.name, c, class)));
        fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
        fs::write(data_path(&meta_path), data)?;
    }
    Ok(())
}

fn meta_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "sigmf-meta"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_cf32(path: &Path, expected_samples: u64) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    let expected = expected_samples * 8;
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Reads a dataset previously written by [`write_sigmf`].
pub fn read_sigmf(dir: &Path) -> Result<Dataset> {
    let files = meta_files(dir)?;
    if files.is_empty() {
        return Err(Error::Format(format!("no .sigmf-meta files in {}", dir.display())));
    }
    let mut header: Option<Global> = None;
    let mut entries: Vec<(usize, ExampleMeta, Vec<f32>)> = Vec::new();
    for path in files {
        let meta: Meta = serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if meta.global.datatype != DATATYPE {
            return Err(Error::Format(format!(
                "{}: datatype {} is not {DATATYPE}",
                path.display(),
                meta.global.datatype
            )));
        }
        let n = meta.global.frame_len;
        let interleaved = read_cf32(&data_path(&path), (meta.annotations.len() * n) as u64)?;
        for (k, a) in meta.annotations.iter().enumerate() {
            if a.sample_count != n as u64 || a.sample_start != (k * n) as u64 {
                return Err(Error::Format(format!(
                    "{}: annotation {k} does not tile the recording",
                    path.display()
                )));
            }
            let chunk = &interleaved[2 * k * n..2 * (k + 1) * n];
            let mut rows = vec![0f32; 2 * n];
            for t in 0..n {
                rows[t] = chunk[2 * t];
                rows[n + t] = chunk[2 * t + 1];
            }
            entries.push((
                a.index,
                ExampleMeta {
                    id: a.id,
                    class: a.label.clone(),
                    snr_db: a.snr_db,
                    fo_frac: a.fo_frac,
                    phase0: a.phase0,
                    sps: a.sps,
                    params: a.params,
                    seed: a.seed,
                },
                rows,
            ));
        }
        match &header {
            None => header = Some(meta.global),
            Some(h) => {
                if h.dataset != meta.global.dataset
                    || h.class_names != meta.global.class_names
                    || h.frame_len != meta.global.frame_len
                {
                    return Err(Error::Format(format!(
                        "{} belongs to a different dataset",
                        path.display()
                    )));
                }
            }
        }
    }
    let g = header.expect("at least one file");
    entries.sort_by_key(|e| e.0);
    if entries.iter().enumerate().any(|(k, e)| e.0 != k) {
        return Err(Error::Format("example indices are not contiguous".into()));
    }
    let mut ds = Dataset::empty(g.dataset, g.class_names, g.frame_len, g.snr_range_db, g.fo_range_frac);
    for (_, meta, rows) in entries {
        ds.push(meta, &rows)?;
    }
    Ok(ds)
}

/// Unlabeled frames imported from an external recording.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledFrames {
    pub frame_len: usize,
    /// Row-major `[I..., Q...]` per frame.
    pub samples: Vec<f32>,
}

impl UnlabeledFrames {
    pub fn len(&self) -> usize {
        self.samples.len() / (2 * self.frame_len)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Imports any `cf32_le` SigMF recording as consecutive unlabeled frames of
/// `frame_len` samples; a trailing partial frame is dropped.
pub fn import_foreign_sigmf(meta_path: &Path, frame_len: usize) -> Result<UnlabeledFrames> {
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame_len must be positive".into()));
    }
    let meta: Value = serde_json::from_slice(&fs::read(meta_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    let global = meta
        .get("global")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Format("missing `global` object".into()))?;
    match global.get("core:datatype").and_then(Value::as_str) {
        Some(DATATYPE) => {}
        Some(other) => return Err(Error::Format(format!("unsupported datatype {other}"))),
        None => return Err(Error::Format("missing core:datatype".into())),
    }
    if global.get("core:version").and_then(Value::as_str).is_none() {
        return Err(Error::Format("missing core:version".into()));
    }
    let bytes = fs::read(data_path(meta_path))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::LengthMismatch {
            expected: (bytes.len() as u64 / 8) * 8,
            actual: bytes.len() as u64,
        });
    }
    let interleaved: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let n_frames = interleaved.len() / 2 / frame_len;
    if n_frames == 0 {
        return Err(Error::Empty(format!(
            "recording shorter than one {frame_len}-sample frame"
        )));
    }
    let mut samples = Vec::with_capacity(n_frames * 2 * frame_len);
    for f in 0..n_frames {
        let chunk = &interleaved[2 * f * frame_len..2 * (f + 1) * frame_len];
        samples.extend(chunk.iter().step_by(2));
        samples.extend(chunk.iter().skip(1).step_by(2));
    }
    Ok(UnlabeledFrames { frame_len, samples })
}
