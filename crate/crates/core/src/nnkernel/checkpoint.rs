//! Binary checkpoint: an 8-byte magic, a little-endian `u32` version, a
//! `u64` header length, a JSON header, then every tensor as little-endian
//! `f64` in header order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Network, Params, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RFXCKPT\0";
const VERSION: u32 = 1;

/// Where a set of weights came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    /// 1-based epoch of the retained weights; 0 when no training happened.
    pub epoch: usize,
    pub val_loss: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub spec: ModelSpec,
    pub tensors: Vec<Tensor>,
    pub trainable_mask: Vec<bool>,
    pub class_names: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<Tensor>,
    trainable_mask: Vec<bool>,
    class_names: Vec<String>,
    provenance: Provenance,
}

impl ModelCheckpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>, class_names: Vec<String>, provenance: Provenance) -> Self {
        let shapes = net.shapes();
        let mut tensors = Vec::new();
        for (i, layer) in net.spec().layers.iter().enumerate() {
            let (Some(p), Some((wshape, blen))) = (net.params(i), layer.param_shape(shapes[i])) else {
                continue;
            };
            tensors.push(Tensor {
                layer: i,
                name: "weight".into(),
                shape: wshape,
                data: p.weight.iter().map(|v| v.f64()).collect(),
            });
            tensors.push(Tensor {
                layer: i,
                name: "bias".into(),
                shape: vec![blen],
                data: p.bias.iter().map(|v| v.f64()).collect(),
            });
        }
        Self {
            spec: net.spec().clone(),
            tensors,
            trainable_mask: net.trainable().to_vec(),
            class_names,
            provenance,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        let mut net = Network::<T>::zeros(self.spec.clone())?;
        let shapes = net.shapes().to_vec();
        if self.class_names.len() != net.num_classes() {
            return Err(Error::ShapeMismatch(format!(
                "{} class names for a {}-way output",
                self.class_names.len(),
                net.num_classes()
            )));
        }
        let mut expected = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            if let Some((w, b)) = layer.param_shape(shapes[i]) {
                expected.push((i, "weight", w));
                expected.push((i, "bias", vec![b]));
            }
        }
        if expected.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for pair in self.tensors.chunks(2).zip(expected.chunks(2)) {
            let ([w, b], [(layer, _, wshape), (_, _, bshape)]) = pair else {
                unreachable!("tensor counts checked above");
            };
            for (t, (l, name, shape)) in [w, b].into_iter().zip([(layer, "weight", wshape), (layer, "bias", bshape)]) {
                if t.layer != *l || t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                    return Err(Error::ShapeMismatch(format!(
                        "tensor {}:{} {:?} does not match layer {l} {name} {:?}",
                        t.layer, t.name, t.shape, shape
                    )));
                }
            }
            let rows = wshape[0];
            let cols = w.data.len() / rows;
            net.set_params(
                *layer,
                Params {
                    weight: Array2::from_shape_vec((rows, cols), w.data.iter().map(|&v| T::of(v)).collect())
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
                    bias: Array1::from_iter(b.data.iter().map(|&v| T::of(v))),
                },
            )?;
        }
        net.set_trainable(&self.trainable_mask)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            spec: self.spec.clone(),
            tensors: self.tensors.clone(),
            trainable_mask: self.trainable_mask.clone(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        if hlen > body.len() as u64 {
            return Err(Error::LengthMismatch {
                expected: hlen,
                actual: body.len() as u64,
            });
        }
        let (json, payload) = body.split_at(hlen as usize);
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let counts: Vec<usize> = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product())
            .collect();
        let need = 8 * counts.iter().sum::<usize>() as u64;
        if need != payload.len() as u64 {
            return Err(Error::LengthMismatch {
                expected: need,
                actual: payload.len() as u64,
            });
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut tensors = header.tensors;
        for (t, n) in tensors.iter_mut().zip(counts) {
            t.data = values.by_ref().take(n).collect();
        }
        let ckpt = Self {
            spec: header.spec,
            tensors,
            trainable_mask: header.trainable_mask,
            class_names: header.class_names,
            provenance: header.provenance,
        };
        // Structural validation happens here so a bad file fails at load time.
        ckpt.to_network::<f64>()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&bytes)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Network<f64>, ModelCheckpoint) {
        let mut net = Network::<f64>::new(ModelSpec::compact(4, 3, 5, 2, 16), 11).unwrap();
        net.freeze_all_but_head();
        let ckpt = ModelCheckpoint::from_network(
            &net,
            vec!["a".into(), "b".into()],
            Provenance {
                dataset: "src".into(),
                epoch: 3,
                val_loss: 0.25,
                seed: 11,
            },
        );
        (net, ckpt)
    }

    #[test]
    fn bytes_round_trip_is_exact() {
        let (net, ckpt) = sample();
        let back = ModelCheckpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_network::<f64>().unwrap(), net);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (_, ckpt) = sample();
        ckpt.save(&path).unwrap();
        assert_eq!(ModelCheckpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let (_, ckpt) = sample();
        let bytes = ckpt.to_bytes().unwrap();
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 8]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(ModelCheckpoint::from_bytes(b"garbage"), Err(Error::Format(_))));
    }

    #[test]
    fn shape_tampering_is_rejected() {
        let (_, mut ckpt) = sample();
        ckpt.tensors[0].shape = vec![4, 1, 7, 2];
        ckpt.tensors[0].data.resize(56, 0.0);
        assert!(ckpt.to_network::<f32>().is_err());
    }
}
