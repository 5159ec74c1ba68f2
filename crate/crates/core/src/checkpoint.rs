//! Model checkpoints: `model.json` with hyperparameters and normalisation,
//! `params.bin` with the named parameter tensors.
//!
//! `params.bin` layout, little endian: magic `SMGP`, `u32` version, then
//! until end of file one section per tensor: `u16` name length, name bytes
//! (UTF-8), `u32` rank, `rank × u32` dimensions, `f32` payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ModelSpec, NormStats, Predictor};
use crate::rng::Rng;
use crate::tensor::{ParamStore, Tensor};

pub const PARAMS_MAGIC: &[u8; 4] = b"SMGP";
pub const PARAMS_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Contents of `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub name: String,
    pub model: ModelSpec,
    /// Node feature width `6 + N_a` the model was built for, when it has one.
    pub feature_width: Option<usize>,
    pub norm: NormStats,
    pub parameter_count: usize,
    /// Mean training loss before training and after each epoch.
    #[serde(default)]
    pub losses: Vec<f64>,
}

pub fn encode_params(store: &ParamStore<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 4 * store.num_scalars());
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format {
            what: "params.bin",
            detail: format!("parameter name of {} bytes", name.len()),
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_error(format!("truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.at == self.buf.len()
    }
}

fn format_error(detail: String) -> Error {
    Error::Format {
        what: "params.bin",
        detail,
    }
}

pub fn decode_params(buf: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut cur = Cursor { buf, at: 0 };
    if cur.take(4)? != PARAMS_MAGIC {
        return Err(format_error("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != PARAMS_VERSION {
        return Err(format_error(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while !cur.done() {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|e| format_error(e.to_string()))?;
        let rank = cur.u32()? as usize;
        let shape = (0..rank).map(|_| Ok(cur.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format_error("tensor too large".into()))?;
        let data = cur
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

/// Writes `model.json` and `params.bin` into `dir`.
pub fn save(dir: &Path, predictor: &Predictor, losses: &[f64]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        name: predictor.name(),
        model: predictor.spec.clone(),
        feature_width: feature_width(&predictor.spec),
        norm: predictor.norm.clone(),
        parameter_count: predictor.store.num_scalars(),
        losses: losses.to_vec(),
    };
    let json = dir.join("model.json");
    fs::write(&json, serde_json::to_vec_pretty(&file)?).map_err(|e| Error::io(&json, e))?;
    let bin = dir.join("params.bin");
    fs::write(&bin, encode_params(&predictor.store)?).map_err(|e| Error::io(&bin, e))
}

fn feature_width(spec: &ModelSpec) -> Option<usize> {
    match spec {
        ModelSpec::Nri { config, .. } => Some(config.feature_width()),
        ModelSpec::Baseline { config } => Some(config.width()),
        ModelSpec::Oracle => None,
    }
}

/// Reads a checkpoint directory, rebuilding the model and loading every
/// parameter by name.
pub fn load(dir: &Path) -> Result<(Predictor, ModelFile)> {
    let json = dir.join("model.json");
    let text = fs::read(&json).map_err(|e| Error::io(&json, e))?;
    let file: ModelFile = serde_json::from_slice(&text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format {
            what: "model.json",
            detail: format!("unsupported format version {}", file.format_version),
        });
    }
    let mut predictor = Predictor::new(file.model.clone(), file.norm.clone(), &mut Rng::new(0))?;
    let bin = dir.join("params.bin");
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let tensors = decode_params(&bytes)?;
    if tensors.len() != predictor.store.len() {
        return Err(Error::Format {
            what: "params.bin",
            detail: format!("{} tensors for a model with {}", tensors.len(), predictor.store.len()),
        });
    }
    for (name, t) in tensors {
        let id = predictor.store.find(&name).ok_or_else(|| Error::Format {
            what: "params.bin",
            detail: format!("unknown parameter {name}"),
        })?;
        predictor.store.set(id, t)?;
    }
    Ok((predictor, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Supervision;
    use crate::model::DecoderKind;

    #[test]
    fn params_layout_is_exact() {
        let mut store = ParamStore::<f32>::new();
        store.add("ab", Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap());
        let bytes = encode_params(&store).unwrap();
        let mut expect = b"SMGP".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u16.to_le_bytes());
        expect.extend(b"ab");
        expect.extend(2u32.to_le_bytes());
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_params(&wrong).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::nri(DecoderKind::Rnn, Supervision::Supervised);
        let p = Predictor::new(spec, NormStats::default(), &mut Rng::new(4)).unwrap();
        save(dir.path(), &p, &[3.0, 2.0]).unwrap();
        let (q, file) = load(dir.path()).unwrap();
        assert_eq!(file.losses, vec![3.0, 2.0]);
        assert_eq!(file.feature_width, Some(10));
        assert_eq!(q.spec, p.spec);
        for ((a, x), (b, y)) in p.store.iter().zip(q.store.iter()) {
            assert_eq!(a, b);
            assert_eq!(x, y);
        }
    }
}
