//! On-disk layout: `<root>/<split>/manifest.json` and `<root>/<split>/tensors.bin`.
//!
//! `tensors.bin` is little-endian: magic `SMGR`, format version (u32), sample
//! count (u32), then per sample: nodes, actuators, steps (u32 each),
//! positions f32 `[nodes, steps, 3]`, actuation f32 `[actuators, steps]`,
//! edges u8 `[nodes, nodes]`, permutation u32 `[nodes]`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::splits::{DatasetSplit, Manifest, SplitName};
use super::Sample;
use crate::error::{Error, Result};

pub const TENSORS_MAGIC: &[u8; 4] = b"SMGR";
pub const TENSORS_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub(crate) fn encode_tensors(samples: &[Sample]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TENSORS_MAGIC);
    out.extend_from_slice(&TENSORS_VERSION.to_le_bytes());
    put_u32(&mut out, samples.len());
    for s in samples {
        put_u32(&mut out, s.nodes);
        put_u32(&mut out, s.actuators);
        put_u32(&mut out, s.steps);
        for v in s.positions.iter().chain(&s.actuation) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.edges);
        for p in &s.permutation {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Format {
            what: "tensors.bin",
            detail: format!("truncated at byte {}", self.pos),
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub(crate) fn decode_tensors(buf: &[u8], manifest: &Manifest) -> Result<Vec<Sample>> {
    let bad = |detail: String| Error::Format {
        what: "tensors.bin",
        detail,
    };
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != TENSORS_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != TENSORS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count != manifest.samples.len() {
        return Err(bad(format!("{count} samples but manifest lists {}", manifest.samples.len())));
    }
    let mut samples = Vec::with_capacity(count);
    for meta in &manifest.samples {
        let nodes = r.u32()? as usize;
        let actuators = r.u32()? as usize;
        let steps = r.u32()? as usize;
        let positions = r.f32s(nodes * steps * 3)?;
        let actuation = r.f32s(actuators * steps)?;
        let edges = r.take(nodes * nodes)?.to_vec();
        let permutation = (0..nodes).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            nodes,
            actuators,
            steps,
            positions,
            actuation,
            edges,
            permutation,
            meta: meta.clone(),
        });
    }
    if r.pos != buf.len() {
        return Err(bad(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(samples)
}

pub fn write_split(root: &Path, split: &DatasetSplit) -> Result<()> {
    let dir = root.join(split.name.as_str());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&split.manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    let tensors_path = dir.join("tensors.bin");
    let file = fs::File::create(&tensors_path).map_err(|e| Error::io(&tensors_path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_tensors(&split.samples))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tensors_path, e))
}

pub fn read_split(root: &Path, name: SplitName) -> Result<DatasetSplit> {
    let dir = root.join(name.as_str());
    let manifest_path = dir.join("manifest.json");
    let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    let tensors_path = dir.join("tensors.bin");
    let buf = fs::read(&tensors_path).map_err(|e| Error::io(&tensors_path, e))?;
    let samples = decode_tensors(&buf, &manifest)?;
    Ok(DatasetSplit {
        name,
        samples,
        manifest,
    })
}

pub fn write_dataset(root: &Path, splits: &[DatasetSplit]) -> Result<()> {
    splits.iter().try_for_each(|s| write_split(root, s))
}

pub fn read_dataset(root: &Path) -> Result<Vec<DatasetSplit>> {
    SplitName::ALL.iter().map(|&n| read_split(root, n)).collect()
}
