//! Parameter checkpoints.
//!
//! Layout: the 8-byte magic, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header listing every array
//! (name, shape, byte offset into the data section), then the arrays as
//! little-endian `f64`, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use codev_core::nn::ParamSet;
use codev_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"CODEVCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    endianness: String,
    entries: Vec<Entry>,
}

/// Named arrays read back from a checkpoint, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arrays: Vec<(String, Tensor)>,
}

/// Serialises parameter groups; array names become `group/parameter`.
pub fn encode(groups: &[(&str, &ParamSet)]) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    for (group, set) in groups {
        for (name, t) in set.iter() {
            entries.push(Entry { name: format!("{group}/{name}"), rows: t.rows(), cols: t.cols(), offset: data.len() });
            for x in t.data() {
                data.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let header = serde_json::to_vec(&Header { endianness: "little".into(), entries }).expect("header serialises");
    let mut out = Vec::with_capacity(20 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    ensure!(bytes.len() >= 20 && &bytes[..8] == MAGIC, "not a checkpoint file");
    let version = u32::from_le_bytes(bytes[8..12].try_into()?);
    ensure!(version == VERSION, "unsupported checkpoint version {version}");
    let hlen = u64::from_le_bytes(bytes[12..20].try_into()?) as usize;
    ensure!(bytes.len() >= 20 + hlen, "truncated checkpoint header");
    let header: Header = serde_json::from_slice(&bytes[20..20 + hlen]).context("checkpoint header")?;
    ensure!(header.endianness == "little", "unsupported endianness {}", header.endianness);
    let data = &bytes[20 + hlen..];
    let mut arrays = Vec::with_capacity(header.entries.len());
    for e in header.entries {
        let end = e.offset + 8 * e.rows * e.cols;
        ensure!(end <= data.len(), "array {} runs past the end of the file", e.name);
        let values = data[e.offset..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        arrays.push((e.name, Tensor::from_vec(e.rows, e.cols, values)));
    }
    Ok(Checkpoint { arrays })
}

pub fn save(path: &Path, groups: &[(&str, &ParamSet)]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(&encode(groups))?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

impl Checkpoint {
    /// Overwrites every parameter of `set` from `group`; names and shapes must match.
    pub fn restore(&self, group: &str, set: &mut ParamSet) -> Result<()> {
        let prefix = format!("{group}/");
        let mut seen = 0;
        for (name, t) in &self.arrays {
            let Some(local) = name.strip_prefix(&prefix) else { continue };
            let Some(id) = set.find(local) else { bail!("checkpoint array {name} has no matching parameter") };
            let dst = set.get_mut(id);
            ensure!(dst.shape() == t.shape(), "shape of {name}: checkpoint {:?}, model {:?}", t.shape(), dst.shape());
            dst.data_mut().copy_from_slice(t.data());
            seen += 1;
        }
        ensure!(seen == set.len(), "checkpoint group {group} has {seen} of {} parameters", set.len());
        Ok(())
    }
}
