//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..8     ASCII magic "MCLIPCK1"
//! bytes 8..16    u64 header length H
//! next H bytes   UTF-8 JSON header (see `CheckpointHeader`)
//! rest           f32 values; `header.count` of them per tensor block
//! ```
//!
//! A parameter file holds one block: every tensor flattened row-major in the
//! order listed in `header.tensors`. An optimizer file holds two blocks, first
//! moments then second moments, in the same tensor order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Layout, PolicyDims, PolicyParams, Role, DYN_FEATURES, GLOBAL_FEATURES, NODE_FEATURES};

pub const MAGIC: &[u8; 8] = b"MCLIPCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Params,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub node: Vec<String>,
    pub dynamic: Vec<String>,
    pub global: Vec<String>,
}

impl FeatureSchema {
    pub fn current() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        let schema = FeatureSchema {
            node: s(&["x", "y", "located", "covered_before", "interdicted", "covered_now", "marginal_coverage", "exposed_coverage"]),
            dynamic: s(&["located", "covered_before", "interdicted", "covered_now", "marginal_coverage", "exposed_coverage"]),
            global: s(&["steps_remaining_over_budget", "fraction_covered"]),
        };
        debug_assert_eq!(schema.node.len(), NODE_FEATURES);
        debug_assert_eq!(schema.dynamic.len(), DYN_FEATURES);
        debug_assert_eq!(schema.global.len(), GLOBAL_FEATURES);
        schema
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub role: Role,
    pub dims: PolicyDims,
    pub features: FeatureSchema,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    /// Free-form provenance, e.g. "train:toy" or "promoted".
    pub lineage: String,
    pub epoch: u64,
    /// Optimizer steps applied to the parameters.
    pub param_version: u64,
    pub count: usize,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamMeta {
    pub cfg: AdamConfig,
    pub t: u64,
}

/// Provenance carried alongside parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lineage {
    pub seed: u64,
    pub lineage: String,
    pub epoch: u64,
}

fn header_for(p: &PolicyParams, kind: CheckpointKind, lin: &Lineage, adam: Option<AdamMeta>) -> CheckpointHeader {
    CheckpointHeader {
        format_version: FORMAT_VERSION,
        kind,
        role: p.role,
        dims: p.dims,
        features: FeatureSchema::current(),
        seed: lin.seed,
        lineage: lin.lineage.clone(),
        epoch: lin.epoch,
        param_version: p.version,
        count: p.values.len(),
        tensors: p
            .layout
            .tensors
            .iter()
            .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
            .collect(),
        adam,
    }
}

fn encode(header: &CheckpointHeader, blocks: &[&[f64]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 4 * total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for b in blocks {
        for &v in b.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn decode(bytes: &[u8], blocks: usize) -> Result<(CheckpointHeader, Vec<Vec<f64>>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad("unsupported format version"));
    }
    if header.features != FeatureSchema::current() {
        return Err(bad("feature schema mismatch"));
    }
    header.dims.validate()?;
    let layout = Layout::new(&header.dims);
    if header.count != layout.total {
        return Err(bad("value count does not match dimensions"));
    }
    let expected: Vec<TensorEntry> = layout
        .tensors
        .iter()
        .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
        .collect();
    if header.tensors != expected {
        return Err(bad("tensor table does not match dimensions"));
    }
    let data = &bytes[16 + hlen..];
    if data.len() != 4 * header.count * blocks {
        return Err(bad("payload length mismatch"));
    }
    let vals: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    // a valid layout always has at least one value
    let out = vals.chunks(header.count).map(|c| c.to_vec()).collect();
    Ok((header, out))
}

pub fn params_to_bytes(p: &PolicyParams, lin: &Lineage) -> Result<Vec<u8>> {
    encode(&header_for(p, CheckpointKind::Params, lin, None), &[&p.values])
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<(PolicyParams, CheckpointHeader)> {
    let (h, mut blocks) = decode(bytes, 1)?;
    if h.kind != CheckpointKind::Params {
        return Err(Error::Checkpoint("not a parameter checkpoint".into()));
    }
    let mut p = PolicyParams::zeros(h.role, h.dims)?;
    p.values = blocks.remove(0);
    p.version = h.param_version;
    Ok((p, h))
}

pub fn adam_to_bytes(opt: &Adam, p: &PolicyParams, lin: &Lineage) -> Result<Vec<u8>> {
    if opt.m.len() != p.values.len() {
        return Err(Error::Dims("optimizer state does not match parameters".into()));
    }
    let meta = AdamMeta { cfg: opt.cfg, t: opt.t };
    encode(&header_for(p, CheckpointKind::Adam, lin, Some(meta)), &[&opt.m, &opt.v])
}

pub fn adam_from_bytes(bytes: &[u8]) -> Result<(Adam, CheckpointHeader)> {
    let (h, mut blocks) = decode(bytes, 2)?;
    let meta = match (h.kind, h.adam) {
        (CheckpointKind::Adam, Some(m)) => m,
        _ => return Err(Error::Checkpoint("not an optimizer checkpoint".into())),
    };
    let v = blocks.pop().unwrap();
    let m = blocks.pop().unwrap();
    Ok((Adam { cfg: meta.cfg, m, v, t: meta.t }, h))
}

/// Write via a temporary file and rename, so readers never see a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_params(path: &Path, p: &PolicyParams, lin: &Lineage) -> Result<()> {
    write_atomic(path, &params_to_bytes(p, lin)?)
}

pub fn load_params(path: &Path) -> Result<(PolicyParams, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    params_from_bytes(&bytes)
}

pub fn save_adam(path: &Path, opt: &Adam, p: &PolicyParams, lin: &Lineage) -> Result<()> {
    write_atomic(path, &adam_to_bytes(opt, p, lin)?)
}

pub fn load_adam(path: &Path) -> Result<(Adam, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    adam_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;

    #[test]
    fn params_round_trip_bit_exact() {
        let p = init_params(Role::Interdiction, PolicyDims::new(8, 2, 2, 8).unwrap(), 3).unwrap();
        let lin = Lineage { seed: 3, lineage: "test".into(), epoch: 4 };
        let bytes = params_to_bytes(&p, &lin).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let (q, h) = params_from_bytes(&bytes).unwrap();
        assert_eq!(q, p);
        assert_eq!((h.seed, h.epoch, h.role), (3, 4, Role::Interdiction));
        // header length field points exactly at the payload
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 16 - hlen, 4 * p.param_count());
    }

    #[test]
    fn adam_round_trip_and_kind_check() {
        let p = init_params(Role::Location, PolicyDims::new(8, 2, 1, 8).unwrap(), 3).unwrap();
        let mut opt = Adam::new(p.param_count(), AdamConfig::default());
        opt.m[0] = 0.25;
        opt.v[1] = 0.5;
        opt.t = 7;
        let bytes = adam_to_bytes(&opt, &p, &Lineage::default()).unwrap();
        let (o2, _) = adam_from_bytes(&bytes).unwrap();
        assert_eq!(o2, opt);
        assert!(params_from_bytes(&bytes).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = init_params(Role::Location, PolicyDims::new(8, 2, 1, 8).unwrap(), 3).unwrap();
        let bytes = params_to_bytes(&p, &Lineage::default()).unwrap();
        assert!(params_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut b2 = bytes.clone();
        b2[0] = b'X';
        assert!(params_from_bytes(&b2).is_err());
    }
}
