//! Binary checkpoint: `AMBR1`, a little-endian u64 header length, a JSON
//! header, then parameters, first moments and second moments as
//! little-endian f64 in slot order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamHeader;
use super::{AdamState, Mpn, MpnConfig};
use crate::error::{AmberError, Result};
use crate::graph::FeatureStats;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"AMBR1";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mpn: Mpn,
    pub adam: AdamState,
    pub stats: FeatureStats,
    /// Hex digest of the training configuration that produced the weights.
    pub config_digest: String,
    /// Lower clip for predicted sizing values.
    pub s_min: f64,
    /// Initial uniform mesh size used at inference.
    pub h0: f64,
    /// Free-form training configuration, kept for provenance.
    pub training: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SlotShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    network: MpnConfig,
    config_digest: String,
    slots: Vec<SlotShape>,
    n_params: usize,
    stats: FeatureStats,
    s_min: f64,
    h0: f64,
    adam: AdamHeader,
    training: serde_json::Value,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let header = Header {
        network: ck.mpn.config().clone(),
        config_digest: ck.config_digest.clone(),
        slots: ck.mpn.slots().iter().map(|s| SlotShape { name: s.name.clone(), rows: s.rows, cols: s.cols }).collect(),
        n_params: ck.mpn.n_params(),
        stats: ck.stats.clone(),
        s_min: ck.s_min,
        h0: ck.h0,
        adam: ck.adam.header(),
        training: ck.training.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(13 + json.len() + 24 * ck.mpn.n_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for arr in [ck.mpn.params(), &ck.adam.m[..], &ck.adam.v[..]] {
        for v in arr {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_f64s(bytes: &[u8], n: usize) -> Vec<f64> {
    bytes[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| AmberError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 13 || &bytes[..5] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let body = 13usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[13..body]).map_err(|e| bad(&format!("header: {e}")))?;
    let mpn_len = header.n_params;
    if bytes.len() - body != 24 * mpn_len {
        return Err(bad(&format!(
            "expected {} bytes of arrays, found {}",
            24 * mpn_len,
            bytes.len() - body
        )));
    }
    let data = &bytes[body..];
    let params = read_f64s(data, mpn_len);
    let m = read_f64s(&data[8 * mpn_len..], mpn_len);
    let v = read_f64s(&data[16 * mpn_len..], mpn_len);
    let mpn = Mpn::from_params(header.network, params).map_err(|e| bad(&e.to_string()))?;
    let consistent = mpn.slots().len() == header.slots.len()
        && mpn.slots().iter().zip(&header.slots).all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols);
    if !consistent {
        return Err(bad("parameter layout does not match the stored network configuration"));
    }
    if header.stats.node.width() != mpn.config().node_features || header.stats.edge.width() != mpn.config().edge_features {
        return Err(bad("normalization statistics do not match feature widths"));
    }
    Ok(Checkpoint {
        adam: AdamState::from_header(header.adam, m, v),
        mpn,
        stats: header.stats,
        config_digest: header.config_digest,
        s_min: header.s_min,
        h0: header.h0,
        training: header.training,
    })
}

/// Loads a checkpoint and checks it was built for `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &MpnConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.mpn.config() != expected {
        return Err(AmberError::Checkpoint(format!(
            "network configuration mismatch: file has {:?}, expected {:?}",
            ck.mpn.config(),
            expected
        )));
    }
    Ok(ck)
}
