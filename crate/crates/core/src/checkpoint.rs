//! RNCK checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `RNCK` |
//! | 2     | format version (`u16`, currently 1) |
//! | 4     | header length `n` (`u32`) |
//! | n     | UTF-8 JSON [`CheckpointHeader`] |
//! | 4·p   | `p = param_count` `f32` values in [`RelationNetParams`] visiting order |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::relation::{ArchConfig, RelationNetParams};

pub const MAGIC: &[u8; 4] = b"RNCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub arch: ArchConfig,
    /// SHA-256 (hex) of the JSON-serialized training configuration.
    pub config_digest: String,
    pub episode_seed: u64,
    pub param_count: usize,
}

/// Hex SHA-256 of a value's JSON serialization.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &RelationNetParams,
    config_digest: &str,
    episode_seed: u64,
) -> std::io::Result<()> {
    let header = CheckpointHeader {
        arch: params.arch.clone(),
        config_digest: config_digest.to_string(),
        episode_seed,
        param_count: params.num_parameters(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in params.tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(RelationNetParams, CheckpointHeader)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint>", e))?;
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing RNCK magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = &bytes[10..];
    if body.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let mut params = RelationNetParams::zeros(&header.arch)?;
    if params.num_parameters() != header.param_count {
        return Err(corrupt(format!(
            "header declares {} parameters, architecture has {}",
            header.param_count,
            params.num_parameters()
        )));
    }
    let blob = &body[hlen..];
    if blob.len() != 4 * header.param_count {
        return Err(corrupt(format!(
            "expected {} parameter bytes, found {}",
            4 * header.param_count,
            blob.len()
        )));
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    params.assign_flat(&values);
    Ok((params, header))
}

/// Fails with [`Error::ConfigMismatch`] unless the checkpoint was built for `arch`.
pub fn verify_arch(header: &CheckpointHeader, arch: &ArchConfig) -> Result<()> {
    if &header.arch != arch {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint architecture {:?} differs from configured {:?}",
            header.arch, arch
        )));
    }
    Ok(())
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &RelationNetParams,
    config_digest: &str,
    episode_seed: u64,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), params, config_digest, episode_seed)
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(RelationNetParams, CheckpointHeader)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
