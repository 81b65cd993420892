//! Versioned binary chain snapshots.
//!
//! Layout: 8-byte magic `RQMCCKPT`, format version (u32 LE), payload length
//! (u64 LE), SHA-256 of the payload, then the bincode payload. Decoding
//! checks all four before deserializing and validates the contour.

use std::io::Write;
use std::path::Path;

use bincode::Options;
use sha2::{Digest, Sha256};

use super::ChainState;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RQMCCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8 + 32;
/// Upper bound on a payload, far above any desk-scale chain.
pub const MAX_PAYLOAD: u64 = 1 << 32;

fn codec() -> impl Options {
    bincode::DefaultOptions::new().with_fixint_encoding().with_little_endian().with_limit(MAX_PAYLOAD)
}

pub fn encode(state: &ChainState) -> Result<Vec<u8>> {
    let payload = codec()
        .serialize(state)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ChainState> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("format version {version}, this build reads version {VERSION}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER..];
    if payload.len() as u64 != len {
        return Err(Error::Checkpoint(format!("payload is {} bytes, header says {len}", payload.len())));
    }
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let state: ChainState = codec().deserialize(payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
    state.validate()?;
    Ok(state)
}

/// Writes atomically through a temporary sibling.
pub fn save(path: &Path, state: &ChainState) -> Result<()> {
    let bytes = encode(state)?;
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ChainState> {
    decode(&std::fs::read(path)?)
}
