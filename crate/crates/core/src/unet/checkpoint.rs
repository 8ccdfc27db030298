//! Binary checkpoint format.
//!
//! ```text
//! "UDAE"            4 bytes magic
//! version           u16 LE
//! depth, base_channels, in_channels, out_channels   u32 LE each
//! parameters        f32 LE, build order, each layer's weights then biases
//! crc32             u32 LE over every preceding byte
//! ```

use std::path::Path;

use super::config::UNetConfig;
use super::model::ModelWeights;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UDAE";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

impl ModelWeights<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.param_count() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [cfg.depth, cfg.base_channels, cfg.in_channels, cfg.out_channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for p in self.to_flat() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(Error::Format(format!("truncated: {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let field = |i: usize| {
            let o = 6 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        };
        let config = UNetConfig {
            depth: field(0),
            base_channels: field(1),
            in_channels: field(2),
            out_channels: field(3),
        };
        config.validate()?;
        let expected = HEADER_LEN + 4 * config.param_count() + 4;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "{} bytes, config {config:?} needs {expected}",
                bytes.len()
            )));
        }
        let body = &bytes[..expected - 4];
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let params: Vec<f32> = body[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let weights = ModelWeights::from_flat(config, &params)?;
        if !weights.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(weights)
    }

    /// Exact size in bytes of this model's checkpoint.
    pub fn checkpoint_len(&self) -> usize {
        HEADER_LEN + 4 * self.param_count() + 4
    }
}

pub fn save_weights(weights: &ModelWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, weights.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelWeights::from_bytes(&bytes)
}

/// Short identifier of a checkpoint: the CRC32 of its bytes, in hex.
pub fn checkpoint_id(weights: &ModelWeights<f32>) -> String {
    format!("{:08x}", crc32fast::hash(&weights.to_bytes()))
}
