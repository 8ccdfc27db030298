//! Optimizer sidecar written next to each training checkpoint.
//!
//! ```text
//! "UDAS"        4 bytes magic
//! version       u16 LE
//! epoch, step   u64 LE each
//! count         u64 LE, number of parameters
//! m, v          count f32 LE each
//! crc32         u32 LE over every preceding byte
//! ```

use std::path::Path;

use super::adam::AdamState;
use crate::unet::ModelWeights;
use crate::{Error, Result};

pub const STATE_MAGIC: &[u8; 4] = b"UDAS";
pub const STATE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 * 3;

/// Everything besides the weights needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub adam: AdamState<f32>,
}

impl TrainState {
    pub fn new(weights: &ModelWeights<f32>) -> Self {
        TrainState {
            epoch: 0,
            adam: AdamState::new(weights),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, v) = self.adam.flat();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len() + 4);
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        for x in [self.epoch as u64, self.adam.step, m.len() as u64] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in m.iter().chain(&v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a sidecar and checks it against the weights it belongs to.
    pub fn from_bytes(bytes: &[u8], weights: &ModelWeights<f32>) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(Error::Format(format!("truncated optimizer state: {} bytes", bytes.len())));
        }
        if &bytes[..4] != STATE_MAGIC {
            return Err(Error::Format("bad optimizer state magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != STATE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: STATE_VERSION,
            });
        }
        let word = |i: usize| u64::from_le_bytes(bytes[6 + 8 * i..14 + 8 * i].try_into().unwrap());
        let (epoch, step, count) = (word(0), word(1), word(2) as usize);
        let expected = HEADER_LEN + 8 * count + 4;
        if bytes.len() != expected {
            return Err(Error::Format(format!("optimizer state is {} bytes, expected {expected}", bytes.len())));
        }
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..expected - 4]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..expected - 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (m, v) = floats.split_at(count);
        Ok(TrainState {
            epoch: epoch as usize,
            adam: AdamState::from_flat(weights, step, m, v)?,
        })
    }
}

pub fn save_state(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, state.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_state(path: impl AsRef<Path>, weights: &ModelWeights<f32>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TrainState::from_bytes(&bytes, weights)
}
