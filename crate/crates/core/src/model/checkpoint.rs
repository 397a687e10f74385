//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | content                                         |
//! |--------------|-------------------------------------------------|
//! | 8            | magic `RNMASKNT`                                |
//! | 4            | format version (`u32`, currently 1)             |
//! | 4            | header length `H` (`u32`)                       |
//! | `H`          | UTF-8 TOML header with `[net]` and `[stft]`     |
//! | rest         | per layer: weights (row-major, inputs × outputs) then bias, as `f64` |
//!
//! The file must end exactly after the last bias.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, MaskNet, MaskNetConfig};
use crate::error::{Error, Result};
use crate::signal::StftConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RNMASKNT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network together with the analysis settings it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: MaskNet,
    pub stft: StftConfig,
}

#[derive(Serialize, Deserialize)]
struct Header {
    net: MaskNetConfig,
    stft: StftConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = toml::to_string(&Header {
            net: self.net.config().clone(),
            stft: self.stft,
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.net.num_parameters());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for value in self.net.parameters_flat() {
            out.extend_from_slice(&value.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail("missing magic bytes"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(8);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = word(12) as usize;
        let body_start = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| fail("truncated header"))?;
        let header_text = std::str::from_utf8(&bytes[16..body_start]).map_err(|_| fail("header is not UTF-8"))?;
        let header: Header = toml::from_str(header_text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let stft = &header.stft;
        let stft = StftConfig::new(stft.frame_len(), stft.hop(), stft.fft_len(), stft.window_kind())?;
        header.net.validate()?;

        let body = &bytes[body_start..];
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let expected = header.net.layer_dims().iter().map(|(i, o)| i * o + o).sum::<usize>();
        if body.len() != 8 * expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameters, found {} bytes",
                body.len()
            )));
        }
        let layers = header
            .net
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Dense {
                weights: Array2::from_shape_vec((i, o), values.by_ref().take(i * o).collect())
                    .expect("length checked"),
                bias: Array1::from_iter(values.by_ref().take(o)),
            })
            .collect();
        Ok(Self {
            net: MaskNet::from_layers(header.net, layers)?,
            stft,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
