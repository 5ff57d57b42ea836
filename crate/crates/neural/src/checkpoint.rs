//! JSON checkpoint envelope.
//!
//! ```json
//! {"format_version": 1,
//!  "dims": {"n_c": 8, ...},
//!  "params": [{"name": "encoder.w", "shape": [10, 32], "data": "<base64>"}]}
//! ```
//!
//! `data` is the base64 encoding of the row-major values as little-endian
//! IEEE-754 doubles, so a load/save cycle is bit-exact.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::NeuralError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: BTreeMap<String, usize>,
    pub params: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: String,
}

impl Checkpoint {
    pub fn from_params(params: &ParamSet, dims: BTreeMap<String, usize>) -> Self {
        let params = params
            .blocks()
            .iter()
            .map(|b| {
                let mut bytes = Vec::with_capacity(b.value.len() * 8);
                for v in b.value.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                BlockRecord {
                    name: b.name.clone(),
                    shape: b.value.shape(),
                    data: STANDARD.encode(bytes),
                }
            })
            .collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            dims,
            params,
        }
    }

    /// Copies the stored blocks into `params`, which must have the same
    /// block names and shapes in the same order.
    pub fn restore_into(&self, params: &mut ParamSet) -> Result<(), NeuralError> {
        if self.format_version != FORMAT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        if self.params.len() != params.len() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                params.len(),
                self.params.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        for (rec, id) in self.params.iter().zip(ids) {
            if rec.name != params.name(id) || rec.shape != params.get(id).shape() {
                return Err(NeuralError::Checkpoint(format!(
                    "block {} {:?} does not match {} {:?}",
                    rec.name,
                    rec.shape,
                    params.name(id),
                    params.get(id).shape()
                )));
            }
            *params.get_mut(id) = rec.decode()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }
}

impl BlockRecord {
    pub fn decode(&self) -> Result<Tensor, NeuralError> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", self.name)))?;
        let [r, c] = self.shape;
        if bytes.len() != r * c * 8 {
            return Err(NeuralError::Checkpoint(format!(
                "{}: {} bytes for shape {r}x{c}",
                self.name,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Tensor::from_vec(r, c, data))
    }
}
