//! Weight snapshots and their binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EXALW1"            6 bytes
//! layer count         u32
//! per layer:
//!   name length       u32
//!   name              UTF-8 bytes
//!   rank              u32
//!   dims              rank x u32
//!   values            product(dims) x f64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 6] = b"EXALW1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered, named parameter tensors of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub layers: Vec<Tensor>,
}

impl ModelWeights {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|t| t.values.len()).sum()
    }

    /// All values concatenated in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|t| t.values.iter().copied())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.param_count());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for t in &self.layers {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6)? != WEIGHTS_MAGIC {
            return Err(format_err("bad magic"));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| format_err("layer name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let values = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            layers.push(Tensor {
                name,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(format_err("trailing bytes after last layer"));
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn format_err(reason: &str) -> Error {
    Error::Format {
        what: "weight snapshot",
        reason: reason.to_string(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        (
            "[a-z.]{1,12}",
            prop::collection::vec(1usize..4, 0..3),
        )
            .prop_flat_map(|(name, shape)| {
                let n: usize = shape.iter().product();
                prop::collection::vec(any::<f64>(), n).prop_map(move |values| Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    values,
                })
            })
    }

    proptest! {
        #[test]
        fn container_roundtrip(layers in prop::collection::vec(tensor_strategy(), 0..5)) {
            let w = ModelWeights { layers };
            let bytes = w.to_bytes();
            let back = ModelWeights::from_bytes(&bytes).unwrap();
            // compare bitwise so NaN payloads count
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let w = ModelWeights {
            layers: vec![Tensor {
                name: "b".into(),
                shape: vec![2],
                values: vec![1.0, -2.0],
            }],
        };
        let bytes = w.to_bytes();
        assert_eq!(&bytes[..6], b"EXALW1");
        assert_eq!(&bytes[6..10], &1u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(bytes[14], b'b');
        assert_eq!(&bytes[15..19], &1u32.to_le_bytes());
        assert_eq!(&bytes[19..23], &2u32.to_le_bytes());
        assert_eq!(&bytes[23..31], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 39);
    }

    #[test]
    fn rejects_corruption() {
        assert!(ModelWeights::from_bytes(b"EXALW2\0\0\0\0").is_err());
        let w = ModelWeights {
            layers: vec![Tensor {
                name: "w".into(),
                shape: vec![3],
                values: vec![0.5; 3],
            }],
        };
        let bytes = w.to_bytes();
        assert!(ModelWeights::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(ModelWeights::from_bytes(&long).is_err());
    }
}
