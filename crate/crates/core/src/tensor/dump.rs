//! Tensor dump format: a JSON manifest of `(name, shape, dtype, offset)`
//! entries plus one blob of little-endian values laid out back to back.

use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset of the first value inside the blob.
    pub offset: usize,
}

pub fn write_dump<'t, R: Real>(
    tensors: impl IntoIterator<Item = (String, &'t Tensor<R>)>,
) -> (Vec<DumpEntry>, Vec<u8>) {
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    for (name, t) in tensors {
        entries.push(DumpEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: R::DTYPE.to_string(),
            offset: blob.len(),
        });
        blob.extend(R::to_le_bytes_vec(t.data()));
    }
    (entries, blob)
}

pub fn read_dump<R: Real>(entries: &[DumpEntry], blob: &[u8]) -> Result<Vec<(String, Tensor<R>)>> {
    entries
        .iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => {
                    return Err(Error::Checkpoint(format!("tensor {}: unknown dtype {other}", e.name)))
                }
            };
            let end = e.offset + n * width;
            let bytes = blob.get(e.offset..end).ok_or_else(|| {
                Error::Checkpoint(format!(
                    "tensor {} needs bytes {}..{end} but the blob has {}",
                    e.name,
                    e.offset,
                    blob.len()
                ))
            })?;
            let data = bytes
                .chunks_exact(width)
                .map(|c| {
                    R::from_f64(if width == 4 {
                        f32::from_le_bytes(c.try_into().unwrap()) as f64
                    } else {
                        f64::from_le_bytes(c.try_into().unwrap())
                    })
                })
                .collect();
            Ok((e.name.clone(), Tensor::new(e.shape.clone(), data)?))
        })
        .collect()
}
