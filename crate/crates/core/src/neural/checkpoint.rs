//! `ISV1` checkpoints: the 4-byte magic, a little-endian `u32` header
//! length, a JSON header `{model_kind, config, tensors: {name: {shape,
//! offset}}}`, then every tensor as little-endian `f32` in parameter order.
//! `offset` counts `f32` values from the start of the data section.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ISV1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model_kind: String,
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, TensorEntry>,
}

pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub data: Vec<f32>,
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    model_kind: &str,
    config: serde_json::Value,
    store: &ParamStore,
) -> Result<()> {
    let mut tensors = BTreeMap::new();
    let mut offset = 0;
    for p in store.iter() {
        tensors.insert(
            p.name.clone(),
            TensorEntry {
                shape: p.tensor.shape().to_vec(),
                offset,
            },
        );
        offset += p.tensor.len();
    }
    let header = CheckpointHeader {
        model_kind: model_kind.to_string(),
        config,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut bytes = Vec::with_capacity(offset * 4);
    for p in store.iter() {
        for &v in p.tensor.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("missing ISV1 magic".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if rest.len() % 4 != 0 {
        return Err(Error::Checkpoint("data section is not a whole number of f32".into()));
    }
    let data: Vec<f32> = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    for (name, e) in &header.tensors {
        let n: usize = e.shape.iter().product();
        if e.offset + n > data.len() {
            return Err(Error::Checkpoint(format!("tensor `{name}` runs past the data section")));
        }
    }
    Ok(Checkpoint { header, data })
}

impl Checkpoint {
    /// Copies every tensor into `store`, requiring an exact name and shape match.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.header.tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.header.tensors.len(),
                store.len()
            )));
        }
        for p in store.iter_mut() {
            let e = self
                .header
                .tensors
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", p.name)))?;
            if e.shape != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    e.shape,
                    p.tensor.shape()
                )));
            }
            let n = p.tensor.len();
            for (dst, &src) in p.tensor.data_mut().iter_mut().zip(&self.data[e.offset..e.offset + n]) {
                *dst = src as f64;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.5]).unwrap(), true)
            .unwrap();
        s.add("a.bias", Tensor::new(vec![2], vec![-1.0, 0.25]).unwrap(), true).unwrap();
        s
    }

    #[test]
    fn round_trip() {
        let s = store();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "fci", serde_json::json!({"k": 1}), &s).unwrap();
        assert_eq!(&buf[..4], b"ISV1");
        let ck = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(ck.header.model_kind, "fci");
        assert_eq!(ck.header.tensors["a.bias"].offset, 4);
        let mut fresh = ParamStore::new();
        fresh.add("a.weight", Tensor::zeros(vec![2, 2]), true).unwrap();
        fresh.add("a.bias", Tensor::zeros(vec![2]), true).unwrap();
        ck.restore_into(&mut fresh).unwrap();
        assert_eq!(fresh, s);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "fci", serde_json::Value::Null, &store()).unwrap();
        let ck = read_checkpoint(&buf[..]).unwrap();
        let mut other = ParamStore::new();
        other.add("a.weight", Tensor::zeros(vec![4]), true).unwrap();
        other.add("a.bias", Tensor::zeros(vec![2]), true).unwrap();
        let err = ck.restore_into(&mut other).unwrap_err();
        assert!(err.to_string().contains("a.weight"));
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            read_checkpoint(&b"NOPE\0\0\0\0"[..]),
            Err(Error::Checkpoint(_))
        ));
    }
}
