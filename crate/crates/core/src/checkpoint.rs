//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "SEACKPT\0" | version u32 | meta_len u64 | meta (UTF-8 JSON)
//! count u64 | count x ( name_len u32 | name | ndim u32 | dims u64* | values f64* )
//! ```
//!
//! Values are stored as raw IEEE-754 bits so a round trip is bit exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SeaError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SEACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Parameters plus a free-form JSON metadata blob (model config, vocab, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: serde_json::Value) -> Self {
        let tensors = store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
        Self { meta, tensors }
    }

    /// Copies every stored tensor into the matching parameter of `store`.
    /// Names and shapes must line up exactly.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(SeaError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, t) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| SeaError::Checkpoint(format!("unknown parameter `{name}`")))?;
            store
                .set_value(id, t.clone())
                .map_err(|e| SeaError::Checkpoint(format!("parameter `{name}`: {e}")))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("json values always serialize");
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(SeaError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(SeaError::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let meta_bytes = take(&mut r, meta_len)?;
        let meta = serde_json::from_slice(meta_bytes)?;
        let count = read_u64(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(take(&mut r, name_len)?.to_vec())
                .map_err(|_| SeaError::Checkpoint("parameter name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_bits(read_u64(&mut r)?));
            }
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if !r.is_empty() {
            return Err(SeaError::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| SeaError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| SeaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| SeaError::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

fn truncated() -> SeaError {
    SeaError::Checkpoint("truncated file".into())
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(truncated());
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    buf.copy_from_slice(take(r, buf.len())?);
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>(), 1..40), rows in 1usize..4) {
            let cols = values.len();
            let data: Vec<f64> = (0..rows).flat_map(|_| values.iter().copied()).collect();
            let ck = Checkpoint {
                meta: serde_json::json!({"d": 8}),
                tensors: vec![("w".into(), Tensor::matrix(rows, cols, data).unwrap())],
            };
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let a: Vec<u64> = ck.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.meta, ck.meta);
        }
    }

    #[test]
    fn rejects_other_versions_and_truncation() {
        let ck = Checkpoint { meta: serde_json::json!({}), tensors: vec![("b".into(), Tensor::zeros(&[2]))] };
        let mut bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[8] = 9;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }

    #[test]
    fn load_into_checks_names() {
        let mut s = ParamStore::new(0);
        s.zeros("a", &[1, 2]).unwrap();
        let ck = Checkpoint { meta: serde_json::json!({}), tensors: vec![("z".into(), Tensor::zeros(&[1, 2]))] };
        assert!(ck.load_into(&mut s).is_err());
    }
}
