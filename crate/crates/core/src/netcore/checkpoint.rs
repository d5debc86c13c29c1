//! Binary checkpoint codec.
//!
//! Layout: `OFCK`, version (u32 LE), tensor count (u32 LE), then per tensor
//! a u16 LE name length, the UTF-8 name, a u8 rank, u32 LE dims and f32 LE
//! values; finally the CRC32 of all value bytes. The spec and metadata
//! travel as a rank-1 tensor named `meta` holding JSON bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{CheckpointMeta, Layer, ModelCheckpoint, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OFCK";
pub const VERSION: u32 = 1;
const META_TENSOR: &str = "meta";

#[derive(Serialize, Deserialize)]
struct MetaDoc {
    spec: ModelSpec,
    meta: CheckpointMeta,
}

fn weight_name(k: usize) -> String {
    format!("layer{k}.weight")
}

fn bias_name(k: usize) -> String {
    format!("layer{k}.bias")
}

struct Named<'a> {
    name: String,
    dims: Vec<usize>,
    values: Box<dyn Iterator<Item = f32> + 'a>,
}

pub fn encode(model: &ModelCheckpoint) -> Result<Vec<u8>> {
    model.validate()?;
    let doc = serde_json::to_vec(&MetaDoc {
        spec: model.spec.clone(),
        meta: model.meta.clone(),
    })
    .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut tensors = vec![Named {
        name: META_TENSOR.into(),
        dims: vec![doc.len()],
        values: Box::new(doc.iter().map(|&b| b as f32)),
    }];
    for (k, l) in model.layers.iter().enumerate() {
        tensors.push(Named {
            name: weight_name(k),
            dims: l.weight.dims().to_vec(),
            values: Box::new(l.weight.data().iter().map(|&v| v as f32)),
        });
        tensors.push(Named {
            name: bias_name(k),
            dims: l.bias.dims().to_vec(),
            values: Box::new(l.bias.data().iter().map(|&v| v as f32)),
        });
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut crc = crc32fast::Hasher::new();
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for d in &t.dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.values {
            let b = v.to_le_bytes();
            crc.update(&b);
            out.extend_from_slice(&b);
        }
    }
    out.extend_from_slice(&crc.finalize().to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut crc = crc32fast::Hasher::new();
    let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        crc.update(raw);
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push((name, dims, values));
    }
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after checksum".into()));
    }
    if stored != crc.finalize() {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }

    let mut by_name: std::collections::HashMap<String, (Vec<usize>, Vec<f32>)> =
        tensors.into_iter().map(|(n, d, v)| (n, (d, v))).collect();
    let (_, meta_bytes) = by_name
        .remove(META_TENSOR)
        .ok_or_else(|| Error::Checkpoint("missing meta tensor".into()))?;
    let meta_bytes: Vec<u8> = meta_bytes.iter().map(|&v| v as u8).collect();
    let doc: MetaDoc = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
    doc.spec.validate()?;
    let mut layers = Vec::with_capacity(doc.spec.layer_count());
    for k in 0..doc.spec.layer_count() {
        let mut fetch = |name: String| -> Result<Tensor> {
            let (dims, vals) = by_name
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            Tensor::new(dims, vals.into_iter().map(f64::from).collect())
        };
        layers.push(Layer {
            weight: fetch(weight_name(k))?,
            bias: fetch(bias_name(k))?,
        });
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    let model = ModelCheckpoint {
        spec: doc.spec,
        layers,
        meta: doc.meta,
    };
    model
        .validate()
        .map_err(|e| Error::Checkpoint(format!("tensor dims disagree with spec: {e}")))?;
    Ok(model)
}

pub fn write_checkpoint(model: &ModelCheckpoint, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelCheckpoint {
        let mut m = ModelCheckpoint::init(ModelSpec::classifier(vec![5, 4, 3]).with_trainable_top(1), 11).unwrap();
        m.meta.input_mean = 0.4375;
        m.meta.provenance.config_hash = "abc".into();
        m.meta.provenance.iterations = 12;
        m
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let m = model();
        let back = decode(&encode(&m).unwrap()).unwrap();
        let mut q = m.clone();
        q.quantize();
        assert_eq!(back, q);
        assert_eq!(encode(&back).unwrap(), encode(&m).unwrap());
    }

    #[test]
    fn header_layout() {
        let b = encode(&model()).unwrap();
        assert_eq!(&b[..4], b"OFCK");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 5);
        assert_eq!(u16::from_le_bytes(b[12..14].try_into().unwrap()), 4);
        assert_eq!(&b[14..18], b"meta");
    }

    #[test]
    fn corruption_detected() {
        let mut b = encode(&model()).unwrap();
        let n = b.len();
        b[n - 10] ^= 0x40;
        assert!(matches!(decode(&b), Err(Error::Checkpoint(_))));
        let b = encode(&model()).unwrap();
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut long = b.clone();
        long.push(0);
        assert!(decode(&long).is_err());
        let mut magic = b;
        magic[0] = b'X';
        assert!(decode(&magic).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ofck");
        write_checkpoint(&model(), &p).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back.meta, model().meta);
    }
}
