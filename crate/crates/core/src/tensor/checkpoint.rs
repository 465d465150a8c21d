//! Versioned binary archive of named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"PLANCKPT"
//! u32    version
//! u32    metadata length, then that many bytes of UTF-8
//! u32    entry count
//! entry: u32 name length, name bytes, u8 dtype tag, u32 rank,
//!        rank × u64 dims, payload (numel × dtype size bytes)
//! ```

use std::path::Path;

use super::{DType, Float, ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PLANCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    /// Free-form text stored alongside the tensors (the model config).
    pub metadata: String,
    pub entries: Vec<(String, Tensor<F>)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode<F: Float>(metadata: &str, params: &ParamSet<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * F::DTYPE.size());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, metadata.len() as u32);
    out.extend_from_slice(metadata.as_bytes());
    put_u32(&mut out, params.len() as u32);
    for (_, name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        out.push(F::DTYPE as u8);
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

/// Decodes an archive, converting stored values to `F` whatever their tag.
pub fn decode<F: Float>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let metadata = r.string()?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("{name}: unknown dtype tag {tag}")))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let payload = r.take(numel.checked_mul(dtype.size()).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
        let data: Vec<F> = match dtype {
            DType::F32 => payload.chunks_exact(4).map(|c| F::of(f32::read_le(c) as f64)).collect(),
            DType::F64 => payload.chunks_exact(8).map(|c| F::of(f64::read_le(c))).collect(),
        };
        entries.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { metadata, entries })
}

pub fn save<F: Float>(path: &Path, metadata: &str, params: &ParamSet<F>) -> Result<()> {
    std::fs::write(path, encode(metadata, params)).map_err(|e| Error::io(path, e))
}

pub fn load<F: Float>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample() -> ParamSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::new();
        p.add_xavier("w", 3, 4, &mut rng);
        p.add_filled("b", &[4], 0.25);
        p.add("s", Tensor::scalar(7.5));
        p
    }

    #[test]
    fn roundtrip() {
        let p = sample();
        let ck = decode::<f32>(&encode("meta", &p)).unwrap();
        assert_eq!(ck.metadata, "meta");
        assert_eq!(ck.entries.len(), 3);
        for ((name, t), (_, pname, pt)) in ck.entries.iter().zip(p.iter()) {
            assert_eq!(name, pname);
            assert_eq!(t.shape(), pt.shape());
            assert_eq!(t.data(), pt.data());
        }
        let mut q = sample();
        q.get_mut(q.id("b").unwrap()).data_mut()[0] = 9.0;
        q.load_from(&ck.entries).unwrap();
        assert_eq!(q.by_name("b").unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn widening_read() {
        let p = sample();
        let ck = decode::<f64>(&encode("", &p)).unwrap();
        assert_eq!(ck.entries[1].1.data(), &[0.25f64; 4]);
    }

    #[test]
    fn corrupt_archives() {
        let bytes = encode("m", &sample());
        assert!(matches!(decode::<f32>(&bytes[..bytes.len() - 1]), Err(Error::Checkpoint(_))));
        assert!(matches!(decode::<f32>(b"nope"), Err(Error::Checkpoint(_))));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode::<f32>(&v2), Err(Error::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
    }
}
