//! Flat binary container of named `f64` arrays.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   b"PXCK"
//! version u8 (= 1)
//! count   u32
//! count × { name_len u32, name utf-8, rank u32, dims rank×u32, data Π(dims)×f64 }
//! ```
//!
//! A rank-0 record holds a single value.

use std::collections::HashSet;
use std::path::Path;

use super::optim::OptimizerState;
use super::{NetworkGraph, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PXCK";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<u32>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    records: Vec<Record>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Adds a record, replacing any earlier one with the same name.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<u32>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        if n != Some(data.len()) {
            return Err(Error::Checkpoint(format!(
                "record `{name}`: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        self.records.retain(|r| r.name != name);
        self.records.push(Record { name, shape, data });
        Ok(())
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: &Tensor) -> Result<()> {
        let shape = t.shape().iter().map(|&d| d as u32).collect();
        self.push(name, shape, t.data().to_vec())
    }

    pub fn push_values(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let shape = vec![values.len() as u32];
        self.push(name, shape, values)
    }

    /// Integers are stored as 32-bit halves so that every value is exact.
    pub fn push_u64s(&mut self, name: impl Into<String>, values: &[u64]) -> Result<()> {
        let data = values
            .iter()
            .flat_map(|&v| [(v >> 32) as f64, (v & 0xffff_ffff) as f64])
            .collect();
        self.push(name, vec![2 * values.len() as u32], data)
    }

    /// UTF-8 text stored one byte per value.
    pub fn push_text(&mut self, name: impl Into<String>, text: &str) -> Result<()> {
        self.push_values(name, text.bytes().map(f64::from).collect())
    }

    /// Raw bytes packed six per value (exact below 2^53), after a leading byte count.
    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) -> Result<()> {
        let mut data = Vec::with_capacity(1 + bytes.len().div_ceil(6));
        data.push(bytes.len() as f64);
        data.extend(bytes.chunks(6).map(|c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(w) as f64
        }));
        self.push_values(name, data)
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Record> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing record `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let r = self.require(name)?;
        let shape: Vec<usize> = if r.shape.is_empty() {
            vec![1]
        } else {
            r.shape.iter().map(|&d| d as usize).collect()
        };
        Tensor::new(shape, r.data.clone()).map_err(|e| Error::Checkpoint(format!("record `{name}`: {e}")))
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.require(name)?.data)
    }

    pub fn u64s(&self, name: &str) -> Result<Vec<u64>> {
        let d = self.values(name)?;
        if d.len() % 2 != 0 {
            return Err(Error::Checkpoint(format!("record `{name}` is not a u64 list")));
        }
        d.chunks(2)
            .map(|c| {
                let ok = |v: f64| v >= 0.0 && v <= u32::MAX as f64 && v.fract() == 0.0;
                if ok(c[0]) && ok(c[1]) {
                    Ok(((c[0] as u64) << 32) | c[1] as u64)
                } else {
                    Err(Error::Checkpoint(format!("record `{name}` holds a non-integer")))
                }
            })
            .collect()
    }

    pub fn bytes(&self, name: &str) -> Result<Vec<u8>> {
        let r = self.require(name)?;
        let bad = || Error::Checkpoint(format!("record `{name}` is not a byte list"));
        let (&count, packed) = r.data.split_first().ok_or_else(bad)?;
        if !(count >= 0.0 && count.fract() == 0.0) || packed.len() != (count as usize).div_ceil(6) {
            return Err(bad());
        }
        let n = count as usize;
        let mut out = Vec::with_capacity(n);
        for &v in packed {
            if !(v >= 0.0 && v < (1u64 << 48) as f64 && v.fract() == 0.0) {
                return Err(bad());
            }
            out.extend_from_slice(&(v as u64).to_le_bytes()[..6]);
        }
        out.truncate(n);
        Ok(out)
    }

    pub fn text(&self, name: &str) -> Result<String> {
        let bytes = self
            .values(name)?
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Checkpoint(format!("record `{name}` is not text")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        String::from_utf8(bytes).map_err(|_| Error::Checkpoint(format!("record `{name}` is not UTF-8")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for d in &r.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses an encoded container. Never allocates more than the input implies.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { buf: bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = rd.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = rd.u32()? as usize;
        // every record needs at least 8 header bytes
        if count > rd.remaining() / 8 {
            return Err(Error::Checkpoint(format!("record count {count} exceeds input")));
        }
        let mut records = Vec::with_capacity(count);
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = rd.u32()? as usize;
            let name = std::str::from_utf8(rd.take(name_len)?)
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
                .to_owned();
            if !seen.insert(name.clone()) {
                return Err(Error::Checkpoint(format!("duplicate record `{name}`")));
            }
            let rank = rd.u32()? as usize;
            if rank > rd.remaining() / 4 {
                return Err(Error::Checkpoint(format!("record `{name}`: rank {rank} exceeds input")));
            }
            let shape = (0..rank).map(|_| rd.u32()).collect::<Result<Vec<u32>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .filter(|&n| n <= rd.remaining() / 8)
                .ok_or_else(|| Error::Checkpoint(format!("record `{name}`: data exceeds input")))?;
            let raw = rd.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push(Record { name, shape, data });
        }
        if rd.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rd.remaining())));
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Stores every parameter of `net` under `prefix/`.
    pub fn push_network(&mut self, prefix: &str, net: &NetworkGraph) -> Result<()> {
        for p in net.params() {
            self.push_tensor(format!("{prefix}/{}", p.name), &p.value)?;
        }
        Ok(())
    }

    /// Restores parameters saved by [`push_network`](Self::push_network) into a
    /// graph of identical structure.
    pub fn load_network(&self, prefix: &str, net: &mut NetworkGraph) -> Result<()> {
        for p in net.params_mut() {
            let t = self.tensor(&format!("{prefix}/{}", p.name))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{prefix}/{}` has shape {:?}, network expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t;
        }
        Ok(())
    }

    pub fn push_optimizer(&mut self, prefix: &str, st: &OptimizerState) -> Result<()> {
        self.push_values(
            format!("{prefix}/hyper"),
            vec![st.learning_rate, st.beta1, st.beta2, st.epsilon],
        )?;
        self.push_u64s(format!("{prefix}/step"), &[st.step])?;
        self.push_u64s(format!("{prefix}/slots"), &[st.first.len() as u64])?;
        for (i, (m, v)) in st.first.iter().zip(&st.second).enumerate() {
            self.push_tensor(format!("{prefix}/m{i}"), m)?;
            self.push_tensor(format!("{prefix}/v{i}"), v)?;
        }
        Ok(())
    }

    pub fn load_optimizer(&self, prefix: &str) -> Result<OptimizerState> {
        let h = self.values(&format!("{prefix}/hyper"))?;
        if h.len() != 4 {
            return Err(Error::Checkpoint(format!("`{prefix}/hyper` must hold 4 values")));
        }
        let step = self.u64s(&format!("{prefix}/step"))?;
        let slots = self.u64s(&format!("{prefix}/slots"))?;
        let (Some(&step), Some(&slots)) = (step.first(), slots.first()) else {
            return Err(Error::Checkpoint(format!("`{prefix}` optimizer counters missing")));
        };
        let mut st = OptimizerState::new(h[0]);
        st.beta1 = h[1];
        st.beta2 = h[2];
        st.epsilon = h[3];
        st.step = step;
        for i in 0..slots {
            st.first.push(self.tensor(&format!("{prefix}/m{i}"))?);
            st.second.push(self.tensor(&format!("{prefix}/v{i}"))?);
        }
        Ok(st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut c = Checkpoint::new();
        c.push("a", vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300])
            .unwrap();
        c.push("scalar", vec![], vec![0.1]).unwrap();
        c.push_u64s("n", &[u64::MAX, 7]).unwrap();
        c.push_text("cfg", "env = grasp\nγ = 0.9\n").unwrap();
        let bytes = c.encode();
        assert_eq!(&bytes[..4], b"PXCK");
        assert_eq!(bytes[4], FORMAT_VERSION);
        let d = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(d, c);
        assert_eq!(d.encode(), bytes);
        assert_eq!(d.u64s("n").unwrap(), vec![u64::MAX, 7]);
        assert_eq!(d.text("cfg").unwrap(), "env = grasp\nγ = 0.9\n");
        assert_eq!(d.get("a").unwrap().data[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn bytes_round_trip_any_length() {
        for n in [0usize, 1, 5, 6, 7, 13, 256] {
            let bytes: Vec<u8> = (0..n).map(|i| (i * 37 + 255) as u8).collect();
            let mut c = Checkpoint::new();
            c.push_bytes("b", &bytes).unwrap();
            let back = Checkpoint::decode(&c.encode()).unwrap();
            assert_eq!(back.bytes("b").unwrap(), bytes);
        }
        let mut c = Checkpoint::new();
        c.push_values("b", vec![7.0, 1.0]).unwrap();
        assert!(c.bytes("b").is_err());
    }

    #[test]
    fn rejects_malformed_inputs() {
        let mut c = Checkpoint::new();
        c.push_values("x", vec![1.0, 2.0]).unwrap();
        let good = c.encode();
        assert!(Checkpoint::decode(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'Q';
        assert!(Checkpoint::decode(&magic).is_err());
        let mut version = good.clone();
        version[4] = 9;
        assert!(Checkpoint::decode(&version).is_err());
        // absurd record count must not allocate
        let mut count = good.clone();
        count[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(Checkpoint::decode(&count).is_err());
    }

    #[test]
    fn push_validates_shape() {
        let mut c = Checkpoint::new();
        assert!(c.push("x", vec![3], vec![1.0]).is_err());
    }
}
