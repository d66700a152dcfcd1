//! Binary checkpoint container: magic `SACI`, a format version, a named
//! tensor table and a text config snapshot.
//!
//! Layout (all integers little-endian):
//! `b"SACI" | u32 version | u64 count | count × (u64 name_len, name, tensor) | u64 config_len, config`

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{mlp_from_tensors, mlp_to_tensors, read_tensor, write_tensor, Mlp, Tensor};

pub const MAGIC: &[u8; 4] = b"SACI";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    /// Insertion-ordered; names are unique.
    pub tensors: Vec<(String, Tensor)>,
    pub config: String,
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let n = read_u64(r)?;
    if n > 1 << 30 {
        return Err(Error::Checkpoint(format!("implausible {what} length {n}")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
}

impl Checkpoint {
    pub fn new(config: impl Into<String>) -> Self {
        Self {
            tensors: Vec::new(),
            config: config.into(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} missing")))
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn put_mlp(&mut self, prefix: &str, net: &Mlp) {
        for (suffix, t) in mlp_to_tensors(net) {
            self.insert(format!("{prefix}.{suffix}"), t);
        }
    }

    pub fn get_mlp(&self, prefix: &str) -> Result<Mlp> {
        mlp_from_tensors(|suffix| self.get(&format!("{prefix}.{suffix}")))
            .map_err(|e| Error::Checkpoint(format!("network {prefix:?}: {e}")))
    }

    pub fn put_scalar(&mut self, name: &str, v: f64) {
        self.insert(name, Tensor::scalar(v));
    }

    pub fn get_scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        match t.data.as_slice() {
            [v] if t.dims.is_empty() => Ok(*v),
            _ => Err(Error::Checkpoint(format!("tensor {name:?} is not a scalar"))),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            write_tensor(w, t)?;
        }
        w.write_all(&(self.config.len() as u64).to_le_bytes())?;
        w.write_all(self.config.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short for a checkpoint header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u64(r)?;
        if count > 1 << 20 {
            return Err(Error::Checkpoint(format!("implausible tensor count {count}")));
        }
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let name = read_string(r, "tensor name")?;
            if ck.contains(&name) {
                return Err(Error::Checkpoint(format!("duplicate tensor {name:?}")));
            }
            let t = read_tensor(r)?;
            ck.tensors.push((name, t));
        }
        ck.config = read_string(r, "config")?;
        Ok(ck)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let ck = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new("[sac]\nlr = 0.0005\n");
        ck.put_mlp("policy", &Mlp::init(&[3, 4, 2], 1).unwrap());
        ck.put_scalar("log_alpha", -0.25);
        ck
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"SACI");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 5);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.get_mlp("policy").unwrap(), Mlp::init(&[3, 4, 2], 1).unwrap());
        assert_eq!(back.get_scalar("log_alpha").unwrap(), -0.25);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"NOPE"), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Checkpoint(_))));
        assert!(matches!(sample().get_mlp("q1"), Err(Error::Checkpoint(_))));
    }
}
