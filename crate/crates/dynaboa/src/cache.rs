//! Minimal binary container used by every cached artifact (model
//! checkpoints, source banks, cluster models).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "DBA1"
//! count   u32      number of sections
//! section repeated:
//!   name_len u32, name utf-8 bytes
//!   kind     u8   0 = f64 array, 1 = u64 array
//!   len      u64  element count
//!   payload  len * 8 bytes
//! ```
//!
//! Sections are written in the order given, so identical inputs serialize to
//! identical bytes; that property backs the checkpoint determinism tests.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DBA1";

/// FNV-1a over raw bytes: a small, platform-stable hash used to fingerprint
/// configs and generated streams. Not cryptographic, just reproducible.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

enum Payload {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

/// In-memory view of a container, mapping section names to typed arrays.
#[derive(Default)]
pub struct Container {
    sections: Vec<(String, Payload)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn put_f64(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        self.sections.push((name.to_string(), Payload::F64(values)));
        self
    }

    pub fn put_u64(&mut self, name: &str, values: Vec<u64>) -> &mut Self {
        self.sections.push((name.to_string(), Payload::U64(values)));
        self
    }

    pub fn f64(&self, name: &str) -> Result<&[f64]> {
        for (n, p) in &self.sections {
            if n == name {
                return match p {
                    Payload::F64(v) => Ok(v),
                    Payload::U64(_) => Err(Error::Cache(format!("section {name} holds u64 data"))),
                };
            }
        }
        Err(Error::Cache(format!("missing section {name}")))
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        for (n, p) in &self.sections {
            if n == name {
                return match p {
                    Payload::U64(v) => Ok(v),
                    Payload::F64(_) => Err(Error::Cache(format!("section {name} holds f64 data"))),
                };
            }
        }
        Err(Error::Cache(format!("missing section {name}")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (name, payload) in &self.sections {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            match payload {
                Payload::F64(values) => {
                    w.write_all(&[0u8])?;
                    w.write_all(&(values.len() as u64).to_le_bytes())?;
                    for v in values {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                Payload::U64(values) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&(values.len() as u64).to_le_bytes())?;
                    for v in values {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Cache("bad magic; not a cache file".into()));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let count = u32::from_le_bytes(buf4) as usize;
        let mut sections = Vec::with_capacity(count);
        let mut seen = BTreeMap::new();
        for _ in 0..count {
            r.read_exact(&mut buf4)?;
            let name_len = u32::from_le_bytes(buf4) as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Cache("section name is not utf-8".into()))?;
            if seen.insert(name.clone(), ()).is_some() {
                return Err(Error::Cache(format!("duplicate section {name}")));
            }
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let mut buf8 = [0u8; 8];
            r.read_exact(&mut buf8)?;
            let len = u64::from_le_bytes(buf8) as usize;
            let payload = match kind[0] {
                0 => {
                    let mut values = Vec::with_capacity(len);
                    for _ in 0..len {
                        r.read_exact(&mut buf8)?;
                        values.push(f64::from_le_bytes(buf8));
                    }
                    Payload::F64(values)
                }
                1 => {
                    let mut values = Vec::with_capacity(len);
                    for _ in 0..len {
                        r.read_exact(&mut buf8)?;
                        values.push(u64::from_le_bytes(buf8));
                    }
                    Payload::U64(values)
                }
                k => return Err(Error::Cache(format!("unknown section kind {k}"))),
            };
            sections.push((name, payload));
        }
        Ok(Container { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Config(format!("cannot open cache file {}: {e}", path.display()))
        })?;
        Container::read_from(std::io::BufReader::new(file))
    }
}
