//! Shared binary container for datasets and model checkpoints.
//!
//! Layout:
//! - magic bytes `CMLS`
//! - format version, u16 little-endian (currently 1)
//! - metadata byte length, u32 little-endian
//! - metadata: UTF-8 `key=value` lines; `block.count`, `block.<i>.name`
//!   and `block.<i>.len` describe the payload
//! - payload: every block's values as little-endian f32, concatenated in
//!   declaration order
//!
//! The metadata fully determines the payload layout, so readers can verify
//! truncation before touching any numbers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, ParamStore};

pub const MAGIC: [u8; 4] = *b"CMLS";
pub const VERSION: u16 = 1;

/// Parsed container: ordered metadata plus named f32 payload blocks.
#[derive(Debug, Clone, Default)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub blocks: Vec<(String, Vec<f32>)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        debug_assert!(!key.starts_with("block."), "block.* keys are reserved");
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        self.meta.push((key, value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(format!("missing metadata key `{key}`")))
    }

    pub fn require_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::format(format!("metadata key `{key}` has a malformed value")))
    }

    /// Space- or comma-separated list values.
    pub fn require_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::format(format!("metadata key `{key}` has a malformed value")))
            })
            .collect()
    }

    pub fn push_block(&mut self, name: impl Into<String>, values: Vec<f32>) {
        self.blocks.push((name.into(), values));
    }

    pub fn block(&self, name: &str) -> Result<&[f32]> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::format(format!("missing payload block `{name}`")))
    }

    /// Append every parameter as a payload block (declaration order) with
    /// `param.<i>.name` / `param.<i>.shape` metadata.
    pub fn push_param_store(&mut self, store: &ParamStore) {
        self.set("param.count", store.len());
        for (i, p) in store.iter().enumerate() {
            self.set(format!("param.{i}.name"), &p.name);
            self.set(
                format!("param.{i}.shape"),
                p.value
                    .shape
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            self.push_block(
                format!("param.{i}"),
                p.value.data.iter().map(|&v| v as f32).collect(),
            );
        }
    }

    /// Copy parameter payloads back into a freshly constructed store,
    /// verifying names and shapes.
    pub fn read_param_store_into(&self, store: &mut ParamStore) -> Result<()> {
        let count: usize = self.require_parsed("param.count")?;
        if count != store.len() {
            return Err(Error::format(format!(
                "checkpoint has {count} parameters, model declares {}",
                store.len()
            )));
        }
        for i in 0..count {
            let name = self.require(&format!("param.{i}.name"))?;
            let shape: Vec<usize> = self.require_list(&format!("param.{i}.shape"))?;
            let values = self.block(&format!("param.{i}"))?;
            let p = store.get_mut(crate::nn::ParamId(i));
            if p.name != name || p.value.shape != shape {
                return Err(Error::format(format!(
                    "checkpoint parameter {i} is `{name}` {shape:?}, model declares `{}` {:?}",
                    p.name, p.value.shape
                )));
            }
            for (dst, &src) in p.value.data.iter_mut().zip(values) {
                *dst = src as f64;
            }
        }
        Ok(())
    }

    /// Append optimizer moments after the parameter payloads.
    pub fn push_adam(&mut self, opt: &Adam) {
        let (m, v, step) = opt.state();
        self.set("opt.saved", 1);
        self.set("opt.step", step);
        for (i, mi) in m.iter().enumerate() {
            self.push_block(format!("opt.m.{i}"), mi.iter().map(|&x| x as f32).collect());
        }
        for (i, vi) in v.iter().enumerate() {
            self.push_block(format!("opt.v.{i}"), vi.iter().map(|&x| x as f32).collect());
        }
    }

    pub fn read_adam(&self, cfg: AdamConfig, param_count: usize) -> Result<Option<Adam>> {
        if self.get("opt.saved") != Some("1") {
            return Ok(None);
        }
        let step: u64 = self.require_parsed("opt.step")?;
        let mut m = Vec::with_capacity(param_count);
        let mut v = Vec::with_capacity(param_count);
        for i in 0..param_count {
            m.push(self.block(&format!("opt.m.{i}"))?.iter().map(|&x| x as f64).collect());
            v.push(self.block(&format!("opt.v.{i}"))?.iter().map(|&x| x as f64).collect());
        }
        Ok(Some(Adam::restore(cfg, m, v, step)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut meta = String::new();
        for (k, v) in &self.meta {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        meta.push_str(&format!("block.count={}\n", self.blocks.len()));
        for (i, (name, values)) in self.blocks.iter().enumerate() {
            meta.push_str(&format!("block.{i}.name={name}\n"));
            meta.push_str(&format!("block.{i}.len={}\n", values.len()));
        }

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        let mut buf = Vec::with_capacity(4096);
        for (_, values) in &self.blocks {
            buf.clear();
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Container> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("file too short for magic bytes"))?;
        if magic != MAGIC {
            return Err(Error::format(format!(
                "bad magic bytes {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf)
            .map_err(|_| Error::format("file too short for version"))?;
        let version = u16::from_le_bytes(u16buf);
        if version != VERSION {
            return Err(Error::format(format!(
                "unsupported format version {version}, expected {VERSION}"
            )));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::format("file too short for metadata length"))?;
        let meta_len = u32::from_le_bytes(u32buf) as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes)
            .map_err(|_| Error::format("truncated metadata block"))?;
        let meta_text = String::from_utf8(meta_bytes)
            .map_err(|_| Error::format("metadata is not valid UTF-8"))?;

        let mut meta = Vec::new();
        let mut block_keys = BTreeMap::new();
        for line in meta_text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("malformed metadata line `{line}`")))?;
            if k.starts_with("block.") {
                block_keys.insert(k.to_string(), v.to_string());
            } else {
                meta.push((k.to_string(), v.to_string()));
            }
        }

        let count: usize = block_keys
            .get("block.count")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("missing or malformed block.count"))?;
        let mut blocks = Vec::with_capacity(count);
        for i in 0..count {
            let name = block_keys
                .get(&format!("block.{i}.name"))
                .ok_or_else(|| Error::format(format!("missing block.{i}.name")))?
                .clone();
            let len: usize = block_keys
                .get(&format!("block.{i}.len"))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(format!("missing or malformed block.{i}.len")))?;
            let mut bytes = vec![0u8; len * 4];
            r.read_exact(&mut bytes).map_err(|_| {
                Error::format(format!(
                    "truncated payload: block `{name}` expects {len} floats"
                ))
            })?;
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            blocks.push((name, values));
        }
        Ok(Container { meta, blocks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Seek;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cmls");
        let mut c = Container::new();
        c.set("kind", "test");
        c.set("steps", 3);
        c.push_block("a", vec![1.0, -2.5, 3.25e-7]);
        c.push_block("b", vec![f32::MIN_POSITIVE, 0.0]);
        c.write(&path).unwrap();
        let back = Container::read(&path).unwrap();
        assert_eq!(back.get("kind"), Some("test"));
        assert_eq!(back.require_parsed::<usize>("steps").unwrap(), 3);
        assert_eq!(back.blocks, c.blocks);
        // payload must be bit-exact
        assert_eq!(
            back.block("a").unwrap()[2].to_bits(),
            3.25e-7f32.to_bits()
        );
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cmls");
        let mut c = Container::new();
        c.push_block("a", vec![1.0]);
        c.write(&path).unwrap();
        let mut f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.seek(std::io::SeekFrom::Start(0)).unwrap();
        f.write_all(b"XXXX").unwrap();
        drop(f);
        let err = Container::read(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "got: {err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cmls");
        let mut c = Container::new();
        c.push_block("a", vec![1.0, 2.0, 3.0]);
        c.write(&path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 5).unwrap();
        drop(f);
        let err = Container::read(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "got: {err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cmls");
        let mut c = Container::new();
        c.push_block("a", vec![1.0]);
        c.write(&path).unwrap();
        let mut f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.seek(std::io::SeekFrom::Start(4)).unwrap();
        f.write_all(&99u16.to_le_bytes()).unwrap();
        drop(f);
        assert!(Container::read(&path).is_err());
    }
}
