//! Flat binary container of named tensors plus a JSON sidecar.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"CGMT"      4 bytes
//! version u32          currently 1
//! count   u64
//! count x { name_len u32, name utf-8, ndim u32, dims u64 x ndim, values f64 x prod(dims) }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{NumericsError, Result};
use crate::params::{hex, ParamStore};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CGMT";
const VERSION: u32 = 1;

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NumericsError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NumericsError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NumericsError::Format(format!("unsupported version {version}")));
    }
    let count = r.u64()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| NumericsError::Format("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        store.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(NumericsError::Format("trailing bytes after last tensor".into()));
    }
    Ok(store)
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_params(path: &Path, store: &ParamStore) -> Result<()> {
    write_atomic(path, &encode_params(store))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_params(&bytes)
}

/// `<path>.json` next to a binary artifact.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar<T: Serialize>(path: &Path, meta: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    write_atomic(&sidecar_path(path), text.as_bytes())
}

pub fn read_sidecar<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Lowercase hex encoding.
pub fn hex_digest(bytes: &[u8]) -> String {
    hex(bytes)
}

/// SHA-256 of `bytes`, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 1..40), rows in 1usize..4) {
            let cols = values.len();
            let mut store = ParamStore::new();
            store.insert("a.w", Tensor::matrix(1, cols, values.clone()).unwrap());
            store.insert("b", Tensor::new(vec![rows], vec![0.5; rows]).unwrap());
            let decoded = decode_params(&encode_params(&store)).unwrap();
            prop_assert_eq!(decoded, store);
        }
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(1.0));
        let bytes = encode_params(&store);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_params(&bad).is_err());
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store = ParamStore::new();
        store.insert("x", Tensor::row(&[1.0, 2.0]));
        save_params(&path, &store).unwrap();
        assert_eq!(load_params(&path).unwrap(), store);
        write_sidecar(&path, &serde_json::json!({"seed": 3})).unwrap();
        let meta: serde_json::Value = read_sidecar(&path).unwrap();
        assert_eq!(meta["seed"], 3);
    }
}
