//! On-disk model format: a `header.json` document plus one raw
//! little-endian `f64` file per named parameter blob.
//!
//! ```text
//! <dir>/header.json     {"format_version":1,"kind":...,"model":{...},"blobs":[{"name","file","len"}]}
//! <dir>/<name>.f64      len * 8 bytes
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "header.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub file: String,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header<M> {
    format_version: u32,
    kind: String,
    model: M,
    blobs: Vec<BlobEntry>,
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)
}

pub fn read_f64_le(path: &Path) -> std::io::Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{} is not a whole number of f64 values", path.display()),
        ));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Writes `model` and the blobs in the given order.
pub fn save<M: Serialize>(dir: &Path, kind: &str, model: &M, blobs: &[(&str, &[f64])]) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(blobs.len());
    for (name, data) in blobs {
        let file = format!("{name}.f64");
        write_f64_le(&dir.join(&file), data)?;
        entries.push(BlobEntry { name: name.to_string(), file, len: data.len() });
    }
    let header = Header { format_version: CHECKPOINT_VERSION, kind: kind.to_string(), model, blobs: entries };
    fs::write(dir.join(HEADER_FILE), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a checkpoint written by [`save`], checking kind, version and blob
/// lengths. Blobs come back in header order.
pub fn load<M: DeserializeOwned>(dir: &Path, kind: &str) -> Result<(M, Vec<(String, Vec<f64>)>), CheckpointError> {
    let header: Header<M> = serde_json::from_slice(&fs::read(dir.join(HEADER_FILE))?)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Malformed(format!("unsupported format version {}", header.format_version)));
    }
    if header.kind != kind {
        return Err(CheckpointError::Malformed(format!("expected a {kind} checkpoint, found {}", header.kind)));
    }
    let mut blobs = Vec::with_capacity(header.blobs.len());
    for b in &header.blobs {
        let data = read_f64_le(&dir.join(&b.file))?;
        if data.len() != b.len {
            return Err(CheckpointError::Malformed(format!("{}: {} values, header says {}", b.file, data.len(), b.len)));
        }
        blobs.push((b.name.clone(), data));
    }
    Ok((header.model, blobs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let a = [1.0, -2.5, f64::MIN_POSITIVE];
        save(dir.path(), "toy", &vec![3usize], &[("a", &a), ("b", &[])]).unwrap();
        let (m, blobs): (Vec<usize>, _) = load(dir.path(), "toy").unwrap();
        assert_eq!(m, vec![3]);
        assert_eq!(blobs[0].1, a);
        assert!(blobs[1].1.is_empty());
        assert!(load::<Vec<usize>>(dir.path(), "other").is_err());
        std::fs::write(dir.path().join("a.f64"), [0u8; 16]).unwrap();
        assert!(load::<Vec<usize>>(dir.path(), "toy").is_err());
    }
}
