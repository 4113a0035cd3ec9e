//! Raw little-endian f32 arrays, JSON manifests and SHA-256 checksums.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

/// Writes `values` as little-endian f32 and returns the checksum of the file.
pub fn write_f32(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<String> {
    let bytes = f32_bytes(values);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Reads exactly `len` values, verifying the checksum when given.
pub fn read_f32(path: &Path, len: usize, checksum: Option<&str>) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * len {
        return Err(Error::data(format!(
            "{} holds {} bytes, expected {} ({} f32 values)",
            path.display(),
            bytes.len(),
            4 * len,
            len
        )));
    }
    if let Some(want) = checksum {
        let got = sha256_hex(&bytes);
        if got != want {
            return Err(Error::data(format!("checksum mismatch in {}: {got} != {want}", path.display())));
        }
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f32");
        let vals = [0.0f32, -1.5, 3.25e-7, f32::MAX];
        let sum = write_f32(&p, vals).unwrap();
        assert_eq!(read_f32(&p, 4, Some(&sum)).unwrap(), vals);
        assert!(matches!(read_f32(&p, 5, None), Err(Error::Data(_))));
        assert!(matches!(read_f32(&p, 4, Some("00")), Err(Error::Data(_))));
        assert_eq!(fs::read(&p).unwrap()[4..8], (-1.5f32).to_le_bytes());
    }
}
