//! `key = value` text manifests paired with little-endian `f64` payload files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string();
        assert!(
            !key.contains(['=', '\n']) && !key.trim().is_empty() && !value.contains('\n'),
            "manifest entries must be single-line and keys free of '='"
        );
        self.entries.insert(key.trim().to_owned(), value.trim().to_owned());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(format!("manifest is missing `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::format(format!("cannot parse `{key}` = `{raw}`")))
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::format(format!("cannot parse `{key}` = `{raw}`")))
            })
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("manifest line {} has no `=`", n + 1)))?;
            entries.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        Ok(Self { entries })
    }
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Sidecar payload path: `<manifest>.bin`.
pub fn payload_path(manifest: &Path) -> PathBuf {
    let mut s = manifest.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f64(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the manifest and its payload; the payload digest is recorded under
/// `payload.sha256`.
pub fn write_pair(path: &Path, manifest: &mut Manifest, payload: &[f64]) -> Result<()> {
    let bytes = encode_f64(payload);
    manifest.set("payload.sha256", sha256_hex(&bytes));
    manifest.set("payload.len", payload.len());
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(payload_path(path), &bytes)?;
    std::fs::write(path, manifest.to_text())?;
    Ok(())
}

/// Reads a manifest and its payload, verifying the recorded digest.
pub fn read_pair(path: &Path) -> Result<(Manifest, Vec<f64>)> {
    let manifest = Manifest::from_text(&std::fs::read_to_string(path)?)?;
    let bytes = std::fs::read(payload_path(path))?;
    let digest = sha256_hex(&bytes);
    if manifest.require("payload.sha256")? != digest {
        return Err(Error::format(format!(
            "payload of {} does not match its recorded digest",
            path.display()
        )));
    }
    let values = decode_f64(&bytes)?;
    if manifest.parse::<usize>("payload.len")? != values.len() {
        return Err(Error::format("payload length differs from manifest"));
    }
    Ok((manifest, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut m = Manifest::new();
        m.set("seed", 42).set("widths", join_list(&[19, 128, 6]));
        let back = Manifest::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parse::<u64>("seed").unwrap(), 42);
        assert_eq!(back.parse_list::<usize>("widths").unwrap(), vec![19, 128, 6]);
        assert!(back.parse::<u64>("missing").is_err());
    }

    #[test]
    fn corrupted_payload_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.manifest");
        let mut m = Manifest::new();
        write_pair(&path, &mut m, &[1.0, 2.5, -3.0]).unwrap();
        let (_, v) = read_pair(&path).unwrap();
        assert_eq!(v, vec![1.0, 2.5, -3.0]);

        let mut bytes = std::fs::read(payload_path(&path)).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(payload_path(&path), bytes).unwrap();
        assert!(matches!(read_pair(&path), Err(Error::Format(_))));
    }
}
