//! Named MLP bundles persisted as a text manifest plus a flat `f64` payload.
//!
//! The manifest lists every network's layer widths under `net.<name>` and the
//! network order under `nets`; the payload holds each network's layers in
//! order, weight (row-major, `in x out`) then bias.

use std::path::Path;

use super::{Dense, Matrix, Mlp};
use crate::error::{Error, Result};
use crate::manifest::{join_list, read_pair, write_pair, Manifest};

pub const FORMAT: &str = "sirl-checkpoint/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Manifest,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new(meta: Manifest) -> Self {
        Self {
            meta,
            nets: Vec::new(),
        }
    }

    pub fn with_net(mut self, name: &str, net: Mlp) -> Self {
        self.nets.push((name.to_owned(), net));
        self
    }

    pub fn net(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::format(format!("checkpoint has no network `{name}`")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut manifest = self.meta.clone();
        manifest.set("format", FORMAT);
        let names: Vec<&str> = self.nets.iter().map(|(n, _)| n.as_str()).collect();
        manifest.set("nets", names.join(","));
        let mut payload = Vec::new();
        for (name, net) in &self.nets {
            manifest.set(&format!("net.{name}"), join_list(&net.widths()));
            for layer in net.layers() {
                payload.extend_from_slice(layer.weight.data());
                payload.extend_from_slice(&layer.bias);
            }
        }
        write_pair(path, &mut manifest, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, payload) = read_pair(path)?;
        if meta.require("format")? != FORMAT {
            return Err(Error::format(format!(
                "{} is not a {FORMAT} checkpoint",
                path.display()
            )));
        }
        let names: Vec<String> = meta.parse_list("nets")?;
        let mut offset = 0;
        let mut nets = Vec::with_capacity(names.len());
        for name in names {
            let widths: Vec<usize> = meta.parse_list(&format!("net.{name}"))?;
            if widths.len() < 2 {
                return Err(Error::format(format!("network `{name}` has no layers")));
            }
            let mut layers = Vec::with_capacity(widths.len() - 1);
            for w in widths.windows(2) {
                let (fan_in, fan_out) = (w[0], w[1]);
                let need = fan_in * fan_out + fan_out;
                let chunk = payload
                    .get(offset..offset + need)
                    .ok_or_else(|| Error::format("checkpoint payload is truncated"))?;
                let weight = Matrix::from_vec(fan_in, fan_out, chunk[..fan_in * fan_out].to_vec())?;
                let bias = chunk[fan_in * fan_out..].to_vec();
                layers.push(Dense { weight, bias });
                offset += need;
            }
            nets.push((name, Mlp::from_layers(layers)?));
        }
        if offset != payload.len() {
            return Err(Error::format("checkpoint payload has trailing values"));
        }
        Ok(Self { meta, nets })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut meta = Manifest::new();
        meta.set("seed", 9);
        let ckpt = Checkpoint::new(meta)
            .with_net("trunk", Mlp::init(&[5, 7, 3], 1).unwrap())
            .with_net("head", Mlp::init(&[3, 4, 1], 2).unwrap());
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.nets, ckpt.nets);
        assert_eq!(back.meta.get("seed"), Some("9"));
        assert_eq!(back.meta.get("format"), Some(FORMAT));
    }

    #[test]
    fn missing_net_is_an_error() {
        let ckpt = Checkpoint::new(Manifest::new());
        assert!(ckpt.net("trunk").is_err());
    }
}
