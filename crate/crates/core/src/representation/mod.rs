//! Trajectory embeddings `φ: Ξ → R^d` and the methods that train them.

pub mod pref;
pub mod sirl;
pub mod vae;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Dense, Matrix, Mlp};

pub use pref::{train_pref_representation, PrefMode, PrefRepresentation};
pub use sirl::{sirl_loss, train_sirl, triplet_loss, Pretrain};
pub use vae::{train_vae, Vae};

/// How an embedding was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Sirl,
    SirlVae,
    Vae,
    SinglePref,
    MultiPref(usize),
    Random,
    /// Hand-built embedding used by tests and sanity checks.
    Fixture,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Sirl => f.write_str("sirl"),
            Provenance::SirlVae => f.write_str("sirl+vae"),
            Provenance::Vae => f.write_str("vae"),
            Provenance::SinglePref => f.write_str("singlepref"),
            Provenance::MultiPref(k) => write!(f, "multipref-{k}"),
            Provenance::Random => f.write_str("random"),
            Provenance::Fixture => f.write_str("fixture"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "sirl" => Provenance::Sirl,
            "sirl+vae" | "sirl-vae" => Provenance::SirlVae,
            "vae" => Provenance::Vae,
            "singlepref" => Provenance::SinglePref,
            "random" => Provenance::Random,
            "fixture" => Provenance::Fixture,
            other => match other.strip_prefix("multipref-").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Provenance::MultiPref(k),
                _ => return Err(Error::invalid(format!("unknown method `{s}`"))),
            },
        })
    }
}

/// A trained (or random) embedding network with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub net: Mlp,
    pub provenance: Provenance,
    pub env: Option<EnvKind>,
    pub seed: u64,
    /// Number of human queries spent on it.
    pub budget: usize,
    /// Triplet margin, for similarity-trained embeddings.
    pub alpha: Option<f64>,
}

impl EmbeddingModel {
    pub fn new(net: Mlp, provenance: Provenance, env: Option<EnvKind>, seed: u64) -> Self {
        Self {
            net,
            provenance,
            env,
            seed,
            budget: 0,
            alpha: None,
        }
    }

    /// Architecture `input -> hidden -> hidden -> dim` for `env`.
    pub fn widths(env: EnvKind, hidden: usize, dim: usize) -> [usize; 4] {
        [env.input_width(), hidden, hidden, dim]
    }

    /// Untrained Glorot-initialized embedding.
    pub fn random(env: EnvKind, hidden: usize, dim: usize, seed: u64) -> Result<Self> {
        let net = Mlp::init(&Self::widths(env, hidden, dim), seed)?;
        Ok(Self::new(net, Provenance::Random, Some(env), seed))
    }

    /// Single linear identity layer: the input *is* the embedding.
    pub fn identity(dim: usize) -> Self {
        let net = Mlp::from_layers(vec![Dense {
            weight: Matrix::identity(dim),
            bias: vec![0.0; dim],
        }])
        .expect("square layer");
        Self::new(net, Provenance::Fixture, None, 0)
    }

    pub fn dim(&self) -> usize {
        self.net.output_width()
    }

    pub fn input_width(&self) -> usize {
        self.net.input_width()
    }

    /// Embeds every row of `inputs`.
    pub fn embed_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        self.net.forward(inputs)
    }

    pub fn embed(&self, input: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.net.forward(&m)?.into_vec())
    }

    /// Squared L2 distance between two embeddings.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let ea = self.embed(a)?;
        let eb = self.embed(b)?;
        Ok(squared_distance(&ea, &eb))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut meta = Manifest::new();
        meta.set("method", self.provenance)
            .set("seed", self.seed)
            .set("n", self.budget)
            .set("pretrain", matches!(self.provenance, Provenance::SirlVae));
        if let Some(env) = self.env {
            meta.set("env", env);
        }
        if let Some(a) = self.alpha {
            meta.set("alpha", a);
        }
        Checkpoint::new(meta).with_net("embedding", self.net.clone())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let m = &ckpt.meta;
        Ok(Self {
            net: ckpt.net("embedding")?.clone(),
            provenance: m.require("method")?.parse()?,
            env: m.get("env").map(str::parse).transpose()?,
            seed: m.parse("seed")?,
            budget: m.parse("n")?,
            alpha: m.get("alpha").map(|_| m.parse("alpha")).transpose()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_embeds_to_zero() {
        let mut m = EmbeddingModel::random(EnvKind::GridRobot, 8, 6, 0).unwrap();
        m.net = Mlp::zeros(&m.net.widths()).unwrap();
        assert!(m.embed(&[1.0; 19]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_and_single_embeddings_agree_bitwise() {
        let m = EmbeddingModel::random(EnvKind::GridRobot, 16, 6, 3).unwrap();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..19).map(|j| ((i * 19 + j) as f64 * 0.13).sin()).collect())
            .collect();
        let batch = m.embed_batch(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(batch.row(i), m.embed(r).unwrap().as_slice());
        }
    }

    #[test]
    fn distance_properties() {
        let m = EmbeddingModel::random(EnvKind::GridRobot, 16, 6, 1).unwrap();
        let a: Vec<f64> = (0..19).map(|j| j as f64 * 0.2).collect();
        let b: Vec<f64> = (0..19).map(|j| (j as f64).cos()).collect();
        assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
        assert_eq!(m.distance(&a, &b).unwrap(), m.distance(&b, &a).unwrap());
        // recomputed from raw embeddings outside the model
        let ea = m.embed(&a).unwrap();
        let eb = m.embed(&b).unwrap();
        let mut manual = 0.0;
        for k in 0..6 {
            manual += (ea[k] - eb[k]).powi(2);
        }
        assert!((m.distance(&a, &b).unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn random_embedding_is_seeded_and_nonzero() {
        let a = EmbeddingModel::random(EnvKind::GridRobot, 16, 6, 5).unwrap();
        let b = EmbeddingModel::random(EnvKind::GridRobot, 16, 6, 5).unwrap();
        assert_eq!(a, b);
        let e = a.embed(&[0.7; 19]).unwrap();
        assert!(e.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rep.ckpt");
        let mut m = EmbeddingModel::random(EnvKind::GridRobot, 16, 6, 5).unwrap();
        m.provenance = Provenance::MultiPref(10);
        m.budget = 100;
        m.alpha = Some(1.0);
        m.save(&path).unwrap();
        let back = EmbeddingModel::load(&path).unwrap();
        assert_eq!(back, m);
        let x = [0.3; 19];
        assert_eq!(back.embed(&x).unwrap(), m.embed(&x).unwrap());
    }

    #[test]
    fn provenance_names_round_trip() {
        for p in [
            Provenance::Sirl,
            Provenance::SirlVae,
            Provenance::Vae,
            Provenance::SinglePref,
            Provenance::MultiPref(50),
            Provenance::Random,
        ] {
            assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        }
        assert!("multipref-0".parse::<Provenance>().is_err());
        assert!("bogus".parse::<Provenance>().is_err());
    }
}
