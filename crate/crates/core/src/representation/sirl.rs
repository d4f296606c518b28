//! Similarity-query training: triplet loss with each of the two similar
//! trajectories taking the anchor role in turn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{squared_distance, EmbeddingModel, Provenance};
use crate::config::SirlConfig;
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, Matrix, Mlp};
use crate::train::{check_loss, epoch_batches, TrainLog};

/// `max(d(A,P) - d(A,N) + α, 0)` on raw embeddings, with gradients for
/// `(A, P, N)`. The hinge contributes nothing at exactly zero.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> (f64, [Vec<f64>; 3]) {
    let value = squared_distance(a, p) - squared_distance(a, n) + alpha;
    let dim = a.len();
    if value <= 0.0 {
        return (0.0, [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]]);
    }
    let ga = (0..dim).map(|k| 2.0 * (n[k] - p[k])).collect();
    let gp = (0..dim).map(|k| 2.0 * (p[k] - a[k])).collect();
    let gn = (0..dim).map(|k| 2.0 * (a[k] - n[k])).collect();
    (value, [ga, gp, gn])
}

/// Summed similarity loss over a batch of `(P1, P2, N)` embedding rows, and
/// its gradients with respect to each of the three matrices.
pub fn sirl_loss(p1: &Matrix, p2: &Matrix, n: &Matrix, alpha: f64) -> Result<(f64, [Matrix; 3])> {
    if p1.shape() != p2.shape() || p1.shape() != n.shape() {
        return Err(Error::shape("similarity batch rows differ in shape"));
    }
    if p1.rows() == 0 {
        return Err(Error::invalid("empty similarity batch"));
    }
    if alpha < 0.0 {
        return Err(Error::invalid("margin must be non-negative"));
    }
    let (rows, dim) = p1.shape();
    let mut g1 = Matrix::zeros(rows, dim);
    let mut g2 = Matrix::zeros(rows, dim);
    let mut gn = Matrix::zeros(rows, dim);
    let mut total = 0.0;
    for i in 0..rows {
        let (a, b, c) = (p1.row(i), p2.row(i), n.row(i));
        let (l1, [da1, dp1, dn1]) = triplet_loss(a, b, c, alpha);
        let (l2, [da2, dp2, dn2]) = triplet_loss(b, a, c, alpha);
        total += l1 + l2;
        for k in 0..dim {
            g1.row_mut(i)[k] = da1[k] + dp2[k];
            g2.row_mut(i)[k] = dp1[k] + da2[k];
            gn.row_mut(i)[k] = dn1[k] + dn2[k];
        }
    }
    Ok((total, [g1, g2, gn]))
}

/// Loss and parameter gradients of `net` on a batch of pool-index triplets.
pub fn sirl_batch(
    net: &Mlp,
    inputs: &Matrix,
    triplets: &[[usize; 3]],
    alpha: f64,
) -> Result<(f64, Mlp)> {
    let b = triplets.len();
    let mut idx = Vec::with_capacity(3 * b);
    for role in 0..3 {
        idx.extend(triplets.iter().map(|t| t[role]));
    }
    let batch = inputs.select_rows(&idx);
    let trace = net.forward_trace(&batch)?;
    let parts = trace.output().split_rows(&[b, b, b]);
    let (loss, [g1, g2, gn]) = sirl_loss(&parts[0], &parts[1], &parts[2], alpha)?;
    let upstream = Matrix::vstack(&[&g1, &g2, &gn])?;
    let (grads, _) = net.backward(&trace, &upstream)?;
    Ok((loss, grads))
}

/// Summed similarity loss of `net` over all triplets, without gradients.
pub fn sirl_dataset_loss(net: &Mlp, inputs: &Matrix, triplets: &[[usize; 3]], alpha: f64) -> Result<f64> {
    let emb = net.forward(inputs)?;
    let mut total = 0.0;
    for t in triplets {
        let (a, b, c) = (emb.row(t[0]), emb.row(t[1]), emb.row(t[2]));
        total += triplet_loss(a, b, c, alpha).0 + triplet_loss(b, a, c, alpha).0;
    }
    Ok(total)
}

/// Starting point for similarity training.
#[derive(Debug, Clone)]
pub enum Pretrain {
    None,
    /// Warm start from a VAE's mean encoder.
    Vae(EmbeddingModel),
}

/// Trains an embedding on `(P1, P2, N)` pool-index triplets.
pub fn train_sirl(
    env: EnvKind,
    inputs: &Matrix,
    triplets: &[[usize; 3]],
    hidden: usize,
    dim: usize,
    config: &SirlConfig,
    pretrain: Pretrain,
    seed: u64,
) -> Result<(EmbeddingModel, TrainLog)> {
    if triplets.is_empty() {
        return Err(Error::invalid("similarity dataset is empty"));
    }
    if let Some(bad) = triplets.iter().flatten().find(|&&i| i >= inputs.rows()) {
        return Err(Error::invalid(format!("triplet index {bad} outside the pool")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut net, provenance) = match pretrain {
        Pretrain::None => (
            Mlp::init_with_rng(&EmbeddingModel::widths(env, hidden, dim), &mut rng)?,
            Provenance::Sirl,
        ),
        Pretrain::Vae(m) => (m.net, Provenance::SirlVae),
    };
    if net.input_width() != inputs.cols() {
        return Err(Error::shape(format!(
            "embedding expects {} inputs, pool rows have {}",
            net.input_width(),
            inputs.cols()
        )));
    }
    let mut adam = Adam::new(AdamConfig::new(config.lr, config.decay));
    let n = triplets.len() as f64;
    let mut log = TrainLog {
        initial_loss: sirl_dataset_loss(&net, inputs, triplets, config.alpha)? / n,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(triplets.len(), config.batch, &mut rng) {
            let chosen: Vec<[usize; 3]> = batch.iter().map(|&i| triplets[i]).collect();
            let (loss, grads) = sirl_batch(&net, inputs, &chosen, config.alpha)?;
            check_loss(loss, epoch, "similarity")?;
            adam.step(&mut net, &grads)?;
            total += loss;
        }
        log.epoch_losses.push(total / n);
    }
    let mut model = EmbeddingModel::new(net, provenance, Some(env), seed);
    model.budget = triplets.len();
    model.alpha = Some(config.alpha);
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{jitter, max_relative_error, numeric_grad};
    use crate::tensor::Parameters;

    #[test]
    fn triplet_loss_values() {
        // build embeddings with the requested squared distances along one axis
        let a = [0.0];
        let p = [0.1f64.sqrt()];
        let n = [0.5f64.sqrt()];
        assert_eq!(triplet_loss(&a, &p, &n, 0.2).0, 0.0);
        let (l, _) = triplet_loss(&a, &n, &p, 0.2);
        assert!((l - 0.6).abs() < 1e-12);
        let same = [0.4, -0.2];
        assert!((triplet_loss(&same, &same, &same, 0.3).0 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let (l, g) = triplet_loss(&[0.0, 0.0], &[0.1, 0.0], &[3.0, 0.0], 1.0);
        assert_eq!(l, 0.0);
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_pair_doubles_single_hinge() {
        let p = Matrix::from_rows(&[[0.2, 0.1]]).unwrap();
        let n = Matrix::from_rows(&[[0.5, 0.3]]).unwrap();
        let alpha = 0.4;
        let (l, _) = sirl_loss(&p, &p, &n, alpha).unwrap();
        let d = squared_distance(p.row(0), n.row(0));
        assert!((l - 2.0 * (alpha - d).max(0.0)).abs() < 1e-15);
    }

    #[test]
    fn swapping_similar_pair_leaves_loss() {
        let p1 = Matrix::from_rows(&[[0.2, 0.1], [1.0, -1.0]]).unwrap();
        let p2 = Matrix::from_rows(&[[0.3, -0.4], [0.0, 0.5]]).unwrap();
        let n = Matrix::from_rows(&[[0.1, 0.1], [0.9, -0.8]]).unwrap();
        let (a, [ga1, ga2, gan]) = sirl_loss(&p1, &p2, &n, 0.7).unwrap();
        let (b, [gb1, gb2, gbn]) = sirl_loss(&p2, &p1, &n, 0.7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga1, gb2);
        assert_eq!(ga2, gb1);
        assert_eq!(gan, gbn);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let inputs = Matrix::from_rows(
            &(0..6)
                .map(|i| (0..4).map(|j| ((i * 4 + j) as f64 * 0.71).sin()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let triplets = [[0, 1, 2], [3, 4, 5], [5, 0, 3]];
        for seed in 0..5 {
            let mut net = Mlp::init(&[4, 8, 8, 3], seed).unwrap();
            jitter(&mut net, seed, 0.1);
            let (_, g) = sirl_batch(&net, &inputs, &triplets, 2.0).unwrap();
            let num = numeric_grad(&net, |m| sirl_batch(m, &inputs, &triplets, 2.0).unwrap().0);
            let err = max_relative_error(&g.flatten(), &num);
            assert!(err < 1e-4, "seed {seed}: {err:e}");
        }
    }

    #[test]
    fn training_pulls_same_feature_trajectories_together() {
        // three clusters in a 4-d input space; triplets always pair two
        // members of one cluster against a member of another
        let mut rows = Vec::new();
        let centers = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
        for (c, center) in centers.iter().enumerate() {
            for j in 0..5 {
                let jitter = 0.05 * ((c * 5 + j) as f64).sin();
                rows.push(center.map(|x| x + jitter));
            }
        }
        let inputs = Matrix::from_rows(&rows).unwrap();
        let mut triplets = Vec::new();
        for c in 0..3 {
            for j in 0..5 {
                let other = (c + 1 + j % 2) % 3;
                triplets.push([c * 5 + j, c * 5 + (j + 1) % 5, other * 5 + j]);
            }
        }
        let cfg = SirlConfig {
            alpha: 1.0,
            epochs: 150,
            lr: 0.01,
            decay: 1.0,
            batch: 8,
        };
        let env = EnvKind::GridRobot;
        // fixture input width differs from GridRobot's, so warm-start from a
        // matching random net
        let start = EmbeddingModel::new(Mlp::init(&[4, 16, 16, 6], 2).unwrap(), Provenance::Random, None, 2);
        let (model, log) = train_sirl(env, &inputs, &triplets, 16, 6, &cfg, Pretrain::Vae(start.clone()), 1).unwrap();
        assert!(log.final_loss().unwrap() < log.first_epoch().unwrap());
        assert!(log.final_loss().unwrap() < cfg.alpha);
        let emb = model.embed_batch(&inputs).unwrap();
        let d = |i: usize, j: usize| squared_distance(emb.row(i), emb.row(j));
        assert!(d(0, 1) < d(0, 5));
        assert!(d(5, 6) < d(5, 10));
        assert!(d(10, 11) < d(10, 0));

        // identical seeds and data give identical models
        let (again, _) = train_sirl(env, &inputs, &triplets, 16, 6, &cfg, Pretrain::Vae(start), 1).unwrap();
        assert_eq!(again.net, model.net);
    }

    #[test]
    fn empty_dataset_rejected() {
        let inputs = Matrix::zeros(3, 19);
        let cfg = SirlConfig {
            alpha: 1.0,
            epochs: 1,
            lr: 0.01,
            decay: 1.0,
            batch: 8,
        };
        assert!(train_sirl(EnvKind::GridRobot, &inputs, &[], 8, 6, &cfg, Pretrain::None, 0).is_err());
        assert!(train_sirl(EnvKind::GridRobot, &inputs, &[[0, 1, 5]], 8, 6, &cfg, Pretrain::None, 0).is_err());
    }
}
