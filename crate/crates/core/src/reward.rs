//! Bradley-Terry reward models on top of an embedding.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RewardConfig;
use crate::error::{Error, Result};
use crate::oracle::PreferenceLabel;
use crate::representation::EmbeddingModel;
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{Adam, AdamConfig, Matrix, Mlp};
use crate::train::{check_loss, epoch_batches, TrainLog};

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `P(A ≻ B) = e^{ra} / (e^{ra} + e^{rb})`, evaluated as a logistic of the
/// reward difference.
pub fn preference_probability(ra: f64, rb: f64) -> f64 {
    sigmoid(ra - rb)
}

/// Summed cross-entropy of the labels under the Bradley-Terry model plus
/// `l2 · Σ (ra² + rb²)`, with gradients with respect to `ra` and `rb`.
pub fn bradley_terry_loss(ra: &[f64], rb: &[f64], labels: &[u8], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
    assert!(ra.len() == rb.len() && ra.len() == labels.len());
    let mut loss = 0.0;
    let mut ga = Vec::with_capacity(ra.len());
    let mut gb = Vec::with_capacity(ra.len());
    for ((&a, &b), &l) in ra.iter().zip(rb).zip(labels) {
        let diff = a - b;
        let target = f64::from(l);
        // -log σ(d) = softplus(-d), -log(1 - σ(d)) = softplus(d)
        loss += target * softplus(-diff) + (1.0 - target) * softplus(diff);
        loss += l2 * (a * a + b * b);
        let d = sigmoid(diff) - target;
        ga.push(d + 2.0 * l2 * a);
        gb.push(-d + 2.0 * l2 * b);
    }
    (loss, ga, gb)
}

/// `R_θ(φ(ξ))`: a reward head over an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub embedding: EmbeddingModel,
    pub head: Mlp,
    pub frozen: bool,
}

/// Gradients of a reward model; `trunk` is absent when the embedding is frozen.
#[derive(Debug, Clone)]
pub struct RewardGrads {
    pub head: Mlp,
    pub trunk: Option<Mlp>,
}

impl RewardModel {
    pub fn new(embedding: EmbeddingModel, hidden: usize, frozen: bool, seed: u64) -> Result<Self> {
        let head = Mlp::init(&[embedding.dim(), hidden, hidden, 1], seed)?;
        Ok(Self {
            embedding,
            head,
            frozen,
        })
    }

    /// One reward per input row.
    pub fn rewards(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        let e = self.embedding.embed_batch(inputs)?;
        Ok(self.head.forward(&e)?.into_vec())
    }

    pub fn bt_probability(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let x = Matrix::from_rows(&[a, b])?;
        let r = self.rewards(&x)?;
        Ok(preference_probability(r[0], r[1]))
    }

    /// Preference loss over labeled pairs (indices into `inputs`) and its
    /// gradients. Trunk gradients are produced only for unfrozen models.
    pub fn pref_loss(&self, inputs: &Matrix, pairs: &[PreferenceLabel], l2: f64) -> Result<(f64, RewardGrads)> {
        if pairs.is_empty() {
            return Err(Error::invalid("empty preference batch"));
        }
        let b = pairs.len();
        let idx: Vec<usize> = pairs.iter().map(|p| p.a).chain(pairs.iter().map(|p| p.b)).collect();
        let x = inputs.select_rows(&idx);
        let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
        if self.frozen {
            let e = self.embedding.embed_batch(&x)?;
            let (loss, head) = head_loss(&self.head, &e, &labels, l2)?;
            return Ok((loss, RewardGrads { head: head.0, trunk: None }));
        }
        let trunk_trace = self.embedding.net.forward_trace(&x)?;
        let e = trunk_trace.output();
        let head_trace = self.head.forward_trace(e)?;
        let r = head_trace.output().data();
        let (loss, ga, gb) = bradley_terry_loss(&r[..b], &r[b..], &labels, l2);
        let up = Matrix::from_vec(2 * b, 1, [ga, gb].concat())?;
        let (head_grads, de) = self.head.backward(&head_trace, &up)?;
        let (trunk_grads, _) = self.embedding.net.backward(&trunk_trace, &de)?;
        Ok((
            loss,
            RewardGrads {
                head: head_grads,
                trunk: Some(trunk_grads),
            },
        ))
    }

    /// Fraction of pairs whose label matches `R(a) >= R(b)`.
    pub fn accuracy(&self, inputs: &Matrix, pairs: &[PreferenceLabel]) -> Result<f64> {
        let r = self.rewards(inputs)?;
        Ok(pair_accuracy(&r, pairs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ckpt = self.embedding.checkpoint();
        ckpt.meta.set("frozen", self.frozen);
        ckpt.with_net("head", self.head.clone()).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        Ok(Self {
            embedding: EmbeddingModel::from_checkpoint(&ckpt)?,
            head: ckpt.net("head")?.clone(),
            frozen: ckpt.meta.parse("frozen")?,
        })
    }
}

/// Accuracy of precomputed per-trajectory rewards on labeled pairs.
pub fn pair_accuracy(rewards: &[f64], pairs: &[PreferenceLabel]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|p| u8::from(rewards[p.a] >= rewards[p.b]) == p.label)
        .count();
    correct as f64 / pairs.len() as f64
}

/// Head-only loss on embeddings stacked `[A rows; B rows]`.
fn head_loss(head: &Mlp, e: &Matrix, labels: &[u8], l2: f64) -> Result<(f64, (Mlp, Matrix))> {
    let b = labels.len();
    let trace = head.forward_trace(e)?;
    let r = trace.output().data();
    let (loss, ga, gb) = bradley_terry_loss(&r[..b], &r[b..], labels, l2);
    let up = Matrix::from_vec(2 * b, 1, [ga, gb].concat())?;
    Ok((loss, head.backward(&trace, &up)?))
}

/// Trains a reward head (and, unless `frozen`, the embedding) on labeled
/// pairs whose indices point into `inputs`.
pub fn train_reward(
    embedding: &EmbeddingModel,
    inputs: &Matrix,
    pairs: &[PreferenceLabel],
    config: &RewardConfig,
    frozen: bool,
    seed: u64,
) -> Result<(RewardModel, TrainLog)> {
    if pairs.is_empty() {
        return Err(Error::invalid("preference training set is empty"));
    }
    for p in pairs {
        p.validate()?;
        if p.a >= inputs.rows() || p.b >= inputs.rows() {
            return Err(Error::invalid("preference pair outside the pool"));
        }
    }
    let mut model = RewardModel::new(embedding.clone(), config.hidden, frozen, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a11);
    let mut adam = Adam::new(AdamConfig::new(config.lr, 1.0));
    let n = pairs.len() as f64;

    // a frozen embedding is evaluated once for the whole pool
    let cached = if frozen {
        Some(embedding.embed_batch(inputs)?)
    } else {
        None
    };
    let batch_loss = |model: &RewardModel, chosen: &[PreferenceLabel]| -> Result<(f64, RewardGrads)> {
        match &cached {
            Some(emb) => {
                let idx: Vec<usize> = chosen.iter().map(|p| p.a).chain(chosen.iter().map(|p| p.b)).collect();
                let labels: Vec<u8> = chosen.iter().map(|p| p.label).collect();
                let (loss, (head, _)) = head_loss(&model.head, &emb.select_rows(&idx), &labels, config.reward_l2)?;
                Ok((loss, RewardGrads { head, trunk: None }))
            }
            None => model.pref_loss(inputs, chosen, config.reward_l2),
        }
    };

    let mut log = TrainLog {
        initial_loss: batch_loss(&model, pairs)?.0 / n,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(pairs.len(), config.batch, &mut rng) {
            let chosen: Vec<PreferenceLabel> = batch.iter().map(|&i| pairs[i].clone()).collect();
            let (loss, grads) = batch_loss(&model, &chosen)?;
            check_loss(loss, epoch, "preference")?;
            match grads.trunk {
                Some(trunk) => {
                    let mut params = (std::mem::take(&mut model.embedding.net), std::mem::take(&mut model.head));
                    let res = adam.step(&mut params, &(trunk, grads.head));
                    model.embedding.net = params.0;
                    model.head = params.1;
                    res?;
                }
                None => adam.step(&mut model.head, &grads.head)?,
            }
            total += loss;
        }
        log.epoch_losses.push(total / n);
    }
    Ok((model, log))
}

/// Pool indices sorted by descending reward; equal rewards keep pool order.
pub fn rank_trajectories(model: &RewardModel, inputs: &Matrix) -> Result<Vec<usize>> {
    if inputs.rows() == 0 {
        return Err(Error::invalid("cannot rank an empty pool"));
    }
    Ok(rank_by_reward(&model.rewards(inputs)?))
}

pub fn rank_by_reward(rewards: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&i, &j| rewards[j].total_cmp(&rewards[i]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{max_relative_error, numeric_grad};
    use crate::tensor::Parameters;
    use proptest::prelude::{prop_assert, proptest};

    fn label(a: usize, b: usize, label: u8) -> PreferenceLabel {
        PreferenceLabel {
            query_id: 0,
            a,
            b,
            label,
            responder: String::new(),
            response_ms: None,
        }
    }

    fn pool() -> Matrix {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0, (i % 3) as f64 - 1.0, 0.3]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        Matrix::from_rows(&refs).unwrap()
    }

    fn pairs() -> Vec<PreferenceLabel> {
        vec![label(0, 1, 1), label(2, 5, 0), label(7, 3, 1), label(4, 6, 0), label(1, 7, 1)]
    }

    #[test]
    fn reward_gap_of_ln3_gives_three_quarters() {
        assert!((preference_probability(3f64.ln(), 0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn extreme_gaps_stay_finite() {
        let (loss, ga, _) = bradley_terry_loss(&[800.0], &[-800.0], &[0], 0.0);
        assert!((loss - 1600.0).abs() < 1e-9);
        assert!((ga[0] - 1.0).abs() < 1e-15);
        assert_eq!(preference_probability(-1000.0, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn probabilities_are_complementary(a in -50.0..50.0f64, b in -50.0..50.0f64) {
            let s = preference_probability(a, b) + preference_probability(b, a);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn relabeling_swapped_pairs_keeps_the_loss(a in -5.0..5.0f64, b in -5.0..5.0f64, l in 0u8..2, l2 in 0.0..2.0f64) {
            let (x, _, _) = bradley_terry_loss(&[a], &[b], &[l], l2);
            let (y, _, _) = bradley_terry_loss(&[b], &[a], &[1 - l], l2);
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    fn model(frozen: bool) -> RewardModel {
        let embedding = EmbeddingModel::new(Mlp::init(&[3, 6, 6, 4], 1).unwrap(), crate::representation::Provenance::Random, None, 1);
        RewardModel::new(embedding, 5, frozen, 2).unwrap()
    }

    #[test]
    fn unfrozen_gradient_matches_finite_differences() {
        let m = model(false);
        let (x, p) = (pool(), pairs());
        let (_, g) = m.pref_loss(&x, &p, 0.7).unwrap();
        let params = (m.embedding.net.clone(), m.head.clone());
        let numeric = numeric_grad(&params, |q| {
            let mut mm = m.clone();
            mm.embedding.net = q.0.clone();
            mm.head = q.1.clone();
            mm.pref_loss(&x, &p, 0.7).unwrap().0
        });
        let analytic = (g.trunk.unwrap(), g.head).flatten();
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn frozen_model_only_reports_head_gradients() {
        let m = model(true);
        let (_, g) = m.pref_loss(&pool(), &pairs(), 0.7).unwrap();
        assert!(g.trunk.is_none());
        let (_, unfrozen) = model(false).pref_loss(&pool(), &pairs(), 0.7).unwrap();
        assert_eq!(g.head, unfrozen.head);
    }

    fn config(epochs: usize) -> RewardConfig {
        RewardConfig {
            epochs,
            lr: 0.01,
            batch: 4,
            reward_l2: 0.01,
            hidden: 8,
        }
    }

    #[test]
    fn frozen_training_leaves_the_embedding_untouched() {
        let m = model(true);
        let (trained, _) = train_reward(&m.embedding, &pool(), &pairs(), &config(20), true, 3).unwrap();
        let before = crate::manifest::sha256_hex(&crate::manifest::encode_f64(&m.embedding.net.flatten()));
        let after = crate::manifest::sha256_hex(&crate::manifest::encode_f64(&trained.embedding.net.flatten()));
        assert_eq!(before, after);
        let (unfrozen, _) = train_reward(&m.embedding, &pool(), &pairs(), &config(20), false, 3).unwrap();
        assert_ne!(unfrozen.embedding.net, m.embedding.net);
    }

    #[test]
    fn training_is_deterministic() {
        let m = model(false);
        let a = train_reward(&m.embedding, &pool(), &pairs(), &config(5), false, 9).unwrap();
        let b = train_reward(&m.embedding, &pool(), &pairs(), &config(5), false, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn fixture_embedding_fits_a_linear_reward() {
        // identity embedding over raw features; preferences from a fixed linear reward
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin(), (t * 0.91).cos(), (t * 0.13).sin() * 0.5]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let x = Matrix::from_rows(&refs).unwrap();
        let truth = |r: &[f64]| 0.8 * r[0] - 0.5 * r[1] + 0.3 * r[2];
        let mut labeled = Vec::new();
        for a in 0..40 {
            for b in (a + 1..40).step_by(3) {
                labeled.push(label(a, b, u8::from(truth(&rows[a]) >= truth(&rows[b]))));
            }
        }
        let embedding = EmbeddingModel::identity(3);
        let cfg = RewardConfig {
            epochs: 60,
            lr: 0.01,
            batch: 32,
            reward_l2: 0.001,
            hidden: 16,
        };
        let (m, log) = train_reward(&embedding, &x, &labeled, &cfg, true, 4).unwrap();
        assert!(m.accuracy(&x, &labeled).unwrap() > 0.95);
        assert!(log.final_loss().unwrap() < log.initial_loss);
    }

    #[test]
    fn ranking_is_descending_and_stable() {
        assert_eq!(rank_by_reward(&[0.1, 0.5, 0.1, 0.9]), vec![3, 1, 0, 2]);
        let m = model(true);
        let order = rank_trajectories(&m, &pool()).unwrap();
        let r = m.rewards(&pool()).unwrap();
        assert!(order.windows(2).all(|w| r[w[0]] >= r[w[1]]));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reward.ckpt");
        let m = model(false);
        m.save(&path).unwrap();
        let back = RewardModel::load(&path).unwrap();
        assert_eq!(back.head, m.head);
        assert_eq!(back.frozen, m.frozen);
        assert_eq!(back.rewards(&pool()).unwrap(), m.rewards(&pool()).unwrap());
    }

    #[test]
    fn out_of_pool_pairs_are_rejected() {
        let m = model(true);
        assert!(train_reward(&m.embedding, &pool(), &[label(0, 99, 1)], &config(1), true, 0).is_err());
        assert!(train_reward(&m.embedding, &pool(), &[], &config(1), true, 0).is_err());
    }
}
