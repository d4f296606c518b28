//! Embeddings learned implicitly as the shared trunk of one or more
//! preference-trained reward heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingModel, Provenance};
use crate::config::PrefRepConfig;
use crate::env::{EnvKind, FeatureVector};
use crate::error::{Error, Result};
use crate::oracle::{answer_preference, equal_weight_reward, sample_preference_queries, sample_rewards, GroundTruthReward, PreferenceLabel};
use crate::reward::bradley_terry_loss;
use crate::tensor::{Adam, AdamConfig, Dense, Matrix, Mlp};
use crate::train::{check_loss, derive_seed, epoch_batches, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefMode {
    /// One head answered by the equal-weight user.
    Single,
    /// `k` heads, each answered by its own sampled reward.
    Multi(usize),
}

impl PrefMode {
    pub fn heads(self) -> usize {
        match self {
            PrefMode::Single => 1,
            PrefMode::Multi(k) => k,
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            PrefMode::Single => Provenance::SinglePref,
            PrefMode::Multi(k) => Provenance::MultiPref(k),
        }
    }

    /// The ground-truth rewards answering each head.
    pub fn rewards(self, seed: u64) -> Result<Vec<GroundTruthReward>> {
        match self {
            PrefMode::Single => Ok(vec![equal_weight_reward()]),
            PrefMode::Multi(0) => Err(Error::invalid("MultiPref needs at least one head")),
            PrefMode::Multi(k) => sample_rewards(k, derive_seed(seed, "multipref-rewards")),
        }
    }
}

/// A labeled pair assigned to one reward head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLabel {
    pub head: usize,
    pub label: PreferenceLabel,
}

/// Draws `n` random pairs and hands query `i` to head `i mod k`, labeled by
/// that head's reward.
pub fn allocate_queries(features: &[FeatureVector], mode: PrefMode, n: usize, seed: u64) -> Result<Vec<HeadLabel>> {
    let k = mode.heads();
    if k > n {
        return Err(Error::invalid(format!("{k} heads cannot share {n} queries")));
    }
    let rewards = mode.rewards(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "multipref-queries"));
    let queries = sample_preference_queries(features.len(), n, &mut rng)?;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let head = i % k;
            HeadLabel {
                head,
                label: PreferenceLabel {
                    query_id: q.id,
                    a: q.a,
                    b: q.b,
                    label: answer_preference(&rewards[head], &features[q.a], &features[q.b]),
                    responder: format!("head-{head}"),
                    response_ms: None,
                },
            }
        })
        .collect())
}

/// Summed preference loss of trunk + linear heads on a batch, with gradients.
pub fn multi_head_loss(
    trunk: &Mlp,
    heads: &[Mlp],
    inputs: &Matrix,
    batch: &[HeadLabel],
    l2: f64,
) -> Result<(f64, (Mlp, Vec<Mlp>))> {
    if batch.is_empty() {
        return Err(Error::invalid("empty preference batch"));
    }
    let b = batch.len();
    let idx: Vec<usize> = batch.iter().map(|h| h.label.a).chain(batch.iter().map(|h| h.label.b)).collect();
    let trace = trunk.forward_trace(&inputs.select_rows(&idx))?;
    let e = trace.output();
    let dim = e.cols();
    let head_of = |row: usize| &heads[batch[row % b].head].layers()[0];
    let r: Vec<f64> = (0..2 * b)
        .map(|row| {
            let layer = head_of(row);
            let w = layer.weight.data();
            e.row(row).iter().zip(w).map(|(x, w)| x * w).sum::<f64>() + layer.bias[0]
        })
        .collect();
    let labels: Vec<u8> = batch.iter().map(|h| h.label.label).collect();
    let (loss, ga, gb) = bradley_terry_loss(&r[..b], &r[b..], &labels, l2);

    let mut head_grads: Vec<Mlp> = heads.iter().map(Mlp::zeros_like).collect();
    let mut de = Matrix::zeros(2 * b, dim);
    for row in 0..2 * b {
        let g = if row < b { ga[row] } else { gb[row - b] };
        let h = batch[row % b].head;
        let w = heads[h].layers()[0].weight.data();
        for (d, &wk) in de.row_mut(row).iter_mut().zip(w) {
            *d = g * wk;
        }
        let grad = &mut head_grads[h].layers_mut()[0];
        for (gw, &x) in grad.weight.data_mut().iter_mut().zip(e.row(row)) {
            *gw += g * x;
        }
        grad.bias[0] += g;
    }
    let (trunk_grads, _) = trunk.backward(&trace, &de)?;
    Ok((loss, (trunk_grads, head_grads)))
}

/// Result of preference pretraining; `heads` are kept for inspection.
#[derive(Debug, Clone)]
pub struct PrefRepresentation {
    pub embedding: EmbeddingModel,
    pub heads: Vec<Mlp>,
    pub log: TrainLog,
}

/// Trains the shared trunk and its `k` heads on `n` allocated queries.
#[allow(clippy::too_many_arguments)]
pub fn train_pref_representation(
    env: EnvKind,
    inputs: &Matrix,
    features: &[FeatureVector],
    mode: PrefMode,
    n: usize,
    hidden: usize,
    dim: usize,
    config: &PrefRepConfig,
    seed: u64,
) -> Result<PrefRepresentation> {
    let widths = EmbeddingModel::widths(env, hidden, dim);
    let mut rep = fit(&widths, inputs, features, mode, n, config, seed)?;
    rep.embedding.env = Some(env);
    Ok(rep)
}

fn fit(
    widths: &[usize],
    inputs: &Matrix,
    features: &[FeatureVector],
    mode: PrefMode,
    n: usize,
    config: &PrefRepConfig,
    seed: u64,
) -> Result<PrefRepresentation> {
    if features.len() != inputs.rows() {
        return Err(Error::shape("features and inputs describe different pools"));
    }
    if widths[0] != inputs.cols() {
        return Err(Error::shape(format!(
            "trunk expects {} inputs, pool rows have {}",
            widths[0],
            inputs.cols()
        )));
    }
    let dim = *widths.last().expect("nonempty widths");
    let labeled = allocate_queries(features, mode, n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trunk = Mlp::init_with_rng(widths, &mut rng)?;
    let heads = (0..mode.heads())
        .map(|_| Mlp::from_layers(vec![Dense::glorot(dim, 1, &mut rng)]))
        .collect::<Result<Vec<_>>>()?;
    let mut params = (trunk, heads);
    let mut adam = Adam::new(AdamConfig::new(config.lr, 1.0));
    let total = labeled.len() as f64;
    let mut log = TrainLog {
        initial_loss: multi_head_loss(&params.0, &params.1, inputs, &labeled, config.reward_l2)?.0 / total,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for batch in epoch_batches(labeled.len(), config.batch, &mut rng) {
            let chosen: Vec<HeadLabel> = batch.iter().map(|&i| labeled[i].clone()).collect();
            let (loss, grads) = multi_head_loss(&params.0, &params.1, inputs, &chosen, config.reward_l2)?;
            check_loss(loss, epoch, "preference pretraining")?;
            adam.step(&mut params, &grads)?;
            sum += loss;
        }
        log.epoch_losses.push(sum / total);
    }
    let (trunk, heads) = params;
    let mut embedding = EmbeddingModel::new(trunk, mode.provenance(), None, seed);
    embedding.budget = n;
    Ok(PrefRepresentation { embedding, heads, log })
}

/// Training accuracy of each labeled pair under its own head.
pub fn head_accuracy(rep: &PrefRepresentation, inputs: &Matrix, labeled: &[HeadLabel]) -> Result<f64> {
    if labeled.is_empty() {
        return Ok(0.0);
    }
    let e = rep.embedding.embed_batch(inputs)?;
    let mut correct = 0;
    for h in labeled {
        let head = &rep.heads[h.head];
        let ra = head.forward(&e.select_rows(&[h.label.a]))?.data()[0];
        let rb = head.forward(&e.select_rows(&[h.label.b]))?.data()[0];
        if u8::from(ra >= rb) == h.label.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labeled.len() as f64)
}
