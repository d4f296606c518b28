//! Simulated labelers answering from ground-truth features, plus the shared
//! line-delimited JSON record format for queries and answers.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityQuery {
    pub id: u64,
    /// Pool indices of the three trajectories shown.
    pub trajectories: [usize; 3],
}

impl SimilarityQuery {
    pub fn new(id: u64, trajectories: [usize; 3]) -> Result<Self> {
        let [a, b, c] = trajectories;
        if a == b || a == c || b == c {
            return Err(Error::invalid(format!("query {id} repeats a trajectory")));
        }
        Ok(Self { id, trajectories })
    }
}

/// The labeler's most-similar pair `(p1, p2)`; `odd` is the remaining one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityAnswer {
    pub query_id: u64,
    pub p1: usize,
    pub p2: usize,
    pub odd: usize,
    pub responder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_ms: Option<u64>,
}

impl SimilarityAnswer {
    /// Builds the answer for `query` where the chosen pair is `(p1, p2)`.
    pub fn from_choice(query: &SimilarityQuery, p1: usize, p2: usize, responder: &str) -> Result<Self> {
        let t = query.trajectories;
        if p1 == p2 || !t.contains(&p1) || !t.contains(&p2) {
            return Err(Error::invalid(format!(
                "({p1}, {p2}) is not a pair from query {}",
                query.id
            )));
        }
        let odd = *t.iter().find(|&&x| x != p1 && x != p2).expect("three distinct ids");
        Ok(Self {
            query_id: query.id,
            p1,
            p2,
            odd,
            responder: responder.to_owned(),
            response_ms: None,
        })
    }

    pub fn triplet(&self) -> [usize; 3] {
        [self.p1, self.p2, self.odd]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceQuery {
    pub id: u64,
    pub a: usize,
    pub b: usize,
}

/// `label == 1` means trajectory `a` is preferred to `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceLabel {
    pub query_id: u64,
    pub a: usize,
    pub b: usize,
    pub label: u8,
    #[serde(default)]
    pub responder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_ms: Option<u64>,
}

impl PreferenceLabel {
    pub fn prefers_a(&self) -> bool {
        self.label == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::format(format!("preference label {} is not 0/1", self.label)));
        }
        if self.a == self.b {
            return Err(Error::format("preference pair compares a trajectory with itself"));
        }
        Ok(())
    }
}

/// Linear reward over normalized features, unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReward {
    pub weights: FeatureVector,
}

impl GroundTruthReward {
    pub fn new(weights: FeatureVector) -> Result<Self> {
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("reward weights need a finite nonzero norm"));
        }
        Ok(Self {
            weights: weights.map(|w| w / norm),
        })
    }

    pub fn value(&self, features: &FeatureVector) -> f64 {
        self.weights.iter().zip(features).map(|(w, f)| w * f).sum()
    }
}

/// Picks the pair closest in feature space; ties go to the earliest pair in
/// the order (1,2), (1,3), (2,3).
pub fn answer_similarity(
    query: &SimilarityQuery,
    features: [&FeatureVector; 3],
    responder: &str,
) -> SimilarityAnswer {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    let dist = |i: usize, j: usize| -> f64 {
        (0..NUM_FEATURES)
            .map(|k| (features[i][k] - features[j][k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut best = PAIRS[0];
    let mut best_d = dist(best.0, best.1);
    for &(i, j) in &PAIRS[1..] {
        let d = dist(i, j);
        if d < best_d {
            best = (i, j);
            best_d = d;
        }
    }
    let t = query.trajectories;
    SimilarityAnswer::from_choice(query, t[best.0], t[best.1], responder)
        .expect("pair drawn from the query")
}

/// Deterministic preference: `a` wins when its reward is at least `b`'s.
pub fn answer_preference(reward: &GroundTruthReward, fa: &FeatureVector, fb: &FeatureVector) -> u8 {
    u8::from(reward.value(fa) >= reward.value(fb))
}

/// Preference oracle with optional Boltzmann noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceOracle {
    pub reward: GroundTruthReward,
    /// `None` answers deterministically; `Some(t)` labels `a` with probability
    /// `sigmoid((R(a) - R(b)) / t)`.
    pub temperature: Option<f64>,
}

impl PreferenceOracle {
    pub fn deterministic(reward: GroundTruthReward) -> Self {
        Self {
            reward,
            temperature: None,
        }
    }

    pub fn label<R: Rng + ?Sized>(&self, fa: &FeatureVector, fb: &FeatureVector, rng: &mut R) -> u8 {
        match self.temperature {
            None => answer_preference(&self.reward, fa, fb),
            Some(t) => {
                let diff = (self.reward.value(fa) - self.reward.value(fb)) / t;
                let p = 1.0 / (1.0 + (-diff).exp());
                u8::from(rng.gen::<f64>() < p)
            }
        }
    }
}

/// Weights uniform on `[-1, 1]^4`, then normalized.
pub fn sample_rewards(count: usize, seed: u64) -> Result<Vec<GroundTruthReward>> {
    if count == 0 {
        return Err(Error::invalid("reward count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w: FeatureVector = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        // the zero vector has probability zero, but skip it rather than fail
        if let Ok(r) = GroundTruthReward::new(w) {
            out.push(r);
        }
    }
    Ok(out)
}

/// The user who weighs every feature equally and treats them as costs.
pub fn equal_weight_reward() -> GroundTruthReward {
    GroundTruthReward {
        weights: [-0.5; NUM_FEATURES],
    }
}

/// Random triplets of distinct pool indices.
pub fn sample_similarity_queries<R: Rng + ?Sized>(
    pool_len: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SimilarityQuery>> {
    if pool_len < 3 {
        return Err(Error::invalid("similarity queries need at least three trajectories"));
    }
    (0..count)
        .map(|id| {
            let idx = sample(rng, pool_len, 3);
            SimilarityQuery::new(id as u64, [idx.index(0), idx.index(1), idx.index(2)])
        })
        .collect()
}

/// Random pairs of distinct pool indices.
pub fn sample_preference_queries<R: Rng + ?Sized>(
    pool_len: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PreferenceQuery>> {
    if pool_len < 2 {
        return Err(Error::invalid("preference queries need at least two trajectories"));
    }
    Ok((0..count)
        .map(|id| {
            let idx = sample(rng, pool_len, 2);
            PreferenceQuery {
                id: id as u64,
                a: idx.index(0),
                b: idx.index(1),
            }
        })
        .collect())
}

/// `count` similarity answers from the feature-space oracle.
pub fn simulate_similarity(
    features: &[FeatureVector],
    count: usize,
    seed: u64,
    responder: &str,
) -> Result<Vec<SimilarityAnswer>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = sample_similarity_queries(features.len(), count, &mut rng)?;
    Ok(queries
        .iter()
        .map(|q| {
            let [a, b, c] = q.trajectories;
            answer_similarity(q, [&features[a], &features[b], &features[c]], responder)
        })
        .collect())
}

/// `count` preference labels from `oracle`.
pub fn simulate_preferences(
    features: &[FeatureVector],
    oracle: &PreferenceOracle,
    count: usize,
    seed: u64,
    responder: &str,
) -> Result<Vec<PreferenceLabel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = sample_preference_queries(features.len(), count, &mut rng)?;
    Ok(queries
        .iter()
        .map(|q| PreferenceLabel {
            query_id: q.id,
            a: q.a,
            b: q.b,
            label: oracle.label(&features[q.a], &features[q.b], &mut rng),
            responder: responder.to_owned(),
            response_ms: None,
        })
        .collect())
}

/// One line of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    SimilarityQuery(SimilarityQuery),
    SimilarityAnswer(SimilarityAnswer),
    PreferenceQuery(PreferenceQuery),
    PreferenceLabel(PreferenceLabel),
}

pub fn write_records<W: Write>(mut out: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("record line {}: {e}", n + 1)))?;
        if let Record::PreferenceLabel(p) = &record {
            p.validate()?;
        }
        out.push(record);
    }
    Ok(out)
}

pub fn similarity_answers(records: &[Record]) -> Vec<SimilarityAnswer> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::SimilarityAnswer(a) => Some(a.clone()),
            _ => None,
        })
        .collect()
}

pub fn preference_labels(records: &[Record]) -> Vec<PreferenceLabel> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::PreferenceLabel(p) => Some(p.clone()),
            _ => None,
        })
        .collect()
}
