//! Nearest and farthest trajectories in embedding space.

use crate::error::{Error, Result};
use crate::representation::{squared_distance, EmbeddingModel};
use crate::tensor::Matrix;

/// `(index, squared distance)` pairs.
pub type Ranked = Vec<(usize, f64)>;

/// The `k` pool entries closest to `query` (ascending, ties by lower index)
/// and the `k` farthest (the same ordering read backwards).
pub fn retrieve_extremes(embedding: &EmbeddingModel, query: &[f64], pool: &Matrix, k: usize) -> Result<(Ranked, Ranked)> {
    if pool.rows() == 0 {
        return Err(Error::invalid("cannot retrieve from an empty pool"));
    }
    let q = embedding.embed(query)?;
    let e = embedding.embed_batch(pool)?;
    let mut ranked: Ranked = e.iter_rows().map(|row| squared_distance(&q, row)).enumerate().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let k = k.min(ranked.len());
    let nearest = ranked[..k].to_vec();
    let farthest = ranked.iter().rev().take(k).copied().collect();
    Ok((nearest, farthest))
}
