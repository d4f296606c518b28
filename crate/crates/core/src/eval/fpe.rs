//! Feature prediction error: how well a linear probe on a frozen embedding
//! recovers the ground-truth features.

use serde::{Deserialize, Serialize};

use super::split::train_test_split;
use crate::env::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::representation::EmbeddingModel;
use crate::tensor::Matrix;

pub const RIDGE: f64 = 1e-6;
const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeReport {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub split_seed: u64,
    /// Mean squared error over test rows and feature dimensions.
    pub mse: f64,
    /// `(dim + 1) × 4` probe; the last row is the intercept.
    pub probe: Vec<Vec<f64>>,
    /// Ridge actually used, larger than [`RIDGE`] after a fallback.
    pub ridge: f64,
}

/// Fits the probe on a seeded 80% split of the labeled pool and reports the
/// test MSE on the remaining 20%.
pub fn fpe(embedding: &EmbeddingModel, inputs: &Matrix, features: &[FeatureVector], split_seed: u64) -> Result<FpeReport> {
    if features.len() != inputs.rows() {
        return Err(Error::shape("features and inputs describe different pools"));
    }
    if features.len() < 10 {
        return Err(Error::invalid("feature prediction needs at least 10 labeled trajectories"));
    }
    let e = embedding.embed_batch(inputs)?;
    let (train, test) = train_test_split(features.len(), TRAIN_FRACTION, split_seed);
    let (probe, ridge) = fit_probe(&e, features, &train)?;
    let mse = probe_mse(&probe, &e, features, &test);
    Ok(FpeReport {
        method: embedding.provenance.to_string(),
        n: embedding.budget,
        seed: embedding.seed,
        split_seed,
        mse,
        probe: probe.iter_rows().map(<[f64]>::to_vec).collect(),
        ridge,
    })
}

/// Design matrix rows `[e, 1]` for the chosen indices.
fn design(e: &Matrix, rows: &[usize]) -> Matrix {
    let d = e.cols();
    let mut x = Matrix::zeros(rows.len(), d + 1);
    for (r, &i) in rows.iter().enumerate() {
        x.row_mut(r)[..d].copy_from_slice(e.row(i));
        x.row_mut(r)[d] = 1.0;
    }
    x
}

/// Ridge least squares `(XᵀX + λI) W = XᵀY`, raising λ by 100× until the
/// system is positive definite.
pub fn fit_probe(e: &Matrix, features: &[FeatureVector], train: &[usize]) -> Result<(Matrix, f64)> {
    let x = design(e, train);
    let y = Matrix::from_vec(
        train.len(),
        NUM_FEATURES,
        train.iter().flat_map(|&i| features[i]).collect(),
    )?;
    let gram = x.t_matmul(&x)?;
    let rhs = x.t_matmul(&y)?;
    let mut ridge = RIDGE;
    for _ in 0..8 {
        let mut a = gram.clone();
        for i in 0..a.rows() {
            a[(i, i)] += ridge;
        }
        if let Some(l) = cholesky(&a) {
            let w = cholesky_solve(&l, &rhs);
            if w.is_finite() {
                return Ok((w, ridge));
            }
        }
        log::warn!("probe design is degenerate at ridge {ridge:e}; retrying with a larger ridge");
        ridge *= 100.0;
    }
    Err(Error::NonFinite("probe system stayed singular".into()))
}

pub fn probe_mse(probe: &Matrix, e: &Matrix, features: &[FeatureVector], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let pred = design(e, rows).matmul(probe).expect("probe matches embedding width");
    let mut total = 0.0;
    for (r, &i) in rows.iter().enumerate() {
        for k in 0..NUM_FEATURES {
            let d = pred[(r, k)] - features[i][k];
            total += d * d;
        }
    }
    total / (rows.len() * NUM_FEATURES) as f64
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive
/// definite.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[(i, j)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[(i, k)] * x[(k, c)]).sum();
            x[(i, c)] = (x[(i, c)] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[(k, c)]).sum();
            x[(i, c)] = (x[(i, c)] - s) / l[(i, i)];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::Provenance;
    use crate::tensor::{Dense, Mlp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeled(n: usize, seed: u64) -> (Matrix, Vec<FeatureVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<FeatureVector> = (0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect();
        let x = Matrix::from_vec(n, NUM_FEATURES, feats.iter().flatten().copied().collect()).unwrap();
        (x, feats)
    }

    #[test]
    fn identity_embedding_is_recovered_exactly() {
        let (x, f) = labeled(200, 1);
        let r = fpe(&EmbeddingModel::identity(4), &x, &f, 3).unwrap();
        assert!(r.mse < 1e-8, "{}", r.mse);
        assert_eq!(r.ridge, RIDGE);
    }

    #[test]
    fn constant_embedding_predicts_the_training_mean() {
        let (x, f) = labeled(150, 2);
        let net = Mlp::from_layers(vec![Dense {
            weight: Matrix::zeros(4, 6),
            bias: vec![0.3; 6],
        }])
        .unwrap();
        let constant = EmbeddingModel::new(net, Provenance::Fixture, None, 0);
        let r = fpe(&constant, &x, &f, 5).unwrap();

        // independent recomputation: best constant predictor is the train mean
        let (train, test) = train_test_split(150, 0.8, 5);
        let mut expected = 0.0;
        for k in 0..NUM_FEATURES {
            let mean = train.iter().map(|&i| f[i][k]).sum::<f64>() / train.len() as f64;
            expected += test.iter().map(|&i| (f[i][k] - mean).powi(2)).sum::<f64>() / test.len() as f64;
        }
        expected /= NUM_FEATURES as f64;
        assert!((r.mse - expected).abs() < 1e-6 * expected, "{} vs {expected}", r.mse);
    }

    #[test]
    fn cholesky_solves_against_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Matrix::from_vec(6, 6, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut a = m.t_matmul(&m).unwrap();
        for i in 0..6 {
            a[(i, i)] += 0.5;
        }
        let b = Matrix::from_vec(6, 2, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let x = cholesky_solve(&cholesky(&a).unwrap(), &b);
        let na = nalgebra::DMatrix::from_row_slice(6, 6, a.data());
        let nb = nalgebra::DMatrix::from_row_slice(6, 2, b.data());
        let nx = na.lu().solve(&nb).unwrap();
        for i in 0..6 {
            for j in 0..2 {
                assert!((x[(i, j)] - nx[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_positive_definite_is_detected() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn fpe_is_repeatable() {
        let (x, f) = labeled(60, 3);
        let emb = EmbeddingModel::new(Mlp::init(&[4, 8, 8, 6], 1).unwrap(), Provenance::Random, None, 1);
        assert_eq!(fpe(&emb, &x, &f, 9).unwrap(), fpe(&emb, &x, &f, 9).unwrap());
    }

    #[test]
    fn tiny_pools_are_rejected() {
        let (x, f) = labeled(9, 0);
        assert!(fpe(&EmbeddingModel::identity(4), &x, &f, 0).is_err());
    }
}
