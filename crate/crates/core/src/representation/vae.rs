//! Variational autoencoder used as an unsupervised baseline and as a warm
//! start for similarity training.
//!
//! The encoder is one MLP whose final layer emits `[mean | log-variance]`, so
//! the mean head shares the hidden trunk with the variance head. The
//! embedding is the encoder restricted to the mean columns.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EmbeddingModel, Provenance};
use crate::config::VaeConfig;
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, Dense, Matrix, Mlp, Parameters};
use crate::train::{check_loss, epoch_batches, TrainLog};

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent: usize,
}

/// Parts of the objective, summed over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

impl Parameters for Vae {
    fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.encoder.slices();
        s.extend(self.decoder.slices());
        s
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.encoder.slices_mut();
        s.extend(self.decoder.slices_mut());
        s
    }
}

impl Vae {
    pub fn init(input: usize, hidden: usize, latent: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            encoder: Mlp::init_with_rng(&[input, hidden, hidden, 2 * latent], &mut rng)?,
            decoder: Mlp::init_with_rng(&[latent, hidden, hidden, input], &mut rng)?,
            latent,
        })
    }

    /// Per-row mean and log-variance.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let out = self.encoder.forward(x)?;
        Ok(split_columns(&out, self.latent))
    }

    /// The encoder's mean head as a standalone network.
    pub fn mean_encoder(&self) -> Mlp {
        let mut layers = self.encoder.layers().to_vec();
        let last = layers.pop().expect("encoder has layers");
        let head = Dense {
            weight: last.weight.take_cols(self.latent),
            bias: last.bias[..self.latent].to_vec(),
        };
        layers.push(head);
        Mlp::from_layers(layers).expect("widths chain")
    }

    /// Objective and gradients for one batch with fixed standard-normal noise
    /// `noise` (one row per input row). Reconstruction is the per-row mean
    /// squared error; the KL term is against `N(0, I)`.
    pub fn loss_and_grad(&self, x: &Matrix, noise: &Matrix, kl_weight: f64) -> Result<(VaeLoss, Vae)> {
        let (rows, width) = x.shape();
        if noise.shape() != (rows, self.latent) {
            return Err(Error::shape("noise must have one latent row per input row"));
        }
        let enc_trace = self.encoder.forward_trace(x)?;
        let (mean, logvar) = split_columns(enc_trace.output(), self.latent);

        let mut z = Matrix::zeros(rows, self.latent);
        for i in 0..rows {
            for k in 0..self.latent {
                z[(i, k)] = mean[(i, k)] + (0.5 * logvar[(i, k)]).exp() * noise[(i, k)];
            }
        }
        let dec_trace = self.decoder.forward_trace(&z)?;
        let recon = dec_trace.output();

        let mut recon_loss = 0.0;
        let mut d_recon = Matrix::zeros(rows, width);
        for i in 0..rows {
            for j in 0..width {
                let diff = recon[(i, j)] - x[(i, j)];
                recon_loss += diff * diff / width as f64;
                d_recon[(i, j)] = 2.0 * diff / width as f64;
            }
        }
        let (dec_grads, dz) = self.decoder.backward(&dec_trace, &d_recon)?;

        let mut kl = 0.0;
        let mut d_enc = Matrix::zeros(rows, 2 * self.latent);
        for i in 0..rows {
            for k in 0..self.latent {
                let (m, lv, e) = (mean[(i, k)], logvar[(i, k)], noise[(i, k)]);
                let var = lv.exp();
                kl += 0.5 * (m * m + var - lv - 1.0);
                d_enc[(i, k)] = dz[(i, k)] + kl_weight * m;
                d_enc[(i, self.latent + k)] =
                    dz[(i, k)] * e * 0.5 * (0.5 * lv).exp() + kl_weight * 0.5 * (var - 1.0);
            }
        }
        let (enc_grads, _) = self.encoder.backward(&enc_trace, &d_enc)?;
        let total = recon_loss + kl_weight * kl;
        Ok((
            VaeLoss {
                reconstruction: recon_loss,
                kl,
                total,
            },
            Vae {
                encoder: enc_grads,
                decoder: dec_grads,
                latent: self.latent,
            },
        ))
    }
}

fn split_columns(m: &Matrix, left: usize) -> (Matrix, Matrix) {
    let (rows, cols) = m.shape();
    let mut a = Matrix::zeros(rows, left);
    let mut b = Matrix::zeros(rows, cols - left);
    for i in 0..rows {
        a.row_mut(i).copy_from_slice(&m.row(i)[..left]);
        b.row_mut(i).copy_from_slice(&m.row(i)[left..]);
    }
    (a, b)
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Trains a VAE on the pool and returns its mean encoder as the embedding.
pub fn train_vae(
    env: EnvKind,
    inputs: &Matrix,
    hidden: usize,
    latent: usize,
    config: &VaeConfig,
    seed: u64,
) -> Result<(EmbeddingModel, Vae, TrainLog)> {
    if inputs.rows() == 0 {
        return Err(Error::invalid("VAE pool is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vae = Vae::init(inputs.cols(), hidden, latent, seed)?;
    let mut adam = Adam::new(AdamConfig::new(config.lr, config.decay));
    let n = inputs.rows() as f64;
    let initial = {
        let noise = standard_normal(inputs.rows(), latent, &mut rng);
        vae.loss_and_grad(inputs, &noise, config.kl_weight)?.0.total / n
    };
    let mut log = TrainLog {
        initial_loss: initial,
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(inputs.rows(), config.batch, &mut rng) {
            let x = inputs.select_rows(&batch);
            let noise = standard_normal(batch.len(), latent, &mut rng);
            let (loss, grads) = vae.loss_and_grad(&x, &noise, config.kl_weight)?;
            check_loss(loss.total, epoch, "VAE")?;
            adam.step(&mut vae, &grads)?;
            total += loss.total;
        }
        log.epoch_losses.push(total / n);
    }
    let mut model = EmbeddingModel::new(vae.mean_encoder(), Provenance::Vae, Some(env), seed);
    model.budget = 0;
    Ok((model, vae, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{jitter, max_relative_error, numeric_grad};

    fn batch() -> Matrix {
        Matrix::from_rows(
            &(0..4)
                .map(|i| (0..5).map(|j| ((i * 5 + j) as f64 * 0.37).cos()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = batch();
        for seed in 0..5 {
            let mut vae = Vae::init(5, 6, 3, seed).unwrap();
            jitter(&mut vae, seed, 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let noise = standard_normal(4, 3, &mut rng);
            let (_, g) = vae.loss_and_grad(&x, &noise, 0.01).unwrap();
            let num = numeric_grad(&vae, |v| v.loss_and_grad(&x, &noise, 0.01).unwrap().0.total);
            let err = max_relative_error(&g.flatten(), &num);
            assert!(err < 1e-4, "seed {seed}: {err:e}");
        }
    }

    #[test]
    fn kl_is_non_negative_and_zero_weight_is_plain_mse() {
        let x = batch();
        let vae = Vae::init(5, 6, 3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noise = standard_normal(4, 3, &mut rng);
        let (l, _) = vae.loss_and_grad(&x, &noise, 0.01).unwrap();
        assert!(l.kl >= 0.0);
        let (l0, _) = vae.loss_and_grad(&x, &noise, 0.0).unwrap();
        assert_eq!(l0.total, l0.reconstruction);

        // reconstruction equals an autoencoder MSE through z = μ + σ ε
        let (mean, logvar) = vae.encode(&x).unwrap();
        let mut z = mean.clone();
        for i in 0..4 {
            for k in 0..3 {
                z[(i, k)] += (0.5 * logvar[(i, k)]).exp() * noise[(i, k)];
            }
        }
        let r = vae.decoder.forward(&z).unwrap();
        let mse: f64 = r.data().iter().zip(x.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 5.0;
        assert!((mse - l0.reconstruction).abs() < 1e-12);
    }

    #[test]
    fn mean_encoder_matches_mean_head() {
        let vae = Vae::init(5, 6, 3, 2).unwrap();
        let x = batch();
        let (mean, _) = vae.encode(&x).unwrap();
        assert_eq!(vae.mean_encoder().forward(&x).unwrap(), mean);
    }

    #[test]
    fn learns_a_repeated_trajectory() {
        let row: Vec<f64> = (0..5).map(|j| 0.5 + 0.1 * j as f64).collect();
        let inputs = Matrix::from_rows(&vec![row.clone(); 16]).unwrap();
        let cfg = VaeConfig {
            epochs: 300,
            lr: 0.01,
            decay: 0.99999,
            batch: 8,
            kl_weight: 0.01,
        };
        let (_, vae, log) = train_vae(EnvKind::GridRobot, &inputs, 16, 3, &cfg, 4).unwrap();
        assert!(log.final_loss().unwrap() < log.initial_loss);
        // reconstruct through the mean (no sampling noise)
        let (mean, _) = vae.encode(&inputs).unwrap();
        let r = vae.decoder.forward(&mean).unwrap();
        let mse: f64 = r.row(0).iter().zip(&row).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 5.0;
        let proxy: f64 = row.iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert!(mse < 1e-3 * proxy, "mse {mse}");
    }
}
