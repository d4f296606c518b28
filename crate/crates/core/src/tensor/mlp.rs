//! Fully connected ReLU networks with a linear output layer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::Parameters;
use crate::error::{Error, Result};

/// Affine layer `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = glorot_bound(fan_in, fan_out);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// ReLU after every layer except the last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l]` the post-ReLU output of
    /// layer `l - 1`; the last entry is the network output.
    activations: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape(format!("layer {i} bias length")));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialized network with the given widths (input first).
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(widths, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Self::from_layers(layers)
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Self::from_layers(widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Dense> {
        self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].fan_in()];
        w.extend(self.layers.iter().map(Dense::fan_out));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").fan_out()
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = affine(layer, &x)?;
            if i < last {
                x.map_inplace(relu);
            }
        }
        Ok(x)
    }

    pub fn forward_trace(&self, batch: &Matrix) -> Result<Trace> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, activations.last().expect("nonempty"))?;
            if i < last {
                z.map_inplace(relu);
            }
            activations.push(z);
        }
        Ok(Trace { activations })
    }

    /// Reverse pass for `sum(output ⊙ upstream)`. Returns parameter gradients
    /// and the gradient with respect to the input batch.
    pub fn backward(&self, trace: &Trace, upstream: &Matrix) -> Result<(Mlp, Matrix)> {
        let out = trace.output();
        if upstream.shape() != out.shape() || trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.activations[l];
            let weight = input.t_matmul(&delta)?;
            let bias = delta.column_sums();
            grads.push(Dense { weight, bias });
            let mut down = delta.matmul_t(&self.layers[l].weight)?;
            if l > 0 {
                // gate by the ReLU that produced `input`; an exactly zero
                // activation passes no gradient
                for (d, a) in down.data_mut().iter_mut().zip(input.data()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = down;
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, delta))
    }

    /// Adds `other` into `self`; both must have identical shapes.
    pub fn accumulate(&mut self, other: &Mlp) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            assert_eq!(a.weight.shape(), b.weight.shape());
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_width() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        Ok(())
    }
}

impl Parameters for Mlp {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn affine(layer: &Dense, x: &Matrix) -> Result<Matrix> {
    let mut z = x.matmul(&layer.weight)?;
    z.add_row_vector(&layer.bias);
    Ok(z)
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::invalid("need an input and an output width"));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::invalid(format!("zero width in {widths:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{assert_grad_close, numeric_grad};

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 9.0]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_layers(vec![Dense {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        }])
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        // 2 -> 3 (ReLU) -> 2
        let w1 = Matrix::from_rows(&[[1.0, -1.0, 0.5], [2.0, 0.0, -1.0]]).unwrap();
        let w2 = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]]).unwrap();
        let net = Mlp::from_layers(vec![
            Dense {
                weight: w1,
                bias: vec![0.0, 0.5, 0.0],
            },
            Dense {
                weight: w2,
                bias: vec![0.1, -0.1],
            },
        ])
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        // hidden pre-activation: [1+4, -1+0+0.5, 0.5-2] = [5, -0.5, -1.5] -> relu [5, 0, 0]
        // output: [5 + 0.1, 0 - 0.1]
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[5.1, -0.1]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let net = Mlp::init(&[4, 5, 3], 7).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3, 0.4]]).unwrap();
        let tr = net.forward_trace(&x).unwrap();
        let (g, gx) = net.backward(&tr, &Matrix::zeros(1, 3)).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let net = Mlp::from_layers(vec![
            Dense {
                weight: Matrix::from_rows(&[[1.0, 1.0]]).unwrap(),
                bias: vec![-10.0, 0.0],
            },
            Dense {
                weight: Matrix::from_rows(&[[3.0], [2.0]]).unwrap(),
                bias: vec![0.0],
            },
        ])
        .unwrap();
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let tr = net.forward_trace(&x).unwrap();
        let (g, _) = net.backward(&tr, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        // first hidden unit has pre-activation -9
        assert_eq!(g.layers()[0].weight[(0, 0)], 0.0);
        assert_eq!(g.layers()[0].bias[0], 0.0);
        assert_eq!(g.layers()[0].bias[1], 2.0);
    }

    #[test]
    fn scalar_output_matches_finite_differences() {
        for seed in 0..5 {
            let net = Mlp::init(&[3, 6, 5, 1], seed).unwrap();
            let x = Matrix::from_rows(&[[0.3, -0.7, 1.1], [1.5, 0.2, -0.4]]).unwrap();
            let tr = net.forward_trace(&x).unwrap();
            let up = Matrix::from_rows(&[[1.0], [-0.5]]).unwrap();
            let (g, _) = net.backward(&tr, &up).unwrap();
            let num = numeric_grad(&net, |n| {
                let y = n.forward(&x).unwrap();
                y[(0, 0)] - 0.5 * y[(1, 0)]
            });
            assert_grad_close(&g, &num, 1e-4);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::init(&[19, 128, 128, 6], 3).unwrap();
        let b = Mlp::init(&[19, 128, 128, 6], 3).unwrap();
        let c = Mlp::init(&[19, 128, 128, 6], 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let layer = &a.layers()[1];
        let bound = (6.0f64 / 256.0).sqrt();
        assert!(layer.weight.data().iter().all(|w| w.abs() < bound));
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::init(&[3, 2], 0).unwrap();
        assert!(net.forward(&Matrix::zeros(1, 4)).is_err());
        assert!(Mlp::init(&[3, 0, 2], 0).is_err());
    }
}
