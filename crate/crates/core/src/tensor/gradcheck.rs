//! Central finite differences for checking analytic gradients.
//!
//! Used by the unit tests and the acceptance suite.

use super::Parameters;

pub const STEP: f64 = 1e-5;

/// Below this magnitude an entry is compared absolutely instead of relatively.
/// Central differences carry round-off near `1e-10` on losses of order one,
/// so exact zeros need a floor well above that.
pub const FLOOR: f64 = 1e-4;

/// Central-difference gradient of `loss` with respect to every parameter,
/// flattened in visit order.
pub fn numeric_grad<P, F>(params: &P, loss: F) -> Vec<f64>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let n = params.flatten().len();
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let plus = perturbed(params, idx, STEP);
        let minus = perturbed(params, idx, -STEP);
        out.push((loss(&plus) - loss(&minus)) / (2.0 * STEP));
    }
    out
}

/// Central-difference gradient with respect to a plain vector.
pub fn numeric_grad_vec<F: Fn(&[f64]) -> f64>(x: &[f64], loss: F) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + STEP;
            let up = loss(&buf);
            buf[i] = x[i] - STEP;
            let down = loss(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn perturbed<P: Parameters + Clone>(params: &P, idx: usize, delta: f64) -> P {
    let mut p = params.clone();
    let mut seen = 0;
    for s in p.slices_mut() {
        if idx >= seen && idx < seen + s.len() {
            s[idx - seen] += delta;
            break;
        }
        seen += s.len();
    }
    p
}

/// Adds uniform noise in `[-scale, scale]` to every parameter. Freshly
/// initialized networks have zero biases, which puts dead units exactly on
/// the ReLU kink where central differences are meaningless.
pub fn jitter<P: Parameters>(params: &mut P, seed: u64, scale: f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for s in params.slices_mut() {
        for x in s {
            *x += rng.gen_range(-scale..=scale);
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest elementwise relative error between two flattened gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

pub fn assert_grad_close<P: Parameters>(analytic: &P, numeric: &[f64], tol: f64) {
    let a = analytic.flatten();
    let err = max_relative_error(&a, numeric);
    assert!(err < tol, "max relative gradient error {err:e} >= {tol:e}");
}
