//! Smooth trajectory deformations `ξ + μ A⁻¹ ũ`.
//!
//! `A = c·KᵀK` where `K` is the second-difference operator over the interior
//! waypoints with both endpoints clamped to zero, so deformations never move
//! the start or goal. `A` acts on every channel independently. The constant
//! `c` is the largest entry of `(KᵀK)⁻¹`, which puts the peak of every
//! unit-impulse response at or below 1.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSpec {
    /// Magnitude `μ > 0`.
    pub magnitude: f64,
    /// Deformed waypoint, strictly between the endpoints.
    pub waypoint: usize,
    /// One entry per deformed channel.
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DeformationNorm {
    num_states: usize,
    scale: f64,
}

impl DeformationNorm {
    pub fn new(num_states: usize) -> Result<Self> {
        if num_states < 3 {
            return Err(Error::invalid("deformations need at least one interior waypoint"));
        }
        let mut norm = Self {
            num_states,
            scale: 1.0,
        };
        let interior = num_states - 2;
        let mut peak = 0.0f64;
        for t in 0..interior {
            let mut e = vec![0.0; interior];
            e[t] = 1.0;
            let col = norm.solve_interior(&e);
            peak = peak.max(col.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        norm.scale = peak;
        Ok(norm)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// The constant `c` in `A = c·KᵀK`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Solves `A y = rhs` on the interior waypoints.
    pub fn solve_interior(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.num_states - 2);
        // K is symmetric, so KᵀK y = r is two tridiagonal solves with K.
        let scaled: Vec<f64> = rhs.iter().map(|v| v / self.scale).collect();
        let z = solve_second_difference(&scaled);
        solve_second_difference(&z)
    }

    /// `A⁻¹ e_t` over all waypoints, zero at both endpoints.
    pub fn impulse_response(&self, waypoint: usize) -> Result<Vec<f64>> {
        if waypoint == 0 || waypoint + 1 >= self.num_states {
            return Err(Error::invalid(format!(
                "waypoint {waypoint} is not interior to {} states",
                self.num_states
            )));
        }
        let mut e = vec![0.0; self.num_states - 2];
        e[waypoint - 1] = 1.0;
        let mut out = vec![0.0];
        out.extend(self.solve_interior(&e));
        out.push(0.0);
        Ok(out)
    }

    /// Deforms the listed channels of `traj` (one row per waypoint).
    pub fn deform(&self, traj: &Matrix, channels: &[usize], spec: &DeformationSpec) -> Result<Matrix> {
        if traj.rows() != self.num_states {
            return Err(Error::shape(format!(
                "trajectory has {} waypoints, norm built for {}",
                traj.rows(),
                self.num_states
            )));
        }
        if spec.direction.len() != channels.len() {
            return Err(Error::shape("one direction entry per deformed channel"));
        }
        if let Some(&c) = channels.iter().find(|&&c| c >= traj.cols()) {
            return Err(Error::shape(format!("channel {c} out of range")));
        }
        let profile = self.impulse_response(spec.waypoint)?;
        let mut out = traj.clone();
        for (&c, &u) in channels.iter().zip(&spec.direction) {
            for (i, p) in profile.iter().enumerate() {
                out[(i, c)] += spec.magnitude * u * p;
            }
        }
        Ok(out)
    }
}

/// Solves `K x = r` for the clamped second-difference matrix
/// `K = tridiag(1, -2, 1)` with the Thomas algorithm.
fn solve_second_difference(r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let (sub, diag, sup) = (1.0, -2.0, 1.0);
    c_prime[0] = sup / diag;
    d_prime[0] = r[0] / diag;
    for i in 1..n {
        let denom = diag - sub * c_prime[i - 1];
        c_prime[i] = sup / denom;
        d_prime[i] = (r[i] - sub * d_prime[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Matrix {
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 2.0 * i as f64]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn zero_direction_is_identity() {
        let norm = DeformationNorm::new(21).unwrap();
        let t = line(21);
        let spec = DeformationSpec {
            magnitude: 1.3,
            waypoint: 7,
            direction: vec![0.0, 0.0],
        };
        assert_eq!(norm.deform(&t, &[0, 1], &spec).unwrap(), t);
    }

    #[test]
    fn endpoints_fixed_and_linear_in_magnitude() {
        let norm = DeformationNorm::new(21).unwrap();
        let t = line(21);
        let spec = |m| DeformationSpec {
            magnitude: m,
            waypoint: 5,
            direction: vec![0.3, -0.2],
        };
        let a = norm.deform(&t, &[0, 1], &spec(0.7)).unwrap();
        let b = norm.deform(&t, &[0, 1], &spec(1.4)).unwrap();
        for c in 0..2 {
            assert_eq!(a[(0, c)], t[(0, c)]);
            assert_eq!(a[(20, c)], t[(20, c)]);
        }
        for i in 0..21 {
            for c in 0..2 {
                let da = a[(i, c)] - t[(i, c)];
                let db = b[(i, c)] - t[(i, c)];
                assert!((db - 2.0 * da).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_peak_is_normalized() {
        let norm = DeformationNorm::new(21).unwrap();
        let peak = (1..20)
            .map(|t| {
                norm.impulse_response(t)
                    .unwrap()
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0f64, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_waypoint_rejected() {
        let norm = DeformationNorm::new(21).unwrap();
        assert!(norm.impulse_response(0).is_err());
        assert!(norm.impulse_response(20).is_err());
        assert!(DeformationNorm::new(2).is_err());
    }

    #[test]
    fn thomas_solve_matches_residual() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let x = solve_second_difference(&r);
        for i in 0..4 {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i < 3 { x[i + 1] } else { 0.0 };
            assert!((left - 2.0 * x[i] + right - r[i]).abs() < 1e-12);
        }
    }
}
