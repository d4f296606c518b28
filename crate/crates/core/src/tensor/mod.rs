//! Dense numerical core: matrices, MLPs with exact reverse-mode gradients,
//! Adam, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;

pub use adam::{Adam, AdamConfig};
pub use matrix::Matrix;
pub use mlp::{Dense, Mlp, Trace};

/// A bundle of parameter buffers in a fixed order.
///
/// Gradients use the same type as the parameters they belong to, so an
/// optimizer can zip the two.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

impl<T: Parameters> Parameters for [T] {
    fn slices(&self) -> Vec<&[f64]> {
        self.iter().flat_map(Parameters::slices).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(Parameters::slices_mut).collect()
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn slices(&self) -> Vec<&[f64]> {
        self.as_slice().slices()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.as_mut_slice().slices_mut()
    }
}

impl<A: Parameters, B: Parameters> Parameters for (A, B) {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.0.slices();
        out.extend(self.1.slices());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.0.slices_mut();
        out.extend(self.1.slices_mut());
        out
    }
}
