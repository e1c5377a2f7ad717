//! Dense `f64` kernels, seeded randomness and gradient verification.
//!
//! Backward passes elsewhere in the crate are written by hand per composite
//! operation and checked against [`finite_difference_gradient`].

pub mod flops;
mod matrix;
mod ops;
mod rng;

pub use matrix::{matmul, matmul_nt, matmul_tn, Matrix};
pub use ops::{
    finite_difference_gradient, layer_norm, layer_norm_backward, layer_norm_cached, log_sum_exp,
    relative_error, relu, sigmoid, silu, silu_grad, softmax, softplus, LayerNormCache, FD_STEP,
    LAYER_NORM_EPS,
};
pub use rng::{derive_seed, Rng};

/// A value paired with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct GradSlot {
    pub value: Matrix,
    pub gradient: Matrix,
}

impl GradSlot {
    pub fn new(value: Matrix) -> Self {
        let gradient = value.zeros_like();
        Self { value, gradient }
    }

    pub fn accumulate(&mut self, grad: &Matrix) {
        self.gradient.add_assign(grad);
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(0.0);
    }
}

/// Uniform fan-based init in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(-bound, bound))
}

/// Uniform access to a parameter group's tensors, in a fixed order, so that
/// optimizers and checkpoints can treat every group alike. Gradients use the
/// same type as the parameters they belong to.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
    fn names(&self) -> Vec<String>;

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.tensors_mut().into_iter().for_each(|m| m.fill(0.0));
        out
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    fn scale_all(&mut self, s: f64) {
        for m in self.tensors_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }

    fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }
}
