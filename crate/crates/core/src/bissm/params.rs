use crate::numkit::{glorot_uniform, softplus, Matrix, Parameters, Rng};

pub const DEFAULT_CONV_WIDTH: usize = 4;
pub const DEFAULT_STATE_DIM: usize = 16;
/// Δ at initialization, before any input dependence.
pub const INITIAL_DELTA: f64 = 0.01;

/// What the residual branch of the merge adds to `z_f + z_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Residual {
    /// `z_f + z_b + input`.
    #[default]
    WithInput,
    /// `z_f + z_b` only.
    BranchesOnly,
}

impl Residual {
    pub fn name(self) -> &'static str {
        match self {
            Residual::WithInput => "input",
            Residual::BranchesOnly => "branches",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "input" => Some(Residual::WithInput),
            "branches" => Some(Residual::BranchesOnly),
            _ => None,
        }
    }
}

/// One direction of the Bi-SSM: causal conv, selective scan and its norm.
///
/// Vectors are stored as `1 x n` matrices. The state matrix is diagonal per
/// channel, `A = -exp(a_log)`, so every discretized decay lies in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams {
    /// `d x w`; column `w-1` multiplies the current position.
    pub conv_kernel: Matrix,
    pub conv_bias: Matrix,
    /// `d x ds`.
    pub a_log: Matrix,
    /// Per-channel affine map feeding `Δ = softplus(w_c·u_c + b_c)`.
    pub delta_weight: Matrix,
    pub delta_bias: Matrix,
    /// `d x ds` input-dependent B projection.
    pub b_weight: Matrix,
    pub b_bias: Matrix,
    /// `d x ds` input-dependent C projection.
    pub c_weight: Matrix,
    pub c_bias: Matrix,
    pub d_skip: Matrix,
    pub norm_gain: Matrix,
    pub norm_bias: Matrix,
}

impl SsmParams {
    pub fn init(d: usize, d_state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        let kb = 1.0 / (conv_width as f64).sqrt();
        // softplus⁻¹(INITIAL_DELTA)
        let delta_bias = INITIAL_DELTA.exp_m1().ln();
        debug_assert!((softplus(delta_bias) - INITIAL_DELTA).abs() < 1e-12);
        Self {
            conv_kernel: Matrix::from_fn(d, conv_width, |_, _| rng.uniform_in(-kb, kb)),
            conv_bias: Matrix::zeros(1, d),
            a_log: Matrix::from_fn(d, d_state, |_, k| ((k + 1) as f64).ln()),
            delta_weight: Matrix::from_fn(1, d, |_, _| rng.uniform_in(-0.1, 0.1)),
            delta_bias: Matrix::filled(1, d, delta_bias),
            b_weight: glorot_uniform(d, d_state, rng),
            b_bias: Matrix::zeros(1, d_state),
            c_weight: glorot_uniform(d, d_state, rng),
            c_bias: Matrix::zeros(1, d_state),
            d_skip: Matrix::filled(1, d, 1.0),
            norm_gain: Matrix::filled(1, d, 1.0),
            norm_bias: Matrix::zeros(1, d),
        }
    }

    pub fn width(&self) -> usize {
        self.a_log.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.a_log.cols()
    }

    pub fn conv_width(&self) -> usize {
        self.conv_kernel.cols()
    }
}

impl Parameters for SsmParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.conv_kernel,
            &self.conv_bias,
            &self.a_log,
            &self.delta_weight,
            &self.delta_bias,
            &self.b_weight,
            &self.b_bias,
            &self.c_weight,
            &self.c_bias,
            &self.d_skip,
            &self.norm_gain,
            &self.norm_bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.conv_kernel,
            &mut self.conv_bias,
            &mut self.a_log,
            &mut self.delta_weight,
            &mut self.delta_bias,
            &mut self.b_weight,
            &mut self.b_bias,
            &mut self.c_weight,
            &mut self.c_bias,
            &mut self.d_skip,
            &mut self.norm_gain,
            &mut self.norm_bias,
        ]
    }

    fn names(&self) -> Vec<String> {
        [
            "conv_kernel",
            "conv_bias",
            "a_log",
            "delta_weight",
            "delta_bias",
            "b_weight",
            "b_bias",
            "c_weight",
            "c_bias",
            "d_skip",
            "norm_gain",
            "norm_bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

/// Forward and backward branches (independent weights) plus the merge.
#[derive(Clone, Debug, PartialEq)]
pub struct BiSsmParams {
    pub forward: SsmParams,
    pub backward: SsmParams,
    pub merge_weight: Matrix,
    pub merge_bias: Matrix,
    pub merge_gain: Matrix,
    pub merge_norm_bias: Matrix,
    pub residual: Residual,
}

impl BiSsmParams {
    pub fn init(d: usize, d_state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        Self {
            forward: SsmParams::init(d, d_state, conv_width, rng),
            backward: SsmParams::init(d, d_state, conv_width, rng),
            merge_weight: glorot_uniform(d, d, rng),
            merge_bias: Matrix::zeros(1, d),
            merge_gain: Matrix::filled(1, d, 1.0),
            merge_norm_bias: Matrix::zeros(1, d),
            residual: Residual::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.merge_weight.rows()
    }
}

impl Parameters for BiSsmParams {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut out = self.forward.tensors();
        out.extend(self.backward.tensors());
        out.extend([
            &self.merge_weight,
            &self.merge_bias,
            &self.merge_gain,
            &self.merge_norm_bias,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.forward.tensors_mut();
        out.extend(self.backward.tensors_mut());
        out.extend([
            &mut self.merge_weight,
            &mut self.merge_bias,
            &mut self.merge_gain,
            &mut self.merge_norm_bias,
        ]);
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .forward
            .names()
            .into_iter()
            .map(|n| format!("fwd.{n}"))
            .collect();
        out.extend(
            self.backward
                .names()
                .into_iter()
                .map(|n| format!("bwd.{n}")),
        );
        out.extend(
            [
                "merge_weight",
                "merge_bias",
                "merge_gain",
                "merge_norm_bias",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        out
    }
}
