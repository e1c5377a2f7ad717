use crate::numkit::{Matrix, Parameters};

use super::TrainConfig;

pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.999);
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adam moments for one parameter group, with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub betas: (f64, f64),
    pub eps: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Matrix> = params.tensors().iter().map(|t| t.zeros_like()).collect();
        Self {
            step: 0,
            betas: DEFAULT_BETAS,
            eps: DEFAULT_EPS,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update. Weight decay shrinks parameters directly
/// (`p -= lr·wd·p`) rather than entering the gradient.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) {
    state.step += 1;
    let (b1, b2) = state.betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
    for ((p, g), (m, v)) in tensors.zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        let p = p.as_mut_slice();
        let g = g.as_slice();
        let m = m.as_mut_slice();
        let v = v.as_mut_slice();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let update = (m[i] / c1) / ((v[i] / c2).sqrt() + state.eps);
            p[i] -= lr * (update + weight_decay * p[i]);
        }
    }
}

/// Step schedule: the base rate times `gamma` per milestone already reached.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let passed = cfg.milestones.iter().filter(|&&m| m <= epoch).count();
    cfg.lr * cfg.gamma.powi(passed as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[derive(Clone)]
    struct One(Matrix);

    impl Parameters for One {
        fn tensors(&self) -> Vec<&Matrix> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
            vec![&mut self.0]
        }
        fn names(&self) -> Vec<String> {
            vec!["x".into()]
        }
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut p = One(Matrix::filled(1, 3, 2.0));
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &One(Matrix::filled(1, 3, 1.0)), &mut s, 1e-3, 0.0);
        for v in p.0.as_slice() {
            assert!((v - (2.0 - 1e-3)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut p = One(Matrix::from_rows(&[[1.0, -2.0]]));
        let before = p.0.clone();
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &One(Matrix::zeros(1, 2)), &mut s, 1e-2, 0.0);
        }
        assert_eq!(p.0, before);
    }

    #[test]
    fn decay_is_decoupled_from_the_gradient() {
        let mut p = One(Matrix::filled(1, 1, 4.0));
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &One(Matrix::zeros(1, 1)), &mut s, 0.1, 0.5);
        assert!((p.0[(0, 0)] - 4.0 * (1.0 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn quadratic_loss_decreases_every_step() {
        let mut rng = Rng::new(3);
        let target = Matrix::from_fn(1, 6, |_, _| rng.normal());
        let mut p = One(Matrix::from_fn(1, 6, |_, _| rng.normal() * 3.0));
        let loss = |p: &Matrix| {
            p.as_slice()
                .iter()
                .zip(target.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        };
        let mut s = AdamState::new(&p);
        let mut last = loss(&p.0);
        for _ in 0..10 {
            let g = Matrix::from_fn(1, 6, |_, j| 2.0 * (p.0[(0, j)] - target[(0, j)]));
            adam_step(&mut p, &One(g), &mut s, 0.05, 0.0);
            let now = loss(&p.0);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn schedule_drops_at_milestones() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 1e-3);
        assert!((lr_schedule(59, &cfg) - 1e-3).abs() < 1e-18);
        assert!((lr_schedule(60, &cfg) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(119, &cfg) - 1e-5).abs() < 1e-18);
    }
}
