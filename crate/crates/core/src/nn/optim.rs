use serde::{Deserialize, Serialize};

use super::{mismatch, NnError, Tensor};
use crate::real::Real;

/// SGD with momentum and L2 weight decay; one velocity buffer per parameter.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &[&Tensor<T>], learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }
}

/// One update: `v <- momentum*v - lr*(grad + weight_decay*param)`, then
/// `param <- param + v`.
pub fn sgd_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(mismatch(format!(
            "{} params, {} grads, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(mismatch(format!(
                "param {:?}, grad {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    let lr = T::lit(state.learning_rate);
    let mom = T::lit(state.momentum);
    let wd = T::lit(state.weight_decay);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pv, &gv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(v.data_mut().iter_mut())
        {
            *vv = mom * *vv - lr * (gv + wd * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}

/// Step decay: the base rate is multiplied by `factor` at each milestone epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
    /// Linear ramp from 0 over this many optimizer steps.
    #[serde(default)]
    pub warmup_steps: usize,
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize, step: usize) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| epoch >= m).count();
        let mut lr = self.base * self.factor.powi(decays as i32);
        if step < self.warmup_steps {
            lr *= (step + 1) as f64 / self.warmup_steps as f64;
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn plain_gradient_step() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&[&p], 0.1, 0.0, 0.0);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &mut st).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_decays_velocity() {
        let mut p = scalar(2.0);
        let mut st = OptimizerState::new(&[&p], 0.5, 0.9, 0.0);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &mut st).unwrap();
        let v0 = st.velocity()[0].data()[0];
        let p0 = p.data()[0];
        st.learning_rate = 0.0;
        sgd_step(&mut [&mut p], &[scalar(0.0)], &mut st).unwrap();
        let v1 = st.velocity()[0].data()[0];
        assert!((v1 - 0.9 * v0).abs() < 1e-15);
        assert!((p.data()[0] - (p0 + v1)).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_no_momentum_leaves_param() {
        let mut p = scalar(2.0);
        let mut st = OptimizerState::new(&[&p], 0.5, 0.9, 0.0);
        sgd_step(&mut [&mut p], &[scalar(0.0)], &mut st).unwrap();
        assert_eq!(p.data()[0], 2.0);
    }

    #[test]
    fn two_momentum_steps() {
        let mut p = scalar(0.0);
        let mut st = OptimizerState::new(&[&p], 0.001, 0.9, 0.0);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &mut st).unwrap();
        assert!((p.data()[0] + 0.001).abs() < 1e-15);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &mut st).unwrap();
        assert!((p.data()[0] + 0.001 + 0.0019).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Tensor::<f32>::from_vec(&[3], vec![1.0, -2.0, 3.5]).unwrap();
        let before = p.clone();
        let mut st = OptimizerState::new(&[&p], 0.0, 0.9, 0.0005);
        for _ in 0..5 {
            sgd_step(&mut [&mut p], &[Tensor::filled(&[3], 4.0)], &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut p = scalar(0.0);
        let mut st = OptimizerState::new(&[&p], 0.1, 0.9, 0.0);
        assert!(sgd_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut st).is_err());
        assert!(sgd_step(&mut [&mut p], &[], &mut st).is_err());
    }

    #[test]
    fn schedule_decays_at_milestones() {
        let s = LrSchedule {
            base: 1e-3,
            milestones: vec![60, 90],
            factor: 0.1,
            warmup_steps: 0,
        };
        assert_eq!(s.rate(0, 100), 1e-3);
        assert!((s.rate(60, 100) - 1e-4).abs() < 1e-18);
        assert!((s.rate(159, 100) - 1e-5).abs() < 1e-18);
        let w = LrSchedule {
            warmup_steps: 4,
            ..s
        };
        assert!((w.rate(0, 1) - 0.5e-3).abs() < 1e-18);
    }
}
