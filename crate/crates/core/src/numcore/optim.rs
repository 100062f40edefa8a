use serde::{Deserialize, Serialize};

use super::tensor::{Precision, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 2e-5;

/// Bias-corrected Adam moments for a flattened parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// State for `num_params` scalar parameters.
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One Adam update over `params` in order. Gradients are read, not cleared.
    pub fn step(&mut self, params: &mut [&mut Tensor], precision: Precision) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer state sized for {} parameters, got {total}",
                self.m.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::Contract(format!("parameter tensor {i} has no gradient")));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut offset = 0;
        for p in params.iter_mut() {
            let n = p.len();
            let grad = p.grad().expect("checked above").to_vec();
            let m = &mut self.m[offset..offset + n];
            let v = &mut self.v[offset..offset + n];
            let values = p.values_mut();
            for i in 0..n {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            precision.round(values);
            offset += n;
        }
        Ok(())
    }
}

/// L2 norm of all gradients taken together.
pub fn global_grad_norm(params: &[&mut Tensor]) -> Result<f64> {
    let mut sq = 0.0;
    for (i, p) in params.iter().enumerate() {
        let g = p
            .grad()
            .ok_or_else(|| Error::Contract(format!("parameter tensor {i} has no gradient")))?;
        sq += g.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(sq.sqrt())
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the factor applied (1.0 when already within bounds).
pub fn clip_gradients(params: &mut [&mut Tensor], max_norm: f64) -> Result<f64> {
    if max_norm.is_nan() || max_norm <= 0.0 {
        return Err(Error::Contract(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = global_grad_norm(params)?;
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        if let Some(g) = p.grad_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_grad(values: &[f64], grad: &[f64]) -> Tensor {
        let mut t = Tensor::new(vec![values.len()], values.to_vec()).unwrap();
        t.set_grad(grad.to_vec()).unwrap();
        t
    }

    #[test]
    fn clip_three_four_five() {
        let mut t = with_grad(&[0.0, 0.0], &[3.0, 4.0]);
        let scale = clip_gradients(&mut [&mut t], 1.0).unwrap();
        assert!((scale - 0.2).abs() < 1e-15);
        let g = t.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_under_threshold_is_noop() {
        let mut t = with_grad(&[0.0, 0.0], &[0.3, 0.4]);
        assert_eq!(clip_gradients(&mut [&mut t], 1.0).unwrap(), 1.0);
        assert_eq!(t.grad().unwrap(), &[0.3, 0.4]);
        let mut z = with_grad(&[1.0], &[0.0]);
        assert_eq!(clip_gradients(&mut [&mut z], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn clip_rejects_nonpositive_norm() {
        let mut t = with_grad(&[0.0], &[1.0]);
        assert!(clip_gradients(&mut [&mut t], 0.0).is_err());
    }

    #[test]
    fn global_norm_matches_flat_oracle() {
        let grads = [vec![1.0, -2.0, 0.5], vec![3.0], vec![-0.25, 4.0, 2.0, 1.0]];
        let mut ts: Vec<Tensor> = grads.iter().map(|g| with_grad(&vec![0.0; g.len()], g)).collect();
        let flat: Vec<f64> = grads.concat();
        let oracle = flat.iter().map(|x| x * x).sum::<f64>().sqrt();
        let refs: Vec<&mut Tensor> = ts.iter_mut().collect();
        assert!((global_grad_norm(&refs).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn first_step_matches_scalar_trace() {
        // Scalar Adam, written out independently.
        let (lr, b1, b2, eps) = (2e-5_f64, 0.9_f64, 0.999_f64, 1e-8_f64);
        let g = 1.0_f64;
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let expected = -lr * (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps);
        assert!((expected - (-1.99999e-5)).abs() < 1e-10);

        let mut p = with_grad(&[0.0], &[1.0]);
        let mut state = AdamState::new(1, lr);
        state.step(&mut [&mut p], Precision::F64).unwrap();
        assert_eq!(p.values()[0], expected);
        assert_eq!(state.t, 1);
        assert_eq!(p.grad().unwrap(), &[1.0]);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = with_grad(&[1.5, -2.0], &[0.0, 0.0]);
        let mut state = AdamState::new(2, 1e-3);
        state.step(&mut [&mut p], Precision::F64).unwrap();
        assert_eq!(p.values(), &[1.5, -2.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn descends_on_parabola() {
        let mut p = with_grad(&[1.0], &[2.0]);
        let mut state = AdamState::new(1, 0.1);
        for _ in 0..10 {
            let theta = p.values()[0];
            p.set_grad(vec![2.0 * theta]).unwrap();
            state.step(&mut [&mut p], Precision::F64).unwrap();
        }
        assert!(p.values()[0].abs() < 1.0);
        assert_eq!(state.t, 10);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let mut p = with_grad(&[1.0, 2.0], &[0.0, 0.0]);
        let mut state = AdamState::new(3, 1e-3);
        assert!(matches!(state.step(&mut [&mut p], Precision::F64), Err(Error::Contract(_))));
    }
}
