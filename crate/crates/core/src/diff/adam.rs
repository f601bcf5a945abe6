use serde::{Deserialize, Serialize};

use super::tensor::ParameterSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: ParameterSet,
    pub v: ParameterSet,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. Gradients are validated before anything
/// is modified, so a failing step leaves params and state untouched.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) || !params.same_layout(&state.v)
    {
        return Err(Error::InvalidArgument(
            "optimizer state does not match parameters".into(),
        ));
    }
    grads.ensure_finite()?;

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let tensors = params.tensors_mut();
    for (i, p) in tensors.iter_mut().enumerate() {
        let g = grads.tensors()[i].data();
        let m = state.m.tensors_mut()[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
        }
        let v = state.v.tensors_mut()[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
        }
        let m = state.m.tensors()[i].data();
        let v = state.v.tensors()[i].data();
        for ((pj, mj), vj) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mj / bias1;
            let v_hat = vj / bias2;
            *pj -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;

    fn scalar_set(value: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.push("w", Tensor::vector(vec![value])).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = ParameterSet::new();
        p.push("a", Tensor::vector(vec![0.3, -1.2])).unwrap();
        p.push("b", Tensor::zeros(vec![2, 2])).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after correction, so Δ = -lr / (1 + ε)
        let mut p = scalar_set(0.0);
        let g = scalar_set(1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((p.tensors()[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut p = scalar_set(1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        for _ in 0..500 {
            let w = p.tensors()[0].data()[0];
            let g = scalar_set(2.0 * w);
            adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        }
        assert!(p.tensors()[0].data()[0].abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_set(0.0);
        let mut g = p.zeros_like();
        g.tensors_mut()[0].data_mut()[0] = f64::INFINITY;
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref n) if n == "w"));
        assert_eq!(st.step, 0);
    }
}
