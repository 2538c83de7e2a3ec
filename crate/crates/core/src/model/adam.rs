use super::{ModelError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            eps: 1e-9,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient is an error and leaves
    /// both `params` and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(ModelError::Shape {
                expected: self.m.len(),
                found: grad.len().min(params.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite("gradient"));
        }
        let AdamConfig { lr, eps, beta1, beta2 } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut a = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![0.5, -1.0, 2.0];
        a.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        for g in [1e-3, 0.5, 7.0, -3.0] {
            let mut a = Adam::new(cfg, 1);
            let mut p = vec![0.0];
            a.step(&mut p, &[g]).unwrap();
            // m̂ = g, v̂ = g², so the step is lr·|g|/(|g|+eps).
            let want = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p[0] - want).abs() < 1e-15, "{g}: {} vs {want}", p[0]);
            assert!((p[0].abs() - cfg.lr).abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut a = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, 1.0];
        assert!(matches!(a.step(&mut p, &[f64::NAN, 0.0]), Err(ModelError::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(a.steps(), 0);
    }
}
