use serde::{Deserialize, Serialize};

use super::{Grads, NeuralError, Param};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.99, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments.
///
/// A parameter tensor whose gradient is identically zero is left untouched,
/// moments included, so a zero gradient never moves parameters regardless of
/// accumulated momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Result<Self, NeuralError> {
        if config.lr.is_nan()
            || config.lr <= 0.0
            || !(0.0..1.0).contains(&config.beta1)
            || !(0.0..1.0).contains(&config.beta2)
        {
            return Err(NeuralError::Invalid(format!("bad optimizer settings {config:?}")));
        }
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        Ok(Adam { config, step: 0, m: zeros(), v: zeros() })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param], grads: &Grads) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.0.len() != self.m.len() {
            return Err(NeuralError::Shape(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.0.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads.0).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(NeuralError::Shape(format!("gradient for {} has wrong length", p.name)));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NeuralError::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(&grads.0).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Param {
        Param::new("p", vec![1], vec![v])
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &[&p]).unwrap();
        adam.step(&mut [&mut p], &Grads(vec![vec![1.0]])).unwrap();
        assert!((p.value[0] + 0.1).abs() < 1e-8, "{}", p.value[0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_identity_even_with_momentum() {
        let mut p = scalar(0.5);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        adam.step(&mut [&mut p], &Grads(vec![vec![2.0]])).unwrap();
        let before = p.value[0];
        adam.step(&mut [&mut p], &Grads(vec![vec![0.0]])).unwrap();
        assert_eq!(p.value[0], before);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = Param::new("p", vec![3], vec![0.1, 0.2, 0.3]);
            let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
            for k in 0..5 {
                adam.step(&mut [&mut p], &Grads(vec![vec![k as f64, -1.0, 0.25]])).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_non_finite_gradients_and_bad_config() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        assert!(adam.step(&mut [&mut p], &Grads(vec![vec![f64::NAN]])).is_err());
        assert_eq!(adam.steps(), 0);
        assert!(Adam::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }, &[&p]).is_err());
    }
}
