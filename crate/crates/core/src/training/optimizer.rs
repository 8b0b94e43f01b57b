use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// lr 2e-4, β1 0.5: the usual adversarial setting.
    pub fn gan() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn classifier() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    m: IndexMap<String, Vec<f64>>,
    v: IndexMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let zeros: IndexMap<String, Vec<f64>> = params
            .iter()
            .map(|(name, t)| (name.to_string(), vec![0.0; t.numel()]))
            .collect();
        Ok(Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    /// Updates completed so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `grads` is consumed; nothing is
    /// modified if any gradient is missing, mis-sized or non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: Gradients) -> Result<()> {
        for (name, t) in params.iter() {
            let g = grads.get(name).ok_or_else(|| Error::MissingParam(format!("gradient of {name}")))?;
            if g.len() != t.numel() {
                return Err(Error::shape("optimizer_step", &[g.len()], t.shape()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            if self.m.get(name).is_none_or(|m| m.len() != g.len()) {
                return Err(Error::InvalidArgument(format!("no optimizer state for {name}")));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).expect("checked above");
            let m = self.m.get_mut(name).expect("checked above");
            let v = self.v.get_mut(name).expect("checked above");
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(name: &str, values: Vec<f64>) -> (ParamSet, Gradients) {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::from_vec(values.clone())).unwrap();
        let mut g = Gradients::default();
        g.insert(name, values.iter().map(|_| 0.0).collect());
        (p, g)
    }

    #[test]
    fn first_step_closed_form() {
        let (mut p, _) = one("w", vec![1.0, -2.0, 0.5]);
        let mut g = Gradients::default();
        let grad = [0.3, -4.0, 1e-3];
        g.insert("w", grad.to_vec());
        let cfg = AdamConfig::classifier();
        let mut opt = OptimizerState::new(cfg, &p).unwrap();
        opt.step(&mut p, g).unwrap();
        for (i, (&w0, &gi)) in [1.0, -2.0, 0.5].iter().zip(&grad).enumerate() {
            let want = w0 - cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((p.get("w").unwrap().data()[i] - want).abs() < 1e-15);
        }
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, g) = one("w", vec![1.0, 2.0]);
        let before = p.clone();
        let mut opt = OptimizerState::new(AdamConfig::gan(), &p).unwrap();
        opt.step(&mut p, g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn rejects_bad_gradients_without_mutating() {
        let (mut p, _) = one("w", vec![1.0, 2.0]);
        let before = p.clone();
        let mut opt = OptimizerState::new(AdamConfig::gan(), &p).unwrap();
        let mut g = Gradients::default();
        g.insert("w", vec![1.0]);
        assert!(matches!(opt.step(&mut p, g), Err(Error::ShapeMismatch { .. })));
        let mut g = Gradients::default();
        g.insert("w", vec![1.0, f64::NAN]);
        assert!(matches!(opt.step(&mut p, g), Err(Error::NonFinite(_))));
        assert!(opt.step(&mut p, Gradients::default()).is_err());
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn invalid_config() {
        let p = ParamSet::new();
        assert!(OptimizerState::new(AdamConfig::gan().with_learning_rate(0.0), &p).is_err());
        let mut c = AdamConfig::gan();
        c.beta2 = 1.0;
        assert!(OptimizerState::new(c, &p).is_err());
    }
}
