use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Result<Self> {
        cfg.validate()?;
        let zeros = || params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Ok(Adam {
            cfg,
            t: 0,
            m: zeros(),
            v: zeros(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() {
                return Err(Error::Usage(format!(
                    "gradient of {} has {} entries, expected {}",
                    params.get(i).name,
                    g.len(),
                    self.m[i].len()
                )));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = params.tensor_mut(i).data_mut();
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                w[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use poremamba_tensor::Tensor;

    fn one(values: Vec<f64>) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::new(vec![values.len()], values).unwrap());
        ps
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = one(vec![1.0, -2.0, 0.5]);
        let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
        let g = vec![3.0, -1e-3, 250.0];
        opt.step(&mut ps, &[g.clone()]).unwrap();
        for ((w, w0), gj) in ps.get(0).value.data().iter().zip([1.0, -2.0, 0.5]).zip(&g) {
            let expect = w0 - 1e-3 * gj / (gj.abs() + 1e-8);
            assert!((w - expect).abs() < 1e-15);
            assert!(((w - w0).abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut ps = one(vec![0.3, 0.7]);
        let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
        for _ in 0..20 {
            opt.step(&mut ps, &[vec![0.0, 0.0]]).unwrap();
        }
        assert_eq!(ps.get(0).value.data(), &[0.3, 0.7]);
    }

    #[test]
    fn mismatched_gradients() {
        let mut ps = one(vec![0.0; 3]);
        let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
        assert!(opt.step(&mut ps, &[vec![0.0; 2]]).is_err());
        assert!(opt.step(&mut ps, &[]).is_err());
        assert!(Adam::new(AdamConfig { lr: -1.0, ..AdamConfig::default() }, &ps).is_err());
    }
}
