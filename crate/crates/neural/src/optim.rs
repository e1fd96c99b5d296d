//! Adam with f32-rounded state.
//!
//! Parameters and both moment vectors are rounded to f32 after every step, so
//! a checkpoint written as f32 restores the exact training state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("adam betas must lie in [0, 1) and eps must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

fn round32(x: f64) -> f64 {
    x as f32 as f64
}

impl Adam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One descent step along `grad` (the gradient of a loss to minimize).
    pub fn step(&mut self, params: &mut PolicyParams, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != params.values.len() || self.m.len() != grad.len() {
            return Err(Error::Dims("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((w, m), v), &g) in params.values.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grad) {
            *m = round32(beta1 * *m + (1.0 - beta1) * g);
            *v = round32(beta2 * *v + (1.0 - beta2) * g * g);
            let mh = *m / c1;
            let vh = *v / c2;
            *w = round32(*w - lr * mh / (vh.sqrt() + eps));
        }
        params.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_params, PolicyDims, Role};

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = init_params(Role::Location, PolicyDims::new(8, 2, 1, 8).unwrap(), 1).unwrap();
        let before = p.values.clone();
        let mut g = vec![0.0; p.values.len()];
        g[0] = 3.0;
        g[1] = -0.5;
        let mut opt = Adam::new(g.len(), AdamConfig::default());
        opt.step(&mut p, &g, 1e-3).unwrap();
        assert!((p.values[0] - (before[0] - 1e-3)).abs() < 1e-6);
        assert!((p.values[1] - (before[1] + 1e-3)).abs() < 1e-6);
        assert_eq!(&p.values[2..], &before[2..]);
        assert_eq!(p.version, 1);
    }

    #[test]
    fn zero_gradient_from_rest_is_a_no_op() {
        let mut p = init_params(Role::Location, PolicyDims::new(8, 2, 1, 8).unwrap(), 1).unwrap();
        let before = p.values.clone();
        let mut opt = Adam::new(before.len(), AdamConfig::default());
        opt.step(&mut p, &vec![0.0; before.len()], 1e-3).unwrap();
        assert_eq!(p.values, before);
    }
}
