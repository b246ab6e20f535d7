use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a fixed list of parameter buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                op: "adam_step",
                expected: format!("{} parameter buffers", self.m.len()),
                got: format!("{} params / {} grads", params.len(), grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    expected: format!("buffer of {}", m.len()),
                    got: format!("{} params / {} grads", p.len(), g.len()),
                });
            }
        }
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + epsilon);
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut [&mut p], &[&[0.0; 3]], 1e-3).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        // step 1: m̂ = g, v̂ = g², update = lr·g/(|g|+eps)
        for g in [0.3, -2.5, 1e-3] {
            let mut s = AdamState::new(AdamConfig::default(), &[1]);
            let mut p = vec![0.7];
            let lr = 0.01;
            s.step(&mut [&mut p], &[&[g]], lr).unwrap();
            let expected = 0.7 - lr * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "{g}");
        }
        // second step with constant gradient, bias correction by hand
        let (g, lr) = (0.5, 0.1);
        let mut s = AdamState::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.0];
        s.step(&mut [&mut p], &[&[g]], lr).unwrap();
        s.step(&mut [&mut p], &[&[g]], lr).unwrap();
        let m2 = 0.1 * g * 0.9 + 0.1 * g;
        let v2 = 0.001 * g * g * 0.999 + 0.001 * g * g;
        let upd = (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let expected = -lr * g / (g + 1e-8) - lr * upd;
        assert!((p[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = AdamState::new(AdamConfig::default(), &[2]);
        let mut b = a.clone();
        let (mut pa, mut pb) = (vec![0.1, 0.2], vec![0.1, 0.2]);
        a.step(&mut [&mut pa], &[&[0.3, -0.1]], 0.01).unwrap();
        b.step(&mut [&mut pb], &[&[0.3, -0.1]], 0.01).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(s.step(&mut [&mut p], &[&[0.0; 3]], 0.1).is_err());
    }
}
