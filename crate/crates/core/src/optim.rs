//! Adam with bias correction.

use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        Adam {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update of every parameter.
    pub fn step(&mut self, params: &mut Params, grad: &Params) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Shape;
    use crate::rng::Rng;

    fn scalar(x: f64) -> Params {
        let mut p = Params::zeros(Shape {
            dim: 1,
            n_users: 1,
            n_items: 0,
            n_extra_entities: 0,
            n_relations: 0,
        });
        p.emb.users[[0, 0]] = x;
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let shape = Shape {
            dim: 4,
            n_users: 3,
            n_items: 2,
            n_extra_entities: 1,
            n_relations: 2,
        };
        let mut p = Params::init(shape, &mut Rng::new(1));
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::new(0.1), &p);
        let zero = p.zeros_like();
        opt.step(&mut p, &zero);
        assert_eq!(p, before);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut p = scalar(3.0);
        let mut opt = Adam::new(AdamConfig::new(0.0), &p);
        opt.step(&mut p, &scalar(6.0));
        assert_eq!(p.emb.users[[0, 0]], 3.0);
    }

    #[test]
    fn first_step_on_square() {
        // f = θ², f' = 6 at θ = 3; the bias-corrected first step is lr·g/|g|.
        let mut p = scalar(3.0);
        let mut opt = Adam::new(AdamConfig::new(0.1), &p);
        opt.step(&mut p, &scalar(6.0));
        assert!((p.emb.users[[0, 0]] - 2.9).abs() < 1e-8);
    }
}
