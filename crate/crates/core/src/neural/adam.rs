use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Moments>,
    v: Vec<Moments>,
    t: u64,
}

impl Adam {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .layers()
                .iter()
                .map(|l| Moments {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one descent step. Non-finite gradients are rejected before
    /// anything is modified.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.m.len() || params.layers().len() != self.m.len() {
            return Err(Error::shape(
                format!("{} layers", self.m.len()),
                format!("{} gradient layers", grads.layers.len()),
            ));
        }
        for (k, (g, m)) in grads.layers.iter().zip(&self.m).enumerate() {
            if g.weights.dim() != m.weights.dim() || g.bias.dim() != m.bias.dim() {
                return Err(Error::shape(
                    format!("layer {k} {:?}", m.weights.dim()),
                    format!("{:?}", g.weights.dim()),
                ));
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (((layer, g), m), v) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }

    pub fn second_moments_nonnegative(&self) -> bool {
        self.v
            .iter()
            .all(|m| m.weights.iter().chain(m.bias.iter()).all(|&x| x >= 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, DenseLayer, LayerGradient};
    use ndarray::array;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(vec![DenseLayer {
            weights: array![[w]],
            bias: array![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![LayerGradient {
                weights: array![[g]],
                bias: array![0.0],
            }],
            input: Array2::zeros((1, 1)),
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = scalar_net(0.75);
        let mut adam = Adam::new(&net, AdamConfig::default());
        adam.step(&mut net, &scalar_grad(0.0)).unwrap();
        assert_eq!(net.layers()[0].weights[[0, 0]], 0.75);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // m = 0.5 * 1 = 0.5, v = 0.1 * 1 = 0.1; m_hat = 0.5/0.5 = 1, v_hat = 0.1/0.1 = 1
        // w' = 1 - 0.1 * 1 / (1 + 1e-8)
        let mut net = scalar_net(1.0);
        let config = AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        };
        let mut adam = Adam::new(&net, config);
        adam.step(&mut net, &scalar_grad(1.0)).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);

        // second step with g = -2: m = 0.25 - 1.0 = -0.75, v = 0.09 + 0.4 = 0.49
        // m_hat = -0.75/0.75 = -1, v_hat = 0.49/0.19
        adam.step(&mut net, &scalar_grad(-2.0)).unwrap();
        let v_hat: f64 = 0.49 / 0.19;
        let expected2 = expected + 0.1 / (v_hat.sqrt() + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected2).abs() < 1e-14);
        assert_eq!(adam.steps(), 2);
        assert!(adam.second_moments_nonnegative());
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut net = scalar_net(1.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let before = (net.clone(), adam.clone());
        assert!(matches!(
            adam.step(&mut net, &scalar_grad(f64::NAN)),
            Err(Error::NonFinite(_))
        ));
        assert_eq!((net, adam), before);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net = scalar_net(1.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let bad = Gradients {
            layers: vec![LayerGradient {
                weights: array![[1.0, 2.0]],
                bias: array![0.0],
            }],
            input: Array2::zeros((1, 1)),
        };
        assert!(adam.step(&mut net, &bad).is_err());
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn identical_runs_agree() {
        let run = || {
            let mut net = scalar_net(0.3);
            let mut adam = Adam::new(&net, AdamConfig::default());
            for g in [0.5, -1.0, 2.0, 0.1] {
                adam.step(&mut net, &scalar_grad(g)).unwrap();
            }
            (net, adam)
        };
        assert_eq!(run(), run());
    }
}
