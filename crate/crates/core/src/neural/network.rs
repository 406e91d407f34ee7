use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`, given the activation value `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer computing `act(x W^T + b)` for a row-major batch `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

/// Dense multilayer perceptron: the parameter set of a critic or generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Intermediate values of one forward pass, kept for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Array2<f64>,
    /// Pre-activation of every layer.
    pub pre: Vec<Array2<f64>>,
    /// Activation of every layer; the last entry is the network output.
    pub post: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("trace of a non-empty network")
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    /// Gradient with respect to the network input batch.
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Builds a network with `layer_sizes.len() - 1` dense layers.
    ///
    /// Weights of a layer with fan-in `i` and fan-out `o` are drawn uniformly
    /// from `[-a, a]`, `a = sqrt(6 / (i + o))`, in layer order and row-major
    /// order within a layer, as `a * (2u - 1)` with `u` the next `f64` of a
    /// `ChaCha8Rng` seeded with `seed`. Biases start at zero.
    pub fn new(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidNetwork(
                "at least one layer (two sizes) is required".into(),
            ));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::InvalidNetwork(format!(
                "{} activations given for {} layers",
                activations.len(),
                layer_sizes.len() - 1
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidNetwork("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .zip(activations)
            .map(|(io, &activation)| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    a * (2.0 * rng.random::<f64>() - 1.0)
                });
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("empty layer list".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {k}: bias length {} does not match {} outputs",
                    layer.bias.len(),
                    layer.fan_out()
                )));
            }
            if k > 0 && layers[k - 1].fan_out() != layer.fan_in() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {k} expects {} inputs but layer {} produces {}",
                    layer.fan_in(),
                    k - 1,
                    layers[k - 1].fan_out()
                )));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Iterates over every weight and bias entry.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn max_abs_parameter(&self) -> f64 {
        self.parameters().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_input(&self, batch: &ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                format!("{} columns", batch.ncols()),
            ));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_input(&batch)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map_or(batch.view(), |a| a.view());
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace {
            input: batch.to_owned(),
            pre,
            post,
        })
    }

    /// Network output only, without retaining intermediates.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let mut current: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let x = current.as_ref().map_or(batch.view(), |a| a.view());
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            current = Some(z);
        }
        Ok(current.expect("non-empty network"))
    }

    /// Exact gradients of a scalar loss whose gradient with respect to the
    /// network output is `output_grad`.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: ArrayView2<'_, f64>) -> Result<Gradients> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::shape(
                format!("trace with {} layers", self.layers.len()),
                format!("trace with {} layers", trace.pre.len()),
            ));
        }
        let expected = (trace.batch_size(), self.output_dim());
        if output_grad.dim() != expected {
            return Err(Error::shape(
                format!("{expected:?} output gradient"),
                format!("{:?}", output_grad.dim()),
            ));
        }
        if trace.input.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim()),
                format!("{} columns in trace", trace.input.ncols()),
            ));
        }

        let mut delta = output_grad.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let act = layer.activation;
            if trace.pre[k].dim() != delta.dim() {
                return Err(Error::shape(
                    format!("{:?} pre-activation", delta.dim()),
                    format!("{:?}", trace.pre[k].dim()),
                ));
            }
            Zip::from(&mut delta)
                .and(&trace.pre[k])
                .and(&trace.post[k])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            let x = if k == 0 {
                trace.input.view()
            } else {
                trace.post[k - 1].view()
            };
            let weights = delta.t().dot(&x);
            let bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&layer.weights);
            layers.push(LayerGradient { weights, bias });
            delta = next;
        }
        layers.reverse();
        Ok(Gradients {
            layers,
            input: delta,
        })
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) -> Result<()> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip bound must be positive, got {c}"
            )));
        }
        for layer in &mut self.layers {
            layer.weights.mapv_inplace(|w| w.clamp(-c, c));
            layer.bias.mapv_inplace(|b| b.clamp(-c, c));
        }
        Ok(())
    }

    /// Activations of the layer feeding the final layer.
    pub fn penultimate_features(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if self.layers.len() < 2 {
            return Err(Error::InvalidNetwork(
                "penultimate features need at least two layers".into(),
            ));
        }
        let mut trace = self.forward(batch)?;
        let k = self.layers.len() - 2;
        Ok(trace.post.swap_remove(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        let trace = net.forward(x.view()).unwrap();
        assert_eq!(trace.output(), &x);
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        let layer = DenseLayer {
            weights: array![[1.0, 1.0]],
            bias: array![0.0],
            activation: Activation::Relu,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let trace = net.forward(array![[-3.0, 1.0]].view()).unwrap();
        assert_eq!(trace.pre[0][[0, 0]], -2.0);
        assert_eq!(trace.output()[[0, 0]], 0.0);
    }

    #[test]
    fn new_rejects_bad_layouts() {
        assert!(Mlp::new(&[], &[], 0).is_err());
        assert!(Mlp::new(&[2], &[], 0).is_err());
        assert!(Mlp::new(&[2, 0, 1], &[Activation::Relu; 2], 0).is_err());
        assert!(Mlp::new(&[2, 4, 1], &[Activation::Relu], 0).is_err());
    }

    #[test]
    fn from_layers_rejects_non_chaining_sizes() {
        let a = DenseLayer {
            weights: Array2::zeros((4, 2)),
            bias: Array1::zeros(4),
            activation: Activation::Relu,
        };
        let b = DenseLayer {
            weights: Array2::zeros((1, 3)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        };
        assert!(matches!(
            Mlp::from_layers(vec![a, b]),
            Err(Error::InvalidNetwork(_))
        ));
        assert!(Mlp::from_layers(vec![]).is_err());
    }

    #[test]
    fn biases_start_at_zero_and_init_is_deterministic() {
        let acts = [Activation::Relu, Activation::Identity];
        let a = Mlp::new(&[2, 4, 1], &acts, 7).unwrap();
        let b = Mlp::new(&[2, 4, 1], &acts, 7).unwrap();
        assert_eq!(a, b);
        for layer in a.layers() {
            assert!(layer.bias.iter().all(|&v| v == 0.0));
        }
        let c = Mlp::new(&[2, 4, 1], &acts, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_rejects_wrong_width_and_nan() {
        let net = Mlp::new(&[2, 3, 1], &[Activation::Tanh, Activation::Identity], 1).unwrap();
        assert!(matches!(
            net.forward(Array2::zeros((4, 3)).view()),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            net.forward(array![[f64::NAN, 0.0]].view()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn backward_rejects_mismatched_output_grad() {
        let net = Mlp::new(&[2, 3, 1], &[Activation::Tanh, Activation::Identity], 1).unwrap();
        let trace = net.forward(Array2::zeros((4, 2)).view()).unwrap();
        assert!(net.backward(&trace, Array2::zeros((3, 1)).view()).is_err());
        assert!(net.backward(&trace, Array2::zeros((4, 2)).view()).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = Mlp::new(
            &[3, 5, 2],
            &[Activation::LeakyRelu(0.2), Activation::Sigmoid],
            3,
        )
        .unwrap();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let trace = net.forward(x.view()).unwrap();
        let grads = net.backward(&trace, Array2::zeros((6, 2)).view()).unwrap();
        for g in &grads.layers {
            assert!(g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0));
        }
        assert!(grads.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_mean_loss_gradient_is_mean_input() {
        let net = Mlp::new(&[3, 1], &[Activation::Identity], 11).unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0], [4.0, -2.0, 0.0], [0.0, 1.0, 1.0]];
        let b = x.nrows() as f64;
        let trace = net.forward(x.view()).unwrap();
        let grads = net
            .backward(&trace, Array2::from_elem((4, 1), 1.0 / b).view())
            .unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        for j in 0..3 {
            assert!((grads.layers[0].weights[[0, j]] - mean[j]).abs() < 1e-15);
        }
        assert!((grads.layers[0].bias[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clip_clamps_and_is_idempotent() {
        let layer = DenseLayer {
            weights: array![[-2.0, 0.005, 2.0]],
            bias: array![0.5],
            activation: Activation::Identity,
        };
        let mut net = Mlp::from_layers(vec![layer]).unwrap();
        net.clip_weights(0.01).unwrap();
        assert_eq!(net.layers()[0].weights, array![[-0.01, 0.005, 0.01]]);
        assert_eq!(net.layers()[0].bias, array![0.01]);
        let once = net.clone();
        net.clip_weights(0.01).unwrap();
        assert_eq!(net, once);
        assert!(net.clip_weights(0.0).is_err());
        assert!(net.clip_weights(-1.0).is_err());
        assert!(net.clip_weights(f64::NAN).is_err());
    }

    #[test]
    fn clip_leaves_tiny_weights_untouched() {
        let mut net = Mlp::new(
            &[2, 64, 64, 1],
            &[Activation::LeakyRelu(0.2), Activation::LeakyRelu(0.2), Activation::Identity],
            5,
        )
        .unwrap();
        // Glorot bound for the widest layer is sqrt(6/66) ~ 0.30; scale below 0.01.
        for layer in net.layers_mut() {
            layer.weights.mapv_inplace(|w| w * 0.03);
        }
        assert!(net.max_abs_parameter() < 0.01);
        let before = net.clone();
        net.clip_weights(0.01).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn penultimate_features_match_trace() {
        let net = Mlp::new(
            &[2, 4, 3, 1],
            &[Activation::Relu, Activation::Tanh, Activation::Identity],
            9,
        )
        .unwrap();
        let x = array![[0.3, -0.7], [1.2, 0.4], [-0.5, -0.5]];
        let features = net.penultimate_features(x.view()).unwrap();
        let trace = net.forward(x.view()).unwrap();
        assert_eq!(features.nrows(), 3);
        assert_eq!(features, trace.post[1]);

        let two = Mlp::new(&[2, 4, 1], &[Activation::Relu, Activation::Identity], 9).unwrap();
        let f2 = two.penultimate_features(x.view()).unwrap();
        assert_eq!(f2, two.forward(x.view()).unwrap().post[0]);

        let single = Mlp::new(&[2, 1], &[Activation::Identity], 9).unwrap();
        assert!(single.penultimate_features(x.view()).is_err());
    }
}
