//! Small feed-forward feature extractor.
//!
//! Every layer is affine (`y = x W + b`, weights stored `in x out`); hidden
//! layers apply a rectifier and the last layer is linear, so the output is
//! the `N x D` feature matrix consumed by the attention head and the
//! classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScnError};
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor2D,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Tensor2D::from_vec(fan_in, fan_out, data).expect("init shape"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Tensor2D>,
    /// Affine outputs before the rectifier, one per layer.
    pre_activations: Vec<Tensor2D>,
}

/// Gradients with the same layout as [`MlpBackbone`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGrads {
    pub weights: Vec<Tensor2D>,
    pub biases: Vec<Vec<f64>>,
    /// Gradient with respect to the batch inputs.
    pub inputs: Tensor2D,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpBackbone {
    layers: Vec<DenseLayer>,
    #[serde(skip)]
    cache: Option<ForwardCache>,
}

impl PartialEq for MlpBackbone {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl MlpBackbone {
    /// `dims` lists every width from input to feature dimension, e.g.
    /// `[16, 64, 32]` builds two layers.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ScnError::domain(format!(
                "backbone needs at least two positive widths, got {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], rng))
            .collect();
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(ScnError::domain("backbone needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(ScnError::shape(
                    "from_layers",
                    format!("layer {k} weights {}", layer.weights.shape_str()),
                    format!("bias of length {}", layer.bias.len()),
                ));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(ScnError::shape(
                    "from_layers",
                    format!("layer {k} output {}", pair[0].output_dim()),
                    format!("layer {} input {}", k + 1, pair[1].input_dim()),
                ));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn run(&self, inputs: &Tensor2D, mut cache: Option<&mut ForwardCache>) -> Result<Tensor2D> {
        if inputs.cols() != self.input_dim() {
            return Err(ScnError::shape(
                "forward_features",
                inputs.shape_str(),
                format!("backbone input dim {}", self.input_dim()),
            ));
        }
        let last = self.layers.len() - 1;
        let mut current = inputs.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.matmul(&layer.weights)?;
            z.add_row_vector(&layer.bias)?;
            let next = if k == last {
                z.clone()
            } else {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
                a
            };
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(current);
                c.pre_activations.push(z);
            }
            current = next;
        }
        Ok(current)
    }

    /// Forward pass that caches intermediate values for [`Self::backward`].
    pub fn forward_features(&mut self, inputs: &Tensor2D) -> Result<Tensor2D> {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let out = self.run(inputs, Some(&mut cache))?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without caching; safe to call from several threads.
    pub fn infer(&self, inputs: &Tensor2D) -> Result<Tensor2D> {
        self.run(inputs, None)
    }

    /// Backpropagates `upstream` (gradient of the loss w.r.t. the features
    /// returned by the last [`Self::forward_features`] call).
    pub fn backward(&self, upstream: &Tensor2D) -> Result<BackboneGrads> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            ScnError::State("backward called before forward_features".into())
        })?;
        let batch = cache.inputs[0].rows();
        if upstream.shape() != (batch, self.feature_dim()) {
            return Err(ScnError::shape(
                "backward",
                upstream.shape_str(),
                format!("{batch}x{}", self.feature_dim()),
            ));
        }
        let n_layers = self.layers.len();
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut delta = upstream.clone();
        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            weights.push(cache.inputs[k].transpose().matmul(&delta)?);
            biases.push(delta.column_sums());
            let mut back = delta.matmul(&layer.weights.transpose())?;
            if k > 0 {
                let z = &cache.pre_activations[k - 1];
                for (g, &zv) in back.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = back;
        }
        weights.reverse();
        biases.reverse();
        Ok(BackboneGrads {
            weights,
            biases,
            inputs: delta,
        })
    }

    /// Flat mutable views over every parameter: `w0, b0, w1, b1, ...`.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }
}

impl BackboneGrads {
    /// Flat views matching [`MlpBackbone::params_mut`].
    pub fn as_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2D {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor2D::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_network_gives_zero_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = MlpBackbone::new(&[3, 5, 2], &mut rng).unwrap();
        for p in net.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random_tensor(4, 3, &mut rng);
        let f = net.forward_features(&x).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_inputs_through() {
        let layer = DenseLayer {
            weights: Tensor2D::identity(3),
            bias: vec![0.0; 3],
        };
        let net = MlpBackbone::from_layers(vec![layer]).unwrap();
        let x = Tensor2D::from_rows(&[vec![-1.0, 2.0, 0.5]]).unwrap();
        assert_eq!(net.infer(&x).unwrap(), x);
    }

    #[test]
    fn matches_hand_rolled_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = MlpBackbone::new(&[4, 6, 3], &mut rng).unwrap();
        for l in net.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x = random_tensor(5, 4, &mut rng);
        let got = net.forward_features(&x).unwrap();
        let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
        for n in 0..5 {
            let hidden: Vec<f64> = (0..6)
                .map(|h| {
                    let s: f64 = (0..4).map(|i| x.get(n, i) * l0.weights.get(i, h)).sum::<f64>()
                        + l0.bias[h];
                    s.max(0.0)
                })
                .collect();
            for o in 0..3 {
                let s: f64 =
                    (0..6).map(|h| hidden[h] * l1.weights.get(h, o)).sum::<f64>() + l1.bias[o];
                assert!((got.get(n, o) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpBackbone::new(&[2, 2], &mut rng).unwrap();
        let err = net.backward(&Tensor2D::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, ScnError::State(_)));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = MlpBackbone::new(&[3, 4, 2], &mut rng).unwrap();
        let x = random_tensor(3, 3, &mut rng);
        net.forward_features(&x).unwrap();
        let g = net.backward(&Tensor2D::zeros(3, 2)).unwrap();
        assert!(g.as_slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        for (w, l) in g.weights.iter().zip(net.layers()) {
            assert_eq!(w.shape(), l.weights.shape());
        }
    }

    #[test]
    fn linear_scalar_gradient_is_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = MlpBackbone::new(&[4, 1], &mut rng).unwrap();
        let x = Tensor2D::from_rows(&[vec![0.3, -1.2, 2.0, 0.7]]).unwrap();
        net.forward_features(&x).unwrap();
        let g = net.backward(&Tensor2D::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.weights[0].as_slice(), x.as_slice());
        assert_eq!(g.biases[0], vec![1.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut net = MlpBackbone::new(&[3, 5, 4, 2], &mut rng).unwrap();
            // non-zero biases keep pre-activations off the rectifier kink
            for l in net.layers_mut() {
                l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
            }
            let x = random_tensor(4, 3, &mut rng);
            let probe = random_tensor(4, 2, &mut rng);
            // loss = sum(features * probe), so dL/dfeatures = probe
            net.forward_features(&x).unwrap();
            let analytic = net.backward(&probe).unwrap();
            let n_params = net.param_count();
            let flat: Vec<f64> = net.params_mut().iter().flat_map(|s| s.iter().copied()).collect();
            assert_eq!(flat.len(), n_params);
            let template = net.clone();
            let loss = |p: &[f64]| -> f64 {
                let mut m = template.clone();
                let mut off = 0;
                for s in m.params_mut() {
                    s.copy_from_slice(&p[off..off + s.len()]);
                    off += s.len();
                }
                let f = m.infer(&x).unwrap();
                f.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
            };
            let numeric = finite_diff_grad(loss, &flat, 1e-6).unwrap();
            let analytic_flat: Vec<f64> =
                analytic.as_slices().iter().flat_map(|s| s.iter().copied()).collect();
            let err = max_relative_error(&analytic_flat, &numeric);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn rejects_broken_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DenseLayer::init(3, 4, &mut rng);
        let b = DenseLayer::init(5, 2, &mut rng);
        assert!(MlpBackbone::from_layers(vec![a, b]).is_err());
        let mut net = MlpBackbone::new(&[3, 2], &mut rng).unwrap();
        assert!(net.forward_features(&Tensor2D::zeros(1, 4)).is_err());
    }
}
