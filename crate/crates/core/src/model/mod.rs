//! Causal per-frame mask estimator with hand-written backpropagation, Adam and
//! a training loop.

mod adam;
mod checkpoint;
mod train;

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::signal::{ensure_same_dim, ComplexSpectrogram, GainMask, MagnitudeSpectrogram};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{train, train_with_progress, TrainConfig};

/// Log-compressed magnitudes of the current and `context - 1` previous
/// frames, oldest first. Frames before the start are zero.
pub fn features(noisy_mag: &MagnitudeSpectrogram, context: usize) -> Result<Array2<f64>> {
    if context == 0 {
        return Err(Error::invalid("context must be >= 1"));
    }
    let (frames, bins) = noisy_mag.dim();
    let compressed = noisy_mag.values().mapv(f64::ln_1p);
    let mut out = Array2::zeros((frames, context * bins));
    for l in 0..frames {
        for c in 0..context {
            // Block c holds frame l - (context - 1 - c).
            let back = context - 1 - c;
            if back <= l {
                out.slice_mut(s![l, c * bins..(c + 1) * bins])
                    .assign(&compressed.row(l - back));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match (self, x > 0.0) {
            (_, true) => 1.0,
            (Activation::Elu, false) => x.exp(),
            (Activation::Relu, false) => 0.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elu" => Ok(Activation::Elu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskNetConfig {
    /// Frequency bins per frame; also the output width.
    pub num_bins: usize,
    /// Frames per prediction, including the current one.
    pub context: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MaskNetConfig {
    /// Context 5, two hidden layers of 256 units, ELU.
    pub fn with_defaults(num_bins: usize) -> Self {
        Self {
            num_bins,
            context: 5,
            hidden_sizes: vec![256, 256],
            activation: Activation::Elu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.context * self.num_bins
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bins == 0 || self.context == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid(format!("network sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim()];
        widths.extend(&self.hidden_sizes);
        widths.push(self.num_bins);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Fully connected layer `y = x·W + b` with `W` of shape `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn slices(&self) -> [&[f64]; 2] {
        [
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &MaskNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.slices().concat()).collect()
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    sigmoid: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskNet {
    config: MaskNetConfig,
    layers: Vec<Dense>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Largest double below one; keeps saturated outputs strictly inside (0, 1).
const MASK_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

impl MaskNet {
    /// He-normal initialization for hidden layers, Xavier-normal for the
    /// output layer, zero biases.
    pub fn new(config: MaskNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1417));
        let dims = config.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let std = if i == last {
                    (2.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (2.0 / fan_in as f64).sqrt()
                };
                let normal = Normal::new(0.0, std).expect("finite std");
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Builds a network from explicit layers; shapes must match `config`.
    pub fn from_layers(config: MaskNetConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::invalid(format!("expected {} layers, got {}", dims.len(), layers.len())));
        }
        for (&(i, o), layer) in dims.iter().zip(&layers) {
            ensure_same_dim((i, o), layer.weights.dim())?;
            ensure_same_dim((1, o), (1, layer.bias.len()))?;
        }
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                weights: l.weights.as_standard_layout().into_owned(),
                bias: l.bias,
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MaskNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.slices().concat()).collect()
    }

    pub fn set_parameters_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::LengthMismatch {
                expected: self.num_parameters(),
                actual: values.len(),
            });
        }
        let mut rest = values;
        for slice in self.parameter_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub(crate) fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }

    /// Mask for a `(frames, context·bins)` feature matrix, plus the cache
    /// needed by [`MaskNet::backward`].
    pub fn forward(&self, features: &Array2<f64>) -> Result<(GainMask, ForwardCache)> {
        ensure_same_dim((features.nrows(), self.config.input_dim()), features.dim())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = features.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weights) + &layer.bias;
            let next = if i == last {
                z.mapv(sigmoid)
            } else {
                let act = self.config.activation;
                z.mapv(|v| act.apply(v))
            };
            inputs.push(x);
            pre_activations.push(z);
            x = next;
        }
        let mask = GainMask::new(x.mapv(|v| v.clamp(f64::MIN_POSITIVE, MASK_CEIL)))?;
        Ok((
            mask,
            ForwardCache {
                inputs,
                pre_activations,
                sigmoid: x,
            },
        ))
    }

    /// Mask for a noisy spectrogram.
    pub fn predict(&self, noisy: &ComplexSpectrogram) -> Result<GainMask> {
        self.predict_magnitude(&noisy.magnitude())
    }

    pub fn predict_magnitude(&self, noisy_mag: &MagnitudeSpectrogram) -> Result<GainMask> {
        if noisy_mag.num_bins() != self.config.num_bins {
            return Err(Error::ShapeMismatch {
                expected: (noisy_mag.num_frames(), self.config.num_bins),
                actual: noisy_mag.dim(),
            });
        }
        Ok(self.forward(&features(noisy_mag, self.config.context)?)?.0)
    }

    /// Parameter gradients of a scalar loss given its gradient with respect to
    /// the emitted mask.
    pub fn backward(&self, cache: &ForwardCache, grad_mask: &Array2<f64>) -> Result<Gradients> {
        ensure_same_dim(cache.sigmoid.dim(), grad_mask.dim())?;
        let mut delta = grad_mask * &cache.sigmoid.mapv(|y| y * (1.0 - y));
        let mut layers = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let weights = cache.inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let act = self.config.activation;
                let upstream = delta.dot(&self.layers[i].weights.t());
                delta = upstream * &cache.pre_activations[i - 1].mapv(|z| act.derivative(z));
            }
            layers.push(Dense { weights, bias });
        }
        layers.reverse();
        Ok(Gradients { layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, StftConfig, Waveform, WindowKind};
    use ndarray::array;
    use rand::Rng;

    fn small_net(bins: usize, context: usize, activation: Activation, seed: u64) -> MaskNet {
        MaskNet::new(
            MaskNetConfig {
                num_bins: bins,
                context,
                hidden_sizes: vec![7, 5],
                activation,
            },
            seed,
        )
        .unwrap()
    }

    fn random_features(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..3.0))
    }

    #[test]
    fn features_layout() {
        let config = StftConfig::default();
        let zero = MagnitudeSpectrogram::new(Array2::zeros((4, config.num_bins())), config).unwrap();
        assert!(features(&zero, 3).unwrap().iter().all(|v| *v == 0.0));

        let mag = MagnitudeSpectrogram::new(
            Array2::from_shape_fn((3, config.num_bins()), |(l, k)| (l * 1000 + k) as f64),
            config,
        )
        .unwrap();
        let single = features(&mag, 1).unwrap();
        assert_eq!(single, mag.values().mapv(f64::ln_1p));
        let f = features(&mag, 3).unwrap();
        let k = config.num_bins();
        assert!(f.slice(s![0, ..2 * k]).iter().all(|v| *v == 0.0));
        assert_eq!(f.slice(s![0, 2 * k..]), single.row(0));
        assert!(f.slice(s![1, ..k]).iter().all(|v| *v == 0.0));
        assert_eq!(f.slice(s![1, k..2 * k]), single.row(0));
        assert_eq!(f.slice(s![2, ..k]), single.row(0));
        assert_eq!(f.slice(s![2, 2 * k..]), single.row(2));
        assert!(features(&mag, 0).is_err());
    }

    #[test]
    fn outputs_in_open_unit_interval() {
        let net = small_net(6, 2, Activation::Elu, 1);
        let (mask, _) = net.forward(&(random_features(9, 12, 2) * 1e3)).unwrap();
        assert!(mask.values().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn zero_upstream_gradient() {
        let net = small_net(6, 2, Activation::Elu, 1);
        let (_, cache) = net.forward(&random_features(4, 12, 2)).unwrap();
        let grads = net.backward(&cache, &Array2::zeros((4, 6))).unwrap();
        assert!(grads.to_flat().iter().all(|v| *v == 0.0));
        assert!(net.backward(&cache, &Array2::zeros((3, 6))).is_err());
    }

    #[test]
    fn single_layer_hand_case() {
        // 2 inputs, 2 outputs, no hidden layer: m = sigmoid(x·W + b).
        let config = MaskNetConfig {
            num_bins: 2,
            context: 1,
            hidden_sizes: vec![],
            activation: Activation::Elu,
        };
        let net = MaskNet::from_layers(
            config,
            vec![Dense {
                weights: array![[0.5, -1.0], [0.25, 2.0]],
                bias: array![0.1, -0.2],
            }],
        )
        .unwrap();
        let x = array![[1.0, 2.0]];
        let (mask, cache) = net.forward(&x).unwrap();
        let z: [f64; 2] = [0.5 + 0.5 + 0.1, -1.0 + 4.0 - 0.2];
        let m = z.map(|v| 1.0 / (1.0 + (-v).exp()));
        assert!((mask.values()[[0, 0]] - m[0]).abs() < 1e-15);
        assert!((mask.values()[[0, 1]] - m[1]).abs() < 1e-15);
        let upstream = array![[1.0, -3.0]];
        let g = net.backward(&cache, &upstream).unwrap();
        let d = [m[0] * (1.0 - m[0]), -3.0 * m[1] * (1.0 - m[1])];
        let expected_w = array![[d[0], d[1]], [2.0 * d[0], 2.0 * d[1]]];
        assert!((&g.layers[0].weights - &expected_w).iter().all(|e| e.abs() < 1e-15));
        assert!((g.layers[0].bias[0] - d[0]).abs() < 1e-15);
        assert!((g.layers[0].bias[1] - d[1]).abs() < 1e-15);
    }

    fn fd_check(activation: Activation) {
        // Loss = sum(w ⊙ mask), so dL/dmask = w.
        let net = small_net(5, 3, activation, 11);
        let x = random_features(6, 15, 12) - 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = Array2::from_shape_simple_fn((6, 5), || rng.random_range(-1.0..1.0));
        let loss = |n: &MaskNet| (n.forward(&x).unwrap().0.values() * &w).sum();
        let (_, cache) = net.forward(&x).unwrap();
        let analytic = net.backward(&cache, &w).unwrap().to_flat();
        let params = net.parameters_flat();
        let h = 1e-6;
        let mut num = vec![0.0; params.len()];
        let mut probe = net.clone();
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            probe.set_parameters_flat(&p).unwrap();
            let up = loss(&probe);
            p[i] -= 2.0 * h;
            probe.set_parameters_flat(&p).unwrap();
            num[i] = (up - loss(&probe)) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "{activation:?}: {}", diff / norm);
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check(Activation::Elu);
        fd_check(Activation::Relu);
    }

    #[test]
    fn mask_is_causal() {
        let config = StftConfig::new(32, 16, 32, WindowKind::SqrtHann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wave = Waveform::new((0..400).map(|_| rng.random_range(-0.5..0.5)).collect(), 8000).unwrap();
        let spec = stft(&wave, &config).unwrap();
        let net = small_net(config.num_bins(), 4, Activation::Elu, 5);
        let base = net.predict(&spec).unwrap();
        for l in 0..spec.num_frames() {
            let mut values = spec.values().clone();
            values.row_mut(l).mapv_inplace(|c| c * 3.0 + 0.7);
            let perturbed = net
                .predict(&ComplexSpectrogram::new(values, config).unwrap())
                .unwrap();
            assert_eq!(base.values().slice(s![..l, ..]), perturbed.values().slice(s![..l, ..]));
            assert_ne!(base.values().row(l), perturbed.values().row(l));
        }
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(small_net(4, 2, Activation::Elu, 9), small_net(4, 2, Activation::Elu, 9));
        assert_ne!(small_net(4, 2, Activation::Elu, 9), small_net(4, 2, Activation::Elu, 10));
        let bad = MaskNetConfig {
            num_bins: 4,
            context: 0,
            hidden_sizes: vec![],
            activation: Activation::Relu,
        };
        assert!(MaskNet::new(bad, 0).is_err());
    }
}
