use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, features, AdamConfig, AdamState, Gradients, MaskNet};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossParams, Supervision};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Utterances per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 30,
            batch_size: 4,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            loss: LossKind::Generalized(
                LossParams::with_beta0_db(2.0, 1.0, 1.0, -20.0).expect("valid defaults"),
            ),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        self.adam().validate()
    }
}

/// Trains `net` in place and returns the mean training loss of every epoch.
/// Zero epochs leave the network untouched.
pub fn train(net: &mut MaskNet, data: &[Supervision], config: &TrainConfig) -> Result<Vec<f64>> {
    train_with_progress(net, data, config, |_, _| {})
}

/// Like [`train`], calling `progress(epoch, mean_loss)` after every epoch.
///
/// Each utterance is one example; a batch averages the gradients of
/// `batch_size` utterances. The visiting order is reshuffled every epoch from
/// `config.seed`, so equal inputs give bit-identical runs. Reported losses are
/// measured before each update.
pub fn train_with_progress(
    net: &mut MaskNet,
    data: &[Supervision],
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let context = net.config().context;
    let inputs = data
        .iter()
        .map(|d| {
            if d.noisy_mag.num_bins() != net.config().num_bins {
                return Err(Error::ShapeMismatch {
                    expected: (d.noisy_mag.num_frames(), net.config().num_bins),
                    actual: d.noisy_mag.dim(),
                });
            }
            features(&d.noisy_mag, context)
        })
        .collect::<Result<Vec<_>>>()?;
    let adam = config.adam();
    let mut state = AdamState::new(net);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x7AA1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(net);
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let (mask, cache) = net.forward(&inputs[i])?;
                let result = config.loss.evaluate(&data[i], &mask)?;
                total += result.value;
                grads.add_scaled(&net.backward(&cache, &result.grad_mask)?, weight);
            }
            adam_step(net, &grads, &mut state, &adam)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::DegenerateSignal(format!("training loss became {mean} in epoch {epoch}")));
        }
        history.push(mean);
        progress(epoch, mean);
    }
    Ok(history)
}
