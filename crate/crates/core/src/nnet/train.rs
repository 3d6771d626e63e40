use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autoencoder::{sample_rng, Autoencoder, AutoencoderConfig};
use super::layers::Parameters;
use super::mlp::{InputScaling, Mlp, MlpConfig};
use super::optim::{Optimizer, OptimizerKind};
use super::{LatentEncoding, NnetError, Result};
use crate::dsp::MelSpectrogram;

/// Samples accumulated sequentially per parallel task. Fixed so that the
/// floating-point summation order, and therefore the trained weights, do
/// not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Rescale each batch gradient to at most this L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl TrainingConfig {
    /// 250 epochs, batch 96, Adam at 0.001.
    pub fn autoencoder_default() -> Self {
        Self {
            epochs: 250,
            batch_size: 96,
            learning_rate: 0.001,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            clip_norm: None,
        }
    }

    /// 200 epochs, batch 96, RMSprop at 0.001.
    pub fn classifier_default() -> Self {
        Self {
            epochs: 200,
            batch_size: 96,
            learning_rate: 0.001,
            optimizer: OptimizerKind::RmsProp,
            seed: 0,
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnetError::Config("epochs and batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnetError::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss per epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epoch_loss: Vec<f64>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_loss.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// A model trainable by [`fit`].
pub trait Trainable: Parameters + Sync + Sized {
    type Sample: Sync;

    fn zeros_like(&self) -> Self;

    /// Loss of one sample; gradients accumulate into `grad`.
    fn accumulate(
        &self,
        sample: &Self::Sample,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grad: &mut Self,
    ) -> Result<f64>;

    fn uses_dropout(&self) -> bool {
        false
    }
}

impl Trainable for Autoencoder {
    type Sample = MelSpectrogram;

    fn zeros_like(&self) -> Self {
        Autoencoder::zeros_like(self)
    }

    fn accumulate(
        &self,
        sample: &MelSpectrogram,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grad: &mut Self,
    ) -> Result<f64> {
        self.loss_and_grad(sample, dropout_rng, grad)
    }

    fn uses_dropout(&self) -> bool {
        self.config.dropout > 0.0
    }
}

impl Trainable for Mlp {
    type Sample = (Vec<f64>, usize);

    fn zeros_like(&self) -> Self {
        Mlp::zeros_like(self)
    }

    fn accumulate(&self, sample: &(Vec<f64>, usize), _: Option<&mut ChaCha8Rng>, grad: &mut Self) -> Result<f64> {
        self.loss_and_grad(&sample.0, sample.1, grad)
    }
}

/// Mini-batch training with per-epoch shuffling; bit-reproducible for a fixed seed.
pub fn fit<M: Trainable>(
    model: &mut M,
    samples: &[M::Sample],
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainingHistory> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(NnetError::Input("training set is empty".into()));
    }
    let n_params = model.param_count();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, n_params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let model_ref: &M = model;
            let partials: Vec<Result<(Vec<f64>, f64)>> = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(chunk_idx, chunk)| {
                    let mut grad = model_ref.zeros_like();
                    let mut loss = 0.0;
                    for (k, &i) in chunk.iter().enumerate() {
                        let position = batch_idx * cfg.batch_size + chunk_idx * GRAD_CHUNK + k;
                        let mut rng = model_ref
                            .uses_dropout()
                            .then(|| sample_rng(cfg.seed, epoch, position));
                        loss += model_ref.accumulate(&samples[i], rng.as_mut(), &mut grad)?;
                    }
                    Ok((grad.flatten(), loss))
                })
                .collect();

            let mut total = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for part in partials {
                let (g, l) = part?;
                for (t, x) in total.iter_mut().zip(&g) {
                    *t += x;
                }
                batch_loss += l;
            }
            let inv = 1.0 / batch.len() as f64;
            total.iter_mut().for_each(|g| *g *= inv);
            if let Some(max_norm) = cfg.clip_norm {
                let norm = total.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    total.iter_mut().for_each(|g| *g *= s);
                }
            }
            if !batch_loss.is_finite() || total.iter().any(|g| !g.is_finite()) {
                return Err(NnetError::NonFinite {
                    epoch,
                    batch: batch_idx,
                });
            }
            opt.step(model, &total);
            if !model.all_finite() {
                return Err(NnetError::NonFinite {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / samples.len() as f64;
        history.epoch_loss.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}

/// Trains a fresh autoencoder on Mel-spectrograms.
pub fn train_autoencoder(
    dataset: &[MelSpectrogram],
    model_cfg: &AutoencoderConfig,
    cfg: &TrainingConfig,
) -> Result<(Autoencoder, TrainingHistory)> {
    if dataset.is_empty() {
        return Err(NnetError::Input("training set is empty".into()));
    }
    let mut model = Autoencoder::new(model_cfg.clone(), cfg.seed)?;
    for mel in dataset {
        model.check_shape(mel)?;
    }
    let history = fit(&mut model, dataset, cfg, |e, l| {
        log::debug!("autoencoder epoch {} rmse {l:.6}", e + 1)
    })?;
    Ok((model, history))
}

/// Trains a fresh classifier on latent encodings.
pub fn train_classifier(
    encodings: &[LatentEncoding],
    labels: &[usize],
    model_cfg: &MlpConfig,
    cfg: &TrainingConfig,
) -> Result<(Mlp, TrainingHistory)> {
    if encodings.len() != labels.len() {
        return Err(NnetError::Input(format!(
            "{} encodings but {} labels",
            encodings.len(),
            labels.len()
        )));
    }
    if encodings.is_empty() {
        return Err(NnetError::Input("training set is empty".into()));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(NnetError::Config(
            "classifier training needs at least two distinct classes".into(),
        ));
    }
    let mut model = Mlp::new(model_cfg.clone(), cfg.seed)?;
    let samples: Vec<(Vec<f64>, usize)> = encodings
        .iter()
        .zip(labels)
        .map(|(e, &l)| (e.0.clone(), l))
        .collect();
    let history = fit(&mut model, &samples, cfg, |e, l| {
        log::debug!("classifier epoch {} loss {l:.6}", e + 1)
    })?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::layers::Activation;

    #[test]
    fn defaults_follow_published_hyperparameters() {
        let ae = TrainingConfig::autoencoder_default();
        assert_eq!((ae.epochs, ae.batch_size, ae.learning_rate), (250, 96, 0.001));
        assert_eq!(ae.optimizer, OptimizerKind::Adam);
        let mlp = TrainingConfig::classifier_default();
        assert_eq!((mlp.epochs, mlp.batch_size, mlp.learning_rate), (200, 96, 0.001));
        assert_eq!(mlp.optimizer, OptimizerKind::RmsProp);
    }

    #[test]
    fn invalid_training_config_is_rejected() {
        let mut cfg = TrainingConfig::classifier_default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_class_classifier_training_fails() {
        let enc = vec![LatentEncoding(vec![0.1, 0.2]); 4];
        let cfg = MlpConfig {
            input: 2,
            hidden: vec![3],
            classes: 2,
            activation: Activation::Relu,
        };
        let r = train_classifier(&enc, &[1, 1, 1, 1], &cfg, &TrainingConfig::classifier_default());
        assert!(matches!(r, Err(NnetError::Config(_))));
    }

    #[test]
    fn empty_autoencoder_dataset_fails() {
        let r = train_autoencoder(&[], &AutoencoderConfig::default(), &TrainingConfig::autoencoder_default());
        assert!(r.is_err());
    }

    #[test]
    fn diverging_training_reports_epoch_and_batch() {
        let enc: Vec<LatentEncoding> = (0..8)
            .map(|i| LatentEncoding(vec![1e200 * i as f64, -1e200]))
            .collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let cfg = MlpConfig {
            input: 2,
            hidden: vec![4],
            classes: 2,
            activation: Activation::Relu,
        };
        let mut tc = TrainingConfig::classifier_default();
        tc.learning_rate = 1e200;
        tc.batch_size = 4;
        let r = train_classifier(&enc, &labels, &cfg, &tc);
        assert!(matches!(r, Err(NnetError::NonFinite { epoch: 0, .. })), "{r:?}");
    }
}

/// Trains on standardized encodings, then folds the scaling into the first
/// layer so the returned model takes raw encodings.
pub fn train_classifier_standardized(
    encodings: &[LatentEncoding],
    labels: &[usize],
    model_cfg: &MlpConfig,
    cfg: &TrainingConfig,
) -> Result<(Mlp, TrainingHistory)> {
    let rows: Vec<Vec<f64>> = encodings.iter().map(|e| e.0.clone()).collect();
    let scaling = InputScaling::fit(&rows)?;
    let scaled: Vec<LatentEncoding> = rows.iter().map(|r| LatentEncoding(scaling.apply(r))).collect();
    let (mut model, history) = train_classifier(&scaled, labels, model_cfg, cfg)?;
    model.absorb_input_scaling(&scaling)?;
    Ok((model, history))
}
