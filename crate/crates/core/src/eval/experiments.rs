use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_classifier, roc_auc, split_dataset, AnomalyMethod, AnomalyScore, ClassId, EvalError,
    EvaluationReport, LabeledSample, NearestNeighbor, Result,
};
use crate::dsp::MelSpectrogram;
use crate::nnet::{
    train_autoencoder, train_classifier, train_classifier_standardized, Autoencoder, AutoencoderConfig, LatentEncoding, MlpConfig,
    TrainingConfig,
};

/// What produces an anomaly score.
pub enum Scorer<'a> {
    /// Reconstruction RMSE of a trained autoencoder.
    Autoencoder(&'a Autoencoder),
    /// Distance to the nearest training sample.
    NearestNeighbor(&'a [LabeledSample]),
}

/// One score per test sample; larger means more anomalous.
pub fn anomaly_scores(scorer: &Scorer<'_>, test: &[LabeledSample]) -> Result<Vec<AnomalyScore>> {
    match scorer {
        Scorer::Autoencoder(ae) => test
            .par_iter()
            .map(|s| {
                Ok(AnomalyScore {
                    sample_id: s.sample_id,
                    score: ae.reconstruction_error(&s.mel)?,
                    method: AnomalyMethod::Autoencoder,
                })
            })
            .collect(),
        Scorer::NearestNeighbor(train) => {
            let nn = NearestNeighbor::new(train.iter())?;
            test.iter()
                .map(|s| {
                    Ok(AnomalyScore {
                        sample_id: s.sample_id,
                        score: nn.predict(&s.mel)?.distance,
                        method: AnomalyMethod::NearestNeighbor,
                    })
                })
                .collect()
        }
    }
}

fn rep_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationConfig {
    pub n_classes: usize,
    pub autoencoder: AutoencoderConfig,
    pub autoencoder_training: TrainingConfig,
    pub classifier_hidden: Vec<usize>,
    pub classifier_training: TrainingConfig,
    /// Standardize latent features on the training split before the MLP.
    #[serde(default = "yes")]
    pub standardize_latents: bool,
    pub test_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub ae_mlp: EvaluationReport,
    pub baseline: EvaluationReport,
    pub warnings: Vec<String>,
}

impl ClassificationConfig {
    /// Shrunk dimensions that fit a single-core machine.
    pub fn desk_scale(seed: u64) -> Self {
        let mut ae_train = TrainingConfig::autoencoder_default();
        ae_train.epochs = 40;
        ae_train.batch_size = 16;
        ae_train.learning_rate = 0.003;
        ae_train.seed = seed;
        let mut mlp_train = TrainingConfig::classifier_default();
        mlp_train.epochs = 100;
        mlp_train.batch_size = 32;
        mlp_train.seed = seed;
        Self {
            n_classes: crate::sim::N_CLASSES,
            autoencoder: AutoencoderConfig { hidden: 16, ..AutoencoderConfig::default() },
            autoencoder_training: ae_train,
            classifier_hidden: vec![64, 64],
            classifier_training: mlp_train,
            standardize_latents: true,
            test_fraction: 0.3,
            repetitions: 10,
            seed,
        }
    }
}

/// Repeated random splits; each split trains an autoencoder and an MLP on its
/// latent encodings, and scores both that and the nearest-neighbor baseline.
pub fn classification_experiment(
    corpus: &[LabeledSample],
    cfg: &ClassificationConfig,
) -> Result<ClassificationOutcome> {
    let labels: Vec<ClassId> = corpus.iter().map(|s| s.label).collect();
    let splits = split_dataset(&labels, cfg.test_fraction, cfg.seed, cfg.repetitions)?;
    let warnings: Vec<String> = splits.iter().flat_map(|p| p.warnings.clone()).collect();
    for w in &warnings {
        log::warn!("{w}");
    }

    let ae_mlp = evaluate_classifier(cfg.n_classes, &splits, |rep, part| {
        let train_mels: Vec<MelSpectrogram> =
            part.train.iter().map(|&i| corpus[i].mel.clone()).collect();
        let mut ae_train = cfg.autoencoder_training.clone();
        ae_train.seed = rep_seed(ae_train.seed, rep);
        let (ae, _) = train_autoencoder(&train_mels, &cfg.autoencoder, &ae_train)?;

        let encode = |idx: &[usize]| -> Result<Vec<LatentEncoding>> {
            idx.par_iter()
                .map(|&i| Ok(ae.encode(&corpus[i].mel)?))
                .collect()
        };
        let train_z = encode(&part.train)?;
        let test_z = encode(&part.test)?;
        let train_y: Vec<ClassId> = part.train.iter().map(|&i| labels[i]).collect();
        let mlp_cfg = MlpConfig {
            input: cfg.autoencoder.latent_size(),
            hidden: cfg.classifier_hidden.clone(),
            classes: cfg.n_classes,
            ..MlpConfig::default()
        };
        let mut mlp_train = cfg.classifier_training.clone();
        mlp_train.seed = rep_seed(mlp_train.seed, rep);
        let train_fn = if cfg.standardize_latents { train_classifier_standardized } else { train_classifier };
        let (mlp, _) = train_fn(&train_z, &train_y, &mlp_cfg, &mlp_train)?;

        part.test
            .iter()
            .zip(&test_z)
            .map(|(&i, z)| {
                let p = mlp.predict(z.as_slice())?;
                Ok((labels[i], argmax(&p)))
            })
            .collect()
    })?;

    let baseline = evaluate_classifier(cfg.n_classes, &splits, |_, part| {
        let nn = NearestNeighbor::new(part.train.iter().map(|&i| &corpus[i]))?;
        part.test
            .par_iter()
            .map(|&i| Ok((labels[i], nn.predict(&corpus[i].mel)?.class)))
            .collect()
    })?;

    Ok(ClassificationOutcome {
        ae_mlp,
        baseline,
        warnings,
    })
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoldoutConfig {
    pub autoencoder: AutoencoderConfig,
    pub training: TrainingConfig,
    pub test_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl HoldoutConfig {
    pub fn desk_scale(seed: u64) -> Self {
        let c = ClassificationConfig::desk_scale(seed);
        Self {
            autoencoder: c.autoencoder,
            training: c.autoencoder_training,
            test_fraction: 0.3,
            repetitions: 1,
            seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoldoutOutcome {
    pub holdout_class: ClassId,
    pub auc_autoencoder: Vec<f64>,
    pub auc_baseline: Vec<f64>,
    pub mean_auc_autoencoder: f64,
    pub mean_auc_baseline: f64,
}

/// Novelty detection for one class never seen in training.
///
/// Every repetition splits the remaining classes, trains on the training part,
/// then scores its test part together with all samples of the held-out class.
/// The held-out class is the positive label for AUC.
pub fn holdout_experiment(
    corpus: &[LabeledSample],
    holdout_class: ClassId,
    cfg: &HoldoutConfig,
) -> Result<HoldoutOutcome> {
    let (held, rest): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
        corpus.iter().partition(|s| s.label == holdout_class);
    if held.is_empty() {
        return Err(EvalError::Input(format!(
            "corpus has no samples of held-out class {holdout_class}"
        )));
    }
    let rest_labels: Vec<ClassId> = rest.iter().map(|s| s.label).collect();
    let splits = split_dataset(&rest_labels, cfg.test_fraction, cfg.seed, cfg.repetitions)?;

    let mut auc_ae = Vec::with_capacity(splits.len());
    let mut auc_nn = Vec::with_capacity(splits.len());
    for (rep, part) in splits.iter().enumerate() {
        let train: Vec<LabeledSample> = part.train.iter().map(|&i| rest[i].clone()).collect();
        let test: Vec<LabeledSample> = part
            .test
            .iter()
            .map(|&i| rest[i].clone())
            .chain(held.iter().map(|&s| s.clone()))
            .collect();
        let positive: Vec<bool> = test.iter().map(|s| s.label == holdout_class).collect();

        let mels: Vec<MelSpectrogram> = train.iter().map(|s| s.mel.clone()).collect();
        let mut tcfg = cfg.training.clone();
        tcfg.seed = rep_seed(tcfg.seed, rep);
        let (ae, _) = train_autoencoder(&mels, &cfg.autoencoder, &tcfg)?;

        let score = |sc: Scorer<'_>| -> Result<f64> {
            let s: Vec<f64> = anomaly_scores(&sc, &test)?.iter().map(|a| a.score).collect();
            roc_auc(&s, &positive)
        };
        auc_ae.push(score(Scorer::Autoencoder(&ae))?);
        auc_nn.push(score(Scorer::NearestNeighbor(&train))?);
        log::info!(
            "holdout class {holdout_class} rep {rep}: auc ae {:.3} nn {:.3}",
            auc_ae[rep],
            auc_nn[rep]
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(HoldoutOutcome {
        holdout_class,
        mean_auc_autoencoder: mean(&auc_ae),
        mean_auc_baseline: mean(&auc_nn),
        auc_autoencoder: auc_ae,
        auc_baseline: auc_nn,
    })
}
