use std::path::PathBuf;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Result;
use crate::dsp::{AudioSegment, MelSpectrogram, Preprocessor};
use crate::localization::{
    estimate_delays, solve_position, ArrayGeometry, DelayConfig, LocalizationResult, SearchRange,
};
use crate::nnet::{Autoencoder, Mlp, NnetError};
use crate::risk::{assess, ClassProbabilities, RiskAssessment, RiskLevel, RiskPolicy, TriggeredRule};

/// An autoencoder with the classifier trained on its latents.
#[derive(Clone, Debug)]
pub struct ModelSet {
    pub id: String,
    pub autoencoder: Autoencoder,
    pub classifier: Mlp,
    /// Name of each classifier output, in output order.
    pub class_names: Vec<String>,
}

impl ModelSet {
    pub fn new(id: impl Into<String>, autoencoder: Autoencoder, classifier: Mlp, class_names: Vec<String>) -> Result<Self> {
        if classifier.config.input != autoencoder.config.latent_size() {
            return Err(NnetError::Shape(format!(
                "classifier expects {} inputs, autoencoder latent has {}",
                classifier.config.input,
                autoencoder.config.latent_size()
            ))
            .into());
        }
        if classifier.config.classes != class_names.len() {
            return Err(NnetError::Shape(format!(
                "classifier has {} outputs but {} class names were given",
                classifier.config.classes,
                class_names.len()
            ))
            .into());
        }
        Ok(Self { id: id.into(), autoencoder, classifier, class_names })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocessor: Preprocessor,
    /// Channel `i` is recorded by hydrophone `i`.
    pub geometry: ArrayGeometry,
    pub delays: DelayConfig,
    /// Localization search half width around the reference hydrophone, meters.
    pub search_half_width_m: f64,
    pub search_step_m: f64,
    /// A buffer whose loudest channel stays below this RMS (dBFS) is silent.
    pub silence_floor_db: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let geometry = ArrayGeometry::default();
        Self {
            preprocessor: Preprocessor::default(),
            delays: DelayConfig::for_geometry(&geometry),
            geometry,
            search_half_width_m: 60.0,
            search_step_m: 0.25,
            silence_floor_db: -90.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    Encode,
    Classify,
    Anomaly,
    Localize,
    Assess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

/// Milliseconds spent in each stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_ms: f64,
    pub encode_ms: f64,
    pub classify_ms: f64,
    pub anomaly_ms: f64,
    pub localize_ms: f64,
    pub assess_ms: f64,
    /// Wall clock from the first stage start to the last stage end.
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum_ms(&self) -> f64 {
        self.preprocess_ms + self.encode_ms + self.classify_ms + self.anomaly_ms + self.localize_ms + self.assess_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub observation_id: u64,
    pub started_at: DateTime<Utc>,
    pub stream_time_s: Option<f64>,
    pub channel_ids: Vec<String>,
    pub audio_ref: Option<PathBuf>,
    pub mel_ref: Option<PathBuf>,
    /// Channel the Mel matrix was computed from (the loudest one).
    pub mel_channel: Option<String>,
    pub class_probs: ClassProbabilities,
    pub predicted_class: Option<String>,
    pub anomaly_score: Option<f64>,
    /// Anomaly score above the threshold of the policy in force.
    pub anomaly_flag: bool,
    pub location: Option<LocalizationResult>,
    pub assessment: RiskAssessment,
    pub timings: StageTimings,
    pub stage_errors: Vec<StageError>,
    /// No channel carried signal; the model stages were skipped.
    pub silent: bool,
    pub model_id: String,
    pub label: Option<String>,
}

impl ObservationRecord {
    pub fn level(&self) -> RiskLevel {
        self.assessment.level
    }

    /// Re-runs only the assessment stage under another policy.
    pub fn reassess(&self, policy: &RiskPolicy) -> Result<RiskAssessment> {
        let mut a = assess(&self.class_probs, self.anomaly_score.unwrap_or(0.0), self.location.as_ref(), policy)?;
        if self.stage_errors.iter().any(|e| e.stage != Stage::Localize) {
            escalate_for_failure(&mut a, &self.stage_errors);
        }
        a.observation_id = Some(self.observation_id);
        Ok(a)
    }
}

/// Pipeline output before the service assigns an id and storage references.
pub struct PipelineRun {
    pub record: ObservationRecord,
    pub mel: Option<MelSpectrogram>,
}

fn rms_db(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NEG_INFINITY;
    }
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    10.0 * ms.log10()
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn escalate_for_failure(a: &mut RiskAssessment, errors: &[StageError]) {
    let failed: Vec<String> = errors
        .iter()
        .filter(|e| e.stage != Stage::Localize)
        .map(|e| format!("{:?}", e.stage).to_lowercase())
        .collect();
    a.trace.push(TriggeredRule {
        rule: "pipeline_error".into(),
        level: RiskLevel::Review,
        detail: format!("stages failed: {}", failed.join(", ")),
    });
    a.level = a.level.max(RiskLevel::Review);
}

/// Runs preprocess → encode → classify → anomaly → localize → assess on one
/// aligned buffer.
///
/// A failing stage is recorded in `stage_errors` and the later stages run on
/// whatever is available. Localization runs only when delay estimation
/// succeeds; its failure just leaves `location` empty. Failures of the other
/// stages raise the level to at least `Review`.
///
/// A silent buffer skips the model stages: its class distribution is
/// uniform and its anomaly score is zero.
pub fn run_pipeline(
    channels: &[AudioSegment],
    models: &ModelSet,
    policy: &RiskPolicy,
    cfg: &PipelineConfig,
) -> PipelineRun {
    let started_at = Utc::now();
    let t_all = Instant::now();
    let mut timings = StageTimings::default();
    let mut errors = Vec::new();
    let mut fail = |stage, e: &dyn std::fmt::Display| errors.push(StageError { stage, message: e.to_string() });

    let t = Instant::now();
    let loudest = channels
        .iter()
        .max_by(|a, b| rms_db(&a.samples).total_cmp(&rms_db(&b.samples)));
    let mel = match loudest {
        None => {
            fail(Stage::Preprocess, &"no channels");
            None
        }
        Some(seg) => match cfg.preprocessor.process(seg) {
            Ok(m) => Some(m),
            Err(e) => {
                fail(Stage::Preprocess, &e);
                None
            }
        },
    };
    timings.preprocess_ms = elapsed_ms(t);
    let silent = loudest.is_some_and(|c| !(rms_db(&c.samples) >= cfg.silence_floor_db));
    let model_input = mel.as_ref().filter(|_| !silent);

    let t = Instant::now();
    let latent = model_input.and_then(|m| match models.autoencoder.encode(m) {
        Ok(z) => Some(z),
        Err(e) => {
            fail(Stage::Encode, &e);
            None
        }
    });
    timings.encode_ms = elapsed_ms(t);

    let t = Instant::now();
    let mut class_probs = ClassProbabilities::new();
    if silent {
        let u = 1.0 / models.class_names.len() as f64;
        class_probs = models.class_names.iter().map(|n| (n.clone(), u)).collect();
    } else if let Some(z) = &latent {
        match models.classifier.predict(z.as_slice()) {
            Ok(p) => class_probs = models.class_names.iter().cloned().zip(p).collect(),
            Err(e) => fail(Stage::Classify, &e),
        }
    }
    timings.classify_ms = elapsed_ms(t);

    let t = Instant::now();
    let anomaly_score = if silent {
        Some(0.0)
    } else {
        model_input.and_then(|m| match models.autoencoder.reconstruction_error(m) {
        Ok(s) => Some(s),
        Err(e) => {
            fail(Stage::Anomaly, &e);
            None
        }
    })
    };
    timings.anomaly_ms = elapsed_ms(t);

    let t = Instant::now();
    let location = match estimate_delays(channels, &cfg.delays) {
        Ok(tdoa) => {
            let search = SearchRange::around(cfg.geometry.position(tdoa.reference), cfg.search_half_width_m)
                .with_step(cfg.search_step_m);
            match solve_position(&tdoa, &cfg.geometry, &search) {
                Ok(r) => Some(r),
                Err(e) => {
                    fail(Stage::Localize, &e);
                    None
                }
            }
        }
        Err(e) => {
            fail(Stage::Localize, &e);
            None
        }
    };
    timings.localize_ms = elapsed_ms(t);

    let t = Instant::now();
    let assessment = match assess(&class_probs, anomaly_score.unwrap_or(0.0), location.as_ref(), policy) {
        Ok(mut a) => {
            if errors.iter().any(|e| e.stage != Stage::Localize) {
                escalate_for_failure(&mut a, &errors);
            }
            a
        }
        Err(e) => {
            fail(Stage::Assess, &e);
            let mut a = assess(&ClassProbabilities::new(), 0.0, None, policy)
                .expect("empty signals always assess");
            escalate_for_failure(&mut a, &errors);
            a
        }
    };
    timings.assess_ms = elapsed_ms(t);
    timings.total_ms = elapsed_ms(t_all);

    let predicted_class = class_probs
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k.clone());
    PipelineRun {
        record: ObservationRecord {
            observation_id: 0,
            started_at,
            stream_time_s: channels.first().map(AudioSegment::start_time),
            channel_ids: channels.iter().map(|c| c.channel_id.clone()).collect(),
            audio_ref: None,
            mel_ref: None,
            mel_channel: loudest.map(|c| c.channel_id.clone()),
            class_probs,
            predicted_class,
            anomaly_flag: anomaly_score.is_some_and(|s| s > policy.anomaly_threshold),
            anomaly_score,
            location,
            assessment,
            timings,
            stage_errors: errors,
            silent,
            model_id: models.id.clone(),
            label: None,
        },
        mel,
    }
}
