use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use super::pipeline::{run_pipeline, ModelSet, ObservationRecord, PipelineConfig};
use super::{Result, ServiceError};
use crate::dsp::AudioSegment;
use crate::nnet::{load_autoencoder, load_classifier};
use crate::risk::{RiskAssessment, RiskLevel, RiskPolicy};
use crate::sim::{EventClass, NewSample, Provenance, SampleStore, StoredSample};

pub const DEFAULT_PAGE_SIZE: usize = 50;
const OBSERVATIONS: &str = "observations.jsonl";
const POLICIES: &str = "policies";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub pipeline: PipelineConfig,
    /// Live events buffered per subscriber before it has to catch up from the log.
    pub event_capacity: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), pipeline: PipelineConfig::default(), event_capacity: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub version: u64,
    pub policy: RiskPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub active: bool,
    pub latent_size: usize,
    pub hidden: usize,
    pub classes: Vec<String>,
}

/// One assessment on the live stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEvent {
    pub observation_id: u64,
    pub level: RiskLevel,
    pub action: Option<String>,
    pub predicted_class: Option<String>,
    pub anomaly_score: Option<f64>,
    pub assessment: RiskAssessment,
}

impl From<&ObservationRecord> for ObservationEvent {
    fn from(r: &ObservationRecord) -> Self {
        Self {
            observation_id: r.observation_id,
            level: r.assessment.level,
            action: r.assessment.action.clone(),
            predicted_class: r.predicted_class.clone(),
            anomaly_score: r.anomaly_score,
            assessment: r.assessment.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationQuery {
    /// `anomaly` restricts to anomaly-flagged observations, `review` to
    /// anything above `NORMAL`.
    pub flag: Option<String>,
    /// `score` (descending) or `id` (ascending). Defaults to `score` for the
    /// anomaly queue and `id` otherwise.
    pub order: Option<String>,
    pub cursor: Option<String>,
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationPage {
    pub items: Vec<ObservationRecord>,
    pub next_cursor: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts(pub BTreeMap<RiskLevel, usize>);

impl LevelCounts {
    fn tally(levels: impl IntoIterator<Item = RiskLevel>) -> Self {
        let mut m: BTreeMap<RiskLevel, usize> = RiskLevel::ALL.iter().map(|l| (*l, 0)).collect();
        for l in levels {
            *m.get_mut(&l).expect("all levels present") += 1;
        }
        Self(m)
    }

    /// Observations above `NORMAL`.
    pub fn flagged(&self) -> usize {
        self.0.iter().filter(|(l, _)| **l != RiskLevel::Normal).map(|(_, n)| n).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub active_version: u64,
    pub observations: usize,
    pub active: LevelCounts,
    pub draft: LevelCounts,
    /// `draft − active` per level.
    pub delta: BTreeMap<RiskLevel, i64>,
    pub active_flagged: usize,
    pub draft_flagged: usize,
    pub active_anomalies: usize,
    pub draft_anomalies: usize,
    /// Observations whose level would change: `(id, active, draft)`.
    pub changed: Vec<(u64, RiskLevel, RiskLevel)>,
}

/// Shared state behind the pipeline worker and the HTTP API.
///
/// Policy and model references are `Arc` snapshots: an observation takes
/// both when it starts and keeps them to the end, so swaps only affect
/// later observations.
pub struct Service {
    cfg: ServiceConfig,
    store: SampleStore,
    observations: RwLock<BTreeMap<u64, ObservationRecord>>,
    log: Mutex<File>,
    policy: RwLock<Arc<RiskPolicy>>,
    models: RwLock<BTreeMap<String, Arc<ModelSet>>>,
    active_model: RwLock<Arc<ModelSet>>,
    events: broadcast::Sender<ObservationEvent>,
    commit: Mutex<()>,
}

fn fsync_append<T: Serialize>(file: &mut File, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}

fn policy_path(dir: &Path, version: u64) -> PathBuf {
    dir.join(POLICIES).join(format!("v{version:06}.json"))
}

impl Service {
    /// Opens (or creates) the data directory.
    ///
    /// The newest stored policy wins over `policy`; an empty directory stores
    /// `policy` as its first version.
    pub fn open(cfg: ServiceConfig, models: ModelSet, policy: RiskPolicy) -> Result<Arc<Self>> {
        let dir = &cfg.data_dir;
        fs::create_dir_all(dir.join(POLICIES))?;
        let store = SampleStore::open(dir.join("samples"))?;

        let mut observations = BTreeMap::new();
        let log_path = dir.join(OBSERVATIONS);
        if log_path.exists() {
            for line in BufReader::new(File::open(&log_path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: ObservationRecord = serde_json::from_str(&line)?;
                observations.insert(r.observation_id, r);
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;

        let mut stored: Vec<PathBuf> = fs::read_dir(dir.join(POLICIES))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        stored.sort();
        let policy = match stored.last() {
            Some(p) => RiskPolicy::load(p)?,
            None => {
                let errs = policy.validation_errors();
                if !errs.is_empty() {
                    return Err(ServiceError::InvalidPolicy(errs));
                }
                policy.save(policy_path(dir, policy.version))?;
                policy
            }
        };
        policy.check_classes(models.class_names.iter().map(String::as_str))?;

        let (events, _) = broadcast::channel(cfg.event_capacity.max(1));
        let models = Arc::new(models);
        Ok(Arc::new(Self {
            store,
            observations: RwLock::new(observations),
            log: Mutex::new(log),
            policy: RwLock::new(Arc::new(policy)),
            models: RwLock::new(BTreeMap::from([(models.id.clone(), models.clone())])),
            active_model: RwLock::new(models),
            events,
            commit: Mutex::new(()),
            cfg,
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn store(&self) -> &SampleStore {
        &self.store
    }

    /// Runs the pipeline on one buffer, persists the observation, then emits
    /// its event.
    pub fn process(&self, channels: &[AudioSegment]) -> Result<ObservationRecord> {
        let policy = self.policy();
        let models = self.active_model();
        let run = run_pipeline(channels, &models, &policy, &self.cfg.pipeline);
        let mut record = run.record;

        let _commit = self.commit.lock().expect("commit lock");
        let stored = self.store.store_sample(NewSample {
            audio: channels.to_vec(),
            mel: run.mel,
            label: None,
            anomaly_flag: record.anomaly_flag,
            provenance: Some(Provenance::Live),
        })?;
        record.observation_id = stored.sample_id;
        record.audio_ref = stored.audio_path;
        record.mel_ref = stored.mel_path;
        record.assessment.observation_id = Some(stored.sample_id);
        fsync_append(&mut self.log.lock().expect("log lock"), &record)?;
        self.observations
            .write()
            .expect("observations lock")
            .insert(record.observation_id, record.clone());
        // Nobody listening is fine.
        let _ = self.events.send(ObservationEvent::from(&record));
        Ok(record)
    }

    pub fn observation(&self, id: u64) -> Result<ObservationRecord> {
        self.observations
            .read()
            .expect("observations lock")
            .get(&id)
            .cloned()
            .ok_or(ServiceError::NotFound(id))
    }

    pub fn observation_count(&self) -> usize {
        self.observations.read().expect("observations lock").len()
    }

    /// Records with id greater than `after`, ascending.
    pub fn observations_after(&self, after: Option<u64>) -> Vec<ObservationRecord> {
        let obs = self.observations.read().expect("observations lock");
        match after {
            Some(a) => obs.range(a + 1..).map(|(_, r)| r.clone()).collect(),
            None => obs.values().cloned().collect(),
        }
    }

    pub fn query(&self, q: &ObservationQuery) -> Result<ObservationPage> {
        let limit = q.limit.unwrap_or(DEFAULT_PAGE_SIZE);
        if limit == 0 {
            return Err(ServiceError::BadRequest("limit must be positive".into()));
        }
        let filter: fn(&ObservationRecord) -> bool = match q.flag.as_deref() {
            None | Some("") | Some("all") => |_| true,
            Some("anomaly") => |r| r.anomaly_flag,
            Some("review") => |r| r.assessment.level > RiskLevel::Normal,
            Some(other) => return Err(ServiceError::BadRequest(format!("unknown flag {other:?}"))),
        };
        let default_order = if q.flag.as_deref() == Some("anomaly") { "score" } else { "id" };
        let by_score = match q.order.as_deref().unwrap_or(default_order) {
            "score" => true,
            "id" => false,
            other => return Err(ServiceError::BadRequest(format!("unknown order {other:?}"))),
        };

        let obs = self.observations.read().expect("observations lock");
        let mut rows: Vec<&ObservationRecord> = obs.values().filter(|r| filter(r)).collect();
        // Keyset cursor: the sort key of the last item on the previous page.
        let key = |r: &ObservationRecord| (r.anomaly_score.unwrap_or(f64::NEG_INFINITY), r.observation_id);
        if by_score {
            rows.sort_by(|a, b| {
                let (sa, ia) = key(a);
                let (sb, ib) = key(b);
                sb.total_cmp(&sa).then(ia.cmp(&ib))
            });
        }
        let start = match &q.cursor {
            None => 0,
            Some(c) => {
                let bad = || ServiceError::BadRequest(format!("malformed cursor {c:?}"));
                if by_score {
                    let (s, i) = c.split_once(':').ok_or_else(bad)?;
                    let s = f64::from_bits(u64::from_str_radix(s, 16).map_err(|_| bad())?);
                    let i: u64 = i.parse().map_err(|_| bad())?;
                    rows.partition_point(|r| {
                        let (rs, ri) = key(r);
                        rs > s || (rs == s && ri <= i)
                    })
                } else {
                    let i: u64 = c.parse().map_err(|_| bad())?;
                    rows.partition_point(|r| r.observation_id <= i)
                }
            }
        };
        let page: Vec<ObservationRecord> = rows.iter().skip(start).take(limit).map(|r| (*r).clone()).collect();
        let next_cursor = if start + page.len() < rows.len() {
            page.last().map(|r| {
                if by_score {
                    let (s, i) = key(r);
                    format!("{:x}:{i}", s.to_bits())
                } else {
                    r.observation_id.to_string()
                }
            })
        } else {
            None
        };
        Ok(ObservationPage { items: page, next_cursor })
    }

    /// Durable before returning: the label event is fsynced into the store,
    /// which also puts the sample into the next training manifest.
    pub fn submit_label(&self, id: u64, class: &str, operator: &str) -> Result<ObservationRecord> {
        let class: EventClass = class.parse().map_err(|_| ServiceError::BadRequest(format!("unknown class {class:?}")))?;
        if operator.trim().is_empty() {
            return Err(ServiceError::BadRequest("operator must be given".into()));
        }
        let _commit = self.commit.lock().expect("commit lock");
        let mut record = self.observation(id)?;
        self.store.apply_label(id, class.id(), operator)?;
        record.label = Some(class.name().to_string());
        fsync_append(&mut self.log.lock().expect("log lock"), &record)?;
        self.observations.write().expect("observations lock").insert(id, record.clone());
        Ok(record)
    }

    pub fn training_manifest(&self) -> Vec<StoredSample> {
        self.store.training_manifest()
    }

    pub fn policy(&self) -> Arc<RiskPolicy> {
        self.policy.read().expect("policy lock").clone()
    }

    fn check_policy(&self, p: &RiskPolicy) -> Result<()> {
        let mut errs = p.validation_errors();
        let models = self.active_model();
        for name in &models.class_names {
            if !p.class_weights.contains_key(name) {
                errs.push(format!("class_weights.{name}: missing weight for registered class"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ServiceError::InvalidPolicy(errs))
        }
    }

    /// Stores `policy` as the next version and makes it active for
    /// observations that start afterwards. The `version` field of the
    /// argument is ignored.
    pub fn update_policy(&self, mut policy: RiskPolicy) -> Result<u64> {
        self.check_policy(&policy)?;
        let mut slot = self.policy.write().expect("policy lock");
        policy.version = slot.version + 1;
        policy.save(policy_path(&self.cfg.data_dir, policy.version))?;
        *slot = Arc::new(policy);
        Ok(slot.version)
    }

    /// Level counts over every stored observation under the active policy
    /// and under `draft`.
    pub fn what_if(&self, draft: &RiskPolicy) -> Result<WhatIfReport> {
        self.check_policy(draft)?;
        let active = self.policy();
        let obs = self.observations.read().expect("observations lock");
        let mut a_levels = Vec::with_capacity(obs.len());
        let mut d_levels = Vec::with_capacity(obs.len());
        let mut changed = Vec::new();
        let (mut a_anom, mut d_anom) = (0, 0);
        for r in obs.values() {
            let a = r.reassess(&active)?.level;
            let d = r.reassess(draft)?.level;
            if a != d {
                changed.push((r.observation_id, a, d));
            }
            a_levels.push(a);
            d_levels.push(d);
            let s = r.anomaly_score.unwrap_or(0.0);
            a_anom += usize::from(s > active.anomaly_threshold);
            d_anom += usize::from(s > draft.anomaly_threshold);
        }
        let ac = LevelCounts::tally(a_levels);
        let dc = LevelCounts::tally(d_levels);
        let delta = RiskLevel::ALL
            .iter()
            .map(|l| (*l, dc.0[l] as i64 - ac.0[l] as i64))
            .collect();
        Ok(WhatIfReport {
            active_version: active.version,
            observations: obs.len(),
            active_flagged: ac.flagged(),
            draft_flagged: dc.flagged(),
            active: ac,
            draft: dc,
            delta,
            active_anomalies: a_anom,
            draft_anomalies: d_anom,
            changed,
        })
    }

    pub fn active_model(&self) -> Arc<ModelSet> {
        self.active_model.read().expect("model lock").clone()
    }

    pub fn models(&self) -> Vec<ModelInfo> {
        let active = self.active_model().id.clone();
        self.models
            .read()
            .expect("model lock")
            .values()
            .map(|m| ModelInfo {
                id: m.id.clone(),
                active: m.id == active,
                latent_size: m.autoencoder.config.latent_size(),
                hidden: m.autoencoder.config.hidden,
                classes: m.class_names.clone(),
            })
            .collect()
    }

    /// Registers a model set without activating it.
    pub fn register_model(&self, models: ModelSet) {
        self.models.write().expect("model lock").insert(models.id.clone(), Arc::new(models));
    }

    /// Loads `autoencoder.hwnn` and `classifier.hwnn` from `dir` and
    /// registers them under the directory name.
    pub fn register_model_dir(&self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| ServiceError::BadRequest(format!("bad model directory {}", dir.display())))?;
        let ae = load_autoencoder(dir.join("autoencoder.hwnn"))?;
        let mlp = load_classifier(dir.join("classifier.hwnn"))?;
        self.register_model(ModelSet::new(id.clone(), ae, mlp, EventClass::names())?);
        Ok(id)
    }

    /// Swaps the active model set; observations already running keep theirs.
    pub fn activate_model(&self, id: &str) -> Result<()> {
        let m = self
            .models
            .read()
            .expect("model lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownModel(id.to_string()))?;
        self.policy().check_classes(m.class_names.iter().map(String::as_str))?;
        *self.active_model.write().expect("model lock") = m;
        Ok(())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<ObservationEvent> {
        self.events.subscribe()
    }
}
