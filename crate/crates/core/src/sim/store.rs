use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Result, SimError, N_CLASSES};
use crate::dsp::{read_wav, write_wav, AudioSegment, MelSpectrogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Experiment,
    Live,
    OperatorLabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub sample_id: u64,
    pub class: usize,
    pub operator: String,
    pub at: DateTime<Utc>,
}

/// Manifest record. `label` and `label_history` reflect all applied labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    pub sample_id: u64,
    /// Multi-channel WAV, relative to the store root.
    pub audio_path: Option<PathBuf>,
    pub mel_path: Option<PathBuf>,
    pub sample_rate: u32,
    pub channel_ids: Vec<String>,
    pub label: Option<usize>,
    pub anomaly_flag: bool,
    pub provenance: Provenance,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_history: Vec<LabelEvent>,
}

/// What the caller hands to [`SampleStore::store_sample`].
#[derive(Clone, Debug, Default)]
pub struct NewSample {
    pub audio: Vec<AudioSegment>,
    pub mel: Option<MelSpectrogram>,
    pub label: Option<usize>,
    pub anomaly_flag: bool,
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleFilter {
    pub label: Option<usize>,
    pub anomaly: Option<bool>,
    pub provenance: Option<Provenance>,
    /// Only samples carrying any label.
    #[serde(default)]
    pub labeled_only: bool,
}

impl SampleFilter {
    pub fn matches(&self, s: &StoredSample) -> bool {
        self.label.is_none_or(|l| s.label == Some(l))
            && self.anomaly.is_none_or(|a| s.anomaly_flag == a)
            && self.provenance.is_none_or(|p| s.provenance == p)
            && (!self.labeled_only || s.label.is_some())
    }
}

struct Inner {
    samples: BTreeMap<u64, StoredSample>,
    next_id: u64,
}

/// Directory store: `samples.jsonl` and `labels.jsonl` (both append-only),
/// `audio/<id>.wav` (32-bit float) and `mel/<id>.mel`.
///
/// 24-bit capture fits a 32-bit float exactly, so audio of that precision
/// round-trips bit-exactly; other input is rounded to `f32` on write.
pub struct SampleStore {
    root: PathBuf,
    inner: RwLock<Inner>,
    write_lock: Mutex<()>,
}

const SAMPLES: &str = "samples.jsonl";
const LABELS: &str = "labels.jsonl";

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            SimError::Store(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(value).map_err(|e| SimError::Store(e.to_string()))?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

fn apply(sample: &mut StoredSample, ev: LabelEvent) {
    sample.label = Some(ev.class);
    if sample.provenance == Provenance::Live {
        sample.provenance = Provenance::OperatorLabeled;
    }
    sample.label_history.push(ev);
}

pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"HWMEL1")?;
    w.write_u32::<LittleEndian>(mel.bands() as u32)?;
    w.write_u32::<LittleEndian>(mel.frames() as u32)?;
    for &v in mel.values() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    w.get_ref().sync_all()?;
    Ok(())
}

pub fn read_mel(path: &Path) -> Result<MelSpectrogram> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != b"HWMEL1" {
        return Err(SimError::Store(format!("{} is not a mel file", path.display())));
    }
    let bands = r.read_u32::<LittleEndian>()? as usize;
    let frames = r.read_u32::<LittleEndian>()? as usize;
    let mut values = vec![0.0; bands * frames];
    r.read_f64_into::<LittleEndian>(&mut values)?;
    MelSpectrogram::from_frames(values, bands, frames).map_err(SimError::from)
}

impl SampleStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("audio"))?;
        fs::create_dir_all(root.join("mel"))?;
        let mut samples = BTreeMap::new();
        for s in read_jsonl::<StoredSample>(&root.join(SAMPLES))? {
            samples.insert(s.sample_id, s);
        }
        for ev in read_jsonl::<LabelEvent>(&root.join(LABELS))? {
            let s = samples.get_mut(&ev.sample_id).ok_or_else(|| {
                SimError::Store(format!("label for unknown sample {}", ev.sample_id))
            })?;
            apply(s, ev);
        }
        let next_id = samples.keys().next_back().map_or(0, |k| k + 1);
        Ok(Self {
            root,
            inner: RwLock::new(Inner { samples, next_id }),
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("store lock").samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists payloads and the manifest record, fsynced, before returning.
    pub fn store_sample(&self, new: NewSample) -> Result<StoredSample> {
        if let Some(l) = new.label {
            if l >= N_CLASSES {
                return Err(SimError::Input(format!("unknown class id {l}")));
            }
        }
        let _guard = self.write_lock.lock().expect("store write lock");
        let id = self.inner.read().expect("store lock").next_id;

        let (sample_rate, channel_ids, audio_path) = if new.audio.is_empty() {
            (0, Vec::new(), None)
        } else {
            let sr = new.audio[0].sample_rate;
            if new.audio.iter().any(|a| a.sample_rate != sr) {
                return Err(SimError::Input("channels differ in sample rate".into()));
            }
            let rel = PathBuf::from("audio").join(format!("{id:08}.wav"));
            let chans: Vec<&[f64]> = new.audio.iter().map(|a| a.samples.as_slice()).collect();
            write_wav(self.root.join(&rel), sr, &chans)?;
            File::open(self.root.join(&rel))?.sync_all()?;
            (sr, new.audio.iter().map(|a| a.channel_id.clone()).collect(), Some(rel))
        };
        let mel_path = match &new.mel {
            Some(m) => {
                let rel = PathBuf::from("mel").join(format!("{id:08}.mel"));
                write_mel(&self.root.join(&rel), m)?;
                Some(rel)
            }
            None => None,
        };
        let record = StoredSample {
            sample_id: id,
            audio_path,
            mel_path,
            sample_rate,
            channel_ids,
            label: new.label,
            anomaly_flag: new.anomaly_flag,
            provenance: new.provenance.unwrap_or(if new.label.is_some() {
                Provenance::Experiment
            } else {
                Provenance::Live
            }),
            created_at: Utc::now(),
            label_history: Vec::new(),
        };
        append_jsonl(&self.root.join(SAMPLES), &record)?;
        let mut inner = self.inner.write().expect("store lock");
        inner.samples.insert(id, record.clone());
        inner.next_id = id + 1;
        Ok(record)
    }

    pub fn fetch(&self, id: u64) -> Result<StoredSample> {
        self.inner
            .read()
            .expect("store lock")
            .samples
            .get(&id)
            .cloned()
            .ok_or(SimError::NotFound(id))
    }

    pub fn fetch_samples(&self, filter: &SampleFilter) -> Vec<StoredSample> {
        self.inner
            .read()
            .expect("store lock")
            .samples
            .values()
            .filter(|s| filter.matches(s))
            .cloned()
            .collect()
    }

    pub fn load_audio(&self, id: u64) -> Result<Vec<AudioSegment>> {
        let s = self.fetch(id)?;
        let rel = s
            .audio_path
            .ok_or_else(|| SimError::Store(format!("sample {id} has no audio")))?;
        let audio = read_wav(self.root.join(rel))?;
        Ok(audio
            .channels
            .into_iter()
            .zip(s.channel_ids)
            .map(|(x, ch)| AudioSegment::new(x, audio.sample_rate, ch))
            .collect())
    }

    pub fn load_mel(&self, id: u64) -> Result<MelSpectrogram> {
        let s = self.fetch(id)?;
        let rel = s
            .mel_path
            .ok_or_else(|| SimError::Store(format!("sample {id} has no mel payload")))?;
        read_mel(&self.root.join(rel))
    }

    /// Appends a label event; earlier labels stay in the history.
    pub fn apply_label(&self, id: u64, class: usize, operator: &str) -> Result<StoredSample> {
        if class >= N_CLASSES {
            return Err(SimError::Input(format!("unknown class id {class}")));
        }
        let _guard = self.write_lock.lock().expect("store write lock");
        self.fetch(id)?;
        let ev = LabelEvent {
            sample_id: id,
            class,
            operator: operator.to_string(),
            at: Utc::now(),
        };
        append_jsonl(&self.root.join(LABELS), &ev)?;
        let mut inner = self.inner.write().expect("store lock");
        let s = inner.samples.get_mut(&id).expect("checked above");
        apply(s, ev);
        Ok(s.clone())
    }

    /// Writes matching records as JSON lines; returns how many.
    pub fn export_manifest(&self, path: impl AsRef<Path>, filter: &SampleFilter) -> Result<usize> {
        let rows = self.fetch_samples(filter);
        let mut w = BufWriter::new(File::create(path)?);
        for r in &rows {
            serde_json::to_writer(&mut w, r).map_err(|e| SimError::Store(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(rows.len())
    }

    /// Every labeled sample: the input list for the next training run.
    pub fn training_manifest(&self) -> Vec<StoredSample> {
        self.fetch_samples(&SampleFilter {
            labeled_only: true,
            ..SampleFilter::default()
        })
    }
}
