use serde::{Deserialize, Serialize};

use super::{DspError, Result, Spectrogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MelScale {
    /// `2595 · log10(1 + f / 700)`
    #[default]
    Htk,
    /// Linear below 1 kHz, logarithmic above.
    Slaney,
}

pub fn hz_to_mel(hz: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
        MelScale::Slaney => {
            let f_sp = 200.0 / 3.0;
            let min_log_hz = 1000.0;
            let min_log_mel = min_log_hz / f_sp;
            let logstep = (6.4f64).ln() / 27.0;
            if hz >= min_log_hz {
                min_log_mel + (hz / min_log_hz).ln() / logstep
            } else {
                hz / f_sp
            }
        }
    }
}

pub fn mel_to_hz(mel: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
        MelScale::Slaney => {
            let f_sp = 200.0 / 3.0;
            let min_log_hz = 1000.0;
            let min_log_mel = min_log_hz / f_sp;
            let logstep = (6.4f64).ln() / 27.0;
            if mel >= min_log_mel {
                min_log_hz * (logstep * (mel - min_log_mel)).exp()
            } else {
                mel * f_sp
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub bands: usize,
    pub scale: MelScale,
    /// Loudest level kept, relative to the segment maximum.
    pub clip_high_db: f64,
    /// Quietest level kept; also the value assigned to silence.
    pub clip_low_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            bands: 128,
            scale: MelScale::Htk,
            clip_high_db: -10.0,
            clip_low_db: -80.0,
        }
    }
}

/// Triangular filters over `[0, sample_rate / 2]`, each row normalized to unit sum.
///
/// Returned as `bands` rows of `(bin, weight)` pairs. A filter narrower than
/// one bin collapses onto the bin nearest its center.
pub fn mel_filterbank(
    bands: usize,
    bins: usize,
    bin_width: f64,
    sample_rate: u32,
    scale: MelScale,
) -> Vec<Vec<(usize, f64)>> {
    let f_max = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(f_max, scale);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (bands + 1) as f64, scale))
        .collect();

    (0..bands)
        .map(|b| {
            let (lo, center, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut row: Vec<(usize, f64)> = (0..bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_width;
                    let w = if f > lo && f <= center {
                        (f - lo) / (center - lo)
                    } else if f > center && f < hi {
                        (hi - f) / (hi - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            if row.is_empty() {
                let k = ((center / bin_width).round() as usize).min(bins - 1);
                row.push((k, 1.0));
            }
            let total: f64 = row.iter().map(|(_, w)| w).sum();
            row.iter_mut().for_each(|(_, w)| *w /= total);
            row
        })
        .collect()
}

/// Normalized Mel-spectrogram, stored frame-major (`frames × bands`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    values: Vec<f64>,
    bands: usize,
    frames: usize,
}

impl MelSpectrogram {
    pub fn from_frames(values: Vec<f64>, bands: usize, frames: usize) -> Result<Self> {
        if values.len() != bands * frames {
            return Err(DspError::Input(format!(
                "expected {} values for {bands} bands × {frames} frames, got {}",
                bands * frames,
                values.len()
            )));
        }
        Ok(Self {
            values,
            bands,
            frames,
        })
    }

    pub fn zeros(bands: usize, frames: usize) -> Self {
        Self {
            values: vec![0.0; bands * frames],
            bands,
            frames,
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[frame * self.bands + band]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bands..(t + 1) * self.bands]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean distance between flattened matrices of equal shape.
    pub fn distance(&self, other: &MelSpectrogram) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Maps a clipped dB level onto `[-1, 1]`.
pub(crate) fn normalize_db(db: f64, low: f64, high: f64) -> f64 {
    let clipped = db.clamp(low, high);
    2.0 * (clipped - low) / (high - low) - 1.0
}

/// Power → dB (segment maximum at 0 dB) → clip → Mel bands → `[-1, 1]`.
///
/// A spectrogram without energy maps to the silence floor (all −1).
pub fn to_mel(spec: &Spectrogram, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if spec.frames() == 0 || spec.bins() == 0 {
        return Err(DspError::Input("empty spectrogram".into()));
    }
    if cfg.bands == 0 {
        return Err(DspError::Config("mel band count must be > 0".into()));
    }
    if !(cfg.clip_low_db < cfg.clip_high_db) {
        return Err(DspError::Config(format!(
            "clip range [{}, {}] dB is empty",
            cfg.clip_low_db, cfg.clip_high_db
        )));
    }

    let frames = spec.frames();
    let max_power = spec
        .magnitudes()
        .iter()
        .map(|m| m * m)
        .fold(0.0f64, f64::max);
    if max_power <= 0.0 || !max_power.is_finite() {
        return Ok(MelSpectrogram {
            values: vec![-1.0; cfg.bands * frames],
            bands: cfg.bands,
            frames,
        });
    }

    let bank = mel_filterbank(
        cfg.bands,
        spec.bins(),
        spec.bin_width,
        spec.sample_rate,
        cfg.scale,
    );
    let mut values = Vec::with_capacity(cfg.bands * frames);
    let mut db = vec![0.0; spec.bins()];
    for f in 0..frames {
        for (slot, m) in db.iter_mut().zip(spec.frame(f)) {
            let p = m * m;
            *slot = if p > 0.0 {
                (10.0 * (p / max_power).log10()).clamp(cfg.clip_low_db, cfg.clip_high_db)
            } else {
                cfg.clip_low_db
            };
        }
        for row in &bank {
            let band_db: f64 = row.iter().map(|&(k, w)| w * db[k]).sum();
            values.push(normalize_db(band_db, cfg.clip_low_db, cfg.clip_high_db));
        }
    }
    Ok(MelSpectrogram {
        values,
        bands: cfg.bands,
        frames,
    })
}
