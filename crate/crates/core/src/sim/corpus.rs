use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::band_noise;
use super::{synthesize_event, EventClass, EventSpec, Result, SimError};
use crate::dsp::{AudioSegment, Preprocessor, DEFAULT_SEGMENT_SECONDS};
use crate::eval::{LabeledSample, SampleSource};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub counts: Vec<(EventClass, usize)>,
    pub sample_rate: u32,
    pub segment_s: f64,
    pub seed: u64,
    /// Background white noise, dBFS RMS.
    pub noise_floor_db: f64,
    /// Ambient low-passed noise level range, dBFS RMS; drawn per sample.
    #[serde(default)]
    pub ambient_db: Option<(f64, f64)>,
    #[serde(default)]
    pub preprocessor: Preprocessor,
}

impl CorpusConfig {
    pub fn uniform(per_class: usize, sample_rate: u32, seed: u64) -> Self {
        Self {
            counts: EventClass::ALL.iter().map(|&c| (c, per_class)).collect(),
            sample_rate,
            segment_s: DEFAULT_SEGMENT_SECONDS,
            seed,
            noise_floor_db: -60.0,
            ambient_db: None,
            preprocessor: Preprocessor::default(),
        }
    }

    /// Class sizes of the full experiment corpus: 1399 six-second samples.
    pub fn paper_scale(sample_rate: u32, seed: u64) -> Self {
        let sizes = [100, 95, 90, 110, 85, 100, 95, 90, 350, 284];
        Self {
            counts: EventClass::ALL.iter().copied().zip(sizes).collect(),
            ..Self::uniform(0, sample_rate, seed)
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.1).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedSample {
    pub sample_id: u64,
    pub class: EventClass,
    pub seed: u64,
    pub duration_s: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample ids run `0..total` in class order.
pub fn corpus_plan(cfg: &CorpusConfig) -> Vec<PlannedSample> {
    let mut id = 0u64;
    let mut out = Vec::with_capacity(cfg.total());
    for &(class, n) in &cfg.counts {
        for _ in 0..n {
            out.push(PlannedSample {
                sample_id: id,
                class,
                seed: splitmix(cfg.seed ^ splitmix(id)),
                duration_s: cfg.segment_s,
            });
            id += 1;
        }
    }
    out
}

/// One segment: the class event at a random onset and level over background
/// noise. The background is white noise at `noise_floor_db` plus, when
/// `ambient_db` is set, low-passed ambient noise whose level and corner
/// frequency vary per sample.
pub fn synthesize_sample(
    plan: &PlannedSample,
    sample_rate: u32,
    noise_floor_db: f64,
    ambient_db: Option<(f64, f64)>,
) -> Result<AudioSegment> {
    if !(plan.duration_s > 0.0) {
        return Err(SimError::Input("segment duration must be positive".into()));
    }
    let sr = f64::from(sample_rate);
    let n = (plan.duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let continuous = !plan.class.is_minority();
    let ev_dur = if continuous {
        plan.duration_s
    } else {
        rng.gen_range(1.5..4.0f64).min(plan.duration_s)
    };
    let onset = if continuous {
        0.0
    } else {
        rng.gen_range(0.0..=(plan.duration_s - ev_dur))
    };
    let spec = EventSpec {
        class: plan.class,
        duration_s: ev_dur,
        seed: rng.gen(),
        loudness_db: rng.gen_range(-12.0..-3.0),
        sample_rate,
    };
    let ev = synthesize_event(&spec)?;
    let mut x = vec![0.0; n];
    let at = (onset * sr) as usize;
    for (d, s) in x.iter_mut().skip(at).zip(&ev.samples) {
        *d += s;
    }
    let std = 10f64.powf(noise_floor_db / 20.0);
    for v in &mut x {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += std * z;
    }
    if let Some((lo, hi)) = ambient_db {
        let level = 10f64.powf(rng.gen_range(lo..=hi) / 20.0);
        let corner = rng.gen_range(800.0..6000.0f64).min(0.45 * sr);
        let amb = band_noise(&mut rng, n, sr, 20.0, corner);
        for (v, a) in x.iter_mut().zip(&amb) {
            *v += level * a;
        }
    }
    Ok(AudioSegment::new(x, sample_rate, plan.class.name()))
}

/// Synthesizes and preprocesses the whole corpus.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Vec<LabeledSample>> {
    corpus_plan(cfg)
        .par_iter()
        .map(|p| {
            let audio = synthesize_sample(p, cfg.sample_rate, cfg.noise_floor_db, cfg.ambient_db)?;
            Ok(LabeledSample {
                sample_id: p.sample_id,
                label: p.class.id(),
                source: SampleSource::Synthetic,
                mel: cfg.preprocessor.process(&audio)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_plan_has_1399_six_second_samples() {
        let plan = corpus_plan(&CorpusConfig::paper_scale(96_000, 0));
        assert_eq!(plan.len(), 1399);
        assert!(plan.iter().all(|p| p.duration_s == 6.0));
        let ids: std::collections::HashSet<u64> = plan.iter().map(|p| p.sample_id).collect();
        assert_eq!(ids.len(), 1399);
    }

    #[test]
    fn corpus_is_deterministic() {
        let mut cfg = CorpusConfig::uniform(1, 8_000, 3);
        cfg.segment_s = 1.0;
        let a = build_corpus(&cfg).unwrap();
        let b = build_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(a[0].mel.bands(), 128);
    }

    #[test]
    fn sample_has_segment_length() {
        let plan = &corpus_plan(&CorpusConfig::uniform(1, 8_000, 0))[4];
        let s = synthesize_sample(plan, 8_000, -60.0, Some((-40.0, -30.0))).unwrap();
        assert_eq!(s.samples.len(), 48_000);
    }
}
