use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{synthesize_event, EventSpec, Result, SimError};
use crate::dsp::AudioSegment;
use crate::localization::{ArrayGeometry, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub spec: EventSpec,
    pub position: Point,
    pub onset_s: f64,
}

/// Sources in the water and what each hydrophone hears of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub geometry: ArrayGeometry,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub events: Vec<SceneEvent>,
    /// White-noise level in dBFS RMS; `None` disables noise.
    #[serde(default)]
    pub noise_floor_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedScene {
    pub channels: Vec<AudioSegment>,
    /// `arrivals[event][hydrophone]`: first sample of each arrival.
    pub arrivals: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl Scene {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| SimError::Input(format!("scene file: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry
            .validate()
            .map_err(|e| SimError::Input(e.to_string()))?;
        if !(self.duration_s > 0.0) || self.sample_rate == 0 {
            return Err(SimError::Input("scene needs positive duration and sample rate".into()));
        }
        for (i, ev) in self.events.iter().enumerate() {
            if !(0.0..self.duration_s).contains(&ev.onset_s) {
                return Err(SimError::Input(format!(
                    "event {i} onset {} s outside the {} s scene",
                    ev.onset_s, self.duration_s
                )));
            }
            if !(ev.position.y >= 0.0 && ev.position.x.is_finite() && ev.position.y.is_finite()) {
                return Err(SimError::Input(format!(
                    "event {i} position {:?} is not in the water (y ≥ 0)",
                    ev.position
                )));
            }
            if ev.spec.sample_rate != self.sample_rate {
                return Err(SimError::Input(format!(
                    "event {i} sample rate {} differs from scene rate {}",
                    ev.spec.sample_rate, self.sample_rate
                )));
            }
        }
        Ok(())
    }
}

/// Propagates each event to every hydrophone: delay `r / v`, gain `1 / r`.
pub fn render_scene(scene: &Scene) -> Result<RenderedScene> {
    scene.validate()?;
    let sr = f64::from(scene.sample_rate);
    let n = (scene.duration_s * sr).round() as usize;
    let g = &scene.geometry;
    let mut channels = vec![vec![0.0; n]; g.len()];
    let mut arrivals = Vec::with_capacity(scene.events.len());
    let mut warnings = Vec::new();

    for (e, ev) in scene.events.iter().enumerate() {
        let audio = synthesize_event(&ev.spec)?;
        let mut at = Vec::with_capacity(g.len());
        for (h, ch) in channels.iter_mut().enumerate() {
            let r = ev.position.distance(g.position(h));
            let start = ((ev.onset_s + r / g.speed_of_sound) * sr).round() as usize;
            let gain = 1.0 / r.max(1.0);
            if start + audio.samples.len() > n {
                warnings.push(format!(
                    "event {e} truncated on {} ({} of {} samples fit)",
                    g.hydrophones[h].id,
                    n.saturating_sub(start),
                    audio.samples.len()
                ));
            }
            for (d, s) in ch.iter_mut().skip(start).zip(&audio.samples) {
                *d += gain * s;
            }
            at.push(start);
        }
        arrivals.push(at);
    }

    if let Some(db) = scene.noise_floor_db {
        let std = 10f64.powf(db / 20.0);
        for (h, ch) in channels.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(h as u64 + 1);
            for v in ch.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += std * z;
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(RenderedScene {
        channels: channels
            .into_iter()
            .zip(&g.hydrophones)
            .map(|(x, h)| AudioSegment::new(x, scene.sample_rate, h.id.clone()))
            .collect(),
        arrivals,
        warnings,
    })
}
