//! Event recipes. All synthetic; each class gets its own band and temporal texture.
//!
//! | class | recipe |
//! |---|---|
//! | knock_wood | 2–5 decaying noise knocks, 300–2000 Hz, τ ≈ 15 ms |
//! | knock_plastic | 3–6 sharp knocks, 3–10 kHz, τ ≈ 4 ms |
//! | knock_concrete_wall | 2–4 deep knocks, 50–400 Hz, τ ≈ 45 ms |
//! | bubbles_small | 40–90 short rising chirps, 5–15 kHz |
//! | bubbles_large | 8–20 longer chirps, 300–1200 Hz |
//! | metal_clank | 1–3 inharmonic ringing strikes, f₀ 500–900 Hz |
//! | plastic_scratching | AM band noise 2–8 kHz, 1.5–4 s |
//! | plastic_scratching_knocking | scratching plus dull knocks, 1.2–3 kHz |
//! | normal_environmental_noise | slowly swelling low-passed noise |
//! | high_risk_danger | harmonic hum f₀ 40–80 Hz with broadband thumps |

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{EventClass, Result, SimError};
use crate::dsp::{AudioSegment, DEFAULT_SAMPLE_RATE};

/// Bumped whenever a recipe changes audibly.
pub const RECIPE_VERSION: u32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub class: EventClass,
    pub duration_s: f64,
    pub seed: u64,
    /// Peak level relative to full scale, dB.
    #[serde(default = "default_loudness")]
    pub loudness_db: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

fn default_loudness() -> f64 {
    -6.0
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl EventSpec {
    pub fn new(class: EventClass, duration_s: f64, seed: u64) -> Self {
        Self {
            class,
            duration_s,
            seed,
            loudness_db: default_loudness(),
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn with_sample_rate(mut self, sr: u32) -> Self {
        self.sample_rate = sr;
        self
    }
}

/// Unit-RMS white noise restricted to `[lo, hi]` Hz.
pub(crate) fn band_noise(rng: &mut ChaCha8Rng, n: usize, sr: f64, lo: f64, hi: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let hi = hi.min(0.49 * sr);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sr / n as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

fn add_at(dst: &mut [f64], at: usize, src: &[f64], gain: f64) {
    for (d, s) in dst.iter_mut().skip(at).zip(src) {
        *d += gain * s;
    }
}

fn knock(rng: &mut ChaCha8Rng, sr: f64, lo: f64, hi: f64, tau: f64) -> Vec<f64> {
    let n = (6.0 * tau * sr) as usize + 1;
    let mut x = band_noise(rng, n, sr, lo, hi);
    for (i, v) in x.iter_mut().enumerate() {
        *v *= (-(i as f64) / (tau * sr)).exp();
    }
    x
}

/// Decaying sinusoid gliding upward by `glide` over its life.
fn chirp(sr: f64, f0: f64, glide: f64, tau: f64) -> Vec<f64> {
    let n = (5.0 * tau * sr) as usize + 1;
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + glide * t / (5.0 * tau));
            phase += 2.0 * PI * f / sr;
            phase.sin() * (-t / tau).exp()
        })
        .collect()
}

fn knock_train(
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
    sr: f64,
    count: (usize, usize),
    band: (f64, f64),
    tau: f64,
) {
    let n = out.len();
    let k = rng.gen_range(count.0..=count.1);
    let mut t = rng.gen_range(0.0..0.15) * n as f64;
    for _ in 0..k {
        let tau = tau * rng.gen_range(0.8..1.25);
        let g = rng.gen_range(0.6..1.0);
        let kn = knock(rng, sr, band.0, band.1, tau);
        add_at(out, t as usize, &kn, g);
        t += rng.gen_range(0.12..0.28) * n as f64 / k as f64 * 2.0;
        if t as usize >= n {
            break;
        }
    }
}

fn scratching(rng: &mut ChaCha8Rng, out: &mut [f64], sr: f64) {
    let n = out.len();
    let noise = band_noise(rng, n, sr, 2000.0, 8000.0);
    let rate = rng.gen_range(5.0..15.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let am = 0.5 * (1.0 + (2.0 * PI * rate * t + phase).sin());
        *v += 0.5 * am * am * noise[i];
    }
}

fn synthesize(class: EventClass, rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    match class {
        EventClass::KnockWood => knock_train(rng, &mut x, sr, (2, 5), (300.0, 2000.0), 0.015),
        EventClass::KnockPlastic => knock_train(rng, &mut x, sr, (3, 6), (3000.0, 10000.0), 0.004),
        EventClass::KnockConcreteWall => knock_train(rng, &mut x, sr, (2, 4), (50.0, 400.0), 0.045),
        EventClass::BubblesSmall | EventClass::BubblesLarge => {
            let small = class == EventClass::BubblesSmall;
            let count = if small { rng.gen_range(40..=90) } else { rng.gen_range(8..=20) };
            for _ in 0..count {
                let f0 = if small {
                    rng.gen_range(5000.0..15000.0f64).min(0.4 * sr)
                } else {
                    rng.gen_range(300.0..1200.0)
                };
                let tau = if small { rng.gen_range(0.002..0.006) } else { rng.gen_range(0.015..0.04) };
                let c = chirp(sr, f0, rng.gen_range(0.05..0.2), tau);
                let at = rng.gen_range(0..n.max(1));
                add_at(&mut x, at, &c, rng.gen_range(0.3..1.0));
            }
        }
        EventClass::MetalClank => {
            let strikes = rng.gen_range(1..=3);
            for _ in 0..strikes {
                let f0 = rng.gen_range(500.0..900.0);
                let tau = rng.gen_range(0.25..0.6);
                let at = rng.gen_range(0..(n / 2).max(1));
                let len = ((5.0 * tau * sr) as usize).min(n - at);
                for (p, ratio) in [1.0, 2.76, 5.40, 8.93].iter().enumerate() {
                    let f = f0 * ratio;
                    if f >= 0.45 * sr {
                        continue;
                    }
                    let ph = rng.gen_range(0.0..2.0 * PI);
                    let amp = 1.0 / (p + 1) as f64;
                    let decay = tau / (1.0 + 0.5 * p as f64);
                    for i in 0..len {
                        let t = i as f64 / sr;
                        x[at + i] += amp * (2.0 * PI * f * t + ph).sin() * (-t / decay).exp();
                    }
                }
            }
        }
        EventClass::PlasticScratching => scratching(rng, &mut x, sr),
        EventClass::PlasticScratchingKnocking => {
            scratching(rng, &mut x, sr);
            knock_train(rng, &mut x, sr, (2, 4), (1200.0, 3000.0), 0.008);
        }
        EventClass::NormalEnvironmentalNoise => {
            let base = band_noise(rng, n, sr, 20.0, 600.0);
            let rate = rng.gen_range(0.2..0.8);
            let ph = rng.gen_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *v = base[i] * (0.6 + 0.4 * (2.0 * PI * rate * t + ph).sin());
            }
        }
        EventClass::HighRiskDanger => {
            let f0 = rng.gen_range(40.0..80.0);
            for h in 1..=12 {
                let f = f0 * h as f64;
                let ph = rng.gen_range(0.0..2.0 * PI);
                let amp = 1.0 / (h as f64).sqrt();
                for (i, v) in x.iter_mut().enumerate() {
                    *v += amp * (2.0 * PI * f * i as f64 / sr + ph).sin();
                }
            }
            let thumps = rng.gen_range(2..=6);
            for _ in 0..thumps {
                let k = knock(rng, sr, 100.0, 6000.0, 0.02);
                let at = rng.gen_range(0..n.max(1));
                add_at(&mut x, at, &k, 6.0);
            }
        }
    }
    x
}

/// Deterministic event audio: peak-normalized to `loudness_db` dBFS.
pub fn synthesize_event(spec: &EventSpec) -> Result<AudioSegment> {
    if !(spec.duration_s > 0.0 && spec.duration_s.is_finite()) {
        return Err(SimError::Input(format!(
            "event duration must be positive, got {}",
            spec.duration_s
        )));
    }
    if spec.sample_rate == 0 {
        return Err(SimError::Input("sample rate must be positive".into()));
    }
    let sr = f64::from(spec.sample_rate);
    let n = (spec.duration_s * sr).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::from(RECIPE_VERSION) << 32 | spec.class.id() as u64);
    let mut x = synthesize(spec.class, &mut rng, n, sr);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = 10f64.powf(spec.loudness_db / 20.0);
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / peak);
    }
    Ok(AudioSegment::new(x, spec.sample_rate, spec.class.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band_energy_fraction(x: &[f64], sr: f64, lo: f64, hi: f64) -> f64 {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        let (mut inside, mut total) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(x.len() / 2) {
            let f = k as f64 * sr / x.len() as f64;
            let e = c.norm_sqr();
            total += e;
            if f >= lo && f <= hi {
                inside += e;
            }
        }
        inside / total
    }

    #[test]
    fn same_seed_is_bit_identical() {
        for c in EventClass::ALL {
            let s = EventSpec::new(c, 0.5, 11).with_sample_rate(32_000);
            assert_eq!(synthesize_event(&s).unwrap(), synthesize_event(&s).unwrap());
        }
        let a = synthesize_event(&EventSpec::new(EventClass::KnockWood, 0.5, 1)).unwrap();
        let b = synthesize_event(&EventSpec::new(EventClass::KnockWood, 0.5, 2)).unwrap();
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn small_bubbles_live_between_1_and_20_khz() {
        let a = synthesize_event(&EventSpec::new(EventClass::BubblesSmall, 2.0, 4)).unwrap();
        assert!(band_energy_fraction(&a.samples, 96_000.0, 1000.0, 20_000.0) > 0.95);
    }

    #[test]
    fn band_recipes_stay_in_band() {
        let sr = 48_000.0;
        let cases = [
            (EventClass::KnockConcreteWall, 40.0, 450.0),
            (EventClass::KnockPlastic, 2900.0, 10100.0),
            (EventClass::PlasticScratching, 1900.0, 8100.0),
        ];
        for (c, lo, hi) in cases {
            let a = synthesize_event(&EventSpec::new(c, 1.0, 9).with_sample_rate(48_000)).unwrap();
            assert!(band_energy_fraction(&a.samples, sr, lo, hi) > 0.9, "{c}");
        }
    }

    #[test]
    fn peak_matches_loudness() {
        let mut s = EventSpec::new(EventClass::MetalClank, 1.0, 3).with_sample_rate(16_000);
        s.loudness_db = -20.0;
        let a = synthesize_event(&s).unwrap();
        let peak = a.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_rejected() {
        assert!(synthesize_event(&EventSpec::new(EventClass::KnockWood, 0.0, 1)).is_err());
    }
}
