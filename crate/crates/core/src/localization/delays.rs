use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, LocalizationError, Result, TdoaMeasurement};
use crate::dsp::AudioSegment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayConfig {
    /// Largest lag searched, seconds.
    pub max_lag_s: f64,
    /// Channel RMS below this (dBFS) is treated as silence.
    pub energy_floor_db: f64,
    /// Onset is the first sample reaching this fraction of the channel peak.
    pub onset_fraction: f64,
    /// Minimum normalized correlation peak.
    pub confidence_floor: f64,
    /// Correlation window after the reference onset, seconds.
    pub window_s: f64,
    /// Window start before the reference onset, seconds.
    pub pre_onset_s: f64,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self::for_geometry(&ArrayGeometry::default())
    }
}

impl DelayConfig {
    /// Lags limited to the array span plus 10 %.
    pub fn for_geometry(geometry: &ArrayGeometry) -> Self {
        Self {
            max_lag_s: 1.1 * geometry.max_separation() / geometry.speed_of_sound,
            energy_floor_db: -90.0,
            onset_fraction: 0.25,
            confidence_floor: 0.3,
            window_s: 0.25,
            pre_onset_s: 0.01,
        }
    }
}

fn onset(x: &[f64], fraction: f64) -> usize {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter().position(|v| v.abs() >= fraction * peak).unwrap_or(0)
}

struct Correlator {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Correlator {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), n }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.n, Complex::new(0.0, 0.0));
        self.fwd.process(&mut buf);
        buf
    }

    /// `c[k] = Σₙ a[n]·b[n + k]` for `k` in `0..n`.
    fn correlate(&self, a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re / self.n as f64).collect()
    }
}

/// Arrival delays from aligned multi-channel recordings.
///
/// Each channel is cross-correlated against the earliest-onset channel over a
/// window starting just before that onset. Lags are whole samples.
pub fn estimate_delays(recordings: &[AudioSegment], cfg: &DelayConfig) -> Result<TdoaMeasurement> {
    if recordings.len() < 2 {
        return Err(LocalizationError::Recording("need at least two channels".into()));
    }
    let sr = recordings[0].sample_rate;
    if recordings.iter().any(|r| r.sample_rate != sr) {
        return Err(LocalizationError::Recording("channels differ in sample rate".into()));
    }
    let len = recordings.iter().map(|r| r.samples.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(LocalizationError::Recording("empty recording".into()));
    }
    for (i, r) in recordings.iter().enumerate() {
        let ms = r.samples[..len].iter().map(|v| v * v).sum::<f64>() / len as f64;
        let rms_db = 10.0 * ms.max(1e-300).log10();
        if rms_db < cfg.energy_floor_db {
            return Err(LocalizationError::NoSignal { channel: i, rms_db });
        }
    }

    let onsets: Vec<usize> = recordings
        .iter()
        .map(|r| onset(&r.samples[..len], cfg.onset_fraction))
        .collect();
    let reference = (0..onsets.len()).min_by_key(|&i| (onsets[i], i)).unwrap_or(0);

    let max_lag = (cfg.max_lag_s * f64::from(sr)).ceil() as usize;
    let pre = (cfg.pre_onset_s * f64::from(sr)).round() as usize;
    let start = onsets[reference].saturating_sub(pre);
    let win = ((cfg.window_s * f64::from(sr)).round() as usize).min(len - start).max(1);
    let a = &recordings[reference].samples[start..start + win];
    let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();

    // b covers [start - max_lag, start + win + max_lag), zero outside the recording
    let b_len = win + 2 * max_lag;
    let corr = Correlator::new((win + b_len).next_power_of_two());
    let sa = corr.spectrum(a);

    let mut lags = vec![0i64; recordings.len()];
    for (ch, rec) in recordings.iter().enumerate() {
        if ch == reference {
            continue;
        }
        let b: Vec<f64> = (0..b_len)
            .map(|k| {
                let idx = start as i64 - max_lag as i64 + k as i64;
                if idx >= 0 && (idx as usize) < len {
                    rec.samples[idx as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let c = corr.correlate(&sa, &corr.spectrum(&b));
        // running energy of each length-`win` slice of b
        let mut prefix = vec![0.0; b_len + 1];
        for (k, v) in b.iter().enumerate() {
            prefix[k + 1] = prefix[k] + v * v;
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for k in 0..=2 * max_lag {
            let e = (prefix[k + win] - prefix[k]).max(0.0).sqrt();
            if e <= 0.0 || a_norm <= 0.0 {
                continue;
            }
            let v = c[k] / (a_norm * e);
            if v > best.0 {
                best = (v, k);
            }
        }
        if best.0 < cfg.confidence_floor {
            return Err(LocalizationError::AmbiguousDelay { channel: ch, peak: best.0.max(0.0) });
        }
        lags[ch] = best.1 as i64 - max_lag as i64;
    }

    // Re-base if correlation puts some channel ahead of the onset reference.
    let min_lag = *lags.iter().min().expect("non-empty");
    let reference = if min_lag < 0 {
        lags.iter().position(|&l| l == min_lag).expect("present")
    } else {
        reference
    };
    let base = lags[reference];
    Ok(TdoaMeasurement {
        reference,
        delays: lags.iter().map(|&l| (l - base) as f64 / f64::from(sr)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn burst(sr: u32, len: usize, at: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; len];
        let n = (sr as usize) / 50;
        for k in 0..n {
            let env = (-(k as f64) / (n as f64 / 5.0)).exp();
            if at + k < len {
                x[at + k] = env * rng.gen_range(-1.0..1.0);
            }
        }
        x
    }

    fn seg(samples: Vec<f64>, sr: u32, ch: &str) -> AudioSegment {
        AudioSegment::new(samples, sr, ch)
    }

    #[test]
    fn shifted_transient_gives_32_ms() {
        let sr = 16_000;
        let shift = (0.032 * sr as f64) as usize;
        let a = burst(sr, sr as usize, 3000, 1);
        let mut b = vec![0.0; shift];
        b.extend_from_slice(&a[..a.len() - shift]);
        let t = estimate_delays(&[seg(a, sr, "a"), seg(b, sr, "b")], &DelayConfig::default()).unwrap();
        assert_eq!(t.reference, 0);
        assert!((t.delays[1] - 0.032).abs() <= 1.0 / sr as f64);
    }

    #[test]
    fn st2_like_recordings() {
        let sr = 48_000;
        let src = burst(sr, sr as usize, 0, 7);
        let place = |delay_s: f64, gain: f64| {
            let off = 4000 + (delay_s * sr as f64).round() as usize;
            let mut x = vec![0.0; sr as usize];
            for (k, v) in src.iter().enumerate() {
                if off + k < x.len() {
                    x[off + k] = gain * v;
                }
            }
            x
        };
        let chans = [
            seg(place(0.032, 0.5), sr, "H1"),
            seg(place(0.0, 1.0), sr, "H2"),
            seg(place(0.036, 0.4), sr, "H3"),
        ];
        let t = estimate_delays(&chans, &DelayConfig::default()).unwrap();
        assert_eq!(t.reference, 1);
        let tol = 1.0 / sr as f64;
        assert!((t.delays[0] - 0.032).abs() <= tol && (t.delays[2] - 0.036).abs() <= tol);
    }

    #[test]
    fn silence_is_no_signal() {
        let z = vec![0.0; 1000];
        let e = estimate_delays(&[seg(z.clone(), 8000, "a"), seg(z, 8000, "b")], &DelayConfig::default());
        assert!(matches!(e, Err(LocalizationError::NoSignal { channel: 0, .. })));
    }

    #[test]
    fn unrelated_noise_is_ambiguous() {
        let sr = 8000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..sr).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..sr).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = estimate_delays(&[seg(a, sr, "a"), seg(b, sr, "b")], &DelayConfig::default());
        assert!(matches!(e, Err(LocalizationError::AmbiguousDelay { .. })), "{e:?}");
    }

    #[test]
    fn mismatched_rates_are_rejected() {
        let x = vec![1.0; 10];
        let e = estimate_delays(&[seg(x.clone(), 8000, "a"), seg(x, 16000, "b")], &DelayConfig::default());
        assert!(matches!(e, Err(LocalizationError::Recording(_))));
    }
}
