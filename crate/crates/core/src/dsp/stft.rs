use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioSegment, DspError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowFunction {
    #[default]
    Hann,
    Rectangular,
}

impl WindowFunction {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFunction::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            WindowFunction::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    /// Window length in seconds.
    pub window_s: f64,
    /// Fraction of a window shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub window_fn: WindowFunction,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_s: 0.1,
            overlap: 0.5,
            window_fn: WindowFunction::Hann,
        }
    }
}

impl StftConfig {
    pub fn hop_s(&self) -> f64 {
        self.window_s * (1.0 - self.overlap)
    }
}

/// Magnitude spectrogram, stored frame-major (`frames × bins`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    bins: usize,
    frames: usize,
    pub sample_rate: u32,
    /// Hz per frequency bin (`1 / window`).
    pub bin_width: f64,
    pub hop_s: f64,
    pub window_s: f64,
}

impl Spectrogram {
    pub fn from_frames(
        magnitudes: Vec<f64>,
        bins: usize,
        frames: usize,
        sample_rate: u32,
        window_s: f64,
        hop_s: f64,
    ) -> Result<Self> {
        if magnitudes.len() != bins * frames {
            return Err(DspError::Input(format!(
                "expected {} magnitudes for {bins} bins × {frames} frames, got {}",
                bins * frames,
                magnitudes.len()
            )));
        }
        Ok(Self {
            magnitudes,
            bins,
            frames,
            sample_rate,
            bin_width: 1.0 / window_s,
            hop_s,
            window_s,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn magnitude(&self, bin: usize, frame: usize) -> f64 {
        self.magnitudes[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.magnitudes[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    /// Power in absolute dB (`10·log10(|X|²)`), before any referencing or clipping.
    pub fn power_db(&self) -> Vec<f64> {
        self.magnitudes
            .iter()
            .map(|m| 10.0 * (m * m).log10())
            .collect()
    }

    /// Bin index holding the largest magnitude over all frames.
    pub fn peak_bin(&self) -> usize {
        let mut best = (0usize, f64::NEG_INFINITY);
        for f in 0..self.frames {
            for (b, &m) in self.frame(f).iter().enumerate() {
                if m > best.1 {
                    best = (b, m);
                }
            }
        }
        best.0
    }
}

/// Short-time Fourier transform with the final window zero-padded.
///
/// Frame `k` covers samples `[k·hop, k·hop + window)`; there are
/// `floor(len / hop) + 1` frames, so a 6 s segment with 50 ms hop has 121.
pub fn stft(segment: &AudioSegment, cfg: &StftConfig) -> Result<Spectrogram> {
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(DspError::Config(format!(
            "overlap fraction must be in [0, 1), got {}",
            cfg.overlap
        )));
    }
    if segment.sample_rate == 0 {
        return Err(DspError::Config("sample_rate must be > 0".into()));
    }
    let sr = segment.sample_rate as f64;
    let win_len = (cfg.window_s * sr).round() as usize;
    let hop = (cfg.hop_s() * sr).round() as usize;
    if win_len == 0 || hop == 0 {
        return Err(DspError::Config(format!(
            "window of {} s is shorter than one sample",
            cfg.window_s
        )));
    }
    if win_len > segment.len() {
        return Err(DspError::Input(format!(
            "window of {win_len} samples is longer than the {}-sample segment",
            segment.len()
        )));
    }

    let frames = segment.len() / hop + 1;
    let bins = win_len / 2 + 1;
    let window = cfg.window_fn.coefficients(win_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win_len);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); win_len];
    let mut magnitudes = Vec::with_capacity(frames * bins);

    for k in 0..frames {
        let start = k * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = segment.samples.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(x * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        magnitudes.extend(buf[..bins].iter().map(|c| c.norm()));
    }

    Ok(Spectrogram {
        magnitudes,
        bins,
        frames,
        sample_rate: segment.sample_rate,
        bin_width: sr / win_len as f64,
        hop_s: hop as f64 / sr,
        window_s: win_len as f64 / sr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: u32, seconds: f64) -> AudioSegment {
        let n = (sr as f64 * seconds) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioSegment::new(samples, sr, "t")
    }

    #[test]
    fn six_seconds_gives_121_frames_of_10hz_bins() {
        let seg = AudioSegment::new(vec![0.0; 576_000], 96_000, "z");
        let spec = stft(&seg, &StftConfig::default()).unwrap();
        assert_eq!(spec.frames(), 121);
        assert_eq!(spec.bins(), 4801);
        assert_eq!(spec.bin_width, 10.0);
        assert!((spec.hop_s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_segment_has_zero_magnitudes() {
        let seg = AudioSegment::new(vec![0.0; 96_000], 96_000, "z");
        let spec = stft(&seg, &StftConfig::default()).unwrap();
        assert!(spec.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn pure_tones_peak_at_frequency_times_window() {
        for f in [100.0, 1000.0, 10_000.0] {
            let spec = stft(&tone(f, 96_000, 1.0), &StftConfig::default()).unwrap();
            assert_eq!(spec.peak_bin(), (f * 0.1_f64).round() as usize, "tone {f}");
        }
    }

    #[test]
    fn window_longer_than_segment_is_an_input_error() {
        let seg = AudioSegment::new(vec![0.0; 100], 96_000, "z");
        assert!(matches!(
            stft(&seg, &StftConfig::default()),
            Err(DspError::Input(_))
        ));
    }

    #[test]
    fn bad_overlap_is_rejected() {
        let seg = AudioSegment::new(vec![0.0; 96_000], 96_000, "z");
        let cfg = StftConfig {
            overlap: 1.0,
            ..Default::default()
        };
        assert!(stft(&seg, &cfg).is_err());
    }

    #[test]
    fn scaling_never_lowers_absolute_power_db() {
        let seg = tone(1234.0, 8_000, 0.5);
        let loud = AudioSegment::new(
            seg.samples.iter().map(|x| x * 3.0).collect(),
            seg.sample_rate,
            "t",
        );
        let a = stft(&seg, &StftConfig::default()).unwrap().power_db();
        let b = stft(&loud, &StftConfig::default()).unwrap().power_db();
        for (x, y) in a.iter().zip(&b) {
            assert!(y >= x || (x.is_infinite() && y.is_infinite()));
        }
    }
}
