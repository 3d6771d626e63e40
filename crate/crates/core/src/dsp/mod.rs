//! Audio segmentation, STFT and normalized Mel-spectrogram preprocessing.

mod io;
mod mel;
mod segment;
mod stft;

pub use io::{
    read_raw_f32, read_wav, spectrogram_to_csv, write_heatmap_png, write_raw_f32, write_wav,
    MultiChannelAudio, RawSidecar,
};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, to_mel, MelConfig, MelScale, MelSpectrogram};
pub use segment::{segment_size_bits, segment_size_bytes, segment_stream, StreamSegmenter};
pub use stft::{stft, Spectrogram, StftConfig, WindowFunction};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 96_000;
pub const DEFAULT_SEGMENT_SECONDS: f64 = 6.0;
pub const DEFAULT_BIT_DEPTH: u32 = 24;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("sidecar metadata error: {0}")]
    Sidecar(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// A fixed-duration block of single-channel samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channel_id: String,
    /// Index of the first sample within the originating stream.
    #[serde(default)]
    pub start_sample: u64,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, sample_rate: u32, channel_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            channel_id: channel_id.into(),
            start_sample: 0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Stream time of the first sample, in seconds.
    pub fn start_time(&self) -> f64 {
        self.start_sample as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Segment → 128-band normalized Mel matrix, with the default knobs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub stft: StftConfig,
    pub mel: MelConfig,
}

impl Preprocessor {
    pub fn process(&self, segment: &AudioSegment) -> Result<MelSpectrogram> {
        let spec = stft(segment, &self.stft)?;
        to_mel(&spec, &self.mel)
    }
}
