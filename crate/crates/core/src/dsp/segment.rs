use super::{AudioSegment, DspError, Result};

/// Size of one segment in bits: `sample_rate × bits_per_sample × duration`.
///
/// At 96 kHz, 24 bit and 6 s this is 13 824 000 bits (≈13.8 M). The byte
/// count is [`segment_size_bytes`].
pub fn segment_size_bits(sample_rate: u32, bits_per_sample: u32, duration_s: f64) -> u64 {
    (sample_rate as f64 * bits_per_sample as f64 * duration_s).round() as u64
}

pub fn segment_size_bytes(sample_rate: u32, bits_per_sample: u32, duration_s: f64) -> u64 {
    segment_size_bits(sample_rate, bits_per_sample, duration_s).div_ceil(8)
}

/// Buffers an unbounded sample stream and cuts it into full segments.
///
/// A trailing partial buffer is kept until more samples arrive; it is never
/// emitted.
#[derive(Debug, Clone)]
pub struct StreamSegmenter {
    sample_rate: u32,
    segment_len: usize,
    channel_id: String,
    buffer: Vec<f64>,
    consumed: u64,
}

impl StreamSegmenter {
    pub fn new(sample_rate: u32, duration_s: f64, channel_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::Config("sample_rate must be > 0".into()));
        }
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(DspError::Config(format!(
                "segment duration must be > 0, got {duration_s}"
            )));
        }
        let exact = sample_rate as f64 * duration_s;
        let segment_len = exact.round();
        if segment_len < 1.0 || (exact - segment_len).abs() > 1e-6 {
            return Err(DspError::Config(format!(
                "sample_rate × duration must be a whole number of samples, got {exact}"
            )));
        }
        Ok(Self {
            sample_rate,
            segment_len: segment_len as usize,
            channel_id: channel_id.into(),
            buffer: Vec::with_capacity(segment_len as usize),
            consumed: 0,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_len as f64 / self.sample_rate as f64
    }

    /// Samples waiting for the current buffer to fill.
    pub fn retained(&self) -> &[f64] {
        &self.buffer
    }

    pub fn push(&mut self, mut chunk: &[f64]) -> Vec<AudioSegment> {
        let mut out = Vec::new();
        while !chunk.is_empty() {
            let room = self.segment_len - self.buffer.len();
            let take = room.min(chunk.len());
            self.buffer.extend_from_slice(&chunk[..take]);
            chunk = &chunk[take..];
            if self.buffer.len() == self.segment_len {
                let samples =
                    std::mem::replace(&mut self.buffer, Vec::with_capacity(self.segment_len));
                out.push(AudioSegment {
                    samples,
                    sample_rate: self.sample_rate,
                    channel_id: self.channel_id.clone(),
                    start_sample: self.consumed,
                });
                self.consumed += self.segment_len as u64;
            }
        }
        out
    }
}

/// Cuts a finite stream into segments; returns them with the retained tail.
pub fn segment_stream(
    stream: &[f64],
    sample_rate: u32,
    duration_s: f64,
    channel_id: &str,
) -> Result<(Vec<AudioSegment>, Vec<f64>)> {
    let mut segmenter = StreamSegmenter::new(sample_rate, duration_s, channel_id)?;
    let segments = segmenter.push(stream);
    Ok((segments, segmenter.retained().to_vec()))
}
