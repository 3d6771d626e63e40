use std::time::{Duration, Instant};

use crossbeam::channel::{bounded, TrySendError};
use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::dsp::{AudioSegment, StreamSegmenter, DEFAULT_SEGMENT_SECONDS};

/// A capture device delivering fixed-size callback blocks.
pub trait StreamSource: Send {
    fn sample_rate(&self) -> u32;
    fn channel_ids(&self) -> Vec<String>;
    /// One block per channel, or `None` at end of stream.
    fn next_block(&mut self) -> Option<Vec<Vec<f64>>>;
}

/// Replays in-memory audio in blocks.
pub struct SimulatedStream {
    channels: Vec<Vec<f64>>,
    ids: Vec<String>,
    sample_rate: u32,
    block: usize,
    pos: usize,
}

impl SimulatedStream {
    pub fn new(segments: Vec<AudioSegment>, block_s: f64) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| SimError::Input("stream needs at least one channel".into()))?;
        let sr = first.sample_rate;
        let len = first.samples.len();
        if segments.iter().any(|s| s.sample_rate != sr || s.samples.len() != len) {
            return Err(SimError::Input("stream channels differ in rate or length".into()));
        }
        let block = (block_s * f64::from(sr)).round() as usize;
        if block == 0 {
            return Err(SimError::Input("block size must be at least one sample".into()));
        }
        Ok(Self {
            ids: segments.iter().map(|s| s.channel_id.clone()).collect(),
            channels: segments.into_iter().map(|s| s.samples).collect(),
            sample_rate: sr,
            block,
            pos: 0,
        })
    }

    /// `duration_s` of silence on `channels` channels; handy for timing tests.
    pub fn silent(channels: usize, sample_rate: u32, duration_s: f64, block_s: f64) -> Result<Self> {
        let n = (duration_s * f64::from(sample_rate)).round() as usize;
        let segs = (0..channels)
            .map(|i| AudioSegment::new(vec![0.0; n], sample_rate, format!("H{}", i + 1)))
            .collect();
        Self::new(segs, block_s)
    }
}

impl StreamSource for SimulatedStream {
    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn channel_ids(&self) -> Vec<String> {
        self.ids.clone()
    }

    fn next_block(&mut self) -> Option<Vec<Vec<f64>>> {
        let len = self.channels[0].len();
        if self.pos >= len {
            return None;
        }
        let end = (self.pos + self.block).min(len);
        let out = self.channels.iter().map(|c| c[self.pos..end].to_vec()).collect();
        self.pos = end;
        Some(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// Deliver as fast as the handler consumes; the producer blocks on a full queue.
    Unpaced,
    /// Deliver on the stream clock sped up by `speedup`; a full queue drops buffers.
    RealTime { speedup: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub buffer_s: f64,
    pub queue_capacity: usize,
    pub pacing: Pacing,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            buffer_s: DEFAULT_SEGMENT_SECONDS,
            queue_capacity: 4,
            pacing: Pacing::Unpaced,
        }
    }
}

/// One full buffer across all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Buffer {
    pub index: u64,
    pub start_time_s: f64,
    pub channels: Vec<AudioSegment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionReport {
    pub captured: u64,
    pub handled: u64,
    pub dropped: u64,
    pub max_backlog: usize,
    /// Worst time from first sample of a buffer to handler completion, stream seconds.
    pub worst_latency_s: f64,
}

/// Cuts the stream into buffers and runs `handler` on each, in order.
///
/// The handler runs on the calling thread while a producer thread reads the
/// source. Under real-time pacing a full queue drops buffers, and the run
/// ends with [`SimError::BufferOverrun`].
pub fn acquisition_loop<S, F>(mut source: S, cfg: &AcquisitionConfig, mut handler: F) -> Result<AcquisitionReport>
where
    S: StreamSource,
    F: FnMut(Buffer),
{
    if cfg.queue_capacity == 0 {
        return Err(SimError::Input("queue capacity must be positive".into()));
    }
    let speedup = match cfg.pacing {
        Pacing::RealTime { speedup } if !(speedup > 0.0) => {
            return Err(SimError::Input("speedup must be positive".into()))
        }
        Pacing::RealTime { speedup } => Some(speedup),
        Pacing::Unpaced => None,
    };
    let sr = source.sample_rate();
    let ids = source.channel_ids();
    let mut segmenters = ids
        .iter()
        .map(|id| StreamSegmenter::new(sr, cfg.buffer_s, id.clone()))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let (tx, rx) = bounded::<(Buffer, Instant)>(cfg.queue_capacity);
    let t0 = Instant::now();
    let mut report = AcquisitionReport::default();

    let (captured, dropped) = std::thread::scope(|scope| {
        let producer = scope.spawn(move || {
            let (mut captured, mut dropped) = (0u64, 0u64);
            let mut stream_samples = 0usize;
            while let Some(block) = source.next_block() {
                stream_samples += block.first().map_or(0, Vec::len);
                if let Some(s) = speedup {
                    let due = Duration::from_secs_f64(stream_samples as f64 / f64::from(sr) / s);
                    if let Some(wait) = due.checked_sub(t0.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
                let mut ready: Vec<Vec<AudioSegment>> = segmenters
                    .iter_mut()
                    .zip(&block)
                    .map(|(seg, chunk)| seg.push(chunk))
                    .collect();
                let n_ready = ready.iter().map(Vec::len).min().unwrap_or(0);
                for _ in 0..n_ready {
                    let channels: Vec<AudioSegment> = ready.iter_mut().map(|r| r.remove(0)).collect();
                    let buf = Buffer {
                        index: captured,
                        start_time_s: captured as f64 * cfg.buffer_s,
                        channels,
                    };
                    captured += 1;
                    let item = (buf, Instant::now());
                    if speedup.is_some() {
                        match tx.try_send(item) {
                            Ok(()) => {}
                            Err(TrySendError::Full(_)) => dropped += 1,
                            Err(TrySendError::Disconnected(_)) => return (captured, dropped),
                        }
                    } else if tx.send(item).is_err() {
                        return (captured, dropped);
                    }
                }
            }
            (captured, dropped)
        });

        for (buf, queued_at) in rx.iter() {
            report.max_backlog = report.max_backlog.max(rx.len() + 1);
            handler(buf);
            report.handled += 1;
            let waited = queued_at.elapsed().as_secs_f64() * speedup.unwrap_or(1.0);
            report.worst_latency_s = report.worst_latency_s.max(cfg.buffer_s + waited);
        }
        producer.join().expect("acquisition producer panicked")
    });
    report.captured = captured;
    report.dropped = dropped;
    if dropped > 0 {
        return Err(SimError::BufferOverrun {
            dropped,
            handled: report.handled,
        });
    }
    Ok(report)
}
