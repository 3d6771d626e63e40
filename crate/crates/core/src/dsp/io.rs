use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{AudioSegment, DspError, Result, Spectrogram};

/// Decoded audio with one sample vector per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelAudio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl MultiChannelAudio {
    pub fn into_segments(self, prefix: &str) -> Vec<AudioSegment> {
        let sr = self.sample_rate;
        self.channels
            .into_iter()
            .enumerate()
            .map(|(i, s)| AudioSegment::new(s, sr, format!("{prefix}{}", i + 1)))
            .collect()
    }
}

/// Reads 16/24/32-bit integer or 32-bit float PCM WAV, scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelAudio> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(DspError::Input(format!(
                    "unsupported float width {}",
                    spec.bits_per_sample
                )));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Int => {
            let scale = match spec.bits_per_sample {
                16 | 24 | 32 => (1u64 << (spec.bits_per_sample - 1)) as f64,
                b => return Err(DspError::Input(format!("unsupported integer width {b}"))),
            };
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok(MultiChannelAudio {
        sample_rate: spec.sample_rate,
        channels: deinterleave(&interleaved, n_ch),
    })
}

/// Writes 32-bit float WAV; all channels must have equal length.
pub fn write_wav(path: impl AsRef<Path>, sample_rate: u32, channels: &[&[f64]]) -> Result<()> {
    let len = check_channels(channels)?;
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for i in 0..len {
        for ch in channels {
            writer.write_sample(ch[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Metadata stored next to a headerless little-endian `f32` file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub sample_rate: u32,
    pub channels: u16,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_raw_f32(path: impl AsRef<Path>, sample_rate: u32, channels: &[&[f64]]) -> Result<()> {
    let path = path.as_ref();
    let len = check_channels(channels)?;
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..len {
        for ch in channels {
            w.write_f32::<LittleEndian>(ch[i] as f32)?;
        }
    }
    w.flush()?;
    let meta = RawSidecar {
        sample_rate,
        channels: channels.len() as u16,
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Reads a raw float file; its `<path>.json` sidecar supplies rate and channel count.
pub fn read_raw_f32(path: impl AsRef<Path>) -> Result<MultiChannelAudio> {
    let path = path.as_ref();
    let meta: RawSidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    if meta.channels == 0 || meta.sample_rate == 0 {
        return Err(DspError::Input("sidecar declares zero channels or rate".into()));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let frame_bytes = 4 * meta.channels as usize;
    if bytes.len() % frame_bytes != 0 {
        return Err(DspError::Input(format!(
            "raw payload of {} bytes is not a whole number of {}-channel frames",
            bytes.len(),
            meta.channels
        )));
    }
    let mut cursor = &bytes[..];
    let mut interleaved = Vec::with_capacity(bytes.len() / 4);
    while !cursor.is_empty() {
        interleaved.push(cursor.read_f32::<LittleEndian>()? as f64);
    }
    Ok(MultiChannelAudio {
        sample_rate: meta.sample_rate,
        channels: deinterleave(&interleaved, meta.channels as usize),
    })
}

fn deinterleave(interleaved: &[f64], n_ch: usize) -> Vec<Vec<f64>> {
    let frames = interleaved.len() / n_ch.max(1);
    (0..n_ch)
        .map(|c| (0..frames).map(|i| interleaved[i * n_ch + c]).collect())
        .collect()
}

fn check_channels(channels: &[&[f64]]) -> Result<usize> {
    let len = channels
        .first()
        .map(|c| c.len())
        .ok_or_else(|| DspError::Input("no channels to write".into()))?;
    if channels.iter().any(|c| c.len() != len) {
        return Err(DspError::Input("channels differ in length".into()));
    }
    Ok(len)
}

/// CSV with one row per frequency bin: `frequency_hz,frame_0,frame_1,…`.
pub fn spectrogram_to_csv(spec: &Spectrogram, mut out: impl Write) -> Result<()> {
    write!(out, "frequency_hz")?;
    for f in 0..spec.frames() {
        write!(out, ",t{:.4}", f as f64 * spec.hop_s)?;
    }
    writeln!(out)?;
    for b in 0..spec.bins() {
        write!(out, "{}", spec.bin_frequency(b))?;
        for f in 0..spec.frames() {
            write!(out, ",{}", spec.magnitude(b, f))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Renders a row-major `rows × cols` matrix as a heatmap; row 0 is drawn at the bottom.
pub fn write_heatmap_png(
    path: impl AsRef<Path>,
    values: &[f64],
    rows: usize,
    cols: usize,
) -> Result<()> {
    if values.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(DspError::Input(format!(
            "heatmap needs {rows}×{cols} values, got {}",
            values.len()
        )));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
        let r = rows - 1 - y as usize;
        let v = values[r * cols + x as usize];
        let t = if v.is_finite() { (v - lo) / span } else { 0.0 };
        image::Rgb(colormap(t))
    });
    img.save(path)?;
    Ok(())
}

fn colormap(t: f64) -> [u8; 3] {
    // dark blue → teal → yellow
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.5 * t - 0.5).clamp(0.0, 1.0)) as u8;
    let g = (255.0 * t.sqrt()) as u8;
    let b = (255.0 * (1.0 - t).powf(0.7) * 0.8 + 30.0 * (1.0 - t)) as u8;
    [r, g, b]
}
