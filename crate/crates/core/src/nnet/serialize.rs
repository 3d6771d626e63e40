//! Versioned binary model files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "HWNN"
//! version      u16      1
//! kind         u8       1 = autoencoder, 2 = classifier
//! config       kind-specific:
//!   autoencoder: mel_bands u32, frames u32, hidden u32, dropout f64
//!   classifier:  input u32, n_hidden u32, hidden[n_hidden] u32, classes u32, activation u8
//! n_tensors    u32
//! per tensor:  len u64, then len × f64
//! ```
//!
//! Tensors follow the model's parameter visit order.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::autoencoder::{Autoencoder, AutoencoderConfig};
use super::layers::{Activation, Parameters};
use super::mlp::{Mlp, MlpConfig};
use super::{NnetError, Result};

const MAGIC: &[u8; 4] = b"HWNN";
pub const FORMAT_VERSION: u16 = 1;
const KIND_AE: u8 = 1;
const KIND_MLP: u8 = 2;

/// Either model kind, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Autoencoder(Autoencoder),
    Classifier(Mlp),
}

fn write_tensors(model: &impl Parameters, w: &mut impl Write) -> Result<()> {
    let mut count = 0u32;
    model.visit(&mut |_| count += 1);
    w.write_u32::<LittleEndian>(count)?;
    let mut err = None;
    model.visit(&mut |p| {
        if err.is_some() {
            return;
        }
        let res = (|| -> std::io::Result<()> {
            w.write_u64::<LittleEndian>(p.len() as u64)?;
            for &x in p {
                w.write_f64::<LittleEndian>(x)?;
            }
            Ok(())
        })();
        if let Err(e) = res {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn read_tensors(model: &mut impl Parameters, r: &mut impl Read) -> Result<()> {
    let mut expected = 0u32;
    model.visit(&mut |_| expected += 1);
    let count = r.read_u32::<LittleEndian>()?;
    if count != expected {
        return Err(NnetError::Format(format!(
            "file holds {count} tensors, model layout needs {expected}"
        )));
    }
    let mut err: Option<NnetError> = None;
    model.visit_mut(&mut |p| {
        if err.is_some() {
            return;
        }
        let res = (|| -> Result<()> {
            let len = r.read_u64::<LittleEndian>()? as usize;
            if len != p.len() {
                return Err(NnetError::Format(format!(
                    "tensor of {len} values where {} expected",
                    p.len()
                )));
            }
            r.read_f64_into::<LittleEndian>(p)?;
            Ok(())
        })();
        if let Err(e) = res {
            err = Some(e);
        }
    });
    err.map_or(Ok(()), Err)
}

fn write_header(w: &mut impl Write, kind: u8) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u8(kind)?;
    Ok(())
}

pub fn write_autoencoder(model: &Autoencoder, mut w: impl Write) -> Result<()> {
    write_header(&mut w, KIND_AE)?;
    let c = &model.config;
    w.write_u32::<LittleEndian>(c.mel_bands as u32)?;
    w.write_u32::<LittleEndian>(c.frames as u32)?;
    w.write_u32::<LittleEndian>(c.hidden as u32)?;
    w.write_f64::<LittleEndian>(c.dropout)?;
    write_tensors(model, &mut w)
}

pub fn write_classifier(model: &Mlp, mut w: impl Write) -> Result<()> {
    write_header(&mut w, KIND_MLP)?;
    let c = &model.config;
    w.write_u32::<LittleEndian>(c.input as u32)?;
    w.write_u32::<LittleEndian>(c.hidden.len() as u32)?;
    for &h in &c.hidden {
        w.write_u32::<LittleEndian>(h as u32)?;
    }
    w.write_u32::<LittleEndian>(c.classes as u32)?;
    w.write_u8(c.activation.code())?;
    write_tensors(model, &mut w)
}

pub fn read_model(mut r: impl Read) -> Result<ModelFile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnetError::Format("not a model file (bad magic)".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(NnetError::Format(format!(
            "unsupported model format version {version}"
        )));
    }
    match r.read_u8()? {
        KIND_AE => {
            let config = AutoencoderConfig {
                mel_bands: r.read_u32::<LittleEndian>()? as usize,
                frames: r.read_u32::<LittleEndian>()? as usize,
                hidden: r.read_u32::<LittleEndian>()? as usize,
                dropout: r.read_f64::<LittleEndian>()?,
            };
            let mut model = Autoencoder::zeros(config)?;
            read_tensors(&mut model, &mut r)?;
            Ok(ModelFile::Autoencoder(model))
        }
        KIND_MLP => {
            let input = r.read_u32::<LittleEndian>()? as usize;
            let n_hidden = r.read_u32::<LittleEndian>()? as usize;
            if n_hidden > 64 {
                return Err(NnetError::Format(format!("{n_hidden} hidden layers")));
            }
            let hidden = (0..n_hidden)
                .map(|_| r.read_u32::<LittleEndian>().map(|v| v as usize))
                .collect::<std::io::Result<Vec<_>>>()?;
            let classes = r.read_u32::<LittleEndian>()? as usize;
            let activation = Activation::from_code(r.read_u8()?)
                .ok_or_else(|| NnetError::Format("unknown activation code".into()))?;
            let mut model = Mlp::zeros(MlpConfig {
                input,
                hidden,
                classes,
                activation,
            })?;
            read_tensors(&mut model, &mut r)?;
            Ok(ModelFile::Classifier(model))
        }
        k => Err(NnetError::Format(format!("unknown model kind {k}"))),
    }
}

pub fn save_autoencoder(model: &Autoencoder, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_autoencoder(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_classifier(model: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_classifier(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_autoencoder(path: impl AsRef<Path>) -> Result<Autoencoder> {
    match read_model(std::io::BufReader::new(std::fs::File::open(path)?))? {
        ModelFile::Autoencoder(m) => Ok(m),
        ModelFile::Classifier(_) => Err(NnetError::Format(
            "expected an autoencoder, found a classifier".into(),
        )),
    }
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<Mlp> {
    match read_model(std::io::BufReader::new(std::fs::File::open(path)?))? {
        ModelFile::Classifier(m) => Ok(m),
        ModelFile::Autoencoder(_) => Err(NnetError::Format(
            "expected a classifier, found an autoencoder".into(),
        )),
    }
}
