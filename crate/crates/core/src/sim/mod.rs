//! Synthetic event audio, multi-hydrophone scenes, the buffered acquisition
//! loop and the on-disk sample store.

mod acquisition;
mod classes;
mod corpus;
mod scene;
mod store;
mod synth;

pub use acquisition::{
    acquisition_loop, AcquisitionConfig, AcquisitionReport, Buffer, Pacing, SimulatedStream,
    StreamSource,
};
pub use classes::{EventClass, N_CLASSES};
pub use corpus::{build_corpus, corpus_plan, synthesize_sample, CorpusConfig, PlannedSample};
pub use scene::{render_scene, RenderedScene, Scene, SceneEvent};
pub use store::{
    read_mel, write_mel, LabelEvent, NewSample, Provenance, SampleFilter, SampleStore, StoredSample,
};
pub use synth::{synthesize_event, EventSpec, RECIPE_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("sample {0} not found")]
    NotFound(u64),
    #[error("buffer overrun: {dropped} buffers dropped, {handled} handled")]
    BufferOverrun { dropped: u64, handled: u64 },
    #[error("store: {0}")]
    Store(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
