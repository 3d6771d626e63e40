//! Live recognition pipeline and the operator HTTP API.
//!
//! [`run_pipeline`] turns one multi-channel buffer into an
//! [`ObservationRecord`]. [`Service`] owns the sample store, the observation
//! log, the active policy and model snapshots, and the event broadcast;
//! [`router`] exposes it over HTTP.

mod api;
mod pipeline;
mod state;

pub use api::{router, serve};
pub use pipeline::{
    run_pipeline, ModelSet, ObservationRecord, PipelineConfig, Stage, StageError, StageTimings,
};
pub use state::{
    LevelCounts, ModelInfo, ObservationEvent, ObservationPage, ObservationQuery, PolicySnapshot, Service,
    ServiceConfig, WhatIfReport, DEFAULT_PAGE_SIZE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("observation {0} not found")]
    NotFound(u64),
    #[error("model set {0:?} not found")]
    UnknownModel(String),
    #[error("invalid policy: {}", .0.join("; "))]
    InvalidPolicy(Vec<String>),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Risk(#[from] crate::risk::RiskError),
    #[error(transparent)]
    Model(#[from] crate::nnet::NnetError),
    #[error(transparent)]
    Store(#[from] crate::sim::SimError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ServiceError>;
