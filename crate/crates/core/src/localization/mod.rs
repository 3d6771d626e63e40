//! Time-difference-of-arrival source localization on a hydrophone array.
//!
//! Positions live in a 2D plane at the water surface. The wall line is `y = 0`
//! and the water side is `y ≥ 0`.

mod delays;
mod geometry;
mod scenario;
mod solver;

pub use delays::{estimate_delays, DelayConfig};
pub use geometry::{
    forward_delays, ArrayGeometry, Hydrophone, Point, TdoaMeasurement, DEFAULT_SPEED_OF_SOUND,
    FEASIBILITY_SLACK_S,
};
pub use scenario::{run_scenario, Measurement, Scenario, ScenarioOutput};
pub use solver::{
    classify_region, residual_at, residual_surface, solve_position, LocalizationResult, Region,
    ResidualSurface, SearchRange,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid measurement: {0}")]
    Measurement(String),
    #[error("invalid search range: {0}")]
    Search(String),
    #[error("no feasible grid point in the search range")]
    InfeasibleGeometry,
    #[error("no signal on channel {channel} (rms {rms_db:.1} dBFS)")]
    NoSignal { channel: usize, rms_db: f64 },
    #[error("ambiguous delay on channel {channel}: correlation peak {peak:.3} below floor")]
    AmbiguousDelay { channel: usize, peak: f64 },
    #[error("invalid recordings: {0}")]
    Recording(String),
    #[error("scenario file: {0}")]
    Scenario(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

pub type Result<T> = std::result::Result<T, LocalizationError>;
