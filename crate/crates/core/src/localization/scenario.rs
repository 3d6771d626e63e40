use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    estimate_delays, residual_surface, solve_position, ArrayGeometry, DelayConfig,
    LocalizationError, LocalizationResult, Result, SearchRange, TdoaMeasurement,
};
use crate::dsp::read_wav;

/// Where delays come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// Delays after `reference` in milliseconds, keyed by hydrophone id.
    Delays {
        reference: String,
        delays_ms: BTreeMap<String, f64>,
    },
    /// Multi-channel WAV, one channel per hydrophone in geometry order.
    Recording { wav: PathBuf },
}

/// Localization scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub geometry: ArrayGeometry,
    pub measurement: Measurement,
    /// Defaults to 10 m around the reference hydrophone.
    #[serde(default)]
    pub search: Option<SearchRange>,
    /// Write the residual surface here as PNG.
    #[serde(default)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub measurement: TdoaMeasurement,
    pub search: SearchRange,
    pub result: LocalizationResult,
    pub elapsed_ms: f64,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LocalizationError::Scenario(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| LocalizationError::Scenario(e.to_string()))
    }

    pub fn tdoa(&self, base_dir: &Path) -> Result<TdoaMeasurement> {
        match &self.measurement {
            Measurement::Delays { reference, delays_ms } => {
                let g = &self.geometry;
                let reference = g.index_of(reference).ok_or_else(|| {
                    LocalizationError::Scenario(format!("unknown reference hydrophone {reference}"))
                })?;
                let mut delays = vec![0.0; g.len()];
                for (id, ms) in delays_ms {
                    let i = g.index_of(id).ok_or_else(|| {
                        LocalizationError::Scenario(format!("unknown hydrophone {id}"))
                    })?;
                    delays[i] = ms / 1000.0;
                }
                Ok(TdoaMeasurement { reference, delays })
            }
            Measurement::Recording { wav } => {
                let path = if wav.is_absolute() { wav.clone() } else { base_dir.join(wav) };
                let audio = read_wav(&path)?;
                if audio.channels.len() != self.geometry.len() {
                    return Err(LocalizationError::Scenario(format!(
                        "{} has {} channels for {} hydrophones",
                        path.display(),
                        audio.channels.len(),
                        self.geometry.len()
                    )));
                }
                let segs = audio.into_segments("H");
                estimate_delays(&segs, &DelayConfig::for_geometry(&self.geometry))
            }
        }
    }
}

/// Loads delays, solves, and writes the optional heat map. Relative paths
/// resolve against `base_dir`.
pub fn run_scenario(scenario: &Scenario, base_dir: &Path) -> Result<ScenarioOutput> {
    let t0 = std::time::Instant::now();
    let tdoa = scenario.tdoa(base_dir)?;
    let search = scenario
        .search
        .clone()
        .unwrap_or_else(|| SearchRange::for_measurement(&tdoa, &scenario.geometry));
    let result = solve_position(&tdoa, &scenario.geometry, &search)?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    if let Some(p) = &scenario.heatmap {
        let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        residual_surface(&tdoa, &scenario.geometry, &search)?.write_png(path)?;
    }
    Ok(ScenarioOutput { measurement: tdoa, search, result, elapsed_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_scenario_from_json() {
        let json = r#"{
            "measurement": {"delays": {"reference": "H2", "delays_ms": {"H1": 32, "H3": 36}}},
            "search": {"x_min": -10, "x_max": 10, "y_min": 0, "y_max": 10, "step": 0.5, "refine": false}
        }"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.geometry, ArrayGeometry::default());
        let out = run_scenario(&s, Path::new(".")).unwrap();
        assert_eq!(out.measurement.reference, 1);
        assert_eq!(out.measurement.delays, vec![0.032, 0.0, 0.036]);
        assert!(out.result.residual > 0.0);
    }

    #[test]
    fn unknown_hydrophone_is_reported() {
        let json = r#"{"measurement": {"delays": {"reference": "H9", "delays_ms": {}}}}"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        assert!(matches!(run_scenario(&s, Path::new(".")), Err(LocalizationError::Scenario(_))));
    }
}
