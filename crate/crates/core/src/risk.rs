//! Rule-based risk assessment over classification, anomaly and location.
//!
//! Four levels, `Normal < Review < Alert < Alarm`. Each rule that fires adds
//! a [`TriggeredRule`] to the trace; the assessed level is the highest level
//! among the fired rules.
//!
//! Rules, in the order given by the policy's `priority`:
//!
//! * classification: `risk = max_c weight_c · p_c`, compared against the
//!   alarm/alert/review thresholds.
//! * anomaly: score above `anomaly_threshold` gives `Review`.
//! * localization: source within `proximity_threshold_m` of the wall line
//!   (`y = 0`) gives `Review`.
//! * anomaly and proximity together give `Alarm`.
//!
//! When classification ranks above a standalone anomaly or proximity rule and
//! the top class is benign (weight 0) with probability at least
//! `benign_confidence`, that standalone rule is suppressed and listed under
//! `suppressed` instead. The combined anomaly-and-proximity rule is never
//! suppressed.
//!
//! The default thresholds are placeholders; operators are expected to tune them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localization::LocalizationResult;

#[derive(Debug, Error)]
pub enum RiskError {
    /// Policy or input does not match the registered classes.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid policy: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("policy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RiskError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RiskLevel {
    Normal,
    Review,
    Alert,
    Alarm,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 4] = [RiskLevel::Normal, RiskLevel::Review, RiskLevel::Alert, RiskLevel::Alarm];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Normal => "NORMAL",
            RiskLevel::Review => "REVIEW",
            RiskLevel::Alert => "ALERT",
            RiskLevel::Alarm => "ALARM",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Classification,
    Anomaly,
    Localization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub review: f64,
    pub alert: f64,
    pub alarm: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self { review: 0.3, alert: 0.5, alarm: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPolicy {
    pub version: u64,
    /// Risk weight in `[0, 1]` for every registered class name.
    pub class_weights: BTreeMap<String, f64>,
    pub class_thresholds: ClassThresholds,
    pub anomaly_threshold: f64,
    /// Distance from the wall line, meters.
    pub proximity_threshold_m: f64,
    /// Top-class probability above which a benign classification suppresses
    /// lower-priority standalone rules.
    pub benign_confidence: f64,
    /// A permutation of all three signals, highest priority first.
    pub priority: Vec<Signal>,
    /// Action per level, e.g. `"notify"`, `"log"`.
    pub notifications: BTreeMap<RiskLevel, String>,
}

impl Default for RiskPolicy {
    fn default() -> Self {
        use crate::sim::EventClass as C;
        let class_weights = C::ALL
            .iter()
            .map(|c| {
                let w = match c {
                    C::HighRiskDanger => 1.0,
                    C::NormalEnvironmentalNoise | C::BubblesSmall => 0.0,
                    C::MetalClank | C::PlasticScratchingKnocking | C::KnockConcreteWall => 0.6,
                    _ => 0.4,
                };
                (c.name().to_string(), w)
            })
            .collect();
        let notifications = [
            (RiskLevel::Normal, "log"),
            (RiskLevel::Review, "queue_for_review"),
            (RiskLevel::Alert, "notify"),
            (RiskLevel::Alarm, "notify_immediately"),
        ]
        .into_iter()
        .map(|(l, a)| (l, a.to_string()))
        .collect();
        Self {
            version: 1,
            class_weights,
            class_thresholds: ClassThresholds::default(),
            anomaly_threshold: 0.5,
            proximity_threshold_m: 10.0,
            benign_confidence: 0.9,
            priority: vec![Signal::Classification, Signal::Anomaly, Signal::Localization],
            notifications,
        }
    }
}

impl RiskPolicy {
    /// Same policy with anomaly ranked first.
    pub fn anomaly_first(mut self) -> Self {
        self.priority = vec![Signal::Anomaly, Signal::Classification, Signal::Localization];
        self
    }

    /// Field-path errors for everything wrong with the policy.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, w) in &self.class_weights {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                errs.push(format!("class_weights.{name}: weight must lie in [0, 1], got {w}"));
            }
        }
        if self.class_weights.is_empty() {
            errs.push("class_weights: at least one class must be registered".into());
        }
        let t = &self.class_thresholds;
        for (field, v) in [("review", t.review), ("alert", t.alert), ("alarm", t.alarm)] {
            if !v.is_finite() {
                errs.push(format!("class_thresholds.{field}: must be finite"));
            }
        }
        if !(t.review <= t.alert && t.alert <= t.alarm) {
            errs.push("class_thresholds: expected review <= alert <= alarm".into());
        }
        if !self.anomaly_threshold.is_finite() || self.anomaly_threshold < 0.0 {
            errs.push("anomaly_threshold: must be finite and non-negative".into());
        }
        if !self.proximity_threshold_m.is_finite() || self.proximity_threshold_m < 0.0 {
            errs.push("proximity_threshold_m: must be finite and non-negative".into());
        }
        if !self.benign_confidence.is_finite() {
            errs.push("benign_confidence: must be finite".into());
        }
        let all = [Signal::Classification, Signal::Anomaly, Signal::Localization];
        if self.priority.len() != 3 || !all.iter().all(|s| self.priority.contains(s)) {
            errs.push("priority: must list classification, anomaly and localization once each".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RiskError::Validation(errs))
        }
    }

    /// Every class in `names` must carry a weight.
    pub fn check_classes<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let missing: Vec<&str> = names.into_iter().filter(|n| !self.class_weights.contains_key(*n)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(RiskError::Config(format!("classes without a weight: {}", missing.join(", "))))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: RiskPolicy = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn notification(&self, level: RiskLevel) -> Option<&str> {
        self.notifications.get(&level).map(String::as_str)
    }

    fn rank(&self, s: Signal) -> usize {
        self.priority.iter().position(|p| *p == s).unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggeredRule {
    pub rule: String,
    pub level: RiskLevel,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub top_class: Option<String>,
    pub top_probability: f64,
    /// `max_c weight_c · p_c`.
    pub class_risk: f64,
    pub risk_class: Option<String>,
    pub anomaly_score: f64,
    pub wall_distance_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub observation_id: Option<u64>,
    pub level: RiskLevel,
    pub policy_version: u64,
    pub signals: Signals,
    pub trace: Vec<TriggeredRule>,
    pub suppressed: Vec<TriggeredRule>,
    pub action: Option<String>,
}

/// Class name to probability.
pub type ClassProbabilities = BTreeMap<String, f64>;

/// Evaluates `policy` on one observation's signals.
pub fn assess(
    class_probs: &ClassProbabilities,
    anomaly_score: f64,
    location: Option<&LocalizationResult>,
    policy: &RiskPolicy,
) -> Result<RiskAssessment> {
    assess_distance(class_probs, anomaly_score, location.map(|l| l.position.y.abs()), policy)
}

/// [`assess`] with the source's distance from the wall line given directly.
pub fn assess_distance(
    class_probs: &ClassProbabilities,
    anomaly_score: f64,
    wall_distance_m: Option<f64>,
    policy: &RiskPolicy,
) -> Result<RiskAssessment> {
    if wall_distance_m.is_some_and(|d| !(d >= 0.0)) {
        return Err(RiskError::Input("wall distance must be non-negative".into()));
    }
    if let Some(bad) = class_probs.keys().find(|k| !policy.class_weights.contains_key(*k)) {
        return Err(RiskError::Config(format!("class {bad:?} is not registered in the policy")));
    }
    if class_probs.values().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err(RiskError::Input("class probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = class_probs.values().sum();
    if !class_probs.is_empty() && (total - 1.0).abs() > 1e-6 {
        return Err(RiskError::Input(format!("class probabilities sum to {total}, expected 1")));
    }
    if !anomaly_score.is_finite() || anomaly_score < 0.0 {
        return Err(RiskError::Input(format!("anomaly score must be finite and >= 0, got {anomaly_score}")));
    }

    // Ties resolve to the first name in map order, which keeps the output deterministic.
    let mut top: Option<(&String, f64)> = None;
    let mut risk: Option<(&String, f64)> = None;
    for (name, &p) in class_probs {
        if top.map_or(true, |(_, tp)| p > tp) {
            top = Some((name, p));
        }
        let r = p * policy.class_weights[name];
        if risk.map_or(true, |(_, rr)| r > rr) {
            risk = Some((name, r));
        }
    }
    let wall = wall_distance_m;
    let signals = Signals {
        top_class: top.map(|(n, _)| n.clone()),
        top_probability: top.map_or(0.0, |(_, p)| p),
        class_risk: risk.map_or(0.0, |(_, r)| r),
        risk_class: risk.filter(|(_, r)| *r > 0.0).map(|(n, _)| n.clone()),
        anomaly_score,
        wall_distance_m: wall,
    };

    let benign = top.is_some_and(|(n, p)| policy.class_weights[n] == 0.0 && p >= policy.benign_confidence);
    let suppresses = |s: Signal| benign && policy.rank(Signal::Classification) < policy.rank(s);
    let anomalous = anomaly_score > policy.anomaly_threshold;
    let near = wall.is_some_and(|d| d <= policy.proximity_threshold_m);

    let mut trace = Vec::new();
    let mut suppressed = Vec::new();
    for &sig in &policy.priority {
        match sig {
            Signal::Classification => {
                let t = &policy.class_thresholds;
                let r = signals.class_risk;
                let level = if r >= t.alarm {
                    Some((RiskLevel::Alarm, t.alarm))
                } else if r >= t.alert {
                    Some((RiskLevel::Alert, t.alert))
                } else if r >= t.review && r > 0.0 {
                    Some((RiskLevel::Review, t.review))
                } else {
                    None
                };
                if let Some((level, thr)) = level {
                    trace.push(TriggeredRule {
                        rule: "classification".into(),
                        level,
                        detail: format!(
                            "{} risk {r:.3} >= {thr}",
                            signals.risk_class.as_deref().unwrap_or("?")
                        ),
                    });
                }
            }
            Signal::Anomaly => {
                if anomalous {
                    let rule = TriggeredRule {
                        rule: "anomaly".into(),
                        level: RiskLevel::Review,
                        detail: format!("score {anomaly_score:.4} > {}", policy.anomaly_threshold),
                    };
                    if suppresses(Signal::Anomaly) {
                        suppressed.push(rule);
                    } else {
                        trace.push(rule);
                    }
                }
            }
            Signal::Localization => {
                if near {
                    let rule = TriggeredRule {
                        rule: "proximity".into(),
                        level: RiskLevel::Review,
                        detail: format!(
                            "source {:.2} m from wall <= {}",
                            wall.unwrap_or(f64::NAN),
                            policy.proximity_threshold_m
                        ),
                    };
                    if suppresses(Signal::Localization) {
                        suppressed.push(rule);
                    } else {
                        trace.push(rule);
                    }
                }
            }
        }
    }
    if anomalous && near {
        trace.push(TriggeredRule {
            rule: "anomaly_near_wall".into(),
            level: RiskLevel::Alarm,
            detail: "anomalous event within proximity threshold".into(),
        });
    }

    let level = trace.iter().map(|r| r.level).max().unwrap_or(RiskLevel::Normal);
    Ok(RiskAssessment {
        observation_id: None,
        level,
        policy_version: policy.version,
        signals,
        trace,
        suppressed,
        action: policy.notification(level).map(str::to_string),
    })
}
