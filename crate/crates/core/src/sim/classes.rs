use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;

/// The ten event classes. Discriminants are the class ids used by models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    KnockWood = 0,
    KnockPlastic = 1,
    KnockConcreteWall = 2,
    BubblesSmall = 3,
    BubblesLarge = 4,
    MetalClank = 5,
    PlasticScratching = 6,
    PlasticScratchingKnocking = 7,
    NormalEnvironmentalNoise = 8,
    HighRiskDanger = 9,
}

pub const N_CLASSES: usize = 10;

impl EventClass {
    pub const ALL: [EventClass; N_CLASSES] = [
        EventClass::KnockWood,
        EventClass::KnockPlastic,
        EventClass::KnockConcreteWall,
        EventClass::BubblesSmall,
        EventClass::BubblesLarge,
        EventClass::MetalClank,
        EventClass::PlasticScratching,
        EventClass::PlasticScratchingKnocking,
        EventClass::NormalEnvironmentalNoise,
        EventClass::HighRiskDanger,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self, SimError> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| SimError::Input(format!("unknown class id {id}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::KnockWood => "knock_wood",
            EventClass::KnockPlastic => "knock_plastic",
            EventClass::KnockConcreteWall => "knock_concrete_wall",
            EventClass::BubblesSmall => "bubbles_small",
            EventClass::BubblesLarge => "bubbles_large",
            EventClass::MetalClank => "metal_clank",
            EventClass::PlasticScratching => "plastic_scratching",
            EventClass::PlasticScratchingKnocking => "plastic_scratching_knocking",
            EventClass::NormalEnvironmentalNoise => "normal_environmental_noise",
            EventClass::HighRiskDanger => "high_risk_danger",
        }
    }

    /// Lab-recorded minority classes; the last two are field (majority) classes.
    pub fn is_minority(self) -> bool {
        !matches!(self, EventClass::NormalEnvironmentalNoise | EventClass::HighRiskDanger)
    }

    pub fn minority() -> impl Iterator<Item = EventClass> {
        Self::ALL.into_iter().filter(|c| c.is_minority())
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventClass {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .or_else(|| s.parse::<usize>().ok().and_then(|i| Self::ALL.get(i).copied()))
            .ok_or_else(|| SimError::Input(format!("unknown class {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trips() {
        for (i, c) in EventClass::ALL.iter().enumerate() {
            assert_eq!(c.id(), i);
            assert_eq!(EventClass::from_id(i).unwrap(), *c);
            assert_eq!(c.name().parse::<EventClass>().unwrap(), *c);
        }
        assert_eq!(EventClass::minority().count(), 8);
        assert!(EventClass::from_id(10).is_err());
        assert!("splash".parse::<EventClass>().is_err());
    }
}
