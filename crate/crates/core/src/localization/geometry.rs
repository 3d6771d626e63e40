use serde::{Deserialize, Serialize};

use super::{LocalizationError, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 1430.0;

/// Delay quantization allowed beyond the array span before a measurement is
/// rejected as infeasible. Delays quoted in whole milliseconds can overshoot
/// the span by up to this much.
pub const FEASIBILITY_SLACK_S: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hydrophone {
    pub id: String,
    pub position: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub hydrophones: Vec<Hydrophone>,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl Default for ArrayGeometry {
    /// Three hydrophones on the wall line, 50 m apart.
    fn default() -> Self {
        Self {
            hydrophones: vec![
                Hydrophone { id: "H1".into(), position: Point::new(50.0, 0.0) },
                Hydrophone { id: "H2".into(), position: Point::new(0.0, 0.0) },
                Hydrophone { id: "H3".into(), position: Point::new(-50.0, 0.0) },
            ],
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl ArrayGeometry {
    pub fn new(positions: &[Point], speed_of_sound: f64) -> Result<Self> {
        let g = Self {
            hydrophones: positions
                .iter()
                .enumerate()
                .map(|(i, &p)| Hydrophone { id: format!("H{}", i + 1), position: p })
                .collect(),
            speed_of_sound,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_speed(mut self, v: f64) -> Self {
        self.speed_of_sound = v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hydrophones.len() < 3 {
            return Err(LocalizationError::Geometry(format!(
                "need at least 3 hydrophones, got {}",
                self.hydrophones.len()
            )));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(LocalizationError::Geometry(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound
            )));
        }
        for (i, a) in self.hydrophones.iter().enumerate() {
            if !(a.position.x.is_finite() && a.position.y.is_finite()) {
                return Err(LocalizationError::Geometry(format!("{} has a non-finite position", a.id)));
            }
            for b in &self.hydrophones[i + 1..] {
                if a.position == b.position {
                    return Err(LocalizationError::Geometry(format!(
                        "{} and {} share a position",
                        a.id, b.id
                    )));
                }
                if a.id == b.id {
                    return Err(LocalizationError::Geometry(format!("duplicate id {}", a.id)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.hydrophones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hydrophones.is_empty()
    }

    pub fn position(&self, i: usize) -> Point {
        self.hydrophones[i].position
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.hydrophones.iter().position(|h| h.id == id)
    }

    pub fn max_separation(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.hydrophones.iter().enumerate() {
            for b in &self.hydrophones[i + 1..] {
                best = best.max(a.position.distance(b.position));
            }
        }
        best
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut g = self.clone();
        for h in &mut g.hydrophones {
            h.position = h.position.offset(dx, dy);
        }
        g
    }

    /// Hydrophone indices ordered along the array's longest axis.
    pub(crate) fn line_order(&self) -> Vec<usize> {
        let (mut ia, mut ib) = (0, 1);
        let mut best = -1.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = self.position(i).distance_sq(self.position(j));
                if d > best {
                    (best, ia, ib) = (d, i, j);
                }
            }
        }
        let (a, b) = (self.position(ia), self.position(ib));
        let (ux, uy) = (b.x - a.x, b.y - a.y);
        let mut order: Vec<usize> = (0..self.len()).collect();
        let proj = |i: usize| {
            let p = self.position(i);
            (p.x - a.x) * ux + (p.y - a.y) * uy
        };
        order.sort_by(|&i, &j| proj(i).total_cmp(&proj(j)).then(i.cmp(&j)));
        order
    }
}

/// Arrival delays relative to the earliest-receiving hydrophone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdoaMeasurement {
    /// Index of the reference hydrophone.
    pub reference: usize,
    /// Seconds after the reference, one per hydrophone.
    pub delays: Vec<f64>,
}

impl TdoaMeasurement {
    pub fn new(reference: usize, delays: Vec<f64>) -> Self {
        Self { reference, delays }
    }

    /// Path differences `v·Δtᵢ` in meters.
    pub fn path_differences(&self, speed_of_sound: f64) -> Vec<f64> {
        self.delays.iter().map(|d| d * speed_of_sound).collect()
    }

    pub fn validate(&self, geometry: &ArrayGeometry) -> Result<()> {
        let err = |m: String| Err(LocalizationError::Measurement(m));
        if self.delays.len() != geometry.len() {
            return err(format!(
                "{} delays for {} hydrophones",
                self.delays.len(),
                geometry.len()
            ));
        }
        if self.reference >= geometry.len() {
            return err(format!("reference index {} out of range", self.reference));
        }
        if self.delays[self.reference] != 0.0 {
            return err("reference delay must be exactly 0".into());
        }
        let limit = geometry.max_separation() + FEASIBILITY_SLACK_S * geometry.speed_of_sound;
        for (i, &d) in self.delays.iter().enumerate() {
            if !(d >= 0.0 && d.is_finite()) {
                return err(format!("delay {i} is negative or non-finite: {d}"));
            }
            if d * geometry.speed_of_sound > limit {
                return err(format!(
                    "delay {i} implies {:.3} m, beyond the {limit:.3} m feasible span",
                    d * geometry.speed_of_sound
                ));
            }
        }
        Ok(())
    }
}

/// Exact delays for a source at `source`, referenced to the nearest hydrophone.
pub fn forward_delays(source: Point, geometry: &ArrayGeometry) -> TdoaMeasurement {
    let r: Vec<f64> = geometry
        .hydrophones
        .iter()
        .map(|h| source.distance(h.position))
        .collect();
    let reference = (0..r.len())
        .min_by(|&a, &b| r[a].total_cmp(&r[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    let delays = r
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            if i == reference {
                0.0
            } else {
                ((ri - r[reference]) / geometry.speed_of_sound).max(0.0)
            }
        })
        .collect();
    TdoaMeasurement { reference, delays }
}
