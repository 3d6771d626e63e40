use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, LocalizationError, Point, Result, TdoaMeasurement};

const MAX_GRID_POINTS: usize = 50_000_000;
pub const DEFAULT_SEARCH_HALF_WIDTH: f64 = 10.0;
pub const DEFAULT_GRID_STEP: f64 = 0.1;

/// Rectangular search window sampled at `x_min + i·step`, `y_min + j·step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
    /// Follow the coarse scan with a 10× finer scan around its minimum.
    #[serde(default = "yes")]
    pub refine: bool,
}

fn yes() -> bool {
    true
}

impl SearchRange {
    /// `half_width` either side of `center` along x, and `half_width` into the water along y.
    pub fn around(center: Point, half_width: f64) -> Self {
        Self {
            x_min: center.x - half_width,
            x_max: center.x + half_width,
            y_min: center.y,
            y_max: center.y + half_width,
            step: DEFAULT_GRID_STEP,
            refine: true,
        }
    }

    /// The default 10 m window anchored at the measurement's reference hydrophone.
    pub fn for_measurement(tdoa: &TdoaMeasurement, geometry: &ArrayGeometry) -> Self {
        Self::around(geometry.position(tdoa.reference), DEFAULT_SEARCH_HALF_WIDTH)
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.step];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(LocalizationError::Search("non-finite bound or step".into()));
        }
        if self.step <= 0.0 {
            return Err(LocalizationError::Search(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    fn counts(&self) -> (usize, usize) {
        let n = |lo: f64, hi: f64| {
            if hi < lo {
                0
            } else {
                ((hi - lo) / self.step + 1e-9).floor() as usize + 1
            }
        };
        (n(self.x_min, self.x_max), n(self.y_min, self.y_max))
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.x_min + i as f64 * self.step,
            self.y_min + j as f64 * self.step,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Every grid point, x-major.
    pub fn points(&self) -> Vec<Point> {
        let (nx, ny) = self.counts();
        (0..nx)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .map(|(i, j)| self.point(i, j))
            .collect()
    }
}

/// Which part of the array the source lies in, read off the delay ordering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Earliest arrival at an end hydrophone.
    Vicinity { hydrophone: String },
    /// Earliest arrival at an interior hydrophone, `far` being the next earliest neighbor.
    Between { near: String, far: String },
    /// Interior reference with equal delays to both neighbors.
    Symmetric { about: String },
    /// Every delay zero.
    Equidistant,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Vicinity { hydrophone } => write!(f, "vicinity of {hydrophone}"),
            Region::Between { near, far } => write!(f, "between {far} and {near}, closer to {near}"),
            Region::Symmetric { about } => write!(f, "symmetric boundary about {about}"),
            Region::Equidistant => write!(f, "equidistant boundary (array center)"),
        }
    }
}

pub fn classify_region(tdoa: &TdoaMeasurement, geometry: &ArrayGeometry) -> Result<Region> {
    geometry.validate()?;
    tdoa.validate(geometry)?;
    if tdoa.delays.iter().all(|&d| d == 0.0) {
        return Ok(Region::Equidistant);
    }
    let order = geometry.line_order();
    let k = order.iter().position(|&i| i == tdoa.reference).expect("reference is in range");
    let name = |i: usize| geometry.hydrophones[i].id.clone();
    if k == 0 || k == order.len() - 1 {
        return Ok(Region::Vicinity { hydrophone: name(tdoa.reference) });
    }
    let (a, b) = (order[k - 1], order[k + 1]);
    let (da, db) = (tdoa.delays[a], tdoa.delays[b]);
    Ok(match da.total_cmp(&db) {
        Ordering::Equal => Region::Symmetric { about: name(tdoa.reference) },
        Ordering::Less => Region::Between { near: name(tdoa.reference), far: name(a) },
        Ordering::Greater => Region::Between { near: name(tdoa.reference), far: name(b) },
    })
}

/// Precomputed per-measurement terms for the residual at a point.
struct Residual<'a> {
    hyd: Vec<Point>,
    d: &'a [f64],
    n: f64,
    s1: f64,
    s2: f64,
    s3: f64,
}

impl<'a> Residual<'a> {
    fn new(geometry: &ArrayGeometry, d: &'a [f64]) -> Self {
        Self {
            hyd: geometry.hydrophones.iter().map(|h| h.position).collect(),
            n: d.len() as f64,
            s1: d.iter().sum(),
            s2: d.iter().map(|x| x * x).sum(),
            s3: d.iter().map(|x| x * x * x).sum(),
            d,
        }
    }

    fn f(&self, q: &[f64], r: f64) -> f64 {
        self.d
            .iter()
            .zip(q)
            .map(|(di, qi)| {
                let e = (r + di) * (r + di) - qi;
                e * e
            })
            .sum()
    }

    /// Squared residual at `p` minimized over the unknown reference range, and that range.
    fn eval(&self, p: Point) -> (f64, f64) {
        let q: Vec<f64> = self.hyd.iter().map(|h| p.distance_sq(*h)).collect();
        let q0: f64 = q.iter().sum();
        let q1: f64 = q.iter().zip(self.d).map(|(a, b)| a * b).sum();
        // d/dr of the summed squares / 4
        let (a, b, c) = (
            3.0 * self.s1 / self.n,
            (3.0 * self.s2 - q0) / self.n,
            (self.s3 - q1) / self.n,
        );
        let mut best = (self.f(&q, 0.0), 0.0);
        for r in cubic_roots(a, b, c) {
            let r = polish(r, a, b, c);
            if r > 0.0 {
                let v = self.f(&q, r);
                if v < best.0 {
                    best = (v, r);
                }
            }
        }
        best
    }
}

/// Real roots of `r³ + a r² + b r + c`.
fn cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() - shift]
    } else if p == 0.0 {
        vec![-shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}

fn polish(mut r: f64, a: f64, b: f64, c: f64) -> f64 {
    for _ in 0..3 {
        let f = ((r + a) * r + b) * r + c;
        let df = (3.0 * r + 2.0 * a) * r + b;
        if df == 0.0 {
            break;
        }
        let next = r - f / df;
        if !next.is_finite() {
            break;
        }
        r = next;
    }
    r
}

/// Root of the summed squared range-equation residuals at `p`.
pub fn residual_at(p: Point, tdoa: &TdoaMeasurement, geometry: &ArrayGeometry) -> f64 {
    let d = tdoa.path_differences(geometry.speed_of_sound);
    Residual::new(geometry, &d).eval(p).0.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub position: Point,
    /// `position` relative to the reference hydrophone.
    pub offset_from_reference: Point,
    pub reference: String,
    pub residual: f64,
    pub grid_step: f64,
    pub region: Region,
    /// Source-to-hydrophone distances at `position`.
    pub radii: Vec<f64>,
    /// `v·Δtᵢ` for each hydrophone, meters.
    pub path_differences: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Candidate {
    f: f64,
    p: Point,
}

impl Candidate {
    fn better(self, other: Self) -> Self {
        let ord = self
            .f
            .total_cmp(&other.f)
            .then(self.p.x.total_cmp(&other.p.x))
            .then(self.p.y.total_cmp(&other.p.y));
        if ord == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

fn scan(res: &Residual<'_>, range: &SearchRange) -> Option<Candidate> {
    let (nx, ny) = range.counts();
    (0..nx)
        .into_par_iter()
        .map(|i| {
            (0..ny)
                .map(|j| {
                    let p = range.point(i, j);
                    Candidate { f: res.eval(p).0, p }
                })
                .reduce(Candidate::better)
        })
        .flatten()
        .reduce_with(Candidate::better)
}

/// Exhaustive grid minimization of the range-equation residual.
///
/// Each hydrophone contributes `(r_ref + v·Δtᵢ)² − ‖p − hᵢ‖²`, with the
/// reference range `r_ref ≥ 0` solved in closed form per grid point.
/// Inconsistent delays give a positive residual rather than an error.
pub fn solve_position(
    tdoa: &TdoaMeasurement,
    geometry: &ArrayGeometry,
    search: &SearchRange,
) -> Result<LocalizationResult> {
    geometry.validate()?;
    tdoa.validate(geometry)?;
    search.validate()?;
    let (nx, ny) = search.counts();
    if nx == 0 || ny == 0 {
        return Err(LocalizationError::InfeasibleGeometry);
    }
    if nx.saturating_mul(ny) > MAX_GRID_POINTS {
        return Err(LocalizationError::Search(format!(
            "{nx}×{ny} grid exceeds {MAX_GRID_POINTS} points"
        )));
    }
    let d = tdoa.path_differences(geometry.speed_of_sound);
    let res = Residual::new(geometry, &d);
    let mut best = scan(&res, search).ok_or(LocalizationError::InfeasibleGeometry)?;
    if !best.f.is_finite() {
        return Err(LocalizationError::InfeasibleGeometry);
    }

    let mut grid_step = search.step;
    if search.refine {
        let fine = search.step / 10.0;
        let center = best.p;
        let local = (-10..=10)
            .into_par_iter()
            .flat_map_iter(|i| (-10..=10).map(move |j| (i, j)))
            .map(|(i, j)| center.offset(f64::from(i) * fine, f64::from(j) * fine))
            .filter(|&p| search.contains(p))
            .map(|p| Candidate { f: res.eval(p).0, p })
            .reduce_with(Candidate::better);
        if let Some(c) = local {
            best = best.better(c);
        }
        grid_step = fine;
    }

    let href = geometry.position(tdoa.reference);
    Ok(LocalizationResult {
        position: best.p,
        offset_from_reference: Point::new(best.p.x - href.x, best.p.y - href.y),
        reference: geometry.hydrophones[tdoa.reference].id.clone(),
        residual: best.f.max(0.0).sqrt(),
        grid_step,
        region: classify_region(tdoa, geometry)?,
        radii: geometry.hydrophones.iter().map(|h| best.p.distance(h.position)).collect(),
        path_differences: d,
    })
}

/// Residual over the coarse grid, for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSurface {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major with one row per `ys` entry.
    pub values: Vec<f64>,
}

pub fn residual_surface(
    tdoa: &TdoaMeasurement,
    geometry: &ArrayGeometry,
    search: &SearchRange,
) -> Result<ResidualSurface> {
    geometry.validate()?;
    tdoa.validate(geometry)?;
    search.validate()?;
    let (nx, ny) = search.counts();
    if nx == 0 || ny == 0 {
        return Err(LocalizationError::InfeasibleGeometry);
    }
    let d = tdoa.path_differences(geometry.speed_of_sound);
    let res = Residual::new(geometry, &d);
    let values = (0..ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            let res = &res;
            (0..nx).map(move |i| res.eval(search.point(i, j)).0.sqrt())
        })
        .collect();
    Ok(ResidualSurface {
        xs: (0..nx).map(|i| search.point(i, 0).x).collect(),
        ys: (0..ny).map(|j| search.point(0, j).y).collect(),
        values,
    })
}

impl ResidualSurface {
    /// Log-scaled heat map, y increasing upward.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let logv: Vec<f64> = self.values.iter().map(|v| (v + 1e-9).ln()).collect();
        crate::dsp::write_heatmap_png(path, &logv, self.ys.len(), self.xs.len())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::forward_delays;
    use proptest::prelude::*;

    fn st2() -> TdoaMeasurement {
        TdoaMeasurement::new(1, vec![0.032, 0.0, 0.036])
    }

    #[test]
    fn cubic_roots_match_known_polynomial() {
        // (r-1)(r-2)(r+3) = r³ - 7r + 6
        let mut r = cubic_roots(0.0, -7.0, 6.0);
        r.sort_by(f64::total_cmp);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let one = cubic_roots(0.0, 1.0, 1.0);
        assert_eq!(one.len(), 1);
        assert!((one[0].powi(3) + one[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_delays_at_ten_twenty_are_recovered() {
        let g = ArrayGeometry::default();
        let src = Point::new(10.0, 20.0);
        let t = forward_delays(src, &g);
        let range = SearchRange {
            x_min: -30.0,
            x_max: 30.0,
            y_min: 0.0,
            y_max: 30.0,
            step: 0.1,
            refine: true,
        };
        let r = solve_position(&t, &g, &range).unwrap();
        assert!(r.position.distance(src) <= 0.1, "{:?}", r.position);
        assert!(r.residual < 1e-6, "{}", r.residual);
    }

    #[test]
    fn st2_region_and_distances() {
        let g = ArrayGeometry::default();
        let t = st2();
        let d = t.path_differences(g.speed_of_sound);
        assert!((d[0] - 45.76).abs() < 1e-9 && (d[2] - 51.48).abs() < 1e-9);
        let region = classify_region(&t, &g).unwrap();
        assert_eq!(region.to_string(), "between H1 and H2, closer to H2");
    }

    #[test]
    fn st1_region_is_h1_vicinity() {
        let t = TdoaMeasurement::new(0, vec![0.0, 0.035, 0.070]);
        let r = classify_region(&t, &ArrayGeometry::default()).unwrap();
        assert_eq!(r, Region::Vicinity { hydrophone: "H1".into() });
    }

    #[test]
    fn degenerate_regions() {
        let g = ArrayGeometry::default();
        let zero = TdoaMeasurement::new(1, vec![0.0; 3]);
        assert_eq!(classify_region(&zero, &g).unwrap(), Region::Equidistant);
        let sym = TdoaMeasurement::new(1, vec![0.03, 0.0, 0.03]);
        assert_eq!(classify_region(&sym, &g).unwrap(), Region::Symmetric { about: "H2".into() });
    }

    #[test]
    fn empty_range_is_infeasible() {
        let mut s = SearchRange::around(Point::new(0.0, 0.0), 10.0);
        s.x_max = -20.0;
        let e = solve_position(&st2(), &ArrayGeometry::default(), &s).unwrap_err();
        assert!(matches!(e, LocalizationError::InfeasibleGeometry));
        assert!(solve_position(&st2(), &ArrayGeometry::default(), &s.with_step(0.0)).is_err());
    }

    #[test]
    fn returned_residual_is_the_grid_minimum() {
        let g = ArrayGeometry::default();
        let t = st2();
        let s = SearchRange::for_measurement(&t, &g).with_step(0.5).with_refine(false);
        let r = solve_position(&t, &g, &s).unwrap();
        let min = s
            .points()
            .into_iter()
            .map(|p| residual_at(p, &t, &g))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.residual, min);
        for p in s.points() {
            assert!(r.residual <= residual_at(p, &t, &g));
        }
    }

    #[test]
    fn surface_matches_pointwise_residual() {
        let g = ArrayGeometry::default();
        let t = st2();
        let s = SearchRange::for_measurement(&t, &g).with_step(2.5);
        let surf = residual_surface(&t, &g, &s).unwrap();
        assert_eq!((surf.xs.len(), surf.ys.len()), (9, 5));
        let p = Point::new(surf.xs[3], surf.ys[2]);
        assert_eq!(surf.values[2 * 9 + 3], residual_at(p, &t, &g));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn halving_step_never_increases_residual(
            d1 in 0.0..0.0349f64, d3 in 0.0..0.0349f64, k in 0u32..3
        ) {
            let g = ArrayGeometry::default();
            let t = TdoaMeasurement::new(1, vec![d1, 0.0, d3]);
            let step = 2.0 / f64::from(1 << k);
            let coarse = SearchRange::for_measurement(&t, &g).with_step(step).with_refine(false);
            let fine = coarse.clone().with_step(step / 2.0);
            let a = solve_position(&t, &g, &coarse).unwrap();
            let b = solve_position(&t, &g, &fine).unwrap();
            prop_assert!(b.residual <= a.residual);
        }

        #[test]
        fn residual_is_non_negative_and_result_in_range(
            d1 in 0.0..0.06f64, d3 in 0.0..0.06f64
        ) {
            let g = ArrayGeometry::default();
            let t = TdoaMeasurement::new(1, vec![d1, 0.0, d3]);
            let s = SearchRange::for_measurement(&t, &g).with_step(1.0);
            let r = solve_position(&t, &g, &s).unwrap();
            prop_assert!(r.residual >= 0.0);
            prop_assert!(s.contains(r.position));
        }
    }
}
