//! Waypoint paths and per-stage reference states for the horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WorldPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("path needs at least 2 waypoints, got {0}")]
    TooShort(usize),
    #[error("waypoint {index} is not finite")]
    NonFinite { index: usize },
    #[error("gap before waypoint {index} is {found} m, expected {expected} m")]
    UnevenSpacing {
        index: usize,
        expected: f64,
        found: f64,
    },
    #[error("consecutive waypoints coincide at index {index}")]
    ZeroSpacing { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Path heading in radians.
    pub h: f64,
    /// Signed curvature in 1/m.
    pub kappa: f64,
}

impl Waypoint {
    pub const fn new(x: f64, y: f64, h: f64, kappa: f64) -> Self {
        Self { x, y, h, kappa }
    }

    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }
}

/// A validated path with constant spacing between consecutive waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    waypoints: Vec<Waypoint>,
    spacing: f64,
}

impl ReferencePath {
    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn last(&self) -> &Waypoint {
        self.waypoints.last().expect("validated path is non-empty")
    }

    /// One `x y h kappa` line per waypoint.
    pub fn to_text(&self) -> String {
        self.waypoints
            .iter()
            .map(|w| format!("{} {} {} {}\n", w.x, w.y, w.h, w.kappa))
            .collect()
    }
}

/// Accept `waypoints` iff all consecutive gaps agree within `1e-6 * spacing`.
pub fn validate_path(waypoints: Vec<Waypoint>) -> Result<ReferencePath, ReferenceError> {
    if waypoints.len() < 2 {
        return Err(ReferenceError::TooShort(waypoints.len()));
    }
    for (index, w) in waypoints.iter().enumerate() {
        if !(w.x.is_finite() && w.y.is_finite() && w.h.is_finite() && w.kappa.is_finite()) {
            return Err(ReferenceError::NonFinite { index });
        }
    }
    let spacing = waypoints[0].position().distance(waypoints[1].position());
    if spacing <= 0.0 {
        return Err(ReferenceError::ZeroSpacing { index: 1 });
    }
    for index in 2..waypoints.len() {
        let gap = waypoints[index - 1]
            .position()
            .distance(waypoints[index].position());
        if (gap - spacing).abs() > 1e-6 * spacing {
            return Err(ReferenceError::UnevenSpacing {
                index,
                expected: spacing,
                found: gap,
            });
        }
    }
    Ok(ReferencePath { waypoints, spacing })
}

/// Parse `x y h kappa` lines; blank lines and `#` comments are skipped.
pub fn parse_path(text: &str) -> Result<ReferencePath, ReferenceError> {
    let mut waypoints = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| ReferenceError::Parse {
                line: k + 1,
                message: format!("{e}"),
            })?;
        if values.len() != 4 {
            return Err(ReferenceError::Parse {
                line: k + 1,
                message: format!("expected 4 values, found {}", values.len()),
            });
        }
        waypoints.push(Waypoint::new(values[0], values[1], values[2], values[3]));
    }
    validate_path(waypoints)
}

/// Curvature-limited speed, capped by `v_max`.
pub fn reference_speed(kappa: f64, a_lat: f64, v_max: f64) -> f64 {
    if kappa == 0.0 {
        return v_max;
    }
    v_max.min((a_lat / kappa.abs()).sqrt())
}

/// Index of the waypoint closest to `p`; ties go to the lowest index.
pub fn nearest_index(path: &ReferencePath, p: WorldPoint) -> usize {
    nearest_index_from(path, p, 0)
}

/// As [`nearest_index`] but only considering indices `>= from`.
pub fn nearest_index_from(path: &ReferencePath, p: WorldPoint, from: usize) -> usize {
    let from = from.min(path.len() - 1);
    let mut best = from;
    let mut best_d = f64::INFINITY;
    for (i, w) in path.waypoints.iter().enumerate().skip(from) {
        let d = (w.x - p.x).powi(2) + (w.y - p.y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceState {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub v: f64,
    /// Waypoint index the state was taken from.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub a_lat: f64,
    pub v_max: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            a_lat: 1.3,
            v_max: 5.56,
        }
    }
}

/// Reference speed at waypoint `i`; zero at the final waypoint.
pub fn waypoint_speed(path: &ReferencePath, i: usize, profile: &SpeedProfile) -> f64 {
    if i + 1 >= path.len() {
        0.0
    } else {
        reference_speed(path.waypoints[i].kappa, profile.a_lat, profile.v_max)
    }
}

/// `stages + 1` references starting at waypoint `start`, each stage
/// advancing by `floor(v_p * ts / spacing)` waypoints.
pub fn horizon_reference(
    path: &ReferencePath,
    start: usize,
    ts: f64,
    stages: usize,
    profile: &SpeedProfile,
) -> Vec<ReferenceState> {
    let last = path.len() - 1;
    let mut j = start.min(last);
    let mut out = Vec::with_capacity(stages + 1);
    for k in 0..=stages {
        let w = path.waypoints[j];
        let v = waypoint_speed(path, j, profile);
        out.push(ReferenceState {
            x: w.x,
            y: w.y,
            h: w.h,
            v,
            index: j,
        });
        if k < stages {
            // the tolerance absorbs quotients like 0.3 / 0.1 = 2.9999999999999996
            let advance = (v * ts / path.spacing + 1e-9).floor() as usize;
            j = (j + advance).min(last);
        }
    }
    out
}

/// Shift all headings by the multiple of 2π that brings the first one
/// closest to `psi`.
pub fn align_headings(refs: &mut [ReferenceState], psi: f64) {
    let Some(first) = refs.first() else {
        return;
    };
    let turns = ((psi - first.h) / std::f64::consts::TAU).round();
    let shift = turns * std::f64::consts::TAU;
    for r in refs {
        r.h += shift;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, spacing: f64) -> ReferencePath {
        validate_path(
            (0..n)
                .map(|i| Waypoint::new(i as f64 * spacing, 0.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let p = straight(3, 0.5);
        assert_eq!(p.spacing(), 0.5);
        let bad = vec![
            Waypoint::new(0.0, 0.0, 0.0, 0.0),
            Waypoint::new(0.5, 0.0, 0.0, 0.0),
            Waypoint::new(1.2, 0.0, 0.0, 0.0),
        ];
        assert!(matches!(
            validate_path(bad),
            Err(ReferenceError::UnevenSpacing { index: 2, .. })
        ));
        assert_eq!(
            validate_path(vec![Waypoint::new(0.0, 0.0, 0.0, 0.0)]),
            Err(ReferenceError::TooShort(1))
        );
    }

    #[test]
    fn constant_chord_arc() {
        let r: f64 = 3.0;
        let chord = 0.25;
        let dtheta = 2.0 * (chord / (2.0 * r)).asin();
        let pts = (0..40)
            .map(|i| {
                let t = i as f64 * dtheta;
                Waypoint::new(r * t.cos(), r * t.sin(), t + std::f64::consts::FRAC_PI_2, 1.0 / r)
            })
            .collect();
        let p = validate_path(pts).unwrap();
        assert!((p.spacing() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn speeds() {
        assert_eq!(reference_speed(0.0, 1.3, 5.56), 5.56);
        assert!((reference_speed(0.13, 1.3, 5.56) - 10f64.sqrt()).abs() < 1e-12);
        assert!((reference_speed(-1.3, 1.3, 5.56) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_ties_to_lowest() {
        let p = straight(6, 1.0);
        assert_eq!(nearest_index(&p, WorldPoint::new(3.0, 0.0)), 3);
        assert_eq!(nearest_index(&p, WorldPoint::new(2.5, 1.0)), 2);
        assert_eq!(nearest_index_from(&p, WorldPoint::new(0.0, 0.0), 4), 4);
    }

    #[test]
    fn stalling_floor() {
        let p = straight(20, 0.5);
        let profile = SpeedProfile {
            a_lat: 1.3,
            v_max: 2.5,
        };
        let refs = horizon_reference(&p, 3, 0.1, 5, &profile);
        assert_eq!(refs.len(), 6);
        assert!(refs.iter().all(|r| r.index == 3));
    }

    #[test]
    fn advancing_two_per_stage() {
        let p = straight(50, 0.25);
        let profile = SpeedProfile {
            a_lat: 1.3,
            v_max: 5.0,
        };
        let refs = horizon_reference(&p, 0, 0.1, 5, &profile);
        let idx: Vec<usize> = refs.iter().map(|r| r.index).collect();
        assert_eq!(idx, vec![0, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn clamps_at_end() {
        let p = straight(10, 0.1);
        let refs = horizon_reference(&p, 9, 0.1, 4, &SpeedProfile::default());
        assert!(refs.iter().all(|r| r.index == 9 && r.v == 0.0));
        let refs = horizon_reference(&p, 6, 0.1, 4, &SpeedProfile::default());
        assert_eq!(refs.last().unwrap().index, 9);
        assert_eq!(refs.last().unwrap().v, 0.0);
    }

    #[test]
    fn heading_alignment() {
        let mut refs = vec![ReferenceState {
            x: 0.0,
            y: 0.0,
            h: 3.0,
            v: 1.0,
            index: 0,
        }];
        align_headings(&mut refs, -3.0);
        assert!((refs[0].h - (3.0 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let p = straight(4, 0.5);
        let back = parse_path(&format!("# comment\n{}\n", p.to_text())).unwrap();
        assert_eq!(back, p);
        assert!(matches!(
            parse_path("0 0 0\n1 0 0 0\n"),
            Err(ReferenceError::Parse { line: 1, .. })
        ));
    }
}
