//! Synthetic maps and constant-gap paths for scenarios and tests.

use std::f64::consts::FRAC_PI_2;

use crate::grid::{GridIndex, GridMap, StaticCell, WorldPoint};
use crate::reference::{validate_path, ReferenceError, ReferencePath, Waypoint};

use super::config::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Straight { length: f64 },
    /// Signed turn angle; positive turns left.
    Arc { radius: f64, angle: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Straight { length } => length,
            Piece::Arc { radius, angle } => radius * angle.abs(),
        }
    }
}

/// Lines and circular arcs resampled at a constant chord length.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBuilder {
    start: Waypoint,
    pieces: Vec<Piece>,
}

impl PathBuilder {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            start: Waypoint::new(x, y, heading, 0.0),
            pieces: Vec::new(),
        }
    }

    pub fn straight(mut self, length: f64) -> Self {
        self.pieces.push(Piece::Straight { length });
        self
    }

    pub fn arc(mut self, radius: f64, angle: f64) -> Self {
        self.pieces.push(Piece::Arc { radius, angle });
        self
    }

    pub fn total_length(&self) -> f64 {
        self.pieces.iter().map(Piece::length).sum()
    }

    /// Pose and curvature at arc length `s`, clamped to the path.
    pub fn sample(&self, s: f64) -> Waypoint {
        let mut pose = self.start;
        let mut left = s.max(0.0);
        for piece in &self.pieces {
            let len = piece.length();
            let t = left.min(len);
            pose = advance(pose, piece, t);
            if left <= len {
                return pose;
            }
            left -= len;
        }
        Waypoint { kappa: 0.0, ..pose }
    }

    /// Waypoints `spacing` apart (Euclidean) from the start to the end.
    pub fn build(&self, spacing: f64) -> Result<ReferencePath, ReferenceError> {
        let total = self.total_length();
        let mut s = 0.0;
        let mut points = vec![self.sample(0.0)];
        loop {
            let here = points.last().expect("non-empty").position();
            let gap = |t: f64| self.sample(t).position().distance(here) - spacing;
            if gap(total) < 0.0 {
                break;
            }
            // chords are never longer than arcs, so the root is at or beyond s + spacing
            let (mut lo, mut hi) = (s, (s + spacing).min(total));
            while gap(hi) < 0.0 {
                lo = hi;
                hi = (hi + spacing).min(total);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            s = hi;
            points.push(self.sample(s));
        }
        validate_path(points)
    }
}

fn advance(pose: Waypoint, piece: &Piece, t: f64) -> Waypoint {
    match *piece {
        Piece::Straight { .. } => Waypoint::new(
            pose.x + t * pose.h.cos(),
            pose.y + t * pose.h.sin(),
            pose.h,
            0.0,
        ),
        Piece::Arc { radius, angle } => {
            let sign = angle.signum();
            let turn = sign * t / radius;
            // centre of the turning circle sits on the inner side
            let cx = pose.x - sign * radius * pose.h.sin();
            let cy = pose.y + sign * radius * pose.h.cos();
            let h = pose.h + turn;
            Waypoint::new(
                cx + sign * radius * h.sin(),
                cy - sign * radius * h.cos(),
                h,
                sign / radius,
            )
        }
    }
}

/// 100 x 70 cells of 0.5 m: a lower aisle with parking bays on both sides,
/// a 90 degree left corner hidden behind a stair core, and an upper aisle
/// with bays on its right.
pub fn garage_map() -> GridMap {
    use StaticCell::{Entrance, ParkedVehicle, Wall};
    let mut m = GridMap::new(100, 70, 0.5, WorldPoint::default()).expect("valid dimensions");
    m.fill(0..100, 0..1, Wall);
    m.fill(0..100, 69..70, Wall);
    m.fill(0..1, 0..70, Wall);
    m.fill(99..100, 0..70, Wall);

    // lower aisle y in [5.5, 11.5); south bays below, north bays up to y = 16.5
    for (k, col) in (4..94).step_by(6).enumerate() {
        if k % 3 != 1 {
            m.fill(col..col + 4, 2..10, ParkedVehicle);
        }
        if col + 4 <= 62 && k % 2 == 0 {
            m.fill(col..col + 4, 24..32, ParkedVehicle);
        }
    }
    // solid block west of the upper aisle, including the stair core
    m.fill(0..78, 33..69, Wall);
    m.fill(62..78, 23..33, Wall);
    m.set(GridIndex::new(70, 23), Entrance);
    // upper aisle x in [39, 45); bays east of it
    for (k, row) in (26..66).step_by(6).enumerate() {
        if k % 3 != 2 {
            m.fill(90..98, row..row + 4, ParkedVehicle);
        }
    }
    m.set(GridIndex::new(99, 50), Entrance);
    m
}

/// Path through the garage: east along the lower aisle, left turn, north
/// along the upper aisle.
pub fn garage_path(spacing: f64) -> ReferencePath {
    PathBuilder::new(3.0, 8.5, 0.0)
        .straight(35.0)
        .arc(4.0, FRAC_PI_2)
        .straight(17.5)
        .build(spacing)
        .expect("garage path is valid")
}

/// Scenario settings for the garage files written next to each other.
pub fn garage_config() -> ScenarioConfig {
    ScenarioConfig {
        tick_limit: 400,
        ..ScenarioConfig::new("garage.map", "garage.path")
    }
}

/// The garage scenario built in memory.
pub fn garage_scenario() -> Scenario {
    Scenario::new(garage_config(), garage_map(), garage_path(0.1)).expect("garage scenario is valid")
}

/// Straight open corridor of `length` meters with walls on both sides.
pub fn corridor_map(length: f64, width: f64, resolution: f64) -> GridMap {
    let cols = (length / resolution).round() as usize + 2;
    let rows = (width / resolution).round() as usize + 2;
    let mut m = GridMap::new(cols, rows, resolution, WorldPoint::new(-resolution, -resolution))
        .expect("valid dimensions");
    m.fill(0..cols, 0..1, StaticCell::Wall);
    m.fill(0..cols, rows - 1..rows, StaticCell::Wall);
    m.fill(0..1, 0..rows, StaticCell::Wall);
    m.fill(cols - 1..cols, 0..rows, StaticCell::Wall);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_endpoint() {
        let b = PathBuilder::new(0.0, 0.0, 0.0).arc(2.0, FRAC_PI_2);
        let end = b.sample(b.total_length());
        assert!((end.x - 2.0).abs() < 1e-12 && (end.y - 2.0).abs() < 1e-12);
        assert!((end.h - FRAC_PI_2).abs() < 1e-12);
        let right = PathBuilder::new(0.0, 0.0, 0.0).arc(2.0, -FRAC_PI_2);
        let end = right.sample(right.total_length());
        assert!((end.x - 2.0).abs() < 1e-12 && (end.y + 2.0).abs() < 1e-12);
        assert!((right.sample(1.0).kappa + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_gap() {
        let b = PathBuilder::new(1.0, 1.0, 0.3).straight(3.0).arc(3.0, 1.2).straight(2.0).arc(5.0, -0.7);
        let path = b.build(0.1).unwrap();
        assert!((path.spacing() - 0.1).abs() < 1e-12);
        let n = path.len() as f64;
        assert!(n * 0.1 <= b.total_length() + 0.1 && n * 0.1 >= b.total_length() - 0.2);
    }

    #[test]
    fn garage_path_stays_on_free_cells() {
        let map = garage_map();
        let path = garage_path(0.1);
        for w in path.waypoints() {
            let i = map.world_to_cell(w.position()).unwrap();
            assert!(!map.is_blocking_at(i), "{w:?}");
        }
    }
}
