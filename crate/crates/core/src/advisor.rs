//! Free-space probing of the drivable map.
//!
//! Rays are cast through the grid with the same Bresenham traversal used for
//! visibility and stop at the first cell that is not safe to drive on.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::VehicleState;
use crate::fov::BresenhamLine;
use crate::grid::{GridFrame, GridIndex, WorldPoint};
use crate::reachability::{CellClass, DrivableMap};

#[derive(Debug, Error, PartialEq)]
pub enum AdvisorError {
    #[error("advisor request has no directions")]
    NoDirections,
    #[error("buffer must be finite and non-negative, got {0}")]
    InvalidBuffer(f64),
}

/// One probed direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    /// Probe heading relative to the vehicle heading.
    pub heading: f64,
    pub point: WorldPoint,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundarySet {
    pub entries: Vec<Boundary>,
}

impl BoundarySet {
    /// Entry whose heading matches `heading` within 1e-9 rad.
    pub fn find(&self, heading: f64) -> Option<&Boundary> {
        self.entries
            .iter()
            .find(|b| (b.heading - heading).abs() <= 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorRequest {
    pub directions: Vec<f64>,
    pub buffer: f64,
}

impl AdvisorRequest {
    /// Front, left, rear and right.
    pub fn cardinal(buffer: f64) -> Self {
        Self {
            directions: vec![0.0, FRAC_PI_2, PI, -FRAC_PI_2],
            buffer,
        }
    }

    /// `count` evenly spaced directions starting at the front.
    pub fn uniform(count: usize, buffer: f64) -> Self {
        Self {
            directions: (0..count)
                .map(|i| 2.0 * PI * i as f64 / count as f64)
                .collect(),
            buffer,
        }
    }

    pub fn validate(&self) -> Result<(), AdvisorError> {
        if self.directions.is_empty() {
            return Err(AdvisorError::NoDirections);
        }
        if !(self.buffer.is_finite() && self.buffer >= 0.0) {
            return Err(AdvisorError::InvalidBuffer(self.buffer));
        }
        Ok(())
    }
}

/// Euclidean distance from `p` to the closed box of cell `i`.
pub fn distance_to_cell(frame: &GridFrame, p: WorldPoint, i: GridIndex) -> f64 {
    let (lo, hi) = frame.cell_bounds(i);
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    dx.hypot(dy)
}

/// Ray parameter at which `origin + t * dir` leaves the map extent.
fn exit_distance(frame: &GridFrame, origin: WorldPoint, dir: (f64, f64)) -> f64 {
    let (lo, hi) = frame.extent();
    let axis = |o: f64, d: f64, lo: f64, hi: f64| {
        if d > 1e-12 {
            (hi - o) / d
        } else if d < -1e-12 {
            (lo - o) / d
        } else {
            f64::INFINITY
        }
    };
    axis(origin.x, dir.0, lo.x, hi.x)
        .min(axis(origin.y, dir.1, lo.y, hi.y))
        .max(0.0)
}

/// Probe from an arbitrary point along a world-frame heading.
///
/// Returns the boundary point and the free distance. A start outside the
/// map or on a cell that is not safe yields distance 0.
pub fn probe_from(
    dmap: &DrivableMap,
    origin: WorldPoint,
    world_heading: f64,
    buffer: f64,
) -> (WorldPoint, f64) {
    let frame = dmap.frame();
    let Ok(start) = frame.world_to_cell(origin) else {
        return (origin, 0.0);
    };
    if dmap.get(start) != CellClass::SafeDrivable {
        return (origin, 0.0);
    }
    let dir = world_heading.sin_cos();
    let dir = (dir.1, dir.0);
    let reach = exit_distance(frame, origin, dir);
    let back = 1e-9 * frame.resolution;
    let exit_point = WorldPoint::new(
        origin.x + (reach - back).max(0.0) * dir.0,
        origin.y + (reach - back).max(0.0) * dir.1,
    );
    let (ec, er) = frame.world_to_cell_unchecked(exit_point);
    let end = (
        ec.clamp(0, frame.width as i64 - 1),
        er.clamp(0, frame.height as i64 - 1),
    );

    let mut free = reach;
    for (c, r) in BresenhamLine::new((start.col as i64, start.row as i64), end) {
        let cell = GridIndex::new(c as usize, r as usize);
        if dmap.get(cell) != CellClass::SafeDrivable {
            free = distance_to_cell(frame, origin, cell).min(reach);
            break;
        }
    }
    let distance = (free - buffer).max(0.0);
    let point = WorldPoint::new(origin.x + distance * dir.0, origin.y + distance * dir.1);
    (point, distance)
}

/// Probe along `pose.psi + heading` from the vehicle's CoG.
pub fn probe_direction(
    dmap: &DrivableMap,
    pose: &VehicleState,
    heading: f64,
    buffer: f64,
) -> (WorldPoint, f64) {
    probe_from(dmap, pose.position(), pose.psi + heading, buffer)
}

pub fn advise(
    dmap: &DrivableMap,
    pose: &VehicleState,
    req: &AdvisorRequest,
) -> Result<BoundarySet, AdvisorError> {
    req.validate()?;
    let entries = req
        .directions
        .iter()
        .map(|&heading| {
            let (point, distance) = probe_direction(dmap, pose, heading, req.buffer);
            Boundary {
                heading,
                point,
                distance,
            }
        })
        .collect();
    Ok(BoundarySet { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridMap, StaticCell};

    fn corridor() -> GridMap {
        // ten free cells between two walls, plus a wall column at each end
        let mut map = GridMap::new(12, 3, 0.5, WorldPoint::default()).unwrap();
        map.fill(0..12, 0..1, StaticCell::Wall);
        map.fill(0..12, 2..3, StaticCell::Wall);
        map.fill(0..1, 0..3, StaticCell::Wall);
        map.fill(11..12, 0..3, StaticCell::Wall);
        map
    }

    #[test]
    fn corridor_length() {
        let dmap = DrivableMap::from_static(&corridor());
        let pose = VehicleState::new(0.75, 0.75, 0.0, 0.0);
        let (point, d) = probe_direction(&dmap, &pose, 0.0, 0.0);
        // from the first free cell center to the far wall
        assert!((d - 4.75).abs() < 1e-12);
        assert!((5.0 - d).abs() <= 0.5);
        assert!((point.x - 5.5).abs() < 1e-12);
    }

    #[test]
    fn immediate_obstruction_and_buffer() {
        let dmap = DrivableMap::from_static(&corridor());
        let pose = VehicleState::new(5.25, 0.75, 0.0, 0.0);
        let (_, d) = probe_direction(&dmap, &pose, 0.0, 0.0);
        assert!(d <= 0.5);
        let (point, d) = probe_direction(&dmap, &pose, 0.0, 1.0);
        assert_eq!(d, 0.0);
        assert_eq!(point, pose.position());
    }

    #[test]
    fn unsafe_start_gives_zero() {
        let dmap = DrivableMap::from_static(&corridor());
        let pose = VehicleState::new(0.25, 0.25, 0.0, 0.0);
        let set = advise(&dmap, &pose, &AdvisorRequest::cardinal(0.0)).unwrap();
        assert!(set.entries.iter().all(|b| b.distance == 0.0));
    }

    #[test]
    fn open_space_reaches_edges() {
        let map = GridMap::new(20, 20, 0.5, WorldPoint::default()).unwrap();
        let dmap = DrivableMap::from_static(&map);
        let pose = VehicleState::new(5.0, 5.0, 0.0, 0.0);
        let set = advise(&dmap, &pose, &AdvisorRequest::cardinal(0.0)).unwrap();
        assert_eq!(set.entries.len(), 4);
        for b in &set.entries {
            assert!((b.distance - 5.0).abs() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn degree_sweep() {
        let map = GridMap::new(30, 30, 0.5, WorldPoint::default()).unwrap();
        let dmap = DrivableMap::from_static(&map);
        let pose = VehicleState::new(7.5, 7.5, 0.3, 0.0);
        let set = advise(&dmap, &pose, &AdvisorRequest::uniform(360, 0.0)).unwrap();
        assert_eq!(set.entries.len(), 360);
        assert!(set.entries.iter().all(|b| b.distance >= 7.5 - 1e-9));
    }

    #[test]
    fn asymmetric_scene() {
        let mut map = GridMap::new(20, 20, 0.5, WorldPoint::default()).unwrap();
        map.fill(0..20, 12..13, StaticCell::Wall);
        let dmap = DrivableMap::from_static(&map);
        let pose = VehicleState::new(5.0, 5.0, 0.0, 0.0);
        let set = advise(&dmap, &pose, &AdvisorRequest::cardinal(0.0)).unwrap();
        let left = set.find(FRAC_PI_2).unwrap().distance;
        let right = set.find(-FRAC_PI_2).unwrap().distance;
        assert!((left - 1.0).abs() < 1e-12);
        assert!(left < right);
    }

    #[test]
    fn rejects_bad_requests() {
        let dmap = DrivableMap::from_static(&corridor());
        let pose = VehicleState::new(0.75, 0.75, 0.0, 0.0);
        let empty = AdvisorRequest {
            directions: vec![],
            buffer: 0.0,
        };
        assert_eq!(advise(&dmap, &pose, &empty), Err(AdvisorError::NoDirections));
        assert!(advise(&dmap, &pose, &AdvisorRequest::cardinal(-1.0)).is_err());
    }
}
