//! Surround field of view from four virtual sensors via Bresenham ray casting.
//!
//! The line rasterizer is the symmetric variant: for an x-major line the row
//! at every column is `floor(y(col) + 1/2)` of the exact segment through the
//! two cell centers (and symmetrically for y-major lines), so exact ties go to
//! the larger minor coordinate. The cell set of `a -> b` therefore equals the
//! cell set of `b -> a`.

use thiserror::Error;

use crate::dynamics::{VehicleParams, VehicleState};
use crate::grid::{GridIndex, GridMap, WorldPoint};

#[derive(Debug, Error, PartialEq)]
pub enum FovError {
    #[error("sensor {sensor} at ({x:.3}, {y:.3}) lies outside the map")]
    SensorOutOfBounds { sensor: &'static str, x: f64, y: f64 },
}

/// Mount point of a virtual sensor in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMount {
    pub name: &'static str,
    /// Meters ahead of the CoG along the heading.
    pub longitudinal: f64,
    /// Meters to the left of the CoG.
    pub lateral: f64,
}

/// Front-center, rear-center, left and right b-pillar mounts.
pub fn sensor_mounts(params: &VehicleParams) -> [SensorMount; 4] {
    [
        SensorMount { name: "front", longitudinal: params.l_f, lateral: 0.0 },
        SensorMount { name: "rear", longitudinal: -params.l_r, lateral: 0.0 },
        SensorMount { name: "left", longitudinal: 0.0, lateral: params.width / 2.0 },
        SensorMount { name: "right", longitudinal: 0.0, lateral: -params.width / 2.0 },
    ]
}

/// World positions of the four sensors, in mount order (front, rear, left, right).
pub fn sensor_positions(state: &VehicleState, params: &VehicleParams) -> [WorldPoint; 4] {
    let (s, c) = state.psi.sin_cos();
    sensor_mounts(params).map(|m| {
        WorldPoint::new(
            state.x + c * m.longitudinal - s * m.lateral,
            state.y + s * m.longitudinal + c * m.lateral,
        )
    })
}

/// Iterator over the cells of a symmetric Bresenham line, endpoints included.
#[derive(Debug, Clone)]
pub struct BresenhamLine {
    major: i64,
    minor: i64,
    major_step: i64,
    remaining: i64,
    // minor offset = quotient of (2k*d_minor + len) / (2*len); `rem` keeps the remainder
    rem: i64,
    twice_minor: i64,
    twice_len: i64,
    x_major: bool,
}

impl BresenhamLine {
    pub fn new(from: (i64, i64), to: (i64, i64)) -> Self {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let x_major = dx.abs() >= dy.abs();
        let (major, minor, d_major, d_minor) = if x_major {
            (from.0, from.1, dx, dy)
        } else {
            (from.1, from.0, dy, dx)
        };
        let len = d_major.abs();
        Self {
            major,
            minor,
            major_step: d_major.signum(),
            remaining: len + 1,
            rem: len,
            twice_minor: 2 * d_minor,
            twice_len: 2 * len,
            x_major,
        }
    }
}

impl Iterator for BresenhamLine {
    type Item = (i64, i64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = if self.x_major {
            (self.major, self.minor)
        } else {
            (self.minor, self.major)
        };
        if self.remaining > 0 {
            self.major += self.major_step;
            self.rem += self.twice_minor;
            if self.rem >= self.twice_len {
                self.rem -= self.twice_len;
                self.minor += 1;
            } else if self.rem < 0 {
                self.rem += self.twice_len;
                self.minor -= 1;
            }
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

impl ExactSizeIterator for BresenhamLine {}

pub fn bresenham(from: GridIndex, to: GridIndex) -> impl Iterator<Item = GridIndex> {
    BresenhamLine::new(
        (from.col as i64, from.row as i64),
        (to.col as i64, to.row as i64),
    )
    .map(|(c, r)| GridIndex::new(c as usize, r as usize))
}

/// Cells from `from` toward `to`, truncated at and including the first blocking cell.
pub fn trace_ray(map: &GridMap, from: GridIndex, to: GridIndex) -> Vec<GridIndex> {
    let mut out = Vec::new();
    for cell in bresenham(from, to) {
        out.push(cell);
        if map.is_blocking_at(cell) {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Visible,
    Occluded,
}

/// Per-cell visibility over the same grid as the static map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FovMap {
    width: usize,
    height: usize,
    visible: Vec<bool>,
}

impl FovMap {
    pub fn all_occluded(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            visible: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, i: GridIndex) -> Visibility {
        if self.is_visible(i) {
            Visibility::Visible
        } else {
            Visibility::Occluded
        }
    }

    pub fn is_visible(&self, i: GridIndex) -> bool {
        self.visible[i.row * self.width + i.col]
    }

    pub fn is_visible_flat(&self, flat: usize) -> bool {
        self.visible[flat]
    }

    pub fn mark_visible(&mut self, i: GridIndex) {
        self.visible[i.row * self.width + i.col] = true;
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// `*` visible, `o` occluded, one text line per row.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.visible.len() + self.height);
        for row in self.visible.chunks(self.width) {
            out.extend(row.iter().map(|&v| if v { '*' } else { 'o' }));
            out.push('\n');
        }
        out
    }
}

/// Visibility from explicit sensor cells; every ray targets one perimeter cell.
pub fn compute_fov_from_cells(map: &GridMap, sensors: &[GridIndex]) -> FovMap {
    let mut fov = FovMap::all_occluded(map.width(), map.height());
    let targets = map.perimeter();
    let width = map.width() as i64;
    let cells = map.cells();
    for &sensor in sensors {
        let from = (sensor.col as i64, sensor.row as i64);
        for target in &targets {
            for (c, r) in BresenhamLine::new(from, (target.col as i64, target.row as i64)) {
                let flat = (r * width + c) as usize;
                fov.visible[flat] = true;
                if cells[flat].is_blocking() {
                    break;
                }
            }
        }
    }
    fov
}

/// Field of view of the vehicle's four sensors at `state`.
pub fn compute_fov(
    map: &GridMap,
    state: &VehicleState,
    params: &VehicleParams,
) -> Result<FovMap, FovError> {
    let positions = sensor_positions(state, params);
    let mounts = sensor_mounts(params);
    let mut cells = Vec::with_capacity(4);
    for (p, m) in positions.iter().zip(mounts.iter()) {
        let cell = map.world_to_cell(*p).map_err(|_| FovError::SensorOutOfBounds {
            sensor: m.name,
            x: p.x,
            y: p.y,
        })?;
        cells.push(cell);
    }
    Ok(compute_fov_from_cells(map, &cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StaticCell;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn open(w: usize, h: usize) -> GridMap {
        GridMap::new(w, h, 1.0, WorldPoint::default()).unwrap()
    }

    #[test]
    fn sensor_mount_positions() {
        let p = VehicleParams::default();
        let s = sensor_positions(&VehicleState::default(), &p);
        assert_abs_diff_eq!(s[0].x, 1.82);
        assert_abs_diff_eq!(s[0].y, 0.0);
        assert_abs_diff_eq!(s[1].x, -1.0);
        assert_abs_diff_eq!(s[2].x, 0.0);
        assert_abs_diff_eq!(s[2].y, 0.9);
        assert_abs_diff_eq!(s[3].y, -0.9);

        let turned = sensor_positions(&VehicleState::new(0.0, 0.0, FRAC_PI_2, 0.0), &p);
        assert_abs_diff_eq!(turned[0].x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(turned[0].y, 1.82, epsilon = 1e-12);
    }

    #[test]
    fn axis_aligned_ray() {
        let map = open(5, 1);
        let ray = trace_ray(&map, GridIndex::new(0, 0), GridIndex::new(3, 0));
        assert_eq!(
            ray,
            vec![
                GridIndex::new(0, 0),
                GridIndex::new(1, 0),
                GridIndex::new(2, 0),
                GridIndex::new(3, 0)
            ]
        );
    }

    #[test]
    fn ray_stops_at_occluder() {
        let mut map = open(5, 1);
        map.set(GridIndex::new(2, 0), StaticCell::Wall);
        let ray = trace_ray(&map, GridIndex::new(0, 0), GridIndex::new(3, 0));
        assert_eq!(ray, vec![GridIndex::new(0, 0), GridIndex::new(1, 0), GridIndex::new(2, 0)]);
    }

    #[test]
    fn diagonal_and_degenerate_lines() {
        let diag: Vec<_> = BresenhamLine::new((0, 0), (2, 2)).collect();
        assert_eq!(diag, vec![(0, 0), (1, 1), (2, 2)]);
        let single: Vec<_> = BresenhamLine::new((4, 7), (4, 7)).collect();
        assert_eq!(single, vec![(4, 7)]);
        // exact tie at column 1 (y = 0.5) resolves upward in both directions
        let fwd: Vec<_> = BresenhamLine::new((0, 0), (2, 1)).collect();
        let mut back: Vec<_> = BresenhamLine::new((2, 1), (0, 0)).collect();
        back.reverse();
        assert_eq!(fwd, vec![(0, 0), (1, 1), (2, 1)]);
        assert_eq!(fwd, back);
    }

    #[test]
    fn empty_map_is_fully_visible() {
        let map = open(31, 17);
        for sensor in [GridIndex::new(15, 8), GridIndex::new(0, 0), GridIndex::new(30, 3)] {
            let fov = compute_fov_from_cells(&map, &[sensor]);
            assert_eq!(fov.visible_count(), map.len(), "sensor {sensor:?}");
        }
    }

    #[test]
    fn wall_casts_a_shadow() {
        let mut map = open(20, 11);
        for row in 3..8 {
            map.set(GridIndex::new(12, row), StaticCell::Wall);
        }
        let fov = compute_fov_from_cells(&map, &[GridIndex::new(5, 5)]);
        assert!(fov.is_visible(GridIndex::new(12, 5)));
        for col in 13..20 {
            assert!(!fov.is_visible(GridIndex::new(col, 5)), "col {col}");
        }
        assert!(fov.is_visible(GridIndex::new(19, 10)));
        assert!(fov.is_visible(GridIndex::new(5, 0)));
    }

    #[test]
    fn sensor_outside_map_is_an_error() {
        let map = open(10, 10);
        let err = compute_fov(&map, &VehicleState::new(0.5, 5.0, 0.0, 0.0), &VehicleParams::default());
        assert!(matches!(err, Err(FovError::SensorOutOfBounds { sensor: "rear", .. })));
    }

    #[test]
    fn vehicle_cell_is_visible() {
        let mut map = open(40, 40);
        map.fill(10..30, 25..27, StaticCell::Wall);
        let state = VehicleState::new(20.3, 20.6, 0.3, 0.0);
        let fov = compute_fov(&map, &state, &VehicleParams::default()).unwrap();
        assert!(fov.is_visible(map.world_to_cell(state.position()).unwrap()));
        assert!(!fov.is_visible(GridIndex::new(20, 35)));
    }

    #[test]
    fn ascii_dump() {
        let mut map = open(3, 1);
        map.set(GridIndex::new(1, 0), StaticCell::Wall);
        let fov = compute_fov_from_cells(&map, &[GridIndex::new(0, 0)]);
        assert_eq!(fov.to_ascii(), "**o\n");
    }
}
