//! Oriented vehicle rectangle: cell coverage and conflict overlap.

use crate::dynamics::{VehicleParams, VehicleState};
use crate::grid::{GridFrame, GridIndex, WorldPoint};
use crate::reachability::{CellClass, DrivableMap};

/// Corners of the body rectangle at `state`, counter-clockwise from rear right.
pub fn corners(state: &VehicleState, params: &VehicleParams) -> [WorldPoint; 4] {
    let (s, c) = state.psi.sin_cos();
    let half = params.width / 2.0;
    let local = [
        (-params.rear_extent(), -half),
        (params.front_extent(), -half),
        (params.front_extent(), half),
        (-params.rear_extent(), half),
    ];
    local.map(|(u, w)| WorldPoint::new(state.x + c * u - s * w, state.y + s * u + c * w))
}

fn project(points: &[WorldPoint], axis: (f64, f64)) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.x * axis.0 + p.y * axis.1;
        (lo.min(d), hi.max(d))
    })
}

/// Separating-axis test between a convex quad and an axis-aligned box;
/// touching along an edge does not count.
fn overlaps_box(quad: &[WorldPoint; 4], lo: WorldPoint, hi: WorldPoint, axes: &[(f64, f64); 4]) -> bool {
    const EPS: f64 = 1e-12;
    let cell = [lo, WorldPoint::new(hi.x, lo.y), hi, WorldPoint::new(lo.x, hi.y)];
    axes.iter().all(|&axis| {
        let (a0, a1) = project(quad, axis);
        let (b0, b1) = project(&cell, axis);
        a1.min(b1) - a0.max(b0) > EPS
    })
}

/// Cells overlapped with positive area by the body rectangle, plus whether
/// any part of it lies outside the grid.
pub fn covered_cells(
    state: &VehicleState,
    params: &VehicleParams,
    frame: &GridFrame,
) -> (Vec<GridIndex>, bool) {
    let quad = corners(state, params);
    let (s, c) = state.psi.sin_cos();
    let axes = [(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)];
    let (min, max) = frame.extent();
    let (x0, x1) = project(&quad, (1.0, 0.0));
    let (y0, y1) = project(&quad, (0.0, 1.0));
    let outside = x0 < min.x || y0 < min.y || x1 > max.x || y1 > max.y;

    let res = frame.resolution;
    let c0 = ((x0 - frame.origin.x) / res).floor().max(0.0) as i64;
    let c1 = (((x1 - frame.origin.x) / res).floor() as i64).min(frame.width as i64 - 1);
    let r0 = ((y0 - frame.origin.y) / res).floor().max(0.0) as i64;
    let r1 = (((y1 - frame.origin.y) / res).floor() as i64).min(frame.height as i64 - 1);
    let mut out = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            let i = GridIndex::new(col as usize, row as usize);
            let (lo, hi) = frame.cell_bounds(i);
            if overlaps_box(&quad, lo, hi, &axes) {
                out.push(i);
            }
        }
    }
    (out, outside)
}

/// Fraction of the body area on PotentialPedestrian cells or off the map,
/// sampled on a lattice of pitch `resolution / 4`.
pub fn overlap_fraction(state: &VehicleState, params: &VehicleParams, dmap: &DrivableMap) -> f64 {
    let pitch = dmap.resolution() / 4.0;
    let length = params.length();
    let nu = (length / pitch).ceil().max(1.0) as usize;
    let nw = (params.width / pitch).ceil().max(1.0) as usize;
    let du = length / nu as f64;
    let dw = params.width / nw as f64;
    let (s, c) = state.psi.sin_cos();
    let mut hits = 0usize;
    for i in 0..nu {
        let u = -params.rear_extent() + (i as f64 + 0.5) * du;
        for j in 0..nw {
            let w = -params.width / 2.0 + (j as f64 + 0.5) * dw;
            let p = WorldPoint::new(state.x + c * u - s * w, state.y + s * u + c * w);
            match dmap.class_at(p) {
                None | Some(CellClass::PotentialPedestrian) => hits += 1,
                _ => {}
            }
        }
    }
    hits as f64 / (nu * nw) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMap;

    fn open(w: usize, h: usize) -> DrivableMap {
        DrivableMap::from_static(&GridMap::new(w, h, 0.5, WorldPoint::default()).unwrap())
    }

    #[test]
    fn corners_axis_aligned() {
        let p = VehicleParams::default();
        let q = corners(&VehicleState::new(10.0, 5.0, 0.0, 0.0), &p);
        assert!((q[0].x - 8.2).abs() < 1e-12 && (q[0].y - 4.1).abs() < 1e-12);
        assert!((q[2].x - 12.72).abs() < 1e-12 && (q[2].y - 5.9).abs() < 1e-12);
    }

    #[test]
    fn covered_cells_axis_aligned() {
        let p = VehicleParams {
            l_f: 1.0,
            l_r: 1.0,
            width: 1.0,
            front_overhang: 0.0,
            rear_overhang: 0.0,
            ..VehicleParams::default()
        };
        let dmap = open(20, 20);
        // 2 x 1 m rectangle aligned with cell edges covers 4 x 2 cells
        let (cells, outside) = covered_cells(&VehicleState::new(5.0, 5.0, 0.0, 0.0), &p, dmap.frame());
        assert!(!outside);
        assert_eq!(cells.len(), 8);
        let (cells, _) = covered_cells(&VehicleState::new(5.1, 5.1, 0.0, 0.0), &p, dmap.frame());
        assert_eq!(cells.len(), 15);
        let (_, outside) = covered_cells(&VehicleState::new(0.5, 5.0, 0.0, 0.0), &p, dmap.frame());
        assert!(outside);
    }

    #[test]
    fn rotated_cover_contains_corners() {
        let p = VehicleParams::default();
        let dmap = open(40, 40);
        let state = VehicleState::new(10.0, 10.0, 0.7, 0.0);
        let (cells, _) = covered_cells(&state, &p, dmap.frame());
        for q in corners(&state, &p) {
            // nudge inwards so the corner is not on a cell edge
            let inner = WorldPoint::new(q.x + (10.0 - q.x) * 1e-6, q.y + (10.0 - q.y) * 1e-6);
            let cell = dmap.frame().world_to_cell(inner).unwrap();
            assert!(cells.contains(&cell));
        }
    }

    #[test]
    fn overlap_extremes() {
        let p = VehicleParams::default();
        let state = VehicleState::new(10.0, 10.0, 0.3, 0.0);
        let mut dmap = open(40, 40);
        assert_eq!(overlap_fraction(&state, &p, &dmap), 0.0);
        for flat in 0..dmap.frame().len() {
            let i = dmap.frame().unflat(flat);
            dmap.mark_pedestrian(i);
        }
        assert_eq!(overlap_fraction(&state, &p, &dmap), 1.0);
    }

    #[test]
    fn overlap_half_plane() {
        let p = VehicleParams::default();
        let mut dmap = open(40, 40);
        for row in 0..40 {
            for col in 20..40 {
                dmap.mark_pedestrian(GridIndex::new(col, row));
            }
        }
        // rectangle centre on the x = 10 boundary
        let centre_offset = (p.front_extent() - p.rear_extent()) / 2.0;
        let state = VehicleState::new(10.0 - centre_offset, 10.2, 0.0, 0.0);
        let f = overlap_fraction(&state, &p, &dmap);
        assert!((f - 0.5).abs() <= 0.02, "{f}");
        let off_map = VehicleState::new(0.5, 10.2, 0.0, 0.0);
        assert!(overlap_fraction(&off_map, &p, &open(40, 40)) > 0.0);
    }
}
