//! Conservative extrapolation of where pedestrians could be.
//!
//! Occluded free cells, entrances and observed pedestrians seed the
//! [`DrivableMap`]. Each seed group then grows for
//! `ceil(speed * horizon / resolution)` generations of a cellular automaton
//! in which a non-blocked cell becomes potentially occupied as soon as any of
//! its eight neighbours is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fov::FovMap;
use crate::grid::{GridFrame, GridIndex, GridMap, StaticCell, WorldPoint};

#[derive(Debug, Error, PartialEq)]
pub enum ReachabilityError {
    #[error("field of view is {fov_w}x{fov_h} but the map is {map_w}x{map_h}")]
    DimensionMismatch {
        map_w: usize,
        map_h: usize,
        fov_w: usize,
        fov_h: usize,
    },
    #[error("invalid extrapolation request: {0}")]
    InvalidRequest(&'static str),
}

/// A detected pedestrian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianTrack {
    pub position: WorldPoint,
    /// Side length of the axis-aligned square footprint, meters.
    pub footprint: f64,
    /// Speed measured by tracking, when available.
    pub observed_speed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    SafeDrivable,
    PotentialPedestrian,
    StaticBlocked,
}

impl CellClass {
    pub fn to_char(self) -> char {
        match self {
            CellClass::SafeDrivable => '.',
            CellClass::PotentialPedestrian => 'P',
            CellClass::StaticBlocked => '#',
        }
    }
}

/// Dynamic per-cell classification on top of the static grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivableMap {
    frame: GridFrame,
    classes: Vec<CellClass>,
}

impl DrivableMap {
    /// Blocked where `map` blocks, safe everywhere else.
    pub fn from_static(map: &GridMap) -> Self {
        let classes = map
            .cells()
            .iter()
            .map(|c| {
                if c.is_blocking() {
                    CellClass::StaticBlocked
                } else {
                    CellClass::SafeDrivable
                }
            })
            .collect();
        Self {
            frame: *map.frame(),
            classes,
        }
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn width(&self) -> usize {
        self.frame.width
    }

    pub fn height(&self) -> usize {
        self.frame.height
    }

    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }

    pub fn classes(&self) -> &[CellClass] {
        &self.classes
    }

    pub fn get(&self, i: GridIndex) -> CellClass {
        self.classes[self.frame.flat(i)]
    }

    pub fn get_flat(&self, flat: usize) -> CellClass {
        self.classes[flat]
    }

    /// Class of the cell containing `p`; `None` outside the map.
    pub fn class_at(&self, p: WorldPoint) -> Option<CellClass> {
        self.frame.world_to_cell(p).ok().map(|i| self.get(i))
    }

    pub fn is_safe(&self, i: GridIndex) -> bool {
        self.get(i) == CellClass::SafeDrivable
    }

    /// Marks a cell as potentially occupied unless it is statically blocked.
    pub fn mark_pedestrian(&mut self, i: GridIndex) {
        let flat = self.frame.flat(i);
        if self.classes[flat] != CellClass::StaticBlocked {
            self.classes[flat] = CellClass::PotentialPedestrian;
        }
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Flat indices of all potentially occupied cells, ascending.
    pub fn pedestrian_cells(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == CellClass::PotentialPedestrian)
            .map(|(i, _)| i)
            .collect()
    }

    /// `.` safe, `P` potential pedestrian, `#` blocked.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.classes.len() + self.height());
        for row in self.classes.chunks(self.width()) {
            out.extend(row.iter().map(|c| c.to_char()));
            out.push('\n');
        }
        out
    }
}

/// Extrapolation parameters handed over by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRequest {
    /// Time horizon in seconds.
    pub horizon: f64,
    /// Maximum expected pedestrian speed.
    pub max_pedestrian_speed: f64,
    /// Current vehicle speed.
    pub vehicle_speed: f64,
}

impl ExtrapolationRequest {
    pub fn validate(&self) -> Result<(), ReachabilityError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ReachabilityError::InvalidRequest("horizon must be positive"));
        }
        if !(self.max_pedestrian_speed >= 0.0 && self.max_pedestrian_speed.is_finite()) {
            return Err(ReachabilityError::InvalidRequest(
                "maximum pedestrian speed must be non-negative",
            ));
        }
        if !(self.vehicle_speed >= 0.0 && self.vehicle_speed.is_finite()) {
            return Err(ReachabilityError::InvalidRequest(
                "vehicle speed must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Speed used to grow a seed: an observed track speed if there is one,
/// otherwise the pedestrian cap limited by the vehicle's own speed.
pub fn effective_speed(req: &ExtrapolationRequest, track: Option<&PedestrianTrack>) -> f64 {
    match track.and_then(|t| t.observed_speed) {
        Some(speed) => speed,
        None => req.max_pedestrian_speed.min(req.vehicle_speed),
    }
}

/// Number of automaton generations covering `speed * horizon` meters.
pub fn generations(speed: f64, horizon: f64, resolution: f64) -> usize {
    let cells = speed * horizon / resolution;
    // absorb representation noise such as 1.5 / 0.5 = 3.0000000000000004
    (cells - 1e-9).ceil().max(0.0) as usize
}

/// A seeded map plus the seed cells grouped by growth speed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededMap {
    pub map: DrivableMap,
    /// Occluded cells, entrances and tracks without a measured speed.
    pub untracked: Vec<usize>,
    /// Cells of each track with a measured speed, with that speed.
    pub tracked: Vec<(Vec<usize>, f64)>,
}

/// Cells whose interior overlaps the axis-aligned square of a track.
pub fn footprint_cells(frame: &GridFrame, track: &PedestrianTrack) -> Vec<GridIndex> {
    let half = track.footprint / 2.0;
    let res = frame.resolution;
    let lo_c = ((track.position.x - half - frame.origin.x) / res).floor() as i64;
    let hi_c = ((track.position.x + half - frame.origin.x) / res).ceil() as i64 - 1;
    let lo_r = ((track.position.y - half - frame.origin.y) / res).floor() as i64;
    let hi_r = ((track.position.y + half - frame.origin.y) / res).ceil() as i64 - 1;
    let mut out = Vec::new();
    for row in lo_r.max(0)..=hi_r.min(frame.height as i64 - 1) {
        for col in lo_c.max(0)..=hi_c.min(frame.width as i64 - 1) {
            out.push(GridIndex::new(col as usize, row as usize));
        }
    }
    out
}

/// Seed potential pedestrian positions from occlusion, entrances and tracks.
pub fn seed_dynamic_map(
    map: &GridMap,
    fov: &FovMap,
    tracks: &[PedestrianTrack],
) -> Result<SeededMap, ReachabilityError> {
    if fov.width() != map.width() || fov.height() != map.height() {
        return Err(ReachabilityError::DimensionMismatch {
            map_w: map.width(),
            map_h: map.height(),
            fov_w: fov.width(),
            fov_h: fov.height(),
        });
    }
    let mut dmap = DrivableMap::from_static(map);
    let mut untracked = Vec::new();
    for (flat, &cell) in map.cells().iter().enumerate() {
        let seed = match cell {
            StaticCell::Wall | StaticCell::ParkedVehicle => false,
            StaticCell::Entrance => true,
            StaticCell::Free => !fov.is_visible_flat(flat),
        };
        if seed {
            dmap.classes[flat] = CellClass::PotentialPedestrian;
            untracked.push(flat);
        }
    }

    let mut tracked = Vec::new();
    for track in tracks {
        let cells: Vec<usize> = footprint_cells(map.frame(), track)
            .into_iter()
            .filter(|&i| !map.is_blocking_at(i))
            .map(|i| map.flat(i))
            .collect();
        for &flat in &cells {
            dmap.classes[flat] = CellClass::PotentialPedestrian;
        }
        match track.observed_speed {
            Some(speed) => tracked.push((cells, speed)),
            None => untracked.extend(cells),
        }
    }
    untracked.sort_unstable();
    untracked.dedup();

    Ok(SeededMap {
        map: dmap,
        untracked,
        tracked,
    })
}

/// Row-major bit grid, one `u64` word per 64 columns.
#[derive(Debug, Clone, PartialEq)]
struct BitGrid {
    width: usize,
    height: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitGrid {
    fn new(width: usize, height: usize) -> Self {
        let words = width.div_ceil(64);
        Self {
            width,
            height,
            words,
            bits: vec![0; words * height],
        }
    }

    fn set(&mut self, flat: usize) {
        let (row, col) = (flat / self.width, flat % self.width);
        self.bits[row * self.words + col / 64] |= 1 << (col % 64);
    }

    fn get(&self, flat: usize) -> bool {
        let (row, col) = (flat / self.width, flat % self.width);
        self.bits[row * self.words + col / 64] & (1 << (col % 64)) != 0
    }

    fn row(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words..(row + 1) * self.words]
    }
}

/// One synchronous automaton update: every passable cell with an occupied
/// Moore neighbour (or itself occupied) becomes occupied. Returns whether
/// anything changed.
fn generation(state: &mut BitGrid, passable: &BitGrid, horizontal: &mut Vec<u64>) -> bool {
    let words = state.words;
    horizontal.clear();
    horizontal.resize(state.bits.len(), 0);
    for row in 0..state.height {
        let src = state.row(row);
        let dst = &mut horizontal[row * words..(row + 1) * words];
        for w in 0..words {
            let x = src[w];
            let carry_in_left = if w > 0 { src[w - 1] >> 63 } else { 0 };
            let carry_in_right = if w + 1 < words { src[w + 1] << 63 } else { 0 };
            dst[w] = x | (x << 1) | carry_in_left | (x >> 1) | carry_in_right;
        }
    }
    let mut changed = false;
    for row in 0..state.height {
        for w in 0..words {
            let mut acc = horizontal[row * words + w];
            if row > 0 {
                acc |= horizontal[(row - 1) * words + w];
            }
            if row + 1 < state.height {
                acc |= horizontal[(row + 1) * words + w];
            }
            let idx = row * words + w;
            let next = acc & passable.bits[idx];
            if next != state.bits[idx] {
                changed = true;
                state.bits[idx] = next;
            }
        }
    }
    changed
}

/// Grow `seeds` for `generations` automaton steps through non-blocked cells
/// and return the flat indices reached (seeds included), ascending.
pub fn dilate(dmap: &DrivableMap, seeds: &[usize], generations: usize) -> Vec<usize> {
    let (w, h) = (dmap.width(), dmap.height());
    let mut passable = BitGrid::new(w, h);
    for (flat, &c) in dmap.classes.iter().enumerate() {
        if c != CellClass::StaticBlocked {
            passable.set(flat);
        }
    }
    let mut state = BitGrid::new(w, h);
    for &flat in seeds {
        if passable.get(flat) {
            state.set(flat);
        }
    }
    let mut scratch = Vec::new();
    for _ in 0..generations {
        if !generation(&mut state, &passable, &mut scratch) {
            break;
        }
    }
    (0..w * h).filter(|&flat| state.get(flat)).collect()
}

/// Grow every seed group by its own speed and merge the results.
pub fn extrapolate(
    seeded: &SeededMap,
    req: &ExtrapolationRequest,
) -> Result<DrivableMap, ReachabilityError> {
    req.validate()?;
    let res = seeded.map.resolution();
    let mut out = seeded.map.clone();

    let mut groups: Vec<(&[usize], f64)> = Vec::with_capacity(1 + seeded.tracked.len());
    groups.push((&seeded.untracked, effective_speed(req, None)));
    for (cells, speed) in &seeded.tracked {
        groups.push((cells, *speed));
    }
    for (cells, speed) in groups {
        if cells.is_empty() {
            continue;
        }
        let g = generations(speed, req.horizon, res);
        if g == 0 {
            continue;
        }
        for flat in dilate(&seeded.map, cells, g) {
            out.classes[flat] = CellClass::PotentialPedestrian;
        }
    }
    Ok(out)
}

/// Full monitor pipeline from a field of view to the extrapolated map.
pub fn drivable_map(
    map: &GridMap,
    fov: &FovMap,
    tracks: &[PedestrianTrack],
    req: &ExtrapolationRequest,
) -> Result<DrivableMap, ReachabilityError> {
    extrapolate(&seed_dynamic_map(map, fov, tracks)?, req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fov::compute_fov_from_cells;

    fn open(w: usize, h: usize, res: f64) -> GridMap {
        GridMap::new(w, h, res, WorldPoint::default()).unwrap()
    }

    fn req(horizon: f64, vped: f64, v0: f64) -> ExtrapolationRequest {
        ExtrapolationRequest {
            horizon,
            max_pedestrian_speed: vped,
            vehicle_speed: v0,
        }
    }

    #[test]
    fn effective_speed_rules() {
        assert_eq!(effective_speed(&req(1.0, 1.5, 1.0), None), 1.0);
        assert_eq!(effective_speed(&req(1.0, 0.5, 2.0), None), 0.5);
        let track = PedestrianTrack {
            position: WorldPoint::default(),
            footprint: 1.0,
            observed_speed: Some(2.0),
        };
        assert_eq!(effective_speed(&req(1.0, 0.5, 0.5), Some(&track)), 2.0);
        let unknown = PedestrianTrack {
            observed_speed: None,
            ..track
        };
        assert_eq!(effective_speed(&req(1.0, 0.5, 0.3), Some(&unknown)), 0.3);
    }

    #[test]
    fn generation_counts() {
        assert_eq!(generations(1.0, 1.5, 0.5), 3);
        assert_eq!(generations(0.5, 1.5, 0.5), 2);
        assert_eq!(generations(0.0, 2.5, 0.5), 0);
        assert_eq!(generations(2.0, 2.5, 0.5), 10);
        assert_eq!(generations(0.1, 3.0, 0.1), 3);
    }

    #[test]
    fn fully_visible_map_is_safe() {
        let mut map = open(9, 9, 0.5);
        map.set(GridIndex::new(2, 2), StaticCell::Wall);
        let fov = compute_fov_from_cells(&map, &[GridIndex::new(4, 4)]);
        let seeded = seed_dynamic_map(&map, &fov, &[]).unwrap();
        assert_eq!(seeded.map.count(CellClass::StaticBlocked), 1);
        // the wall shadows the corner cells behind it
        let occluded = map.len() - fov.visible_count();
        assert_eq!(seeded.map.count(CellClass::PotentialPedestrian), occluded);
        assert_eq!(seeded.untracked.len(), occluded);
    }

    #[test]
    fn occluded_region_census() {
        let mut map = open(12, 7, 0.5);
        map.fill(6..7, 0..7, StaticCell::Wall);
        map.set(GridIndex::new(1, 1), StaticCell::Entrance);
        let fov = compute_fov_from_cells(&map, &[GridIndex::new(2, 3)]);
        let seeded = seed_dynamic_map(&map, &fov, &[]).unwrap();
        // 5 columns x 7 rows behind the wall, plus the entrance
        assert_eq!(seeded.map.count(CellClass::PotentialPedestrian), 35 + 1);
    }

    #[test]
    fn track_footprint_rasterization() {
        let map = open(10, 10, 0.5);
        let mut track = PedestrianTrack {
            position: WorldPoint::new(2.0, 2.0),
            footprint: 1.0,
            observed_speed: None,
        };
        // square edges on cell edges: a 2x2 block
        assert_eq!(footprint_cells(map.frame(), &track).len(), 4);
        // centered on a cell center the square reaches into the neighbours
        track.position = WorldPoint::new(2.25, 2.25);
        let cells = footprint_cells(map.frame(), &track);
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[0], GridIndex::new(3, 3));
    }

    #[test]
    fn tracks_are_grouped_by_speed() {
        let map = open(10, 10, 0.5);
        let fov = compute_fov_from_cells(&map, &[GridIndex::new(0, 0)]);
        let tracks = [
            PedestrianTrack {
                position: WorldPoint::new(1.0, 1.0),
                footprint: 1.0,
                observed_speed: Some(1.2),
            },
            PedestrianTrack {
                position: WorldPoint::new(4.0, 4.0),
                footprint: 1.0,
                observed_speed: None,
            },
        ];
        let seeded = seed_dynamic_map(&map, &fov, &tracks).unwrap();
        assert_eq!(seeded.tracked.len(), 1);
        assert_eq!(seeded.tracked[0].1, 1.2);
        assert_eq!(seeded.untracked.len(), 4);
        assert_eq!(seeded.map.count(CellClass::PotentialPedestrian), 8);
    }

    #[test]
    fn dimension_mismatch() {
        let map = open(4, 4, 0.5);
        let fov = FovMap::all_occluded(3, 4);
        assert!(matches!(
            seed_dynamic_map(&map, &fov, &[]),
            Err(ReachabilityError::DimensionMismatch { .. })
        ));
    }

    fn single_seed(map: &GridMap, at: GridIndex) -> SeededMap {
        let mut dmap = DrivableMap::from_static(map);
        dmap.mark_pedestrian(at);
        SeededMap {
            untracked: vec![map.flat(at)],
            map: dmap,
            tracked: vec![],
        }
    }

    #[test]
    fn zero_speed_is_a_fixpoint() {
        let map = open(15, 15, 0.5);
        let seeded = single_seed(&map, GridIndex::new(7, 7));
        let out = extrapolate(&seeded, &req(2.0, 1.0, 0.0)).unwrap();
        assert_eq!(out, seeded.map);
    }

    #[test]
    fn chebyshev_ball() {
        let map = open(15, 15, 0.5);
        let seeded = single_seed(&map, GridIndex::new(7, 7));
        let out = extrapolate(&seeded, &req(1.5, 1.0, 5.0)).unwrap();
        assert_eq!(out.count(CellClass::PotentialPedestrian), 49);
        for row in 0..15 {
            for col in 0..15 {
                let inside = (col as i64 - 7).abs() <= 3 && (row as i64 - 7).abs() <= 3;
                assert_eq!(out.get(GridIndex::new(col, row)) == CellClass::PotentialPedestrian, inside);
            }
        }
    }

    #[test]
    fn walls_are_impermeable() {
        let mut map = open(15, 15, 0.5);
        map.fill(8..9, 0..15, StaticCell::Wall);
        let seeded = single_seed(&map, GridIndex::new(7, 7));
        let out = extrapolate(&seeded, &req(2.5, 2.0, 5.0)).unwrap();
        assert_eq!(out.count(CellClass::StaticBlocked), 15);
        for row in 0..15 {
            for col in 9..15 {
                assert_eq!(out.get(GridIndex::new(col, row)), CellClass::SafeDrivable);
            }
        }
    }

    #[test]
    fn wide_maps_carry_across_words() {
        let map = open(130, 3, 0.5);
        let seeded = single_seed(&map, GridIndex::new(63, 1));
        let out = extrapolate(&seeded, &req(1.0, 1.0, 1.0)).unwrap();
        let row1: Vec<usize> = (0..130)
            .filter(|&c| out.get(GridIndex::new(c, 1)) == CellClass::PotentialPedestrian)
            .collect();
        assert_eq!(row1, vec![61, 62, 63, 64, 65]);
    }

    #[test]
    fn ascii_dump() {
        let mut map = open(3, 1, 0.5);
        map.set(GridIndex::new(2, 0), StaticCell::Wall);
        let seeded = single_seed(&map, GridIndex::new(0, 0));
        assert_eq!(seeded.map.to_ascii(), "P.#\n");
    }
}
