//! Static occupancy grid with world/cell transforms and the ASCII map format.
//!
//! The map file is a two-line header followed by one text line per grid row:
//!
//! ```text
//! resolution 0.5
//! origin 0 0
//! #####
//! #..E#
//! #.V.#
//! #####
//! ```
//!
//! Line `k` of the grid body is row `k`, covering world `y` in
//! `[origin.y + k*res, origin.y + (k+1)*res)`. Columns grow with world `x`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },

    #[error("line {line}: non-positive resolution {value}")]
    NonPositiveResolution { line: usize, value: f64 },

    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: unknown cell character {ch:?}")]
    UnknownCell {
        line: usize,
        column: usize,
        ch: char,
    },

    #[error("map has no grid rows")]
    Empty,

    #[error("invalid grid dimensions {width}x{height} at resolution {resolution}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        resolution: f64,
    },

    #[error("point ({x}, {y}) lies outside the map extent")]
    PointOutOfBounds { x: f64, y: f64 },

    #[error("cell ({col}, {row}) lies outside the map")]
    IndexOutOfBounds { col: i64, row: i64 },
}

/// Static classification of a single grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StaticCell {
    Free,
    Wall,
    Entrance,
    ParkedVehicle,
}

impl StaticCell {
    /// Walls and parked vehicles stop line of sight and pedestrian motion.
    pub fn is_blocking(self) -> bool {
        matches!(self, StaticCell::Wall | StaticCell::ParkedVehicle)
    }

    pub fn from_char(ch: char) -> Option<Self> {
        match ch {
            '.' => Some(StaticCell::Free),
            '#' => Some(StaticCell::Wall),
            'E' => Some(StaticCell::Entrance),
            'V' => Some(StaticCell::ParkedVehicle),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            StaticCell::Free => '.',
            StaticCell::Wall => '#',
            StaticCell::Entrance => 'E',
            StaticCell::ParkedVehicle => 'V',
        }
    }
}

pub fn is_blocking(cell: StaticCell) -> bool {
    cell.is_blocking()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub col: usize,
    pub row: usize,
}

impl GridIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Geometry shared by every per-cell layer: dimensions, cell size and the
/// world position of the corner of cell (0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: WorldPoint,
}

impl GridFrame {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn flat(&self, i: GridIndex) -> usize {
        debug_assert!(i.col < self.width && i.row < self.height);
        i.row * self.width + i.col
    }

    pub fn unflat(&self, flat: usize) -> GridIndex {
        GridIndex::new(flat % self.width, flat / self.width)
    }

    /// Index of the cell containing `p`. Points on shared edges belong to
    /// the higher-index cell.
    pub fn world_to_cell(&self, p: WorldPoint) -> Result<GridIndex, GridError> {
        let (col, row) = self.world_to_cell_unchecked(p);
        if p.is_finite() && self.contains(col, row) {
            Ok(GridIndex::new(col as usize, row as usize))
        } else {
            Err(GridError::PointOutOfBounds { x: p.x, y: p.y })
        }
    }

    /// Floor-convention cell coordinates without a bounds check.
    pub fn world_to_cell_unchecked(&self, p: WorldPoint) -> (i64, i64) {
        let col = ((p.x - self.origin.x) / self.resolution).floor();
        let row = ((p.y - self.origin.y) / self.resolution).floor();
        (col as i64, row as i64)
    }

    /// World coordinates of the cell center.
    pub fn cell_to_world(&self, i: GridIndex) -> Result<WorldPoint, GridError> {
        if i.col >= self.width || i.row >= self.height {
            return Err(GridError::IndexOutOfBounds {
                col: i.col as i64,
                row: i.row as i64,
            });
        }
        Ok(self.cell_center(i))
    }

    pub fn cell_center(&self, i: GridIndex) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (i.col as f64 + 0.5) * self.resolution,
            self.origin.y + (i.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Lower and upper corners of a cell in world coordinates.
    pub fn cell_bounds(&self, i: GridIndex) -> (WorldPoint, WorldPoint) {
        let min = WorldPoint::new(
            self.origin.x + i.col as f64 * self.resolution,
            self.origin.y + i.row as f64 * self.resolution,
        );
        let max = WorldPoint::new(min.x + self.resolution, min.y + self.resolution);
        (min, max)
    }

    /// World-space extent of the whole grid as (min, max) corners.
    pub fn extent(&self) -> (WorldPoint, WorldPoint) {
        (
            self.origin,
            WorldPoint::new(
                self.origin.x + self.width as f64 * self.resolution,
                self.origin.y + self.height as f64 * self.resolution,
            ),
        )
    }
}

/// Immutable occupancy grid of the static environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    frame: GridFrame,
    /// Row-major; index = row * width + col
    cells: Vec<StaticCell>,
}

impl GridMap {
    /// An all-free map.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: WorldPoint,
    ) -> Result<Self, GridError> {
        Self::from_cells(
            width,
            height,
            resolution,
            origin,
            vec![StaticCell::Free; width * height],
        )
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: WorldPoint,
        cells: Vec<StaticCell>,
    ) -> Result<Self, GridError> {
        if width == 0
            || height == 0
            || !(resolution > 0.0)
            || !resolution.is_finite()
            || cells.len() != width * height
            || !origin.is_finite()
        {
            return Err(GridError::InvalidDimensions {
                width,
                height,
                resolution,
            });
        }
        Ok(Self {
            frame: GridFrame {
                width,
                height,
                resolution,
                origin,
            },
            cells,
        })
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        parse_static_map(text)
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

    pub fn origin(&self) -> WorldPoint {
        self.frame.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Covered area in square meters.
    pub fn area(&self) -> f64 {
        self.len() as f64 * self.resolution() * self.resolution()
    }

    pub fn cells(&self) -> &[StaticCell] {
        &self.cells
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        self.frame.contains(col, row)
    }

    pub fn flat(&self, i: GridIndex) -> usize {
        self.frame.flat(i)
    }

    pub fn unflat(&self, flat: usize) -> GridIndex {
        self.frame.unflat(flat)
    }

    pub fn get(&self, i: GridIndex) -> Option<StaticCell> {
        if i.col < self.width() && i.row < self.height() {
            Some(self.cells[self.flat(i)])
        } else {
            None
        }
    }

    /// Cell kind; panics when out of bounds.
    pub fn cell(&self, i: GridIndex) -> StaticCell {
        self.cells[self.flat(i)]
    }

    pub fn set(&mut self, i: GridIndex, kind: StaticCell) {
        let flat = self.flat(i);
        self.cells[flat] = kind;
    }

    pub fn is_blocking_at(&self, i: GridIndex) -> bool {
        self.cell(i).is_blocking()
    }

    /// Fill an axis-aligned block of cells, clipped to the map.
    pub fn fill(&mut self, cols: std::ops::Range<usize>, rows: std::ops::Range<usize>, kind: StaticCell) {
        for row in rows.start..rows.end.min(self.height()) {
            for col in cols.start..cols.end.min(self.width()) {
                self.set(GridIndex::new(col, row), kind);
            }
        }
    }

    pub fn world_to_cell(&self, p: WorldPoint) -> Result<GridIndex, GridError> {
        self.frame.world_to_cell(p)
    }

    pub fn cell_to_world(&self, i: GridIndex) -> Result<WorldPoint, GridError> {
        self.frame.cell_to_world(i)
    }

    pub fn cell_center(&self, i: GridIndex) -> WorldPoint {
        self.frame.cell_center(i)
    }

    pub fn extent(&self) -> (WorldPoint, WorldPoint) {
        self.frame.extent()
    }

    /// Every cell on the outer ring of the grid, each exactly once, in a
    /// fixed order (top row, right column, bottom row, left column).
    pub fn perimeter(&self) -> Vec<GridIndex> {
        let (w, h) = (self.width(), self.height());
        let mut out = Vec::with_capacity(2 * (w + h));
        for col in 0..w {
            out.push(GridIndex::new(col, 0));
        }
        if h > 1 {
            for row in 1..h {
                out.push(GridIndex::new(w - 1, row));
            }
            if w > 1 {
                for col in (0..w - 1).rev() {
                    out.push(GridIndex::new(col, h - 1));
                }
            }
            if w > 1 {
                for row in (1..h - 1).rev() {
                    out.push(GridIndex::new(0, row));
                }
            }
        }
        out
    }

    /// Serialize back to the map text format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() + self.height() + 64);
        out.push_str(&format!("resolution {}\n", self.resolution()));
        let origin = self.origin();
        out.push_str(&format!("origin {} {}\n", origin.x, origin.y));
        for row in self.cells.chunks(self.width()) {
            out.extend(row.iter().map(|c| c.to_char()));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn header_value<'a>(line_no: usize, line: Option<&'a str>, key: &str) -> Result<Vec<&'a str>, GridError> {
    let line = line.ok_or_else(|| GridError::Header {
        line: line_no,
        message: format!("missing `{key}` header"),
    })?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(GridError::Header {
            line: line_no,
            message: format!("expected `{key}` header"),
        });
    }
    Ok(parts.collect())
}

fn parse_number(line: usize, s: &str) -> Result<f64, GridError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| GridError::Header {
            line,
            message: format!("invalid number {s:?}"),
        })
}

/// Parse the ASCII map format.
pub fn parse_static_map(text: &str) -> Result<GridMap, GridError> {
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));

    let res = header_value(1, lines.next(), "resolution")?;
    if res.len() != 1 {
        return Err(GridError::Header {
            line: 1,
            message: "expected `resolution <meters>`".into(),
        });
    }
    let resolution = parse_number(1, res[0])?;
    if resolution <= 0.0 {
        return Err(GridError::NonPositiveResolution {
            line: 1,
            value: resolution,
        });
    }

    let origin = header_value(2, lines.next(), "origin")?;
    if origin.len() != 2 {
        return Err(GridError::Header {
            line: 2,
            message: "expected `origin <x> <y>`".into(),
        });
    }
    let origin = WorldPoint::new(parse_number(2, origin[0])?, parse_number(2, origin[1])?);

    let body: Vec<&str> = lines.collect();
    // trailing blank lines are tolerated
    let rows = body.len() - body.iter().rev().take_while(|l| l.is_empty()).count();
    if rows == 0 {
        return Err(GridError::Empty);
    }

    let width = body[0].chars().count();
    let mut cells = Vec::with_capacity(width * rows);
    for (k, line) in body[..rows].iter().enumerate() {
        let line_no = k + 3;
        let found = line.chars().count();
        if found != width {
            return Err(GridError::RaggedRow {
                line: line_no,
                expected: width,
                found,
            });
        }
        for (col, ch) in line.chars().enumerate() {
            let cell = StaticCell::from_char(ch).ok_or(GridError::UnknownCell {
                line: line_no,
                column: col + 1,
                ch,
            })?;
            cells.push(cell);
        }
    }
    if width == 0 {
        return Err(GridError::Empty);
    }

    GridMap::from_cells(width, rows, resolution, origin, cells)
}
