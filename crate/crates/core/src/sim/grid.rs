//! Typed floor grid and the plain-text map format.
//!
//! Map files start with a header line `width height cell_size`, followed by
//! `height` rows of `width` characters: `c` crops, `w` weeds,
//! `i` injured person. Row 0 is the top of the arena (max y).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Arena, Pose, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Crops,
    Weeds,
    InjuredPerson,
}

impl CellKind {
    /// Word used inside sensor tuples shown to the robots' LLMs.
    pub fn label(self) -> &'static str {
        match self {
            CellKind::Crops => "crops",
            CellKind::Weeds => "weeds",
            CellKind::InjuredPerson => "injured person",
        }
    }

    pub fn map_char(self) -> char {
        match self {
            CellKind::Crops => 'c',
            CellKind::Weeds => 'w',
            CellKind::InjuredPerson => 'i',
        }
    }

    pub fn from_map_char(c: char) -> Option<Self> {
        match c {
            'c' => Some(CellKind::Crops),
            'w' => Some(CellKind::Weeds),
            'i' => Some(CellKind::InjuredPerson),
            _ => None,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', " ").as_str() {
            "crops" | "crop" => Ok(CellKind::Crops),
            "weeds" | "weed" => Ok(CellKind::Weeds),
            "injured person" | "injured" => Ok(CellKind::InjuredPerson),
            other => Err(format!("unknown cell kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub kind: CellKind,
    pub x: f64,
    pub y: f64,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub crops: usize,
    pub weeds: usize,
    pub injured: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    arena: Arena,
    /// Row-major, row 0 at the bottom (min y).
    cells: Vec<CellKind>,
}

impl FloorGrid {
    /// Builds a grid centered on the origin. `rows_bottom_up[r][c]`.
    pub fn new(width: usize, height: usize, cell_size: f64, cells: Vec<CellKind>) -> Result<Self, SimError> {
        if width == 0 || height == 0 {
            return Err(SimError::InvalidGrid("grid must have at least one cell".into()));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(SimError::InvalidGrid(format!("cell_size must be positive, got {cell_size}")));
        }
        if cells.len() != width * height {
            return Err(SimError::InvalidGrid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            arena: Arena::centered(width as f64 * cell_size, height as f64 * cell_size),
            cells,
        })
    }

    pub fn uniform(width: usize, height: usize, cell_size: f64, kind: CellKind) -> Result<Self, SimError> {
        Self::new(width, height, cell_size, vec![kind; width * height])
    }

    /// Shuffled grid with exactly `round(crop_fraction * n)` crop cells, the rest weeds.
    pub fn generate(
        width: usize,
        height: usize,
        cell_size: f64,
        crop_fraction: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&crop_fraction) {
            return Err(SimError::InvalidGrid(format!(
                "crop_fraction must lie in [0, 1], got {crop_fraction}"
            )));
        }
        let n = width * height;
        let crops = (crop_fraction * n as f64).round() as usize;
        let mut cells: Vec<CellKind> = (0..n)
            .map(|i| if i < crops { CellKind::Crops } else { CellKind::Weeds })
            .collect();
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::new(width, height, cell_size, cells)
    }

    /// Moves the grid so its lower-left corner sits at (`min_x`, `min_y`).
    pub fn with_origin(mut self, min_x: f64, min_y: f64) -> Self {
        self.arena = Arena {
            min_x,
            min_y,
            max_x: min_x + self.width as f64 * self.cell_size,
            max_y: min_y + self.height as f64 * self.cell_size,
        };
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    /// Cell holding a point; lower-left edges are inclusive, and the
    /// arena's max edges belong to the last row/column.
    pub fn cell_index(&self, x: f64, y: f64) -> Result<(usize, usize), SimError> {
        if !(x.is_finite() && y.is_finite()) || !self.arena.contains(x, y) {
            return Err(SimError::OutOfBounds { x, y });
        }
        let col = (((x - self.arena.min_x) / self.cell_size).floor() as usize).min(self.width - 1);
        let row = (((y - self.arena.min_y) / self.cell_size).floor() as usize).min(self.height - 1);
        Ok((col, row))
    }

    pub fn kind_at(&self, x: f64, y: f64) -> Result<CellKind, SimError> {
        let (col, row) = self.cell_index(x, y)?;
        Ok(self.cells[row * self.width + col])
    }

    pub fn set_kind_at(&mut self, x: f64, y: f64, kind: CellKind) -> Result<(), SimError> {
        let (col, row) = self.cell_index(x, y)?;
        self.cells[row * self.width + col] = kind;
        Ok(())
    }

    /// Center of the cell at (`col`, `row`), row counted from the bottom.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.arena.min_x + (col as f64 + 0.5) * self.cell_size,
            self.arena.min_y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn counts(&self) -> CellCounts {
        let mut counts = CellCounts::default();
        for kind in &self.cells {
            match kind {
                CellKind::Crops => counts.crops += 1,
                CellKind::Weeds => counts.weeds += 1,
                CellKind::InjuredPerson => counts.injured += 1,
            }
        }
        counts
    }

    pub fn parse_map(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| SimError::MapParse { line: 1, message: "missing header".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let header_err = |message: String| SimError::MapParse { line: 1, message };
        if fields.len() != 3 {
            return Err(header_err("header must be `width height cell_size`".into()));
        }
        let width: usize = fields[0].parse().map_err(|_| header_err(format!("bad width '{}'", fields[0])))?;
        let height: usize = fields[1].parse().map_err(|_| header_err(format!("bad height '{}'", fields[1])))?;
        let cell_size: f64 = fields[2]
            .parse()
            .map_err(|_| header_err(format!("bad cell_size '{}'", fields[2])))?;

        let mut top_down: Vec<Vec<CellKind>> = Vec::with_capacity(height);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let row: Result<Vec<CellKind>, SimError> = line
                .trim()
                .chars()
                .map(|c| {
                    CellKind::from_map_char(c).ok_or_else(|| SimError::MapParse {
                        line: line_no,
                        message: format!("unknown cell character '{c}'"),
                    })
                })
                .collect();
            let row = row?;
            if row.len() != width {
                return Err(SimError::MapParse {
                    line: line_no,
                    message: format!("expected {width} cells, found {}", row.len()),
                });
            }
            top_down.push(row);
        }
        if top_down.len() != height {
            return Err(SimError::MapParse {
                line: 1,
                message: format!("expected {height} rows, found {}", top_down.len()),
            });
        }
        let cells = top_down.into_iter().rev().flatten().collect();
        Self::new(width, height, cell_size, cells)
    }

    pub fn to_map(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.cell_size);
        for row in (0..self.height).rev() {
            out.extend(self.cells[row * self.width..(row + 1) * self.width].iter().map(|k| k.map_char()));
            out.push('\n');
        }
        out
    }
}

/// Reads the floor under `pose`. Sensor faults are applied by the caller.
pub fn sense_floor(grid: &FloorGrid, pose: &Pose, tick: u64) -> Result<SensorReading, SimError> {
    Ok(SensorReading {
        kind: grid.kind_at(pose.x, pose.y)?,
        x: pose.x,
        y: pose.y,
        tick,
    })
}
