//! Raw detector, crash and alignment tables to the estimation panel.
//!
//! The flow is `parse_*` → [`aggregate_cells`] → [`interpolate_gaps`] →
//! [`filter_sutva`] → [`build_panel`].

mod build;
mod grid;
mod parse;
mod sutva;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::panel::{CrashType, Direction};

pub use build::{build_panel, Orientation, PanelBuild, PanelConfig, PanelWarning};
pub use grid::{aggregate_cells, interpolate_gaps, AggregateConfig};
pub use parse::{parse_alignment, parse_crashes, parse_traffic, Parsed, Reject};
pub use sutva::{filter_sutva, ControlMask, SutvaResult, SECONDARY_MILES, SECONDARY_MINUTES};

/// One loop-detector observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReading {
    /// Minutes since the Unix epoch.
    pub timestamp: i64,
    pub milepost: f64,
    pub direction: Direction,
    pub lane: String,
    pub vol: f64,
    pub occ: f64,
    pub spd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub direction: Direction,
    pub slot: i64,
    pub milepost: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub vol: f64,
    pub occ: f64,
    pub spd: f64,
    pub std_spd: f64,
    pub spd_diff: f64,
    pub ci: f64,
    pub interpolated: bool,
}

impl Cell {
    /// Traffic variables in the canonical order of [`crate::panel::TRAFFIC_FEATURES`].
    pub fn values(&self) -> [f64; 6] {
        [self.vol, self.occ, self.spd, self.std_spd, self.spd_diff, self.ci]
    }
}

/// Aggregated traffic state per (direction, 5-minute slot, integer milepost).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellGrid {
    cells: BTreeMap<CellKey, Cell>,
}

impl CellGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: CellKey, cell: Cell) -> Option<Cell> {
        self.cells.insert(key, cell)
    }

    pub fn get(&self, milepost: i32, slot: i64, direction: Direction) -> Option<&Cell> {
        self.cells.get(&CellKey { direction, slot, milepost })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &Cell)> {
        self.cells.iter()
    }

    pub fn milepost_range(&self) -> Option<(i32, i32)> {
        let lo = self.cells.keys().map(|k| k.milepost).min()?;
        let hi = self.cells.keys().map(|k| k.milepost).max()?;
        Some((lo, hi))
    }

    pub fn slot_range(&self) -> Option<(i64, i64)> {
        let lo = self.cells.keys().map(|k| k.slot).min()?;
        let hi = self.cells.keys().map(|k| k.slot).max()?;
        Some((lo, hi))
    }

    pub fn interpolated_count(&self) -> usize {
        self.cells.values().filter(|c| c.interpolated).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrashEvent {
    pub id: String,
    /// Minutes since the Unix epoch.
    pub timestamp: i64,
    pub milepost: f64,
    pub direction: Direction,
    pub crash_type: CrashType,
    pub excluded: Option<Exclusion>,
}

impl CrashEvent {
    pub fn slot(&self) -> i64 {
        crate::panel::slot_of_minute(self.timestamp)
    }

    pub fn mile(&self) -> i32 {
        self.milepost.floor() as i32
    }

    pub fn is_kept(&self) -> bool {
        self.excluded.is_none()
    }
}

/// Road geometry at a milepost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPoint {
    pub milepost: f64,
    pub lanewid: f64,
    pub medwid: f64,
    pub shlwid: f64,
    pub no_lane: u8,
    pub curv_max: f64,
    pub deg_curv: f64,
    pub pct_grad: f64,
    pub dir_grad: f64,
}

impl AlignmentPoint {
    pub fn values(&self) -> [f64; 8] {
        [
            self.lanewid,
            self.medwid,
            self.shlwid,
            f64::from(self.no_lane),
            self.curv_max,
            self.deg_curv,
            self.pct_grad,
            self.dir_grad,
        ]
    }
}
