use std::collections::BTreeMap;

use super::{CellGrid, CellKey, CrashEvent, Exclusion};
use crate::panel::{Direction, SLOT_MINUTES};

/// A later crash this close in time to a kept crash is treated as secondary.
pub const SECONDARY_MINUTES: i64 = 30;
pub const SECONDARY_MILES: f64 = 2.0;
/// Units this close to any crash never serve as controls.
pub const BUFFER_MINUTES: i64 = 60;
pub const BUFFER_MILES: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SutvaResult {
    /// Input crashes, time-sorted within direction, with secondary crashes marked excluded.
    pub crashes: Vec<CrashEvent>,
    pub mask: ControlMask,
}

impl SutvaResult {
    pub fn kept(&self) -> impl Iterator<Item = &CrashEvent> {
        self.crashes.iter().filter(|c| c.is_kept())
    }
}

/// Control eligibility: a cell is blocked when it lies within ±60 minutes and
/// ±2 miles (same direction) of any crash, secondary ones included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlMask {
    // (direction, mile) -> time-sorted [start, end] minute windows of equal length
    windows: BTreeMap<(Direction, i32), Vec<(i64, i64)>>,
}

impl ControlMask {
    pub fn is_eligible(&self, milepost: i32, slot: i64, direction: Direction) -> bool {
        let Some(w) = self.windows.get(&(direction, milepost)) else {
            return true;
        };
        let minute = slot * SLOT_MINUTES;
        let i = w.partition_point(|&(_, hi)| hi < minute);
        !(i < w.len() && w[i].0 <= minute)
    }

    pub fn eligible_cells<'a>(&'a self, grid: &'a CellGrid) -> impl Iterator<Item = CellKey> + 'a {
        grid.iter().map(|(k, _)| *k).filter(|k| self.is_eligible(k.milepost, k.slot, k.direction))
    }
}

pub fn filter_sutva(crashes: &[CrashEvent]) -> SutvaResult {
    let mut sorted = crashes.to_vec();
    sorted.sort_by(|a, b| (a.direction, a.timestamp, &a.id).cmp(&(b.direction, b.timestamp, &b.id)));

    let mut kept_idx: Vec<usize> = Vec::new();
    for i in 0..sorted.len() {
        if sorted[i].excluded.is_some() {
            continue;
        }
        let c = &sorted[i];
        let primary = kept_idx.iter().rev().map(|&k| &sorted[k]).find(|k| {
            k.direction == c.direction
                && c.timestamp - k.timestamp <= SECONDARY_MINUTES
                && (c.milepost - k.milepost).abs() <= SECONDARY_MILES
        });
        if let Some(p) = primary {
            let reason = format!("secondary to crash {}", p.id);
            sorted[i].excluded = Some(Exclusion { reason });
        } else {
            kept_idx.push(i);
        }
    }

    let mut windows: BTreeMap<(Direction, i32), Vec<(i64, i64)>> = BTreeMap::new();
    for c in &sorted {
        for mp in c.mile() - BUFFER_MILES..=c.mile() + BUFFER_MILES {
            windows
                .entry((c.direction, mp))
                .or_default()
                .push((c.timestamp - BUFFER_MINUTES, c.timestamp + BUFFER_MINUTES));
        }
    }
    for w in windows.values_mut() {
        w.sort_unstable();
    }
    SutvaResult { crashes: sorted, mask: ControlMask { windows } }
}
