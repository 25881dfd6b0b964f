use std::collections::{BTreeMap, BTreeSet};

use super::{Cell, CellGrid, CellKey, DetectorReading};
use crate::error::{Error, Result};
use crate::panel::{slot_of_minute, Direction, Period};
use crate::stats::{mean, population_std, quantile};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateConfig {
    /// Constant free-flow speed used for the congestion index instead of the
    /// per-milepost off-peak percentile.
    pub free_flow_speed: Option<f64>,
    pub free_flow_quantile: f64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self { free_flow_speed: None, free_flow_quantile: 0.85 }
    }
}

#[derive(Default)]
struct DetectorAcc {
    vol: f64,
    occ: f64,
    spd: f64,
    n: usize,
}

/// Aggregate detector readings onto the one-mile × five-minute grid.
///
/// Each detector (exact milepost + lane) is first reduced over the slot
/// (volume summed, occupancy and speed averaged); detectors within the same
/// mile are then combined: volume summed, occupancy and speed averaged,
/// `std_spd` the population deviation of detector speeds and `spd_diff` their
/// range.
pub fn aggregate_cells(readings: &[DetectorReading], cfg: &AggregateConfig) -> Result<CellGrid> {
    if readings.is_empty() {
        return Err(Error::Empty("no detector readings".into()));
    }
    let mut detectors: BTreeMap<(CellKey, u64, &str), DetectorAcc> = BTreeMap::new();
    for r in readings {
        let key =
            CellKey { direction: r.direction, slot: slot_of_minute(r.timestamp), milepost: r.milepost.floor() as i32 };
        let acc = detectors.entry((key, r.milepost.to_bits(), r.lane.as_str())).or_default();
        acc.vol += r.vol;
        acc.occ += r.occ;
        acc.spd += r.spd;
        acc.n += 1;
    }

    let slots: BTreeSet<i64> = detectors.keys().map(|(k, _, _)| k.slot).collect();
    let (first, last) = (*slots.first().unwrap(), *slots.last().unwrap());
    if let Some(gap) = (first..=last).find(|s| !slots.contains(s)) {
        return Err(Error::InvalidInput(format!("no detector reported anywhere in slot {gap}")));
    }

    let mut per_cell: BTreeMap<CellKey, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for ((key, _, _), acc) in &detectors {
        let n = acc.n as f64;
        per_cell.entry(*key).or_default().push((acc.vol, acc.occ / n, acc.spd / n));
    }

    let mut grid = CellGrid::new();
    for (key, dets) in &per_cell {
        let speeds: Vec<f64> = dets.iter().map(|d| d.2).collect();
        let occs: Vec<f64> = dets.iter().map(|d| d.1).collect();
        let max = speeds.iter().copied().fold(f64::MIN, f64::max);
        let min = speeds.iter().copied().fold(f64::MAX, f64::min);
        grid.insert(
            *key,
            Cell {
                vol: dets.iter().map(|d| d.0).sum(),
                occ: mean(&occs),
                spd: mean(&speeds),
                std_spd: population_std(&speeds),
                spd_diff: max - min,
                ci: 0.0,
                interpolated: false,
            },
        );
    }
    fill_congestion_index(&mut grid, cfg);
    Ok(grid)
}

/// ci = max(0, 1 - spd / ffs), ffs per milepost from off-peak cells unless overridden.
fn fill_congestion_index(grid: &mut CellGrid, cfg: &AggregateConfig) {
    let mut off_peak: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut all: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (k, c) in grid.iter() {
        all.entry(k.milepost).or_default().push(c.spd);
        if Period::of_slot(k.slot) == Period::OffPeak {
            off_peak.entry(k.milepost).or_default().push(c.spd);
        }
    }
    let ffs: BTreeMap<i32, f64> = all
        .iter()
        .map(|(&mp, speeds)| {
            let v = match cfg.free_flow_speed {
                Some(f) => f,
                None => quantile(off_peak.get(&mp).unwrap_or(speeds), cfg.free_flow_quantile),
            };
            (mp, v)
        })
        .collect();
    for (k, c) in grid.cells.iter_mut() {
        let f = ffs[&k.milepost];
        c.ci = if f > 0.0 { (1.0 - c.spd / f).clamp(0.0, 1.0) } else { 0.0 };
    }
}

fn lerp_cell(a: &Cell, b: &Cell, w: f64) -> Cell {
    let l = |x: f64, y: f64| x + w * (y - x);
    Cell {
        vol: l(a.vol, b.vol),
        occ: l(a.occ, b.occ),
        spd: l(a.spd, b.spd),
        std_spd: l(a.std_spd, b.std_spd),
        spd_diff: l(a.spd_diff, b.spd_diff),
        ci: l(a.ci, b.ci),
        interpolated: true,
    }
}

/// Fill unrecorded integer mileposts by linear interpolation between the
/// nearest recorded neighbours, copying the nearest value beyond the ends.
///
/// `range` defaults to the span of mileposts seen anywhere in the grid.
pub fn interpolate_gaps(grid: &CellGrid, range: Option<(i32, i32)>) -> Result<CellGrid> {
    let Some(observed) = grid.milepost_range() else {
        return Err(Error::Empty("empty cell grid".into()));
    };
    let (lo, hi) = range.unwrap_or(observed);
    if lo > hi {
        return Err(Error::InvalidInput(format!("milepost range {lo}..{hi} is empty")));
    }
    let (s0, s1) = grid.slot_range().unwrap();
    let directions: BTreeSet<Direction> = grid.iter().map(|(k, _)| k.direction).collect();

    let mut by_line: BTreeMap<(Direction, i64), Vec<(i32, Cell)>> = BTreeMap::new();
    for (k, c) in grid.iter() {
        by_line.entry((k.direction, k.slot)).or_default().push((k.milepost, *c));
    }

    let mut out = grid.clone();
    for &dir in &directions {
        for slot in s0..=s1 {
            let recorded = by_line.get(&(dir, slot)).map(Vec::as_slice).unwrap_or(&[]);
            if recorded.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "direction {dir} slot {slot}: {} recorded milepost(s), need at least two",
                    recorded.len()
                )));
            }
            // `recorded` is milepost-sorted because the grid is keyed by milepost last.
            for mp in lo..=hi {
                if recorded.binary_search_by_key(&mp, |r| r.0).is_ok() {
                    continue;
                }
                let upper = recorded.partition_point(|r| r.0 < mp);
                let cell = if upper == 0 {
                    Cell { interpolated: true, ..recorded[0].1 }
                } else if upper == recorded.len() {
                    Cell { interpolated: true, ..recorded[upper - 1].1 }
                } else {
                    let (a, b) = (&recorded[upper - 1], &recorded[upper]);
                    lerp_cell(&a.1, &b.1, f64::from(mp - a.0) / f64::from(b.0 - a.0))
                };
                out.insert(CellKey { direction: dir, slot, milepost: mp }, cell);
            }
        }
    }
    Ok(out)
}
