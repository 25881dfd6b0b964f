use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{time_of_day_slot, weekday_of_slot, Direction, UnitKey, SLOTS_PER_DAY};

/// Exact-match keys: time of day, weekday, milepost, direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchKey {
    pub tod_slot: i64,
    pub weekday: i64,
    pub milepost: i32,
    pub direction: Direction,
}

impl From<UnitKey> for MatchKey {
    fn from(k: UnitKey) -> Self {
        MatchKey {
            tod_slot: time_of_day_slot(k.slot),
            weekday: weekday_of_slot(k.slot),
            milepost: k.milepost,
            direction: k.direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Cap on matches per crash.
    pub k: usize,
    /// Half-width of the search window in days.
    pub window_days: i64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { k: 10, window_days: 14 }
    }
}

impl MatchConfig {
    pub fn window_slots(&self) -> i64 {
        self.window_days * SLOTS_PER_DAY
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    /// Position of the crash in the query list.
    pub crash: usize,
    pub key: UnitKey,
    /// Pool positions, in scan order.
    pub matches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub sets: Vec<MatchSet>,
    pub unmatched: Vec<usize>,
}

/// Pool units grouped by match key, each group in (timestamp, position) order.
#[derive(Debug, Clone)]
pub struct MatchIndex {
    groups: BTreeMap<MatchKey, Vec<(i64, usize)>>,
}

impl MatchIndex {
    pub fn new(pool: &[UnitKey]) -> Self {
        let mut groups: BTreeMap<MatchKey, Vec<(i64, usize)>> = BTreeMap::new();
        for (i, k) in pool.iter().enumerate() {
            groups.entry(MatchKey::from(*k)).or_default().push((k.slot, i));
        }
        for g in groups.values_mut() {
            g.sort_unstable();
        }
        Self { groups }
    }

    /// Up to `k` pool units sharing every key with `crash`, scanned in
    /// timestamp order within the window; the crash's own slot is skipped.
    pub fn find(&self, crash: UnitKey, cfg: &MatchConfig) -> Vec<usize> {
        let Some(g) = self.groups.get(&MatchKey::from(crash)) else {
            return Vec::new();
        };
        let lo = crash.slot - cfg.window_slots();
        let hi = crash.slot + cfg.window_slots();
        let start = g.partition_point(|&(s, _)| s < lo);
        let mut out = Vec::new();
        for &(s, i) in &g[start..] {
            if out.len() == cfg.k || s > hi {
                break;
            }
            if s != crash.slot {
                out.push(i);
            }
        }
        out
    }
}

pub fn match_counterfactuals(crashes: &[UnitKey], pool: &[UnitKey], cfg: &MatchConfig) -> Matching {
    let index = MatchIndex::new(pool);
    let found: Vec<Vec<usize>> = crashes.par_iter().map(|c| index.find(*c, cfg)).collect();
    let mut sets = Vec::new();
    let mut unmatched = Vec::new();
    for (i, m) in found.into_iter().enumerate() {
        if m.is_empty() {
            unmatched.push(i);
        } else {
            sets.push(MatchSet { crash: i, key: crashes[i], matches: m });
        }
    }
    Matching { sets, unmatched }
}

impl Matching {
    pub fn write_csv(&self, pool: &[UnitKey], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["crash_s", "crash_t", "crash_dir", "rank", "match_s", "match_t", "match_dir"])?;
        for s in &self.sets {
            for (r, &m) in s.matches.iter().enumerate() {
                let k = pool[m];
                w.write_record([
                    s.key.milepost.to_string(),
                    s.key.slot.to_string(),
                    s.key.direction.to_string(),
                    r.to_string(),
                    k.milepost.to_string(),
                    k.slot.to_string(),
                    k.direction.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
