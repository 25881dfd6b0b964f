use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::sutva::SutvaResult;
use super::{AlignmentPoint, CellGrid, CrashEvent};
use crate::error::{Error, Result};
use crate::panel::{
    weekday_of_slot, Direction, Panel, PanelRow, Period, Scenario, UnitKey, ALIGN_FEATURES, BASIC_FEATURES,
    SLOTS_PER_DAY, SLOT_MINUTES, TRAFFIC_FEATURES,
};
use crate::rng::{stream_rng, INGEST_SAMPLING};

/// Which way "upstream" points along the milepost axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orientation {
    /// When true (default) upstream is against travel: higher mileposts for
    /// southbound, lower for northbound.
    pub up_against_travel: bool,
}

impl Default for Orientation {
    fn default() -> Self {
        Self { up_against_travel: true }
    }
}

impl Orientation {
    /// Milepost step of one mile upstream.
    pub fn up_step(self, dir: Direction) -> i32 {
        let s = match dir {
            Direction::S => 1,
            Direction::N => -1,
        };
        if self.up_against_travel {
            s
        } else {
            -s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelConfig {
    pub scenarios: Vec<Scenario>,
    /// Controls sampled per crash.
    pub control_ratio: usize,
    pub orientation: Orientation,
    /// Covariates are read this many minutes before the unit's time.
    pub lag_minutes: i64,
    /// Half-width of the window, in days, from which the validation pool is drawn.
    pub match_window_days: i64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::grid(),
            control_ratio: 10,
            orientation: Orientation::default(),
            lag_minutes: 10,
            match_window_days: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelWarning {
    pub crash_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelBuild {
    /// Crashes plus sampled controls.
    pub panel: Panel,
    /// Untreated units sharing a crash's time of day, weekday, milepost and
    /// direction in nearby weeks; never used for training.
    pub pool: Panel,
    pub warnings: Vec<PanelWarning>,
}

pub fn feature_names(with_alignment: bool) -> Vec<String> {
    let mut names: Vec<String> = BASIC_FEATURES.iter().map(|s| s.to_string()).collect();
    if with_alignment {
        names.extend(ALIGN_FEATURES.iter().map(|s| s.to_string()));
    }
    for base in TRAFFIC_FEATURES {
        names.push(base.to_string());
        for suffix in crate::panel::OFFSET_SUFFIXES {
            names.push(format!("{base}{suffix}"));
        }
    }
    names
}

struct RowBuilder<'a> {
    grid: &'a CellGrid,
    alignment: Vec<&'a AlignmentPoint>,
    cfg: &'a PanelConfig,
}

impl RowBuilder<'_> {
    fn nearest_alignment(&self, mp: i32) -> Option<&AlignmentPoint> {
        let x = f64::from(mp);
        self.alignment.iter().min_by(|a, b| (a.milepost - x).abs().total_cmp(&(b.milepost - x).abs())).copied()
    }

    fn features(&self, key: UnitKey) -> std::result::Result<Vec<f64>, String> {
        let up = self.cfg.orientation.up_step(key.direction);
        let lag = key.slot - self.cfg.lag_minutes / SLOT_MINUTES;
        let mut f = vec![
            Period::of_slot(key.slot).code(),
            f64::from(key.milepost),
            key.direction.code(),
            weekday_of_slot(key.slot) as f64,
        ];
        if !self.alignment.is_empty() {
            let a = self.nearest_alignment(key.milepost).expect("non-empty alignment");
            f.extend(a.values());
        }
        // offsets in OFFSET_SUFFIXES order: here, down 1, down 2, up 1, up 2
        let offsets = [0, -up, -2 * up, up, 2 * up];
        let mut cells = Vec::with_capacity(offsets.len());
        for off in offsets {
            let mp = key.milepost + off;
            let c = self
                .grid
                .get(mp, lag, key.direction)
                .ok_or_else(|| format!("no traffic state at milepost {mp}, slot {lag}"))?;
            cells.push(c.values());
        }
        for v in 0..TRAFFIC_FEATURES.len() {
            f.extend(cells.iter().map(|c| c[v]));
        }
        Ok(f)
    }

    fn outcomes(&self, key: UnitKey) -> Vec<Option<f64>> {
        let up = self.cfg.orientation.up_step(key.direction);
        self.cfg
            .scenarios
            .iter()
            .map(|s| {
                let mp = key.milepost + (-s.dis) * up;
                let slot = key.slot + i64::from(s.dur) / SLOT_MINUTES;
                self.grid.get(mp, slot, key.direction).map(|c| c.spd)
            })
            .collect()
    }

    fn row(&self, key: UnitKey) -> std::result::Result<PanelRow, String> {
        Ok(PanelRow {
            key,
            crash_id: None,
            treatment: None,
            features: self.features(key)?,
            outcomes: self.outcomes(key),
        })
    }
}

/// Assemble crash rows, period/location/direction-matched controls and the
/// validation pool.
pub fn build_panel(
    grid: &CellGrid,
    sutva: &SutvaResult,
    alignment: &[AlignmentPoint],
    cfg: &PanelConfig,
    seed: u64,
) -> Result<PanelBuild> {
    if cfg.lag_minutes < 0 || cfg.lag_minutes % SLOT_MINUTES != 0 {
        return Err(Error::InvalidInput("lag must be a non-negative multiple of 5 minutes".into()));
    }
    let mut align: Vec<&AlignmentPoint> = alignment.iter().collect();
    align.sort_by(|a, b| a.milepost.total_cmp(&b.milepost));
    let rb = RowBuilder { grid, alignment: align, cfg };
    let names = feature_names(!alignment.is_empty());

    // control candidates keyed by (milepost, direction, period)
    let mut candidates: BTreeMap<(i32, Direction, u8), Vec<i64>> = BTreeMap::new();
    for key in sutva.mask.eligible_cells(grid) {
        let period = Period::of_slot(key.slot).code() as u8;
        candidates.entry((key.milepost, key.direction, period)).or_default().push(key.slot);
    }

    let mut panel = Panel::new(names.clone(), cfg.scenarios.clone());
    let mut warnings = Vec::new();
    let mut used: BTreeSet<UnitKey> = BTreeSet::new();
    let kept: Vec<&CrashEvent> = sutva.kept().collect();
    let mut crash_keys = Vec::new();

    for (ordinal, crash) in kept.iter().enumerate() {
        let key = UnitKey { milepost: crash.mile(), slot: crash.slot(), direction: crash.direction };
        if grid.get(key.milepost, key.slot, key.direction).is_none() {
            warnings.push(PanelWarning {
                crash_id: crash.id.clone(),
                message: "crash outside grid coverage; skipped".into(),
            });
            continue;
        }
        let mut row = match rb.row(key) {
            Ok(r) => r,
            Err(msg) => {
                warnings.push(PanelWarning { crash_id: crash.id.clone(), message: msg });
                continue;
            }
        };
        row.crash_id = Some(crash.id.clone());
        row.treatment = Some(crash.crash_type);
        if row.outcomes.iter().any(Option::is_none) {
            warnings.push(PanelWarning {
                crash_id: crash.id.clone(),
                message: "some outcome cells fall outside coverage".into(),
            });
        }
        panel.rows.push(row);
        used.insert(key);
        crash_keys.push((crash.id.clone(), key));

        let period = Period::of_slot(key.slot).code() as u8;
        let mut pool: Vec<i64> = candidates.get(&(key.milepost, key.direction, period)).cloned().unwrap_or_default();
        let mut rng = stream_rng(seed, INGEST_SAMPLING, ordinal as u64);
        pool.shuffle(&mut rng);
        let mut drawn = 0;
        for slot in pool {
            if drawn == cfg.control_ratio {
                break;
            }
            let ckey = UnitKey { slot, ..key };
            if used.contains(&ckey) {
                continue;
            }
            if let Ok(r) = rb.row(ckey) {
                panel.rows.push(r);
                used.insert(ckey);
                drawn += 1;
            }
        }
        if drawn < cfg.control_ratio {
            warnings.push(PanelWarning {
                crash_id: crash.id.clone(),
                message: format!("only {drawn} of {} controls available", cfg.control_ratio),
            });
        }
    }

    let mut pool = Panel::new(names, cfg.scenarios.clone());
    let mut pooled: BTreeSet<UnitKey> = BTreeSet::new();
    let weeks = cfg.match_window_days / 7;
    for (_, key) in &crash_keys {
        for w in (-weeks..=weeks).filter(|&w| w != 0) {
            let pkey = UnitKey { slot: key.slot + w * 7 * SLOTS_PER_DAY, ..*key };
            if used.contains(&pkey)
                || pooled.contains(&pkey)
                || grid.get(pkey.milepost, pkey.slot, pkey.direction).is_none()
                || !sutva.mask.is_eligible(pkey.milepost, pkey.slot, pkey.direction)
            {
                continue;
            }
            if let Ok(r) = rb.row(pkey) {
                pool.rows.push(r);
                pooled.insert(pkey);
            }
        }
    }
    pool.rows.sort_by_key(|r| (r.key.slot, r.key.milepost, r.key.direction));

    panel.validate()?;
    Ok(PanelBuild { panel, pool, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_sutva, Cell, CellKey};
    use crate::panel::CrashType;

    fn grid(miles: std::ops::RangeInclusive<i32>, slots: std::ops::Range<i64>) -> CellGrid {
        let mut g = CellGrid::new();
        for dir in [Direction::N, Direction::S] {
            for mp in miles.clone() {
                for slot in slots.clone() {
                    let spd = 50.0 + f64::from(mp - 140) + (slot % 7) as f64;
                    let ci = f64::from(mp - 140) / 100.0 + slot as f64 / 1e6;
                    g.insert(
                        CellKey { direction: dir, slot, milepost: mp },
                        Cell { vol: 100.0, occ: 0.1, spd, std_spd: 1.0, spd_diff: 2.0, ci, interpolated: false },
                    );
                }
            }
        }
        g
    }

    fn crash(id: &str, minute: i64, mp: f64, dir: Direction) -> CrashEvent {
        CrashEvent {
            id: id.into(),
            timestamp: minute,
            milepost: mp,
            direction: dir,
            crash_type: CrashType::Rear,
            excluded: None,
        }
    }

    #[test]
    fn features_and_outcomes_follow_orientation() {
        let g = grid(140..=160, 0..400);
        let t0 = 200 * SLOT_MINUTES;
        let sutva = filter_sutva(&[crash("c", t0, 150.3, Direction::S)]);
        let b = build_panel(&g, &sutva, &[], &PanelConfig::default(), 1).unwrap();
        let p = &b.panel;
        let row = &p.rows[0];
        assert_eq!(row.treatment, Some(CrashType::Rear));
        // southbound: upstream is the higher milepost
        let ci_up_1 = row.features[p.feature_index("ci_up_1").unwrap()];
        assert_eq!(ci_up_1, g.get(151, 198, Direction::S).unwrap().ci);
        let ci_down_2 = row.features[p.feature_index("ci_down_2").unwrap()];
        assert_eq!(ci_down_2, g.get(148, 198, Direction::S).unwrap().ci);
        let y = row.outcomes[p.scenario_index(Scenario::new(5, -1)).unwrap()];
        assert_eq!(y, Some(g.get(151, 201, Direction::S).unwrap().spd));

        // northbound flips the upstream side
        let sutva = filter_sutva(&[crash("c", t0, 150.3, Direction::N)]);
        let b = build_panel(&g, &sutva, &[], &PanelConfig::default(), 1).unwrap();
        let p = &b.panel;
        let y = p.rows[0].outcomes[p.scenario_index(Scenario::new(5, -1)).unwrap()];
        assert_eq!(y, Some(g.get(149, 201, Direction::N).unwrap().spd));
    }

    #[test]
    fn control_count_matches_ratio_and_avoids_crash_window() {
        let g = grid(140..=160, 0..(SLOTS_PER_DAY * 10));
        let crashes =
            [crash("a", 2 * 1440 + 600, 150.0, Direction::N), crash("b", 3 * 1440 + 900, 145.0, Direction::S)];
        let sutva = filter_sutva(&crashes);
        let cfg = PanelConfig { control_ratio: 7, ..Default::default() };
        let b = build_panel(&g, &sutva, &[], &cfg, 42).unwrap();
        assert_eq!(b.panel.len(), 2 * (1 + 7));
        for r in b.panel.rows.iter().filter(|r| r.treatment.is_none()) {
            assert!(sutva.mask.is_eligible(r.key.milepost, r.key.slot, r.key.direction));
        }
        let treated: Vec<_> = b.panel.rows.iter().filter(|r| r.treatment.is_some()).collect();
        for c in &treated {
            let controls: Vec<_> = b
                .panel
                .rows
                .iter()
                .filter(|r| {
                    r.treatment.is_none() && r.key.milepost == c.key.milepost && r.key.direction == c.key.direction
                })
                .collect();
            assert_eq!(controls.len(), 7);
            for r in controls {
                assert_eq!(Period::of_slot(r.key.slot), Period::of_slot(c.key.slot));
            }
        }
        // deterministic given the seed
        let again = build_panel(&g, &sutva, &[], &cfg, 42).unwrap();
        assert_eq!(again.panel, b.panel);
        // pool units share every matching key with a crash
        assert!(!b.pool.is_empty());
        for r in &b.pool.rows {
            assert!(treated.iter().any(|c| {
                c.key.milepost == r.key.milepost
                    && c.key.direction == r.key.direction
                    && (r.key.slot - c.key.slot) % (7 * SLOTS_PER_DAY) == 0
            }));
        }
    }

    #[test]
    fn crash_outside_coverage_is_skipped_with_warning() {
        let g = grid(140..=160, 0..400);
        let sutva = filter_sutva(&[crash("far", 200 * 5, 190.0, Direction::N)]);
        let b = build_panel(&g, &sutva, &[], &PanelConfig::default(), 1).unwrap();
        assert!(b.panel.is_empty());
        assert_eq!(b.warnings.len(), 1);
        assert_eq!(b.warnings[0].crash_id, "far");
    }

    #[test]
    fn alignment_columns_present_when_given() {
        let g = grid(140..=160, 0..400);
        let sutva = filter_sutva(&[crash("c", 1000, 150.0, Direction::N)]);
        let align = [AlignmentPoint {
            milepost: 150.0,
            lanewid: 12.0,
            medwid: 30.0,
            shlwid: 10.0,
            no_lane: 4,
            curv_max: 1.0,
            deg_curv: 0.5,
            pct_grad: 1.2,
            dir_grad: 1.0,
        }];
        let b = build_panel(&g, &sutva, &align, &PanelConfig::default(), 1).unwrap();
        let p = &b.panel;
        assert_eq!(p.rows[0].features[p.feature_index("no_lane").unwrap()], 4.0);
        assert_eq!(p.feature_names.len(), 4 + 8 + 30);
    }
}
