//! Estimation panel: one row per spatiotemporal unit (milepost, 5-minute slot,
//! direction) with covariates, per-type crash treatment and the grid of
//! downstream-in-time / upstream-in-space speed outcomes.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

pub const SLOT_MINUTES: i64 = 5;
pub const SLOTS_PER_DAY: i64 = 24 * 60 / SLOT_MINUTES;

/// Minutes after the crash at which outcomes are read.
pub const DURATIONS: [u32; 6] = [5, 10, 15, 20, 25, 30];
/// Signed distance in miles relative to the crash; negative is upstream.
pub const DISTANCES: [i32; 5] = [0, -1, -2, -3, -5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
}

impl Direction {
    pub fn code(self) -> f64 {
        match self {
            Direction::N => 0.0,
            Direction::S => 1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::N => "N",
            Direction::S => "S",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" | "NB" | "0" | "NORTH" => Ok(Direction::N),
            "S" | "SB" | "1" | "SOUTH" => Ok(Direction::S),
            other => Err(Error::InvalidInput(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CrashType {
    #[serde(rename = "REAR")]
    Rear,
    #[serde(rename = "OBJ")]
    Obj,
    #[serde(rename = "WIPE")]
    Wipe,
}

impl CrashType {
    pub const ALL: [CrashType; 3] = [CrashType::Rear, CrashType::Obj, CrashType::Wipe];

    pub fn index(self) -> usize {
        match self {
            CrashType::Rear => 0,
            CrashType::Obj => 1,
            CrashType::Wipe => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CrashType::Rear => "REAR",
            CrashType::Obj => "OBJ",
            CrashType::Wipe => "WIPE",
        }
    }

    /// Name of the panel treatment column for this type.
    pub fn column(self) -> &'static str {
        match self {
            CrashType::Rear => "t_rear",
            CrashType::Obj => "t_obj",
            CrashType::Wipe => "t_wipe",
        }
    }
}

impl fmt::Display for CrashType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CrashType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REAR" => Ok(CrashType::Rear),
            "OBJ" => Ok(CrashType::Obj),
            "WIPE" => Ok(CrashType::Wipe),
            other => Err(Error::InvalidInput(format!("unknown crash type `{other}`"))),
        }
    }
}

/// (dur, dis) outcome coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub dur: u32,
    pub dis: i32,
}

impl Scenario {
    pub fn new(dur: u32, dis: i32) -> Self {
        Self { dur, dis }
    }

    /// Full paper grid, duration-major.
    pub fn grid() -> Vec<Scenario> {
        Self::cross(&DURATIONS, &DISTANCES)
    }

    pub fn cross(durs: &[u32], diss: &[i32]) -> Vec<Scenario> {
        durs.iter().flat_map(|&dur| diss.iter().map(move |&dis| Scenario { dur, dis })).collect()
    }

    pub fn column(self) -> String {
        format!("y_{}_{}", self.dur, self.dis)
    }

    pub fn parse_column(name: &str) -> Option<Scenario> {
        let rest = name.strip_prefix("y_")?;
        let (dur, dis) = rest.split_once('_')?;
        Some(Scenario { dur: dur.parse().ok()?, dis: dis.parse().ok()? })
    }
}

/// Time-of-day regime used as the `time` covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Period {
    Night,
    OffPeak,
    Peak,
}

impl Period {
    /// Night 23:00-04:00, peak 06:30-09:00 and 16:40-19:30, off-peak otherwise.
    pub fn of_minute_of_day(m: i64) -> Period {
        let m = m.rem_euclid(1440);
        if !(240..1380).contains(&m) {
            Period::Night
        } else if (390..540).contains(&m) || (1000..1170).contains(&m) {
            Period::Peak
        } else {
            Period::OffPeak
        }
    }

    pub fn of_slot(slot: i64) -> Period {
        Self::of_minute_of_day(slot.rem_euclid(SLOTS_PER_DAY) * SLOT_MINUTES)
    }

    pub fn code(self) -> f64 {
        match self {
            Period::Night => 0.0,
            Period::OffPeak => 1.0,
            Period::Peak => 2.0,
        }
    }
}

pub fn slot_of_minute(minute: i64) -> i64 {
    minute.div_euclid(SLOT_MINUTES)
}

pub fn time_of_day_slot(slot: i64) -> i64 {
    slot.rem_euclid(SLOTS_PER_DAY)
}

/// Day of week with 0 = Monday; minute 0 is 1970-01-01, a Thursday.
pub fn weekday_of_slot(slot: i64) -> i64 {
    (slot.div_euclid(SLOTS_PER_DAY) + 3).rem_euclid(7)
}

/// Spatiotemporal unit (s, t, direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub milepost: i32,
    pub slot: i64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureCategory {
    Basic,
    Align,
    Condi,
    Other,
}

pub const BASIC_FEATURES: [&str; 4] = ["time", "milepost", "direction", "week"];
pub const ALIGN_FEATURES: [&str; 8] =
    ["lanewid", "medwid", "shlwid", "no_lane", "curv_max", "deg_curv", "pct_grad", "dir_grad"];
pub const TRAFFIC_FEATURES: [&str; 6] = ["vol", "occ", "spd", "std_spd", "spd_diff", "ci"];
pub const OFFSET_SUFFIXES: [&str; 4] = ["_down_1", "_down_2", "_up_1", "_up_2"];

pub fn category_of(name: &str) -> FeatureCategory {
    if BASIC_FEATURES.contains(&name) {
        return FeatureCategory::Basic;
    }
    if ALIGN_FEATURES.contains(&name) {
        return FeatureCategory::Align;
    }
    let base = OFFSET_SUFFIXES.iter().find_map(|s| name.strip_suffix(s)).unwrap_or(name);
    if TRAFFIC_FEATURES.contains(&base) {
        FeatureCategory::Condi
    } else {
        FeatureCategory::Other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub key: UnitKey,
    pub crash_id: Option<String>,
    /// At most one crash type is active per unit.
    pub treatment: Option<CrashType>,
    pub features: Vec<f64>,
    /// Aligned with [`Panel::scenarios`]; `None` marks a cell outside coverage.
    pub outcomes: Vec<Option<f64>>,
}

impl PanelRow {
    pub fn treated_with(&self, ty: CrashType) -> bool {
        self.treatment == Some(ty)
    }
}

/// Ground truth carried only by synthetic panels. Estimation code never reads it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenColumns {
    /// True probability of any crash given covariates.
    pub e_any: Vec<f64>,
    /// True propensity of each type within its own analysis subset, `[type][row]`.
    pub e_type: [Vec<f64>; 3],
    /// True effect if treated with each type, `[type][scenario][row]`.
    pub tau: [Vec<Vec<f64>>; 3],
    /// Untreated potential outcome, `[scenario][row]`.
    pub y0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub feature_names: Vec<String>,
    pub scenarios: Vec<Scenario>,
    pub rows: Vec<PanelRow>,
    pub hidden: Option<HiddenColumns>,
}

impl Panel {
    pub fn new(feature_names: Vec<String>, scenarios: Vec<Scenario>) -> Self {
        Self { feature_names, scenarios, rows: Vec::new(), hidden: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for n in &self.feature_names {
            if !seen.insert(n) {
                return Err(Error::Schema(format!("duplicate feature `{n}`")));
            }
        }
        let mut sc = HashSet::new();
        for s in &self.scenarios {
            if !sc.insert(s) {
                return Err(Error::Schema(format!("duplicate scenario {}", s.column())));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.features.len() != self.feature_names.len() {
                return Err(Error::Schema(format!("row {i} has wrong feature count")));
            }
            if r.outcomes.len() != self.scenarios.len() {
                return Err(Error::Schema(format!("row {i} has wrong outcome count")));
            }
            if let Some(v) = r.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has non-finite feature {v}")));
            }
        }
        Ok(())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn scenario_index(&self, s: Scenario) -> Option<usize> {
        self.scenarios.iter().position(|&x| x == s)
    }

    pub fn categories(&self) -> Vec<FeatureCategory> {
        self.feature_names.iter().map(|n| category_of(n)).collect()
    }

    /// Rows entering the analysis for `ty`: its crashes plus all untreated units.
    pub fn analysis_rows(&self, ty: CrashType) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.treatment.is_none() || r.treatment == Some(ty))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn any_treatment(&self) -> Vec<f64> {
        self.rows.iter().map(|r| f64::from(u8::from(r.treatment.is_some()))).collect()
    }

    pub fn treatment_for(&self, ty: CrashType, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| f64::from(u8::from(self.rows[i].treated_with(ty)))).collect()
    }

    pub fn matrix(&self, rows: &[usize], vars: &[String]) -> Result<FeatureMatrix> {
        let idx = vars
            .iter()
            .map(|v| self.feature_index(v).ok_or_else(|| Error::Schema(format!("panel has no feature `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vars.is_empty() {
            return Ok(FeatureMatrix::empty_rows(rows.len()));
        }
        let mut data = Vec::with_capacity(rows.len() * idx.len());
        for &r in rows {
            let f = &self.rows[r].features;
            data.extend(idx.iter().map(|&j| f[j]));
        }
        FeatureMatrix::new(vars.to_vec(), data)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.feature_index(name).ok_or_else(|| Error::Schema(format!("panel has no feature `{name}`")))?;
        Ok(self.rows.iter().map(|r| r.features[j]).collect())
    }

    pub fn outcome(&self, row: usize, scenario: usize) -> Option<f64> {
        self.rows[row].outcomes[scenario]
    }

    pub fn hidden(&self) -> Result<&HiddenColumns> {
        self.hidden.as_ref().ok_or(Error::NotSynthetic)
    }

    /// Subset of rows, carrying hidden columns along when present.
    pub fn subset(&self, rows: &[usize]) -> Panel {
        let hidden = self.hidden.as_ref().map(|h| HiddenColumns {
            e_any: rows.iter().map(|&i| h.e_any[i]).collect(),
            e_type: std::array::from_fn(|t| rows.iter().map(|&i| h.e_type[t][i]).collect()),
            tau: std::array::from_fn(|t| h.tau[t].iter().map(|col| rows.iter().map(|&i| col[i]).collect()).collect()),
            y0: h.y0.iter().map(|col| rows.iter().map(|&i| col[i]).collect()).collect(),
        });
        Panel {
            feature_names: self.feature_names.clone(),
            scenarios: self.scenarios.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            hidden,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> =
            ["unit_s", "unit_t", "unit_dir", "crash_id"].iter().map(|s| s.to_string()).collect();
        header.extend(CrashType::ALL.iter().map(|t| t.column().to_string()));
        header.extend(self.feature_names.iter().cloned());
        header.extend(self.scenarios.iter().map(|s| s.column()));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.key.milepost.to_string(),
                r.key.slot.to_string(),
                r.key.direction.to_string(),
                r.crash_id.clone().unwrap_or_default(),
            ];
            rec.extend(CrashType::ALL.iter().map(|&t| u8::from(r.treated_with(t)).to_string()));
            rec.extend(r.features.iter().map(|v| fmt_num(*v)));
            rec.extend(r.outcomes.iter().map(|o| o.map(fmt_num).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Panel> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn { column: name.to_string(), path: path.display().to_string() })
        };
        let (c_s, c_t, c_dir, c_id) = (col("unit_s")?, col("unit_t")?, col("unit_dir")?, col("crash_id")?);
        let c_types = CrashType::ALL.iter().map(|t| col(t.column())).collect::<Result<Vec<_>>>()?;
        let reserved: HashSet<usize> = [c_s, c_t, c_dir, c_id].into_iter().chain(c_types.iter().copied()).collect();
        let mut feat_cols = Vec::new();
        let mut out_cols = Vec::new();
        for (j, h) in header.iter().enumerate() {
            if reserved.contains(&j) {
                continue;
            }
            match Scenario::parse_column(h) {
                Some(s) => out_cols.push((j, s)),
                None => feat_cols.push(j),
            }
        }
        let mut panel = Panel::new(
            feat_cols.iter().map(|&j| header[j].clone()).collect(),
            out_cols.iter().map(|&(_, s)| s).collect(),
        );
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::InvalidInput(format!("{}: line {}: bad {what}", path.display(), line + 2));
            let num = |j: usize| -> Result<f64> { rec[j].trim().parse::<f64>().map_err(|_| bad(&header[j])) };
            let key = UnitKey {
                milepost: rec[c_s].trim().parse().map_err(|_| bad("unit_s"))?,
                slot: rec[c_t].trim().parse().map_err(|_| bad("unit_t"))?,
                direction: rec[c_dir].parse()?,
            };
            let mut treatment = None;
            for (k, &j) in c_types.iter().enumerate() {
                if num(j)? != 0.0 {
                    if treatment.is_some() {
                        return Err(bad("treatment: more than one crash type set"));
                    }
                    treatment = Some(CrashType::ALL[k]);
                }
            }
            let features = feat_cols.iter().map(|&j| num(j)).collect::<Result<Vec<_>>>()?;
            let outcomes = out_cols
                .iter()
                .map(|&(j, _)| {
                    let s = rec[j].trim();
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.parse::<f64>().map(Some).map_err(|_| bad(&header[j]))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let id = rec[c_id].trim();
            panel.rows.push(PanelRow {
                key,
                crash_id: (!id.is_empty()).then(|| id.to_string()),
                treatment,
                features,
                outcomes,
            });
        }
        panel.validate()?;
        Ok(panel)
    }
}

/// Shortest round-tripping decimal representation.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_boundaries() {
        assert_eq!(Period::of_minute_of_day(6 * 60 + 29), Period::OffPeak);
        assert_eq!(Period::of_minute_of_day(6 * 60 + 30), Period::Peak);
        assert_eq!(Period::of_minute_of_day(9 * 60), Period::OffPeak);
        assert_eq!(Period::of_minute_of_day(16 * 60 + 40), Period::Peak);
        assert_eq!(Period::of_minute_of_day(19 * 60 + 30), Period::OffPeak);
        assert_eq!(Period::of_minute_of_day(23 * 60), Period::Night);
        assert_eq!(Period::of_minute_of_day(3 * 60 + 59), Period::Night);
        assert_eq!(Period::of_minute_of_day(4 * 60), Period::OffPeak);
    }

    #[test]
    fn weekday_epoch_is_thursday() {
        assert_eq!(weekday_of_slot(0), 3);
        assert_eq!(weekday_of_slot(SLOTS_PER_DAY * 4), 0);
        assert_eq!(weekday_of_slot(-1), 2);
    }

    #[test]
    fn scenario_columns_round_trip() {
        for s in Scenario::grid() {
            assert_eq!(Scenario::parse_column(&s.column()), Some(s));
        }
        assert_eq!(Scenario::new(5, -1).column(), "y_5_-1");
        assert_eq!(Scenario::grid().len(), 30);
    }

    #[test]
    fn categories_follow_feature_table() {
        assert_eq!(category_of("week"), FeatureCategory::Basic);
        assert_eq!(category_of("pct_grad"), FeatureCategory::Align);
        assert_eq!(category_of("ci_up_1"), FeatureCategory::Condi);
        assert_eq!(category_of("spd_diff_down_2"), FeatureCategory::Condi);
        assert_eq!(category_of("x_null_1"), FeatureCategory::Other);
    }

    #[test]
    fn csv_round_trip_keeps_missing_outcomes() {
        let mut p = Panel::new(vec!["vol".into(), "ci_up_1".into()], vec![Scenario::new(5, 0), Scenario::new(5, -1)]);
        p.rows.push(PanelRow {
            key: UnitKey { milepost: 150, slot: 1000, direction: Direction::S },
            crash_id: Some("c1".into()),
            treatment: Some(CrashType::Wipe),
            features: vec![220.0, 0.25],
            outcomes: vec![Some(41.5), None],
        });
        p.rows.push(PanelRow {
            key: UnitKey { milepost: 151, slot: 1001, direction: Direction::N },
            crash_id: None,
            treatment: None,
            features: vec![180.0, 0.0],
            outcomes: vec![Some(63.0), Some(64.25)],
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        p.write_csv(&path).unwrap();
        let q = Panel::read_csv(&path).unwrap();
        assert_eq!(p, q);
    }
}
