//! Seeded semisynthetic panels with known propensity, outcome and effect
//! functions.

mod raw;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution as _, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use raw::{generate_raw, RawConfig, RawData};

use crate::error::{Error, Result};
use crate::panel::{fmt_num, CrashType, Direction, HiddenColumns, Panel, PanelRow, Scenario, UnitKey};
use crate::rng::{stream_rng, SYNTH_GEN};

/// Rows generated from one random stream.
pub const CHUNK_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Confounder,
    OutcomePredictor,
    TreatmentPredictor,
    Null,
}

impl Role {
    fn may_drive_treatment(self) -> bool {
        matches!(self, Role::Confounder | Role::TreatmentPredictor)
    }

    fn may_drive_outcome(self) -> bool {
        matches!(self, Role::Confounder | Role::OutcomePredictor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub role: Role,
    pub dist: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySpec {
    Constant { p: f64 },
    Logistic { intercept: f64, coef: BTreeMap<String, f64> },
}

/// `base + sum(coef * x)`, the untreated mean speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub base: f64,
    #[serde(default)]
    pub coef: BTreeMap<String, f64>,
}

/// Congestion build-up and recovery over (dur, dis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayProfile {
    /// e-folding distance upstream, miles.
    pub spatial_miles: f64,
    /// Minutes to the peak at the crash location.
    pub peak_minutes: f64,
    /// Extra delay of the peak per mile upstream.
    pub wave_minutes_per_mile: f64,
    /// e-folding recovery time after the peak.
    pub recovery_minutes: f64,
    /// Share of the peak already present at dur = 0.
    pub onset_floor: f64,
}

impl DecayProfile {
    pub fn weight(&self, s: Scenario) -> f64 {
        let k = f64::from(s.dis.unsigned_abs());
        let dur = f64::from(s.dur);
        let peak = self.peak_minutes + self.wave_minutes_per_mile * k;
        let temporal = if dur <= peak {
            self.onset_floor + (1.0 - self.onset_floor) * dur / peak
        } else {
            (-(dur - peak) / self.recovery_minutes).exp()
        };
        (-k / self.spatial_miles).exp() * temporal
    }
}

/// `scale[type] * decay(dur, dis) * (intercept + sum(coef * x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauSpec {
    pub intercept: f64,
    #[serde(default)]
    pub coef: BTreeMap<String, f64>,
    #[serde(default = "unit_scale")]
    pub type_scale: [f64; 3],
    #[serde(default)]
    pub decay: Option<DecayProfile>,
}

fn unit_scale() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub features: Vec<FeatureSpec>,
    pub propensity: PropensitySpec,
    /// Crash type mix among treated rows, REAR/OBJ/WIPE.
    pub type_shares: [f64; 3],
    pub outcome: OutcomeSpec,
    pub tau: TauSpec,
    pub noise_sd: f64,
    #[serde(default = "Scenario::grid")]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Constant propensity.
    Randomized,
    /// Logistic propensity, linear outcome, constant effect.
    ConfoundedLinear,
    /// Logistic propensity, linear effect with a spatiotemporal decay.
    ConfoundedHeterogeneous,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "randomized" => Ok(Preset::Randomized),
            "b" | "confounded_linear" => Ok(Preset::ConfoundedLinear),
            "c" | "confounded_heterogeneous" => Ok(Preset::ConfoundedHeterogeneous),
            other => Err(Error::InvalidInput(format!("unknown synthetic preset `{other}`"))),
        }
    }
}

fn normal(name: &str, role: Role) -> FeatureSpec {
    FeatureSpec { name: name.into(), role, dist: Distribution::Normal { mean: 0.0, sd: 1.0 } }
}

fn coefs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Two variables of each role: `x_c*`, `x_o*`, `x_t*`, `x_n*`.
pub fn planted_features() -> Vec<FeatureSpec> {
    vec![
        normal("x_c1", Role::Confounder),
        normal("x_c2", Role::Confounder),
        normal("x_o1", Role::OutcomePredictor),
        normal("x_o2", Role::OutcomePredictor),
        normal("x_t1", Role::TreatmentPredictor),
        normal("x_t2", Role::TreatmentPredictor),
        normal("x_n1", Role::Null),
        normal("x_n2", Role::Null),
    ]
}

impl SynthConfig {
    pub fn preset(p: Preset, n_rows: usize, seed: u64) -> Self {
        let features = planted_features();
        let outcome =
            OutcomeSpec { base: 60.0, coef: coefs(&[("x_c1", 5.0), ("x_c2", 4.0), ("x_o1", 4.0), ("x_o2", 3.0)]) };
        let logistic = PropensitySpec::Logistic {
            intercept: -0.3,
            coef: coefs(&[("x_c1", 0.6), ("x_c2", 0.6), ("x_t1", 1.0), ("x_t2", 1.0)]),
        };
        match p {
            Preset::Randomized => SynthConfig {
                n_rows,
                seed,
                features,
                propensity: PropensitySpec::Constant { p: 0.5 },
                type_shares: [1.0, 0.0, 0.0],
                outcome,
                tau: TauSpec { intercept: -12.0, coef: BTreeMap::new(), type_scale: unit_scale(), decay: None },
                noise_sd: 3.0,
                scenarios: Scenario::grid(),
            },
            Preset::ConfoundedLinear => SynthConfig {
                n_rows,
                seed,
                features,
                propensity: logistic,
                type_shares: [1.0, 0.0, 0.0],
                outcome,
                tau: TauSpec { intercept: -12.0, coef: BTreeMap::new(), type_scale: unit_scale(), decay: None },
                noise_sd: 3.0,
                scenarios: Scenario::grid(),
            },
            Preset::ConfoundedHeterogeneous => SynthConfig {
                n_rows,
                seed,
                features,
                propensity: logistic,
                type_shares: [0.5, 0.2, 0.3],
                outcome,
                tau: TauSpec {
                    intercept: -16.0,
                    coef: coefs(&[("x_c1", 2.0), ("x_o1", -1.5)]),
                    type_scale: [1.0, 0.65, 0.8],
                    decay: Some(DecayProfile {
                        spatial_miles: 1.5,
                        peak_minutes: 10.0,
                        wave_minutes_per_mile: 5.0,
                        recovery_minutes: 60.0,
                        onset_floor: 0.6,
                    }),
                },
                noise_sd: 3.0,
                scenarios: Scenario::grid(),
            },
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.features.iter().filter(|f| f.role == role).map(|f| f.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_rows == 0 {
            return bad("n_rows must be positive".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be finite and >= 0", self.noise_sd));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return bad(format!("duplicate feature `{}`", f.name));
            }
            let ok = match f.dist {
                Distribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
                Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
                Distribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return bad(format!("bad distribution for `{}`", f.name));
            }
        }
        let role = |name: &str| self.features.iter().find(|f| f.name == name).map(|f| f.role);
        let check = |coef: &BTreeMap<String, f64>, what: &str, allowed: fn(Role) -> bool| -> Result<()> {
            for (k, v) in coef {
                let Some(r) = role(k) else {
                    return Err(Error::InvalidInput(format!("{what} refers to unknown feature `{k}`")));
                };
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("{what} coefficient of `{k}` is not finite")));
                }
                if *v != 0.0 && !allowed(r) {
                    return Err(Error::InvalidInput(format!("{what} uses `{k}`, whose role is {r:?}")));
                }
            }
            Ok(())
        };
        match &self.propensity {
            PropensitySpec::Constant { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidInput(format!("constant propensity {p} leaves an arm empty")));
                }
            }
            PropensitySpec::Logistic { intercept, coef } => {
                if !intercept.is_finite() {
                    return bad("propensity intercept is not finite".into());
                }
                check(coef, "propensity", Role::may_drive_treatment)?;
            }
        }
        check(&self.outcome.coef, "outcome", Role::may_drive_outcome)?;
        check(&self.tau.coef, "effect", Role::may_drive_outcome)?;
        if self.type_shares.iter().any(|s| s.is_nan() || *s < 0.0) || self.type_shares.iter().sum::<f64>() <= 0.0 {
            return bad("type_shares must be non-negative with a positive sum".into());
        }
        if self.scenarios.is_empty() {
            return bad("no outcome scenarios".into());
        }
        if self.scenarios.iter().collect::<HashSet<_>>().len() != self.scenarios.len() {
            return bad("duplicate outcome scenario".into());
        }
        Ok(())
    }

    fn dot(&self, coef: &BTreeMap<String, f64>, x: &[f64]) -> f64 {
        self.features.iter().zip(x).map(|(f, v)| coef.get(&f.name).map_or(0.0, |b| b * v)).sum()
    }

    /// True probability of any crash at `x` (feature order of the config).
    pub fn propensity_at(&self, x: &[f64]) -> f64 {
        match &self.propensity {
            PropensitySpec::Constant { p } => *p,
            PropensitySpec::Logistic { intercept, coef } => 1.0 / (1.0 + (-(intercept + self.dot(coef, x))).exp()),
        }
    }

    pub fn outcome_mean_at(&self, x: &[f64]) -> f64 {
        self.outcome.base + self.dot(&self.outcome.coef, x)
    }

    fn decay(&self, s: Scenario) -> f64 {
        self.tau.decay.map_or(1.0, |d| d.weight(s))
    }

    /// True effect of a `ty` crash at `x` on the `s` outcome.
    pub fn tau_at(&self, ty: CrashType, s: Scenario, x: &[f64]) -> f64 {
        self.tau.type_scale[ty.index()] * self.decay(s) * (self.tau.intercept + self.dot(&self.tau.coef, x))
    }

    /// Intercept and slopes of the effect, linear in the features.
    pub fn tau_coefficients(&self, ty: CrashType, s: Scenario) -> (f64, BTreeMap<String, f64>) {
        let k = self.tau.type_scale[ty.index()] * self.decay(s);
        let slopes = self
            .features
            .iter()
            .map(|f| (f.name.clone(), k * self.tau.coef.get(&f.name).copied().unwrap_or(0.0)))
            .collect();
        (k * self.tau.intercept, slopes)
    }

    /// Propensity of a `ty` crash among that type's crashes and untreated rows.
    fn type_propensity(&self, e: f64, ty: CrashType) -> f64 {
        let share = self.type_shares[ty.index()] / self.type_shares.iter().sum::<f64>();
        let a = e * share;
        if a == 0.0 {
            0.0
        } else {
            a / (a + 1.0 - e)
        }
    }
}

/// Unit key of generated row `i`: 200 mileposts, both directions, hourly slots.
pub fn synthetic_key(i: usize) -> UnitKey {
    UnitKey {
        milepost: 100 + (i % 200) as i32,
        direction: if (i / 200).is_multiple_of(2) { Direction::N } else { Direction::S },
        slot: (i / 400) as i64 * 12,
    }
}

struct GenRow {
    x: Vec<f64>,
    e: f64,
    treatment: Option<CrashType>,
    y0: Vec<f64>,
}

fn draw(d: &Distribution, rng: &mut impl Rng) -> f64 {
    match *d {
        Distribution::Normal { mean, sd } => {
            if sd == 0.0 {
                mean
            } else {
                Normal::new(mean, sd).expect("validated").sample(rng)
            }
        }
        Distribution::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
        Distribution::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
    }
}

fn generate_chunk(cfg: &SynthConfig, chunk: usize) -> Vec<GenRow> {
    let mut rng = stream_rng(cfg.seed, SYNTH_GEN, chunk as u64);
    let lo = chunk * CHUNK_ROWS;
    let hi = (lo + CHUNK_ROWS).min(cfg.n_rows);
    let total: f64 = cfg.type_shares.iter().sum();
    let noise = (cfg.noise_sd > 0.0).then(|| Normal::new(0.0, cfg.noise_sd).expect("validated"));
    (lo..hi)
        .map(|_| {
            let x: Vec<f64> = cfg.features.iter().map(|f| draw(&f.dist, &mut rng)).collect();
            let e = cfg.propensity_at(&x);
            let treated = rng.random::<f64>() < e;
            let u: f64 = rng.random::<f64>() * total;
            let treatment = treated.then(|| {
                let mut acc = 0.0;
                for t in CrashType::ALL {
                    acc += cfg.type_shares[t.index()];
                    if u < acc && cfg.type_shares[t.index()] > 0.0 {
                        return t;
                    }
                }
                *CrashType::ALL.iter().rev().find(|t| cfg.type_shares[t.index()] > 0.0).expect("positive share")
            });
            let m = cfg.outcome_mean_at(&x);
            let y0 = cfg.scenarios.iter().map(|_| m + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng))).collect();
            GenRow { x, e, treatment, y0 }
        })
        .collect()
}

/// Draw a panel. Hidden columns hold the true propensities, effects and the
/// untreated potential outcome.
pub fn generate(cfg: &SynthConfig) -> Result<Panel> {
    cfg.validate()?;
    let n_chunks = cfg.n_rows.div_ceil(CHUNK_ROWS);
    let rows: Vec<GenRow> = (0..n_chunks)
        .into_par_iter()
        .map(|c| generate_chunk(cfg, c))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let n_treated = rows.iter().filter(|r| r.treatment.is_some()).count();
    if n_treated == 0 || n_treated == rows.len() {
        return Err(Error::SingleClass(format!("{n_treated} of {} rows treated", rows.len())));
    }
    let ns = cfg.scenarios.len();
    let mut hidden = HiddenColumns {
        e_any: Vec::with_capacity(rows.len()),
        e_type: Default::default(),
        tau: std::array::from_fn(|_| vec![Vec::with_capacity(rows.len()); ns]),
        y0: vec![Vec::with_capacity(rows.len()); ns],
    };
    let mut panel = Panel::new(cfg.feature_names(), cfg.scenarios.clone());
    for (i, g) in rows.into_iter().enumerate() {
        hidden.e_any.push(g.e);
        let mut outcomes = Vec::with_capacity(ns);
        for (k, &s) in cfg.scenarios.iter().enumerate() {
            let mut y = g.y0[k];
            for ty in CrashType::ALL {
                let tau = cfg.tau_at(ty, s, &g.x);
                hidden.tau[ty.index()][k].push(tau);
                if g.treatment == Some(ty) {
                    y += tau;
                }
            }
            hidden.y0[k].push(g.y0[k]);
            outcomes.push(Some(y));
        }
        for ty in CrashType::ALL {
            hidden.e_type[ty.index()].push(cfg.type_propensity(g.e, ty));
        }
        panel.rows.push(PanelRow {
            key: synthetic_key(i),
            crash_id: g.treatment.map(|_| format!("syn{i}")),
            treatment: g.treatment,
            features: g.x,
            outcomes,
        });
    }
    panel.hidden = Some(hidden);
    panel.validate()?;
    Ok(panel)
}

/// Mean true effect over the analysis rows of `ty` (its crashes and all
/// untreated rows).
pub fn oracle_ate(panel: &Panel, ty: CrashType, s: Scenario) -> Result<f64> {
    let h = panel.hidden()?;
    let k = scenario_of(panel, s)?;
    let rows = panel.analysis_rows(ty);
    if rows.is_empty() {
        return Err(Error::Empty("no analysis rows".into()));
    }
    Ok(rows.iter().map(|&r| h.tau[ty.index()][k][r]).sum::<f64>() / rows.len() as f64)
}

/// True effect at panel row `row`.
pub fn oracle_cate(panel: &Panel, ty: CrashType, s: Scenario, row: usize) -> Result<f64> {
    let h = panel.hidden()?;
    let k = scenario_of(panel, s)?;
    h.tau[ty.index()][k].get(row).copied().ok_or_else(|| Error::InvalidInput(format!("row {row} out of range")))
}

fn scenario_of(panel: &Panel, s: Scenario) -> Result<usize> {
    panel.scenario_index(s).ok_or_else(|| Error::Schema(format!("panel has no outcome {}", s.column())))
}

fn tau_column(ty: CrashType, s: Scenario) -> String {
    format!("tau_{}_{}_{}", ty.label(), s.dur, s.dis)
}

fn y0_column(s: Scenario) -> String {
    format!("y0_{}_{}", s.dur, s.dis)
}

/// Hidden columns keyed by unit, in panel row order.
pub fn write_hidden_csv(panel: &Panel, path: &Path) -> Result<()> {
    let h = panel.hidden()?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["unit_s", "unit_t", "unit_dir", "e_any"].iter().map(|s| s.to_string()).collect();
    header.extend(CrashType::ALL.iter().map(|t| format!("e_{}", t.label())));
    for t in CrashType::ALL {
        header.extend(panel.scenarios.iter().map(|&s| tau_column(t, s)));
    }
    header.extend(panel.scenarios.iter().map(|&s| y0_column(s)));
    w.write_record(&header)?;
    for (i, r) in panel.rows.iter().enumerate() {
        let mut rec =
            vec![r.key.milepost.to_string(), r.key.slot.to_string(), r.key.direction.to_string(), fmt_num(h.e_any[i])];
        rec.extend(CrashType::ALL.iter().map(|t| fmt_num(h.e_type[t.index()][i])));
        for t in CrashType::ALL {
            rec.extend(h.tau[t.index()].iter().map(|c| fmt_num(c[i])));
        }
        rec.extend(h.y0.iter().map(|c| fmt_num(c[i])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Attach hidden columns written by [`write_hidden_csv`]; rows must line up
/// with the panel's units.
pub fn read_hidden_csv(panel: &mut Panel, path: &Path) -> Result<()> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { column: name.to_string(), path: path.display().to_string() })
    };
    let e_any = col("e_any")?;
    let e_type = CrashType::ALL.iter().map(|t| col(&format!("e_{}", t.label()))).collect::<Result<Vec<_>>>()?;
    let tau = CrashType::ALL
        .iter()
        .map(|&t| panel.scenarios.iter().map(|&s| col(&tau_column(t, s))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let y0 = panel.scenarios.iter().map(|&s| col(&y0_column(s))).collect::<Result<Vec<_>>>()?;
    let (cs, ct, cd) = (col("unit_s")?, col("unit_t")?, col("unit_dir")?);
    let ns = panel.scenarios.len();
    let mut h = HiddenColumns {
        e_any: Vec::new(),
        e_type: Default::default(),
        tau: std::array::from_fn(|_| vec![Vec::new(); ns]),
        y0: vec![Vec::new(); ns],
    };
    let mut n = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::InvalidInput(format!("{}: line {}: {what}", path.display(), line + 2));
        let num = |j: usize| rec[j].trim().parse::<f64>().map_err(|_| bad(&format!("bad {}", header[j])));
        let Some(row) = panel.rows.get(n) else {
            return Err(bad("more hidden rows than panel rows"));
        };
        let key = (rec[cs].trim(), rec[ct].trim(), rec[cd].trim());
        if key
            != (
                row.key.milepost.to_string().as_str(),
                row.key.slot.to_string().as_str(),
                row.key.direction.to_string().as_str(),
            )
        {
            return Err(bad("unit does not match the panel row"));
        }
        h.e_any.push(num(e_any)?);
        for t in 0..3 {
            h.e_type[t].push(num(e_type[t])?);
            for (col, v) in h.tau[t].iter_mut().zip(&tau[t]) {
                col.push(num(*v)?);
            }
        }
        for (col, v) in h.y0.iter_mut().zip(&y0) {
            col.push(num(*v)?);
        }
        n += 1;
    }
    if n != panel.len() {
        return Err(Error::Schema(format!("{n} hidden rows for {} panel rows", panel.len())));
    }
    panel.hidden = Some(h);
    Ok(())
}
