//! Raw detector, crash and alignment tables for exercising ingest end to end.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use super::DecayProfile;
use crate::error::{Error, Result};
use crate::ingest::{AlignmentPoint, CrashEvent, DetectorReading, Orientation};
use crate::panel::{fmt_num, CrashType, Direction, Period, Scenario, SLOTS_PER_DAY, SLOT_MINUTES};
use crate::rng::{stream_rng, SYNTH_GEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub seed: u64,
    pub first_milepost: i32,
    pub n_miles: i32,
    pub detectors_per_mile: usize,
    /// Day index (days since 1970-01-01) of the first reading.
    pub first_day: i64,
    pub n_days: i64,
    /// Crashes are placed only in this day range, relative to `first_day`,
    /// leaving room for matched weeks on either side.
    pub crash_days: (i64, i64),
    pub n_crashes: usize,
    pub type_shares: [f64; 3],
    pub free_flow: f64,
    /// Peak-hour speed drop, mph.
    pub peak_drop: f64,
    pub noise_sd: f64,
    /// Peak crash-induced drop per type, mph.
    pub crash_drop: [f64; 3],
    pub decay: DecayProfile,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            first_milepost: 140,
            n_miles: 12,
            detectors_per_mile: 2,
            first_day: 18_262,
            n_days: 35,
            crash_days: (14, 21),
            n_crashes: 60,
            type_shares: [0.5, 0.2, 0.3],
            free_flow: 65.0,
            peak_drop: 18.0,
            noise_sd: 2.0,
            crash_drop: [15.0, 10.0, 12.0],
            decay: DecayProfile {
                spatial_miles: 1.5,
                peak_minutes: 10.0,
                wave_minutes_per_mile: 5.0,
                recovery_minutes: 40.0,
                onset_floor: 0.6,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub readings: Vec<DetectorReading>,
    pub crashes: Vec<CrashEvent>,
    pub alignment: Vec<AlignmentPoint>,
}

const DIRS: [Direction; 2] = [Direction::N, Direction::S];

fn peak_shape(minute_of_day: i64) -> f64 {
    let m = minute_of_day as f64;
    let bump = |c: f64, w: f64| (-((m - c) / w).powi(2)).exp();
    bump(465.0, 50.0) + bump(1085.0, 60.0)
}

/// Detector speeds follow a daily profile with random noise; each crash
/// lowers speeds at and upstream of its mile for an hour.
pub fn generate_raw(cfg: &RawConfig) -> Result<RawData> {
    if cfg.n_miles < 6 || cfg.detectors_per_mile == 0 || cfg.n_days <= 0 {
        return Err(Error::InvalidInput("raw generator needs >= 6 miles, detectors and days".into()));
    }
    if !(0 <= cfg.crash_days.0 && cfg.crash_days.0 < cfg.crash_days.1 && cfg.crash_days.1 <= cfg.n_days) {
        return Err(Error::InvalidInput("crash_days must lie inside the generated days".into()));
    }
    let mut rng = stream_rng(cfg.seed, SYNTH_GEN, u64::MAX);
    let n_slots = cfg.n_days * SLOTS_PER_DAY;
    let first_slot = cfg.first_day * SLOTS_PER_DAY;
    let nm = cfg.n_miles as usize;
    let nd = cfg.detectors_per_mile;
    let idx = |d: usize, mile: usize, det: usize, s: i64| ((d * nm + mile) * nd + det) * n_slots as usize + s as usize;
    let noise = Normal::new(0.0, cfg.noise_sd.max(1e-9)).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mile_offset: Vec<f64> = (0..nm).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut speed = vec![0.0; 2 * nm * nd * n_slots as usize];
    for d in 0..2 {
        for mile in 0..nm {
            for det in 0..nd {
                for s in 0..n_slots {
                    let mod_ = (s % SLOTS_PER_DAY) * SLOT_MINUTES;
                    speed[idx(d, mile, det, s)] =
                        cfg.free_flow + mile_offset[mile] - cfg.peak_drop * peak_shape(mod_) + noise.sample(&mut rng);
                }
            }
        }
    }

    // crashes lean towards peak periods, at least 3 miles from the upstream edge
    let total: f64 = cfg.type_shares.iter().sum();
    let orient = Orientation::default();
    let mut crashes = Vec::with_capacity(cfg.n_crashes);
    let mut candidates: Vec<i64> = (cfg.crash_days.0 * SLOTS_PER_DAY..cfg.crash_days.1 * SLOTS_PER_DAY).collect();
    candidates.shuffle(&mut rng);
    let mut ci = 0;
    while crashes.len() < cfg.n_crashes && ci < candidates.len() {
        let s = candidates[ci];
        ci += 1;
        let p_accept = if Period::of_slot(s) == Period::Peak { 1.0 } else { 0.35 };
        if rng.random::<f64>() >= p_accept {
            continue;
        }
        let d = rng.random_range(0..2usize);
        let dir = DIRS[d];
        let up = orient.up_step(dir);
        // mile index range keeping 3 upstream miles inside the corridor
        let (lo, hi) = if up < 0 { (3, nm) } else { (0, nm - 3) };
        let mile = rng.random_range(lo..hi);
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut ty = CrashType::Rear;
        for t in CrashType::ALL {
            acc += cfg.type_shares[t.index()];
            if u < acc {
                ty = t;
                break;
            }
        }
        let minute = rng.random_range(0..SLOT_MINUTES);
        crashes.push(CrashEvent {
            id: format!("c{:04}", crashes.len()),
            timestamp: (first_slot + s) * SLOT_MINUTES + minute,
            milepost: f64::from(cfg.first_milepost + mile as i32) + rng.random_range(0.0..1.0),
            direction: dir,
            crash_type: ty,
            excluded: None,
        });
        for k in 0..=5i32 {
            let m = mile as i32 + k * up;
            if m < 0 || m >= cfg.n_miles {
                continue;
            }
            for step in 0..=12i64 {
                let t = s + step;
                if t >= n_slots {
                    break;
                }
                let w = cfg.decay.weight(Scenario::new((step * SLOT_MINUTES) as u32, -k));
                for det in 0..nd {
                    speed[idx(d, m as usize, det, t)] -= cfg.crash_drop[ty.index()] * w;
                }
            }
        }
    }
    crashes.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.id.cmp(&b.id)));

    let mut readings = Vec::with_capacity(speed.len());
    for s in 0..n_slots {
        for (d, &dir) in DIRS.iter().enumerate() {
            for mile in 0..nm {
                for det in 0..nd {
                    let spd = speed[idx(d, mile, det, s)].max(3.0);
                    let flow = 12.0 + 20.0 * peak_shape((s % SLOTS_PER_DAY) * SLOT_MINUTES);
                    let vol = (flow * (1.0 + 0.1 * noise.sample(&mut rng) / cfg.noise_sd.max(1e-9))).max(0.0).round();
                    let occ = (vol / spd.max(5.0) * 0.12).clamp(0.0, 1.0);
                    readings.push(DetectorReading {
                        timestamp: (first_slot + s) * SLOT_MINUTES,
                        milepost: f64::from(cfg.first_milepost + mile as i32) + (det as f64 + 0.5) / nd as f64,
                        direction: dir,
                        lane: "1".into(),
                        vol,
                        occ: (occ * 1e4).round() / 1e4,
                        spd: (spd * 100.0).round() / 100.0,
                    });
                }
            }
        }
    }

    let alignment = (0..nm)
        .map(|mile| AlignmentPoint {
            milepost: f64::from(cfg.first_milepost + mile as i32) + 0.5,
            lanewid: 12.0,
            medwid: rng.random_range(10.0..60.0_f64).round(),
            shlwid: rng.random_range(4.0..10.0_f64).round(),
            no_lane: *[2u8, 3, 4].choose(&mut rng).expect("non-empty"),
            curv_max: (rng.random_range(0.0..3.0_f64) * 100.0).round() / 100.0,
            deg_curv: (rng.random_range(0.0..2.0_f64) * 100.0).round() / 100.0,
            pct_grad: (rng.random_range(-3.0..3.0_f64) * 100.0).round() / 100.0,
            dir_grad: f64::from(rng.random_range(0..2u8)),
        })
        .collect();
    Ok(RawData { readings, crashes, alignment })
}

impl RawData {
    /// `traffic.csv`, `crashes.csv` and `alignment.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("traffic.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["timestamp", "milepost", "direction", "lane", "vol", "occ", "spd"])?;
        for r in &self.readings {
            w.write_record([
                r.timestamp.to_string(),
                fmt_num(r.milepost),
                r.direction.to_string(),
                r.lane.clone(),
                fmt_num(r.vol),
                fmt_num(r.occ),
                fmt_num(r.spd),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;

        let p = dir.join("crashes.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["id", "timestamp", "milepost", "direction", "crash_type"])?;
        for c in &self.crashes {
            w.write_record([
                c.id.clone(),
                c.timestamp.to_string(),
                fmt_num(c.milepost),
                c.direction.to_string(),
                c.crash_type.label().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;

        let p = dir.join("alignment.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record([
            "milepost", "lanewid", "medwid", "shlwid", "no_lane", "curv_max", "deg_curv", "pct_grad", "dir_grad",
        ])?;
        for a in &self.alignment {
            let v = a.values();
            let mut rec = vec![fmt_num(a.milepost)];
            rec.extend(v.iter().map(|x| fmt_num(*x)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))
    }
}
