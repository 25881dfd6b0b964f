//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use crashdrl::drl::{
    bootstrap, clip, dr_ate, estimate_grid, estimate_with_scores, fit_propensity, pseudo_outcome, summarize, CateGrid,
    DrlConfig,
};
use crashdrl::learners::{
    classification_metrics, fit, regression_metrics, Dataset, Hyperparams, LearnerKind, LearnerSpec, Task,
};
use crashdrl::panel::{DISTANCES, DURATIONS};
use crashdrl::rng::stream_rng;
use crashdrl::shapley::{explain, ShapConfig};
use crashdrl::synth::{generate, oracle_ate, Preset, SynthConfig};
use crashdrl::validate::{match_counterfactuals, matched_effect, MatchConfig};
use crashdrl::{CrashType, Direction, FeatureMatrix, Panel, Scenario, UnitKey};
use crashdrl_cli::{cmd_pipeline, cmd_select, cmd_sweep, cmd_synth, RunConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cheap_drl(b: usize) -> DrlConfig {
    DrlConfig {
        propensity: LearnerSpec::new(LearnerKind::LogisticRegression, Task::Classification),
        outcome: LearnerSpec::new(LearnerKind::LinearRegression, Task::Regression),
        bootstrap_b: b,
        ..DrlConfig::default()
    }
}

fn all_vars(panel: &Panel) -> Vec<String> {
    panel.feature_names.clone()
}

fn observed(panel: &Panel, rows: &[usize], si: usize) -> Vec<f64> {
    rows.iter().map(|&r| panel.outcome(r, si).expect("synthetic outcomes are complete")).collect()
}

fn c1_identities() -> Outcome {
    let cfg = SynthConfig::preset(Preset::ConfoundedLinear, 100, 1);
    let panel = generate(&cfg).map_err(|e| e.to_string())?;
    let h = panel.hidden().map_err(|e| e.to_string())?;
    let s = panel.scenarios[0];
    let rows: Vec<usize> = (0..panel.len()).collect();
    let t = panel.treatment_for(CrashType::Rear, &rows);
    let y = observed(&panel, &rows, 0);
    let mut bad = 0;
    for i in rows {
        let x = &panel.rows[i].features;
        let e = clip(h.e_any[i], 0.01);
        let mean0 = cfg.outcome_mean_at(x);
        let mean1 = mean0 + cfg.tau_at(CrashType::Rear, s, x);
        if t[i] == 1.0 {
            let (a, b) = pseudo_outcome(1.0, y[i], e, y[i], mean0);
            bad += usize::from(a != y[i] || b != mean0);
        } else {
            let (a, b) = pseudo_outcome(0.0, y[i], e, mean1, y[i]);
            bad += usize::from(a != mean1 || b != y[i]);
        }
    }
    check(bad == 0, format!("{bad} of 100 rows break an identity"))
}

fn c2_double_robustness() -> Outcome {
    let cfg = SynthConfig::preset(Preset::ConfoundedLinear, 10_000, 2);
    let panel = generate(&cfg).map_err(|e| e.to_string())?;
    let h = panel.hidden().map_err(|e| e.to_string())?;
    let ty = CrashType::Rear;
    let s = panel.scenarios[0];
    let rows = panel.analysis_rows(ty);
    let t = panel.treatment_for(ty, &rows);
    let y = observed(&panel, &rows, 0);
    let truth = oracle_ate(&panel, ty, s).map_err(|e| e.to_string())?;
    let eta = DrlConfig::default().eta;

    let e_true: Vec<f64> = rows.iter().map(|&r| clip(h.e_type[ty.index()][r], eta)).collect();
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let flat = vec![ybar; y.len()];
    let a = dr_ate(&t, &y, &e_true, &flat, &flat).map_err(|e| e.to_string())?;

    let m0: Vec<f64> = rows.iter().map(|&r| cfg.outcome_mean_at(&panel.rows[r].features)).collect();
    let m1: Vec<f64> = rows.iter().zip(&m0).map(|(&r, m)| m + cfg.tau_at(ty, s, &panel.rows[r].features)).collect();
    let b = dr_ate(&t, &y, &vec![0.5; y.len()], &m1, &m0).map_err(|e| e.to_string())?;

    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        if *ti == 1.0 {
            s1 += yi;
            n1 += 1.0;
        } else {
            s0 += yi;
            n0 += 1.0;
        }
    }
    let naive = s1 / n1 - s0 / n0;
    let (ea, eb, en) = ((a - truth).abs(), (b - truth).abs(), (naive - truth).abs());
    check(
        ea <= 0.5 && eb <= 0.5 && en > 2.0,
        format!("oracle {truth:.3}; |err| true e/wrong m {ea:.3}, true m/wrong e {eb:.3}, naive {en:.3}"),
    )
}

fn c3_heterogeneity() -> Outcome {
    let ty = CrashType::Rear;
    let s = Scenario::new(5, 0);
    let drl = cheap_drl(200);
    let reps = 20;
    let planted = ["intercept", "x_c1", "x_o1"];
    let mut covered = [0usize; 3];
    let mut zero_cover = (0usize, 0usize);
    for rep in 0..reps {
        let mut cfg = SynthConfig::preset(Preset::ConfoundedHeterogeneous, 3000, 300 + rep);
        cfg.scenarios = vec![s];
        let panel = generate(&cfg).map_err(|e| e.to_string())?;
        let vars = all_vars(&panel);
        let rows = panel.analysis_rows(ty);
        let t = panel.treatment_for(ty, &rows);
        let x = panel.matrix(&rows, &vars).map_err(|e| e.to_string())?;
        let y: Vec<Option<f64>> = rows.iter().map(|&r| panel.outcome(r, 0)).collect();
        let seed = 9000 + rep;
        let coefs = |x: &FeatureMatrix, t: &[f64], y: &[Option<f64>], seed: u64| -> crashdrl::Result<Vec<f64>> {
            let p = fit_propensity(x, t, &drl, seed)?;
            let f = estimate_with_scores(x, t, y, &p.scores, &drl, seed)?;
            let mut v = vec![f.cate.intercept];
            for n in x.names() {
                v.push(f.cate.coefficient(n).unwrap_or(f64::NAN));
            }
            Ok(v)
        };
        let point = coefs(&x, &t, &y, seed).map_err(|e| e.to_string())?;
        let draws = bootstrap(&t, drl.bootstrap_b, seed, |idx, rs| {
            let yb: Vec<Option<f64>> = idx.iter().map(|&i| y[i]).collect();
            let tb: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
            coefs(&x.select_rows(idx), &tb, &yb, rs)
        })
        .map_err(|e| e.to_string())?;
        let (b0, slopes) = cfg.tau_coefficients(ty, s);
        let truth: Vec<f64> =
            std::iter::once(b0).chain(vars.iter().map(|n| slopes.get(n).copied().unwrap_or(0.0))).collect();
        for (k, name) in std::iter::once("intercept").chain(vars.iter().map(String::as_str)).enumerate() {
            let iv = summarize(&draws.column(k), point[k]).ok_or("no finite draws")?;
            let inside = iv.low <= truth[k] && truth[k] <= iv.high;
            if let Some(j) = planted.iter().position(|p| *p == name) {
                covered[j] += usize::from(inside);
            } else {
                zero_cover.0 += usize::from(inside);
                zero_cover.1 += 1;
            }
        }
    }
    let detail = format!(
        "planted coverage of {reps}: intercept {}, x_c1 {}, x_o1 {}; zero slopes {}/{}",
        covered[0], covered[1], covered[2], zero_cover.0, zero_cover.1
    );
    check(covered.iter().all(|&c| c >= 18), detail)
}

const SELECTION_RUN: &str = r#"
out_dir = "out"

[synth]
preset = "confounded_heterogeneous"
n_rows = 2000

[selection]
params = { n_estimators = 60, max_depth = 8, min_samples_leaf = 5 }
shap_permutations = 32
shap_background = 64
shap_max_instances = 200

[drl]
propensity = "logistic_regression"
outcome = "linear_regression"

[matching]
validator = "oracle"
"#;

fn c4_csvi_selection() -> Outcome {
    let expected: BTreeSet<&str> = ["x_t1", "x_t2", "x_n1", "x_n2"].into();
    let mut good = 0;
    let mut picks = Vec::new();
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::from_toml(SELECTION_RUN).map_err(|e| e.to_string())?;
        cfg.resolve_paths(dir.path());
        cfg.seed = Some(1000 + seed);
        cmd_synth(&cfg).map_err(|e| e.to_string())?;
        cmd_select(&cfg).map_err(|e| e.to_string())?;
        cmd_sweep(&cfg).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(cfg.out_dir.join("sweep.csv")).map_err(|e| e.to_string())?;
        let best = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[7] == "1")
            .ok_or("no best row")?;
        let removed: BTreeSet<&str> = best[6].split(';').filter(|s| !s.is_empty()).collect();
        good += usize::from(removed == expected && best[5] == "4");
        picks.push(best[0].to_string());
    }
    check(good >= 8, format!("{good} of 10 seeds select exactly the planted set (best eps {})", picks.join(" ")))
}

fn c5_shapley() -> Outcome {
    let mut rng = stream_rng(5, "acceptance", 0);
    let n = 600;
    let names: Vec<String> = ["a", "b", "c", "null"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> =
        rows.iter().map(|r| 3.0 * r[0] + 2.0 * r[1] * r[1] - 1.5 * r[2] + rng.random_range(-0.1..0.1)).collect();
    let x = FeatureMatrix::from_rows(names, &rows).map_err(|e| e.to_string())?;
    let spec = LearnerSpec::new(LearnerKind::RandomForest, Task::Regression).with_params(Hyperparams {
        n_estimators: 50,
        max_depth: Some(8),
        ..Hyperparams::default()
    });
    let model = fit(&spec, &Dataset::new(x.clone(), y).map_err(|e| e.to_string())?, 5).map_err(|e| e.to_string())?;
    let first: Vec<usize> = (0..100).collect();
    let cfg = ShapConfig { n_permutations: 64, background_size: 128, max_instances: None };
    let rep = explain(&model, &x.select_rows(&first), &x, &cfg, 5).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut outside = 0;
    for i in 0..rep.values.len() {
        let gap = (rep.values[i].iter().sum::<f64>() - (rep.fx[i] - rep.base)).abs();
        let z = if rep.se[i] > 0.0 {
            gap / rep.se[i]
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
        outside += usize::from(z > 3.0);
    }
    let null_last = rep.mean_abs[3] < rep.mean_abs[..3].iter().copied().fold(f64::INFINITY, f64::min);
    check(
        outside == 0 && null_last && rep.values.len() == 100,
        format!("worst efficiency gap {worst:.2} SE over {} instances; null ranks last: {null_last}", rep.values.len()),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn c6_metrics() -> Outcome {
    let mut rng = stream_rng(6, "acceptance", 0);
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let actual: Vec<f64> =
            (0..n).map(|_| if rng.random_bool(0.05) { 0.0 } else { rng.random_range(-80.0..80.0) }).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-80.0..80.0)).collect();
        let r = regression_metrics(&pred, &actual).map_err(|e| e.to_string())?;
        let nf = n as f64;
        let mae = pred.iter().zip(&actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / nf;
        let mse = pred.iter().zip(&actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / nf;
        let nz: Vec<(f64, f64)> = pred.iter().zip(&actual).filter(|(_, a)| **a != 0.0).map(|(p, a)| (*p, *a)).collect();
        let mape = (!nz.is_empty()).then(|| nz.iter().map(|(p, a)| ((a - p) / a).abs()).sum::<f64>() / nz.len() as f64);
        let abar = actual.iter().sum::<f64>() / nf;
        let sst = actual.iter().map(|a| (a - abar).powi(2)).sum::<f64>();
        let r2 = (sst > 0.0).then(|| 1.0 - mse * nf / sst);
        let mut errs = vec![rel(r.mae, mae), rel(r.mse, mse), rel(r.rmse, mse.sqrt())];
        match (r.mape, mape) {
            (Some(a), Some(b)) => errs.push(rel(a, b)),
            (None, None) => {}
            _ => mismatched += 1,
        }
        match (r.r2, r2) {
            (Some(a), Some(b)) => errs.push(rel(a, b)),
            (None, None) => {}
            _ => mismatched += 1,
        }
        mismatched += usize::from(r.mape_excluded != n - nz.len());

        let cp: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        let ca: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let c = classification_metrics(&cp, &ca).map_err(|e| e.to_string())?;
        let count = |p: f64, a: f64| cp.iter().zip(&ca).filter(|(x, y)| **x == p && **y == a).count() as f64;
        let (tp, tn, fp, fn_) = (count(1.0, 1.0), count(0.0, 0.0), count(1.0, 0.0), count(0.0, 1.0));
        errs.push(rel(c.accuracy, (tp + tn) / nf));
        let pairs = [
            (c.precision, (tp + fp > 0.0).then(|| tp / (tp + fp))),
            (c.recall, (tp + fn_ > 0.0).then(|| tp / (tp + fn_))),
            (c.f1, (tp + fp + fn_ > 0.0).then(|| 2.0 * tp / (2.0 * tp + fp + fn_))),
        ];
        for (a, b) in pairs {
            match (a, b) {
                (Some(a), Some(b)) => errs.push(rel(a, b)),
                (None, None) => {}
                _ => mismatched += 1,
            }
        }
        worst = errs.into_iter().fold(worst, f64::max);
    }
    check(
        worst <= 1e-12 && mismatched == 0,
        format!("max relative error {worst:.2e}, {mismatched} definedness mismatches"),
    )
}

fn full_scan(crash: UnitKey, pool: &[UnitKey], cfg: &MatchConfig) -> Vec<usize> {
    let day = 288i64;
    let tod = |s: i64| s.rem_euclid(day);
    let dow = |s: i64| (s.div_euclid(day) + 3).rem_euclid(7);
    let mut hits: Vec<(i64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.milepost == crash.milepost
                && p.direction == crash.direction
                && tod(p.slot) == tod(crash.slot)
                && dow(p.slot) == dow(crash.slot)
                && (p.slot - crash.slot).abs() <= cfg.window_days * day
                && p.slot != crash.slot
        })
        .map(|(i, p)| (p.slot, i))
        .collect();
    hits.sort();
    hits.into_iter().take(cfg.k).map(|(_, i)| i).collect()
}

fn c7_matching() -> Outcome {
    let mut rng = stream_rng(7, "acceptance", 0);
    let key = |rng: &mut crashdrl::rng::StreamRng| UnitKey {
        milepost: rng.random_range(100..105),
        slot: rng.random_range(18_000..18_070) * 288 + rng.random_range(96..101),
        direction: if rng.random_bool(0.5) { Direction::N } else { Direction::S },
    };
    let pool: Vec<UnitKey> = (0..50_000).map(|_| key(&mut rng)).collect();
    let crashes: Vec<UnitKey> = (0..400).map(|_| key(&mut rng)).collect();
    let mut diffs = 0;
    let mut total = 0;
    let mut unmatched = 0;
    let configs = [MatchConfig::default(), MatchConfig { k: 3, window_days: 7 }, MatchConfig { k: 60, window_days: 3 }];
    for cfg in &configs {
        let m = match_counterfactuals(&crashes, &pool, cfg);
        unmatched += m.unmatched.len();
        let mut sets = m.sets.iter().peekable();
        for (i, c) in crashes.iter().enumerate() {
            let want = full_scan(*c, &pool, cfg);
            let got = match sets.peek() {
                Some(s) if s.crash == i => sets.next().map(|s| s.matches.clone()).unwrap_or_default(),
                _ => Vec::new(),
            };
            total += want.len();
            diffs += usize::from(got != want || (want.is_empty() != m.unmatched.contains(&i)));
        }
    }
    let hand = [
        (50.0, -10.0, vec![45.0, 47.0], 40.0, -6.0),
        (62.5, -4.25, vec![60.0, 58.5, 61.5, 59.0], 58.25, -1.5),
        (30.0, 0.0, vec![30.0], 30.0, 0.0),
    ];
    let mut hand_bad = 0;
    for (osp, ice, speeds, csp, mce) in hand {
        let e = matched_effect(osp, ice, &speeds).map_err(|e| e.to_string())?;
        hand_bad += usize::from(e.csp != csp || e.mce != mce);
    }
    check(
        diffs == 0 && hand_bad == 0 && total > 0 && unmatched > 0,
        format!(
            "{diffs} of {} crash lookups differ from the full scan ({total} matches, {unmatched} unmatched); {hand_bad} hand cases off",
            crashes.len() * configs.len()
        ),
    )
}

fn c8_calibration() -> Outcome {
    let reps = 200;
    let ty = CrashType::Rear;
    let s = Scenario::new(5, 0);
    let drl = cheap_drl(200);
    let mut rejections = 0;
    for rep in 0..reps {
        let mut cfg = SynthConfig::preset(Preset::ConfoundedLinear, 800, 5000 + rep);
        cfg.tau.intercept = 0.0;
        cfg.tau.coef.clear();
        cfg.scenarios = vec![s];
        let panel = generate(&cfg).map_err(|e| e.to_string())?;
        let grid =
            estimate_grid(&panel, &[ty], &[s], &all_vars(&panel), &drl, 7000 + rep).map_err(|e| e.to_string())?;
        let iv = grid.results[0].interval.ok_or("no interval")?;
        rejections += usize::from(iv.p_value < 0.05);
    }
    let rate = rejections as f64 / reps as f64;
    check((0.02..=0.08).contains(&rate), format!("rejection rate {:.1}% ({rejections}/{reps})", rate * 100.0))
}

fn csvs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir).map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect()).unwrap_or_default();
    v.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    v.sort();
    v
}

fn shipped_run(dir: &Path, name: &str) -> Result<RunConfig, String> {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let mut cfg = RunConfig::load(&shipped).map_err(|e| e.to_string())?;
    cfg.out_dir = dir.join(name);
    Ok(cfg)
}

fn c9_determinism(dir: &Path) -> Outcome {
    let a = shipped_run(dir, "a")?;
    let b = shipped_run(dir, "b")?;
    cmd_pipeline(&a).map_err(|e| e.to_string())?;
    cmd_pipeline(&b).map_err(|e| e.to_string())?;
    let (fa, fb) = (csvs(&a.out_dir), csvs(&b.out_dir));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().map(|n| n.to_owned())).collect::<Vec<_>>();
    if fa.is_empty() || names(&fa) != names(&fb) {
        return Err(format!("artifact lists differ: {} vs {}", fa.len(), fb.len()));
    }
    let differing: Vec<String> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| std::fs::read(x).ok() != std::fs::read(y).ok())
        .map(|(x, _)| x.display().to_string())
        .collect();
    check(differing.is_empty(), format!("{} CSVs compared, differing: {differing:?}", fa.len()))
}

fn table_cell_ok(c: &str) -> bool {
    let Some((est, half)) = c.split_once(" ± ") else {
        return false;
    };
    let est = est.trim_end_matches('*');
    let two_dp = |s: &str| {
        s.parse::<f64>().is_ok()
            && s.rsplit_once('.').is_some_and(|(_, d)| d.len() == 2 && d.bytes().all(|b| b.is_ascii_digit()))
    };
    two_dp(est) && two_dp(half) && !half.starts_with('-')
}

fn c10_format(dir: &Path) -> Outcome {
    let out = dir.join("a");
    let grid = CateGrid::read_json(&out.join("cate_grid.json")).map_err(|e| e.to_string())?;
    let table = std::fs::read_to_string(out.join("cate_table.csv")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = table.lines().collect();
    let header_ok = lines.first() == Some(&"type,dur,dis_0,dis_-1,dis_-2,dis_-3,dis_-5");
    let mut expected_keys = Vec::new();
    for ty in CrashType::ALL {
        for d in DURATIONS {
            expected_keys.push(format!("{},{d}", ty.label()));
        }
    }
    let body = &lines[1.min(lines.len())..];
    let keys_ok = body.len() == 18 && body.iter().zip(&expected_keys).all(|(l, k)| l.starts_with(&format!("{k},")));
    let cells_ok = body.iter().all(|l| {
        let f: Vec<&str> = l.split(',').collect();
        f.len() == 2 + DISTANCES.len() && f[2..].iter().all(|c| table_cell_ok(c))
    });
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).map_err(|e| e.to_string())?;
    let eps: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap_or("")).collect();
    let sweep_ok = eps == ["0.00", "0.05", "0.10", "0.15", "0.20", "0.25", "0.30", "0.35", "0.40"];
    check(
        grid.has_standard_layout() && header_ok && keys_ok && cells_ok && sweep_ok,
        format!(
            "grid layout {}, header {header_ok}, 18 rows {keys_ok}, cells {cells_ok}, sweep rows {} ({sweep_ok})",
            grid.has_standard_layout(),
            eps.len()
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let dir = scratch.path().to_path_buf();
    let dir2 = dir.clone();
    type Criterion = (u32, &'static str, Duration, Box<dyn Fn() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        (1, "DR algebraic identities", Duration::from_secs(1), Box::new(c1_identities)),
        (2, "doubly robust recovery", Duration::from_secs(120), Box::new(c2_double_robustness)),
        (3, "heterogeneity coverage", Duration::from_secs(600), Box::new(c3_heterogeneity)),
        (4, "CSVI selection", Duration::from_secs(900), Box::new(c4_csvi_selection)),
        (5, "Shapley efficiency", Duration::MAX, Box::new(c5_shapley)),
        (6, "metric suite oracle", Duration::MAX, Box::new(c6_metrics)),
        (7, "matching vs full scan", Duration::MAX, Box::new(c7_matching)),
        (8, "bootstrap size calibration", Duration::MAX, Box::new(c8_calibration)),
        (9, "pipeline determinism", Duration::MAX, Box::new(move || c9_determinism(&dir))),
        (10, "table format fidelity", Duration::MAX, Box::new(move || c10_format(&dir2))),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in &criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {n:>2} {name:<28} {} ({detail}; {:.2}s)",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
