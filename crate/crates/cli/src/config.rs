use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crashdrl::drl::DrlConfig;
use crashdrl::ingest::{AggregateConfig, Orientation, PanelConfig};
use crashdrl::learners::{Hyperparams, LearnerKind, LearnerSpec, Task};
use crashdrl::panel::{DISTANCES, DURATIONS};
use crashdrl::selection::{default_epsilons, DEFAULT_COLLINEARITY};
use crashdrl::shapley::ShapConfig;
use crashdrl::synth::{Preset, RawConfig, SynthConfig};
use crashdrl::validate::MatchConfig;
use crashdrl::{CrashType, Scenario};

use crate::CliError;

/// Everything one run needs. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub drl: DrlSection,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub traffic: Option<PathBuf>,
    pub crashes: Option<PathBuf>,
    pub alignment: Option<PathBuf>,
    /// A prebuilt panel; skips `ingest`.
    pub panel: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub hidden: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// A semisynthetic panel with hidden ground truth.
    Panel,
    /// Raw detector, crash and alignment tables fed through `ingest`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_mode")]
    pub mode: SynthMode,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default = "default_rows")]
    pub n_rows: usize,
    pub noise_sd: Option<f64>,
    /// Full generator spec replacing the preset.
    pub spec: Option<PathBuf>,
    #[serde(default)]
    pub raw: RawConfig,
}

fn default_mode() -> SynthMode {
    SynthMode::Panel
}

fn default_preset() -> Preset {
    Preset::ConfoundedHeterogeneous
}

fn default_rows() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub types: Vec<String>,
    pub durs: Vec<u32>,
    pub diss: Vec<i32>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            types: CrashType::ALL.iter().map(|t| t.label().to_string()).collect(),
            durs: DURATIONS.to_vec(),
            diss: DISTANCES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub control_ratio: usize,
    pub lag_minutes: i64,
    pub up_against_travel: bool,
    pub match_window_days: i64,
    pub free_flow_speed: Option<f64>,
    pub free_flow_quantile: f64,
    pub interpolate: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let p = PanelConfig::default();
        Self {
            control_ratio: p.control_ratio,
            lag_minutes: p.lag_minutes,
            up_against_travel: p.orientation.up_against_travel,
            match_window_days: p.match_window_days,
            free_flow_speed: None,
            free_flow_quantile: AggregateConfig::default().free_flow_quantile,
            interpolate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Defaults to every panel feature.
    pub candidates: Option<Vec<String>>,
    pub collinearity: f64,
    pub priority: Vec<String>,
    pub epsilon: f64,
    pub protected: Vec<String>,
    pub learner: LearnerKind,
    pub params: Hyperparams,
    pub reference_dur: u32,
    pub reference_dis: i32,
    /// Group by one crash type instead of any crash.
    pub csvi_type: Option<String>,
    pub shap_permutations: usize,
    pub shap_background: usize,
    pub shap_max_instances: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let s = ShapConfig::default();
        Self {
            candidates: None,
            collinearity: DEFAULT_COLLINEARITY,
            priority: vec!["ci".into()],
            epsilon: 0.15,
            protected: Vec::new(),
            learner: LearnerKind::RandomForest,
            params: Hyperparams::default(),
            reference_dur: 5,
            reference_dis: 0,
            csvi_type: None,
            shap_permutations: s.n_permutations,
            shap_background: s.background_size,
            shap_max_instances: s.max_instances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrlSection {
    pub eta: f64,
    pub bootstrap_b: usize,
    pub cross_fit: bool,
    pub min_rows: usize,
    pub propensity: LearnerKind,
    pub outcome: LearnerKind,
    pub propensity_params: Hyperparams,
    pub outcome_params: Hyperparams,
}

impl Default for DrlSection {
    fn default() -> Self {
        let d = DrlConfig::default();
        Self {
            eta: d.eta,
            bootstrap_b: d.bootstrap_b,
            cross_fit: d.cross_fit,
            min_rows: d.min_rows,
            propensity: d.propensity.kind,
            outcome: d.outcome.kind,
            propensity_params: d.propensity.params,
            outcome_params: d.outcome.params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorChoice {
    /// Oracle when hidden columns are available, matched otherwise.
    Auto,
    Matched,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub k: usize,
    pub window_days: i64,
    pub validator: ValidatorChoice,
    /// Also score naive, IPW and DML baselines.
    pub compare_methods: bool,
    /// Also refit on the pre-selection variables and report both.
    pub compare_selection: bool,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        let m = MatchConfig::default();
        Self {
            k: m.k,
            window_days: m.window_days,
            validator: ValidatorChoice::Auto,
            compare_methods: true,
            compare_selection: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    /// Default to the estimation grid.
    pub types: Option<Vec<String>>,
    pub durs: Option<Vec<u32>>,
    pub diss: Option<Vec<i32>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { epsilons: default_epsilons(), types: None, durs: None, diss: None }
    }
}

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

pub(crate) fn parse_types(names: &[String]) -> Result<Vec<CrashType>, CliError> {
    if names.is_empty() {
        return Err(config_err("no crash types listed"));
    }
    names.iter().map(|n| n.parse().map_err(|e: crashdrl::Error| config_err(e.to_string()))).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Read `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let i = &mut self.input;
        for p in [&mut i.traffic, &mut i.crashes, &mut i.alignment, &mut i.panel, &mut i.pool, &mut i.hidden]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(s) = self.synth.as_mut().and_then(|s| s.spec.as_mut()) {
            fix(s);
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| config_err("a seed is required (config `seed` or --seed)"))
    }

    pub fn types(&self) -> Result<Vec<CrashType>, CliError> {
        parse_types(&self.grid.types)
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        Scenario::cross(&self.grid.durs, &self.grid.diss)
    }

    pub fn sweep_types(&self) -> Result<Vec<CrashType>, CliError> {
        parse_types(self.sweep.types.as_ref().unwrap_or(&self.grid.types))
    }

    pub fn sweep_scenarios(&self) -> Vec<Scenario> {
        Scenario::cross(
            self.sweep.durs.as_ref().unwrap_or(&self.grid.durs),
            self.sweep.diss.as_ref().unwrap_or(&self.grid.diss),
        )
    }

    pub fn reference(&self) -> Scenario {
        Scenario::new(self.selection.reference_dur, self.selection.reference_dis)
    }

    pub fn drl_config(&self) -> DrlConfig {
        let d = &self.drl;
        DrlConfig {
            eta: d.eta,
            propensity: LearnerSpec::new(d.propensity, Task::Classification).with_params(d.propensity_params.clone()),
            outcome: LearnerSpec::new(d.outcome, Task::Regression).with_params(d.outcome_params.clone()),
            cross_fit: d.cross_fit,
            bootstrap_b: d.bootstrap_b,
            min_rows: d.min_rows,
        }
    }

    pub fn shap_config(&self) -> ShapConfig {
        let s = &self.selection;
        ShapConfig {
            n_permutations: s.shap_permutations,
            background_size: s.shap_background,
            max_instances: s.shap_max_instances,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig { k: self.matching.k, window_days: self.matching.window_days }
    }

    pub fn panel_config(&self) -> PanelConfig {
        PanelConfig {
            scenarios: self.scenarios(),
            control_ratio: self.ingest.control_ratio,
            orientation: Orientation { up_against_travel: self.ingest.up_against_travel },
            lag_minutes: self.ingest.lag_minutes,
            match_window_days: self.ingest.match_window_days,
        }
    }

    pub fn aggregate_config(&self) -> AggregateConfig {
        AggregateConfig {
            free_flow_speed: self.ingest.free_flow_speed,
            free_flow_quantile: self.ingest.free_flow_quantile,
        }
    }

    /// Generator settings for `synth` in panel mode.
    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let s = self.synth.as_ref().ok_or_else(|| config_err("no [synth] section"))?;
        let seed = self.seed()?;
        let mut c = match &s.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read synth spec {}: {e}", p.display())))?;
                let mut c: SynthConfig =
                    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                c.seed = seed;
                c
            }
            None => SynthConfig::preset(s.preset, s.n_rows, seed),
        };
        if let Some(sd) = s.noise_sd {
            c.noise_sd = sd;
        }
        if s.spec.is_none() {
            c.scenarios = self.scenarios();
        }
        Ok(c)
    }

    pub fn raw_config(&self) -> Result<RawConfig, CliError> {
        let s = self.synth.as_ref().ok_or_else(|| config_err("no [synth] section"))?;
        Ok(RawConfig { seed: self.seed()?, ..s.raw.clone() })
    }

    pub fn synth_mode(&self) -> Option<SynthMode> {
        self.synth.as_ref().map(|s| s.mode)
    }

    /// Every problem found, so they can be reported together.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.seed.is_none() {
            out.push("a seed is required (config `seed` or --seed)".into());
        }
        if let Err(e) = self.types() {
            out.push(e.to_string());
        }
        if self.grid.durs.is_empty() || self.grid.diss.is_empty() {
            out.push("grid durs and diss must be non-empty".into());
        }
        if let Err(e) = self.sweep_types() {
            out.push(format!("sweep: {e}"));
        }
        if self.sweep.epsilons.is_empty() || self.sweep.epsilons.iter().any(|e| e.is_nan() || *e < 0.0) {
            out.push("sweep epsilons must be non-empty and >= 0".into());
        }
        if !(self.selection.collinearity > 0.0 && self.selection.collinearity < 1.0) {
            out.push(format!("selection.collinearity {} outside (0, 1)", self.selection.collinearity));
        }
        if self.selection.epsilon.is_nan() || self.selection.epsilon < 0.0 {
            out.push("selection.epsilon must be >= 0".into());
        }
        if let Some(t) = &self.selection.csvi_type {
            if let Err(e) = t.parse::<CrashType>() {
                out.push(format!("selection.csvi_type: {e}"));
            }
        }
        if self.selection.shap_permutations == 0 || self.selection.shap_background == 0 {
            out.push("shap_permutations and shap_background must be positive".into());
        }
        if let Err(e) = self.drl_config().validate() {
            out.push(format!("drl: {e}"));
        }
        if self.matching.k == 0 || self.matching.window_days <= 0 {
            out.push("matching.k and matching.window_days must be positive".into());
        }
        if self.ingest.lag_minutes < 0 || self.ingest.lag_minutes % 5 != 0 {
            out.push("ingest.lag_minutes must be a non-negative multiple of 5".into());
        }
        if self.synth_mode() == Some(SynthMode::Panel) && self.seed.is_some() {
            match self.synth_config() {
                Ok(c) => {
                    if let Err(e) = c.validate() {
                        out.push(format!("synth: {e}"));
                    }
                }
                Err(e) => out.push(e.to_string()),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = RunConfig::from_toml("seed = 3").unwrap();
        assert_eq!(c.scenarios().len(), 30);
        assert_eq!(c.types().unwrap().len(), 3);
        assert_eq!(c.drl_config(), DrlConfig::default());
        assert!(c.problems().is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("seed = 1\nbogus = 2").is_err());
        assert!(RunConfig::from_toml("seed = 1\n[drl]\netaa = 0.1").is_err());
    }

    #[test]
    fn problems_are_collected() {
        let c = RunConfig::from_toml("[grid]\ntypes = [\"CAR\"]\n[drl]\neta = 0.7").unwrap();
        let p = c.problems();
        assert!(p.len() >= 3, "{p:?}");
    }

    #[test]
    fn relative_paths_follow_config() {
        let mut c = RunConfig::from_toml("seed = 1\nout_dir = \"o\"\n[input]\npanel = \"p.csv\"").unwrap();
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.out_dir, PathBuf::from("/base/o"));
        assert_eq!(c.input.panel, Some(PathBuf::from("/base/p.csv")));
    }
}
