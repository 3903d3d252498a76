//! Run configuration: a TOML document layered as
//! built-in defaults < config file < `--set key.path=value` < dedicated flags.
//!
//! Key paths are dotted; array elements take 1-based indices, so
//! `loads.2.size = 0.3` edits the second load. Relative paths inside a
//! config file resolve against the file's directory; paths given on the
//! command line resolve against the working directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use loadtrack_core::{
    make_dynamics, BarrierForm, Complex64, CostSamples, Criterion, DecisionGrid, DwellCount,
    FinalRun, LoadBank, LoadSpec, Semantics, TrackingConfig,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Rejected configuration, naming the offending key path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    LeastSquares,
    #[default]
    Barrier,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierFormName {
    #[default]
    Window,
    PerSample,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSamplesName {
    #[default]
    Every,
    EpochEnds,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRunName {
    #[default]
    Allow,
    Forbid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwellCountName {
    #[default]
    Strict,
    Lenient,
}

/// A pole written either as a number or as a string like `"-0.05+0.06j"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pole {
    Real(f64),
    Text(String),
}

impl Pole {
    fn parse(&self) -> Result<Complex64, String> {
        match self {
            Pole::Real(re) => Ok(Complex64::new(*re, 0.0)),
            Pole::Text(s) => s
                .replace(' ', "")
                .parse::<Complex64>()
                .map_err(|_| format!("cannot parse pole {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub size: f64,
    pub on_poles: Vec<Pole>,
    pub off_poles: Vec<Pole>,
    pub min_on_s: f64,
    pub min_off_s: f64,
    #[serde(default)]
    pub off_level: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub path: Option<PathBuf>,
    pub time_column: Option<String>,
    pub value_column: Option<String>,
    /// Divide by the series maximum before resampling.
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt_s: f64,
    pub decision_period_s: f64,
    pub horizon_s: f64,
    pub day_length_s: f64,
    pub criterion: CriterionName,
    pub barrier_form: BarrierFormName,
    pub cost_samples: CostSamplesName,
    pub truncate_final_run: FinalRunName,
    pub dwell_count: DwellCountName,
    pub output_dir: PathBuf,
    pub profile: ProfileConfig,
    pub loads: Vec<LoadConfig>,
}

impl Default for RunConfig {
    /// The three-load reference study: 1 s sampling, 60 s decisions,
    /// 360 s horizon over a 24 h day.
    fn default() -> Self {
        let load = |size, on: Vec<Pole>, off: f64, min: f64| LoadConfig {
            size,
            on_poles: on,
            off_poles: vec![Pole::Real(off)],
            min_on_s: min,
            min_off_s: min,
            off_level: 0.0,
        };
        RunConfig {
            dt_s: 1.0,
            decision_period_s: 60.0,
            horizon_s: 360.0,
            day_length_s: 86_400.0,
            criterion: CriterionName::Barrier,
            barrier_form: BarrierFormName::Window,
            cost_samples: CostSamplesName::Every,
            truncate_final_run: FinalRunName::Allow,
            dwell_count: DwellCountName::Strict,
            output_dir: PathBuf::from("out"),
            profile: ProfileConfig {
                normalize: true,
                ..ProfileConfig::default()
            },
            loads: vec![
                load(0.60, vec![Pole::Real(-0.01)], -0.04, 180.0),
                load(
                    0.2586,
                    vec![
                        Pole::Text("-0.05+0.06j".into()),
                        Pole::Text("-0.05-0.06j".into()),
                    ],
                    -0.05,
                    240.0,
                ),
                load(0.1222, vec![Pole::Real(-0.02)], -0.02, 300.0),
            ],
        }
    }
}

/// Layered configuration source.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource {
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
}

impl ConfigSource {
    pub fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut table = Table::try_from(RunConfig::default()).expect("defaults serialize");
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            let mut file: Table = text
                .parse()
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            rebase_paths(&mut file, base);
            merge(&mut table, file);
        }
        for item in &self.overrides {
            apply_override(&mut table, item)?;
        }
        RunConfig::deserialize(Value::Table(table)).map_err(|e| ConfigError(format!("config: {e}")))
    }
}

fn rebase_paths(file: &mut Table, base: &Path) {
    let rebase = |v: &mut Value| {
        if let Value::String(s) = v {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).to_string_lossy().into_owned();
            }
        }
    };
    if let Some(v) = file.get_mut("output_dir") {
        rebase(v);
    }
    if let Some(Value::Table(profile)) = file.get_mut("profile") {
        if let Some(v) = profile.get_mut("path") {
            rebase(v);
        }
    }
}

/// Tables merge key by key; anything else replaces.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Applies one `key.path=value`. The value is read as a TOML value and
/// falls back to a bare string.
pub fn apply_override(table: &mut Table, item: &str) -> Result<(), ConfigError> {
    let Some((path, raw)) = item.split_once('=') else {
        return err(format!(
            "override {item:?} is not of the form key.path=value"
        ));
    };
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return err(format!("override key {path:?} is malformed"));
    }
    let mut slot = Slot::Table(table);
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        let here = segments[..=depth].join(".");
        slot = match slot {
            Slot::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                Slot::Value(
                    t.entry(seg.to_string())
                        .or_insert_with(|| Value::Table(Table::new())),
                )
            }
            Slot::Value(Value::Table(t)) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                Slot::Value(
                    t.entry(seg.to_string())
                        .or_insert_with(|| Value::Table(Table::new())),
                )
            }
            Slot::Value(Value::Array(items)) => {
                let index: usize = seg
                    .parse()
                    .map_err(|_| ConfigError(format!("{here}: array index must be a number")))?;
                if index == 0 || index > items.len() + 1 {
                    return err(format!(
                        "{here}: index out of range 1..={} (1-based)",
                        items.len() + 1
                    ));
                }
                if index == items.len() + 1 {
                    items.push(Value::Table(Table::new()));
                }
                let item = &mut items[index - 1];
                if last {
                    *item = value;
                    return Ok(());
                }
                Slot::Value(item)
            }
            Slot::Value(_) => return err(format!("{here}: not a table or array")),
        };
    }
    unreachable!("loop returns at the last segment")
}

enum Slot<'a> {
    Table(&'a mut Table),
    Value(&'a mut Value),
}

/// Engine objects built from a validated configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub bank: LoadBank,
    pub tracking: TrackingConfig,
}

impl RunConfig {
    pub fn criterion(&self) -> Criterion {
        match self.criterion {
            CriterionName::LeastSquares => Criterion::LeastSquares,
            CriterionName::Barrier => Criterion::Barrier(match self.barrier_form {
                BarrierFormName::Window => BarrierForm::Window,
                BarrierFormName::PerSample => BarrierForm::PerSample,
            }),
        }
    }

    pub fn semantics(&self) -> Semantics {
        Semantics {
            truncate_final_run: match self.truncate_final_run {
                FinalRunName::Allow => FinalRun::Allow,
                FinalRunName::Forbid => FinalRun::Forbid,
            },
            dwell_count: match self.dwell_count {
                DwellCountName::Strict => DwellCount::Strict,
                DwellCountName::Lenient => DwellCount::Lenient,
            },
        }
    }

    /// Converts seconds to a whole number of samples.
    fn samples(&self, key: &str, seconds: f64) -> Result<u32, ConfigError> {
        let ratio = seconds / self.dt_s;
        let n = ratio.round();
        if !seconds.is_finite()
            || seconds < 0.0
            || (ratio - n).abs() > 1e-9 * n.max(1.0)
            || n > u32::MAX as f64
        {
            return err(format!(
                "{key} = {seconds} is not a non-negative multiple of dt_s = {}",
                self.dt_s
            ));
        }
        Ok(n as u32)
    }

    fn multiple_of_decision(
        &self,
        key: &str,
        seconds: f64,
        samples: u32,
        nd: u32,
    ) -> Result<(), ConfigError> {
        if !samples.is_multiple_of(nd) {
            return err(format!(
                "{key} = {seconds} is not a multiple of decision_period_s = {}",
                self.decision_period_s
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<DecisionGrid, ConfigError> {
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return err(format!("dt_s must be positive, got {}", self.dt_s));
        }
        let nd = self.samples("decision_period_s", self.decision_period_s)?;
        if nd == 0 {
            return err("decision_period_s must be positive");
        }
        let horizon = self.samples("horizon_s", self.horizon_s)?;
        self.multiple_of_decision("horizon_s", self.horizon_s, horizon, nd)?;
        DecisionGrid::new(self.dt_s, nd, horizon / nd)
            .map_err(|e| ConfigError(format!("horizon_s: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let grid = self.grid()?;
        let nd = grid.decision_samples();
        let day = self.samples("day_length_s", self.day_length_s)?;
        self.multiple_of_decision("day_length_s", self.day_length_s, day, nd)?;
        if self.loads.is_empty() {
            return err("loads: at least one load is required");
        }
        let mut specs = Vec::with_capacity(self.loads.len());
        for (i, load) in self.loads.iter().enumerate() {
            let key = format!("loads.{}", i + 1);
            let min_on = self.samples(&format!("{key}.min_on_s"), load.min_on_s)?;
            let min_off = self.samples(&format!("{key}.min_off_s"), load.min_off_s)?;
            self.multiple_of_decision(&format!("{key}.min_on_s"), load.min_on_s, min_on, nd)?;
            self.multiple_of_decision(&format!("{key}.min_off_s"), load.min_off_s, min_off, nd)?;
            let dynamics = |field: &str, poles: &[Pole]| {
                let parsed = poles
                    .iter()
                    .map(Pole::parse)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ConfigError(format!("{key}.{field}: {e}")))?;
                make_dynamics(&parsed).map_err(|e| ConfigError(format!("{key}.{field}: {e}")))
            };
            let on = dynamics("on_poles", &load.on_poles)?;
            let off = dynamics("off_poles", &load.off_poles)?;
            let spec = LoadSpec::new(i + 1, load.size, on, off, min_on, min_off)
                .and_then(|s| s.with_off_level(load.off_level))
                .map_err(|e| ConfigError(format!("{key}: {e}")))?;
            specs.push(spec);
        }
        let bank = LoadBank::new(specs, self.dt_s, self.day_length_s)
            .map_err(|e| ConfigError(e.to_string()))?;
        let mut tracking = TrackingConfig::new(grid).with_criterion(self.criterion());
        tracking.semantics = self.semantics();
        tracking.cost_samples = match self.cost_samples {
            CostSamplesName::Every => CostSamples::Every,
            CostSamplesName::EpochEnds => CostSamples::EpochEnds,
        };
        Ok(Resolved { bank, tracking })
    }

    /// Every leaf value keyed by its dotted path, for the run summary.
    pub fn flatten(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let value = Value::try_from(self).expect("config serializes");
        flatten_into(&mut out, String::new(), &value);
        out
    }
}

fn flatten_into(out: &mut BTreeMap<String, String>, prefix: String, value: &Value) {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                flatten_into(out, join(k), v);
            }
        }
        Value::Array(items) if items.iter().any(Value::is_table) => {
            for (i, v) in items.iter().enumerate() {
                flatten_into(out, join(&(i + 1).to_string()), v);
            }
        }
        Value::String(s) => {
            out.insert(prefix, s.clone());
        }
        other => {
            out.insert(prefix, other.to_string());
        }
    }
}
