//! Experiment configuration: JSON schema, validation and unit resolution.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use strobe_core::bath::{BathFamily, BathSpec, Mode};
use strobe_core::models::{GateSpacing, ModelKind, Mu};
use strobe_core::tcl2::steps_per_cycle;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Times in units of the cycle time `T = 1`.
    Dimensionless,
    /// Times and frequencies in a common physical unit; `schedule.period` required.
    Dimensional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelType {
    Toric,
    FiveQubit,
}

impl From<ModelType> for ModelKind {
    fn from(m: ModelType) -> Self {
        match m {
            ModelType::Toric => ModelKind::ToricVertex,
            ModelType::FiveQubit => ModelKind::FiveQubit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "type")]
    pub kind: ModelType,
    /// `ω` (toric) or `γ` (five-qubit); `ε` itself when dimensionless.
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Endpoints,
    Slots,
}

impl From<Spacing> for GateSpacing {
    fn from(s: Spacing) -> Self {
        match s {
            Spacing::Endpoints => GateSpacing::Endpoints,
            Spacing::Slots => GateSpacing::Slots,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// `R = τ_g/T`; exclusive with `tau_g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_g: Option<f64>,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ohmic,
    Centered,
    Discrete,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub omega: f64,
    pub g: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "one")]
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_c: Option<f64>,
    /// Inverse temperature; absent or `null` for the vacuum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeConfig>,
    /// One bath per coupling operator; a single shared bath otherwise.
    #[serde(default = "yes")]
    pub independent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// The model's reference code state.
    Default,
    /// `|0…0⟩`.
    Zero,
    /// `|+…+⟩`.
    Plus,
}

fn default_state() -> InitialState {
    InitialState::Default
}

fn both_pictures() -> Vec<Picture> {
    vec![Picture::Tar, Picture::Sim]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Picture {
    Tar,
    Sim,
}

impl From<Picture> for Mu {
    fn from(p: Picture) -> Self {
        match p {
            Picture::Tar => Mu::Tar,
            Picture::Sim => Mu::Sim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Base step; exclusive with `steps_per_cycle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_cycle: Option<usize>,
    /// Number of cycles; exclusive with `duration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    /// Total time, a whole number of cycles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Output stride in cycles; exclusive with `sample_interval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    /// Output stride in time units, a whole number of cycles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    #[serde(default = "default_state")]
    pub initial_state: InitialState,
    #[serde(default = "both_pictures")]
    pub pictures: Vec<Picture>,
    #[serde(default = "one_usize")]
    pub refinement: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Ratio,
    TauG,
    Period,
    NuC,
    Eta,
}

impl SweepParameter {
    fn tag(self) -> &'static str {
        match self {
            SweepParameter::Ratio => "R",
            SweepParameter::TauG => "tau",
            SweepParameter::Period => "T",
            SweepParameter::NuC => "nuc",
            SweepParameter::Eta => "eta",
        }
    }

    /// Whether the target trajectory depends on this parameter.
    fn affects_target(self) -> bool {
        matches!(self, SweepParameter::Period | SweepParameter::NuC | SweepParameter::Eta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundAxis {
    N,
    RM,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSweep {
    pub over: BoundAxis,
    pub values: Vec<f64>,
}

fn default_margin() -> f64 {
    strobe_core::bounds::DEFAULT_MARGIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Evaluates this regime's formula regardless of classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BoundSweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Fock levels per mode.
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub units: Units,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub bath: BathSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.resolve()?;
    Ok(cfg)
}

/// One fully resolved run in cycle units.
#[derive(Clone, Debug)]
pub struct Entry {
    /// Empty for configs without a sweep.
    pub label: String,
    /// Cycle time in the config's time unit (1 when dimensionless).
    pub period: f64,
    pub model: ModelKind,
    /// `ε = ωT` or `γT`.
    pub energy: f64,
    pub ratio: f64,
    pub spacing: GateSpacing,
    pub bath: BathSpec<f64>,
    /// `Δt/T`.
    pub dt: f64,
    pub refinement: usize,
    pub cycles: usize,
    pub stride: usize,
    /// Entries with equal keys share one target trajectory.
    pub target_key: usize,
}

/// The config expanded into runs.
#[derive(Clone, Debug)]
pub struct Plan {
    pub id: String,
    pub entries: Vec<Entry>,
    pub pictures: Vec<Picture>,
    pub initial_state: InitialState,
    /// All entries share one target trajectory.
    pub shared_target: bool,
}

fn field(name: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

fn require(name: &str, v: Option<f64>) -> Result<f64, CliError> {
    let v = v.ok_or_else(|| field(name, "missing"))?;
    positive(name, v)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(field(name, format!("must be positive and finite, got {v}")));
    }
    Ok(v)
}

/// `x` as a whole multiple of `unit`.
fn whole_multiple(name: &str, x: f64, unit: f64) -> Result<usize, CliError> {
    let r = x / unit;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r.max(1.0) || n < 1.0 {
        return Err(field(name, format!("{x} is not a whole number of cycles of {unit}")));
    }
    Ok(n as usize)
}

pub fn format_value(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

struct Point {
    period: Option<f64>,
    ratio: Option<f64>,
    tau_g: Option<f64>,
    nu_c: Option<f64>,
    eta: Option<f64>,
}

impl ExperimentConfig {
    /// Output directory with the `STROBE_OUT` override applied.
    pub fn out_dir(&self) -> std::path::PathBuf {
        match std::env::var_os("STROBE_OUT") {
            Some(d) if !d.is_empty() => d.into(),
            _ => self.output.dir.clone().into(),
        }
    }

    /// Validates the config and expands it into per-run parameters.
    pub fn resolve(&self) -> Result<Plan, CliError> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(field("id", "must be a non-empty file-name fragment"));
        }
        positive("model.energy", self.model.energy)?;
        if self.schedule.ratio.is_some() == self.schedule.tau_g.is_some()
            && self.sweep.as_ref().is_none_or(|s| !matches!(s.parameter, SweepParameter::Ratio | SweepParameter::TauG))
        {
            return Err(field("schedule", "give exactly one of ratio and tau_g"));
        }
        if self.run.pictures.is_empty() {
            return Err(field("run.pictures", "must list tar, sim or both"));
        }
        if self.run.refinement == 0 {
            return Err(field("run.refinement", "must be at least 1"));
        }
        let values: Vec<Option<f64>> = match &self.sweep {
            None => vec![None],
            Some(s) if s.values.is_empty() => return Err(field("sweep.values", "must not be empty")),
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        };
        let mut entries = Vec::with_capacity(values.len());
        for (idx, v) in values.into_iter().enumerate() {
            let mut pt = Point {
                period: self.schedule.period,
                ratio: self.schedule.ratio,
                tau_g: self.schedule.tau_g,
                nu_c: self.bath.nu_c,
                eta: self.bath.eta,
            };
            let mut label = String::new();
            if let (Some(s), Some(v)) = (&self.sweep, v) {
                match s.parameter {
                    SweepParameter::Ratio => (pt.ratio, pt.tau_g) = (Some(v), None),
                    SweepParameter::TauG => (pt.ratio, pt.tau_g) = (None, Some(v)),
                    SweepParameter::Period => pt.period = Some(v),
                    SweepParameter::NuC => pt.nu_c = Some(v),
                    SweepParameter::Eta => pt.eta = Some(v),
                }
                label = format!("{}{}", s.parameter.tag(), format_value(v));
            }
            let target_key = match &self.sweep {
                Some(s) if s.parameter.affects_target() => idx,
                _ => 0,
            };
            entries.push(self.entry(pt, label, target_key)?);
        }
        let shared_target = entries.iter().all(|e| e.target_key == 0);
        Ok(Plan {
            id: self.id.clone(),
            entries,
            pictures: {
                let mut p = self.run.pictures.clone();
                p.sort();
                p.dedup();
                p
            },
            initial_state: self.run.initial_state,
            shared_target,
        })
    }

    fn entry(&self, pt: Point, label: String, target_key: usize) -> Result<Entry, CliError> {
        let period = match self.units {
            Units::Dimensional => require("schedule.period", pt.period)?,
            Units::Dimensionless => {
                let p = pt.period.unwrap_or(1.0);
                if p != 1.0 {
                    return Err(field("schedule.period", "must be 1 (or absent) for dimensionless units"));
                }
                1.0
            }
        };
        let tau_g = match (pt.ratio, pt.tau_g) {
            (Some(r), None) => r * period,
            (None, Some(t)) => t,
            _ => return Err(field("schedule", "give exactly one of ratio and tau_g")),
        };
        if !(tau_g >= 0.0) || tau_g > period {
            return Err(field("schedule", format!("gate window {tau_g} must lie in [0, T = {period}]")));
        }
        let ratio = tau_g / period;

        let bath = scale_bath(&self.bath_spec(pt.nu_c, pt.eta)?, period, self.units)?;
        let dt = match (self.run.dt, self.run.steps_per_cycle) {
            (Some(dt), None) => positive("run.dt", dt)? / period,
            (None, Some(n)) if n > 0 => 1.0 / n as f64,
            (None, Some(_)) => return Err(field("run.steps_per_cycle", "must be positive")),
            _ => return Err(field("run", "give exactly one of dt and steps_per_cycle")),
        };
        steps_per_cycle(1.0, dt).map_err(|e| field("run.dt", e))?;
        let cycles = match (self.run.cycles, self.run.duration) {
            (Some(n), None) => n,
            (None, Some(d)) => whole_multiple("run.duration", positive("run.duration", d)?, period)?,
            _ => return Err(field("run", "give exactly one of cycles and duration")),
        };
        let stride = match (self.run.sample_every, self.run.sample_interval) {
            (None, None) => 1,
            (Some(n), None) if n > 0 => n,
            (Some(_), None) => return Err(field("run.sample_every", "must be positive")),
            (None, Some(t)) => whole_multiple("run.sample_interval", positive("run.sample_interval", t)?, period)?,
            _ => return Err(field("run", "give at most one of sample_every and sample_interval")),
        };
        Ok(Entry {
            label,
            period,
            model: self.model.kind.into(),
            energy: self.model.energy * period,
            ratio,
            spacing: self.schedule.spacing.into(),
            bath,
            dt,
            refinement: self.run.refinement,
            cycles,
            stride,
            target_key,
        })
    }

    fn bath_spec(&self, nu_c: Option<f64>, eta: Option<f64>) -> Result<BathSpec<f64>, CliError> {
        let b = &self.bath;
        let beta = match b.beta {
            Some(beta) => positive("bath.beta", beta)?,
            None => f64::INFINITY,
        };
        let family = match b.family {
            Family::Ohmic => BathFamily::Ohmic {
                eta: require("bath.eta", eta)?,
                w: positive("bath.w", b.w)?,
                nu_c: require("bath.nu_c", nu_c)?,
            },
            Family::Centered => BathFamily::Centered {
                eta: require("bath.eta", eta)?,
                w: positive("bath.w", b.w)?,
                nu_c: require("bath.nu_c", nu_c)?,
                center: b.center.ok_or_else(|| field("bath.center", "missing"))?,
            },
            Family::Discrete => {
                if b.modes.is_empty() {
                    return Err(field("bath.modes", "a discrete bath needs at least one mode"));
                }
                BathFamily::Discrete { modes: b.modes.iter().map(|m| Mode { omega: m.omega, g: m.g }).collect() }
            }
        };
        let spec = BathSpec { family, beta, independent_baths: b.independent };
        spec.validate().map_err(|e| field("bath", e))?;
        Ok(spec)
    }
}

/// Rescales a bath given in physical units to cycle units `T = 1`.
fn scale_bath(b: &BathSpec<f64>, period: f64, units: Units) -> Result<BathSpec<f64>, CliError> {
    if units == Units::Dimensionless {
        return Ok(b.clone());
    }
    let family = match &b.family {
        BathFamily::Ohmic { eta, w, nu_c } => {
            BathFamily::Ohmic { eta: eta * period.powf(1.0 - w), w: *w, nu_c: nu_c * period }
        }
        BathFamily::Centered { eta, w, nu_c, center } => BathFamily::Centered {
            eta: eta * period.powf(1.0 - w),
            w: *w,
            nu_c: nu_c * period,
            center: center * period,
        },
        BathFamily::Discrete { modes } => BathFamily::Discrete {
            modes: modes.iter().map(|m| Mode { omega: m.omega * period, g: m.g * period }).collect(),
        },
    };
    let spec = BathSpec { family, beta: b.beta / period, independent_baths: b.independent_baths };
    spec.validate().map_err(|e| field("bath", e))?;
    Ok(spec)
}
