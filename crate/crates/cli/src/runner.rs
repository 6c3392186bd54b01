//! Executes resolved plans: paired TCL-2 runs, bound reports and oracle checks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use strobe_core::bath::BathFamily;
use strobe_core::bounds::{table_bound_in, Regime, RegimeParams};
use strobe_core::error::Error;
use strobe_core::models::{
    five_qubit_model, gate_schedule, toric_vertex_model, ModelKind, ModelSpec, Mu, PulseSchedule,
};
use strobe_core::oracle::{exact_reduced_evolution, JointMode, JointSpec, DEFAULT_CAP};
use strobe_core::scalar::{real, CVector};
use strobe_core::tcl2::{cross_distance, evolve, metrics, state_metrics, MetricRow, Tcl2Options};
use strobe_core::Operator;

use crate::config::{BoundAxis, Entry, ExperimentConfig, InitialState, Picture, Plan};
use crate::error::CliError;
use crate::output::{fmt_float, metrics_csv, write_file};

/// One computed trajectory with its output file name.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub mu: Mu,
    /// Cycle time in config units.
    pub period: f64,
    pub stride: usize,
    /// One row per cycle.
    pub rows: Vec<MetricRow<f64>>,
    /// Paired trace distance to the matching target, per cycle.
    pub d_cross: Option<Vec<f64>>,
    pub file: String,
}

impl Series {
    pub fn csv(&self) -> String {
        match &self.d_cross {
            Some(d) => metrics_csv(&self.rows, self.period, self.stride, &[("d_cross", d)]),
            None => metrics_csv(&self.rows, self.period, self.stride, &[]),
        }
    }

    pub fn summary(&self, id: &str) -> String {
        let last = self.rows.last().expect("a trajectory has at least one row");
        let max_trace = self.rows.iter().fold(0.0f64, |m, r| m.max(r.trace_dev));
        let max_herm = self.rows.iter().fold(0.0f64, |m, r| m.max(r.herm_dev));
        let min_eig = self.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.min_eig));
        let label = if self.label.is_empty() { String::new() } else { format!(" {}", self.label) };
        let cross = match &self.d_cross {
            Some(d) => format!(" d_cross={:.6e}", d[last.n]),
            None => String::new(),
        };
        format!(
            "{id}{label} {}: N={} P_g={:.6}{cross} max_trace_dev={:.2e} max_herm_dev={:.2e} min_eig={:.2e}",
            self.mu, last.n, last.p_g, max_trace, max_herm, min_eig
        )
    }
}

fn core_err(e: Error) -> CliError {
    match e {
        Error::Diverged { .. } | Error::Quadrature(_) | Error::NotHermitian(_) => {
            CliError::Numerical { message: e.to_string(), diagnostics: None }
        }
        other => CliError::Config(other.to_string()),
    }
}

pub fn build_model(entry: &Entry) -> Result<ModelSpec<f64>, CliError> {
    match entry.model {
        ModelKind::ToricVertex => toric_vertex_model(entry.energy),
        ModelKind::FiveQubit => five_qubit_model(entry.energy),
    }
    .map_err(core_err)
}

pub fn build_schedule(model: &ModelSpec<f64>, entry: &Entry) -> Result<PulseSchedule<f64>, CliError> {
    gate_schedule(model, 1.0, entry.ratio, entry.spacing).map_err(core_err)
}

pub fn initial_state(model: &ModelSpec<f64>, which: InitialState) -> Result<Operator, CliError> {
    let dim = model.dim();
    let state = match which {
        InitialState::Default => model.default_initial_state(),
        InitialState::Zero => {
            let mut psi = CVector::<f64>::zeros(dim);
            psi[0] = real(1.0);
            Operator::pure_state(&psi)
        }
        InitialState::Plus => Operator::pure_state(&CVector::<f64>::from_element(dim, real(1.0))),
    };
    state.map_err(core_err)
}

fn file_name(id: &str, label: &str, suffix: &str) -> String {
    if label.is_empty() {
        format!("{id}_{suffix}.csv")
    } else {
        format!("{id}_{label}_{suffix}.csv")
    }
}

/// Runs every requested trajectory of the plan in entry order.
pub fn compute(plan: &Plan) -> Result<Vec<Series>, CliError> {
    let mut out = Vec::new();
    let mut targets: BTreeMap<usize, strobe_core::tcl2::TrajectoryRecord<f64>> = BTreeMap::new();
    let want_tar = plan.pictures.contains(&Picture::Tar);
    let want_sim = plan.pictures.contains(&Picture::Sim);
    for entry in &plan.entries {
        let model = build_model(entry)?;
        let schedule = build_schedule(&model, entry)?;
        let rho0 = initial_state(&model, plan.initial_state)?;
        let opts = Tcl2Options::new(entry.dt).refined(entry.refinement);
        let run = |mu| evolve(&rho0, mu, &model, &schedule, &entry.bath, &opts, entry.cycles).map_err(core_err);
        if want_tar && !targets.contains_key(&entry.target_key) {
            let rec = run(Mu::Tar)?;
            let label = if plan.shared_target { String::new() } else { entry.label.clone() };
            out.push(Series {
                file: file_name(&plan.id, &label, "tar"),
                label,
                mu: Mu::Tar,
                period: entry.period,
                stride: entry.stride,
                rows: metrics(&rec, &model).map_err(core_err)?,
                d_cross: None,
            });
            targets.insert(entry.target_key, rec);
        }
        if want_sim {
            let rec = run(Mu::Sim)?;
            let d_cross = match targets.get(&entry.target_key) {
                Some(t) => Some(cross_distance(t, &rec).map_err(core_err)?),
                None => None,
            };
            out.push(Series {
                file: file_name(&plan.id, &entry.label, "sim"),
                label: entry.label.clone(),
                mu: Mu::Sim,
                period: entry.period,
                stride: entry.stride,
                rows: metrics(&rec, &model).map_err(core_err)?,
                d_cross,
            });
        }
    }
    Ok(out)
}

fn with_diagnostics(err: CliError, dir: &Path, id: &str) -> CliError {
    match err {
        CliError::Numerical { message, .. } => {
            let path = write_file(dir, &format!("{id}_diagnostics.txt"), &format!("{message}\n")).ok();
            CliError::Numerical { message, diagnostics: path }
        }
        other => other,
    }
}

/// `run` subcommand: computes, writes CSVs and returns the summary lines.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let plan = cfg.resolve()?;
    let series = compute(&plan).map_err(|e| with_diagnostics(e, dir, &plan.id))?;
    let mut lines = Vec::with_capacity(series.len());
    for s in &series {
        write_file(dir, &s.file, &s.csv())?;
        lines.push(s.summary(&plan.id));
    }
    Ok(lines)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundPoint {
    pub label: String,
    pub n: usize,
    pub r_m: f64,
    pub eps_max: f64,
    pub x_bar: f64,
    pub x_c: f64,
    pub bath_scale: f64,
    pub margin: f64,
    /// `None` between regimes.
    pub regime: Option<String>,
    pub total: Option<f64>,
    pub stroboscopic: Option<f64>,
    pub multi_gate: Option<f64>,
    pub regime_i: bool,
    pub regime_ii: bool,
    pub regime_iii: bool,
    pub low_frequency_support: bool,
}

fn parse_regime(s: &str) -> Result<Regime, CliError> {
    match s {
        "I" => Ok(Regime::I),
        "II" => Ok(Regime::II),
        "III" => Ok(Regime::III),
        other => Err(CliError::Config(format!("bound.regime: expected I, II or III, got {other:?}"))),
    }
}

/// `bound` subcommand: one report per entry and sweep point.
pub fn bound_reports(cfg: &ExperimentConfig) -> Result<Vec<BoundPoint>, CliError> {
    let plan = cfg.resolve()?;
    let section = cfg.bound.clone().unwrap_or(crate::config::BoundSection {
        margin: strobe_core::bounds::DEFAULT_MARGIN,
        regime: None,
        sweep: None,
    });
    let forced = section.regime.as_deref().map(parse_regime).transpose()?;
    let mut out = Vec::new();
    for entry in &plan.entries {
        let model = build_model(entry)?;
        let base = RegimeParams::from_model(&model, &entry.bath, entry.cycles, entry.ratio).map_err(core_err)?;
        let points: Vec<RegimeParams<f64>> = match &section.sweep {
            None => vec![base],
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut p = base;
                    match s.over {
                        BoundAxis::N => {
                            if v < 0.0 || v.fract() != 0.0 {
                                return Err(CliError::Config(format!("bound.sweep.values: {v} is not a cycle count")));
                            }
                            p.n_cycles = v as usize;
                        }
                        BoundAxis::RM => p.r_m = v,
                    }
                    p.validate().map_err(core_err)?;
                    Ok(p)
                })
                .collect::<Result<_, _>>()?,
        };
        for p in points {
            let flags = p.flags(section.margin);
            let report = forced.or(flags.regime()).map(|r| table_bound_in(&p, r, section.margin));
            let ratios = p.ratios();
            out.push(BoundPoint {
                label: entry.label.clone(),
                n: p.n_cycles,
                r_m: p.r_m,
                eps_max: p.eps_max,
                x_bar: p.x_bar,
                x_c: p.x_c,
                bath_scale: ratios.bath_scale,
                margin: section.margin,
                regime: report.map(|r| r.regime.id().to_string()),
                total: report.map(|r| r.total),
                stroboscopic: report.map(|r| r.stroboscopic),
                multi_gate: report.map(|r| r.multi_gate),
                regime_i: flags.regime_i,
                regime_ii: flags.regime_ii,
                regime_iii: flags.regime_iii,
                low_frequency_support: flags.low_frequency_support,
            });
        }
    }
    Ok(out)
}

pub fn bound_csv(points: &[BoundPoint]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    let mut out = String::from(
        "label,N,R_M,eps_max,x_bar,x_c,bath_scale,margin,regime,total,stroboscopic,multi_gate,regime_i,regime_ii,regime_iii\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.label,
            p.n,
            fmt_float(p.r_m),
            fmt_float(p.eps_max),
            fmt_float(p.x_bar),
            fmt_float(p.x_c),
            fmt_float(p.bath_scale),
            fmt_float(p.margin),
            p.regime.as_deref().unwrap_or("none"),
            opt(p.total),
            opt(p.stroboscopic),
            opt(p.multi_gate),
            p.regime_i,
            p.regime_ii,
            p.regime_iii
        ));
    }
    out
}

/// `bound` subcommand: writes `<id>_bound.csv` and returns the JSON report.
pub fn bound(cfg: &ExperimentConfig, dir: &Path) -> Result<String, CliError> {
    let points = bound_reports(cfg)?;
    write_file(dir, &format!("{}_bound.csv", cfg.id), &bound_csv(&points))?;
    serde_json::to_string_pretty(&points).map_err(|e| CliError::Config(e.to_string()))
}

/// Oracle-vs-TCL-2 comparison for one picture of one entry.
#[derive(Clone, Debug)]
pub struct OracleSeries {
    pub label: String,
    pub mu: Mu,
    pub period: f64,
    pub stride: usize,
    /// Metrics of the exact reduced states, one row per cycle.
    pub rows: Vec<MetricRow<f64>>,
    pub leakage: Vec<f64>,
    /// Trace distance between the exact and TCL-2 states, per cycle.
    pub d_tcl2: Vec<f64>,
    pub leakage_flagged: bool,
    pub file: String,
}

impl OracleSeries {
    pub fn csv(&self) -> String {
        metrics_csv(&self.rows, self.period, self.stride, &[("leakage", &self.leakage), ("d_tcl2", &self.d_tcl2)])
    }

    pub fn summary(&self, id: &str) -> String {
        let label = if self.label.is_empty() { String::new() } else { format!(" {}", self.label) };
        let max_d = self.d_tcl2.iter().fold(0.0f64, |m, &d| m.max(d));
        let max_leak = self.leakage.iter().fold(0.0f64, |m, &d| m.max(d));
        format!(
            "{id}{label} {} oracle: N={} max_d_tcl2={max_d:.6e} max_leakage={max_leak:.2e}{}",
            self.mu,
            self.rows.len() - 1,
            if self.leakage_flagged { " (truncation flagged)" } else { "" }
        )
    }
}

/// Exact joint model of the config's discrete bath.
pub fn joint_spec(cfg: &ExperimentConfig, entry: &Entry, model: &ModelSpec<f64>) -> Result<JointSpec<f64>, CliError> {
    let oracle = cfg.oracle.as_ref().ok_or_else(|| CliError::Config("oracle: section required for validate".into()))?;
    let BathFamily::Discrete { modes } = &entry.bath.family else {
        return Err(CliError::Config("bath.family: validate needs a discrete bath".into()));
    };
    if oracle.n_max < 2 {
        return Err(CliError::Config("oracle.n_max: keep at least two levels per mode".into()));
    }
    let k = model.couplings.len();
    let joint_modes = if entry.bath.independent_baths {
        modes
            .iter()
            .flat_map(|m| {
                (0..k).map(move |site| {
                    let mut couplings = vec![0.0; k];
                    couplings[site] = m.g;
                    JointMode { omega: m.omega, couplings }
                })
            })
            .collect()
    } else {
        modes.iter().map(|m| JointMode { omega: m.omega, couplings: vec![m.g; k] }).collect()
    };
    let spec = JointSpec {
        model: model.clone(),
        modes: joint_modes,
        n_max: oracle.n_max,
        beta: entry.bath.beta,
        cap: oracle.cap.unwrap_or(DEFAULT_CAP),
    };
    spec.validate().map_err(core_err)?;
    Ok(spec)
}

pub fn compute_validation(cfg: &ExperimentConfig) -> Result<Vec<OracleSeries>, CliError> {
    let plan = cfg.resolve()?;
    let mut out = Vec::new();
    for entry in &plan.entries {
        let model = build_model(entry)?;
        let schedule = build_schedule(&model, entry)?;
        let spec = joint_spec(cfg, entry, &model)?;
        let rho0 = initial_state(&model, plan.initial_state)?;
        let opts = Tcl2Options::new(entry.dt).refined(entry.refinement);
        let times: Vec<f64> = (0..=entry.cycles).map(|n| n as f64).collect();
        for &p in &plan.pictures {
            let mu = Mu::from(p);
            let exact = exact_reduced_evolution(&rho0, &spec, mu, Some(&schedule), &times).map_err(core_err)?;
            let tcl2 = evolve(&rho0, mu, &model, &schedule, &entry.bath, &opts, entry.cycles).map_err(core_err)?;
            let d_tcl2 = exact
                .states
                .iter()
                .zip(&tcl2.states)
                .map(|(a, b)| strobe_core::operator::trace_distance(a, b))
                .collect::<Result<Vec<_>, _>>()
                .map_err(core_err)?;
            let suffix = format!("{}_oracle", mu.id());
            out.push(OracleSeries {
                file: file_name(&plan.id, &entry.label, &suffix),
                label: entry.label.clone(),
                mu,
                period: entry.period,
                stride: entry.stride,
                rows: state_metrics(&exact.states, &rho0, &model, 1.0).map_err(core_err)?,
                leakage: exact.leakage,
                d_tcl2,
                leakage_flagged: exact.leakage_flagged,
            });
        }
    }
    Ok(out)
}

/// `validate` subcommand: writes one comparison CSV per picture.
pub fn validate(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let series = compute_validation(cfg).map_err(|e| with_diagnostics(e, dir, &cfg.id))?;
    let mut lines = Vec::with_capacity(series.len());
    for s in &series {
        write_file(dir, &s.file, &s.csv())?;
        lines.push(s.summary(&cfg.id));
    }
    Ok(lines)
}
