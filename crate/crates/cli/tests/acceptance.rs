//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p strobe-cli --test acceptance -- 1 2 3`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use strobe_cli::config::ExperimentConfig;
use strobe_cli::presets::{preset, PRESETS};
use strobe_cli::runner::{compute, compute_validation, Series};
use strobe_core::bath::{BathSpec, Correlation};
use strobe_core::bounds::{
    channel_difference, d0_closed, d0_regime, d_numeric, perturbative_difference, spectral_d0_integral, table_bound,
    table_bound_in, Channel, ChannelDifference, DifferenceOptions, Regime, RegimeParams, DEFAULT_MARGIN,
};
use strobe_core::models::{five_qubit_model, gate_schedule, toric_vertex_model, GateSpacing, ModelKind, ModelSpec, Mu};
use strobe_core::scalar::{cplx, real, CMatrix, CVector, C};
use strobe_core::tcl2::{cross_distance, evolve, Tcl2Options};
use strobe_core::Operator;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Runs = BTreeMap<&'static str, Result<Vec<Series>, String>>;

fn preset_series<'a>(runs: &'a Runs, name: &str) -> Result<&'a [Series], String> {
    match runs.get(name) {
        Some(Ok(s)) => Ok(s),
        Some(Err(e)) => Err(format!("{name} failed: {e}")),
        None => Err(format!("{name} was not run")),
    }
}

fn sim<'a>(series: &'a [Series], label: &str) -> Result<&'a Series, String> {
    series.iter().find(|s| s.mu == Mu::Sim && s.label == label).ok_or_else(|| format!("no simulator series {label}"))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn d_cross(s: &Series) -> Result<&[f64], String> {
    s.d_cross.as_deref().ok_or_else(|| format!("{} has no d_cross", s.label))
}

// 1. Gate products reproduce the target propagator.
fn exact_simulator_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut counts = Vec::new();
    for kind in [ModelKind::ToricVertex, ModelKind::FiveQubit] {
        let unit = kind.phi(1.0f64, 1.0);
        for phi in [0.01, 0.05, 0.1] {
            let energy = phi / unit;
            let model = match kind {
                ModelKind::ToricVertex => toric_vertex_model(energy),
                ModelKind::FiveQubit => five_qubit_model(energy),
            }
            .unwrap();
            let s = gate_schedule(&model, 1.0, 0.5, GateSpacing::Endpoints).unwrap();
            let diff = &s.cycle_unitary() - &model.target_propagator(1.0);
            worst = worst.max(diff.spectral_norm());
            if phi == 0.01 {
                counts.push(s.gate_count());
            }
        }
    }
    outcome(worst <= 1e-10 && counts == [5, 20], format!("max ||g_M..g_1 - U_tar(T)|| = {worst:.2e}, gates {counts:?}"))
}

// 2. D₀ closed form against quadrature, and the regime approximations.
fn d0_cross_validation() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..5 {
                let (c, x, eps) = (0.25 * i as f64, -10.0 + 5.0 * j as f64, -0.2 + 0.1 * k as f64);
                let num = d_numeric(c, x, eps, 1e-6).unwrap();
                worst = worst.max((num - d0_closed(c, x, eps)).norm());
            }
        }
    }
    let points = [(0.5, 1e-4, 0.02, Regime::I), (0.7, 0.05, 1e-4, Regime::II), (0.9, 40.0, 1e-3, Regime::III)];
    let rel: Vec<f64> = points
        .iter()
        .map(|&(c, x, eps, r)| {
            let exact = d0_closed(c, x, eps);
            (d0_regime(c, x, eps, r) - exact).norm() / exact.norm()
        })
        .collect();
    let worst_rel = rel.iter().fold(0.0f64, |m, &v| m.max(v));
    outcome(
        worst <= 1e-6 && worst_rel <= 0.1,
        format!("lattice max |D - D0| = {worst:.2e}; regime rel errors I/II/III = {}", sci(&rel)),
    )
}

// 3. Zero-temperature Ohmic identities.
fn ohmic_identities() -> Outcome {
    let (eta, x_c) = (0.02, 0.02);
    let bath = BathSpec::ohmic(eta, 1.0, x_c, f64::INFINITY).unwrap();
    let f0 = Correlation::new(&bath).unwrap().f(0.0).unwrap();
    let f0_rel = (f0 - real(eta * x_c * x_c)).norm() / (eta * x_c * x_c);
    // The identity is the leading order in ε.
    let eps = 1e-5;
    let lhs = spectral_d0_integral(&bath, eps, 1.0).unwrap();
    let rhs = (real(-x_c) + C::<f64>::i() * cplx(1.0, -x_c).ln()) * (eta * eps);
    let gap = (lhs - rhs).norm();
    outcome(
        f0_rel <= 1e-9 && gap <= 1e-8,
        format!("f(0) rel err = {f0_rel:.2e}; |int J D0 - closed| = {gap:.2e} at eps = {eps:e}"),
    )
}

fn stressed_final_states(mu: Mu, refinement: usize) -> Vec<Operator> {
    let model = toric_vertex_model(1.0).unwrap();
    let s = gate_schedule(&model, 1.0, 0.3, GateSpacing::Endpoints).unwrap();
    let bath = BathSpec::ohmic(0.5, 1.0, 2.0, 4.0).unwrap();
    let rho0 = model.default_initial_state().unwrap();
    let opts = Tcl2Options::new(0.05).refined(refinement);
    evolve(&rho0, mu, &model, &s, &bath, &opts, 3).unwrap().states
}

// 4. Physicality over every preset, and the integrator's convergence order.
fn physicality(runs: &Runs) -> Outcome {
    let mut worst_trace = 0.0f64;
    let mut worst_herm = 0.0f64;
    let mut failures = Vec::new();
    for (name, res) in runs {
        match res {
            Ok(series) => {
                for r in series.iter().flat_map(|s| &s.rows) {
                    worst_trace = worst_trace.max(r.trace_dev);
                    worst_herm = worst_herm.max(r.herm_dev);
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let mut orders = Vec::new();
    for mu in [Mu::Tar, Mu::Sim] {
        let runs: Vec<_> = [1, 2, 4].iter().map(|&r| stressed_final_states(mu, r)).collect();
        let gap = |a: &[Operator], b: &[Operator]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max(x.max_abs_diff(y)));
        orders.push((gap(&runs[0], &runs[1]) / gap(&runs[1], &runs[2])).log2());
    }
    let min_order = orders.iter().fold(f64::INFINITY, |m, &o| m.min(o));
    outcome(
        failures.is_empty() && worst_trace <= 1e-8 && worst_herm <= 1e-8 && min_order >= 3.5,
        format!(
            "{} presets, max |Tr-1| = {worst_trace:.2e}, max herm dev = {worst_herm:.2e}; \
             observed order tar/sim = {orders:.2?}{}",
            runs.len(),
            if failures.is_empty() { String::new() } else { format!("; errors: {failures:?}") }
        ),
    )
}

// 5. Slow bath, gate window swept.
fn fig4a(runs: &Runs) -> Result<Outcome, String> {
    let series = preset_series(runs, "fig4A")?;
    let tar = series.iter().find(|s| s.mu == Mu::Tar).ok_or("no target series")?;
    let min_pg = tar.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.p_g));
    let last: Vec<f64> = ["R0.01", "R0.1", "R0.4"]
        .iter()
        .map(|l| sim(series, l).and_then(d_cross).map(|d| d[500]))
        .collect::<Result<_, _>>()?;
    Ok(outcome(
        tar.rows.len() == 501 && min_pg >= 0.85 && last[0] < last[1] && last[1] < last[2],
        format!("min target P_g = {min_pg:.4}; d_cross(500) for R = 0.01/0.1/0.4: {}", sci(&last)),
    ))
}

// 6. Cycle time swept at fixed gate window and physical parameters.
fn fig4b(runs: &Runs) -> Result<Outcome, String> {
    let series = preset_series(runs, "fig4B")?;
    let mut sims: Vec<&Series> = series.iter().filter(|s| s.mu == Mu::Sim).collect();
    sims.sort_by(|a, b| a.period.total_cmp(&b.period));
    let interval = 5e-6;
    let duration = sims[0].period * (sims[0].rows.len() - 1) as f64;
    let samples = (duration / interval).round() as usize;
    let mut violations = 0;
    let mut finals = Vec::new();
    for k in 1..=samples {
        let at: Vec<f64> = sims
            .iter()
            .map(|s| {
                let n = (k as f64 * interval / s.period).round() as usize;
                d_cross(s).map(|d| d[n])
            })
            .collect::<Result<_, _>>()?;
        violations += at.windows(2).filter(|w| w[1] >= w[0]).count();
        if k == samples {
            finals = at;
        }
    }
    Ok(outcome(
        sims.len() == 6 && samples > 0 && violations == 0,
        format!(
            "{} periods, {samples} common samples, {violations} ordering violations; final d_cross by increasing T: {}",
            sims.len(),
            sci(&finals)
        ),
    ))
}

// 7. Bath cutoff comparable to the cycle rate.
fn fig5(runs: &Runs) -> Result<Outcome, String> {
    let series = preset_series(runs, "fig5")?;
    let mut max_d = 0.0f64;
    let mut last = Vec::new();
    for label in ["nuc0.5", "nuc1", "nuc2"] {
        let d = d_cross(sim(series, label)?)?;
        max_d = d.iter().fold(max_d, |m, &v| m.max(v));
        last.push(*d.last().unwrap());
    }
    Ok(outcome(
        max_d <= 2e-3 && last[0] < last[1] && last[1] < last[2],
        format!("max d_cross = {max_d:.3e}; final d_cross for x_c = 0.5/1/2: {}", sci(&last)),
    ))
}

// 8. Five-qubit code, gate window swept.
fn fig7a(runs: &Runs) -> Result<Outcome, String> {
    let series = preset_series(runs, "fig7A")?;
    let mut last = Vec::new();
    let mut spreads = Vec::new();
    for label in ["R0.01", "R0.1", "R0.4", "R0.7"] {
        let d = d_cross(sim(series, label)?)?;
        let tail = &d[d.len() * 3 / 4..];
        let hi = tail.iter().fold(0.0f64, |m, &v| m.max(v));
        let lo = tail.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        spreads.push((hi - lo) / hi);
        last.push(*d.last().unwrap());
    }
    let ordered = last.windows(2).all(|w| w[0] < w[1]);
    let flat = spreads.iter().all(|&s| s <= 0.2);
    Ok(outcome(
        ordered && flat,
        format!("final d_cross by R: {}; last-quarter relative spread {spreads:.3?}", sci(&last)),
    ))
}

fn with_coupling(base: &ExperimentConfig, g: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.bath.modes[0].g = g;
    cfg
}

// 9. TCL-2 against exact joint evolution with one vacuum mode.
fn oracle_equivalence() -> Result<Outcome, String> {
    let base = preset("validate-toric").map_err(|e| e.to_string())?;
    let gs = [0.0025, 0.005, 0.01, 0.02];
    let mut gaps: BTreeMap<Mu, Vec<f64>> = BTreeMap::new();
    let mut leakage = false;
    for g in gs {
        for s in compute_validation(&with_coupling(&base, g)).map_err(|e| e.to_string())? {
            leakage |= s.leakage_flagged;
            gaps.entry(s.mu).or_default().push(s.d_tcl2.iter().fold(0.0f64, |m, &v| m.max(v)));
        }
    }
    let slope = |y: &[f64]| {
        let xs: Vec<f64> = gs.iter().map(|g| g.ln()).collect();
        let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    };
    let mut pass = !leakage && gaps.len() == 2;
    let mut parts = Vec::new();
    for (mu, y) in &gaps {
        let s = slope(y);
        let at_max = *y.last().unwrap();
        pass &= at_max <= 5e-3 && s >= 3.5;
        parts.push(format!("{mu}: max gap at g = 0.02 is {at_max:.2e}, slope {s:.2}"));
    }
    Ok(outcome(pass, parts.join("; ")))
}

fn pauli_product_states(n_qubits: usize) -> Vec<Operator> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let singles: [[C<f64>; 2]; 6] = [
        [real(1.0), real(0.0)],
        [real(0.0), real(1.0)],
        [real(h), real(h)],
        [real(h), real(-h)],
        [real(h), cplx(0.0, h)],
        [real(h), cplx(0.0, -h)],
    ];
    let mut out = Vec::new();
    for mut code in 0..6usize.pow(n_qubits as u32) {
        let mut psi = CVector::<f64>::from_element(1, real(1.0));
        for _ in 0..n_qubits {
            let s = singles[code % 6];
            code /= 6;
            psi = psi.kronecker(&CVector::<f64>::from_column_slice(&s));
        }
        out.push(Operator::pure_state(&psi).unwrap());
    }
    out
}

fn structural_gaps(diff: &ChannelDifference<f64>, rng: &mut impl Rng) -> (f64, f64) {
    let d = diff.total.dim();
    let (mut adj, mut tr) = (0.0f64, 0.0f64);
    for _ in 0..4 {
        let x = CMatrix::<f64>::from_fn(d, d, |_, _| cplx(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let scale = diff.norm * x.norm();
        let d3 = diff.delta3.apply(&x);
        let d2 = diff.delta2.apply(&x.adjoint()).adjoint();
        adj = adj.max((d3 - d2).norm() / scale);
        tr = tr.max(diff.apply(&x).trace().norm() / scale);
    }
    (adj, tr)
}

// 10. Perturbative difference map against paired TCL-2 runs.
fn perturbative_consistency() -> Outcome {
    let model = toric_vertex_model(0.1).unwrap();
    let bath = BathSpec::ohmic(0.02, 1.0, 0.02, 40.0).unwrap();
    let probes = pauli_product_states(model.n_qubits);
    let reference = model.default_initial_state().unwrap();
    let opts = Tcl2Options::new(0.025);
    let mut rng = rand::rngs::StdRng::seed_from_u64(10);
    let (mut adj, mut tr, mut coincide) = (0.0f64, 0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut info = Vec::new();
    for r in [0.01, 0.1, 0.4] {
        let s = gate_schedule(&model, 1.0, r, GateSpacing::Endpoints).unwrap();
        let same = channel_difference(
            4,
            1.0,
            &model,
            Channel::Simulator(&s),
            Channel::Simulator(&s),
            &bath,
            &DifferenceOptions::default(),
        )
        .unwrap();
        coincide = coincide.max(same.norm);
        let mut tcl2_cache: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut paired = |idx: usize, rho: &Operator| -> Vec<f64> {
            if let Some((_, d)) = tcl2_cache.iter().find(|(i, _)| *i == idx) {
                return d.clone();
            }
            let tar = evolve(rho, Mu::Tar, &model, &s, &bath, &opts, 10).unwrap();
            let sim = evolve(rho, Mu::Sim, &model, &s, &bath, &opts, 10).unwrap();
            let d = cross_distance(&tar, &sim).unwrap();
            tcl2_cache.push((idx, d.clone()));
            d
        };
        let reference_d = paired(usize::MAX, &reference);
        let mut norm_last = 0.0;
        for n in 1..=10 {
            let diff = perturbative_difference(n, &model, &s, None, &bath).unwrap();
            let (a, t) = structural_gaps(&diff, &mut rng);
            adj = adj.max(a);
            tr = tr.max(t);
            // Worst-case probe: the product state the map moves furthest.
            let (idx, _) = probes
                .iter()
                .enumerate()
                .map(|(i, p)| (i, diff.trace_distance_from(p)))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let d = paired(idx, &probes[idx])[n];
            let ratio = diff.norm / d;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            norm_last = diff.norm;
        }
        let ratio_ref = norm_last / reference_d[10];
        info.push(format!("R={r}: code-state ratio {ratio_ref:.2}"));
    }
    outcome(
        adj <= 1e-10 && tr <= 1e-10 && coincide == 0.0 && lo >= 1.0 / 3.0 && hi <= 3.0,
        format!(
            "|D3 - D2^dag| = {adj:.1e}, |Tr D(X)| = {tr:.1e}, identical schedules {coincide:.1e}; \
             norm / d_cross at worst product probe in [{lo:.2}, {hi:.2}] for N <= 10 (info: {})",
            info.join(", ")
        ),
    )
}

fn ohmic_params(model: &ModelSpec<f64>, x_c: f64, n: usize) -> RegimeParams<f64> {
    let bath = BathSpec::ohmic(0.02, 1.0, x_c, f64::INFINITY).unwrap();
    RegimeParams::from_model(model, &bath, n, 0.0).unwrap()
}

// 11. Tabulated bounds.
fn table_bounds() -> Outcome {
    let eta = 0.02;
    let mut worst = 0.0f64;
    let mut regimes = Vec::new();
    // Toric vertex: levels ±ε/2 give three transition frequencies and ε_max = ε.
    let pairs = 9.0;
    for (eps, x_c, expect) in [(0.1, 0.02, Regime::I), (1e-4, 0.05, Regime::II), (4e-4, 8.0, Regime::III)] {
        let model = toric_vertex_model(eps).unwrap();
        let n = 50;
        let rep = table_bound(&ohmic_params(&model, x_c, n), DEFAULT_MARGIN).unwrap();
        let f0 = eta * x_c * x_c;
        let nf = n as f64;
        let s1 = match expect {
            Regime::I | Regime::II => nf * nf * pairs * eps * f0,
            Regime::III => nf * pairs * eps * (1.0 / x_c) * f0,
        };
        regimes.push(rep.regime);
        worst = worst.max((rep.total - s1).abs() / s1).max(rep.multi_gate.abs());
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut violations = 0;
    for _ in 0..300 {
        let model = toric_vertex_model(1.0).unwrap();
        let mut p = ohmic_params(&model, 10f64.powf(rng.gen_range(-3.0..1.0)), rng.gen_range(1..500));
        p.eps_max = 10f64.powf(rng.gen_range(-4.0..-0.5));
        p.r_m = rng.gen_range(0.0..0.9);
        for regime in [Regime::I, Regime::II, Regime::III] {
            let base = table_bound_in(&p, regime, DEFAULT_MARGIN).total;
            let mut more_n = p;
            more_n.n_cycles += rng.gen_range(1..100);
            let mut more_r = p;
            more_r.r_m = (p.r_m + rng.gen_range(0.0..0.1)).min(1.0);
            let mut more_e = p;
            more_e.eps_max *= 1.0 + rng.gen::<f64>();
            for q in [more_n, more_r, more_e] {
                if table_bound_in(&q, regime, DEFAULT_MARGIN).total < base {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-9 && regimes == [Regime::I, Regime::II, Regime::III] && violations == 0,
        format!("R_M = 0 vs single-pulse formulas: max rel err {worst:.1e} over regimes {regimes:?}; {violations} monotonicity violations in 2700 checks"),
    )
}

fn report(n: usize, name: &str, start: Instant, res: Result<Outcome, String>) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match res {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, e),
    };
    println!("criterion {n:>2} {name}: {} ({detail}) [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut results = Vec::new();
    macro_rules! check {
        ($n:expr, $name:expr, $body:expr) => {
            if wanted($n) {
                let start = Instant::now();
                results.push(report($n, $name, start, $body));
            }
        };
    }
    check!(1, "exact simulator identity", Ok(exact_simulator_identity()));
    check!(2, "D0 cross-validation", Ok(d0_cross_validation()));
    check!(3, "Ohmic integral identities", Ok(ohmic_identities()));

    let needs_presets = (4..=8).any(wanted);
    let start = Instant::now();
    let mut runs: Runs = BTreeMap::new();
    if needs_presets {
        for (name, _) in PRESETS {
            let only = if wanted(4) { None } else { Some(["fig4A", "fig4B", "fig5", "fig7A"]) };
            if only.is_some_and(|o| !o.contains(&name)) {
                continue;
            }
            let res = preset(name).and_then(|cfg| cfg.resolve()).and_then(|plan| compute(&plan));
            runs.insert(name, res.map_err(|e| e.to_string()));
        }
        println!("preset runs finished in {:.1} s", start.elapsed().as_secs_f64());
    }
    check!(4, "TCL-2 physicality", Ok(physicality(&runs)));
    check!(5, "slow bath, gate window sweep", fig4a(&runs));
    check!(6, "slow bath, cycle time sweep", fig4b(&runs));
    check!(7, "bath cutoff near cycle rate", fig5(&runs));
    check!(8, "five-qubit gate window sweep", fig7a(&runs));
    check!(9, "oracle equivalence", oracle_equivalence());
    check!(10, "perturbative map consistency", Ok(perturbative_consistency()));
    check!(11, "tabulated bound sanity", Ok(table_bounds()));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
