//! Target Hamiltonians, exact gate schedules and interaction-picture couplings
//! for the toric-code vertex and five-qubit-code models.

use std::fmt;

use crate::error::{Error, Result};
use crate::operator::{hermitian_eig, pauli_string, unitary_exp, Operator, Pauli, SpectralDecomposition};
use crate::scalar::{cis, real, CMatrix, CVector, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// `H = −(ω/2) X₁X₂X₃X₄` with `A_k = Z_k`.
    ToricVertex,
    /// `H = −γ Σ_j S_j` over the four five-qubit-code stabilizers, `A_k = Z_k`.
    FiveQubit,
}

impl ModelKind {
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::ToricVertex => "toric",
            ModelKind::FiveQubit => "five-qubit",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One gate in a cycle: `exp(iθG)` for a Pauli string `G`.
#[derive(Clone, Debug)]
pub struct GateSpec {
    pub generator: Vec<(usize, Pauli)>,
    /// Rotation angle: a fixed `θ` or the cycle parameter `φ`.
    pub angle: GateAngle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateAngle {
    Fixed(f64),
    Phi,
}

#[derive(Clone, Debug)]
pub struct ModelSpec<R: Real> {
    pub kind: ModelKind,
    pub n_qubits: usize,
    /// `ω` (toric) or `γ` (five-qubit).
    pub energy_scale: R,
    pub h_tar: Operator<R>,
    pub couplings: Vec<Operator<R>>,
    pub spectral: SpectralDecomposition<R>,
    /// Distinct `ε′ − ε` over level pairs, ascending, including 0.
    pub transition_frequencies: Vec<R>,
    pub omega_max: R,
}

fn s(site: usize, p: Pauli) -> (usize, Pauli) {
    (site, p)
}

fn toric_stabilizer() -> Vec<(usize, Pauli)> {
    (1..=4).map(|k| s(k, Pauli::X)).collect()
}

fn five_qubit_stabilizers() -> [Vec<(usize, Pauli)>; 4] {
    use Pauli::*;
    [
        vec![s(1, X), s(2, Z), s(3, Z), s(4, X)],
        vec![s(2, X), s(3, Z), s(4, Z), s(5, X)],
        vec![s(1, X), s(3, X), s(4, Z), s(5, Z)],
        vec![s(1, Z), s(2, X), s(4, X), s(5, Z)],
    ]
}

/// Conjugation block `g₁⁻¹ g₂⁻¹ e^{iφG} g₂ g₁` as the five gates `g₁, g₂, e^{iφG}, g₂⁻¹, g₁⁻¹`.
fn conjugation_block(
    first: Vec<(usize, Pauli)>,
    second: Vec<(usize, Pauli)>,
    core: Vec<(usize, Pauli)>,
) -> Vec<GateSpec> {
    let q = std::f64::consts::FRAC_PI_4;
    vec![
        GateSpec { generator: first.clone(), angle: GateAngle::Fixed(q) },
        GateSpec { generator: second.clone(), angle: GateAngle::Fixed(q) },
        GateSpec { generator: core, angle: GateAngle::Phi },
        GateSpec { generator: second, angle: GateAngle::Fixed(-q) },
        GateSpec { generator: first, angle: GateAngle::Fixed(-q) },
    ]
}

impl ModelKind {
    /// Gate list in firing order (`g₁` first).
    pub fn gate_specs(self) -> Vec<GateSpec> {
        use Pauli::*;
        match self {
            ModelKind::ToricVertex => {
                conjugation_block(vec![s(3, Y), s(4, X)], vec![s(2, Y), s(3, Z)], vec![s(1, X), s(2, Z)])
            }
            ModelKind::FiveQubit => {
                let mut g = conjugation_block(vec![s(1, X), s(2, X)], vec![s(2, Y), s(3, X)], vec![s(3, Y), s(4, X)]);
                // Z4X5 rather than Z4Z5: only this choice conjugates X2Y5 onto S2.
                g.extend(conjugation_block(vec![s(3, Z), s(5, Y)], vec![s(4, Z), s(5, X)], vec![s(2, X), s(5, Y)]));
                g.extend(conjugation_block(vec![s(1, X), s(3, Y)], vec![s(3, Z), s(4, X)], vec![s(4, Y), s(5, Z)]));
                g.extend(conjugation_block(vec![s(4, X), s(5, X)], vec![s(2, Y), s(5, Y)], vec![s(1, Z), s(2, Z)]));
                g
            }
        }
    }

    /// `φ` as a function of cycle time: `ωT/2` (toric) or `γT` (five-qubit).
    pub fn phi<R: Real>(self, energy_scale: R, period: R) -> R {
        match self {
            ModelKind::ToricVertex => energy_scale * period * R::lit(0.5),
            ModelKind::FiveQubit => energy_scale * period,
        }
    }
}

fn build<R: Real>(kind: ModelKind, n_qubits: usize, energy_scale: R, h_tar: Operator<R>) -> Result<ModelSpec<R>> {
    let couplings = (1..=n_qubits).map(|k| pauli_string(&[(k, Pauli::Z)], n_qubits)).collect::<Result<Vec<_>>>()?;
    let spectral = hermitian_eig(&h_tar)?;
    let transition_frequencies = distinct_differences(&spectral.eigenvalues, energy_scale);
    let omega_max = transition_frequencies.iter().fold(R::zero(), |m, &w| m.max(w.abs()));
    Ok(ModelSpec { kind, n_qubits, energy_scale, h_tar, couplings, spectral, transition_frequencies, omega_max })
}

fn distinct_differences<R: Real>(levels: &[R], scale: R) -> Vec<R> {
    let tol = R::lit(1e-8).max(R::eps() * R::lit(300.0)) * scale;
    let mut diffs: Vec<R> = levels.iter().flat_map(|&a| levels.iter().map(move |&b| b - a)).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<R> = Vec::new();
    for d in diffs {
        match out.last() {
            Some(&last) if d - last <= tol => {}
            _ => out.push(d),
        }
    }
    // Snap the cluster containing zero to exactly zero.
    for w in out.iter_mut() {
        if w.abs() <= tol {
            *w = R::zero();
        }
    }
    out
}

fn check_positive<R: Real>(name: &str, v: R) -> Result<()> {
    if !(v > R::zero()) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Four-qubit toric-code vertex: `H = −(ω/2) X₁X₂X₃X₄`, `A_k = Z_k`.
pub fn toric_vertex_model<R: Real>(omega: R) -> Result<ModelSpec<R>> {
    check_positive("omega", omega)?;
    let x4 = pauli_string::<R>(&toric_stabilizer(), 4)?;
    let h = x4.scale(real(-omega * R::lit(0.5))).with_label("H_tar");
    build(ModelKind::ToricVertex, 4, omega, h)
}

/// Five-qubit code: `H = −γ Σ_j S_j`, `A_k = Z_k`.
pub fn five_qubit_model<R: Real>(gamma: R) -> Result<ModelSpec<R>> {
    check_positive("gamma", gamma)?;
    let mut h = Operator::zeros(32);
    for st in five_qubit_stabilizers() {
        h = &h + &pauli_string::<R>(&st, 5)?;
    }
    let h = h.scale(real(-gamma)).with_label("H_tar");
    build(ModelKind::FiveQubit, 5, gamma, h)
}

impl<R: Real> ModelSpec<R> {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn stabilizers(&self) -> Result<Vec<Operator<R>>> {
        match self.kind {
            ModelKind::ToricVertex => Ok(vec![pauli_string(&toric_stabilizer(), 4)?]),
            ModelKind::FiveQubit => five_qubit_stabilizers().iter().map(|st| pauli_string(st, 5)).collect(),
        }
    }

    /// Projector onto the lowest-energy eigenspace.
    pub fn ground_projector(&self) -> &Operator<R> {
        &self.spectral.projectors[0]
    }

    /// `(#distinct transition frequencies)²`, the frequency-pair count of the bounds.
    pub fn frequency_pair_count(&self) -> usize {
        self.transition_frequencies.len().pow(2)
    }

    /// `(|0000⟩+|1111⟩)/√2` for the toric vertex, `|0̄⟩ ∝ Π_j(1+S_j)|00000⟩`
    /// for the five-qubit code.
    pub fn default_initial_state(&self) -> Result<Operator<R>> {
        let dim = self.dim();
        match self.kind {
            ModelKind::ToricVertex => {
                let mut psi = CVector::<R>::zeros(dim);
                psi[0] = real(R::one());
                psi[dim - 1] = real(R::one());
                Operator::pure_state(&psi)
            }
            ModelKind::FiveQubit => {
                let mut psi = CVector::<R>::zeros(dim);
                psi[0] = real(R::one());
                for st in self.stabilizers()? {
                    psi = &psi + st.matrix() * &psi;
                }
                Operator::pure_state(&psi)
            }
        }
    }

    /// `A_k(ω) = Σ_{ε′−ε=ω} P_ε A_k P_ε′`, one entry per transition frequency
    /// with a nonzero block (zero blocks are dropped).
    pub fn frequency_components(&self, k: usize) -> Result<Vec<(R, Operator<R>)>> {
        let a = self.coupling(k)?;
        let tol = R::lit(1e-8).max(R::eps() * R::lit(300.0)) * self.energy_scale;
        let mut out: Vec<(R, Operator<R>)> = Vec::new();
        for &w in &self.transition_frequencies {
            let mut block = CMatrix::<R>::zeros(self.dim(), self.dim());
            for (e, p) in self.spectral.eigenvalues.iter().zip(&self.spectral.projectors) {
                for (e2, p2) in self.spectral.eigenvalues.iter().zip(&self.spectral.projectors) {
                    if (*e2 - *e - w).abs() <= tol {
                        block += p.matrix() * a.matrix() * p2.matrix();
                    }
                }
            }
            let op = Operator::from_matrix(block);
            if op.frobenius_norm() > R::lit(1e-12).max(R::eps() * R::lit(100.0)) {
                out.push((w, op));
            }
        }
        Ok(out)
    }

    pub fn coupling(&self, k: usize) -> Result<&Operator<R>> {
        self.couplings.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("coupling index {k} out of range 0..{}", self.couplings.len()))
        })
    }

    /// `exp(−iH_tar t)` from the cached spectral decomposition.
    pub fn target_propagator(&self, t: R) -> Operator<R> {
        let w = self.spectral.basis();
        let phases: Vec<_> = self.spectral.energies().iter().map(|&e| cis(-e * t)).collect();
        let mut wd = w.clone();
        for (j, mut col) in wd.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator::from_matrix(wd * w.adjoint())
    }
}

/// Convention for placing `M` gates inside `[0, τ_g]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GateSpacing {
    /// Gate `i` at `(i−1)·τ_g/(M−1)`: first at the cycle start, last at `τ_g`.
    #[default]
    Endpoints,
    /// Gate `i` at `(i−1)·τ_g/M`.
    Slots,
}

#[derive(Clone, Debug)]
pub struct PulseSchedule<R: Real> {
    pub period: R,
    pub tau_g: R,
    pub spacing: GateSpacing,
    /// Firing offsets within a cycle, nondecreasing.
    pub gate_times: Vec<R>,
    pub gates: Vec<Operator<R>>,
}

/// One constant piece of the simulator frame within a cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<R: Real> {
    pub start: R,
    pub end: R,
    /// Number of gates fired at or before `start`.
    pub fired: usize,
}

/// Builds the model's exact gate list for cycle time `period` and places it in
/// `[0, τ_g]`.
pub fn gate_schedule<R: Real>(
    model: &ModelSpec<R>,
    period: R,
    tau_g: R,
    spacing: GateSpacing,
) -> Result<PulseSchedule<R>> {
    check_positive("T", period)?;
    check_positive("tau_g", tau_g)?;
    if tau_g > period {
        return Err(Error::InvalidArgument(format!("tau_g = {tau_g} exceeds T = {period}")));
    }
    let phi = model.kind.phi(model.energy_scale, period);
    let specs = model.kind.gate_specs();
    let m = specs.len();
    let gates = specs
        .iter()
        .map(|g| {
            let gen = pauli_string::<R>(&g.generator, model.n_qubits)?;
            let theta = match g.angle {
                GateAngle::Fixed(a) => R::lit(a),
                GateAngle::Phi => phi,
            };
            unitary_exp(&gen, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    let gate_times = (0..m)
        .map(|i| match (spacing, m) {
            (_, 1) => R::zero(),
            (GateSpacing::Endpoints, _) => tau_g * R::count(i) / R::count(m - 1),
            (GateSpacing::Slots, _) => tau_g * R::count(i) / R::count(m),
        })
        .collect();
    Ok(PulseSchedule { period, tau_g, spacing, gate_times, gates })
}

/// One instantaneous gate `e^{−iH_tar T}` at the start of every cycle: the
/// zero-width limit of a continuous pulse compressed into the cycle start.
pub fn instantaneous_schedule<R: Real>(model: &ModelSpec<R>, period: R) -> Result<PulseSchedule<R>> {
    check_positive("T", period)?;
    Ok(PulseSchedule {
        period,
        tau_g: R::zero(),
        spacing: GateSpacing::Endpoints,
        gate_times: vec![R::zero()],
        gates: vec![model.target_propagator(period)],
    })
}

impl<R: Real> PulseSchedule<R> {
    pub fn ratio(&self) -> R {
        self.tau_g / self.period
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// `g_n ··· g_1` for the first `n` gates.
    pub fn partial_product(&self, n: usize) -> Operator<R> {
        let dim = self.gates[0].dim();
        self.gates[..n].iter().fold(Operator::identity(dim), |acc, g| g * &acc)
    }

    /// Full cycle product `g_M ··· g_1`.
    pub fn cycle_unitary(&self) -> Operator<R> {
        self.partial_product(self.gates.len())
    }

    /// Gates fired at or before offset `u` within a cycle.
    pub fn fired_by(&self, u: R) -> usize {
        self.gate_times.iter().take_while(|&&g| g <= u).count()
    }

    /// Gates fired strictly before offset `u` within a cycle.
    pub fn fired_before(&self, u: R) -> usize {
        self.gate_times.iter().take_while(|&&g| g < u).count()
    }

    /// Constant pieces of the simulator frame within one cycle, right-continuous
    /// at firing times; empty pieces are dropped.
    pub fn segments(&self) -> Vec<Segment<R>> {
        let mut bounds: Vec<R> = Vec::with_capacity(self.gate_times.len() + 2);
        bounds.push(R::zero());
        bounds.extend(self.gate_times.iter().copied());
        bounds.push(self.period);
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bounds.dedup();
        bounds
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| Segment { start: w[0], end: w[1], fired: self.fired_by(w[0]) })
            .collect()
    }
}

/// Evolution picture: the continuous target or the gate-sequence simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mu {
    Tar,
    Sim,
}

impl Mu {
    pub fn id(self) -> &'static str {
        match self {
            Mu::Tar => "tar",
            Mu::Sim => "sim",
        }
    }
}

impl fmt::Display for Mu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

fn cycle_split<R: Real>(t: R, period: R) -> (usize, R) {
    let q = (t / period).floor();
    let q_us = q.to_usize().unwrap_or(0);
    let u = t - period * q;
    (q_us, u.max(R::zero()))
}

/// `U_μ(t)`: `exp(−iH_tar t)` for the target; for the simulator the ordered
/// product of every gate fired before `t`, with no evolution between pulses.
///
/// A gate firing exactly at `t` is not yet included, so `U_sim(NT) = U_tar(NT)`
/// even when the first gate of each cycle fires at offset 0.
pub fn propagator<R: Real>(
    model: &ModelSpec<R>,
    schedule: Option<&PulseSchedule<R>>,
    mu: Mu,
    t: R,
) -> Result<Operator<R>> {
    if t < R::zero() || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    match mu {
        Mu::Tar => Ok(model.target_propagator(t)),
        Mu::Sim => {
            let sched =
                schedule.ok_or_else(|| Error::InvalidArgument("simulator propagator needs a schedule".into()))?;
            // Exactness makes U_sim(qT) = U_tar(qT).
            let (q, u) = cycle_split(t, sched.period);
            let base = model.target_propagator(sched.period * R::count(q));
            let partial = sched.partial_product(sched.fired_before(u));
            Ok(&partial * &base)
        }
    }
}

/// `U_μ(t)† A_k U_μ(t)` for every coupling.
pub fn interaction_a<R: Real>(
    model: &ModelSpec<R>,
    schedule: Option<&PulseSchedule<R>>,
    mu: Mu,
    t: R,
) -> Result<Vec<Operator<R>>> {
    let u = propagator(model, schedule, mu, t)?;
    Ok(model.couplings.iter().map(|a| a.conjugated_by(&u)).collect())
}
