//! Second-order time-convolutionless (TCL-2) dynamics of the target and the
//! gate-sequence simulator in the interaction picture.
//!
//! The generator is the standard Hermitian form
//! `dρ/dt = Σ_k [L_k ρ, A_k(t)] + [A_k(t), ρ L_k†]` with
//! `L_k = Σ_ℓ c_kℓ K⁺_ℓ(t)` and `K⁺(t) = ∫₀^t f(t−s) A(s) ds`.
//! Everything runs in the eigenbasis of `H_tar`, where
//! `U_tar(t)† X U_tar(t)` has entries `X_ab e^{−iω_ab t}`, `ω_ab = ε_b − ε_a`.

use nalgebra::DMatrix;

use crate::bath::{BathSpec, Correlation};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec, Mu, PulseSchedule};
use crate::operator::{trace_distance, Operator};
use crate::quadrature::GaussLegendre;
use crate::scalar::{cis, real, CMatrix, Real, C};

const PANEL_ORDER: usize = 8;

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tcl2Options<R: Real> {
    /// Base step `Δt`; must divide `T` with `T/Δt ≥ 20`.
    pub dt: R,
    /// Every step is split into this many substeps (step-halving studies).
    pub refinement: usize,
    /// Trace or Hermiticity drift that aborts the run.
    pub drift_tol: R,
}

impl<R: Real> Tcl2Options<R> {
    pub fn new(dt: R) -> Self {
        Self { dt, refinement: 1, drift_tol: R::lit(1e-6) }
    }

    pub fn refined(mut self, refinement: usize) -> Self {
        self.refinement = refinement;
        self
    }
}

/// Checks that `Δt` divides `T` with at least 20 steps per cycle and returns `T/Δt`.
pub fn steps_per_cycle<R: Real>(period: R, dt: R) -> Result<usize> {
    if !(dt > R::zero()) || !dt.is_finite() || !(period > R::zero()) {
        return Err(Error::Grid(format!("step {dt} and cycle time {period} must be positive")));
    }
    let ratio = period / dt;
    let n = ratio.round();
    if (ratio - n).abs() > R::lit(1e-9).max(R::eps() * R::lit(64.0)) * ratio {
        return Err(Error::Grid(format!("Δt = {dt} does not divide T = {period}")));
    }
    let n = n.to_usize().unwrap_or(0);
    if n < 20 {
        return Err(Error::Grid(format!("T/Δt = {n} is below the minimum of 20")));
    }
    Ok(n)
}

/// Frequency bookkeeping in the eigenbasis of `H_tar`.
#[derive(Clone, Debug)]
pub(crate) struct Frame<R: Real> {
    pub dim: usize,
    basis: CMatrix<R>,
    pub freqs: Vec<R>,
    /// Column-major entry index → index into `freqs`.
    pub freq_of: Vec<usize>,
}

impl<R: Real> Frame<R> {
    pub fn new(model: &ModelSpec<R>) -> Result<Self> {
        let spec = &model.spectral;
        let dim = spec.dim();
        let freqs = model.transition_frequencies.clone();
        let levels = spec.level_of();
        let mut freq_of = vec![0; dim * dim];
        for b in 0..dim {
            for a in 0..dim {
                let w = spec.eigenvalues[levels[b]] - spec.eigenvalues[levels[a]];
                let (idx, gap) = freqs
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| (i, (f - w).abs()))
                    .fold((0, R::max_value().unwrap()), |m, x| if x.1 < m.1 { x } else { m });
                if gap > R::lit(1e-6) * model.energy_scale {
                    return Err(Error::InvalidArgument(format!("transition {w} missing from the frequency set")));
                }
                freq_of[a + b * dim] = idx;
            }
        }
        Ok(Self { dim, basis: spec.basis().clone(), freqs, freq_of })
    }

    pub fn to_eig(&self, x: &CMatrix<R>) -> CMatrix<R> {
        let wd = self.basis.adjoint();
        crate::scalar::matmul(&crate::scalar::matmul(&wd, x), &self.basis)
    }

    #[allow(clippy::wrong_self_convention)]
    pub fn from_eig(&self, x: &CMatrix<R>) -> CMatrix<R> {
        let wd = self.basis.adjoint();
        crate::scalar::matmul(&crate::scalar::matmul(&self.basis, x), &wd)
    }

    /// `e^{−iω t}` per frequency.
    pub fn phases(&self, t: R) -> Vec<C<R>> {
        self.freqs.iter().map(|&w| cis(-w * t)).collect()
    }

    /// Entrywise `x_ab · g[ω_ab]`.
    pub fn weight(&self, x: &CMatrix<R>, g: &[C<R>]) -> CMatrix<R> {
        let mut out = x.clone();
        for (e, z) in out.iter_mut().enumerate() {
            *z *= g[self.freq_of[e]];
        }
        out
    }
}

/// Generator pieces at one stage time.
struct Stage<R: Real> {
    a: Vec<CMatrix<R>>,
    l: Vec<CMatrix<R>>,
    y: CMatrix<R>,
}

impl<R: Real> Stage<R> {
    fn new(a: Vec<CMatrix<R>>, l: Vec<CMatrix<R>>) -> Self {
        let d = a[0].nrows();
        let mut y = CMatrix::zeros(d, d);
        for (ak, lk) in a.iter().zip(&l) {
            R::gemm(&mut y, ak, lk, R::one());
        }
        Self { a, l, y }
    }

    /// `(Z − Yρ) + (Z − Yρ)†` with `Z = Σ L_k ρ A_k`, `Y = Σ A_k L_k`.
    fn apply(&self, rho: &CMatrix<R>, out: &mut CMatrix<R>, tmp: &mut CMatrix<R>) {
        out.fill(C::new(R::zero(), R::zero()));
        for (ak, lk) in self.a.iter().zip(&self.l) {
            R::gemm(tmp, rho, ak, R::zero());
            R::gemm(out, lk, tmp, R::one());
        }
        R::gemm(tmp, &self.y, rho, R::zero());
        *out -= &*tmp;
        tmp.copy_from(out);
        *out += tmp.adjoint();
    }
}

fn combine<R: Real>(k_plus: Vec<CMatrix<R>>, c: &DMatrix<R>) -> Vec<CMatrix<R>> {
    if *c == DMatrix::identity(c.nrows(), c.ncols()) {
        return k_plus;
    }
    (0..c.nrows())
        .map(|k| {
            let mut acc = CMatrix::zeros(k_plus[0].nrows(), k_plus[0].ncols());
            for (l, kp) in k_plus.iter().enumerate() {
                if c[(k, l)] != R::zero() {
                    acc += kp * real(c[(k, l)]);
                }
            }
            acc
        })
        .collect()
}

struct Rk4Work<R: Real> {
    k: [CMatrix<R>; 4],
    probe: CMatrix<R>,
    tmp: CMatrix<R>,
}

impl<R: Real> Rk4Work<R> {
    fn new(d: usize) -> Self {
        let z = CMatrix::zeros(d, d);
        Self { k: [z.clone(), z.clone(), z.clone(), z.clone()], probe: z.clone(), tmp: z }
    }

    fn step(&mut self, rho: &mut CMatrix<R>, h: R, s0: &Stage<R>, sm: &Stage<R>, s1: &Stage<R>) {
        let half = real(h * R::lit(0.5));
        let [k1, k2, k3, k4] = &mut self.k;
        s0.apply(rho, k1, &mut self.tmp);
        self.probe.copy_from(rho);
        self.probe += &*k1 * half;
        sm.apply(&self.probe, k2, &mut self.tmp);
        self.probe.copy_from(rho);
        self.probe += &*k2 * half;
        sm.apply(&self.probe, k3, &mut self.tmp);
        self.probe.copy_from(rho);
        self.probe += &*k3 * real(h);
        s1.apply(&self.probe, k4, &mut self.tmp);
        let sixth = real(h / R::lit(6.0));
        let third = real(h / R::lit(3.0));
        *rho += &*k1 * sixth + &*k2 * third + &*k3 * third + &*k4 * sixth;
    }
}

/// Per-sample diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics<R: Real> {
    pub trace_dev: R,
    pub herm_dev: R,
    pub min_eig: R,
}

/// Stroboscopic trajectory of one run; states are interaction-picture
/// density matrices in the computational basis at `t = N T`, `N = 0..=n_max`.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord<R: Real> {
    pub model: ModelKind,
    pub mu: Mu,
    pub period: R,
    pub tau_g: R,
    pub bath: BathSpec<R>,
    pub dt: R,
    pub refinement: usize,
    pub n_max: usize,
    pub rho0: Operator<R>,
    pub states: Vec<Operator<R>>,
    pub diagnostics: Vec<Diagnostics<R>>,
}

/// One row of the per-run metric table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow<R: Real> {
    pub n: usize,
    pub t: R,
    pub p_g: R,
    pub d_init: R,
    pub trace_dev: R,
    pub herm_dev: R,
    pub min_eig: R,
}

fn diagnose<R: Real>(rho: &Operator<R>) -> Diagnostics<R> {
    let tr = rho.trace();
    let trace_dev = ((tr.re - R::one()).powi(2) + tr.im.powi(2)).sqrt();
    Diagnostics { trace_dev, herm_dev: rho.hermiticity_deviation(), min_eig: rho.min_eigenvalue() }
}

fn check_state<R: Real>(rho0: &Operator<R>, dim: usize) -> Result<()> {
    if rho0.dim() != dim {
        return Err(Error::Dimension(format!("initial state has dimension {}, model {dim}", rho0.dim())));
    }
    let d = diagnose(rho0);
    let tol = R::lit(1e-10).max(R::eps() * R::lit(1e3));
    if d.trace_dev > tol || d.herm_dev > tol {
        return Err(Error::InvalidArgument(format!(
            "initial state is not a density matrix (trace deviation {}, Hermiticity deviation {})",
            d.trace_dev, d.herm_dev
        )));
    }
    Ok(())
}

struct Recorder<'a, R: Real> {
    frame: &'a Frame<R>,
    states: Vec<Operator<R>>,
    diagnostics: Vec<Diagnostics<R>>,
    drift_tol: R,
}

impl<R: Real> Recorder<'_, R> {
    fn push(&mut self, rho_eig: &CMatrix<R>, t: R) -> Result<()> {
        if rho_eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Diverged { t: t.as_f64(), reason: "non-finite density matrix".into() });
        }
        let rho = Operator::from_matrix(self.frame.from_eig(rho_eig));
        let d = diagnose(&rho);
        if d.trace_dev > self.drift_tol || d.herm_dev > self.drift_tol {
            return Err(Error::Diverged {
                t: t.as_f64(),
                reason: format!("trace deviation {:e}, Hermiticity deviation {:e}", d.trace_dev, d.herm_dev),
            });
        }
        self.states.push(rho);
        self.diagnostics.push(d);
        Ok(())
    }
}

/// Evolves `ρ₀` for `n_max` cycles of the schedule's period under TCL-2.
///
/// The target uses a uniform grid of `T/(Δt/r)` steps per cycle. The
/// simulator grid is aligned with the firing times: each constant piece of
/// the frame gets `r·max(1, ⌈len/Δt⌉)` equal steps.
pub fn evolve<R: Real>(
    rho0: &Operator<R>,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
    opts: &Tcl2Options<R>,
    n_max: usize,
) -> Result<TrajectoryRecord<R>> {
    let period = schedule.period;
    steps_per_cycle(period, opts.dt)?;
    if opts.refinement == 0 {
        return Err(Error::Grid("refinement must be at least 1".into()));
    }
    check_state(rho0, model.dim())?;
    let frame = Frame::new(model)?;
    let corr = Correlation::new(bath)?;
    let c = bath.coupling_matrix(model.couplings.len());
    let a_eig: Vec<CMatrix<R>> = model.couplings.iter().map(|a| frame.to_eig(a.matrix())).collect();

    let mut rho = frame.to_eig(rho0.matrix());
    let mut rec = Recorder {
        frame: &frame,
        states: Vec::with_capacity(n_max + 1),
        diagnostics: Vec::with_capacity(n_max + 1),
        drift_tol: opts.drift_tol,
    };
    rec.states.push(rho0.clone());
    rec.diagnostics.push(diagnose(rho0));
    let mut work = Rk4Work::new(frame.dim);
    match mu {
        Mu::Tar => {
            let mut engine = TargetEngine::new(&frame, &corr, &a_eig, &c, period, opts)?;
            for p in 0..n_max {
                engine.cycle(p, &mut rho, &mut work)?;
                rec.push(&rho, period * R::count(p + 1))?;
            }
        }
        Mu::Sim => {
            let mut engine = SimEngine::new(&frame, &corr, &a_eig, &c, schedule, opts)?;
            for p in 0..n_max {
                engine.cycle(p, &mut rho, &mut work)?;
                rec.push(&rho, period * R::count(p + 1))?;
            }
        }
    }
    Ok(TrajectoryRecord {
        model: model.kind,
        mu,
        period,
        tau_g: schedule.tau_g,
        bath: bath.clone(),
        dt: opts.dt,
        refinement: opts.refinement,
        n_max,
        rho0: rho0.clone(),
        states: rec.states,
        diagnostics: rec.diagnostics,
    })
}

/// Continuous target: `K⁺_ab(t) = A_ab e^{−iω_ab t} Φ_ω(t)` with
/// `Φ_ω(t) = ∫₀^t f(u) e^{iωu} du` accumulated panel by panel.
struct TargetEngine<'a, R: Real> {
    frame: &'a Frame<R>,
    corr: &'a Correlation<R>,
    a: &'a [CMatrix<R>],
    c: &'a DMatrix<R>,
    period: R,
    steps: usize,
    h: R,
    gl: GaussLegendre<R>,
    phi: Vec<C<R>>,
}

impl<'a, R: Real> TargetEngine<'a, R> {
    fn new(
        frame: &'a Frame<R>,
        corr: &'a Correlation<R>,
        a: &'a [CMatrix<R>],
        c: &'a DMatrix<R>,
        period: R,
        opts: &Tcl2Options<R>,
    ) -> Result<Self> {
        let steps = steps_per_cycle(period, opts.dt)? * opts.refinement;
        Ok(Self {
            frame,
            corr,
            a,
            c,
            period,
            steps,
            h: period / R::count(steps),
            gl: GaussLegendre::new(PANEL_ORDER),
            phi: vec![C::new(R::zero(), R::zero()); frame.freqs.len()],
        })
    }

    fn advance_phi(&mut self, lo: R, hi: R) -> Result<()> {
        for (x, w) in self.gl.mapped(lo, hi).collect::<Vec<_>>() {
            let fw = self.corr.f(x)? * real(w);
            for (acc, &om) in self.phi.iter_mut().zip(&self.frame.freqs) {
                *acc += fw * cis(om * x);
            }
        }
        Ok(())
    }

    fn stage(&self, t: R) -> Stage<R> {
        let ph = self.frame.phases(t);
        let g: Vec<C<R>> = ph.iter().zip(&self.phi).map(|(p, f)| p * f).collect();
        let a: Vec<CMatrix<R>> = self.a.iter().map(|x| self.frame.weight(x, &ph)).collect();
        let kp: Vec<CMatrix<R>> = self.a.iter().map(|x| self.frame.weight(x, &g)).collect();
        Stage::new(a, combine(kp, self.c))
    }

    fn cycle(&mut self, p: usize, rho: &mut CMatrix<R>, work: &mut Rk4Work<R>) -> Result<()> {
        let base = self.period * R::count(p);
        let h = self.h;
        let mut s0 = self.stage(base);
        for s in 0..self.steps {
            let t0 = base + h * R::count(s);
            let tm = base + h * (R::count(s) + R::lit(0.5));
            let t1 = if s + 1 == self.steps { base + self.period } else { base + h * R::count(s + 1) };
            self.advance_phi(t0, tm)?;
            let sm = self.stage(tm);
            self.advance_phi(tm, t1)?;
            let s1 = self.stage(t1);
            work.step(rho, t1 - t0, &s0, &sm, &s1);
            s0 = s1;
        }
        Ok(())
    }
}

/// One RK4 step of the simulator grid: piece index and stage offsets.
#[derive(Clone, Copy, Debug)]
struct GridStep {
    piece: usize,
    start: usize,
    mid: usize,
    end: usize,
}

/// Simulator with a piecewise-constant frame: on piece `j` of cycle `q`,
/// `A(s) = e^{−iωqT}∘B_j` with `B_j = V_j† A V_j` in the eigenbasis. For
/// `t = pT + δ`, `K⁺_ab(t) = e^{−iω pT} Σ_j (B_j)_ab R_{δ,j,ω}(p)` where
/// `R_{δ,j,ω}(p) = Σ_{m≤p} e^{iωmT} W_j(mT+δ)` and
/// `W_j(x) = F((x−b_j)₊) − F((x−b_{j+1})₊)`.
struct SimEngine<'a, R: Real> {
    frame: &'a Frame<R>,
    corr: &'a Correlation<R>,
    c: &'a DMatrix<R>,
    period: R,
    /// Piece boundaries `b_0 = 0 < … < b_J = T`.
    bounds: Vec<R>,
    /// `b[j][k]`: coupling `k` on piece `j`, eigenbasis.
    b: Vec<Vec<CMatrix<R>>>,
    offsets: Vec<R>,
    steps: Vec<GridStep>,
    /// `R[d][j][ω]` flattened.
    acc: Vec<C<R>>,
    f_row: Vec<C<R>>,
}

impl<'a, R: Real> SimEngine<'a, R> {
    fn new(
        frame: &'a Frame<R>,
        corr: &'a Correlation<R>,
        a: &[CMatrix<R>],
        c: &'a DMatrix<R>,
        schedule: &PulseSchedule<R>,
        opts: &Tcl2Options<R>,
    ) -> Result<Self> {
        let segs = schedule.segments();
        let mut bounds: Vec<R> = segs.iter().map(|s| s.start).collect();
        bounds.push(schedule.period);
        let b = segs
            .iter()
            .map(|s| {
                let v = frame.to_eig(schedule.partial_product(s.fired).matrix());
                let vd = v.adjoint();
                a.iter().map(|ak| crate::scalar::matmul(&crate::scalar::matmul(&vd, ak), &v)).collect()
            })
            .collect();
        let mut offsets = vec![R::zero()];
        let mut steps = Vec::new();
        for (j, s) in segs.iter().enumerate() {
            let len = s.end - s.start;
            let n = (len / opts.dt - R::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1) * opts.refinement;
            let h = len / R::count(n);
            for i in 0..n {
                let start = offsets.len() - 1;
                offsets.push(s.start + h * (R::count(i) + R::lit(0.5)));
                offsets.push(if i + 1 == n { s.end } else { s.start + h * R::count(i + 1) });
                steps.push(GridStep { piece: j, start, mid: start + 1, end: start + 2 });
            }
        }
        let size = offsets.len() * segs.len() * frame.freqs.len();
        Ok(Self {
            frame,
            corr,
            c,
            period: schedule.period,
            bounds,
            b,
            offsets,
            steps,
            acc: vec![C::new(R::zero(), R::zero()); size],
            f_row: Vec::new(),
        })
    }

    fn pieces(&self) -> usize {
        self.b.len()
    }

    fn idx(&self, d: usize, j: usize, w: usize) -> usize {
        (d * self.pieces() + j) * self.frame.freqs.len() + w
    }

    /// Adds the `m = p` term to every `R_{δ,j,ω}`.
    fn accumulate(&mut self, p: usize) -> Result<()> {
        let pt = self.period * R::count(p);
        let rot: Vec<C<R>> = self.frame.freqs.iter().map(|&w| cis(w * pt)).collect();
        let nw = self.frame.freqs.len();
        for d in 0..self.offsets.len() {
            let x = pt + self.offsets[d];
            self.f_row.clear();
            for &bj in &self.bounds {
                self.f_row.push(self.corr.big_f((x - bj).max(R::zero()))?);
            }
            for j in 0..self.pieces() {
                let w = self.f_row[j] - self.f_row[j + 1];
                let base = self.idx(d, j, 0);
                for (slot, r) in self.acc[base..base + nw].iter_mut().zip(&rot) {
                    *slot += r * w;
                }
            }
        }
        Ok(())
    }

    fn k_plus(&self, d: usize, phases: &[C<R>]) -> Vec<CMatrix<R>> {
        let dim = self.frame.dim;
        let nw = self.frame.freqs.len();
        (0..self.b[0].len())
            .map(|k| {
                let mut out = CMatrix::<R>::zeros(dim, dim);
                for j in 0..self.pieces() {
                    let r = &self.acc[self.idx(d, j, 0)..self.idx(d, j, 0) + nw];
                    for (e, (o, bv)) in out.iter_mut().zip(self.b[j][k].iter()).enumerate() {
                        *o += bv * r[self.frame.freq_of[e]];
                    }
                }
                for (e, o) in out.iter_mut().enumerate() {
                    *o *= phases[self.frame.freq_of[e]];
                }
                out
            })
            .collect()
    }

    fn cycle(&mut self, p: usize, rho: &mut CMatrix<R>, work: &mut Rk4Work<R>) -> Result<()> {
        self.accumulate(p)?;
        let phases = self.frame.phases(self.period * R::count(p));
        let a_pieces: Vec<Vec<CMatrix<R>>> =
            self.b.iter().map(|bj| bj.iter().map(|x| self.frame.weight(x, &phases)).collect()).collect();
        let mut carry: Option<(usize, Vec<CMatrix<R>>)> = None;
        for st in self.steps.clone() {
            let a = &a_pieces[st.piece];
            let l0 = match carry.take() {
                Some((d, l)) if d == st.start => l,
                _ => combine(self.k_plus(st.start, &phases), self.c),
            };
            let lm = combine(self.k_plus(st.mid, &phases), self.c);
            let l1 = combine(self.k_plus(st.end, &phases), self.c);
            let s0 = Stage::new(a.clone(), l0);
            let sm = Stage::new(a.clone(), lm);
            let s1 = Stage::new(a.clone(), l1.clone());
            let h = self.offsets[st.end] - self.offsets[st.start];
            work.step(rho, h, &s0, &sm, &s1);
            carry = Some((st.end, l1));
        }
        Ok(())
    }
}

/// `U_μ(t)` with the simulator frame taken right-continuous at firing times.
fn frame_unitary<R: Real>(model: &ModelSpec<R>, schedule: &PulseSchedule<R>, mu: Mu, t: R) -> Operator<R> {
    match mu {
        Mu::Tar => model.target_propagator(t),
        Mu::Sim => {
            let q = (t / schedule.period).floor();
            // Offsets within roundoff of a firing time count as at it.
            let u = (t - schedule.period * q).max(R::zero()) + schedule.period * R::lit(1e-12);
            &schedule.partial_product(schedule.fired_by(u)) * &model.target_propagator(schedule.period * q)
        }
    }
}

fn check_time<R: Real>(t: R) -> Result<()> {
    if t < R::zero() || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// `K⁺_k(t) = ∫₀^t f(t−s) A_k(s) ds` (interaction picture, computational
/// basis) from the fast paths used by [`evolve`].
pub fn memory_kernel_plus<R: Real>(
    t: R,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
) -> Result<Vec<Operator<R>>> {
    check_time(t)?;
    let frame = Frame::new(model)?;
    let corr = Correlation::new(bath)?;
    let a_eig: Vec<CMatrix<R>> = model.couplings.iter().map(|a| frame.to_eig(a.matrix())).collect();
    let kp: Vec<CMatrix<R>> = match mu {
        Mu::Tar => {
            let gl = GaussLegendre::<R>::new(PANEL_ORDER);
            let panels = (t / schedule.period * R::lit(80.0)).ceil().to_usize().unwrap_or(0).max(1);
            let hp = t / R::count(panels);
            let ph = frame.phases(t);
            let mut g = vec![C::new(R::zero(), R::zero()); frame.freqs.len()];
            for q in 0..panels {
                let lo = hp * R::count(q);
                for (x, wt) in gl.mapped(lo, lo + hp) {
                    let fw = corr.f(x)? * real(wt);
                    for (acc, &w) in g.iter_mut().zip(&frame.freqs) {
                        *acc += fw * cis(w * x);
                    }
                }
            }
            for (gi, p) in g.iter_mut().zip(&ph) {
                *gi *= p;
            }
            a_eig.iter().map(|x| frame.weight(x, &g)).collect()
        }
        Mu::Sim => {
            let opts = Tcl2Options::new(schedule.period / R::lit(20.0));
            let c = bath.coupling_matrix(model.couplings.len());
            let mut engine = SimEngine::new(&frame, &corr, &a_eig, &c, schedule, &opts)?;
            let p = (t / schedule.period).floor().to_usize().unwrap_or(0);
            engine.offsets = vec![t - schedule.period * R::count(p)];
            engine.acc = vec![C::new(R::zero(), R::zero()); engine.pieces() * frame.freqs.len()];
            for m in 0..=p {
                engine.accumulate(m)?;
            }
            engine.k_plus(0, &frame.phases(schedule.period * R::count(p)))
        }
    };
    Ok(kp.iter().map(|k| Operator::from_matrix(frame.from_eig(k))).collect())
}

/// `K_k(t) = ∫₀^t [f(t−s) − f(s−t)] A_k(s) ds = K⁺_k − K⁺_k†`.
pub fn memory_operator<R: Real>(
    t: R,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
) -> Result<Vec<Operator<R>>> {
    Ok(memory_kernel_plus(t, mu, model, schedule, bath)?.iter().map(|k| k - &k.dagger()).collect())
}

/// Reference `K⁺_k(t)` by the composite trapezoid rule in `s`, split at every
/// firing time, with `A(s)` built from explicit propagators.
pub fn memory_kernel_plus_direct<R: Real>(
    t: R,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
    panels_per_cycle: usize,
) -> Result<Vec<Operator<R>>> {
    check_time(t)?;
    let corr = Correlation::new(bath)?;
    let period = schedule.period;
    let dim = model.dim();
    let mut breaks = vec![R::zero()];
    if mu == Mu::Sim {
        let cycles = (t / period).ceil().to_usize().unwrap_or(0);
        for q in 0..=cycles {
            for &g in &schedule.gate_times {
                let x = period * R::count(q) + g;
                if x > R::zero() && x < t {
                    breaks.push(x);
                }
            }
        }
    }
    breaks.push(t);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let mut k_plus = vec![CMatrix::<R>::zeros(dim, dim); model.couplings.len()];
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let n = ((hi - lo) / period * R::count(panels_per_cycle)).ceil().to_usize().unwrap_or(1).max(1);
        let h = (hi - lo) / R::count(n);
        let piece_frame = (mu == Mu::Sim).then(|| frame_unitary(model, schedule, mu, (lo + hi) * R::lit(0.5)));
        for i in 0..=n {
            let s = if i == n { hi } else { lo + h * R::count(i) };
            let wgt = if i == 0 || i == n { h * R::lit(0.5) } else { h };
            let u = match &piece_frame {
                Some(u) => u.clone(),
                None => model.target_propagator(s),
            };
            let fw = corr.f(t - s)? * real(wgt);
            for (k, acc) in k_plus.iter_mut().enumerate() {
                *acc += model.couplings[k].conjugated_by(&u).matrix() * fw;
            }
        }
    }
    Ok(k_plus.into_iter().map(Operator::from_matrix).collect())
}

/// [`memory_operator`] from [`memory_kernel_plus_direct`].
pub fn memory_operator_direct<R: Real>(
    t: R,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
    panels_per_cycle: usize,
) -> Result<Vec<Operator<R>>> {
    Ok(memory_kernel_plus_direct(t, mu, model, schedule, bath, panels_per_cycle)?
        .iter()
        .map(|k| k - &k.dagger())
        .collect())
}

/// `dρ/dt` at time `t` (simulator frame right-continuous at firing times).
pub fn rhs<R: Real>(
    t: R,
    rho: &Operator<R>,
    mu: Mu,
    model: &ModelSpec<R>,
    schedule: &PulseSchedule<R>,
    bath: &BathSpec<R>,
) -> Result<Operator<R>> {
    if rho.dim() != model.dim() {
        return Err(Error::Dimension(format!("state has dimension {}, model {}", rho.dim(), model.dim())));
    }
    let kp = memory_kernel_plus(t, mu, model, schedule, bath)?;
    let u = frame_unitary(model, schedule, mu, t);
    let c = bath.coupling_matrix(model.couplings.len());
    let a: Vec<CMatrix<R>> = model.couplings.iter().map(|x| x.conjugated_by(&u).into_matrix()).collect();
    let l = combine(kp.into_iter().map(Operator::into_matrix).collect(), &c);
    let stage = Stage::new(a, l);
    let d = model.dim();
    let mut out = CMatrix::zeros(d, d);
    let mut tmp = CMatrix::zeros(d, d);
    stage.apply(rho.matrix(), &mut out, &mut tmp);
    Ok(Operator::from_matrix(out))
}

/// Ground-space population and distance to `ρ₀` for every sample.
pub fn metrics<R: Real>(record: &TrajectoryRecord<R>, model: &ModelSpec<R>) -> Result<Vec<MetricRow<R>>> {
    if record.model != model.kind || record.rho0.dim() != model.dim() {
        return Err(Error::InvalidArgument("record belongs to a different model".into()));
    }
    let pg = model.ground_projector();
    record
        .states
        .iter()
        .zip(&record.diagnostics)
        .enumerate()
        .map(|(n, (rho, d))| {
            Ok(MetricRow {
                n,
                t: record.period * R::count(n),
                p_g: (pg * rho).trace().re,
                d_init: trace_distance(rho, &record.rho0)?,
                trace_dev: d.trace_dev,
                herm_dev: d.herm_dev,
                min_eig: d.min_eig,
            })
        })
        .collect()
}

/// Metric rows for an arbitrary list of stroboscopic states `ρ(nT)`.
pub fn state_metrics<R: Real>(
    states: &[Operator<R>],
    rho0: &Operator<R>,
    model: &ModelSpec<R>,
    period: R,
) -> Result<Vec<MetricRow<R>>> {
    check_state(rho0, model.dim())?;
    let pg = model.ground_projector();
    states
        .iter()
        .enumerate()
        .map(|(n, rho)| {
            if rho.dim() != model.dim() {
                return Err(Error::Dimension(format!("state {n} has dimension {}", rho.dim())));
            }
            let d = diagnose(rho);
            Ok(MetricRow {
                n,
                t: period * R::count(n),
                p_g: (pg * rho).trace().re,
                d_init: trace_distance(rho, rho0)?,
                trace_dev: d.trace_dev,
                herm_dev: d.herm_dev,
                min_eig: d.min_eig,
            })
        })
        .collect()
}

/// `d_cross(N)` between two records on the same grid.
pub fn cross_distance<R: Real>(a: &TrajectoryRecord<R>, b: &TrajectoryRecord<R>) -> Result<Vec<R>> {
    if a.dt != b.dt || a.n_max != b.n_max || a.period != b.period || a.refinement != b.refinement {
        return Err(Error::InvalidArgument(format!(
            "records are not paired: (Δt, N_max) = ({}, {}) vs ({}, {})",
            a.dt, a.n_max, b.dt, b.n_max
        )));
    }
    a.states.iter().zip(&b.states).map(|(x, y)| trace_distance(x, y)).collect()
}
