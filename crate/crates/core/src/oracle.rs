//! Exact unitary evolution of the system coupled to a few truncated bosonic
//! modes, reduced to the system for comparison with TCL-2.

use nalgebra::linalg::SymmetricEigen;

use crate::bath::{BathSpec, Mode};
use crate::error::{Error, Result};
use crate::models::{propagator, ModelSpec, Mu, PulseSchedule};
use crate::operator::{partial_trace, Operator};
use crate::scalar::{cis, matmul, real, CMatrix, Real};

/// Default ceiling on the joint Hilbert-space dimension.
pub const DEFAULT_CAP: usize = 4096;

/// Top-level occupancy above which truncation is flagged.
pub const LEAKAGE_LIMIT: f64 = 1e-3;

/// One oscillator with its coupling to each system operator `A_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMode<R: Real> {
    pub omega: R,
    /// `g_{k,m}` for every coupling index `k`.
    pub couplings: Vec<R>,
}

#[derive(Clone, Debug)]
pub struct JointSpec<R: Real> {
    pub model: ModelSpec<R>,
    pub modes: Vec<JointMode<R>>,
    /// Fock levels kept per mode (`0..n_max`).
    pub n_max: usize,
    /// Inverse temperature of the initial mode state; `+∞` for the vacuum.
    pub beta: R,
    pub cap: usize,
}

impl<R: Real> JointSpec<R> {
    /// Modes coupled with the same strength `g` to every system site.
    pub fn uniform(model: &ModelSpec<R>, modes: &[Mode<R>], n_max: usize, beta: R) -> Self {
        let k = model.couplings.len();
        Self {
            model: model.clone(),
            modes: modes.iter().map(|m| JointMode { omega: m.omega, couplings: vec![m.g; k] }).collect(),
            n_max,
            beta,
            cap: DEFAULT_CAP,
        }
    }

    /// The TCL-2 bath with the same correlation function, valid for
    /// site-uniform couplings.
    pub fn matching_bath(&self) -> Result<BathSpec<R>> {
        let mut modes = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            let g = m.couplings.first().copied().unwrap_or(R::zero());
            if m.couplings.iter().any(|&c| c != g) {
                return Err(Error::InvalidArgument("matching bath needs site-uniform couplings".into()));
            }
            modes.push(Mode { omega: m.omega, g });
        }
        Ok(BathSpec::discrete(modes, self.beta)?.shared())
    }

    pub fn bath_dim(&self) -> usize {
        self.n_max.pow(self.modes.len() as u32)
    }

    pub fn dim(&self) -> usize {
        self.model.dim() * self.bath_dim()
    }

    /// Subsystem dimensions, system first.
    pub fn subsystem_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.model.dim()];
        dims.extend(std::iter::repeat_n(self.n_max, self.modes.len()));
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::InvalidArgument("modes need at least two levels".into()));
        }
        let k = self.model.couplings.len();
        for m in &self.modes {
            if !(m.omega > R::zero()) || !m.omega.is_finite() {
                return Err(Error::InvalidArgument(format!("mode frequency must be positive, got {}", m.omega)));
            }
            if m.couplings.len() != k || m.couplings.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidArgument(format!("each mode needs {k} finite couplings")));
            }
        }
        if !(self.beta > R::zero()) {
            return Err(Error::InvalidArgument(format!("β must be positive, got {}", self.beta)));
        }
        let levels = (self.n_max as f64).powi(self.modes.len() as i32) * self.model.dim() as f64;
        if levels > self.cap as f64 {
            return Err(Error::DimensionCap { dim: levels.min(usize::MAX as f64) as usize, cap: self.cap });
        }
        Ok(())
    }
}

/// `b` on one mode of `n` levels.
fn annihilation<R: Real>(n: usize) -> CMatrix<R> {
    let mut b = CMatrix::zeros(n, n);
    for j in 1..n {
        b[(j - 1, j)] = real(R::count(j).sqrt());
    }
    b
}

/// `1_left ⊗ op ⊗ 1_right`.
fn embed<R: Real>(op: &CMatrix<R>, left: usize, right: usize) -> CMatrix<R> {
    CMatrix::identity(left, left).kronecker(op).kronecker(&CMatrix::identity(right, right))
}

/// Joint Hamiltonian `H_sys ⊗ 1 + 1 ⊗ Σ ω_m b_m†b_m + Σ_k A_k ⊗ B_k`
/// with `B_k = Σ_m g_{km}(b_m + b_m†)`.
///
/// `H_sys = H_tar` for the target; the simulator has `H_sys = 0` and its
/// gates act as instantaneous interruptions, so the returned operator is the
/// static generator between firings.
pub fn joint_hamiltonian<R: Real>(spec: &JointSpec<R>, mu: Mu) -> Result<Operator<R>> {
    spec.validate()?;
    let ds = spec.model.dim();
    let db = spec.bath_dim();
    let nm = spec.modes.len();
    let n = spec.n_max;
    let mut h = CMatrix::<R>::zeros(ds * db, ds * db);
    if mu == Mu::Tar {
        h += spec.model.h_tar.matrix().kronecker(&CMatrix::identity(db, db));
    }
    let b = annihilation::<R>(n);
    let x = &b + b.adjoint();
    let number = b.adjoint() * &b;
    let mut coupling_ops = vec![CMatrix::<R>::zeros(db, db); spec.model.couplings.len()];
    for (m, mode) in spec.modes.iter().enumerate() {
        let left = n.pow(m as u32);
        let right = n.pow((nm - m - 1) as u32);
        let free = embed(&number, left, right) * real(mode.omega);
        h += CMatrix::identity(ds, ds).kronecker(&free);
        let xm = embed(&x, left, right);
        for (k, &g) in mode.couplings.iter().enumerate() {
            coupling_ops[k] += &xm * real(g);
        }
    }
    for (a, bk) in spec.model.couplings.iter().zip(&coupling_ops) {
        h += a.matrix().kronecker(bk);
    }
    Operator::new(h)
}

/// Initial mode state: Boltzmann weights on the truncated ladder, renormalized.
fn mode_state<R: Real>(spec: &JointSpec<R>) -> CMatrix<R> {
    let n = spec.n_max;
    let mut rho = CMatrix::<R>::identity(1, 1);
    for mode in &spec.modes {
        let mut diag = vec![R::zero(); n];
        if spec.beta.is_finite() {
            let mut total = R::zero();
            for (j, w) in diag.iter_mut().enumerate() {
                *w = (-spec.beta * mode.omega * R::count(j)).exp();
                total += *w;
            }
            diag.iter_mut().for_each(|w| *w /= total);
        } else {
            diag[0] = R::one();
        }
        let single = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, diag.into_iter().map(real)));
        rho = rho.kronecker(&single);
    }
    rho
}

/// `e^{−iHt}` from a cached eigendecomposition, memoized by step length.
struct Exponentiator<R: Real> {
    vectors: CMatrix<R>,
    values: Vec<R>,
    cache: Vec<(R, CMatrix<R>)>,
}

impl<R: Real> Exponentiator<R> {
    fn new(h: &Operator<R>) -> Self {
        let eig = SymmetricEigen::new(h.matrix().clone());
        Self { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect(), cache: Vec::new() }
    }

    fn step(&mut self, dt: R) -> &CMatrix<R> {
        let tol = R::lit(1e-13) * dt.abs().max(R::one());
        if let Some(i) = self.cache.iter().position(|(t, _)| (*t - dt).abs() <= tol) {
            return &self.cache[i].1;
        }
        let mut vd = self.vectors.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= cis(-self.values[j] * dt);
        }
        let u = matmul(&vd, &self.vectors.adjoint());
        self.cache.push((dt, u));
        &self.cache.last().unwrap().1
    }
}

/// Reduced trajectory of the exact joint evolution.
#[derive(Clone, Debug)]
pub struct OracleRecord<R: Real> {
    pub times: Vec<R>,
    /// Interaction-picture system states, directly comparable with TCL-2.
    pub states: Vec<Operator<R>>,
    /// Largest top-level occupancy over the modes, per sample.
    pub leakage: Vec<R>,
    /// `Tr ρ_joint²` per sample.
    pub joint_purity: Vec<R>,
    /// Some sample exceeded [`LEAKAGE_LIMIT`].
    pub leakage_flagged: bool,
}

fn conjugate<R: Real>(u: &CMatrix<R>, rho: &CMatrix<R>) -> CMatrix<R> {
    matmul(&matmul(u, rho), &u.adjoint())
}

/// Evolves `ρ_sys ⊗ ρ_modes` exactly and returns interaction-picture reduced
/// states at the sorted times `t_samples`.
///
/// The simulator evolves under the static joint generator with `H_sys = 0`
/// and applies `g_i ⊗ 1` at each firing; a gate firing exactly at a sample
/// time is applied after that sample.
pub fn exact_reduced_evolution<R: Real>(
    rho0: &Operator<R>,
    spec: &JointSpec<R>,
    mu: Mu,
    schedule: Option<&PulseSchedule<R>>,
    t_samples: &[R],
) -> Result<OracleRecord<R>> {
    spec.validate()?;
    let ds = spec.model.dim();
    if rho0.dim() != ds {
        return Err(Error::Dimension(format!("state has dim {}, system has {ds}", rho0.dim())));
    }
    if t_samples.iter().any(|t| !(*t >= R::zero()) || !t.is_finite()) || t_samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sample times must be finite, nonnegative and sorted".into()));
    }
    let sched = match mu {
        Mu::Sim => Some(schedule.ok_or_else(|| Error::InvalidArgument("simulator evolution needs a schedule".into()))?),
        Mu::Tar => None,
    };
    let db = spec.bath_dim();
    let h = joint_hamiltonian(spec, mu)?;
    let mut exp = Exponentiator::new(&h);
    let gates: Vec<CMatrix<R>> = sched
        .map(|s| s.gates.iter().map(|g| g.matrix().kronecker(&CMatrix::identity(db, db))).collect())
        .unwrap_or_default();

    let mut rho = rho0.matrix().kronecker(&mode_state(spec));
    let dims = spec.subsystem_dims();
    let top = top_level_projectors(spec);
    let mut now = R::zero();
    // Next firing as (cycle, gate index).
    let mut next = (0usize, 0usize);
    let firing = |(q, i): (usize, usize)| -> Option<R> { sched.map(|s| s.period * R::count(q) + s.gate_times[i]) };
    let mut out = OracleRecord {
        times: t_samples.to_vec(),
        states: Vec::with_capacity(t_samples.len()),
        leakage: Vec::with_capacity(t_samples.len()),
        joint_purity: Vec::with_capacity(t_samples.len()),
        leakage_flagged: false,
    };
    for &t in t_samples {
        if let Some(s) = sched {
            while let Some(tf) = firing(next) {
                if tf >= t {
                    break;
                }
                if tf > now {
                    rho = conjugate(exp.step(tf - now), &rho);
                    now = tf;
                }
                rho = conjugate(&gates[next.1], &rho);
                next = if next.1 + 1 == s.gates.len() { (next.0 + 1, 0) } else { (next.0, next.1 + 1) };
            }
        }
        if t > now {
            rho = conjugate(exp.step(t - now), &rho);
            now = t;
        }
        let joint = Operator::from_matrix(rho.clone());
        let reduced = partial_trace(&joint, &dims, &[0])?;
        let u = propagator(&spec.model, schedule, mu, t)?;
        out.states.push(reduced.conjugated_by(&u));
        let leak = top.iter().fold(R::zero(), |m, p| m.max(diag_weight(&rho, p)));
        out.leakage_flagged |= leak > R::lit(LEAKAGE_LIMIT);
        out.leakage.push(leak);
        out.joint_purity.push((&rho * &rho).trace().re);
    }
    Ok(out)
}

/// Per mode, the joint basis indices whose Fock label is the top level.
fn top_level_projectors<R: Real>(spec: &JointSpec<R>) -> Vec<Vec<usize>> {
    let n = spec.n_max;
    let nm = spec.modes.len();
    let db = spec.bath_dim();
    (0..nm)
        .map(|m| {
            let stride = n.pow((nm - m - 1) as u32);
            (0..spec.model.dim() * db).filter(|&idx| (idx % db) / stride % n == n - 1).collect()
        })
        .collect()
}

fn diag_weight<R: Real>(rho: &CMatrix<R>, idx: &[usize]) -> R {
    idx.iter().fold(R::zero(), |s, &i| s + rho[(i, i)].re)
}
