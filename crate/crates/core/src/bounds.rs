//! Analytical error estimates for stroboscopic simulators and the
//! second-order difference between two open-system channels.
//!
//! Everything is dimensionless with the cycle time `T = 1` unless a
//! schedule period says otherwise: `x` is a bath frequency, `ε` a system
//! transition frequency and `c`, `R` fractions of a cycle.

use std::fmt;

use nalgebra::SVD;

use crate::bath::{BathFamily, BathSpec, Correlation};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, PulseSchedule};
use crate::operator::{superop_norm, Operator, SuperOperator};
use crate::quadrature::{gauss_legendre, integrate_with_breaks, QuadOptions};
use crate::scalar::{cabs, cis, i_unit, real, CMatrix, Real, C};
use crate::tcl2::Frame;

/// Below this `|x|` or `|x − ε|` the closed form of `D₀` switches to series.
const SERIES_SWITCH: f64 = 1e-4;

fn zero_c<R: Real>() -> C<R> {
    C::new(R::zero(), R::zero())
}

fn check_window<R: Real>(c: R) -> Result<()> {
    if !(c >= R::zero() && c <= R::one()) {
        return Err(Error::InvalidArgument(format!("window fraction c = {c} must lie in [0, 1]")));
    }
    Ok(())
}

/// `D(c;x) = ∫₀^c e^{ixa}[e^{iε(1−a)} − e^{iε[1−a/R]₊}] da` by adaptive
/// quadrature to `1e−10` absolute.
pub fn d_numeric<R: Real>(c: R, x: R, eps: R, r: R) -> Result<C<R>> {
    check_window(c)?;
    if !(x.is_finite() && eps.is_finite()) {
        return Err(Error::InvalidArgument("x and ε must be finite".into()));
    }
    if !(r > R::zero() && r <= R::one()) {
        return Err(Error::InvalidArgument(format!("R = {r} must lie in (0, 1]")));
    }
    if c == R::zero() {
        return Ok(zero_c());
    }
    let mut integrand = |a: R| {
        let pulse = (R::one() - a / r).max(R::zero());
        cis(x * a) * (cis(eps * (R::one() - a)) - cis(eps * pulse))
    };
    let points = if r < c { vec![R::zero(), r, c] } else { vec![R::zero(), c] };
    let opts = QuadOptions { abs_tol: 1e-12f64.max(R::eps().as_f64() * 16.0), rel_tol: 0.0, max_intervals: 4000 };
    Ok(integrate_with_breaks(&mut integrand, &points, &opts)?.value)
}

/// `E(y) = ∫₀^c e^{iya} da`, summed as a power series when `|yc|` is small.
fn window_integral<R: Real>(c: R, y: R) -> C<R> {
    let z = i_unit::<R>() * real(y * c);
    if (y * c).abs() < R::lit(0.5) {
        let mut term = real::<R>(c);
        let mut sum = term;
        for n in 1..60 {
            term = term * z * real(R::one() / R::count(n + 1));
            sum += term;
            if cabs(term) <= R::eps() * cabs(sum) {
                break;
            }
        }
        sum
    } else {
        (cis(y * c) - real(R::one())) / (i_unit::<R>() * real(y))
    }
}

/// Closed form of `D₀(c;x)`, the `R → 0` limit of [`d_numeric`].
///
/// Near the removable points `x = 0` and `x = ε` it is evaluated as
/// `e^{iε}E(x−ε) − E(x)` with `E(y) = ∫₀^c e^{iya} da` from its series.
pub fn d0_closed<R: Real>(c: R, x: R, eps: R) -> C<R> {
    let tiny = R::lit(SERIES_SWITCH);
    if x.abs() < tiny || (x - eps).abs() < tiny {
        return cis(eps) * window_integral(c, x - eps) - window_integral(c, x);
    }
    let one = real::<R>(R::one());
    let exc = cis(x * c);
    let num = real(eps) * (one - exc) - real(x) * (one - cis(eps)) + exc * real(x) * (one - cis(eps * (R::one() - c)));
    i_unit::<R>() * num / real(x * (x - eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// `|x̄|, x_c ≪ ε ≪ 1`.
    I,
    /// `ε ≪ |x̄|, x_c ≪ 1`.
    II,
    /// `ε ≪ 1 ≪ |x̄|, x_c`.
    III,
}

impl Regime {
    pub fn id(self) -> &'static str {
        match self {
            Regime::I => "I",
            Regime::II => "II",
            Regime::III => "III",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Leading-order `D₀`: `iεc(1−c/2)` in regimes I and II (independent of
/// `x`), `−(ε/x)[1 − (1−c)e^{ixc}]` in regime III.
pub fn d0_regime<R: Real>(c: R, x: R, eps: R, regime: Regime) -> C<R> {
    match regime {
        Regime::I | Regime::II => i_unit::<R>() * real(eps * c * (R::one() - c * R::lit(0.5))),
        Regime::III => {
            let inner = real::<R>(R::one()) - cis(x * c) * real(R::one() - c);
            -inner * real(eps / x)
        }
    }
}

/// Default margin standing in for `≪`.
pub const DEFAULT_MARGIN: f64 = 0.2;

fn at_most<R: Real>(a: R, b: R) -> bool {
    a <= b + R::lit(1e-12) * b.abs()
}

/// Raw scale comparisons behind a regime decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeRatios<R: Real> {
    /// `s = max(|x̄|, x_c)`, the bath frequency scale.
    pub bath_scale: R,
    pub eps_max: R,
    /// `s/ε_max` (regime I wants this small).
    pub scale_over_eps: R,
    /// `ε_max/s` (regime II wants this small).
    pub eps_over_scale: R,
}

impl<R: Real> RegimeRatios<R> {
    pub fn new(eps_max: R, x_bar: R, x_c: R) -> Self {
        let s = x_bar.abs().max(x_c);
        Self { bath_scale: s, eps_max, scale_over_eps: s / eps_max, eps_over_scale: eps_max / s }
    }
}

/// Which regime inequalities hold at the chosen margin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidityFlags {
    pub regime_i: bool,
    pub regime_ii: bool,
    pub regime_iii: bool,
    /// The bath spectrum reaches down to zero frequency (one-sided Ohmic),
    /// so regime III separation holds only for its cutoff, not its support.
    pub low_frequency_support: bool,
}

impl ValidityFlags {
    pub fn evaluate<R: Real>(ratios: &RegimeRatios<R>, margin: R, low_frequency_support: bool) -> Self {
        let (s, e) = (ratios.bath_scale, ratios.eps_max);
        Self {
            regime_i: at_most(s, margin * e) && at_most(e, margin),
            regime_ii: at_most(e, margin * s) && at_most(s, margin),
            regime_iii: at_most(e, margin) && at_most(R::one() / margin, s),
            low_frequency_support,
        }
    }

    pub fn regime(&self) -> Option<Regime> {
        if self.regime_i {
            Some(Regime::I)
        } else if self.regime_ii {
            Some(Regime::II)
        } else if self.regime_iii {
            Some(Regime::III)
        } else {
            None
        }
    }
}

/// Regime of `(ε_max, x̄, x_c)` at margin `m`, or `None` between regimes.
pub fn classify_regime<R: Real>(eps_max: R, x_bar: R, x_c: R, margin: R) -> Option<Regime> {
    ValidityFlags::evaluate(&RegimeRatios::new(eps_max, x_bar, x_c), margin, false).regime()
}

/// Magnitudes of the bath correlation function entering the bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FStats<R: Real> {
    /// `|f(0)|`.
    pub f0: R,
    /// `sup_{a≥0} |f(a)|`.
    pub sup_nonneg: R,
    /// `sup_{a∈ℝ} |f(a)|`.
    pub sup_all: R,
    /// Bath correlation time `a_B = 1/x_c`.
    pub a_b: R,
}

impl<R: Real> FStats<R> {
    /// Samples `|f|` on `[0, horizon]`; `|f(−a)| = |f(a)|` makes both suprema equal.
    pub fn from_bath(bath: &BathSpec<R>, horizon: R) -> Result<Self> {
        let corr = Correlation::new(bath)?;
        let f0 = cabs(corr.f(R::zero())?);
        let samples = 4000;
        let mut sup = f0;
        for i in 1..=samples {
            let a = horizon * R::count(i) / R::count(samples);
            sup = sup.max(cabs(corr.f(a)?));
        }
        Ok(Self { f0, sup_nonneg: sup, sup_all: sup, a_b: bath.correlation_time() })
    }
}

/// Inputs of the tabulated simulation-error bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeParams<R: Real> {
    pub eps_max: R,
    /// Center of the bath spectrum.
    pub x_bar: R,
    pub x_c: R,
    pub n_cycles: usize,
    /// Gate-window fraction `R_M = τ_g/T`.
    pub r_m: R,
    /// `C = Σ_{εε′} 1`.
    pub pair_count: usize,
    pub f_stats: FStats<R>,
    pub low_frequency_support: bool,
}

impl<R: Real> RegimeParams<R> {
    /// Parameters of a model and bath in cycle units (`T = 1`).
    pub fn from_model(model: &ModelSpec<R>, bath: &BathSpec<R>, n_cycles: usize, r_m: R) -> Result<Self> {
        let (x_bar, x_c, low) = match &bath.family {
            BathFamily::Ohmic { nu_c, .. } => (R::zero(), *nu_c, true),
            BathFamily::Centered { nu_c, center, .. } => (*center, *nu_c, false),
            BathFamily::Discrete { modes } => {
                let mean = modes.iter().fold(R::zero(), |s, m| s + m.omega) / R::count(modes.len());
                let spread = modes.iter().fold(R::zero(), |s, m| s.max((m.omega - mean).abs()));
                (mean, spread, false)
            }
        };
        let horizon = R::count(n_cycles.max(1)).max(R::lit(20.0) * bath.correlation_time());
        let params = Self {
            eps_max: model.omega_max,
            x_bar,
            x_c,
            n_cycles,
            r_m,
            pair_count: model.frequency_pair_count(),
            f_stats: FStats::from_bath(bath, horizon)?,
            low_frequency_support: low,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("eps_max", self.eps_max),
            ("x_c", self.x_c),
            ("R_M", self.r_m),
            ("f(0)", self.f_stats.f0),
            ("sup|f|", self.f_stats.sup_nonneg),
            ("a_B", self.f_stats.a_b),
        ];
        for (name, v) in nonneg {
            if !(v >= R::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative and finite, got {v}")));
            }
        }
        if self.pair_count < 1 {
            return Err(Error::InvalidArgument("frequency-pair count must be at least 1".into()));
        }
        if self.r_m > R::one() {
            return Err(Error::InvalidArgument(format!("R_M = {} exceeds 1", self.r_m)));
        }
        Ok(())
    }

    pub fn ratios(&self) -> RegimeRatios<R> {
        RegimeRatios::new(self.eps_max, self.x_bar, self.x_c)
    }

    pub fn flags(&self, margin: R) -> ValidityFlags {
        ValidityFlags::evaluate(&self.ratios(), margin, self.low_frequency_support)
    }

    pub fn classify(&self, margin: R) -> Option<Regime> {
        self.flags(margin).regime()
    }
}

/// Tabulated bound per unit coupling², with the norm constant set to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport<R: Real> {
    pub regime: Regime,
    /// `stroboscopic + multi_gate`.
    pub total: R,
    /// Error of the single-pulse stroboscopic simulator.
    pub stroboscopic: R,
    /// `8N²R_M sup_{a≥0}|f|`, vanishing as `R_M → 0`.
    pub multi_gate: R,
    pub ratios: RegimeRatios<R>,
    pub flags: ValidityFlags,
    pub margin: R,
}

/// Bound in the regime the parameters classify into; errors between regimes.
pub fn table_bound<R: Real>(params: &RegimeParams<R>, margin: R) -> Result<BoundReport<R>> {
    params.validate()?;
    let regime = params.classify(margin).ok_or_else(|| {
        let r = params.ratios();
        Error::InvalidArgument(format!(
            "parameters fit none of regimes I-III at margin {margin} (ε_max = {}, bath scale = {})",
            r.eps_max, r.bath_scale
        ))
    })?;
    Ok(table_bound_in(params, regime, margin))
}

/// Evaluates the bound formula of `regime` regardless of classification.
pub fn table_bound_in<R: Real>(params: &RegimeParams<R>, regime: Regime, margin: R) -> BoundReport<R> {
    let n = R::count(params.n_cycles);
    let c = R::count(params.pair_count);
    let fs = &params.f_stats;
    let stroboscopic = match regime {
        Regime::I | Regime::II => n * n * c * params.eps_max * fs.f0,
        Regime::III => n * c * params.eps_max * fs.a_b * fs.sup_all,
    };
    let multi_gate = R::lit(8.0) * n * n * params.r_m * fs.sup_nonneg;
    BoundReport {
        regime,
        total: stroboscopic + multi_gate,
        stroboscopic,
        multi_gate,
        ratios: params.ratios(),
        flags: params.flags(margin),
        margin,
    }
}

/// `S(x)` with `f(s) = ∫ S(x) e^{−ixs} dx` for the continuous families.
fn spectral_function<R: Real>(bath: &BathSpec<R>, x: R) -> Result<R> {
    let occ = |nu: R| if bath.beta.is_finite() { R::one() / (bath.beta * nu).exp_m1() } else { R::zero() };
    match &bath.family {
        BathFamily::Ohmic { eta, w, nu_c } => {
            let j = |nu: R| *eta * nu.powf(*w) * (-nu / *nu_c).exp();
            Ok(if x > R::zero() {
                j(x) * (R::one() + occ(x))
            } else if x < R::zero() {
                j(-x) * occ(-x)
            } else {
                R::zero()
            })
        }
        BathFamily::Centered { eta, w, nu_c, center } => {
            let d = (x - *center).abs();
            Ok(*eta * d.powf(*w) * (-d / *nu_c).exp())
        }
        BathFamily::Discrete { .. } => {
            Err(Error::InvalidArgument("discrete-mode bath has no spectral function".into()))
        }
    }
}

/// `∫ S(x) D₀(c;x) dx` over the bath spectral function.
pub fn spectral_d0_integral<R: Real>(bath: &BathSpec<R>, eps: R, c: R) -> Result<C<R>> {
    check_window(c)?;
    bath.validate()?;
    let (nu_c, center, two_sided) = match &bath.family {
        BathFamily::Ohmic { nu_c, .. } => (*nu_c, R::zero(), bath.beta.is_finite()),
        BathFamily::Centered { nu_c, center, .. } => (*nu_c, *center, true),
        BathFamily::Discrete { .. } => {
            return Err(Error::InvalidArgument("discrete-mode bath has no spectral function".into()))
        }
    };
    let mut points = Vec::new();
    for k in [1e-3, 0.05, 1.0, 5.0, 15.0, 60.0] {
        points.push(center + nu_c * R::lit(k));
        if two_sided {
            points.push(center - nu_c * R::lit(k));
        }
    }
    points.push(center);
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut failure = None;
    let mut integrand = |x: R| match spectral_function(bath, x) {
        Ok(s) => d0_closed(c, x, eps) * real(s),
        Err(e) => {
            failure.get_or_insert(e);
            zero_c()
        }
    };
    let scale = spectral_function(bath, center + nu_c)?.abs() * nu_c;
    let opts = QuadOptions { abs_tol: 1e-15 * scale.as_f64().max(1e-300), rel_tol: 1e-13, max_intervals: 4000 };
    let value = integrate_with_breaks(&mut integrand, &points, &opts)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(value)
}

/// One of the two channels being compared.
#[derive(Clone, Copy, Debug)]
pub enum Channel<'a, R: Real> {
    Target,
    Simulator(&'a PulseSchedule<R>),
}

/// Cell quadrature settings for [`channel_difference`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DifferenceOptions<R: Real> {
    /// Longest cell, in units of the cycle time.
    pub max_cell: R,
    /// Gauss–Legendre points per cell and direction.
    pub order: usize,
}

impl<R: Real> Default for DifferenceOptions<R> {
    fn default() -> Self {
        Self { max_cell: R::lit(0.05), order: 6 }
    }
}

/// `E_first − E_second = Δ1 + Δ2 + Δ3` at second order in the coupling, in
/// the interaction picture and the computational basis.
#[derive(Clone, Debug)]
pub struct ChannelDifference<R: Real> {
    /// `X ↦ Σ f·A X A` sandwich terms.
    pub delta1: SuperOperator<R>,
    /// `X ↦ −D X`.
    pub delta2: SuperOperator<R>,
    /// `X ↦ −X D†`, the adjoint map of `Δ2`.
    pub delta3: SuperOperator<R>,
    pub total: SuperOperator<R>,
    /// Spectral norm of `total`.
    pub norm: R,
}

impl<R: Real> ChannelDifference<R> {
    pub fn apply(&self, x: &CMatrix<R>) -> CMatrix<R> {
        self.total.apply(x)
    }

    /// `½‖Δ(ρ)‖₁`, the trace distance the difference produces from `ρ`.
    pub fn trace_distance_from(&self, rho: &Operator<R>) -> R {
        let out = self.total.apply(rho.matrix());
        if out.iter().all(|z| z.re == R::zero() && z.im == R::zero()) {
            return R::zero();
        }
        SVD::new(out, false, false).singular_values.iter().fold(R::zero(), |a, &b| a + b) * R::lit(0.5)
    }
}

/// Integration cell `[lo, hi]` inside cycle `q`.
#[derive(Clone, Copy, Debug)]
struct Cell<R: Real> {
    lo: R,
    hi: R,
    q: usize,
    /// Index of the cell within its cycle.
    slot: usize,
}

fn build_cells<R: Real>(period: R, n: usize, breaks: &[R], max_cell: R) -> Vec<Cell<R>> {
    let mut pts: Vec<R> = vec![R::zero(), period];
    pts.extend(breaks.iter().copied().filter(|&b| b > R::zero() && b < period));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = R::lit(1e-12) * period;
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let mut local = Vec::new();
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let parts = (len / (max_cell * period)).ceil().to_usize().unwrap_or(1).max(1);
        for p in 0..parts {
            let lo = w[0] + len * R::count(p) / R::count(parts);
            let hi = w[0] + len * R::count(p + 1) / R::count(parts);
            local.push((lo, hi));
        }
    }
    let mut cells = Vec::with_capacity(local.len() * n);
    for q in 0..n {
        let base = period * R::count(q);
        for (slot, &(lo, hi)) in local.iter().enumerate() {
            cells.push(Cell { lo: base + lo, hi: base + hi, q, slot });
        }
    }
    cells
}

/// `A_k(s) = Σ_α g_α(s) M^k_α` for one channel, with `α = (piece j, ω)` and
/// `g_α(s) = 1[s ∈ piece j] e^{−iωτ(s)}`; `τ(s) = s` for the target (one
/// piece) and `τ = qT` for the simulator.
struct ChannelBasis<R: Real> {
    pieces: usize,
    freqs: usize,
    /// `[k][j·n_ω + ω]` in the computational basis; `None` when zero.
    ops: Vec<Vec<Option<CMatrix<R>>>>,
    /// Piece of each cell slot.
    piece_of_slot: Vec<usize>,
    continuous_phase: bool,
}

impl<R: Real> ChannelBasis<R> {
    fn new(channel: Channel<'_, R>, model: &ModelSpec<R>, frame: &Frame<R>, slots: &[(R, R)]) -> Self {
        let nw = frame.freqs.len();
        let (frames, piece_of_slot, continuous) = match channel {
            Channel::Target => (vec![None], vec![0; slots.len()], true),
            Channel::Simulator(sched) => {
                let segs = sched.segments();
                let pieces = segs.iter().map(|s| Some(sched.partial_product(s.fired))).collect::<Vec<_>>();
                let piece_of_slot = slots
                    .iter()
                    .map(|&(lo, hi)| {
                        let mid = (lo + hi) * R::lit(0.5);
                        segs.iter().position(|s| mid >= s.start && mid < s.end).unwrap_or(segs.len() - 1)
                    })
                    .collect();
                (pieces, piece_of_slot, false)
            }
        };
        let ops = model
            .couplings
            .iter()
            .map(|a| {
                let mut per_k = Vec::with_capacity(frames.len() * nw);
                for v in &frames {
                    let b = match v {
                        Some(v) => a.conjugated_by(v),
                        None => a.clone(),
                    };
                    let b_eig = frame.to_eig(b.matrix());
                    for w in 0..nw {
                        let mut m = b_eig.clone();
                        let mut nonzero = false;
                        for (e, z) in m.iter_mut().enumerate() {
                            if frame.freq_of[e] != w {
                                *z = zero_c();
                            } else if cabs(*z) > R::lit(1e-14) {
                                nonzero = true;
                            }
                        }
                        per_k.push(nonzero.then(|| frame.from_eig(&m)));
                    }
                }
                per_k
            })
            .collect();
        Self { pieces: frames.len(), freqs: nw, ops, piece_of_slot, continuous_phase: continuous }
    }

    fn size(&self) -> usize {
        self.pieces * self.freqs
    }

    fn phases(&self, frame: &Frame<R>, cell: &Cell<R>, s: R, period: R) -> Vec<C<R>> {
        let tau = if self.continuous_phase { s } else { period * R::count(cell.q) };
        frame.phases(tau)
    }
}

/// Scalar kernels `L_αβ = ∬_{v<u} f(u−v) g_α(u) g_β(v)` and `L̃` with `f(v−u)`.
struct Kernels<R: Real> {
    l: CMatrix<R>,
    lt: CMatrix<R>,
}

fn unit_rule<R: Real>(order: usize) -> Vec<(R, R)> {
    let (x, w) = gauss_legendre(order);
    x.iter().zip(&w).map(|(&x, &w)| (R::lit(0.5 * (x + 1.0)), R::lit(0.5 * w))).collect()
}

fn accumulate_pair<R: Real>(
    k: &mut Kernels<R>,
    basis: &ChannelBasis<R>,
    (pu, pv): (usize, usize),
    a: &[Vec<C<R>>],
    b: &[Vec<C<R>>],
    f: &[Vec<C<R>>],
) {
    let nw = basis.freqs;
    let (ou, ov) = (pu * nw, pv * nw);
    let mut r = vec![zero_c::<R>(); nw];
    let mut rt = vec![zero_c::<R>(); nw];
    for (ai, fi) in a.iter().zip(f) {
        r.iter_mut().for_each(|z| *z = zero_c());
        rt.iter_mut().for_each(|z| *z = zero_c());
        for (bj, &fij) in b.iter().zip(fi) {
            let fc = fij.conj();
            for w in 0..nw {
                r[w] += fij * bj[w];
                rt[w] += fc * bj[w];
            }
        }
        for w in 0..nw {
            for w2 in 0..nw {
                k.l[(ou + w, ov + w2)] += ai[w] * r[w2];
                k.lt[(ou + w, ov + w2)] += ai[w] * rt[w2];
            }
        }
    }
}

/// `out += s·(bᵀ ⊗ a)`, the matrix of `X ↦ s·a X b` on column-stacked `vec(X)`.
fn kron_acc<R: Real>(out: &mut CMatrix<R>, a: &CMatrix<R>, b: &CMatrix<R>, s: C<R>) {
    let d = a.nrows();
    let big = d * d;
    let a_s = a.as_slice();
    let o = out.as_mut_slice();
    for j in 0..d {
        for i in 0..d {
            let bji = b[(j, i)] * s;
            if bji.re == R::zero() && bji.im == R::zero() {
                continue;
            }
            for l in 0..d {
                let base = (j * d + l) * big + i * d;
                let col = &a_s[l * d..(l + 1) * d];
                for (t, &z) in o[base..base + d].iter_mut().zip(col) {
                    *t += bji * z;
                }
            }
        }
    }
}

/// Sandwich part and `M2 = Σ c_kℓ Σ L_αβ M^k_α M^ℓ_β` of one channel.
fn assemble<R: Real>(
    basis: &ChannelBasis<R>,
    kern: &Kernels<R>,
    coupling: &nalgebra::DMatrix<R>,
    dim: usize,
) -> (CMatrix<R>, CMatrix<R>) {
    let n = basis.size();
    let mut term1 = CMatrix::zeros(dim * dim, dim * dim);
    let mut m2 = CMatrix::zeros(dim, dim);
    let combo = |coef: &CMatrix<R>, row: Option<usize>, col: Option<usize>, ops: &[Option<CMatrix<R>>]| {
        let mut y = CMatrix::<R>::zeros(dim, dim);
        for (t, op) in ops.iter().enumerate() {
            let Some(op) = op else { continue };
            let z = match (row, col) {
                (Some(a), None) => coef[(a, t)],
                (None, Some(b)) => coef[(t, b)],
                _ => unreachable!(),
            };
            if z.re != R::zero() || z.im != R::zero() {
                y += op * z;
            }
        }
        y
    };
    for k in 0..basis.ops.len() {
        for l in 0..basis.ops.len() {
            let c = coupling[(k, l)];
            if c == R::zero() {
                continue;
            }
            let c = real(c);
            let (mk, ml) = (&basis.ops[k], &basis.ops[l]);
            for alpha in 0..n {
                let Some(ma) = &mk[alpha] else { continue };
                // Σ_β L_αβ M^ℓ_β, placed right of X and right of M^k_α in M2.
                let y = combo(&kern.l, Some(alpha), None, ml);
                kron_acc(&mut term1, &y, ma, c);
                m2 += ma * &y * c;
            }
            for beta in 0..n {
                let Some(mb) = &ml[beta] else { continue };
                // Σ_α L̃_αβ M^k_α, placed left of X.
                let y = combo(&kern.lt, None, Some(beta), mk);
                kron_acc(&mut term1, &y, mb, c);
            }
        }
    }
    (term1, m2)
}

/// Second-order difference `E_first − E_second` of two `N`-cycle channels
/// sharing the cycle time `period`, by composite Gauss–Legendre quadrature
/// over cells bounded by cycle and gate times.
///
/// The bath correlation is evaluated once per node pair; baths without a
/// closed-form correlation function are slow here.
pub fn channel_difference<R: Real>(
    n_cycles: usize,
    period: R,
    model: &ModelSpec<R>,
    first: Channel<'_, R>,
    second: Channel<'_, R>,
    bath: &BathSpec<R>,
    opts: &DifferenceOptions<R>,
) -> Result<ChannelDifference<R>> {
    if n_cycles == 0 {
        let d = model.dim();
        let z = SuperOperator::zero(d);
        return Ok(ChannelDifference {
            delta1: z.clone(),
            delta2: z.clone(),
            delta3: z.clone(),
            total: z,
            norm: R::zero(),
        });
    }
    if !(period > R::zero()) || !(opts.max_cell > R::zero()) || opts.order == 0 {
        return Err(Error::InvalidArgument("cycle time, cell size and order must be positive".into()));
    }
    let mut breaks = Vec::new();
    for ch in [first, second] {
        if let Channel::Simulator(s) = ch {
            if (s.period - period).abs() > R::lit(1e-12) * period {
                return Err(Error::InvalidArgument(format!("schedule period {} differs from {period}", s.period)));
            }
            breaks.extend(s.gate_times.iter().copied());
        }
    }
    let corr = Correlation::new(bath)?;
    let frame = Frame::new(model)?;
    let dim = model.dim();
    let cells = build_cells(period, n_cycles, &breaks, opts.max_cell);
    let per_cycle = cells.len() / n_cycles;
    let slots: Vec<(R, R)> = cells[..per_cycle].iter().map(|c| (c.lo, c.hi)).collect();
    let bases = [ChannelBasis::new(first, model, &frame, &slots), ChannelBasis::new(second, model, &frame, &slots)];
    let mut kernels: Vec<Kernels<R>> = bases
        .iter()
        .map(|b| Kernels { l: CMatrix::zeros(b.size(), b.size()), lt: CMatrix::zeros(b.size(), b.size()) })
        .collect();

    let rule = unit_rule::<R>(opts.order);
    let nodes: Vec<Vec<(R, R)>> = cells
        .iter()
        .map(|c| rule.iter().map(|&(x, w)| (c.lo + (c.hi - c.lo) * x, w * (c.hi - c.lo))).collect())
        .collect();
    // Per channel, per cell: node weights folded into the phases later.
    let phases: Vec<Vec<Vec<Vec<C<R>>>>> = bases
        .iter()
        .map(|b| {
            cells
                .iter()
                .zip(&nodes)
                .map(|(c, ns)| ns.iter().map(|&(s, _)| b.phases(&frame, c, s, period)).collect())
                .collect()
        })
        .collect();

    let m = rule.len();
    let mut fmat = vec![vec![zero_c::<R>(); m]; m];
    for (p, cp) in cells.iter().enumerate() {
        for q in 0..p {
            for (i, &(u, wu)) in nodes[p].iter().enumerate() {
                for (j, &(v, wv)) in nodes[q].iter().enumerate() {
                    fmat[i][j] = corr.f(u - v)? * real(wu * wv);
                }
            }
            for (ci, b) in bases.iter().enumerate() {
                let pieces = (b.piece_of_slot[cp.slot], b.piece_of_slot[cells[q].slot]);
                accumulate_pair(&mut kernels[ci], b, pieces, &phases[ci][p], &phases[ci][q], &fmat);
            }
        }
        // Triangle v < u inside the cell: v = lo + (u − lo)·ξ.
        for &(u, wu) in &nodes[p] {
            let span = u - cp.lo;
            let inner: Vec<(R, R)> = rule.iter().map(|&(x, w)| (cp.lo + span * x, w * span)).collect();
            let frow: Vec<C<R>> =
                inner.iter().map(|&(v, wv)| corr.f(u - v).map(|z| z * real(wu * wv))).collect::<Result<_>>()?;
            for (ci, b) in bases.iter().enumerate() {
                let j = b.piece_of_slot[cp.slot];
                let a = vec![b.phases(&frame, cp, u, period)];
                let bv: Vec<Vec<C<R>>> = inner.iter().map(|&(v, _)| b.phases(&frame, cp, v, period)).collect();
                accumulate_pair(&mut kernels[ci], b, (j, j), &a, &bv, std::slice::from_ref(&frow));
            }
        }
    }

    let coupling = bath.coupling_matrix(model.couplings.len());
    let (t1a, m2a) = assemble(&bases[0], &kernels[0], &coupling, dim);
    let (t1b, m2b) = assemble(&bases[1], &kernels[1], &coupling, dim);
    let delta1 = SuperOperator::from_matrix(dim, t1a - t1b)?;
    let d = m2a - m2b;
    let delta2 = SuperOperator::left(&(-&d));
    let delta3 = SuperOperator::right(&(-d.adjoint()));
    let total = &(&delta1 + &delta2) + &delta3;
    let norm = superop_norm(&total);
    Ok(ChannelDifference { delta1, delta2, delta3, total, norm })
}

/// `E_{S₁} − E_sim` when a reference schedule is given, else `E_tar − E_sim`,
/// over `N` cycles of the simulator's period.
pub fn perturbative_difference<R: Real>(
    n_cycles: usize,
    model: &ModelSpec<R>,
    schedule_sim: &PulseSchedule<R>,
    schedule_s1: Option<&PulseSchedule<R>>,
    bath: &BathSpec<R>,
) -> Result<ChannelDifference<R>> {
    let first = schedule_s1.map_or(Channel::Target, Channel::Simulator);
    let opts = DifferenceOptions {
        max_cell: R::lit(0.05).min(R::lit(0.25) * bath.correlation_time() / schedule_sim.period),
        ..DifferenceOptions::default()
    };
    channel_difference(n_cycles, schedule_sim.period, model, first, Channel::Simulator(schedule_sim), bath, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gate_schedule, instantaneous_schedule, toric_vertex_model, GateSpacing, Mu};
    use crate::quadrature::integrate;
    use crate::tcl2::{cross_distance, evolve, Tcl2Options};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn lattice() -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    out.push((0.25 * i as f64, -10.0 + 5.0 * j as f64, -0.2 + 0.1 * k as f64));
                }
            }
        }
        out
    }

    /// `∫₀^c e^{ixa}[e^{iε(1−a)} − 1] da` by plain adaptive quadrature.
    fn d0_reference(c: f64, x: f64, eps: f64) -> Complex64 {
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 0.0, max_intervals: 4000 };
        if c == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        integrate(|a: f64| cis(x * a) * (cis(eps * (1.0 - a)) - 1.0), 0.0, c, &opts).unwrap().value
    }

    #[test]
    fn d_vanishes_without_compression_or_window() {
        for (c, x, eps) in lattice() {
            assert!(d_numeric(c, x, eps, 1.0).unwrap().norm() < 1e-12);
            assert_eq!(d_numeric(0.0, x, eps, 0.3).unwrap(), Complex64::new(0.0, 0.0));
            assert!(d0_closed(0.0, x, eps).norm() < 1e-15);
            assert!(d0_closed(c, x, 0.0).norm() < 1e-15);
        }
        assert!(d_numeric(1.2, 0.0, 0.1, 0.5).is_err());
        assert!(d_numeric(0.5, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_on_lattice() {
        let mut worst: f64 = 0.0;
        for (c, x, eps) in lattice() {
            let closed = d0_closed(c, x, eps);
            worst = worst.max((d_numeric(c, x, eps, 1e-6).unwrap() - closed).norm());
            assert!((d0_reference(c, x, eps) - closed).norm() < 1e-12, "({c},{x},{eps})");
        }
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn series_branch_near_removable_points() {
        let eps = 0.005;
        for x in [0.0, 3e-5, -8e-5, eps, eps + 1e-6, eps - 9e-5, 1.1e-4] {
            for c in [0.3, 1.0] {
                let closed = d0_closed(c, x, eps);
                let quad = d_numeric(c, x, eps, 1e-6).unwrap();
                assert!((closed - quad).norm() < 1e-8, "x={x} c={c}: {:e}", (closed - quad).norm());
                assert!(
                    (closed - d0_reference(c, x, eps)).norm() < 1e-11,
                    "ref x={x} c={c}: {:e}",
                    (closed - d0_reference(c, x, eps)).norm()
                );
            }
        }
        // Both sides of the switch.
        for x in [0.99e-4, 1.01e-4] {
            assert!((d0_closed(0.8, x, 0.1) - d0_reference(0.8, x, 0.1)).norm() < 1e-11);
        }
    }

    #[test]
    fn compression_sequence_converges_to_closed_form() {
        for (c, x, eps) in [(1.0, 3.0, 0.15), (0.6, -7.5, -0.1), (0.25, 0.4, 0.2)] {
            let closed = d0_closed(c, x, eps);
            let errs: Vec<f64> =
                [1e-3, 1e-4, 1e-5, 1e-6].iter().map(|&r| (d_numeric(c, x, eps, r).unwrap() - closed).norm()).collect();
            for w in errs.windows(2) {
                assert!(w[1] < w[0], "{errs:?}");
            }
            assert!(errs[3] < 1e-6);
        }
    }

    #[test]
    fn regime_approximations() {
        let eps = 0.07;
        let half = d0_regime(1.0, 0.01, eps, Regime::I);
        assert!((half - Complex64::new(0.0, eps / 2.0)).norm() < 1e-16);
        assert_eq!(d0_regime(0.4, 0.01, eps, Regime::II), d0_regime(0.4, 0.03, eps, Regime::II));
        assert_eq!(d0_regime(0.4, 0.01, eps, Regime::I), d0_regime(0.4, -0.05, eps, Regime::II));
        let iii = d0_regime(1.0, 12.0, eps, Regime::III);
        assert!((iii - Complex64::new(-eps / 12.0, 0.0)).norm() < 1e-16);

        let deep = d0_closed(0.7, 0.05, 1e-4);
        let approx = d0_regime(0.7, 0.05, 1e-4, Regime::II);
        assert!((deep - approx).norm() / deep.norm() < 0.05);
        let deep1 = d0_closed(0.5, 1e-4, 0.02);
        let approx1 = d0_regime(0.5, 1e-4, 0.02, Regime::I);
        assert!((deep1 - approx1).norm() / deep1.norm() < 0.05);
        let deep3 = d0_closed(0.9, 40.0, 1e-3);
        let approx3 = d0_regime(0.9, 40.0, 1e-3, Regime::III);
        assert!((deep3 - approx3).norm() / deep3.norm() < 0.1);
    }

    #[test]
    fn regime_classification_examples() {
        let m = DEFAULT_MARGIN;
        assert_eq!(classify_regime(0.1, 0.0, 0.02, m), Some(Regime::I));
        assert_eq!(classify_regime(1e-4, 0.0, 0.05, m), Some(Regime::II));
        assert_eq!(classify_regime(4e-4, 0.0, 8.0, m), Some(Regime::III));
        assert_eq!(classify_regime(0.005, 0.0, 1.0, m), None);
        assert_eq!(classify_regime(0.5, 0.0, 0.02, m), None);
        let flags = ValidityFlags::evaluate(&RegimeRatios::new(4e-4, 0.0, 8.0), m, true);
        assert!(flags.regime_iii && flags.low_frequency_support);
    }

    fn params(n: usize, eps: f64, r_m: f64) -> RegimeParams<f64> {
        RegimeParams {
            eps_max: eps,
            x_bar: 0.0,
            x_c: 0.02,
            n_cycles: n,
            r_m,
            pair_count: 9,
            f_stats: FStats { f0: 8e-6, sup_nonneg: 8e-6, sup_all: 8e-6, a_b: 50.0 },
            low_frequency_support: true,
        }
    }

    #[test]
    fn tabulated_bound_examples() {
        let rep = table_bound(&params(10, 0.1, 0.0), DEFAULT_MARGIN).unwrap();
        assert_eq!(rep.regime, Regime::I);
        assert!((rep.total - 7.2e-4).abs() < 1e-15);
        assert_eq!(rep.multi_gate, 0.0);
        let rep = table_bound(&params(10, 0.1, 0.4), DEFAULT_MARGIN).unwrap();
        assert!((rep.multi_gate - 8.0 * 100.0 * 0.4 * 8e-6).abs() < 1e-15);
        assert_eq!(rep.total, rep.stroboscopic + rep.multi_gate);
        let iii = table_bound_in(&params(10, 0.1, 0.0), Regime::III, DEFAULT_MARGIN);
        assert!((iii.total - 10.0 * 9.0 * 0.1 * 50.0 * 8e-6).abs() < 1e-15);
        let mut none = params(10, 0.005, 0.0);
        none.x_c = 1.0;
        assert!(table_bound(&none, DEFAULT_MARGIN).is_err());
    }

    #[test]
    fn bath_statistics_from_ohmic_vacuum() {
        let bath = BathSpec::ohmic(0.3, 1.0, 2.0, f64::INFINITY).unwrap();
        let fs = FStats::from_bath(&bath, 10.0).unwrap();
        assert!((fs.f0 - 0.3 * 4.0).abs() < 1e-9 * 1.2);
        assert_eq!(fs.sup_nonneg, fs.f0);
        assert!((fs.a_b * 2.0 - 1.0).abs() < 1e-15);
        let m = toric_vertex_model::<f64>(0.1).unwrap();
        let p = RegimeParams::from_model(&m, &BathSpec::ohmic(0.02, 1.0, 0.02, 40.0).unwrap(), 10, 0.0).unwrap();
        assert_eq!(p.pair_count, 9);
        assert_eq!(p.classify(DEFAULT_MARGIN), Some(Regime::I));
    }

    proptest! {
        #[test]
        fn bound_is_monotone(n in 1usize..400, eps in 1e-4f64..0.3, r in 0.0f64..0.9,
                             dn in 0usize..50, de in 0.0f64..0.1, dr in 0.0f64..0.1,
                             f0 in 1e-8f64..1e-2, extra in 0.0f64..2.0) {
            for regime in [Regime::I, Regime::II, Regime::III] {
                let mut p = params(n, eps, r);
                p.f_stats = FStats { f0, sup_nonneg: f0 * (1.0 + extra), sup_all: f0 * (1.0 + extra), a_b: 50.0 };
                let base = table_bound_in(&p, regime, DEFAULT_MARGIN).total;
                let mut q = p;
                q.n_cycles += dn;
                prop_assert!(table_bound_in(&q, regime, DEFAULT_MARGIN).total >= base);
                let mut q = p;
                q.eps_max += de;
                prop_assert!(table_bound_in(&q, regime, DEFAULT_MARGIN).total >= base);
                let mut q = p;
                q.r_m = (q.r_m + dr).min(1.0);
                prop_assert!(table_bound_in(&q, regime, DEFAULT_MARGIN).total >= base);
            }
        }

        #[test]
        fn closed_form_is_conjugation_symmetric(c in 0.0f64..1.0, x in -10.0f64..10.0, eps in -0.2f64..0.2) {
            // D₀(c;−x,−ε) = D₀(c;x,ε)*.
            let a = d0_closed(c, x, eps);
            let b = d0_closed(c, -x, -eps).conj();
            prop_assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn spectral_integral_identities() {
        let (eta, x_c) = (0.7, 0.8);
        let bath = BathSpec::ohmic(eta, 1.0, x_c, f64::INFINITY).unwrap();
        let corr = Correlation::new(&bath).unwrap();
        assert!((corr.f(0.0).unwrap().re - eta * x_c * x_c).abs() < 1e-9 * eta * x_c * x_c);
        // Swapping the integrals: ∫ S(x) D₀(c;x) dx = ∫₀^c f(−a)[e^{iε(1−a)} − 1] da.
        for (eps, c) in [(0.1, 1.0), (-0.05, 0.6), (1e-3, 1.0)] {
            let lhs = spectral_d0_integral(&bath, eps, c).unwrap();
            let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 2000 };
            let rhs =
                integrate(|a: f64| corr.f(-a).unwrap() * (cis(eps * (1.0 - a)) - 1.0), 0.0, c, &opts).unwrap().value;
            assert!((lhs - rhs).norm() < 1e-10, "ε={eps}: {:e}", (lhs - rhs).norm());
        }
        // Leading order in ε.
        let eps = 1e-5;
        let lhs = spectral_d0_integral(&bath, eps, 1.0).unwrap();
        let expect = Complex64::new(-x_c, 0.0) + Complex64::i() * Complex64::new(1.0, -x_c).ln();
        let expect = expect * eta * eps;
        assert!((lhs - expect).norm() < 1e-8);
        assert!((lhs - expect).norm() < 10.0 * eps * expect.norm());
    }

    fn random_matrix(d: usize, rng: &mut impl Rng) -> CMatrix<f64> {
        CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn difference_map_structure() {
        let m = toric_vertex_model::<f64>(0.1).unwrap();
        let s = gate_schedule(&m, 1.0, 0.4, GateSpacing::Endpoints).unwrap();
        let bath = BathSpec::ohmic(0.02, 1.0, 0.02, 40.0).unwrap();
        let opts = DifferenceOptions::default();
        for ch in [Channel::Target, Channel::Simulator(&s)] {
            let zero = channel_difference(3, 1.0, &m, ch, ch, &bath, &opts).unwrap();
            assert_eq!(zero.norm, 0.0);
        }
        let diff = perturbative_difference(3, &m, &s, None, &bath).unwrap();
        assert!(diff.norm > 0.0);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random_matrix(16, &mut rng);
            let d3 = diff.delta3.apply(&x);
            let d2 = diff.delta2.apply(&x.adjoint()).adjoint();
            assert!((d3 - d2).norm() <= 1e-10 * diff.norm * x.norm());
            let out = diff.apply(&x);
            assert!(out.trace().norm() <= 1e-12 * diff.norm * x.norm());
            let h = &x + x.adjoint();
            let img = diff.apply(&h);
            assert!((&img - img.adjoint()).norm() <= 1e-12 * diff.norm * h.norm());
        }
        // Refining the cells leaves the map unchanged.
        let fine = DifferenceOptions { max_cell: 0.02, order: 8 };
        let again = channel_difference(3, 1.0, &m, Channel::Target, Channel::Simulator(&s), &bath, &fine).unwrap();
        let gap = (again.total.matrix() - diff.total.matrix()).norm() / diff.total.matrix().norm();
        assert!(gap < 1e-10, "{gap:e}");
    }

    #[test]
    fn sandwich_term_matches_small_frequency_limit() {
        // ε ≪ x_c ≪ 1 with N·x_c ≪ 1: f is flat over the window.
        let (eps, x_c, n) = (1e-4, 2e-3, 2usize);
        let m = toric_vertex_model::<f64>(eps).unwrap();
        let s1 = instantaneous_schedule(&m, 1.0).unwrap();
        let bath = BathSpec::ohmic(1.0, 1.0, x_c, f64::INFINITY).unwrap();
        let diff = channel_difference(n, 1.0, &m, Channel::Target, Channel::Simulator(&s1), &bath, &Default::default())
            .unwrap();
        let f0 = x_c * x_c;
        let nn = (n * n) as f64;
        let mut expect = SuperOperator::zero(16);
        for k in 0..4 {
            let comps = m.frequency_components(k).unwrap();
            for (w1, a1) in &comps {
                for (w2, a2) in &comps {
                    let z = Complex64::new(0.0, 0.5 * nn * f0 * (w1 + w2));
                    expect.add_assign(&SuperOperator::sandwich(a1.matrix(), a2.matrix()).scaled(z));
                }
            }
        }
        let err = (diff.delta1.matrix() - expect.matrix()).norm() / expect.matrix().norm();
        let order = n as f64 * (eps + 2.0 * x_c);
        assert!(err < 5.0 * order, "{err:e} vs {order:e}");
    }

    #[test]
    fn difference_map_predicts_weak_coupling_trajectories() {
        let m = toric_vertex_model::<f64>(0.1).unwrap();
        let s = gate_schedule(&m, 1.0, 0.4, GateSpacing::Endpoints).unwrap();
        let bath = BathSpec::ohmic(1e-4, 1.0, 0.02, 40.0).unwrap();
        let rho0 = m.default_initial_state().unwrap();
        let opts = Tcl2Options::new(0.025);
        let n = 4;
        let tar = evolve(&rho0, Mu::Tar, &m, &s, &bath, &opts, n).unwrap();
        let sim = evolve(&rho0, Mu::Sim, &m, &s, &bath, &opts, n).unwrap();
        let d_cross = cross_distance(&tar, &sim).unwrap();
        let diff = perturbative_difference(n, &m, &s, None, &bath).unwrap();
        let predicted = diff.trace_distance_from(&rho0);
        let rel = (predicted - d_cross[n]).abs() / d_cross[n];
        assert!(rel < 0.02, "{predicted:e} vs {:e}", d_cross[n]);
    }
}
