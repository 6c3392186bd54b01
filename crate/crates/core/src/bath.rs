//! Bosonic bath spectral densities and two-point correlation functions.
//!
//! All routines work in whatever time unit the caller picks; the engine uses
//! the cycle time `T = 1`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, GaussLegendre, QuadOptions};
use crate::scalar::{cexp, cinv, cln, cplx, i_unit, real, Real, C};
use crate::special::{digamma, trigamma};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode<R: Real> {
    pub omega: R,
    pub g: R,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BathFamily<R: Real> {
    /// `J(ν) = η ν^w e^{−ν/ν_c}` for `ν ≥ 0`, thermally populated at `β`.
    Ohmic { eta: R, w: R, nu_c: R },
    /// Two-sided prototype spectral function `η |ν−ν̄|^w e^{−|ν−ν̄|/ν_c}`
    /// used directly as the Fourier transform of `f`; `β` is ignored.
    Centered { eta: R, w: R, nu_c: R, center: R },
    /// Finite set of oscillators with real couplings.
    Discrete { modes: Vec<Mode<R>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec<R: Real> {
    pub family: BathFamily<R>,
    /// Inverse temperature; `+∞` for the vacuum.
    pub beta: R,
    /// `f_kℓ = δ_kℓ f` when true; a single shared bath (`f_kℓ = f`) otherwise.
    pub independent_baths: bool,
}

impl<R: Real> BathSpec<R> {
    pub fn ohmic(eta: R, w: R, nu_c: R, beta: R) -> Result<Self> {
        let spec = Self { family: BathFamily::Ohmic { eta, w, nu_c }, beta, independent_baths: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn discrete(modes: Vec<Mode<R>>, beta: R) -> Result<Self> {
        let spec = Self { family: BathFamily::Discrete { modes }, beta, independent_baths: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn shared(mut self) -> Self {
        self.independent_baths = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.beta > R::zero()) {
            return bad(format!("beta must be positive or infinite, got {}", self.beta));
        }
        match &self.family {
            BathFamily::Ohmic { eta, w, nu_c } | BathFamily::Centered { eta, w, nu_c, .. } => {
                if !(*eta >= R::zero()) || !eta.is_finite() {
                    return bad(format!("eta must be nonnegative, got {eta}"));
                }
                if !(*nu_c > R::zero()) || !nu_c.is_finite() {
                    return bad(format!("nu_c must be positive, got {nu_c}"));
                }
                if !(*w > R::zero()) || !w.is_finite() {
                    return bad(format!("w must be positive, got {w}"));
                }
            }
            BathFamily::Discrete { modes } => {
                for m in modes {
                    if !(m.omega > R::zero()) || !m.omega.is_finite() || !m.g.is_finite() {
                        return bad(format!("mode frequency must be positive, got {}", m.omega));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_zero_temperature(&self) -> bool {
        !self.beta.is_finite()
    }

    /// Bath cross-correlation pattern `c_kℓ` with `f_kℓ = c_kℓ f`.
    pub fn coupling_matrix(&self, n: usize) -> DMatrix<R> {
        if self.independent_baths {
            DMatrix::identity(n, n)
        } else {
            DMatrix::from_element(n, n, R::one())
        }
    }

    /// Correlation time `1/ν_c` (continuous families) or `1/min ω_m`.
    pub fn correlation_time(&self) -> R {
        match &self.family {
            BathFamily::Ohmic { nu_c, .. } | BathFamily::Centered { nu_c, .. } => R::one() / *nu_c,
            BathFamily::Discrete { modes } => {
                let wmin = modes.iter().fold(R::max_value().unwrap(), |m, x| m.min(x.omega));
                R::one() / wmin
            }
        }
    }
}

/// `1/(e^{βν} − 1)`, zero at `β = ∞`.
pub fn thermal_occupation<R: Real>(nu: R, beta: R) -> Result<R> {
    if !(nu > R::zero()) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {nu}")));
    }
    if !beta.is_finite() {
        return Ok(R::zero());
    }
    Ok(R::one() / (beta * nu).exp_m1())
}

/// `J(ν)` of an Ohmic-class family.
pub fn spectral_density<R: Real>(nu: R, spec: &BathSpec<R>) -> Result<R> {
    match &spec.family {
        BathFamily::Ohmic { eta, w, nu_c } => {
            Ok(if nu < R::zero() { R::zero() } else { *eta * nu.powf(*w) * (-nu / *nu_c).exp() })
        }
        BathFamily::Centered { eta, w, nu_c, center } => {
            let d = (nu - *center).abs();
            Ok(*eta * d.powf(*w) * (-d / *nu_c).exp())
        }
        BathFamily::Discrete { .. } => Err(Error::InvalidArgument("discrete-mode bath has no spectral density".into())),
    }
}

fn gamma_fn(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `z^p` on the principal branch.
fn cpow<R: Real>(z: C<R>, p: R) -> C<R> {
    cexp(cln(z) * real(p))
}

/// Evaluates `f(s)` and `F(τ) = ∫₀^τ f` for one bath, choosing closed forms
/// where they exist and adaptive quadrature otherwise.
#[derive(Clone, Debug)]
pub struct Correlation<R: Real> {
    spec: BathSpec<R>,
    quad: QuadOptions,
}

impl<R: Real> Correlation<R> {
    pub fn new(spec: &BathSpec<R>) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec: spec.clone(), quad: QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 } })
    }

    pub fn spec(&self) -> &BathSpec<R> {
        &self.spec
    }

    /// True when `f` and `F` have closed forms for this bath.
    pub fn has_closed_form(&self) -> bool {
        match &self.spec.family {
            BathFamily::Ohmic { w, .. } => self.spec.is_zero_temperature() || (*w - R::one()).abs() <= R::eps(),
            BathFamily::Centered { .. } => true,
            BathFamily::Discrete { .. } => true,
        }
    }

    /// `f(s)`.
    pub fn f(&self, s: R) -> Result<C<R>> {
        if self.has_closed_form() {
            Ok(self.f_closed(s))
        } else {
            self.f_quadrature(s)
        }
    }

    /// `∫₀^τ f(s) ds` (τ may be negative).
    pub fn big_f(&self, tau: R) -> Result<C<R>> {
        if self.has_closed_form() {
            Ok(self.big_f_closed(tau))
        } else {
            self.big_f_quadrature(tau)
        }
    }

    fn f_closed(&self, s: R) -> C<R> {
        let i = i_unit::<R>();
        let beta = self.spec.beta;
        match &self.spec.family {
            BathFamily::Ohmic { eta, w, nu_c } => {
                let a = R::one() / *nu_c;
                let z = cplx(a, s);
                if !beta.is_finite() {
                    let g = R::lit(gamma_fn(w.as_f64() + 1.0));
                    return cpow(z, -(*w + R::one())) * real(*eta * g);
                }
                // w = 1: the thermal tail sums to trigamma functions.
                let inv = cinv(z);
                let one = real(R::one());
                let zp = one + z * real(R::one() / beta);
                let zm = one + z.conj() * real(R::one() / beta);
                (inv * inv + (trigamma(zp) + trigamma(zm)) * real(R::one() / (beta * beta))) * real(*eta)
            }
            BathFamily::Centered { eta, w, nu_c, center } => {
                let a = R::one() / *nu_c;
                let g = R::lit(gamma_fn(w.as_f64() + 1.0));
                let p = -(*w + R::one());
                let two_sided = cpow(cplx(a, s), p) + cpow(cplx(a, -s), p);
                two_sided * cexp(-i * real(*center * s)) * real(*eta * g)
            }
            BathFamily::Discrete { modes } => modes.iter().fold(C::new(R::zero(), R::zero()), |acc, m| {
                let n = occupation_or_zero(m.omega, beta);
                let g2 = m.g * m.g;
                acc + (cexp(-i * real(m.omega * s)) * real(R::one() + n) + cexp(i * real(m.omega * s)) * real(n))
                    * real(g2)
            }),
        }
    }

    fn big_f_closed(&self, tau: R) -> C<R> {
        let i = i_unit::<R>();
        let beta = self.spec.beta;
        match &self.spec.family {
            BathFamily::Ohmic { eta, w, nu_c } => {
                let a = R::one() / *nu_c;
                let z = cplx(a, tau);
                if !beta.is_finite() {
                    let g = R::lit(gamma_fn(w.as_f64() + 1.0));
                    let diff = real(a.powf(-*w)) - cpow(z, -*w);
                    return diff * cinv(i * real(*w)) * real(*eta * g);
                }
                let zero_t = i * (cinv(z) - real(R::one() / a));
                let one = real(R::one());
                let ib = real(R::one() / beta);
                let thermal = i * ib * (digamma(one + z.conj() * ib) - digamma(one + z * ib));
                (zero_t + thermal) * real(*eta)
            }
            BathFamily::Centered { .. } => {
                // The closed form of F for a shifted centre needs incomplete gamma
                // functions; Gauss–Legendre panels on the smooth f are exact enough.
                self.big_f_panels(tau)
            }
            BathFamily::Discrete { modes } => modes.iter().fold(C::new(R::zero(), R::zero()), |acc, m| {
                let n = occupation_or_zero(m.omega, beta);
                let g2 = m.g * m.g;
                let iw = i * real(m.omega);
                let down = (one_c::<R>() - cexp(-iw * real(tau))) * cinv(iw);
                let up = (cexp(iw * real(tau)) - one_c::<R>()) * cinv(iw);
                acc + (down * real(R::one() + n) + up * real(n)) * real(g2)
            }),
        }
    }

    fn big_f_panels(&self, tau: R) -> C<R> {
        let gl = GaussLegendre::<R>::new(16);
        let scale = self.spec.correlation_time() * R::lit(0.25);
        let panels = (tau.abs() / scale).ceil().to_usize().unwrap_or(1).max(1);
        gl.integrate_composite(|s| self.f_closed(s), R::zero(), tau, panels)
    }

    fn thermal_parts(&self) -> (R, R, R, R) {
        match &self.spec.family {
            BathFamily::Ohmic { eta, w, nu_c } => (*eta, *w, *nu_c, self.spec.beta),
            _ => unreachable!("quadrature path is only used for the Ohmic family"),
        }
    }

    // Absolute tolerance for the thermal integrals, scaled by f(0).
    fn quad_options(&self, length: R) -> QuadOptions {
        let (eta, w, nu_c, beta) = self.thermal_parts();
        let g = gamma_fn(w.as_f64() + 1.0);
        let thermal = if beta.is_finite() { 1.0 + 1.0 / (beta * nu_c).as_f64() } else { 1.0 };
        let scale = eta.as_f64() * g * nu_c.as_f64().powf(w.as_f64() + 1.0) * thermal;
        QuadOptions { abs_tol: self.quad.abs_tol * scale * length.as_f64().max(1e-300), ..self.quad }
    }

    fn breakpoints(&self, nu_c: R, w: R) -> Vec<R> {
        let cut = nu_c * (R::lit(45.0) + R::lit(2.0) * w);
        let mut pts = vec![R::zero(), nu_c * R::lit(1e-3), nu_c * R::lit(0.05), nu_c, nu_c * R::lit(5.0)];
        pts.push(nu_c * R::lit(15.0));
        pts.push(cut);
        pts
    }

    /// Reference `f(s)` from the thermal integral
    /// `∫ J(ν)[(1+N)e^{−iνs} + N e^{iνs}] dν`.
    pub fn f_quadrature(&self, s: R) -> Result<C<R>> {
        match &self.spec.family {
            BathFamily::Ohmic { .. } => {}
            _ => return Ok(self.f_closed(s)),
        }
        let (eta, w, nu_c, beta) = self.thermal_parts();
        let mut integrand = |nu: R| {
            if nu <= R::zero() {
                return C::new(R::zero(), R::zero());
            }
            let j = eta * nu.powf(w) * (-nu / nu_c).exp();
            let n = occupation_or_zero(nu, beta);
            let (sn, cs) = (nu * s).sin_cos();
            cplx(j * (R::one() + R::lit(2.0) * n) * cs, -j * sn)
        };
        let opts = self.quad_options(R::one());
        let r = integrate_with_breaks(&mut integrand, &self.breakpoints(nu_c, w), &opts)?;
        Ok(r.value)
    }

    /// Reference `F(τ)` from the thermal integral of the antiderivative kernel.
    pub fn big_f_quadrature(&self, tau: R) -> Result<C<R>> {
        match &self.spec.family {
            BathFamily::Ohmic { .. } => {}
            BathFamily::Centered { .. } => return Ok(self.big_f_panels(tau)),
            BathFamily::Discrete { .. } => return Ok(self.big_f_closed(tau)),
        }
        let (eta, w, nu_c, beta) = self.thermal_parts();
        let mut integrand = |nu: R| {
            if nu <= R::zero() {
                return C::new(R::zero(), R::zero());
            }
            let j = eta * nu.powf(w) * (-nu / nu_c).exp();
            let n = occupation_or_zero(nu, beta);
            let x = nu * tau;
            // (1+N)(1−e^{−ix})/(iν) + N(e^{ix}−1)/(iν) = [(1+2N) sin x + i (cos x − 1)]/ν
            let one_minus_cos = R::lit(2.0) * (x * R::lit(0.5)).sin().powi(2);
            cplx(j * (R::one() + R::lit(2.0) * n) * x.sin() / nu, -j * one_minus_cos / nu)
        };
        let opts = self.quad_options(tau.abs());
        let r = integrate_with_breaks(&mut integrand, &self.breakpoints(nu_c, w), &opts)?;
        Ok(r.value)
    }

    /// Tabulates `f` and `F` on `m·h`, `h = Δ/2`, `m = 0..=2 n_max`.
    pub fn kernel_table(&self, delta: R, n_max: usize) -> Result<CorrelationKernel<R>> {
        if !(delta > R::zero()) || n_max == 0 {
            return Err(Error::InvalidArgument("kernel table needs Δ > 0 and n_max ≥ 1".into()));
        }
        let h = delta * R::lit(0.5);
        let count = 2 * n_max + 1;
        let mut values = Vec::with_capacity(count);
        let mut cumulative = Vec::with_capacity(count);
        for m in 0..count {
            let s = h * R::count(m);
            values.push(self.f(s)?);
            cumulative.push(self.big_f(s)?);
        }
        Ok(CorrelationKernel { step: h, values, cumulative })
    }
}

fn one_c<R: Real>() -> C<R> {
    real(R::one())
}

fn occupation_or_zero<R: Real>(nu: R, beta: R) -> R {
    if beta.is_finite() {
        R::one() / (beta * nu).exp_m1()
    } else {
        R::zero()
    }
}

/// `f(s)` for a bath.
pub fn correlation<R: Real>(s: R, spec: &BathSpec<R>) -> Result<C<R>> {
    Correlation::new(spec)?.f(s)
}

/// `f` and `F` tabulated on the half-step grid `m·Δ/2`.
#[derive(Clone, Debug)]
pub struct CorrelationKernel<R: Real> {
    /// Grid spacing `Δ/2`.
    pub step: R,
    pub values: Vec<C<R>>,
    pub cumulative: Vec<C<R>>,
}

impl<R: Real> CorrelationKernel<R> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `f(−mh) = f(mh)*`.
    pub fn value_at(&self, m: isize) -> Option<C<R>> {
        let v = *self.values.get(m.unsigned_abs())?;
        Some(if m < 0 { v.conj() } else { v })
    }

    /// Columns `m, Re f, Im f, Re F, Im F`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,re_f,im_f,re_F,im_F\n");
        for (m, (f, big)) in self.values.iter().zip(&self.cumulative).enumerate() {
            let _ = writeln!(
                out,
                "{m},{:.16e},{:.16e},{:.16e},{:.16e}",
                f.re.as_f64(),
                f.im.as_f64(),
                big.re.as_f64(),
                big.im.as_f64()
            );
        }
        out
    }
}

/// Free functions mirroring [`Correlation::kernel_table`].
pub fn kernel_table<R: Real>(spec: &BathSpec<R>, delta: R, n_max: usize) -> Result<CorrelationKernel<R>> {
    Correlation::new(spec)?.kernel_table(delta, n_max)
}

/// Physical parameters with an explicit time unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimensionalParams {
    /// Transition frequency `ω` (toric) or `γ` (five-qubit).
    pub omega: f64,
    pub nu_c: f64,
    /// Inverse temperature in time units; `f64::INFINITY` for the vacuum.
    pub beta: f64,
    pub eta: f64,
    pub w: f64,
    pub tau_g: f64,
}

/// The same parameters measured in units of the cycle time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimensionlessParams {
    pub epsilon: f64,
    pub x_c: f64,
    pub beta: f64,
    pub eta: f64,
    pub w: f64,
    pub r: f64,
}

/// `ε = ωT`, `x_c = ν_c T`, `β̃ = β/T`, `η̃ = η T^{1−w}`, `R = τ_g/T`.
pub fn to_dimensionless(p: &DimensionalParams, period: f64) -> Result<DimensionlessParams> {
    check_period(period)?;
    Ok(DimensionlessParams {
        epsilon: p.omega * period,
        x_c: p.nu_c * period,
        beta: p.beta / period,
        eta: p.eta * period.powf(1.0 - p.w),
        w: p.w,
        r: p.tau_g / period,
    })
}

pub fn to_dimensional(p: &DimensionlessParams, period: f64) -> Result<DimensionalParams> {
    check_period(period)?;
    Ok(DimensionalParams {
        omega: p.epsilon / period,
        nu_c: p.x_c / period,
        beta: p.beta * period,
        eta: p.eta / period.powf(1.0 - p.w),
        w: p.w,
        tau_g: p.r * period,
    })
}

fn check_period(period: f64) -> Result<()> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("cycle time T must be positive, got {period}")));
    }
    Ok(())
}
