//! Adaptive Gauss–Kronrod and fixed Gauss–Legendre rules for complex-valued
//! integrands of one real variable.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::scalar::{cabs, real, Real, C};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<R: Real> {
    pub value: C<R>,
    pub error: R,
    pub evaluations: usize,
}

struct Panel<R: Real> {
    a: R,
    b: R,
    value: C<R>,
    error: R,
}

fn gk15<R: Real, F: FnMut(R) -> C<R>>(f: &mut F, a: R, b: R) -> Panel<R> {
    let half = (b - a) * R::lit(0.5);
    let mid = (a + b) * R::lit(0.5);
    let fc = f(mid);
    let mut kron = fc * real(R::lit(WGK[7]));
    let mut gauss = fc * real(R::lit(WG[3]));
    for j in 0..7 {
        let dx = half * R::lit(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        kron += s * real(R::lit(WGK[j]));
        if j % 2 == 1 {
            gauss += s * real(R::lit(WG[j / 2]));
        }
    }
    let value = kron * real(half);
    let error = cabs((kron - gauss) * real(half));
    Panel { a, b, value, error }
}

/// Globally adaptive GK15 over `[a, b]`, splitting the worst panel until the
/// summed error estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<R: Real, F: FnMut(R) -> C<R>>(mut f: F, a: R, b: R, opts: &QuadOptions) -> Result<QuadResult<R>> {
    integrate_with_breaks(&mut f, &[a, b], opts)
}

/// As [`integrate`] with the initial partition given by `points` (sorted,
/// at least two entries); integrand discontinuities belong there.
pub fn integrate_with_breaks<R: Real, F: FnMut(R) -> C<R>>(
    f: &mut F,
    points: &[R],
    opts: &QuadOptions,
) -> Result<QuadResult<R>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("integration needs two endpoints".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("non-finite integration limit".into()));
    }
    let mut panels: Vec<Panel<R>> = points.windows(2).filter(|w| w[1] != w[0]).map(|w| gk15(f, w[0], w[1])).collect();
    let mut evaluations = 15 * panels.len();
    let abs_tol = R::lit(opts.abs_tol);
    let rel_tol = R::lit(opts.rel_tol);
    loop {
        let total = panels.iter().fold(C::new(R::zero(), R::zero()), |s, p| s + p.value);
        let err = panels.iter().fold(R::zero(), |s, p| s + p.error);
        if err <= abs_tol.max(rel_tol * cabs(total)) || panels.is_empty() {
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "{} panels, error estimate {:e} on |I| = {:e}",
                panels.len(),
                err.as_f64(),
                cabs(total).as_f64()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).expect("finite error"))
            .map(|(i, _)| i)
            .unwrap();
        let p = panels.swap_remove(worst);
        let m = (p.a + p.b) * R::lit(0.5);
        if m <= p.a || m >= p.b {
            return Err(Error::Quadrature(format!("panel at {:e} cannot be bisected further", p.a.as_f64())));
        }
        panels.push(gk15(f, p.a, m));
        panels.push(gk15(f, m, p.b));
        evaluations += 30;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed Gauss–Legendre rule mapped to arbitrary intervals.
#[derive(Clone, Debug)]
pub struct GaussLegendre<R: Real> {
    nodes: Vec<R>,
    weights: Vec<R>,
}

impl<R: Real> GaussLegendre<R> {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self { nodes: x.into_iter().map(R::lit).collect(), weights: w.into_iter().map(R::lit).collect() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights on `[a, b]`.
    pub fn mapped(&self, a: R, b: R) -> impl Iterator<Item = (R, R)> + '_ {
        let half = (b - a) * R::lit(0.5);
        let mid = (a + b) * R::lit(0.5);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, w * half))
    }

    pub fn integrate<F: FnMut(R) -> C<R>>(&self, mut f: F, a: R, b: R) -> C<R> {
        self.mapped(a, b).fold(C::new(R::zero(), R::zero()), |s, (x, w)| s + f(x) * real(w))
    }

    /// Composite rule with `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(R) -> C<R>>(&self, mut f: F, a: R, b: R, panels: usize) -> C<R> {
        let h = (b - a) / R::count(panels);
        (0..panels).fold(C::new(R::zero(), R::zero()), |s, p| {
            let lo = a + h * R::count(p);
            s + self.integrate(&mut f, lo, lo + h)
        })
    }
}
