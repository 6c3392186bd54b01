//! Digamma and trigamma for complex arguments in the right half-plane.

use crate::scalar::{cinv, cln, real, Real, C};

// Shift argument to Re z ≥ this before using the asymptotic series.
const SHIFT: f64 = 12.0;

fn shift<R: Real>(mut z: C<R>, mut step: impl FnMut(C<R>)) -> C<R> {
    let target = R::lit(SHIFT);
    while z.re < target {
        step(z);
        z += real(R::one());
    }
    z
}

/// ψ(z) for Re z > 0.
pub fn digamma<R: Real>(z: C<R>) -> C<R> {
    debug_assert!(z.re > R::zero());
    let mut acc = C::new(R::zero(), R::zero());
    let z = shift(z, |w| acc -= cinv(w));
    let w = cinv(z);
    let w2 = w * w;
    // −Σ B_{2k}/(2k z^{2k})
    let coeffs = [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];
    let mut series = C::new(R::zero(), R::zero());
    for c in coeffs.iter().rev() {
        series = (series + real(R::lit(*c))) * w2;
    }
    acc + cln(z) - w * real(R::lit(0.5)) - series
}

/// ψ₁(z) for Re z > 0.
pub fn trigamma<R: Real>(z: C<R>) -> C<R> {
    debug_assert!(z.re > R::zero());
    let mut acc = C::new(R::zero(), R::zero());
    let z = shift(z, |w| acc += cinv(w * w));
    let w = cinv(z);
    let w2 = w * w;
    // Σ B_{2k}/z^{2k+1}
    let coeffs = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];
    let mut series = C::new(R::zero(), R::zero());
    for c in coeffs.iter().rev() {
        series = (series + real(R::lit(*c))) * w2;
    }
    acc + w + w2 * real(R::lit(0.5)) + series * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    const EULER: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn real_axis_values() {
        let p1 = digamma(Complex64::new(1.0, 0.0));
        assert!((p1.re + EULER).abs() < 1e-14 && p1.im.abs() < 1e-15);
        let ph = digamma(Complex64::new(0.5, 0.0));
        assert!((ph.re - (-EULER - 2.0 * 2f64.ln())).abs() < 1e-14);
        let t1 = trigamma(Complex64::new(1.0, 0.0));
        assert!((t1.re - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let th = trigamma(Complex64::new(0.5, 0.0));
        assert!((th.re - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-13);
    }

    #[test]
    fn imaginary_part_on_unit_line() {
        // Im ψ(1 + iy) = −1/(2y) + (π/2) coth(πy)
        for y in [0.1, 1.0, 3.7, 50.0] {
            let v = digamma(Complex64::new(1.0, y));
            let pi = std::f64::consts::PI;
            let expect = -1.0 / (2.0 * y) + 0.5 * pi / (pi * y).tanh();
            assert!((v.im - expect).abs() < 1e-13 * (1.0 + expect.abs()), "y={y}");
        }
    }

    #[test]
    fn series_definitions_agree() {
        // ψ₁(z) = Σ_{n≥0} 1/(n+z)²; ψ(z+1) − ψ(z) = 1/z.
        for z in [Complex64::new(0.3, 2.0), Complex64::new(4.0, -7.5), Complex64::new(30.0, 0.1)] {
            let mut s = Complex64::new(0.0, 0.0);
            for n in 0..200_000 {
                s += 1.0 / ((n as f64 + z) * (n as f64 + z));
            }
            // Euler–Maclaurin tail ∫_{N}^{∞} + half end term.
            let tail_z = 200_000.0 + z;
            s += 1.0 / tail_z + 0.5 / (tail_z * tail_z);
            assert!((trigamma(z) - s).norm() < 1e-12, "z={z}");
            let rec = digamma(z + 1.0) - digamma(z) - 1.0 / z;
            assert!(rec.norm() < 1e-14);
        }
    }
}
