use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the engine is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts a count or index into the scalar type.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;

    /// `C ← A·B + β·C` on column-major complex matrices with a packed kernel.
    fn gemm(c: &mut CMatrix<Self>, a: &CMatrix<Self>, b: &CMatrix<Self>, beta: Self);
}

fn check_gemm_dims<R: Real>(c: &CMatrix<R>, a: &CMatrix<R>, b: &CMatrix<R>) {
    assert_eq!(a.ncols(), b.nrows(), "gemm inner dimension");
    assert_eq!(c.nrows(), a.nrows(), "gemm output rows");
    assert_eq!(c.ncols(), b.ncols(), "gemm output cols");
}

macro_rules! packed_gemm {
    ($c:ident, $a:ident, $b:ident, $beta:ident, $kernel:path, $t:ty) => {{
        check_gemm_dims($c, $a, $b);
        let (m, k, n) = ($a.nrows(), $a.ncols(), $b.ncols());
        if m == 0 || n == 0 {
            return;
        }
        let opt = matrixmultiply::CGemmOption::Standard;
        // SAFETY: `Complex<T>` is `repr(C)` with layout `[T; 2]`; the
        // matrices are contiguous column-major with the asserted shapes.
        unsafe {
            $kernel(
                opt,
                opt,
                m,
                k,
                n,
                [1.0, 0.0],
                $a.as_ptr() as *const [$t; 2],
                1,
                m as isize,
                $b.as_ptr() as *const [$t; 2],
                1,
                k as isize,
                [$beta, 0.0],
                $c.as_mut_ptr() as *mut [$t; 2],
                1,
                m as isize,
            );
        }
    }};
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }

    fn gemm(c: &mut CMatrix<Self>, a: &CMatrix<Self>, b: &CMatrix<Self>, beta: Self) {
        packed_gemm!(c, a, b, beta, matrixmultiply::cgemm, f32)
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }

    fn gemm(c: &mut CMatrix<Self>, a: &CMatrix<Self>, b: &CMatrix<Self>, beta: Self) {
        packed_gemm!(c, a, b, beta, matrixmultiply::zgemm, f64)
    }
}

/// `A·B` through [`Real::gemm`].
pub fn matmul<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>) -> CMatrix<R> {
    let mut c = CMatrix::zeros(a.nrows(), b.ncols());
    R::gemm(&mut c, a, b, R::zero());
    c
}

pub type C<R> = Complex<R>;
pub type CMatrix<R> = DMatrix<Complex<R>>;
pub type CVector<R> = DVector<Complex<R>>;

#[inline]
pub fn cplx<R: Real>(re: R, im: R) -> C<R> {
    Complex::new(re, im)
}

#[inline]
pub fn real<R: Real>(re: R) -> C<R> {
    Complex::new(re, R::zero())
}

/// `e^{iθ}`.
#[inline]
pub fn cis<R: Real>(theta: R) -> C<R> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn i_unit<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::one())
}

/// Complex exponential without going through `num_traits::Float`.
#[inline]
pub fn cexp<R: Real>(z: C<R>) -> C<R> {
    cis(z.im) * z.re.exp()
}

#[inline]
pub fn cabs<R: Real>(z: C<R>) -> R {
    z.re.hypot(z.im)
}

/// Principal branch of the complex logarithm.
#[inline]
pub fn cln<R: Real>(z: C<R>) -> C<R> {
    Complex::new(cabs(z).ln(), z.im.atan2(z.re))
}

#[inline]
pub fn cinv<R: Real>(z: C<R>) -> C<R> {
    let d = z.re * z.re + z.im * z.im;
    Complex::new(z.re / d, -z.im / d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_gemm_matches_naive_product() {
        for (m, k, n) in [(3, 5, 2), (16, 16, 16), (7, 1, 9)] {
            let a = CMatrix::<f64>::from_fn(m, k, |i, j| cplx(i as f64 - 0.3 * j as f64, 0.1 * (i * j) as f64));
            let b = CMatrix::<f64>::from_fn(k, n, |i, j| cplx(0.5 * j as f64, i as f64 - j as f64));
            let expect = &a * &b;
            let err = (matmul(&a, &b) - &expect).norm();
            assert!(err < 1e-12 * expect.norm(), "{m}x{k}x{n}: {err:e}");
            let mut c = expect.clone();
            f64::gemm(&mut c, &a, &b, 2.0);
            assert!((c - expect * cplx(3.0, 0.0)).norm() < 1e-11);

            let a32 = a.map(|z| cplx(z.re as f32, z.im as f32));
            let b32 = b.map(|z| cplx(z.re as f32, z.im as f32));
            let e32 = &a32 * &b32;
            assert!((matmul(&a32, &b32) - &e32).norm() < 1e-5 * e32.norm());
        }
    }
}
