//! Dense complex operators on multi-qubit (and qubit ⊗ mode) Hilbert spaces.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::linalg::{SymmetricEigen, SVD};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cis, real, CMatrix, CVector, Real, C};

/// Single-qubit Pauli axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix<R: Real>(self) -> CMatrix<R> {
        let o = C::<R>::new(R::zero(), R::zero());
        let l = C::<R>::new(R::one(), R::zero());
        let i = C::<R>::new(R::zero(), R::one());
        match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// A square complex matrix with optional label.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<R: Real> {
    matrix: CMatrix<R>,
    label: Option<String>,
}

impl<R: Real> Operator<R> {
    /// Wraps a matrix, rejecting non-square or non-finite input.
    pub fn new(matrix: CMatrix<R>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(Self { matrix, label: None })
    }

    pub(crate) fn from_matrix(matrix: CMatrix<R>) -> Self {
        debug_assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix, label: None }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix(CMatrix::zeros(dim, dim))
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure_state(psi: &CVector<R>) -> Result<Self> {
        let n = psi.norm();
        if n <= R::zero() {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let v = psi.unscale(n);
        Ok(Self::from_matrix(&v * v.adjoint()))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<R> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self::from_matrix(self.matrix.adjoint())
    }

    pub fn trace(&self) -> C<R> {
        self.matrix.trace()
    }

    /// `‖X − X†‖_F`.
    pub fn hermiticity_deviation(&self) -> R {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    /// Hermitian within `tol · max(1, ‖X‖_F)`.
    pub fn is_hermitian(&self, tol: R) -> bool {
        self.hermiticity_deviation() <= tol * R::one().max(self.matrix.norm())
    }

    pub fn frobenius_norm(&self) -> R {
        self.matrix.norm()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> R {
        largest_singular_value(&self.matrix)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_matrix(self.matrix.kronecker(&other.matrix))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self::from_matrix(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// `U† X U`.
    pub fn conjugated_by(&self, u: &Self) -> Self {
        Self::from_matrix(u.matrix.adjoint() * &self.matrix * &u.matrix)
    }

    pub fn scale(&self, z: C<R>) -> Self {
        Self::from_matrix(self.matrix.map(|x| x * z))
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> R {
        self.matrix.iter().zip(other.matrix.iter()).fold(R::zero(), |m, (a, b)| m.max(cabs(*a - *b)))
    }

    /// Minimum eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> R {
        let h = hermitian_part(&self.matrix);
        SymmetricEigen::new(h).eigenvalues.iter().fold(R::max_value().unwrap(), |m, &x| m.min(x))
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("{} vs {}", self.dim(), other.dim())));
        }
        Ok(())
    }
}

impl<'a, R: Real> Add<&'a Operator<R>> for &'a Operator<R> {
    type Output = Operator<R>;
    fn add(self, rhs: &'a Operator<R>) -> Operator<R> {
        Operator::from_matrix(&self.matrix + &rhs.matrix)
    }
}

impl<'a, R: Real> Sub<&'a Operator<R>> for &'a Operator<R> {
    type Output = Operator<R>;
    fn sub(self, rhs: &'a Operator<R>) -> Operator<R> {
        Operator::from_matrix(&self.matrix - &rhs.matrix)
    }
}

impl<'a, R: Real> Mul<&'a Operator<R>> for &'a Operator<R> {
    type Output = Operator<R>;
    fn mul(self, rhs: &'a Operator<R>) -> Operator<R> {
        Operator::from_matrix(&self.matrix * &rhs.matrix)
    }
}

impl<R: Real> Neg for &Operator<R> {
    type Output = Operator<R>;
    fn neg(self) -> Operator<R> {
        Operator::from_matrix(-&self.matrix)
    }
}

pub(crate) fn hermitian_part<R: Real>(m: &CMatrix<R>) -> CMatrix<R> {
    (m + m.adjoint()).map(|z| z * real(R::lit(0.5)))
}

pub(crate) fn largest_singular_value<R: Real>(m: &CMatrix<R>) -> R {
    if m.iter().all(|z| z.re == R::zero() && z.im == R::zero()) {
        return R::zero();
    }
    SVD::new(m.clone(), false, false).singular_values.iter().fold(R::zero(), |a, &b| a.max(b))
}

/// Tensor product of the named Paulis (1-based sites, qubit 1 most significant)
/// with identity elsewhere.
pub fn pauli_string<R: Real>(factors: &[(usize, Pauli)], n_qubits: usize) -> Result<Operator<R>> {
    let mut axes = vec![Pauli::I; n_qubits];
    let mut seen = vec![false; n_qubits];
    for &(site, axis) in factors {
        if site == 0 || site > n_qubits {
            return Err(Error::InvalidArgument(format!("site {site} out of range 1..={n_qubits}")));
        }
        if seen[site - 1] {
            return Err(Error::InvalidArgument(format!("duplicate site {site}")));
        }
        seen[site - 1] = true;
        axes[site - 1] = axis;
    }
    let mut m = CMatrix::<R>::identity(1, 1);
    for axis in &axes {
        m = m.kronecker(&axis.matrix::<R>());
    }
    let label: String = factors.iter().map(|(s, a)| format!("{a}{s}")).collect();
    let op = Operator::from_matrix(m);
    Ok(if label.is_empty() { op } else { op.with_label(label) })
}

fn hermiticity_guard<R: Real>(g: &Operator<R>) -> Result<()> {
    let tol = R::lit(1e-10).max(R::eps() * R::lit(100.0));
    if !g.is_hermitian(tol) {
        return Err(Error::NotHermitian(g.hermiticity_deviation().as_f64()));
    }
    Ok(())
}

/// `exp(iθG)` for Hermitian `G`, via the eigendecomposition of `G`.
pub fn unitary_exp<R: Real>(g: &Operator<R>, theta: R) -> Result<Operator<R>> {
    hermiticity_guard(g)?;
    let eig = SymmetricEigen::new(hermitian_part(&g.matrix));
    let v = &eig.eigenvectors;
    let phases = CVector::<R>::from_iterator(g.dim(), eig.eigenvalues.iter().map(|&l| cis(theta * l)));
    let mut vd = v.clone();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(Operator::from_matrix(vd * v.adjoint()))
}

/// Eigen-decomposition of a Hermitian operator with degenerate levels grouped.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<R: Real> {
    /// Distinct eigenvalues, ascending.
    pub eigenvalues: Vec<R>,
    pub projectors: Vec<Operator<R>>,
    /// Orthonormal eigenvectors as columns, ordered so that each level's
    /// vectors are contiguous.
    basis: CMatrix<R>,
    /// Level index of each basis column.
    level_of: Vec<usize>,
}

impl<R: Real> SpectralDecomposition<R> {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMatrix<R> {
        &self.basis
    }

    /// Level index of each eigenbasis vector.
    pub fn level_of(&self) -> &[usize] {
        &self.level_of
    }

    /// Eigenvalue attached to each eigenbasis vector.
    pub fn energies(&self) -> Vec<R> {
        self.level_of.iter().map(|&l| self.eigenvalues[l]).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.eigenvalues.len()];
        for &l in &self.level_of {
            r[l] += 1;
        }
        r
    }

    /// `Σ ε P_ε`.
    pub fn reconstruct(&self) -> Operator<R> {
        let mut m = CMatrix::<R>::zeros(self.dim(), self.dim());
        for (e, p) in self.eigenvalues.iter().zip(&self.projectors) {
            m += p.matrix().map(|z| z * real(*e));
        }
        Operator::from_matrix(m)
    }

    /// `W† X W`: matrix elements of `x` in the eigenbasis.
    pub fn to_eigenbasis(&self, x: &CMatrix<R>) -> CMatrix<R> {
        self.basis.adjoint() * x * &self.basis
    }

    /// Inverse of [`Self::to_eigenbasis`].
    pub fn from_eigenbasis(&self, x: &CMatrix<R>) -> CMatrix<R> {
        &self.basis * x * self.basis.adjoint()
    }
}

/// Hermitian eigendecomposition with eigenvalues clustered at relative gap
/// `1e-8·‖H‖` (or a few hundred ulps for single precision).
pub fn hermitian_eig<R: Real>(h: &Operator<R>) -> Result<SpectralDecomposition<R>> {
    hermiticity_guard(h)?;
    let eig = SymmetricEigen::new(hermitian_part(&h.matrix));
    let dim = h.dim();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
    let scale = eig.eigenvalues.iter().fold(R::zero(), |m, &x| m.max(x.abs())).max(R::min_value().unwrap());
    let tol = R::lit(1e-8).max(R::eps() * R::lit(300.0)) * scale;

    let mut basis = CMatrix::<R>::zeros(dim, dim);
    let mut level_of = Vec::with_capacity(dim);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<R> = None;
    for (col, &idx) in order.iter().enumerate() {
        let val = eig.eigenvalues[idx];
        match last {
            Some(prev) if val - prev <= tol => groups.last_mut().unwrap().push(idx),
            _ => groups.push(vec![idx]),
        }
        last = Some(val);
        basis.set_column(col, &eig.eigenvectors.column(idx));
        level_of.push(groups.len() - 1);
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut projectors = Vec::with_capacity(groups.len());
    for g in &groups {
        let mean = g.iter().fold(R::zero(), |s, &i| s + eig.eigenvalues[i]) / R::count(g.len());
        eigenvalues.push(mean);
        let mut p = CMatrix::<R>::zeros(dim, dim);
        for &i in g {
            let v = eig.eigenvectors.column(i);
            p += v * v.adjoint();
        }
        projectors.push(Operator::from_matrix(p));
    }
    Ok(SpectralDecomposition { eigenvalues, projectors, basis, level_of })
}

/// `½‖ρ − σ‖₁` from the singular values of the difference.
pub fn trace_distance<R: Real>(rho: &Operator<R>, sigma: &Operator<R>) -> Result<R> {
    rho.check_same_dim(sigma)?;
    let diff = &rho.matrix - &sigma.matrix;
    if diff.iter().all(|z| z.re == R::zero() && z.im == R::zero()) {
        return Ok(R::zero());
    }
    let s = SVD::new(diff, false, false).singular_values;
    Ok(s.iter().fold(R::zero(), |a, &b| a + b) * R::lit(0.5))
}

/// Partial trace over every subsystem not listed in `keep` (0-based indices
/// into `dims`).
pub fn partial_trace<R: Real>(rho: &Operator<R>, dims: &[usize], keep: &[usize]) -> Result<Operator<R>> {
    let total: usize = dims.iter().product();
    if total != rho.dim() || dims.is_empty() {
        return Err(Error::Dimension(format!("subsystem dims {dims:?} do not multiply to {}", rho.dim())));
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() || kept[k] {
            return Err(Error::InvalidArgument(format!("bad keep index {k}")));
        }
        kept[k] = true;
    }
    let n = dims.len();
    // Row-major strides, subsystem 0 most significant.
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let kept_dims: Vec<usize> = (0..n).filter(|&i| kept[i]).map(|i| dims[i]).collect();
    let red_dim: usize = kept_dims.iter().product();
    let traced: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
    let traced_dim: usize = traced.iter().map(|&i| dims[i]).product();

    let digits = |mut idx: usize| -> Vec<usize> {
        let mut d = vec![0; n];
        for i in 0..n {
            d[i] = idx / strides[i];
            idx %= strides[i];
        }
        d
    };
    // Map from (kept index, traced index) to full index.
    let mut full_index = vec![0usize; red_dim * traced_dim];
    for full in 0..total {
        let d = digits(full);
        let mut r = 0;
        let mut t = 0;
        for i in 0..n {
            if kept[i] {
                r = r * dims[i] + d[i];
            } else {
                t = t * dims[i] + d[i];
            }
        }
        full_index[r * traced_dim + t] = full;
    }
    let mut out = CMatrix::<R>::zeros(red_dim, red_dim);
    for a in 0..red_dim {
        for b in 0..red_dim {
            let mut acc = Complex::new(R::zero(), R::zero());
            for t in 0..traced_dim {
                acc += rho.matrix[(full_index[a * traced_dim + t], full_index[b * traced_dim + t])];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(Operator::from_matrix(out))
}

/// Linear map on `d×d` operators, stored as a `d²×d²` matrix acting on
/// column-stacked `vec(X)` (entry `X[i,j]` at index `i + j·d`).
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator<R: Real> {
    dim: usize,
    matrix: CMatrix<R>,
}

impl<R: Real> SuperOperator<R> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::zeros(dim * dim, dim * dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn from_matrix(dim: usize, matrix: CMatrix<R>) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::Dimension(format!("superoperator on dim {dim} needs {0}x{0}", dim * dim)));
        }
        Ok(Self { dim, matrix })
    }

    /// Builds the matrix by applying `map` to each matrix unit `|i⟩⟨j|`.
    pub fn from_map(dim: usize, map: impl Fn(&CMatrix<R>) -> CMatrix<R>) -> Self {
        let mut matrix = CMatrix::zeros(dim * dim, dim * dim);
        for j in 0..dim {
            for i in 0..dim {
                let mut e = CMatrix::zeros(dim, dim);
                e[(i, j)] = real(R::one());
                let img = map(&e);
                matrix.set_column(i + j * dim, &vectorize(&img));
            }
        }
        Self { dim, matrix }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMatrix<R>, b: &CMatrix<R>) -> Self {
        Self { dim: a.nrows(), matrix: b.transpose().kronecker(a) }
    }

    /// `X ↦ L X`.
    pub fn left(l: &CMatrix<R>) -> Self {
        let d = l.nrows();
        Self { dim: d, matrix: CMatrix::identity(d, d).kronecker(l) }
    }

    /// `X ↦ X M`.
    pub fn right(m: &CMatrix<R>) -> Self {
        let d = m.nrows();
        Self { dim: d, matrix: m.transpose().kronecker(&CMatrix::identity(d, d)) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn apply(&self, x: &CMatrix<R>) -> CMatrix<R> {
        unvectorize(&(&self.matrix * vectorize(x)), self.dim)
    }

    /// The map `X ↦ (S(X†))†`.
    pub fn hermitian_conjugate_map(&self) -> Self {
        let d = self.dim;
        Self::from_map(d, |x| self.apply(&x.adjoint()).adjoint())
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.matrix += &other.matrix;
    }

    pub fn scaled(&self, z: C<R>) -> Self {
        Self { dim: self.dim, matrix: self.matrix.map(|x| x * z) }
    }

    /// Matrix representation in the orthonormal basis `{P/√d}` of Pauli
    /// strings (requires `d = 2^n`), ordered lexicographically `I < X < Y < Z`
    /// with qubit 1 most significant.
    pub fn to_pauli_basis(&self) -> Result<CMatrix<R>> {
        let q = pauli_basis_matrix::<R>(self.dim)?;
        Ok(q.adjoint() * &self.matrix * q)
    }
}

impl<'a, R: Real> Sub<&'a SuperOperator<R>> for &'a SuperOperator<R> {
    type Output = SuperOperator<R>;
    fn sub(self, rhs: &'a SuperOperator<R>) -> SuperOperator<R> {
        SuperOperator { dim: self.dim, matrix: &self.matrix - &rhs.matrix }
    }
}

impl<'a, R: Real> Add<&'a SuperOperator<R>> for &'a SuperOperator<R> {
    type Output = SuperOperator<R>;
    fn add(self, rhs: &'a SuperOperator<R>) -> SuperOperator<R> {
        SuperOperator { dim: self.dim, matrix: &self.matrix + &rhs.matrix }
    }
}

pub(crate) fn vectorize<R: Real>(x: &CMatrix<R>) -> CVector<R> {
    CVector::from_column_slice(x.as_slice())
}

pub(crate) fn unvectorize<R: Real>(v: &CVector<R>, dim: usize) -> CMatrix<R> {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Columns are `vec(P)/√d` for every Pauli string `P` on `log2 d` qubits.
fn pauli_basis_matrix<R: Real>(dim: usize) -> Result<CMatrix<R>> {
    if !dim.is_power_of_two() {
        return Err(Error::Dimension(format!("Pauli basis needs d = 2^n, got {dim}")));
    }
    let n = dim.trailing_zeros() as usize;
    let axes = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let norm = real(R::one() / R::count(dim).sqrt());
    let mut q = CMatrix::<R>::zeros(dim * dim, dim * dim);
    for col in 0..dim * dim {
        let mut m = CMatrix::<R>::identity(1, 1);
        let mut code = col;
        let mut digits = vec![0; n];
        for slot in digits.iter_mut().rev() {
            *slot = code % 4;
            code /= 4;
        }
        for &d in &digits {
            m = m.kronecker(&axes[d].matrix::<R>());
        }
        q.set_column(col, &vectorize(&m).map(|z| z * norm));
    }
    Ok(q)
}

/// Spectral norm of the superoperator matrix in the normalized Pauli basis.
///
/// The Pauli basis is orthonormal under the Hilbert–Schmidt inner product,
/// so the value coincides with the spectral norm in the matrix-unit basis;
/// it is computed there to avoid the basis change.
pub fn superop_norm<R: Real>(s: &SuperOperator<R>) -> R {
    largest_singular_value(&s.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    type Op = Operator<f64>;

    fn random_density(dim: usize, rng: &mut impl Rng) -> Op {
        let g = CMatrix::<f64>::from_fn(dim, dim, |_, _| Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let tr = m.trace();
        Op::new(m.map(|z| z / tr)).unwrap()
    }

    #[test]
    fn x1x2_flips_00_to_11() {
        let op = pauli_string::<f64>(&[(1, Pauli::X), (2, Pauli::X)], 2).unwrap();
        let m = op.matrix();
        assert_eq!(m[(3, 0)], Complex::new(1.0, 0.0));
        assert_eq!(m.column(0).iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn empty_pauli_string_is_identity() {
        let op = pauli_string::<f64>(&[], 3).unwrap();
        assert_eq!(op, Op::identity(8));
    }

    #[test]
    fn xzzx_squares_to_identity_with_balanced_spectrum() {
        let op = pauli_string::<f64>(&[(1, Pauli::X), (2, Pauli::Z), (3, Pauli::Z), (4, Pauli::X)], 5).unwrap();
        let sq = &op * &op;
        assert!(sq.max_abs_diff(&Op::identity(32)) < 1e-15);
        let eig = hermitian_eig(&op).unwrap();
        assert_eq!(eig.eigenvalues.len(), 2);
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert_eq!(eig.ranks(), vec![16, 16]);
    }

    #[test]
    fn pauli_string_rejects_bad_sites() {
        assert!(pauli_string::<f64>(&[(1, Pauli::X), (1, Pauli::Z)], 2).is_err());
        assert!(pauli_string::<f64>(&[(3, Pauli::X)], 2).is_err());
        assert!(pauli_string::<f64>(&[(0, Pauli::X)], 2).is_err());
    }

    #[test]
    fn unitary_exp_identities() {
        let x = pauli_string::<f64>(&[(1, Pauli::X)], 1).unwrap();
        let u0 = unitary_exp(&x, 0.0).unwrap();
        assert!(u0.max_abs_diff(&Op::identity(2)) < 1e-15);
        let u = unitary_exp(&x, std::f64::consts::FRAC_PI_2).unwrap();
        let ix = x.scale(Complex::new(0.0, 1.0));
        assert!(u.max_abs_diff(&ix) < 1e-14);
    }

    #[test]
    fn unitary_exp_square_doubles_angle() {
        let g = pauli_string::<f64>(&[(3, Pauli::Y), (4, Pauli::X)], 4).unwrap();
        let quarter = std::f64::consts::FRAC_PI_4;
        let u = unitary_exp(&g, quarter).unwrap();
        let u2 = unitary_exp(&g, 2.0 * quarter).unwrap();
        assert!((&u * &u).max_abs_diff(&u2) < 1e-13);
        let unit = &u.dagger() * &u;
        assert!(unit.max_abs_diff(&Op::identity(16)) < 1e-12);
        // (YX)² = 1 so exp(iπ/2·G) = iG exactly.
        assert!(u2.max_abs_diff(&g.scale(Complex::new(0.0, 1.0))) < 1e-13);
    }

    #[test]
    fn unitary_exp_rejects_non_hermitian() {
        let mut m = CMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = Complex::new(1.0, 0.0);
        let g = Op::new(m).unwrap();
        assert!(matches!(unitary_exp(&g, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn identity_has_single_level() {
        let eig = hermitian_eig(&Op::identity(4)).unwrap();
        assert_eq!(eig.eigenvalues.len(), 1);
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!(eig.projectors[0].max_abs_diff(&Op::identity(4)) < 1e-13);
    }

    #[test]
    fn trace_distance_basics() {
        let mut p0 = CMatrix::<f64>::zeros(2, 2);
        p0[(0, 0)] = Complex::new(1.0, 0.0);
        let mut p1 = CMatrix::<f64>::zeros(2, 2);
        p1[(1, 1)] = Complex::new(1.0, 0.0);
        let a = Op::new(p0).unwrap();
        let b = Op::new(p1).unwrap();
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        assert!(trace_distance(&a, &Op::identity(4)).is_err());
    }

    #[test]
    fn trace_distance_matches_eigenvalue_sum() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..5 {
            let r = random_density(16, &mut rng);
            let s = random_density(16, &mut rng);
            let diff = &r - &s;
            let ev = SymmetricEigen::new(hermitian_part(diff.matrix())).eigenvalues;
            let oracle = 0.5 * ev.iter().map(|x| x.abs()).sum::<f64>();
            assert!((trace_distance(&r, &s).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product_and_bell_states() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let rs = random_density(4, &mut rng);
        let rb = random_density(3, &mut rng);
        let joint = rs.kron(&rb);
        let red = partial_trace(&joint, &[4, 3], &[0]).unwrap();
        assert!(red.max_abs_diff(&rs) < 1e-14);
        let red_b = partial_trace(&joint, &[4, 3], &[1]).unwrap();
        assert!(red_b.max_abs_diff(&rb) < 1e-14);

        let s = 1.0 / 2f64.sqrt();
        let psi = CVector::<f64>::from_vec(vec![
            Complex::new(s, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(s, 0.0),
        ]);
        let bell = Op::pure_state(&psi).unwrap();
        let red = partial_trace(&bell, &[2, 2], &[0]).unwrap();
        assert!(red.max_abs_diff(&Op::identity(2).scale(Complex::new(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_inconsistent_dims() {
        let r = Op::identity(8);
        assert!(partial_trace(&r, &[2, 2], &[0]).is_err());
        assert!(partial_trace(&r, &[2, 4], &[]).is_err());
    }

    #[test]
    fn superop_norm_examples() {
        assert_eq!(superop_norm(&SuperOperator::<f64>::zero(2)), 0.0);
        assert!((superop_norm(&SuperOperator::<f64>::identity(2)) - 1.0).abs() < 1e-14);
        // X ↦ 2X, I,Y,Z ↦ 0, built as an explicit 4×4 matrix in the Pauli basis.
        let x = Pauli::X.matrix::<f64>();
        let s = SuperOperator::from_map(2, |m| {
            // Coefficient of X in the Pauli expansion: Tr(X m)/2.
            let c = (&x * m).trace() * Complex::new(0.5, 0.0);
            x.map(|z| z * c * Complex::new(2.0, 0.0))
        });
        let pb = s.to_pauli_basis().unwrap();
        assert!((pb[(1, 1)] - Complex::new(2.0, 0.0)).norm() < 1e-14);
        assert!((superop_norm(&s) - 2.0).abs() < 1e-13);
        assert!((largest_singular_value(&pb) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn superoperator_constructors_agree_with_maps() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let a = random_density(3, &mut rng).into_matrix();
        let b = random_density(3, &mut rng).into_matrix();
        let x = random_density(3, &mut rng).into_matrix();
        let sw = SuperOperator::sandwich(&a, &b);
        assert!((sw.apply(&x) - &a * &x * &b).norm() < 1e-14);
        assert!((SuperOperator::left(&a).apply(&x) - &a * &x).norm() < 1e-14);
        assert!((SuperOperator::right(&b).apply(&x) - &x * &b).norm() < 1e-14);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn density(seed: u64, dim: usize) -> Operator<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let g = CMatrix::<f64>::from_fn(dim, dim, |_, _| Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let tr = m.trace();
        Operator::new(m.map(|z| z / tr)).unwrap()
    }

    fn random_hermitian(seed: u64, dim: usize) -> Operator<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let g = CMatrix::<f64>::from_fn(dim, dim, |_, _| Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        Operator::new(hermitian_part(&g)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn unitary_exp_is_unitary(seed in any::<u64>(), theta in -3.0f64..3.0, n in 1usize..=5) {
            let dim = 1 << n;
            let g = random_hermitian(seed, dim);
            let u = unitary_exp(&g, theta).unwrap();
            let dev = (&u.dagger() * &u).max_abs_diff(&Operator::identity(dim));
            prop_assert!(dev <= 1e-12);
        }

        #[test]
        fn eig_reconstructs(seed in any::<u64>(), n in 1usize..=5) {
            let h = random_hermitian(seed, 1 << n);
            let eig = hermitian_eig(&h).unwrap();
            let norm = h.spectral_norm();
            prop_assert!((&eig.reconstruct() - &h).spectral_norm() <= 1e-10 * norm);
            for (i, p) in eig.projectors.iter().enumerate() {
                for (j, q) in eig.projectors.iter().enumerate() {
                    let pq = p * q;
                    let expect = if i == j { p.clone() } else { Operator::zeros(h.dim()) };
                    prop_assert!(pq.max_abs_diff(&expect) <= 1e-10);
                }
            }
            let w = eig.eigenvalues.windows(2).all(|w| w[0] < w[1]);
            prop_assert!(w);
        }

        #[test]
        fn trace_distance_metric_properties(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), theta in -2.0f64..2.0) {
            let (r, s, t) = (density(a, 8), density(b, 8), density(c, 8));
            let rs = trace_distance(&r, &s).unwrap();
            prop_assert!((rs - trace_distance(&s, &r).unwrap()).abs() < 1e-12);
            prop_assert!(rs <= trace_distance(&r, &t).unwrap() + trace_distance(&t, &s).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&rs));
            let u = unitary_exp(&random_hermitian(a ^ b, 8), theta).unwrap();
            let ur = r.conjugated_by(&u);
            let us = s.conjugated_by(&u);
            prop_assert!((trace_distance(&ur, &us).unwrap() - rs).abs() < 1e-10);
        }

        #[test]
        fn partial_trace_preserves_trace_and_mixtures(a in any::<u64>(), b in any::<u64>(), p in 0.0f64..1.0) {
            let r = density(a, 12);
            let s = density(b, 12);
            let tr = partial_trace(&r, &[2, 3, 2], &[0, 2]).unwrap();
            prop_assert!((tr.trace() - Complex::new(1.0, 0.0)).norm() < 1e-13);
            prop_assert!(tr.hermiticity_deviation() < 1e-13);
            let mix = &r.scale(Complex::new(p, 0.0)) + &s.scale(Complex::new(1.0 - p, 0.0));
            let lhs = partial_trace(&mix, &[2, 3, 2], &[1]).unwrap();
            let rhs = &partial_trace(&r, &[2, 3, 2], &[1]).unwrap().scale(Complex::new(p, 0.0))
                + &partial_trace(&s, &[2, 3, 2], &[1]).unwrap().scale(Complex::new(1.0 - p, 0.0));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }
    }
}
