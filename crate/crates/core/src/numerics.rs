//! Dense complex linear algebra used by every other module.
//!
//! Matrices are `nalgebra` dynamic matrices of `Complex64`. The functions here
//! make the rank decisions the rest of the crate relies on, so all of them take
//! an explicit tolerance or use the named defaults in [`tol`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{CqtError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type Ket = DVector<C64>;

/// Default tolerances.
pub mod tol {
    /// Relative singular-value cutoff for rank decisions.
    pub const RANK: f64 = 1e-9;
    pub const GRAM: f64 = 1e-10;
    pub const HERM: f64 = 1e-9;
    pub const PROJ: f64 = 1e-9;
    pub const COMM: f64 = 1e-9;
    pub const NORM: f64 = 1e-9;
    pub const PSD: f64 = 1e-9;
    pub const TRACE: f64 = 1e-9;
    pub const PROB: f64 = 1e-10;
    /// Absolute bound on off-diagonal decoherence functional entries.
    pub const DEC: f64 = 1e-9;
    pub const ZERO: f64 = 1e-12;
    /// Eigenvalues closer than this are treated as one spectral cluster.
    pub const EIG_CLUSTER: f64 = 1e-9;
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

/// Max-abs entry norm, `||M||_max`.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `||A - B||_max`; panics on shape mismatch (callers check dimensions first).
pub fn distance(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "distance: shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    distance(m, &m.adjoint())
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn require_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(CqtError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn require_hermitian(m: &CMatrix, tol: f64) -> Result<usize> {
    let dim = require_square(m)?;
    if !all_finite(m) {
        return Err(CqtError::NonFinite("matrix"));
    }
    let residual = hermiticity_residual(m);
    if residual > tol {
        return Err(CqtError::NotHermitian { residual });
    }
    Ok(dim)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `|v><v|`
pub fn outer(v: &Ket) -> CMatrix {
    v * v.adjoint()
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Build a ket from real amplitudes.
pub fn ket(amplitudes: &[f64]) -> Ket {
    Ket::from_iterator(amplitudes.len(), amplitudes.iter().map(|&x| c(x, 0.0)))
}

/// Standard basis vector `e_index` in dimension `dim`.
pub fn basis_ket(dim: usize, index: usize) -> Ket {
    let mut v = Ket::zeros(dim);
    v[index] = c(1.0, 0.0);
    v
}

/// Rotate `v` so that its first component of non-negligible magnitude is
/// positive real.
pub fn fix_global_phase(v: &mut Ket) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().copied().find(|z| z.norm() > 1e-8 * scale) {
        let phase = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Orthonormal basis of the span of `vectors`.
///
/// The rank is decided against `tol * sigma_max` where `sigma_max` is the
/// largest singular value of the input. Vectors are processed in input order by
/// modified Gram-Schmidt (two passes) and each output vector has its leading
/// component made positive real.
pub fn orthonormal_basis(vectors: &[Ket], tol: f64) -> Result<Vec<Ket>> {
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(CqtError::DimensionMismatch { expected: dim, found: bad.len() });
    }
    if vectors.iter().any(|v| v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(CqtError::NonFinite("vector"));
    }
    let columns = CMatrix::from_columns(vectors);
    let sigma_max = columns
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(Vec::new());
    }
    let threshold = tol * sigma_max;
    let mut basis: Vec<Ket> = Vec::new();
    for v in vectors {
        if basis.len() == dim {
            break;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let overlap = q.dotc(&w);
                w.axpy(-overlap, q, c(1.0, 0.0));
            }
        }
        let norm = w.norm();
        if norm > threshold {
            w.unscale_mut(norm);
            fix_global_phase(&mut w);
            basis.push(w);
        }
    }
    Ok(basis)
}

/// Gram matrix `G_ij = <v_i|v_j>`.
pub fn gram(vectors: &[Ket]) -> CMatrix {
    let n = vectors.len();
    CMatrix::from_fn(n, n, |i, j| vectors[i].dotc(&vectors[j]))
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: Vec<Ket>,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `sum_i f(lambda_i) |v_i><v_i|`
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let dim = self.dim();
        let mut out = zeros(dim);
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            out += outer(v) * f(*lambda);
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|l| c(l, 0.0))
    }

    /// Group eigenvalues that lie within `tol` of their neighbour and return
    /// `(mean eigenvalue, spectral projector)` for each cluster.
    pub fn spectral_clusters(&self, tol: f64) -> Vec<(f64, CMatrix)> {
        let mut clusters: Vec<(Vec<f64>, CMatrix)> = Vec::new();
        let mut prev: Option<f64> = None;
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            let join = matches!(prev, Some(p) if (p - lambda).abs() <= tol);
            if join {
                let last = clusters.last_mut().expect("cluster exists");
                last.0.push(*lambda);
                last.1 += outer(v);
            } else {
                clusters.push((vec![*lambda], outer(v)));
            }
            prev = Some(*lambda);
        }
        clusters
            .into_iter()
            .map(|(ls, p)| (ls.iter().sum::<f64>() / ls.len() as f64, p))
            .collect()
    }
}

pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEig> {
    hermitian_eig_with_tol(m, tol::HERM)
}

pub fn hermitian_eig_with_tol(m: &CMatrix, herm_tol: f64) -> Result<HermitianEig> {
    require_hermitian(m, herm_tol)?;
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Ket = eig.eigenvectors.column(i).into_owned();
            fix_global_phase(&mut v);
            v
        })
        .collect();
    Ok(HermitianEig { values, vectors })
}

/// A Hermitian generator of time evolution. The spectral decomposition is
/// computed once at construction.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    matrix: CMatrix,
    eig: HermitianEig,
}

impl Hamiltonian {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let eig = hermitian_eig(&matrix)?;
        Ok(Self { matrix, eig })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(zeros(dim)).expect("zero matrix is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_zero(&self) -> bool {
        max_abs(&self.matrix) == 0.0
    }

    /// `U(t, t0) = exp[-i H (t - t0)]`
    pub fn propagator(&self, t: f64, t0: f64) -> Result<CMatrix> {
        if !t.is_finite() || !t0.is_finite() {
            return Err(CqtError::NonFinite("time"));
        }
        let dt = t - t0;
        if dt == 0.0 || self.is_zero() {
            return Ok(identity(self.dim()));
        }
        Ok(self.eig.apply_fn(|lambda| C64::from_polar(1.0, -lambda * dt)))
    }
}

/// `U(t, t0) = exp[-i H (t - t0)]` for a raw matrix; errors if `h` is not
/// Hermitian.
pub fn propagator(h: &CMatrix, t: f64, t0: f64) -> Result<CMatrix> {
    Hamiltonian::new(h.clone())?.propagator(t, t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn basis_of_standard_vectors_is_unchanged() {
        let b = orthonormal_basis(&[ket(&[1.0, 0.0]), ket(&[0.0, 1.0])], tol::RANK).unwrap();
        assert_eq!(b.len(), 2);
        assert!(distance(&CMatrix::from_columns(&b), &identity(2)) < 1e-15);
    }

    #[test]
    fn duplicate_vectors_collapse() {
        let b = orthonormal_basis(&[ket(&[1.0, 0.0]), ket(&[1.0, 0.0])], tol::RANK).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].clone() - ket(&[1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn diagonal_plus_axis_spans_plane() {
        let input = [ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), ket(&[1.0, 0.0])];
        // Gram determinant of the raw input: nonzero means rank 2.
        let g = gram(&input);
        let det = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
        assert!((det - 0.5).abs() < 1e-15);
        let b = orthonormal_basis(&input, tol::RANK).unwrap();
        assert_eq!(b.len(), 2);
        assert!(distance(&gram(&b), &identity(2)) < tol::GRAM);
    }

    #[test]
    fn empty_input_and_mismatch() {
        assert!(orthonormal_basis(&[], tol::RANK).unwrap().is_empty());
        let err = orthonormal_basis(&[ket(&[1.0]), ket(&[1.0, 0.0])], tol::RANK).unwrap_err();
        assert!(matches!(err, CqtError::DimensionMismatch { .. }));
        assert!(orthonormal_basis(&[Ket::zeros(3)], tol::RANK).unwrap().is_empty());
    }

    #[test]
    fn leading_component_is_positive_real() {
        let v = Ket::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0)]);
        let b = orthonormal_basis(&[v], tol::RANK).unwrap();
        assert!(b[0][0].im.abs() < 1e-15 && b[0][0].re > 0.0);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let h = Hamiltonian::zero(3);
        assert_eq!(h.propagator(7.5, -2.0).unwrap(), identity(3));
    }

    #[test]
    fn diagonal_generator_half_period() {
        let omega = 2.5;
        let h = CMatrix::from_diagonal(&Ket::from_vec(vec![c(0.0, 0.0), c(omega, 0.0)]));
        let u = propagator(&h, PI / omega, 0.0).unwrap();
        let expected = CMatrix::from_diagonal(&Ket::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        assert!(distance(&u, &expected) < 1e-14);
    }

    #[test]
    fn non_hermitian_generator_rejected() {
        let mut h = zeros(2);
        h[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(propagator(&h, 1.0, 0.0), Err(CqtError::NotHermitian { .. })));
        assert!(matches!(Hamiltonian::new(zeros(2)).unwrap().propagator(f64::NAN, 0.0), Err(CqtError::NonFinite(_))));
    }

    #[test]
    fn eig_of_identity_and_diagonal() {
        let e = hermitian_eig(&identity(4)).unwrap();
        assert!(e.values.iter().all(|l| (l - 1.0).abs() < 1e-15));
        let d = CMatrix::from_diagonal(&ket(&[1.0, 3.0, 1.0]));
        let e = hermitian_eig(&d).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14 && (e.values[2] - 1.0).abs() < 1e-14);
        let clusters = e.spectral_clusters(tol::EIG_CLUSTER);
        assert_eq!(clusters.len(), 2);
        assert!((trace(&clusters[1].1).re - 2.0).abs() < 1e-14);
        assert!(distance(&e.reconstruct(), &d) < 1e-14);
    }
}
