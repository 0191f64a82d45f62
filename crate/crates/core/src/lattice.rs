//! Properties as subspaces of the working Hilbert space, with the q-operations
//! (meet, join, orthocomplement) and the relations built on their projectors.

use serde::Serialize;

use crate::error::{CqtError, Result};
use crate::numerics::{
    self, c, distance, hermitian_eig, identity, max_abs, orthonormal_basis, outer, tol, CMatrix, Ket,
};

/// Hermitian idempotent matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: CMatrix,
}

impl Projector {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tol(matrix, tol::PROJ)
    }

    pub fn with_tol(matrix: CMatrix, tol: f64) -> Result<Self> {
        numerics::require_square(&matrix)?;
        if !numerics::all_finite(&matrix) {
            return Err(CqtError::NonFinite("projector"));
        }
        let idempotency = distance(&(&matrix * &matrix), &matrix);
        let hermiticity = numerics::hermiticity_residual(&matrix);
        if idempotency > tol || hermiticity > tol {
            return Err(CqtError::NotProjector { idempotency, hermiticity });
        }
        Ok(Self { matrix })
    }

    /// Wrap a matrix already known to be a projector.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn zero(dim: usize) -> Self {
        Self { matrix: numerics::zeros(dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: identity(dim) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Rank as the rounded trace.
    pub fn rank(&self) -> usize {
        numerics::trace(&self.matrix).re.round().max(0.0) as usize
    }

    pub fn complement(&self) -> Self {
        Self { matrix: identity(self.dim()) - &self.matrix }
    }

    pub fn to_subspace(&self) -> Subspace {
        Subspace::from_projector_unchecked(&self.matrix)
    }
}

/// A closed subspace, stored as an orthonormal basis together with its
/// projector.
#[derive(Debug, Clone)]
pub struct Subspace {
    dim: usize,
    basis: Vec<Ket>,
    projector: CMatrix,
}

impl Subspace {
    /// Span of arbitrary vectors in `C^dim`.
    pub fn span(dim: usize, vectors: &[Ket]) -> Result<Self> {
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(CqtError::DimensionMismatch { expected: dim, found: v.len() });
        }
        let basis = orthonormal_basis(vectors, tol::RANK)?;
        Ok(Self::from_orthonormal(dim, basis))
    }

    fn from_orthonormal(dim: usize, basis: Vec<Ket>) -> Self {
        let mut projector = numerics::zeros(dim);
        for b in &basis {
            projector += outer(b);
        }
        Self { dim, basis, projector }
    }

    pub fn ray(v: &Ket) -> Result<Self> {
        Self::span(v.len(), std::slice::from_ref(v))
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, basis: Vec::new(), projector: numerics::zeros(dim) }
    }

    pub fn full(dim: usize) -> Self {
        let basis = (0..dim).map(|i| numerics::basis_ket(dim, i)).collect();
        Self::from_orthonormal(dim, basis)
    }

    /// Subspace spanned by standard basis vectors `e_i`, `i` in `indices`.
    pub fn coordinate(dim: usize, indices: &[usize]) -> Result<Self> {
        let vs: Vec<Ket> = indices
            .iter()
            .map(|&i| {
                if i >= dim {
                    Err(CqtError::IndexOutOfRange { what: "coordinate", index: i, len: dim })
                } else {
                    Ok(numerics::basis_ket(dim, i))
                }
            })
            .collect::<Result<_>>()?;
        Self::span(dim, &vs)
    }

    /// Range of a projector matrix; validates it first.
    pub fn from_projector(p: &CMatrix) -> Result<Self> {
        let p = Projector::new(p.clone())?;
        Ok(Self::from_projector_unchecked(p.matrix()))
    }

    /// Range of a Hermitian near-projector: eigenvectors with eigenvalue > 1/2.
    pub(crate) fn from_projector_unchecked(p: &CMatrix) -> Self {
        let dim = p.nrows();
        let sym = (p + p.adjoint()) * c(0.5, 0.0);
        let eig = hermitian_eig(&sym).expect("symmetrized matrix is Hermitian");
        let vectors: Vec<Ket> = eig
            .values
            .iter()
            .zip(eig.vectors)
            .filter(|(l, _)| **l > 0.5)
            .map(|(_, v)| v)
            .collect();
        // re-canonicalize so the basis does not depend on eigen-solver phases
        let basis = orthonormal_basis(&vectors, tol::RANK).expect("eigenvectors share dimension");
        Self::from_orthonormal(dim, basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_zero(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.dim
    }

    pub fn basis(&self) -> &[Ket] {
        &self.basis
    }

    pub fn projector(&self) -> &CMatrix {
        &self.projector
    }

    pub fn to_projector(&self) -> Projector {
        Projector::from_trusted(self.projector.clone())
    }

    /// Projector distance `||[A] - [B]||_max`.
    pub fn distance(&self, other: &Subspace) -> f64 {
        distance(&self.projector, &other.projector)
    }

    /// Subspace equality by projector distance.
    pub fn approx_eq(&self, other: &Subspace, tol: f64) -> bool {
        self.dim == other.dim && self.distance(other) <= tol
    }

    pub fn contains(&self, v: &Ket, tol: f64) -> bool {
        (&self.projector * v - v).norm() <= tol * v.norm().max(1.0)
    }

    fn check_dims(&self, other: &Subspace) -> Result<()> {
        if self.dim != other.dim {
            return Err(CqtError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }
}

/// `A ∧_q B`: null space of the stacked complements `[(I - [A]); (I - [B])]`.
pub fn q_meet(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    a.check_dims(b)?;
    let dim = a.dim;
    let id = identity(dim);
    let ca = &id - &a.projector;
    let cb = &id - &b.projector;
    let mut stacked = CMatrix::zeros(2 * dim, dim);
    stacked.view_mut((0, 0), (dim, dim)).copy_from(&ca);
    stacked.view_mut((dim, 0), (dim, dim)).copy_from(&cb);
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested V^dagger");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    // complements have singular values in [0, sqrt 2]; keep the cutoff absolute
    // when both inputs are the full space
    let threshold = tol::RANK * sigma_max.max(1.0);
    let mut null_vectors: Vec<Ket> = Vec::new();
    for (k, sigma) in svd.singular_values.iter().enumerate() {
        if *sigma <= threshold {
            null_vectors.push(v_t.row(k).adjoint());
        }
    }
    // thin SVD of a 2d x d matrix has d singular values, so every direction of
    // C^d is represented above
    Subspace::span(dim, &null_vectors)
}

/// `A ∨_q B`: span of the union of the bases.
pub fn q_join(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    a.check_dims(b)?;
    let vectors: Vec<Ket> = a.basis.iter().chain(&b.basis).cloned().collect();
    Subspace::span(a.dim, &vectors)
}

/// `¬_q A`: range of `I - [A]`.
pub fn q_not(a: &Subspace) -> Subspace {
    if a.is_zero() {
        return Subspace::full(a.dim);
    }
    if a.is_full() {
        return Subspace::zero(a.dim);
    }
    Subspace::from_projector_unchecked(&(identity(a.dim) - &a.projector))
}

pub fn is_compatible(a: &Subspace, b: &Subspace) -> Result<bool> {
    is_compatible_with_tol(a, b, tol::COMM)
}

/// `[A][B] = [B][A]` within `tol` (max-abs).
pub fn is_compatible_with_tol(a: &Subspace, b: &Subspace, tol: f64) -> Result<bool> {
    a.check_dims(b)?;
    Ok(max_abs(&numerics::commutator(&a.projector, &b.projector)) <= tol)
}

/// `A ≤ B` decided by `[B][A] = [A]`.
pub fn is_below(a: &Subspace, b: &Subspace) -> Result<bool> {
    a.check_dims(b)?;
    Ok(distance(&(&b.projector * &a.projector), &a.projector) <= tol::COMM)
}

/// `A ⟂ B` decided by `[A][B] = 0`.
pub fn is_orthogonal(a: &Subspace, b: &Subspace) -> Result<bool> {
    a.check_dims(b)?;
    Ok(max_abs(&(&a.projector * &b.projector)) <= tol::COMM)
}

/// Ray of spin-1/2 along the unit axis `n` with eigenvalue sign `+1` or `-1`:
/// projector `(I ± n·σ)/2`.
pub fn spin_half_ray(axis: [f64; 3], positive: bool) -> Subspace {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / norm);
    let s = if positive { 1.0 } else { -1.0 };
    let p = CMatrix::from_row_slice(
        2,
        2,
        &[
            c(0.5 * (1.0 + s * z), 0.0),
            c(0.5 * s * x, -0.5 * s * y),
            c(0.5 * s * x, 0.5 * s * y),
            c(0.5 * (1.0 - s * z), 0.0),
        ],
    );
    Subspace::from_projector_unchecked(&p)
}

/// Maximum residual of one lattice law over a sample.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomResidual {
    pub law: &'static str,
    pub max_residual: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub laws: Vec<AxiomResidual>,
}

impl AxiomReport {
    pub fn residual(&self, law: &str) -> Option<f64> {
        self.laws.iter().find(|l| l.law == law).map(|l| l.max_residual)
    }

    pub fn holds(&self, law: &str, tol: f64) -> bool {
        self.residual(law).is_some_and(|r| r <= tol)
    }
}

/// Evaluate the ortholattice laws, and the distributive laws that a general
/// subspace lattice violates, on every pair and triple drawn from `sample`
/// (with repetition). Residuals are projector distances.
pub fn check_ortholattice_axioms(sample: &[Subspace]) -> Result<AxiomReport> {
    let Some(first) = sample.first() else {
        return Ok(AxiomReport { laws: Vec::new() });
    };
    let dim = first.dim;
    for s in sample {
        first.check_dims(s)?;
    }
    let full = Subspace::full(dim);
    let zero = Subspace::zero(dim);
    let nots: Vec<Subspace> = sample.iter().map(q_not).collect();

    let mut laws: Vec<AxiomResidual> = [
        "meet_commutative",
        "join_commutative",
        "meet_associative",
        "join_associative",
        "meet_identity",
        "join_identity",
        "complement_meet",
        "complement_join",
        "complement_involution",
        "de_morgan",
        "absorption",
        "distributive_meet_over_join",
        "distributive_join_over_meet",
    ]
    .into_iter()
    .map(|law| AxiomResidual { law, max_residual: 0.0, cases: 0 })
    .collect();
    let mut record = |law: &str, r: f64| {
        let entry = laws.iter_mut().find(|l| l.law == law).expect("known law");
        entry.max_residual = entry.max_residual.max(r);
        entry.cases += 1;
    };

    for (i, a) in sample.iter().enumerate() {
        record("meet_identity", q_meet(a, &full)?.distance(a));
        record("join_identity", q_join(a, &zero)?.distance(a));
        record("complement_meet", q_meet(a, &nots[i])?.distance(&zero));
        record("complement_join", q_join(a, &nots[i])?.distance(&full));
        record("complement_involution", q_not(&nots[i]).distance(a));
        for (j, b) in sample.iter().enumerate() {
            let ab_meet = q_meet(a, b)?;
            let ab_join = q_join(a, b)?;
            record("meet_commutative", ab_meet.distance(&q_meet(b, a)?));
            record("join_commutative", ab_join.distance(&q_join(b, a)?));
            record("de_morgan", q_not(&ab_join).distance(&q_meet(&nots[i], &nots[j])?));
            record("absorption", q_meet(a, &ab_join)?.distance(a));
            for c3 in sample {
                let bc_join = q_join(b, c3)?;
                let bc_meet = q_meet(b, c3)?;
                record(
                    "meet_associative",
                    q_meet(a, &bc_meet)?.distance(&q_meet(&ab_meet, c3)?),
                );
                record(
                    "join_associative",
                    q_join(a, &bc_join)?.distance(&q_join(&ab_join, c3)?),
                );
                let lhs = q_meet(a, &bc_join)?;
                let rhs = q_join(&ab_meet, &q_meet(a, c3)?)?;
                record("distributive_meet_over_join", lhs.distance(&rhs));
                let lhs = q_join(a, &bc_meet)?;
                let rhs = q_meet(&ab_join, &q_join(a, c3)?)?;
                record("distributive_join_over_meet", lhs.distance(&rhs));
            }
        }
    }
    Ok(AxiomReport { laws })
}
