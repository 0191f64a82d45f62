//! Static frameworks: sample spaces, the Boolean event algebra they generate,
//! density matrices and the Born-rule lattice measure.

use serde::Serialize;

use crate::error::{CqtError, Result};
use crate::lattice::{Projector, Subspace};
use crate::numerics::{self, distance, hermitian_eig, identity, max_abs, outer, tol, CMatrix, Ket};

/// Largest sample space whose full event algebra is materialized.
pub const MAX_ENUMERATED_MEMBERS: usize = 20;

/// Subset of sample-space member indices. Bit `i` selects member `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventMask(pub u64);

impl EventMask {
    pub const EMPTY: EventMask = EventMask(0);

    pub fn full(members: usize) -> Self {
        if members >= 64 {
            EventMask(u64::MAX)
        } else {
            EventMask((1u64 << members) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        EventMask(1u64 << i)
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        EventMask(indices.iter().fold(0, |acc, &i| acc | (1u64 << i)))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        EventMask(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        EventMask(self.0 & other.0)
    }

    pub fn complement(self, members: usize) -> Self {
        EventMask(!self.0 & Self::full(members).0)
    }
}

/// Unit-trace positive semidefinite operator.
#[derive(Debug, Clone)]
pub struct StateDensity {
    matrix: CMatrix,
    pure: Option<Ket>,
}

impl StateDensity {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        numerics::require_hermitian(&matrix, tol::HERM)
            .map_err(|e| CqtError::InvalidState(e.to_string()))?;
        let tr = numerics::trace(&matrix).re;
        if (tr - 1.0).abs() > tol::TRACE {
            return Err(CqtError::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let eig = hermitian_eig(&matrix)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -tol::PSD {
            return Err(CqtError::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        let pure = (eig.values.len() == 1 || eig.values[1].abs() <= tol::PSD)
            .then(|| eig.vectors[0].clone());
        Ok(Self { matrix, pure })
    }

    /// Rank-one state `|psi><psi|`; `psi` must be normalized.
    pub fn pure(psi: &Ket) -> Result<Self> {
        if psi.is_empty() {
            return Err(CqtError::InvalidState("empty vector".into()));
        }
        let norm = psi.norm();
        if !norm.is_finite() {
            return Err(CqtError::NonFinite("state vector"));
        }
        if (norm - 1.0).abs() > tol::NORM {
            return Err(CqtError::InvalidState(format!("vector norm is {norm}, expected 1")));
        }
        Ok(Self { matrix: outer(psi), pure: Some(psi.clone()) })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: identity(dim).unscale(dim as f64), pure: (dim == 1).then(|| numerics::basis_ket(1, 0)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// State vector when the density has rank one (up to a global phase).
    pub fn pure_vector(&self) -> Option<&Ket> {
        self.pure.as_ref()
    }

    /// `U ρ U†`
    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self {
            matrix: u * &self.matrix * u.adjoint(),
            pure: self.pure.as_ref().map(|v| u * v),
        }
    }

    /// `Tr(ρ J)` for an arbitrary operator `J`.
    pub fn expectation(&self, j: &CMatrix) -> numerics::C64 {
        match &self.pure {
            Some(v) => v.dotc(&(j * v)),
            None => (self.matrix.transpose().component_mul(j)).sum(),
        }
    }
}

/// Mutually orthogonal nonzero subspaces that decompose the identity.
#[derive(Debug, Clone)]
pub struct SampleSpace {
    dim: usize,
    members: Vec<Subspace>,
}

impl SampleSpace {
    pub fn new(members: Vec<Subspace>) -> Result<Self> {
        validate_sample_space(members)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[Subspace] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Sample space of one-dimensional coordinate rays.
    pub fn standard(dim: usize) -> Self {
        let members = (0..dim).map(|i| Subspace::coordinate(dim, &[i]).expect("index < dim")).collect();
        Self { dim, members }
    }

    /// Trivial sample space `{H}`.
    pub fn trivial(dim: usize) -> Self {
        Self { dim, members: vec![Subspace::full(dim)] }
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.members.iter().map(Subspace::rank).collect()
    }
}

pub fn validate_sample_space(members: Vec<Subspace>) -> Result<SampleSpace> {
    let Some(first) = members.first() else {
        return Err(CqtError::Invalid("sample space has no members".into()));
    };
    let dim = first.dim();
    if members.len() > 64 {
        return Err(CqtError::TooManyMembers(members.len()));
    }
    for (i, m) in members.iter().enumerate() {
        if m.dim() != dim {
            return Err(CqtError::DimensionMismatch { expected: dim, found: m.dim() });
        }
        if m.is_zero() {
            return Err(CqtError::ZeroMember(i));
        }
    }
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let overlap = max_abs(&(members[i].projector() * members[j].projector()));
            if overlap > tol::COMM {
                return Err(CqtError::NotOrthogonal { first: i, second: j, overlap });
            }
        }
    }
    let mut sum = numerics::zeros(dim);
    for m in &members {
        sum += m.projector();
    }
    let residual = distance(&sum, &identity(dim));
    if residual > tol::PROJ {
        return Err(CqtError::Incomplete { residual });
    }
    Ok(SampleSpace { dim, members })
}

/// `[E_J] = Σ_{i∈J} [D_i]`
pub fn event_projector(space: &SampleSpace, mask: EventMask) -> Result<Projector> {
    let m = space.len();
    if let Some(bad) = mask.indices().find(|&i| i >= m) {
        return Err(CqtError::IndexOutOfRange { what: "sample space member", index: bad, len: m });
    }
    let mut p = numerics::zeros(space.dim);
    for i in mask.indices() {
        p += space.members[i].projector();
    }
    Ok(Projector::from_trusted(p))
}

/// The Boolean event algebra generated by a sample space. Events are masks;
/// projectors are built on demand.
#[derive(Debug, Clone)]
pub struct Framework {
    base: SampleSpace,
}

impl Framework {
    pub fn new(base: SampleSpace) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &SampleSpace {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn members(&self) -> usize {
        self.base.len()
    }

    pub fn is_enumerable(&self) -> bool {
        self.members() <= MAX_ENUMERATED_MEMBERS
    }

    /// All `2^m` event masks; errors above the enumeration cap.
    pub fn events(&self) -> Result<impl Iterator<Item = EventMask>> {
        if !self.is_enumerable() {
            return Err(CqtError::CapExceeded { histories: self.members(), cap: MAX_ENUMERATED_MEMBERS });
        }
        Ok((0..1u64 << self.members()).map(EventMask))
    }

    pub fn event_projector(&self, mask: EventMask) -> Result<Projector> {
        event_projector(&self.base, mask)
    }

    pub fn event_subspace(&self, mask: EventMask) -> Result<Subspace> {
        Ok(self.event_projector(mask)?.to_subspace())
    }

    /// Atoms of the event lattice found by lattice order alone: nonzero events
    /// with no nonzero event strictly below them.
    pub fn atoms_by_order(&self) -> Result<Vec<Subspace>> {
        let events: Vec<Subspace> = self
            .events()?
            .map(|m| self.event_subspace(m))
            .collect::<Result<_>>()?;
        let mut atoms = Vec::new();
        for (i, e) in events.iter().enumerate() {
            if e.is_zero() {
                continue;
            }
            let mut minimal = true;
            for (j, f) in events.iter().enumerate() {
                if i == j || f.is_zero() || f.approx_eq(e, tol::PROJ) {
                    continue;
                }
                if crate::lattice::is_below(f, e)? {
                    minimal = false;
                    break;
                }
            }
            if minimal {
                atoms.push(e.clone());
            }
        }
        Ok(atoms)
    }
}

/// Normalized lattice measure `W_ρ(A) = Tr(ρ[A])`, clamped to `[0, 1]`.
pub fn lattice_measure(rho: &StateDensity, a: &Subspace) -> Result<f64> {
    if rho.dim() != a.dim() {
        return Err(CqtError::DimensionMismatch { expected: rho.dim(), found: a.dim() });
    }
    Ok(rho.expectation(a.projector()).re.clamp(0.0, 1.0))
}

/// `Tr(ρ P)` for a projector matrix, clamped to `[0, 1]`.
pub fn projector_measure(rho: &StateDensity, p: &CMatrix) -> Result<f64> {
    if rho.dim() != p.nrows() {
        return Err(CqtError::DimensionMismatch { expected: rho.dim(), found: p.nrows() });
    }
    Ok(rho.expectation(p).re.clamp(0.0, 1.0))
}

/// Probability function of a framework, indexed by event mask.
#[derive(Debug, Clone, Serialize)]
pub struct ProbabilityFunction {
    members: usize,
    values: Vec<f64>,
}

impl ProbabilityFunction {
    pub fn get(&self, mask: EventMask) -> f64 {
        self.values[mask.0 as usize]
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn atoms(&self) -> Vec<f64> {
        (0..self.members).map(|i| self.get(EventMask::singleton(i))).collect()
    }

    /// Largest violations of the Kolmogorov conditions over all event pairs:
    /// `(additivity on disjoint events, normalization, overlap equation)`.
    pub fn kolmogorov_residuals(&self) -> KolmogorovResiduals {
        let n = self.values.len() as u64;
        let full = EventMask::full(self.members);
        let mut additivity = self.get(EventMask::EMPTY).abs();
        let mut overlap: f64 = 0.0;
        let mut negativity: f64 = 0.0;
        for a in 0..n {
            let a = EventMask(a);
            negativity = negativity.max(-self.get(a));
            for b in 0..n {
                let b = EventMask(b);
                let union = self.get(a.union(b));
                let meet = self.get(a.intersection(b));
                if a.intersection(b).is_empty() {
                    additivity = additivity.max((union - self.get(a) - self.get(b)).abs());
                }
                overlap = overlap.max((union - (self.get(a) + self.get(b) - meet)).abs());
            }
        }
        KolmogorovResiduals {
            additivity,
            normalization: (self.get(full) - 1.0).abs(),
            overlap,
            negativity,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KolmogorovResiduals {
    pub additivity: f64,
    pub normalization: f64,
    pub overlap: f64,
    pub negativity: f64,
}

impl KolmogorovResiduals {
    pub fn max(&self) -> f64 {
        self.additivity.max(self.normalization).max(self.overlap).max(self.negativity)
    }
}

/// `P(J) = Tr(ρ [E_J])` for every event of the framework, each evaluated
/// directly from its projector.
pub fn probability_function(rho: &StateDensity, fw: &Framework) -> Result<ProbabilityFunction> {
    if rho.dim() != fw.dim() {
        return Err(CqtError::DimensionMismatch { expected: fw.dim(), found: rho.dim() });
    }
    let values = fw
        .events()?
        .map(|mask| Ok(rho.expectation(fw.event_projector(mask)?.matrix()).re))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbabilityFunction { members: fw.members(), values })
}

#[derive(Debug, Clone, Serialize)]
pub struct SharedEvent {
    pub mask_first: EventMask,
    pub mask_second: EventMask,
    pub rank: usize,
    pub probability_first: f64,
    pub probability_second: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoncontextualityReport {
    pub dim: usize,
    pub shared: Vec<SharedEvent>,
    pub max_deviation: f64,
    /// False when a framework exceeds the enumeration cap and only atoms and
    /// their complements were compared.
    pub exhaustive: bool,
}

impl NoncontextualityReport {
    /// Shared events other than `O` and `H`.
    pub fn nontrivial_shared(&self) -> usize {
        self.shared.iter().filter(|s| s.rank != 0 && s.rank != self.dim).count()
    }
}

fn candidate_events(fw: &Framework) -> (Vec<EventMask>, bool) {
    if fw.is_enumerable() {
        ((0..1u64 << fw.members()).map(EventMask).collect(), true)
    } else {
        let m = fw.members();
        let mut v = vec![EventMask::EMPTY, EventMask::full(m)];
        for i in 0..m {
            v.push(EventMask::singleton(i));
            v.push(EventMask::singleton(i).complement(m));
        }
        (v, false)
    }
}

/// Compare the probabilities two frameworks assign to the events they share.
/// Shared events are matched by projector distance.
pub fn noncontextuality_check(
    rho: &StateDensity,
    fw1: &Framework,
    fw2: &Framework,
) -> Result<NoncontextualityReport> {
    if fw1.dim() != fw2.dim() {
        return Err(CqtError::DimensionMismatch { expected: fw1.dim(), found: fw2.dim() });
    }
    if rho.dim() != fw1.dim() {
        return Err(CqtError::DimensionMismatch { expected: fw1.dim(), found: rho.dim() });
    }
    let (events1, ex1) = candidate_events(fw1);
    let (events2, ex2) = candidate_events(fw2);
    let ranks1 = fw1.base().ranks();
    let ranks2 = fw2.base().ranks();
    let rank_of = |mask: EventMask, ranks: &[usize]| mask.indices().map(|i| ranks[i]).sum::<usize>();
    let proj2: Vec<(EventMask, usize, CMatrix)> = events2
        .iter()
        .map(|&m| Ok((m, rank_of(m, &ranks2), fw2.event_projector(m)?.into_matrix())))
        .collect::<Result<_>>()?;
    let mut shared = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for &m1 in &events1 {
        let r1 = rank_of(m1, &ranks1);
        let p1 = fw1.event_projector(m1)?.into_matrix();
        for (m2, r2, p2) in &proj2 {
            if *r2 != r1 || distance(&p1, p2) > tol::PROJ {
                continue;
            }
            let a = rho.expectation(&p1).re;
            let b = rho.expectation(p2).re;
            max_deviation = max_deviation.max((a - b).abs());
            shared.push(SharedEvent {
                mask_first: m1,
                mask_second: *m2,
                rank: r1,
                probability_first: a,
                probability_second: b,
            });
        }
    }
    Ok(NoncontextualityReport { dim: fw1.dim(), shared, max_deviation, exhaustive: ex1 && ex2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TruthValue {
    True,
    False,
    Indeterminate,
}

impl std::fmt::Display for TruthValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TruthValue::True => "T",
            TruthValue::False => "F",
            TruthValue::Indeterminate => "indeterminate",
        })
    }
}

pub fn truth_value(probability: f64) -> TruthValue {
    if (probability - 1.0).abs() <= tol::PROB {
        TruthValue::True
    } else if probability.abs() <= tol::PROB {
        TruthValue::False
    } else {
        TruthValue::Indeterminate
    }
}

/// Truth values a pure state confers on every event of a framework, indexed
/// by mask: probability 1 is true, 0 is false.
pub fn pure_truth_values(psi: &Ket, fw: &Framework) -> Result<Vec<TruthValue>> {
    let rho = StateDensity::pure(psi)?;
    let p = probability_function(&rho, fw)?;
    Ok(p.values.iter().map(|&v| truth_value(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{basis_ket, c, ket};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn real_identity_scaled(dim: usize, s: f64) -> CMatrix {
        identity(dim) * c(s, 0.0)
    }

    fn qubit_z() -> SampleSpace {
        SampleSpace::standard(2)
    }

    #[test]
    fn validates_standard_and_block_spaces() {
        assert!(validate_sample_space(vec![
            Subspace::ray(&basis_ket(2, 0)).unwrap(),
            Subspace::ray(&basis_ket(2, 1)).unwrap()
        ])
        .is_ok());
        let s = validate_sample_space(vec![
            Subspace::coordinate(3, &[0, 1]).unwrap(),
            Subspace::coordinate(3, &[2]).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.ranks(), vec![2, 1]);
    }

    #[test]
    fn rejects_overlapping_incomplete_and_zero() {
        let err = validate_sample_space(vec![
            Subspace::ray(&basis_ket(2, 0)).unwrap(),
            Subspace::ray(&ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap(),
        ])
        .unwrap_err();
        match err {
            CqtError::NotOrthogonal { first: 0, second: 1, overlap } => assert!((overlap - 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            validate_sample_space(vec![Subspace::ray(&basis_ket(2, 0)).unwrap()]),
            Err(CqtError::Incomplete { .. })
        ));
        assert!(matches!(
            validate_sample_space(vec![Subspace::full(2), Subspace::zero(2)]),
            Err(CqtError::ZeroMember(1))
        ));
    }

    #[test]
    fn event_projectors() {
        let s = SampleSpace::standard(3);
        assert_eq!(max_abs(event_projector(&s, EventMask::EMPTY).unwrap().matrix()), 0.0);
        assert!(distance(event_projector(&s, EventMask::full(3)).unwrap().matrix(), &identity(3)) < 1e-15);
        let p = event_projector(&s, EventMask::from_indices(&[0, 1])).unwrap();
        let eig = hermitian_eig(p.matrix()).unwrap();
        assert_eq!(eig.values.iter().filter(|l| **l > 0.5).count(), 2);
        assert!(matches!(
            event_projector(&s, EventMask::singleton(5)),
            Err(CqtError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn lattice_measure_values() {
        let rho = StateDensity::pure(&basis_ket(2, 0)).unwrap();
        assert!((lattice_measure(&rho, &Subspace::ray(&basis_ket(2, 0)).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let plus = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let direct = plus.dotc(&basis_ket(2, 0)).norm_sqr();
        assert!((lattice_measure(&rho, &Subspace::ray(&plus).unwrap()).unwrap() - direct).abs() < 1e-15);
        let mixed = StateDensity::maximally_mixed(4);
        let a = Subspace::coordinate(4, &[0, 2, 3]).unwrap();
        assert!((lattice_measure(&mixed, &a).unwrap() - 0.75).abs() < 1e-15);
        assert!(lattice_measure(&mixed, &Subspace::full(3)).is_err());
    }

    #[test]
    fn probability_function_of_plus_state() {
        let psi = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let rho = StateDensity::pure(&psi).unwrap();
        let fw = Framework::new(qubit_z());
        let p = probability_function(&rho, &fw).unwrap();
        assert!(p.atoms().iter().all(|x| (x - 0.5).abs() < 1e-15));
        assert!((p.get(EventMask(0b11)) - p.get(EventMask(0b01)) - p.get(EventMask(0b10))).abs() < 1e-15);
        assert!(p.kolmogorov_residuals().max() < 1e-12);
    }

    #[test]
    fn truth_values() {
        let fw = Framework::new(qubit_z());
        let t = pure_truth_values(&basis_ket(2, 0), &fw).unwrap();
        assert_eq!(t[1], TruthValue::True);
        assert_eq!(t[2], TruthValue::False);
        assert_eq!(t[3], TruthValue::True);
        assert_eq!(t[0], TruthValue::False);
        let t = pure_truth_values(&ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), &fw).unwrap();
        assert_eq!(t[1], TruthValue::Indeterminate);
        assert_eq!(t[2], TruthValue::Indeterminate);
        assert_eq!(t[3], TruthValue::True);
    }

    #[test]
    fn noncontextuality_on_shared_plane() {
        let fw1 = Framework::new(SampleSpace::standard(3));
        let fw2 = Framework::new(
            SampleSpace::new(vec![Subspace::coordinate(3, &[0]).unwrap(), Subspace::coordinate(3, &[1, 2]).unwrap()])
                .unwrap(),
        );
        let rho = StateDensity::pure(&ket(&[0.6, 0.0, 0.8])).unwrap();
        let r = noncontextuality_check(&rho, &fw1, &fw2).unwrap();
        // O, H, e1, span{e2,e3}
        assert_eq!(r.shared.len(), 4);
        let plane = r.shared.iter().find(|s| s.mask_second == EventMask(0b10)).unwrap();
        assert_eq!(plane.mask_first, EventMask(0b110));
        assert!((plane.probability_first - 0.64).abs() < 1e-15);
        assert!(r.max_deviation <= 1e-12);
        let same = noncontextuality_check(&rho, &fw1, &fw1).unwrap();
        assert_eq!(same.shared.len(), 8);
        assert_eq!(same.max_deviation, 0.0);
    }

    #[test]
    fn atoms_recovered_from_order() {
        let fw = Framework::new(
            SampleSpace::new(vec![Subspace::coordinate(3, &[0, 2]).unwrap(), Subspace::coordinate(3, &[1]).unwrap()])
                .unwrap(),
        );
        let atoms = fw.atoms_by_order().unwrap();
        assert_eq!(atoms.len(), 2);
        assert!(atoms.iter().all(|a| fw.base().members().iter().any(|m| m.approx_eq(a, 1e-12))));
    }

    #[test]
    fn state_validation() {
        assert!(StateDensity::pure(&ket(&[1.0, 1.0])).is_err());
        assert!(StateDensity::new(identity(2)).is_err());
        let mut neg = numerics::zeros(2);
        neg[(0, 0)] = c(1.5, 0.0);
        neg[(1, 1)] = c(-0.5, 0.0);
        assert!(StateDensity::new(neg).is_err());
        let s = StateDensity::new(real_identity_scaled(2, 0.5)).unwrap();
        assert!(s.pure_vector().is_none());
        let p = StateDensity::new(outer(&ket(&[0.6, 0.8]))).unwrap();
        assert!(p.pure_vector().is_some());
    }
}
