//! Independent verifiers and demonstrators: conditional lattice measures,
//! subsystem decoherence products, the magic-square parity obstruction,
//! the two-slit fixtures and a collapse-sequence probability oracle.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::{CqtError, Result};
use crate::framework::{SampleSpace, StateDensity};
use crate::histories::{classify_with, ClassifyOptions, Family, HistoryIndex, Verdict};
use crate::lattice::{spin_half_ray, Projector, Subspace};
use crate::numerics::{
    self, c, distance, hermitian_eig, identity, kron, kron_ket, ket, tol, CMatrix, Hamiltonian, C64,
};
use crate::random;
use crate::report::CheckReport;

// ---------------------------------------------------------------------------
// collapse-sequence oracle

/// History probability by direct state-vector evolution between successive
/// times, projecting and renormalizing at each time and multiplying the
/// conditional factors. Returns 0 once a branch has zero norm.
pub fn brute_force_history_probability(fam: &Family, h: &HistoryIndex) -> Result<f64> {
    let mut psi = fam
        .state()
        .pure_vector()
        .ok_or_else(|| CqtError::InvalidState("collapse-sequence oracle needs a pure initial state".into()))?
        .clone();
    if h.len() != fam.len() {
        return Err(CqtError::FamilyMismatch);
    }
    let mut t_prev = fam.t0();
    let mut product = 1.0;
    for (n, &j) in h.as_slice().iter().enumerate() {
        let t = fam.times()[n];
        let space = &fam.spaces()[n];
        let member = space
            .members()
            .get(j)
            .ok_or(CqtError::IndexOutOfRange { what: "sample space member", index: j, len: space.len() })?;
        psi = fam.hamiltonian().propagator(t, t_prev)? * psi;
        let projected = member.projector() * &psi;
        let weight = projected.norm_squared();
        if weight <= f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        product *= weight;
        psi = projected.unscale(weight.sqrt());
        t_prev = t;
    }
    Ok(product)
}

/// Schrödinger-picture chain `[A_N] U(t_N,t_{N-1}) ⋯ [A_1] U(t_1,t_0)`.
/// Related to the Heisenberg chain by `K = U(t_N,t_0) Ĉ`.
pub fn schrodinger_chain_operator(fam: &Family, h: &HistoryIndex) -> Result<CMatrix> {
    if h.len() != fam.len() {
        return Err(CqtError::FamilyMismatch);
    }
    let mut k = identity(fam.dim());
    let mut t_prev = fam.t0();
    for (n, &j) in h.as_slice().iter().enumerate() {
        let t = fam.times()[n];
        let space = &fam.spaces()[n];
        let member = space
            .members()
            .get(j)
            .ok_or(CqtError::IndexOutOfRange { what: "sample space member", index: j, len: space.len() })?;
        k = member.projector() * fam.hamiltonian().propagator(t, t_prev)? * k;
        t_prev = t;
    }
    Ok(k)
}

/// `Tr(K ρ₀ K'†)` with Schrödinger chains.
pub fn schrodinger_decoherence_functional(fam: &Family, h1: &HistoryIndex, h2: &HistoryIndex) -> Result<C64> {
    let k1 = schrodinger_chain_operator(fam, h1)?;
    let k2 = schrodinger_chain_operator(fam, h2)?;
    Ok(numerics::trace(&(k1 * fam.state().matrix() * k2.adjoint())))
}

// ---------------------------------------------------------------------------
// conditional lattice measure

/// A state-induced measure `V(J) = Tr(ρJ)` and a projector `Â` with
/// `V(Â) > 1e-9`.
#[derive(Debug, Clone)]
pub struct CzInstance {
    rho: StateDensity,
    a_hat: Projector,
}

impl CzInstance {
    pub fn new(rho: StateDensity, a_hat: Projector) -> Result<Self> {
        if rho.dim() != a_hat.dim() {
            return Err(CqtError::DimensionMismatch { expected: rho.dim(), found: a_hat.dim() });
        }
        let v = rho.expectation(a_hat.matrix()).re;
        if v <= tol::RANK {
            return Err(CqtError::DegenerateMeasure { value: v });
        }
        Ok(Self { rho, a_hat })
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let rho = random::random_density(dim, rng.random_range(1..=dim), rng);
            let a = random::random_subspace(dim, rng.random_range(1..=dim), rng);
            if let Ok(inst) = Self::new(rho, a.to_projector()) {
                if inst.v_a() > 1e-3 {
                    return inst;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn rho(&self) -> &StateDensity {
        &self.rho
    }

    pub fn a_hat(&self) -> &Projector {
        &self.a_hat
    }

    pub fn v(&self, j: &CMatrix) -> f64 {
        self.rho.expectation(j).re
    }

    pub fn v_a(&self) -> f64 {
        self.v(self.a_hat.matrix())
    }

    /// `W(B̂) = V(ÂB̂Â) / V(Â)`.
    pub fn w(&self, b: &CMatrix) -> f64 {
        let a = self.a_hat.matrix();
        self.v(&(a * b * a)) / self.v_a()
    }
}

/// Check that the conditional measure `W` is a normalized lattice measure,
/// agrees with `V(B̂)/V(Â)` below `Â`, and that the spectral decomposition
/// of `ÂB̂Â` reproduces `V(ÂB̂Â)` with spectral projectors inside `Â`.
pub fn cz_check<R: Rng + ?Sized>(inst: &CzInstance, trials: usize, rng: &mut R) -> Result<CheckReport> {
    let dim = inst.dim();
    let a = inst.a_hat.matrix();
    let a_space = inst.a_hat.to_subspace();
    let mut normalization: f64 = (inst.w(&identity(dim)) - 1.0).abs();
    let mut negativity: f64 = 0.0;
    let mut additivity: f64 = 0.0;
    let mut below: f64 = 0.0;
    let mut boundary: f64 = (inst.w(a) - 1.0).abs();
    let mut spectral_sum: f64 = 0.0;
    let mut spectral_support: f64 = 0.0;
    let mut spectral_range: f64 = 0.0;

    let orthogonal = Projector::from_trusted(identity(dim) - a);
    boundary = boundary.max(inst.w(orthogonal.matrix()).abs());

    for _ in 0..trials {
        let members = rng.random_range(1..=dim);
        let space = random::random_sample_space(dim, members, rng);
        let ws: Vec<f64> = space.members().iter().map(|m| inst.w(m.projector())).collect();
        normalization = normalization.max((ws.iter().sum::<f64>() - 1.0).abs());
        negativity = negativity.max(ws.iter().fold(0.0, |acc: f64, w| acc.max(-w)));
        if space.len() >= 2 {
            let joined = space.members()[0].projector() + space.members()[1].projector();
            additivity = additivity.max((inst.w(&joined) - ws[0] - ws[1]).abs());
        }

        let rank = rng.random_range(1..=a_space.rank());
        let b = random::random_subspace_within(&a_space, rank, rng);
        below = below.max((inst.w(b.projector()) - inst.v(b.projector()) / inst.v_a()).abs());

        let b = random::random_subspace(dim, rng.random_range(1..=dim), rng);
        let aba = a * b.projector() * a;
        let eig = hermitian_eig(&((&aba + aba.adjoint()) * c(0.5, 0.0)))?;
        let mut sum = 0.0;
        for (lambda, p) in eig.spectral_clusters(tol::EIG_CLUSTER) {
            sum += lambda * inst.v(&p);
            spectral_range = spectral_range.max((-lambda).max(lambda - 1.0).max(0.0));
            if lambda.abs() > tol::EIG_CLUSTER {
                spectral_support = spectral_support.max(distance(&(a * &p), &p));
            }
        }
        spectral_sum = spectral_sum.max((sum - inst.v(&aba)).abs());
    }

    let mut report = CheckReport::new();
    report.push("w_normalized", normalization, tol::TRACE);
    report.push("w_nonnegative", negativity, tol::ZERO);
    report.push("w_additive", additivity, tol::TRACE);
    report.push("w_on_a_and_complement", boundary, tol::ZERO);
    report.push("w_equals_v_ratio_below_a", below, tol::ZERO);
    report.push("spectral_sum", spectral_sum, tol::DEC);
    report.push("spectral_support_below_a", spectral_support, tol::PROJ);
    report.push("spectral_values_in_unit_interval", spectral_range, tol::DEC);
    Ok(report)
}

// ---------------------------------------------------------------------------
// subsystem products

/// Family on the tensor product: state `ρ₁⊗ρ₂`, `H₁⊗I + I⊗H₂`, and per-time
/// sample spaces `{A⊗B}` with joint member index `j₁·m₂ + j₂`. Both families
/// must share `t0` and times.
pub fn joint_family(f1: &Family, f2: &Family) -> Result<Family> {
    let state = if let (Some(a), Some(b)) = (f1.state().pure_vector(), f2.state().pure_vector()) {
        StateDensity::pure(&kron_ket(a, b))?
    } else {
        StateDensity::new(kron(f1.state().matrix(), f2.state().matrix()))?
    };
    joint_family_with_state(f1, f2, state)
}

fn joint_family_with_state(f1: &Family, f2: &Family, state: StateDensity) -> Result<Family> {
    if f1.t0() != f2.t0() || f1.times() != f2.times() {
        return Err(CqtError::FamilyMismatch);
    }
    let (d1, d2) = (f1.dim(), f2.dim());
    let h = kron(f1.hamiltonian().matrix(), &identity(d2)) + kron(&identity(d1), f2.hamiltonian().matrix());
    let steps = f1
        .times()
        .iter()
        .zip(f1.spaces().iter().zip(f2.spaces()))
        .map(|(&t, (s1, s2))| {
            let mut members = Vec::with_capacity(s1.len() * s2.len());
            for a in s1.members() {
                for b in s2.members() {
                    members.push(Subspace::from_projector(&kron(a.projector(), b.projector()))?);
                }
            }
            Ok((t, SampleSpace::new(members)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Family::new(state, Hamiltonian::new(h)?, f1.t0(), steps)
}

/// Split a joint history into its subsystem histories.
pub fn split_joint_history(f2: &Family, h: &HistoryIndex) -> (HistoryIndex, HistoryIndex) {
    let m2 = f2.member_counts();
    let (a, b) = h.as_slice().iter().zip(m2).map(|(&j, m)| (j / m, j % m)).unzip();
    (HistoryIndex(a), HistoryIndex(b))
}

/// Partial traces of a bipartite density matrix.
pub fn reduced_states(rho: &CMatrix, d1: usize, d2: usize) -> (CMatrix, CMatrix) {
    let mut r1 = CMatrix::zeros(d1, d1);
    let mut r2 = CMatrix::zeros(d2, d2);
    for i in 0..d1 {
        for k in 0..d1 {
            for j in 0..d2 {
                r1[(i, k)] += rho[(i * d2 + j, k * d2 + j)];
            }
        }
    }
    for j in 0..d2 {
        for l in 0..d2 {
            for i in 0..d1 {
                r2[(j, l)] += rho[(i * d2 + j, i * d2 + l)];
            }
        }
    }
    (r1, r2)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiosiWitness {
    pub joint: [String; 2],
    pub sub1: [String; 2],
    pub sub2: [String; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
    pub d_joint: [f64; 2],
}

const DIOSI_CAP: usize = 1024;

pub fn diosi_check(f1: &Family, f2: &Family) -> Result<CheckReport> {
    let joint = joint_family(f1, f2)?;
    diosi_report(f1, f2, &joint)
}

/// As [`diosi_check`] with an explicit joint state, which must be a product.
pub fn diosi_check_with_joint_state(f1: &Family, f2: &Family, rho: &StateDensity) -> Result<CheckReport> {
    let (d1, d2) = (f1.dim(), f2.dim());
    if rho.dim() != d1 * d2 {
        return Err(CqtError::DimensionMismatch { expected: d1 * d2, found: rho.dim() });
    }
    let (r1, r2) = reduced_states(rho.matrix(), d1, d2);
    let residual = distance(rho.matrix(), &kron(&r1, &r2));
    if residual > tol::TRACE {
        return Err(CqtError::NonProductState { residual });
    }
    let joint = joint_family_with_state(f1, f2, rho.clone())?;
    let sub1 = Family::new(StateDensity::new(r1)?, f1.hamiltonian().clone(), f1.t0(), steps_of(f1))?;
    let sub2 = Family::new(StateDensity::new(r2)?, f2.hamiltonian().clone(), f2.t0(), steps_of(f2))?;
    diosi_report(&sub1, &sub2, &joint)
}

fn steps_of(f: &Family) -> Vec<(f64, SampleSpace)> {
    f.times().iter().copied().zip(f.spaces().iter().cloned()).collect()
}

fn diosi_report(f1: &Family, f2: &Family, joint: &Family) -> Result<CheckReport> {
    let opts = ClassifyOptions { tol: tol::DEC, max_histories: DIOSI_CAP };
    let r1 = classify_with(f1, opts)?;
    let r2 = classify_with(f2, opts)?;
    let rj = classify_with(joint, opts)?;

    let mut factorization: f64 = 0.0;
    for (a, ha) in rj.histories.iter().enumerate() {
        let (h1a, h2a) = split_joint_history(f2, ha);
        let (i1, i2) = (f1.position(&h1a)?, f2.position(&h2a)?);
        for (b, hb) in rj.histories.iter().enumerate() {
            let (h1b, h2b) = split_joint_history(f2, hb);
            let (j1, j2) = (f1.position(&h1b)?, f2.position(&h2b)?);
            let product = r1.d[(i1, j1)] * r2.d[(i2, j2)];
            factorization = factorization.max((rj.d[(a, b)] - product).norm());
        }
    }

    let mut report = CheckReport::new();
    report.push("joint_factorizes", factorization, tol::DEC);
    if r1.verdict == Verdict::MediumConsistent && r2.verdict == Verdict::MediumConsistent {
        report.push_flag("medium_subsystems_give_medium_joint", rj.verdict == Verdict::MediumConsistent);
    }
    let weak = |v: Verdict| v != Verdict::Inconsistent;
    if weak(r1.verdict) && weak(r2.verdict) && rj.verdict == Verdict::Inconsistent {
        let w = rj.worst_offdiag.as_ref().expect("inconsistent report has a worst pair");
        let (h1a, h2a) = split_joint_history(f2, &w.first);
        let (h1b, h2b) = split_joint_history(f2, &w.second);
        let d1 = r1.d[(f1.position(&h1a)?, f1.position(&h1b)?)];
        let d2 = r2.d[(f2.position(&h2a)?, f2.position(&h2b)?)];
        let witness = DiosiWitness {
            joint: [w.first.to_string(), w.second.to_string()],
            sub1: [h1a.to_string(), h1b.to_string()],
            sub2: [h2a.to_string(), h2b.to_string()],
            d1: [d1.re, d1.im],
            d2: [d2.re, d2.im],
            d_joint: [w.re, w.im],
        };
        report.witness = Some(serde_json::to_value(witness).expect("witness serializes"));
    } else {
        report.witness = Some(json!({
            "found": false,
            "sub1": r1.verdict.as_str(),
            "sub2": r2.verdict.as_str(),
            "joint": rj.verdict.as_str(),
        }));
    }
    Ok(report)
}

/// Spin-½ subsystem in `|+x⟩`, no dynamics, `S_z` then `S_y`. Its
/// off-diagonal decoherence values are purely imaginary.
pub fn weak_only_spin_family() -> Family {
    let psi = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    let z = SampleSpace::standard(2);
    let y = SampleSpace::new(vec![spin_half_ray([0.0, 1.0, 0.0], true), spin_half_ray([0.0, 1.0, 0.0], false)])
        .expect("S_y eigenspaces");
    Family::new(StateDensity::pure(&psi).expect("unit"), Hamiltonian::zero(2), 0.0, vec![(1.0, z), (2.0, y)])
        .expect("valid family")
}

// ---------------------------------------------------------------------------
// magic square

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParityConstraint {
    /// Cells in row-major order, `0..9`.
    pub cells: Vec<usize>,
    /// Required product, `+1` or `-1`.
    pub product: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NoGoInstance {
    pub labels: [[String; 3]; 3],
    pub constraints: Vec<ParityConstraint>,
}

impl NoGoInstance {
    pub fn new(labels: [[String; 3]; 3], constraints: Vec<ParityConstraint>) -> Result<Self> {
        for con in &constraints {
            if con.product != 1 && con.product != -1 {
                return Err(CqtError::Invalid(format!("constraint product {} is not ±1", con.product)));
            }
            if let Some(&bad) = con.cells.iter().find(|&&k| k >= 9) {
                return Err(CqtError::IndexOutOfRange { what: "grid cell", index: bad, len: 9 });
            }
        }
        Ok(Self { labels, constraints })
    }

    /// Two-qubit Pauli square: rows multiply to `+I`, columns to `+I`,
    /// `+I`, `-I`.
    pub fn peres_mermin() -> Self {
        let labels = [["XI", "IX", "XX"], ["IZ", "ZI", "ZZ"], ["XZ", "ZX", "YY"]].map(|row| row.map(String::from));
        let mut constraints: Vec<ParityConstraint> =
            (0..3).map(|r| ParityConstraint { cells: vec![3 * r, 3 * r + 1, 3 * r + 2], product: 1 }).collect();
        for col in 0..3 {
            constraints.push(ParityConstraint {
                cells: vec![col, col + 3, col + 6],
                product: if col == 2 { -1 } else { 1 },
            });
        }
        Self { labels, constraints }
    }

    /// Permute rows and columns of the grid, carrying labels and constraints.
    pub fn relabeled(&self, rows: [usize; 3], cols: [usize; 3]) -> Self {
        // new cell (r, c) holds old cell (rows[r], cols[c])
        let mut old_to_new = [0usize; 9];
        for r in 0..3 {
            for c in 0..3 {
                old_to_new[3 * rows[r] + cols[c]] = 3 * r + c;
            }
        }
        let labels = std::array::from_fn(|r| std::array::from_fn(|c| self.labels[rows[r]][cols[c]].clone()));
        let constraints = self
            .constraints
            .iter()
            .map(|con| ParityConstraint {
                cells: con.cells.iter().map(|&k| old_to_new[k]).collect(),
                product: con.product,
            })
            .collect();
        Self { labels, constraints }
    }

    /// Product of the required signs is `-1` while every cell appears an
    /// even number of times, so no ±1 assignment can satisfy all constraints.
    pub fn parity_obstructed(&self) -> bool {
        let sign: i8 = self.constraints.iter().map(|c| c.product).product();
        let mut counts = [0usize; 9];
        for con in &self.constraints {
            for &k in &con.cells {
                counts[k] += 1;
            }
        }
        sign == -1 && counts.iter().all(|n| n % 2 == 0)
    }
}

/// Number of ±1 assignments to the 9 cells meeting every constraint.
pub fn mermin_no_go(inst: &NoGoInstance) -> usize {
    (0u32..512)
        .filter(|bits| {
            inst.constraints.iter().all(|con| {
                let negatives = con.cells.iter().filter(|&&k| bits >> k & 1 == 1).count();
                let product = if negatives % 2 == 0 { 1 } else { -1 };
                product == con.product
            })
        })
        .count()
}

/// The nine two-qubit Pauli products of [`NoGoInstance::peres_mermin`],
/// row-major.
pub fn peres_mermin_operators() -> Vec<CMatrix> {
    let i2 = identity(2);
    let x = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let y = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
    let z = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let p = |ch: char| match ch {
        'I' => i2.clone(),
        'X' => x.clone(),
        'Y' => y.clone(),
        _ => z.clone(),
    };
    NoGoInstance::peres_mermin()
        .labels
        .iter()
        .flatten()
        .map(|l| {
            let mut chars = l.chars();
            let (a, b) = (chars.next().unwrap(), chars.next().unwrap());
            kron(&p(a), &p(b))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// two-slit fixtures

fn plus_minus_space() -> SampleSpace {
    SampleSpace::new(vec![spin_half_ray([1.0, 0.0, 0.0], true), spin_half_ray([1.0, 0.0, 0.0], false)])
        .expect("S_x eigenspaces")
}

/// Two-slit family. Unmarked: `ℂ²` with slits `L`, `R` at `t1` and the
/// screen basis `|±⟩ = (|L⟩ ± |R⟩)/√2` at `t2`, no dynamics. Marked:
/// `ℂ²⊗ℂ²` where passage through `R` flips a marker spin, making the
/// family medium consistent.
pub fn build_two_slit(with_marker: bool) -> Family {
    if !with_marker {
        let psi = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        return Family::new(
            StateDensity::pure(&psi).expect("unit"),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2)), (2.0, plus_minus_space())],
        )
        .expect("valid family");
    }
    // path ⊗ marker, H = (π/2)[R]⊗(I - σx): U(t) flips the marker on R at odd t
    let up = numerics::basis_ket(2, 0);
    let psi = kron_ket(&ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), &up);
    let r = numerics::outer(&numerics::basis_ket(2, 1));
    let sx = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let h = kron(&r, &(identity(2) - sx)) * c(PI / 2.0, 0.0);
    let lift = |s: &SampleSpace| {
        SampleSpace::new(
            s.members()
                .iter()
                .map(|m| Subspace::from_projector(&kron(m.projector(), &identity(2))).expect("projector"))
                .collect(),
        )
        .expect("lifted sample space")
    };
    Family::new(
        StateDensity::pure(&psi).expect("unit"),
        Hamiltonian::new(h).expect("Hermitian"),
        0.0,
        vec![(1.0, lift(&SampleSpace::standard(2))), (3.0, lift(&plus_minus_space()))],
    )
    .expect("valid family")
}

/// Unmarked two-slit with the slit alternatives merged into `I` at `t1`.
pub fn build_merged_two_slit() -> Family {
    let psi = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    Family::new(
        StateDensity::pure(&psi).expect("unit"),
        Hamiltonian::zero(2),
        0.0,
        vec![(1.0, SampleSpace::trivial(2)), (2.0, plus_minus_space())],
    )
    .expect("valid family")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::classify;

    #[test]
    fn collapse_oracle_on_two_slit() {
        let f = build_two_slit(false);
        let h = HistoryIndex(vec![0, 0]);
        assert!((brute_force_history_probability(&f, &h).unwrap() - 0.25).abs() < 1e-15);
        // zero-norm branch
        let g = Family::new(
            StateDensity::pure(&numerics::basis_ket(2, 0)).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2)), (2.0, plus_minus_space())],
        )
        .unwrap();
        assert_eq!(brute_force_history_probability(&g, &HistoryIndex(vec![1, 0])).unwrap(), 0.0);
        let mixed = Family::new(
            StateDensity::maximally_mixed(2),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2))],
        )
        .unwrap();
        assert!(matches!(
            brute_force_history_probability(&mixed, &HistoryIndex(vec![0])),
            Err(CqtError::InvalidState(_))
        ));
    }

    #[test]
    fn collapse_oracle_single_time_is_static_born() {
        let mut rng = random::rng(11);
        for _ in 0..5 {
            let f = random::random_family(
                random::FamilyShape { dim: 4, steps: 1, max_members: 4, pure: true, hamiltonian_scale: 1.0 },
                &mut rng,
            );
            let psi_t = f.hamiltonian().propagator(f.times()[0], f.t0()).unwrap() * f.state().pure_vector().unwrap();
            for (j, m) in f.spaces()[0].members().iter().enumerate() {
                let born = (m.projector() * &psi_t).norm_squared();
                let p = brute_force_history_probability(&f, &HistoryIndex(vec![j])).unwrap();
                assert!((p - born).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marked_two_slit_is_medium_consistent() {
        let f = build_two_slit(true);
        // U(1) is a controlled flip on the marker
        let u = f.hamiltonian().propagator(1.0, 0.0).unwrap();
        let mut cnot = CMatrix::zeros(4, 4);
        cnot[(0, 0)] = c(1.0, 0.0);
        cnot[(1, 1)] = c(1.0, 0.0);
        cnot[(2, 3)] = c(1.0, 0.0);
        cnot[(3, 2)] = c(1.0, 0.0);
        assert!(distance(&u, &cnot) < 1e-12);
        let r = classify(&f).unwrap();
        assert_eq!(r.verdict, Verdict::MediumConsistent);
        assert!(r.offdiag_max <= 1e-12);
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in &r.probabilities {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn merged_two_slit_is_medium_consistent() {
        let r = classify(&build_merged_two_slit()).unwrap();
        assert_eq!(r.verdict, Verdict::MediumConsistent);
        assert!((r.probabilities[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cz_trivial_cases() {
        let mut rng = random::rng(5);
        let inst = CzInstance::random(4, &mut rng);
        assert!((inst.w(inst.a_hat().matrix()) - 1.0).abs() < 1e-12);
        let perp = identity(4) - inst.a_hat().matrix();
        assert!(inst.w(&perp).abs() < 1e-12);
        let report = cz_check(&inst, 10, &mut rng).unwrap();
        assert!(report.all_pass(), "{}", report.render_table());

        let rho = StateDensity::pure(&numerics::basis_ket(2, 0)).unwrap();
        let a = Subspace::coordinate(2, &[1]).unwrap().to_projector();
        assert!(matches!(CzInstance::new(rho, a), Err(CqtError::DegenerateMeasure { .. })));
    }

    #[test]
    fn diosi_golden_witness() {
        let f = weak_only_spin_family();
        let r = classify(&f).unwrap();
        assert_eq!(r.verdict, Verdict::WeakOnly);
        // ⟨+x|[y±][z+]|...⟩ pairs: hand value ±i/4
        let d = f.decoherence_functional(&HistoryIndex(vec![0, 0]), &HistoryIndex(vec![1, 0])).unwrap();
        assert!(d.re.abs() < 1e-15 && (d.im.abs() - 0.25).abs() < 1e-15);
        let report = diosi_check(&f, &f).unwrap();
        assert!(report.all_pass(), "{}", report.render_table());
        let w = report.witness.unwrap();
        let re = w["d_joint"][0].as_f64().unwrap();
        // (i x)(i y) = -x y with |x| = |y| = 1/4
        assert!((re.abs() - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn diosi_medium_subsystems() {
        let a = build_merged_two_slit();
        let report = diosi_check(&a, &a).unwrap();
        assert!(report.all_pass());
        assert!(report.get("medium_subsystems_give_medium_joint").unwrap().pass);
        assert_eq!(report.witness.unwrap()["found"], false);
    }

    #[test]
    fn diosi_rejects_entangled_state() {
        let f = weak_only_spin_family();
        let bell = ket(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]);
        let rho = StateDensity::pure(&bell).unwrap();
        assert!(matches!(diosi_check_with_joint_state(&f, &f, &rho), Err(CqtError::NonProductState { .. })));
        let psi = f.state().pure_vector().unwrap();
        let product = StateDensity::pure(&kron_ket(psi, psi)).unwrap();
        assert!(diosi_check_with_joint_state(&f, &f, &product).unwrap().all_pass());
    }

    #[test]
    fn magic_square() {
        let inst = NoGoInstance::peres_mermin();
        assert!(inst.parity_obstructed());
        assert_eq!(mermin_no_go(&inst), 0);
        let single = NoGoInstance::new(inst.labels.clone(), vec![ParityConstraint { cells: vec![4], product: 1 }])
            .unwrap();
        assert_eq!(mermin_no_go(&single), 256);
        assert!(NoGoInstance::new(inst.labels.clone(), vec![ParityConstraint { cells: vec![9], product: 1 }]).is_err());
        assert!(NoGoInstance::new(inst.labels.clone(), vec![ParityConstraint { cells: vec![0], product: 0 }]).is_err());
        let moved = inst.relabeled([2, 0, 1], [1, 2, 0]);
        assert_eq!(moved.labels[0][0], "ZX");
        assert_eq!(mermin_no_go(&moved), 0);
    }

    #[test]
    fn magic_square_signs_match_operators() {
        let ops = peres_mermin_operators();
        let inst = NoGoInstance::peres_mermin();
        for con in &inst.constraints {
            let mut prod = identity(4);
            for &k in &con.cells {
                prod *= &ops[k];
            }
            let expected = identity(4) * c(con.product as f64, 0.0);
            assert!(distance(&prod, &expected) < 1e-15);
            // operators in one line commute
            for &a in &con.cells {
                for &b in &con.cells {
                    assert!(numerics::max_abs(&numerics::commutator(&ops[a], &ops[b])) < 1e-15);
                }
            }
        }
    }
}
