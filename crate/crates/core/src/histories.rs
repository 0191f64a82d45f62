//! Families of histories: per-time sample spaces after an initial state,
//! Heisenberg projectors, chain operators, the decoherence functional and the
//! consistency classification that promotes a family to a framework.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{CqtError, Result};
use crate::framework::{SampleSpace, StateDensity};
use crate::numerics::{self, c, distance, hermitian_eig, identity, tol, CMatrix, Hamiltonian, Ket, C64};
use crate::random;

/// Default cap on elementary histories for a full decoherence matrix
/// (64 histories, 4096 entries).
pub const DEFAULT_MAX_HISTORIES: usize = 64;

/// Member index per time, zero-based. Displayed one-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct HistoryIndex(pub Vec<usize>);

impl HistoryIndex {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    /// Parse a comma-separated list of one-based indices, e.g. `"1,2"`.
    pub fn parse_one_based(text: &str) -> Result<Self> {
        let indices = text
            .split(',')
            .map(|s| {
                let s = s.trim();
                match s.parse::<usize>() {
                    Ok(0) | Err(_) => Err(CqtError::Invalid(format!(
                        "bad history index {s:?}: expected a positive integer"
                    ))),
                    Ok(j) => Ok(j - 1),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(indices))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for HistoryIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| (j + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A family of histories together with its initial state and dynamics.
/// Heisenberg projectors are computed once at construction.
#[derive(Debug, Clone)]
pub struct Family {
    state: StateDensity,
    hamiltonian: Hamiltonian,
    t0: f64,
    times: Vec<f64>,
    spaces: Vec<SampleSpace>,
    heisenberg: Vec<Vec<CMatrix>>,
}

impl Family {
    pub fn new(
        state: StateDensity,
        hamiltonian: Hamiltonian,
        t0: f64,
        steps: Vec<(f64, SampleSpace)>,
    ) -> Result<Self> {
        let dim = state.dim();
        if hamiltonian.dim() != dim {
            return Err(CqtError::DimensionMismatch { expected: dim, found: hamiltonian.dim() });
        }
        if !t0.is_finite() {
            return Err(CqtError::NonFinite("t0"));
        }
        if steps.is_empty() {
            return Err(CqtError::InvalidTimes("a family needs at least one time".into()));
        }
        let mut prev = t0;
        for (n, (t, space)) in steps.iter().enumerate() {
            if !t.is_finite() {
                return Err(CqtError::NonFinite("time"));
            }
            if *t <= prev {
                return Err(CqtError::InvalidTimes(format!(
                    "time {} ({t}) is not after {prev}",
                    n + 1
                )));
            }
            if space.dim() != dim {
                return Err(CqtError::DimensionMismatch { expected: dim, found: space.dim() });
            }
            prev = *t;
        }
        let mut heisenberg = Vec::with_capacity(steps.len());
        for (t, space) in &steps {
            let u = hamiltonian.propagator(*t, t0)?;
            let u_inv = u.adjoint();
            heisenberg.push(
                space
                    .members()
                    .iter()
                    .map(|m| {
                        let h = &u_inv * m.projector() * &u;
                        // restore exact Hermiticity lost to rounding
                        (&h + h.adjoint()) * c(0.5, 0.0)
                    })
                    .collect(),
            );
        }
        let (times, spaces) = steps.into_iter().unzip();
        Ok(Self { state, hamiltonian, t0, times, spaces, heisenberg })
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn state(&self) -> &StateDensity {
        &self.state
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn spaces(&self) -> &[SampleSpace] {
        &self.spaces
    }

    /// Number of times `N`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn member_counts(&self) -> Vec<usize> {
        self.spaces.iter().map(SampleSpace::len).collect()
    }

    /// `M = Π m_n`, saturating.
    pub fn history_count(&self) -> usize {
        self.spaces.iter().fold(1usize, |acc, s| acc.saturating_mul(s.len()))
    }

    /// All elementary histories in lexicographic order (last time fastest).
    pub fn histories(&self) -> Vec<HistoryIndex> {
        let counts = self.member_counts();
        let total = self.history_count();
        (0..total)
            .map(|mut k| {
                let mut idx = vec![0; counts.len()];
                for n in (0..counts.len()).rev() {
                    idx[n] = k % counts[n];
                    k /= counts[n];
                }
                HistoryIndex(idx)
            })
            .collect()
    }

    /// Position of `h` in [`Family::histories`].
    pub fn position(&self, h: &HistoryIndex) -> Result<usize> {
        self.check_prefix(h.as_slice(), true)?;
        Ok(h.0.iter().zip(self.member_counts()).fold(0, |acc, (&j, m)| acc * m + j))
    }

    fn check_prefix(&self, idx: &[usize], full: bool) -> Result<()> {
        if idx.len() > self.len() || (full && idx.len() != self.len()) {
            return Err(CqtError::FamilyMismatch);
        }
        for (n, &j) in idx.iter().enumerate() {
            let m = self.spaces[n].len();
            if j >= m {
                return Err(CqtError::IndexOutOfRange { what: "sample space member", index: j, len: m });
            }
        }
        Ok(())
    }

    /// `Ā = U(t_n,t0)^{-1} [A_n^j] U(t_n,t0)` (zero-based `n`, `j`).
    pub fn heisenberg_projector(&self, n: usize, j: usize) -> Result<&CMatrix> {
        let per_time = self
            .heisenberg
            .get(n)
            .ok_or(CqtError::IndexOutOfRange { what: "time", index: n, len: self.len() })?;
        per_time
            .get(j)
            .ok_or(CqtError::IndexOutOfRange { what: "sample space member", index: j, len: per_time.len() })
    }

    /// Sample space of step `n` in the Heisenberg picture, i.e. members
    /// `Ā_n^j` acting on the initial state.
    pub fn heisenberg_space(&self, n: usize) -> Result<SampleSpace> {
        let per_time = self
            .heisenberg
            .get(n)
            .ok_or(CqtError::IndexOutOfRange { what: "time", index: n, len: self.len() })?;
        let members = per_time
            .iter()
            .zip(self.spaces[n].members())
            .map(|(p, m)| {
                let s = crate::lattice::Subspace::from_projector_unchecked(p);
                debug_assert_eq!(s.rank(), m.rank());
                s
            })
            .collect();
        SampleSpace::new(members)
    }

    fn chain_of_prefix(&self, prefix: &[usize]) -> Result<CMatrix> {
        self.check_prefix(prefix, false)?;
        let mut chain = identity(self.dim());
        for (n, &j) in prefix.iter().enumerate() {
            chain = &self.heisenberg[n][j] * chain;
        }
        Ok(chain)
    }

    /// `Ĉ = Ā_N ⋯ Ā_1`, latest time leftmost.
    pub fn chain_operator(&self, h: &HistoryIndex) -> Result<CMatrix> {
        self.check_prefix(h.as_slice(), true)?;
        self.chain_of_prefix(h.as_slice())
    }

    /// Chain operator of a prefix `(A_1, …, A_n)`; `n = 0` gives the identity.
    pub fn prefix_chain_operator(&self, prefix: &[usize]) -> Result<CMatrix> {
        self.chain_of_prefix(prefix)
    }

    /// `D(C, C') = Tr(ρ₀ Ĉ'† Ĉ)` with `C = h1`, `C' = h2`.
    pub fn decoherence_functional(&self, h1: &HistoryIndex, h2: &HistoryIndex) -> Result<C64> {
        let c1 = self.chain_operator(h1)?;
        let c2 = self.chain_operator(h2)?;
        Ok(self.state.expectation(&(c2.adjoint() * c1)))
    }

    /// `Tr(ρ₀ Ĉ† Ĉ)`, clamped to `[0, 1]`.
    pub fn born_probability(&self, h: &HistoryIndex) -> Result<f64> {
        let ch = self.chain_operator(h)?;
        Ok(self.state.expectation(&(ch.adjoint() * &ch)).re.clamp(0.0, 1.0))
    }

    /// Chain-formula probability of a homogeneous history `(B_1, …, B_N)`
    /// given as per-time member index sets, `Tr(ρ₀ B̂† B̂)` with
    /// `B̂ = B̄_N ⋯ B̄_1`. Equals the sum of its elementary probabilities only
    /// when the interference terms vanish.
    pub fn homogeneous_chain_probability(&self, per_time: &[Vec<usize>]) -> Result<f64> {
        if per_time.len() != self.len() {
            return Err(CqtError::FamilyMismatch);
        }
        let mut chain = identity(self.dim());
        for (n, members) in per_time.iter().enumerate() {
            let mut b = numerics::zeros(self.dim());
            for &j in members {
                b += self.heisenberg_projector(n, j)?;
            }
            chain = b * chain;
        }
        Ok(self.state.expectation(&(chain.adjoint() * &chain)).re)
    }

    /// Conditional projector measure
    /// `Z(B) = Tr(Ĉ_n ρ₀ Ĉ_n† B) / Tr(Ĉ_n ρ₀ Ĉ_n†)` for the prehistory
    /// `prefix` of length `n` (may be empty).
    pub fn conditional_measure(&self, prefix: &[usize], b: &CMatrix) -> Result<f64> {
        if b.nrows() != self.dim() || b.ncols() != self.dim() {
            return Err(CqtError::DimensionMismatch { expected: self.dim(), found: b.nrows() });
        }
        let chain = self.chain_of_prefix(prefix)?;
        let weight = self.state.expectation(&(chain.adjoint() * &chain)).re;
        if weight <= tol::ZERO {
            return Err(CqtError::ZeroProbabilityPrehistory { prefix_len: prefix.len(), weight });
        }
        let num = self.state.expectation(&(chain.adjoint() * b * &chain)).re;
        Ok(num / weight)
    }

    /// State vectors `(p_k, |v_k⟩)` with `ρ₀ = Σ p_k |v_k⟩⟨v_k|`.
    fn ensemble(&self) -> Vec<(f64, Ket)> {
        if let Some(v) = self.state.pure_vector() {
            return vec![(1.0, v.clone())];
        }
        let eig = hermitian_eig(self.state.matrix()).expect("density matrix is Hermitian");
        eig.values
            .into_iter()
            .zip(eig.vectors)
            .filter(|(p, _)| *p > 0.0)
            .collect()
    }
}

/// Consistency verdict of a family in its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    MediumConsistent,
    WeakOnly,
    Inconsistent,
}

impl Verdict {
    /// Process exit code used by the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::MediumConsistent => 0,
            Verdict::WeakOnly => 2,
            Verdict::Inconsistent => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::MediumConsistent => "MediumConsistent",
            Verdict::WeakOnly => "WeakOnly",
            Verdict::Inconsistent => "Inconsistent",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OffDiagonal {
    pub first: HistoryIndex,
    pub second: HistoryIndex,
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
}

/// Full decoherence matrix over the elementary histories of a family.
#[derive(Debug, Clone)]
pub struct DecoherenceReport {
    pub histories: Vec<HistoryIndex>,
    /// `d[(i, j)] = D(h_i, h_j)`.
    pub d: CMatrix,
    pub verdict: Verdict,
    /// Largest violating pair: by `|Re D|` when inconsistent, otherwise by `|D|`.
    pub worst_offdiag: Option<OffDiagonal>,
    pub offdiag_max: f64,
    pub offdiag_re_max: f64,
    pub probabilities: Vec<f64>,
    pub tol: f64,
}

impl DecoherenceReport {
    pub fn probability_of(&self, h: &HistoryIndex) -> Option<f64> {
        self.histories.iter().position(|x| x == h).map(|i| self.probabilities[i])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub tol: f64,
    pub max_histories: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { tol: tol::DEC, max_histories: DEFAULT_MAX_HISTORIES }
    }
}

pub fn classify(fam: &Family) -> Result<DecoherenceReport> {
    classify_with(fam, ClassifyOptions::default())
}

/// Build the decoherence matrix and decide medium / weak / no consistency.
pub fn classify_with(fam: &Family, opts: ClassifyOptions) -> Result<DecoherenceReport> {
    let m = fam.history_count();
    if m > opts.max_histories {
        return Err(CqtError::CapExceeded { histories: m, cap: opts.max_histories });
    }
    let histories = fam.histories();
    let ensemble = fam.ensemble();
    // branch vectors Ĉ_h |v_k⟩
    let branches: Vec<Vec<Ket>> = histories
        .iter()
        .map(|h| {
            let ch = fam.chain_operator(h)?;
            Ok(ensemble.iter().map(|(_, v)| &ch * v).collect())
        })
        .collect::<Result<_>>()?;
    let mut d = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = c(0.0, 0.0);
            for (k, (p, _)) in ensemble.iter().enumerate() {
                acc += branches[j][k].dotc(&branches[i][k]) * *p;
            }
            d[(i, j)] = acc;
            d[(j, i)] = acc.conj();
        }
    }
    for i in 0..m {
        d[(i, i)].im = 0.0;
    }
    let probabilities: Vec<f64> = (0..m).map(|i| d[(i, i)].re.clamp(0.0, 1.0)).collect();

    let mut offdiag_max: f64 = 0.0;
    let mut offdiag_re_max: f64 = 0.0;
    let mut by_abs: Option<(usize, usize)> = None;
    let mut by_re: Option<(usize, usize)> = None;
    for i in 0..m {
        for j in i + 1..m {
            let z = d[(i, j)];
            if z.norm() > offdiag_max {
                offdiag_max = z.norm();
                by_abs = Some((i, j));
            }
            if z.re.abs() > offdiag_re_max {
                offdiag_re_max = z.re.abs();
                by_re = Some((i, j));
            }
        }
    }
    let verdict = if offdiag_max <= opts.tol {
        Verdict::MediumConsistent
    } else if offdiag_re_max <= opts.tol {
        Verdict::WeakOnly
    } else {
        Verdict::Inconsistent
    };
    let worst = if verdict == Verdict::Inconsistent { by_re } else { by_abs };
    let worst_offdiag = worst.map(|(i, j)| OffDiagonal {
        first: histories[i].clone(),
        second: histories[j].clone(),
        re: d[(i, j)].re,
        im: d[(i, j)].im,
        magnitude: d[(i, j)].norm(),
    });
    Ok(DecoherenceReport {
        histories,
        d,
        verdict,
        worst_offdiag,
        offdiag_max,
        offdiag_re_max,
        probabilities,
        tol: opts.tol,
    })
}

/// Set of elementary histories of one family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicEvent {
    counts: Vec<usize>,
    histories: BTreeSet<HistoryIndex>,
}

impl DynamicEvent {
    pub fn new(fam: &Family, histories: impl IntoIterator<Item = HistoryIndex>) -> Result<Self> {
        let histories: BTreeSet<HistoryIndex> = histories.into_iter().collect();
        for h in &histories {
            fam.check_prefix(h.as_slice(), true)?;
        }
        Ok(Self { counts: fam.member_counts(), histories })
    }

    /// Cartesian product `B_1 × … × B_N` of per-time member index sets.
    pub fn homogeneous(fam: &Family, per_time: &[Vec<usize>]) -> Result<Self> {
        if per_time.len() != fam.len() {
            return Err(CqtError::FamilyMismatch);
        }
        let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
        for set in per_time {
            let set: BTreeSet<usize> = set.iter().copied().collect();
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    set.iter().map(move |&j| {
                        let mut p = prefix.clone();
                        p.push(j);
                        p
                    })
                })
                .collect();
        }
        Self::new(fam, acc.into_iter().map(HistoryIndex))
    }

    pub fn histories(&self) -> &BTreeSet<HistoryIndex> {
        &self.histories
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    /// Per-time index projections when the event equals their Cartesian
    /// product; `None` for history complexes and the null event.
    pub fn is_homogeneous(&self) -> Option<Vec<Vec<usize>>> {
        if self.histories.is_empty() {
            return None;
        }
        let n = self.counts.len();
        let projections: Vec<BTreeSet<usize>> = (0..n)
            .map(|k| self.histories.iter().map(|h| h.0[k]).collect())
            .collect();
        let product_size = projections.iter().fold(1usize, |acc, s| acc.saturating_mul(s.len()));
        // every history lies in the product, so equal sizes means equal sets
        (product_size == self.histories.len())
            .then(|| projections.into_iter().map(|s| s.into_iter().collect()).collect())
    }
}

/// Probability of a dynamic event as the sum of its elementary probabilities.
/// Only defined for medium-consistent families.
pub fn event_probability(fam: &Family, e: &DynamicEvent, report: &DecoherenceReport) -> Result<f64> {
    if report.histories.len() != fam.history_count() || e.counts != fam.member_counts() {
        return Err(CqtError::FamilyMismatch);
    }
    if report.verdict != Verdict::MediumConsistent {
        return Err(CqtError::InconsistentFamily { verdict: report.verdict.to_string() });
    }
    if e.is_empty() {
        return Err(CqtError::EmptyEvent);
    }
    e.histories
        .iter()
        .map(|h| {
            let i = fam.position(h)?;
            Ok(report.probabilities[i])
        })
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct SkipNotice {
    pub step: usize,
    pub prefix_probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    pub history: HistoryIndex,
    /// Max `|Z_n(B) - Z_{n-1}(B)/Z_{n-1}(Ā_n)|` over random `B ≤ Ā_n`.
    pub recursion_max_residual: f64,
    /// Max `|Z_n(Ā_n) - 1|`.
    pub self_conditioning_max_residual: f64,
    /// `|P_1 Π Z_n(Ā_{n+1}) - P(C_N)|`; `None` when a prefix was skipped.
    pub telescoping_residual: Option<f64>,
    pub checked: usize,
    pub skipped: Vec<SkipNotice>,
}

#[derive(Debug, Clone, Copy)]
pub struct RecursionOptions {
    pub trials: usize,
    /// Prefixes with probability at or below this are skipped.
    pub min_prefix_probability: f64,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        Self { trials: 8, min_prefix_probability: tol::ZERO }
    }
}

/// Check the conditional-measure recursion and the telescoping product of
/// conditionals along one elementary history.
pub fn verify_recursion<R: Rng + ?Sized>(
    fam: &Family,
    h: &HistoryIndex,
    opts: RecursionOptions,
    rng: &mut R,
) -> Result<RecursionReport> {
    fam.check_prefix(h.as_slice(), true)?;
    let idx = h.as_slice();
    let mut recursion_max_residual: f64 = 0.0;
    let mut self_conditioning_max_residual: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = Vec::new();

    let prefix_weight = |n: usize| -> Result<f64> {
        let chain = fam.prefix_chain_operator(&idx[..n])?;
        Ok(fam.state.expectation(&(chain.adjoint() * &chain)).re)
    };

    for n in 1..=fam.len() {
        let a_n = fam.heisenberg_projector(n - 1, idx[n - 1])?;
        let w_prev = prefix_weight(n - 1)?;
        let w_cur = prefix_weight(n)?;
        if w_prev <= opts.min_prefix_probability || w_cur <= opts.min_prefix_probability {
            skipped.push(SkipNotice { step: n, prefix_probability: w_cur.min(w_prev) });
            continue;
        }
        let z_prev_a = fam.conditional_measure(&idx[..n - 1], a_n)?;
        let z_cur_a = fam.conditional_measure(&idx[..n], a_n)?;
        self_conditioning_max_residual = self_conditioning_max_residual.max((z_cur_a - 1.0).abs());
        let range = crate::lattice::Projector::from_trusted(a_n.clone()).to_subspace();
        for _ in 0..opts.trials {
            let rank = rng.random_range(1..=range.rank());
            let b = random::random_subspace_within(&range, rank, rng);
            let lhs = fam.conditional_measure(&idx[..n], b.projector())?;
            let rhs = fam.conditional_measure(&idx[..n - 1], b.projector())? / z_prev_a;
            recursion_max_residual = recursion_max_residual.max((lhs - rhs).abs());
            checked += 1;
        }
    }

    let telescoping_residual = if skipped.is_empty() {
        let mut product = fam.conditional_measure(&[], fam.heisenberg_projector(0, idx[0])?)?;
        for n in 1..fam.len() {
            product *= fam.conditional_measure(&idx[..n], fam.heisenberg_projector(n, idx[n])?)?;
        }
        let born = fam.state.expectation(&{
            let ch = fam.chain_operator(h)?;
            ch.adjoint() * ch
        });
        Some((product - born.re).abs())
    } else {
        None
    };

    Ok(RecursionReport {
        history: h.clone(),
        recursion_max_residual,
        self_conditioning_max_residual,
        telescoping_residual,
        checked,
        skipped,
    })
}

/// Maximum `|Ā² - Ā|` over all Heisenberg projectors of a family.
pub fn heisenberg_idempotency_residual(fam: &Family) -> f64 {
    fam.heisenberg
        .iter()
        .flatten()
        .map(|p| distance(&(p * p), p))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{spin_half_ray, Subspace};
    use crate::numerics::{basis_ket, ket};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn sx_space() -> SampleSpace {
        SampleSpace::new(vec![spin_half_ray([1.0, 0.0, 0.0], true), spin_half_ray([1.0, 0.0, 0.0], false)]).unwrap()
    }

    fn two_slit() -> Family {
        let psi = ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        Family::new(
            StateDensity::pure(&psi).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2)), (2.0, sx_space())],
        )
        .unwrap()
    }

    #[test]
    fn parse_history_index() {
        assert_eq!(HistoryIndex::parse_one_based("1, 3").unwrap(), HistoryIndex(vec![0, 2]));
        assert!(HistoryIndex::parse_one_based("0,1").is_err());
        assert!(HistoryIndex::parse_one_based("a").is_err());
        assert_eq!(HistoryIndex(vec![0, 2]).to_string(), "(1,3)");
    }

    #[test]
    fn family_validation() {
        let rho = StateDensity::maximally_mixed(2);
        let err = Family::new(rho.clone(), Hamiltonian::zero(2), 1.0, vec![(1.0, SampleSpace::standard(2))]);
        assert!(matches!(err, Err(CqtError::InvalidTimes(_))));
        let err = Family::new(
            rho.clone(),
            Hamiltonian::zero(2),
            0.0,
            vec![(2.0, SampleSpace::standard(2)), (1.0, SampleSpace::standard(2))],
        );
        assert!(matches!(err, Err(CqtError::InvalidTimes(_))));
        let err = Family::new(rho, Hamiltonian::zero(2), 0.0, vec![(1.0, SampleSpace::standard(3))]);
        assert!(matches!(err, Err(CqtError::DimensionMismatch { .. })));
    }

    #[test]
    fn heisenberg_projector_cases() {
        let f = two_slit();
        assert!(distance(f.heisenberg_projector(1, 0).unwrap(), sx_space().members()[0].projector()) < 1e-15);
        assert!(f.heisenberg_projector(2, 0).is_err());
        assert!(f.heisenberg_projector(0, 2).is_err());

        // H = ω σ_z / 2 over t - t0 = π/ω rotates S_x+ into S_x-
        let omega = 1.7;
        let h = CMatrix::from_diagonal(&Ket::from_vec(vec![c(omega / 2.0, 0.0), c(-omega / 2.0, 0.0)]));
        let fam = Family::new(
            StateDensity::pure(&basis_ket(2, 0)).unwrap(),
            Hamiltonian::new(h).unwrap(),
            0.0,
            vec![(PI / omega, sx_space())],
        )
        .unwrap();
        // oracle: explicit conjugation with U = diag(e^{-iπ/2}, e^{iπ/2})
        let u = CMatrix::from_diagonal(&Ket::from_vec(vec![c(0.0, -1.0), c(0.0, 1.0)]));
        let direct = u.adjoint() * sx_space().members()[0].projector() * &u;
        let got = fam.heisenberg_projector(0, 0).unwrap();
        assert!(distance(got, &direct) < 1e-14);
        assert!(distance(got, spin_half_ray([1.0, 0.0, 0.0], false).projector()) < 1e-14);
        assert!(heisenberg_idempotency_residual(&fam) < 1e-10);
    }

    #[test]
    fn chain_operator_cases() {
        let f = two_slit();
        let ch = f.chain_operator(&HistoryIndex(vec![0, 0])).unwrap();
        let expected = sx_space().members()[0].projector() * SampleSpace::standard(2).members()[0].projector();
        assert!(distance(&ch, &expected) < 1e-15);
        assert!(numerics::hermiticity_residual(&ch) > 0.1);

        // repeated identical factors collapse
        let sp = SampleSpace::standard(2);
        let rep = Family::new(
            StateDensity::maximally_mixed(2),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, sp.clone()), (2.0, sp.clone()), (3.0, sp.clone())],
        )
        .unwrap();
        let ch = rep.chain_operator(&HistoryIndex(vec![1, 1, 1])).unwrap();
        assert!(distance(&ch, sp.members()[1].projector()) < 1e-15);
        assert!(f.chain_operator(&HistoryIndex(vec![0])).is_err());
    }

    #[test]
    fn two_slit_decoherence_and_probabilities() {
        let f = two_slit();
        let lp = HistoryIndex(vec![0, 0]);
        let rp = HistoryIndex(vec![1, 0]);
        // oracle: <ψ|[L][+][R]|ψ> = (1/√2)(1/2)(1/√2)
        let d = f.decoherence_functional(&lp, &rp).unwrap();
        assert!((d.re - 0.25).abs() < 1e-15 && d.im.abs() < 1e-15);
        assert!((f.born_probability(&lp).unwrap() - 0.25).abs() < 1e-15);
        assert!((f.born_probability(&rp).unwrap() - 0.25).abs() < 1e-15);
        let diag = f.decoherence_functional(&lp, &lp).unwrap();
        assert!(diag.im.abs() < 1e-15 && (diag.re - 0.25).abs() < 1e-15);

        let report = classify(&f).unwrap();
        assert_eq!(report.verdict, Verdict::Inconsistent);
        let worst = report.worst_offdiag.unwrap();
        assert_eq!((worst.first, worst.second), (lp, rp));
        assert!((worst.re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_final_projectors_do_not_interfere() {
        let f = Family::new(
            StateDensity::pure(&ket(&[0.6, 0.8])).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2))],
        )
        .unwrap();
        let d = f.decoherence_functional(&HistoryIndex(vec![0]), &HistoryIndex(vec![1])).unwrap();
        assert_eq!(d.norm(), 0.0);
        assert_eq!(classify(&f).unwrap().verdict, Verdict::MediumConsistent);
        // history orthogonal to the state
        let g = Family::new(
            StateDensity::pure(&basis_ket(2, 0)).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2))],
        )
        .unwrap();
        assert_eq!(g.born_probability(&HistoryIndex(vec![1])).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity() {
        let s3 = SampleSpace::standard(3);
        let s2 = SampleSpace::new(vec![Subspace::coordinate(3, &[0, 1]).unwrap(), Subspace::coordinate(3, &[2]).unwrap()])
            .unwrap();
        let fam = Family::new(StateDensity::maximally_mixed(3), Hamiltonian::zero(3), 0.0, vec![(1.0, s3), (2.0, s2)])
            .unwrap();
        let single = DynamicEvent::new(&fam, [HistoryIndex(vec![2, 1])]).unwrap();
        assert_eq!(single.is_homogeneous(), Some(vec![vec![2], vec![1]]));
        // {(2,1),(3,1)} one-based
        let e = DynamicEvent::new(&fam, [HistoryIndex(vec![1, 0]), HistoryIndex(vec![2, 0])]).unwrap();
        assert_eq!(e.is_homogeneous(), Some(vec![vec![1, 2], vec![0]]));
        // {(2,1),(3,2)} one-based
        let e = DynamicEvent::new(&fam, [HistoryIndex(vec![1, 0]), HistoryIndex(vec![2, 1])]).unwrap();
        assert_eq!(e.is_homogeneous(), None);
        let full = DynamicEvent::homogeneous(&fam, &[vec![0, 1, 2], vec![0, 1]]).unwrap();
        assert_eq!(full.len(), 6);
        assert!(DynamicEvent::new(&fam, [HistoryIndex(vec![3, 0])]).is_err());
    }

    #[test]
    fn event_probability_requires_consistency() {
        let f = two_slit();
        let report = classify(&f).unwrap();
        let e = DynamicEvent::new(&f, [HistoryIndex(vec![0, 0]), HistoryIndex(vec![1, 0])]).unwrap();
        let err = event_probability(&f, &e, &report).unwrap_err();
        assert!(err.to_string().contains("family is not a framework"));

        let g = Family::new(
            StateDensity::pure(&ket(&[0.6, 0.8])).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2)), (2.0, SampleSpace::standard(2))],
        )
        .unwrap();
        let rep = classify(&g).unwrap();
        assert_eq!(rep.verdict, Verdict::MediumConsistent);
        let single = DynamicEvent::new(&g, [HistoryIndex(vec![1, 1])]).unwrap();
        assert!((event_probability(&g, &single, &rep).unwrap() - 0.64).abs() < 1e-12);
        let all = DynamicEvent::homogeneous(&g, &[vec![0, 1], vec![0, 1]]).unwrap();
        assert!((event_probability(&g, &all, &rep).unwrap() - 1.0).abs() < tol::PROB);
        let union = DynamicEvent::homogeneous(&g, &[vec![0, 1], vec![1]]).unwrap();
        let summed = event_probability(&g, &union, &rep).unwrap();
        let direct = g.homogeneous_chain_probability(&[vec![0, 1], vec![1]]).unwrap();
        assert!((summed - direct).abs() < 1e-12);
        let empty = DynamicEvent::new(&g, []).unwrap();
        assert!(matches!(event_probability(&g, &empty, &rep), Err(CqtError::EmptyEvent)));
    }

    #[test]
    fn conditional_measure_cases() {
        let f = two_slit();
        assert!((f.conditional_measure(&[], &identity(2)).unwrap() - 1.0).abs() < 1e-15);
        let psi_proj = numerics::outer(&ket(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]));
        assert!((f.conditional_measure(&[], &psi_proj).unwrap() - 1.0).abs() < 1e-15);
        let plus = sx_space().members()[0].projector().clone();
        assert!((f.conditional_measure(&[0], &plus).unwrap() - 0.5).abs() < 1e-15);

        let g = Family::new(
            StateDensity::pure(&basis_ket(2, 0)).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2))],
        )
        .unwrap();
        assert!(matches!(
            g.conditional_measure(&[1], &plus),
            Err(CqtError::ZeroProbabilityPrehistory { prefix_len: 1, .. })
        ));
    }

    #[test]
    fn recursion_on_two_slit_and_skip() {
        let f = two_slit();
        let mut rng = random::rng(7);
        let r = verify_recursion(&f, &HistoryIndex(vec![0, 0]), RecursionOptions::default(), &mut rng).unwrap();
        assert!(r.recursion_max_residual < 1e-12);
        assert!(r.self_conditioning_max_residual < 1e-12);
        assert!(r.telescoping_residual.unwrap() < 1e-12);

        let g = Family::new(
            StateDensity::pure(&basis_ket(2, 0)).unwrap(),
            Hamiltonian::zero(2),
            0.0,
            vec![(1.0, SampleSpace::standard(2)), (2.0, sx_space())],
        )
        .unwrap();
        let r = verify_recursion(&g, &HistoryIndex(vec![1, 0]), RecursionOptions::default(), &mut rng).unwrap();
        assert!(!r.skipped.is_empty());
        assert!(r.telescoping_residual.is_none());
    }

    #[test]
    fn single_time_family_is_always_consistent() {
        let mut rng = random::rng(3);
        for _ in 0..10 {
            let fam = random::random_family(
                random::FamilyShape { dim: 4, steps: 1, max_members: 4, pure: false, hamiltonian_scale: 1.0 },
                &mut rng,
            );
            assert_eq!(classify(&fam).unwrap().verdict, Verdict::MediumConsistent);
        }
    }

    #[test]
    fn cap_exceeded() {
        let s = SampleSpace::standard(3);
        let steps = (1..=4).map(|t| (t as f64, s.clone())).collect();
        let fam = Family::new(StateDensity::maximally_mixed(3), Hamiltonian::zero(3), 0.0, steps).unwrap();
        assert_eq!(fam.history_count(), 81);
        assert!(matches!(classify(&fam), Err(CqtError::CapExceeded { histories: 81, cap: 64 })));
    }
}
