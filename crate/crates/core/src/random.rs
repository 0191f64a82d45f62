//! Seeded random instances: Haar-like unitaries, states, projectors, sample
//! spaces and whole families. Generators are plain values owned by the caller.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::framework::{SampleSpace, StateDensity};
use crate::histories::Family;
use crate::lattice::Subspace;
use crate::numerics::{c, CMatrix, Hamiltonian, Ket, C64};

pub type CqtRng = ChaCha8Rng;

pub fn rng(seed: u64) -> CqtRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(rng))
}

pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    let v = Ket::from_fn(dim, |_, _| gaussian_c64(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of `diag(R)` divided out.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(dim, dim, rng);
    (&g + g.adjoint()) * c(0.5 * scale, 0.0)
}

pub fn random_hamiltonian<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Hamiltonian {
    Hamiltonian::new(random_hermitian(dim, scale, rng)).expect("symmetrized matrix is Hermitian")
}

/// Random density matrix of the given rank (rank 1 is a pure state).
pub fn random_density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> StateDensity {
    if rank <= 1 {
        return StateDensity::pure(&random_ket(dim, rng)).expect("normalized ket");
    }
    let g = gaussian_matrix(dim, rank.min(dim), rng);
    let m = &g * g.adjoint();
    let tr = crate::numerics::trace(&m).re;
    StateDensity::new(m.unscale(tr)).expect("Wishart matrix is a valid density")
}

/// Uniformly random subspace of the given rank.
pub fn random_subspace<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> Subspace {
    let u = random_unitary(dim, rng);
    let cols: Vec<Ket> = (0..rank).map(|j| u.column(j).into_owned()).collect();
    Subspace::span(dim, &cols).expect("unitary columns are independent")
}

/// Random subspace contained in `outer`.
pub fn random_subspace_within<R: Rng + ?Sized>(outer_space: &Subspace, rank: usize, rng: &mut R) -> Subspace {
    let k = outer_space.rank();
    let u = random_unitary(k.max(1), rng);
    let basis = outer_space.basis();
    let vectors: Vec<Ket> = (0..rank.min(k))
        .map(|j| {
            let mut v = Ket::zeros(outer_space.dim());
            for (i, b) in basis.iter().enumerate() {
                v += b * u[(i, j)];
            }
            v
        })
        .collect();
    Subspace::span(outer_space.dim(), &vectors).expect("combinations of an orthonormal basis")
}

/// Split `dim` basis directions into `members` nonempty groups.
pub fn random_partition<R: Rng + ?Sized>(dim: usize, members: usize, rng: &mut R) -> Vec<usize> {
    assert!(members >= 1 && members <= dim);
    let mut sizes = vec![1usize; members];
    for _ in members..dim {
        let k = rng.random_range(0..members);
        sizes[k] += 1;
    }
    sizes.shuffle(rng);
    sizes
}

/// Sample space whose members are spanned by consecutive columns of `u`.
pub fn sample_space_from_unitary(u: &CMatrix, sizes: &[usize]) -> SampleSpace {
    let dim = u.nrows();
    let mut start = 0;
    let members = sizes
        .iter()
        .map(|&s| {
            let cols: Vec<Ket> = (start..start + s).map(|j| u.column(j).into_owned()).collect();
            start += s;
            Subspace::span(dim, &cols).expect("unitary columns")
        })
        .collect();
    SampleSpace::new(members).expect("columns of a unitary decompose the identity")
}

pub fn random_sample_space<R: Rng + ?Sized>(dim: usize, members: usize, rng: &mut R) -> SampleSpace {
    let u = random_unitary(dim, rng);
    let sizes = random_partition(dim, members, rng);
    sample_space_from_unitary(&u, &sizes)
}

/// Shape of a random family.
#[derive(Debug, Clone, Copy)]
pub struct FamilyShape {
    pub dim: usize,
    pub steps: usize,
    /// Upper bound on members per time (clamped to `dim`).
    pub max_members: usize,
    pub pure: bool,
    pub hamiltonian_scale: f64,
}

pub fn random_family<R: Rng + ?Sized>(shape: FamilyShape, rng: &mut R) -> Family {
    let dim = shape.dim;
    let state = if shape.pure {
        random_density(dim, 1, rng)
    } else {
        let rank = rng.random_range(2..=dim.max(2));
        random_density(dim, rank, rng)
    };
    let hamiltonian = if shape.hamiltonian_scale == 0.0 {
        Hamiltonian::zero(dim)
    } else {
        random_hamiltonian(dim, shape.hamiltonian_scale, rng)
    };
    let t0 = rng.random_range(-1.0..1.0);
    let mut t = t0;
    let mut steps = Vec::with_capacity(shape.steps);
    for _ in 0..shape.steps {
        t += rng.random_range(0.1..1.5);
        let m = rng.random_range(2..=shape.max_members.min(dim).max(2));
        steps.push((t, random_sample_space(dim, m.min(dim), rng)));
    }
    Family::new(state, hamiltonian, t0, steps).expect("random family is valid")
}
