//! Superoperators on vectorized density matrices.
//!
//! Vectorization convention (the only place it is defined): column-major.
//! The matrix element `ρ_ij` of a `d × d` density matrix sits at index
//! `i + d·j` of the full vector, so `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.
//!
//! A [`SuperBasis`] may retain only a subset of the pairs `(i, j)`, keeping
//! their column-major order. Because every Hamiltonian term conserves
//! `N_tot` and every jump operator shifts it by a fixed amount, the
//! coherence order `N_tot(i) − N_tot(j)` is conserved by the Liouvillian,
//! and the sector of order zero (which contains every density matrix that
//! starts diagonal in `N_tot`) is invariant.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::fock::{HilbertSpace, Operator};
use crate::C64;

const ABSENT: usize = usize::MAX;

/// Retained index pairs `(i, j)` of the vectorized density matrix.
#[derive(Clone, Debug)]
pub struct SuperBasis {
    dim: usize,
    pairs: Vec<(usize, usize)>,
    lookup: Vec<usize>,
    full: bool,
}

impl SuperBasis {
    /// Every pair, column-major.
    pub fn full(dim: usize) -> Arc<Self> {
        Self::filtered(dim, true, |_, _| true)
    }

    /// Pairs with `N_tot(i) − N_tot(j) = order`.
    pub fn coherence_sector(space: &HilbertSpace, order: i64) -> Arc<Self> {
        Self::filtered(space.len(), false, |i, j| {
            space.n_tot(i) as i64 - space.n_tot(j) as i64 == order
        })
    }

    /// The sector that holds states diagonal in `N_tot`. Equals the full basis
    /// on single-block spaces.
    pub fn populations_sector(space: &HilbertSpace) -> Arc<Self> {
        if space.is_single_block() {
            Self::full(space.len())
        } else {
            Self::coherence_sector(space, 0)
        }
    }

    fn filtered(dim: usize, full: bool, keep: impl Fn(usize, usize) -> bool) -> Arc<Self> {
        let mut pairs = Vec::new();
        let mut lookup = vec![ABSENT; dim * dim];
        for j in 0..dim {
            for i in 0..dim {
                if keep(i, j) {
                    lookup[i + dim * j] = pairs.len();
                    pairs.push((i, j));
                }
            }
        }
        let full = full || pairs.len() == dim * dim;
        Arc::new(SuperBasis { dim, pairs, lookup, full })
    }

    /// Hilbert-space dimension `d`.
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        match self.lookup[i + self.dim * j] {
            ABSENT => None,
            p => Some(p),
        }
    }

    /// Retained entries of `m`; fails if `m` has weight outside the sector.
    pub fn vectorize(&self, m: &Array2<C64>) -> Result<Array1<C64>> {
        if m.dim() != (self.dim, self.dim) {
            return Err(Error::SpaceMismatch);
        }
        if !self.full {
            let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
            let mut leak: f64 = 0.0;
            for j in 0..self.dim {
                for i in 0..self.dim {
                    if self.lookup[i + self.dim * j] == ABSENT {
                        leak = leak.max(m[[i, j]].norm());
                    }
                }
            }
            if leak > 1e-12 * scale {
                return Err(Error::SectorLeak(leak));
            }
        }
        Ok(self.pairs.iter().map(|&(i, j)| m[[i, j]]).collect())
    }

    pub fn unvectorize(&self, v: &Array1<C64>) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for (&(i, j), z) in self.pairs.iter().zip(v.iter()) {
            m[[i, j]] = *z;
        }
        m
    }

    /// Row vector `w` with `w · vec(ρ) = Tr ρ`.
    pub fn trace_functional(&self) -> Array1<C64> {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect()
    }

    /// Row vector `w` with `w · vec(ρ) = Tr[Aρ]` (restricted to the sector).
    pub fn expectation_functional(&self, a: &Array2<C64>) -> Array1<C64> {
        // Tr[Aρ] = Σ_ij A_ji ρ_ij
        self.pairs.iter().map(|&(i, j)| a[[j, i]]).collect()
    }
}

/// A Lindblad channel `rate · D[op]`.
#[derive(Clone, Debug)]
pub struct Dissipator {
    pub label: &'static str,
    pub rate: f64,
    pub op: Operator,
}

/// Generator `L(ρ) = i[ρ, H] + Σ rate·D[op]ρ` as a matrix on the retained
/// vectorized entries.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    space: Arc<HilbertSpace>,
    basis: Arc<SuperBasis>,
    matrix: Array2<C64>,
}

impl Liouvillian {
    pub fn from_matrix(space: Arc<HilbertSpace>, basis: Arc<SuperBasis>, matrix: Array2<C64>) -> Result<Self> {
        if basis.hilbert_dim() != space.len() || matrix.dim() != (basis.len(), basis.len()) {
            return Err(Error::SpaceMismatch);
        }
        Ok(Liouvillian { space, basis, matrix })
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn basis(&self) -> &Arc<SuperBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        let v = self.basis.vectorize(rho)?;
        Ok(self.basis.unvectorize(&crate::linalg::matvec(&self.matrix, &v)))
    }

    /// Largest entry of `Tr ∘ L`; zero for a trace-preserving generator.
    pub fn trace_residual(&self) -> f64 {
        let w = self.basis.trace_functional();
        w.dot(&self.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds the generator on the retained `basis`.
pub fn build_liouvillian_in(
    basis: Arc<SuperBasis>,
    h: &Operator,
    dissipators: &[Dissipator],
) -> Result<Liouvillian> {
    let space = h.space().clone();
    if basis.hilbert_dim() != space.len() {
        return Err(Error::SpaceMismatch);
    }
    for d in dissipators {
        if **d.op.space() != *space {
            return Err(Error::SpaceMismatch);
        }
    }
    let hm = h.matrix();
    let active: Vec<(f64, &Array2<C64>, Array2<C64>)> = dissipators
        .iter()
        .filter(|d| d.rate != 0.0)
        .map(|d| {
            let a = d.op.matrix();
            let ada = crate::linalg::dagger(a).dot(a);
            (d.rate, a, ada)
        })
        .collect();

    // Coefficient of ρ_kl in (AρB)_ij is A_ik B_lj. With K = -iH - ½ΣA†A:
    // L = (I ⊗ K) + (K* ⊗ I) + Σ rate · (A* ⊗ A).
    let n = space.len();
    let mut k_eff = hm.mapv(|z| z * C64::new(0.0, -1.0));
    for (rate, _, ada) in &active {
        k_eff = k_eff - ada.mapv(|z| z * (0.5 * rate));
    }
    let k_conj = k_eff.mapv(|z| z.conj());

    let pairs = basis.pairs();
    let dim = pairs.len();
    let mut matrix = Array2::<C64>::zeros((dim, dim));
    for (col, &(k, l)) in pairs.iter().enumerate() {
        // K ρ: rows (i, l) for all i.
        for i in 0..n {
            let z = k_eff[[i, k]];
            if z.norm_sqr() != 0.0 {
                if let Some(row) = basis.position(i, l) {
                    matrix[[row, col]] += z;
                }
            }
        }
        // ρ K†: rows (k, j) for all j, coefficient (K†)_lj = conj(K_jl).
        for j in 0..n {
            let z = k_conj[[j, l]];
            if z.norm_sqr() != 0.0 {
                if let Some(row) = basis.position(k, j) {
                    matrix[[row, col]] += z;
                }
            }
        }
        for (rate, a, _) in &active {
            for i in 0..n {
                let aik = a[[i, k]];
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let ajl = a[[j, l]];
                    if ajl.norm_sqr() == 0.0 {
                        continue;
                    }
                    if let Some(row) = basis.position(i, j) {
                        matrix[[row, col]] += aik * ajl.conj() * *rate;
                    }
                }
            }
        }
    }
    Liouvillian::from_matrix(space, basis, matrix)
}

/// Builds the generator on the full `d² × d²` vectorized space.
pub fn build_liouvillian(h: &Operator, dissipators: &[Dissipator]) -> Result<Liouvillian> {
    build_liouvillian_in(SuperBasis::full(h.space().len()), h, dissipators)
}

/// Matrix of `ρ ↦ Aρ + ρB` on the retained basis. Both terms must map the
/// sector into itself; entries leaving it are dropped.
pub fn left_right_superop(basis: &SuperBasis, a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let n = basis.hilbert_dim();
    let dim = basis.len();
    let mut matrix = Array2::<C64>::zeros((dim, dim));
    for (col, &(k, l)) in basis.pairs().iter().enumerate() {
        for i in 0..n {
            let z = a[[i, k]];
            if z.norm_sqr() != 0.0 {
                if let Some(row) = basis.position(i, l) {
                    matrix[[row, col]] += z;
                }
            }
        }
        for j in 0..n {
            let z = b[[l, j]];
            if z.norm_sqr() != 0.0 {
                if let Some(row) = basis.position(k, j) {
                    matrix[[row, col]] += z;
                }
            }
        }
    }
    matrix
}
