//! Truncated Fock spaces for the three bosonic modes (primary cavity mode
//! `c₊`, auxiliary cavity mode `c₋`, mechanics `b`) and dense operators on
//! them.
//!
//! The retained basis is enumerated lexicographically in `(n₊, n₋, n_b)`.
//! Truncation is projective: a ladder-operator matrix element whose target
//! state is not retained is dropped.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Plus,
    Minus,
    Mech,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Plus, Mode::Minus, Mode::Mech];

    pub fn index(self) -> usize {
        match self {
            Mode::Plus => 0,
            Mode::Minus => 1,
            Mode::Mech => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Plus => "plus",
            Mode::Minus => "minus",
            Mode::Mech => "mech",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" => Ok(Mode::Plus),
            "minus" => Ok(Mode::Minus),
            "mech" => Ok(Mode::Mech),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A single ladder factor in a normal-ordered monomial.
#[derive(Clone, Copy, Debug)]
pub enum Ladder {
    Create(Mode),
    Destroy(Mode),
}

/// Occupations `(n₊, n₋, n_b)` of one product basis state.
pub type Occupation = [usize; 3];

/// Product Fock basis with per-mode cutoffs and an optional window on the
/// total excitation number `N_tot = n₋ + n_b`.
#[derive(Clone, Debug)]
pub struct HilbertSpace {
    dims: [usize; 3],
    n_tot_min: usize,
    n_tot_max: Option<usize>,
    basis: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
    undersized_for_cap: bool,
}

impl PartialEq for HilbertSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.n_tot_min == other.n_tot_min
            && self.n_tot_max == other.n_tot_max
    }
}

impl HilbertSpace {
    /// Space with cutoffs `dims` (occupation `0..d` per mode) and an optional
    /// cap `n₋ + n_b ≤ n_tot_max`.
    pub fn new(dims: [usize; 3], n_tot_max: Option<usize>) -> Result<Arc<Self>> {
        Self::with_window(dims, 0, n_tot_max)
    }

    /// The sector `N_tot = n_tot` exactly, with `plus_dim` primary-mode levels.
    /// Modes `c₋` and `b` are sized so that no state of the sector is lost.
    pub fn excitation_block(plus_dim: usize, n_tot: usize) -> Result<Arc<Self>> {
        Self::with_window([plus_dim, n_tot + 1, n_tot + 1], n_tot, Some(n_tot))
    }

    fn with_window(dims: [usize; 3], n_tot_min: usize, n_tot_max: Option<usize>) -> Result<Arc<Self>> {
        for (mode, &d) in Mode::ALL.iter().zip(dims.iter()) {
            if d == 0 {
                return Err(Error::InvalidDimension(format!(
                    "mode {mode} has cutoff 0; every mode needs at least one level"
                )));
            }
        }
        if let Some(cap) = n_tot_max {
            if cap < n_tot_min {
                return Err(Error::InvalidDimension(format!(
                    "excitation window [{n_tot_min}, {cap}] is empty"
                )));
            }
        }
        let undersized_for_cap = n_tot_max.is_some_and(|cap| dims[1] < cap + 1 || dims[2] < cap + 1);

        let mut basis = Vec::new();
        for np in 0..dims[0] {
            for nm in 0..dims[1] {
                for nb in 0..dims[2] {
                    let n_tot = nm + nb;
                    if n_tot < n_tot_min || n_tot_max.is_some_and(|cap| n_tot > cap) {
                        continue;
                    }
                    basis.push([np, nm, nb]);
                }
            }
        }
        if basis.is_empty() {
            return Err(Error::InvalidDimension("no basis state satisfies the truncation".into()));
        }
        let index = basis.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Arc::new(HilbertSpace { dims, n_tot_min, n_tot_max, basis, index, undersized_for_cap }))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn n_tot_max(&self) -> Option<usize> {
        self.n_tot_max
    }

    pub fn n_tot_min(&self) -> usize {
        self.n_tot_min
    }

    /// True when a mode cutoff is smaller than the excitation cap allows, so
    /// the cap is not the binding truncation for that mode.
    pub fn undersized_for_cap(&self) -> bool {
        self.undersized_for_cap
    }

    /// True when only a single `N_tot` value is retained.
    pub fn is_single_block(&self) -> bool {
        self.n_tot_max == Some(self.n_tot_min)
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[Occupation] {
        &self.basis
    }

    pub fn state(&self, index: usize) -> Occupation {
        self.basis[index]
    }

    pub fn index_of(&self, occ: Occupation) -> Option<usize> {
        self.index.get(&occ).copied()
    }

    pub fn n_tot(&self, index: usize) -> usize {
        let s = self.basis[index];
        s[1] + s[2]
    }

    pub fn mode_labels(&self) -> [&'static str; 3] {
        [Mode::Plus.label(), Mode::Minus.label(), Mode::Mech.label()]
    }
}

/// Dense operator on a [`HilbertSpace`].
#[derive(Clone, Debug)]
pub struct Operator {
    space: Arc<HilbertSpace>,
    matrix: Array2<C64>,
}

impl Operator {
    pub fn new(space: Arc<HilbertSpace>, matrix: Array2<C64>) -> Result<Self> {
        let n = space.len();
        if matrix.dim() != (n, n) {
            return Err(Error::InvalidDimension(format!(
                "matrix is {:?} but the basis has {n} states",
                matrix.dim()
            )));
        }
        Ok(Operator { space, matrix })
    }

    pub fn zeros(space: &Arc<HilbertSpace>) -> Self {
        let n = space.len();
        Operator { space: space.clone(), matrix: Array2::zeros((n, n)) }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Operator { space: self.space.clone(), matrix: linalg::dagger(&self.matrix) }
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        let f = factor.into();
        Operator { space: self.space.clone(), matrix: self.matrix.mapv(|z| z * f) }
    }

    fn check_space(&self, other: &Operator) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    pub fn try_add(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: self.matrix.dot(&other.matrix) })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        let ab = self.matrix.dot(&other.matrix);
        let ba = other.matrix.dot(&self.matrix);
        Ok(Operator { space: self.space.clone(), matrix: ab - ba })
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.matrix)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }
}

// Operator arithmetic panics on mismatched spaces; use the `try_` forms when
// the spaces are not known to agree.
impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator spaces differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.try_add(&rhs.scale(-1.0)).expect("operator spaces differ")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator spaces differ")
    }
}

/// Normal-ordered product of ladder operators, written left to right and
/// applied right to left on the unbounded Fock lattice; only the final state
/// is projected onto the retained basis.
pub fn ladder_monomial(space: &Arc<HilbertSpace>, factors: &[Ladder]) -> Operator {
    let n = space.len();
    let mut matrix = Array2::zeros((n, n));
    'states: for (col, occ) in space.basis().iter().enumerate() {
        let mut state = occ.map(|x| x as i64);
        let mut amp = 1.0;
        for factor in factors.iter().rev() {
            match *factor {
                Ladder::Destroy(m) => {
                    let k = state[m.index()];
                    if k == 0 {
                        continue 'states;
                    }
                    amp *= (k as f64).sqrt();
                    state[m.index()] -= 1;
                }
                Ladder::Create(m) => {
                    state[m.index()] += 1;
                    amp *= (state[m.index()] as f64).sqrt();
                }
            }
        }
        let target = state.map(|x| x as usize);
        if let Some(row) = space.index_of(target) {
            matrix[[row, col]] = C64::new(amp, 0.0);
        }
    }
    Operator { space: space.clone(), matrix }
}

pub fn annihilator(space: &Arc<HilbertSpace>, mode: Mode) -> Operator {
    ladder_monomial(space, &[Ladder::Destroy(mode)])
}

/// Same as [`annihilator`] with the mode given by label.
pub fn annihilator_by_label(space: &Arc<HilbertSpace>, label: &str) -> Result<Operator> {
    Ok(annihilator(space, label.parse()?))
}

pub fn creator(space: &Arc<HilbertSpace>, mode: Mode) -> Operator {
    ladder_monomial(space, &[Ladder::Create(mode)])
}

pub fn number_op(space: &Arc<HilbertSpace>, mode: Mode) -> Operator {
    let n = space.len();
    let mut matrix = Array2::zeros((n, n));
    for (i, occ) in space.basis().iter().enumerate() {
        matrix[[i, i]] = C64::new(occ[mode.index()] as f64, 0.0);
    }
    Operator { space: space.clone(), matrix }
}

pub fn identity(space: &Arc<HilbertSpace>) -> Operator {
    let n = space.len();
    Operator { space: space.clone(), matrix: Array2::eye(n) }
}

/// `N_tot = c₋†c₋ + b†b`.
pub fn n_tot_op(space: &Arc<HilbertSpace>) -> Operator {
    &number_op(space, Mode::Minus) + &number_op(space, Mode::Mech)
}

/// Pure Fock-state projector `|n₊, n₋, n_b⟩⟨n₊, n₋, n_b|`.
pub fn fock_state(space: &Arc<HilbertSpace>, occupations: Occupation) -> Result<DensityMatrix> {
    let idx = space.index_of(occupations).ok_or(Error::OutsideBasis(occupations))?;
    let n = space.len();
    let mut matrix = Array2::zeros((n, n));
    matrix[[idx, idx]] = C64::new(1.0, 0.0);
    Ok(DensityMatrix { space: space.clone(), matrix })
}

/// Density matrix; construction through [`DensityMatrix::new`] checks the
/// Hermiticity, trace and positivity invariants.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: Arc<HilbertSpace>,
    matrix: Array2<C64>,
}

impl DensityMatrix {
    pub const DEFAULT_TOL: f64 = 1e-12;

    pub fn new(space: Arc<HilbertSpace>, matrix: Array2<C64>, tol: f64) -> Result<Self> {
        let rho = Self::new_unchecked(space, matrix)?;
        rho.validate(tol)?;
        Ok(rho)
    }

    /// Wraps a matrix without checking the state invariants. Shape is still
    /// checked.
    pub fn new_unchecked(space: Arc<HilbertSpace>, matrix: Array2<C64>) -> Result<Self> {
        let op = Operator::new(space, matrix)?;
        Ok(DensityMatrix { space: op.space, matrix: op.matrix })
    }

    /// Maximally mixed state on the retained basis.
    pub fn maximally_mixed(space: &Arc<HilbertSpace>) -> Self {
        let n = space.len();
        let matrix = Array2::eye(n).mapv(|z: C64| z / n as f64);
        DensityMatrix { space: space.clone(), matrix }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = linalg::hermiticity_error(&self.matrix);
        if herm > tol {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::InvalidState(format!("trace is {tr} rather than 1")));
        }
        let min_eig = self.min_eigenvalue()?;
        if min_eig < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let vals = linalg::hermitian_eigenvalues(&self.matrix)?;
        Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ.
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn as_operator(&self) -> Operator {
        Operator { space: self.space.clone(), matrix: self.matrix.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(HilbertSpace::new([3, 7, 7], Some(6)).unwrap().len(), 84);
        assert_eq!(HilbertSpace::new([1, 1, 1], None).unwrap().len(), 1);
        assert_eq!(HilbertSpace::new([2, 2, 2], Some(1)).unwrap().len(), 6);
        assert_eq!(HilbertSpace::excitation_block(3, 2).unwrap().len(), 9);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(HilbertSpace::new([0, 2, 2], None), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn undersized_cap_is_flagged() {
        assert!(HilbertSpace::new([3, 4, 7], Some(6)).unwrap().undersized_for_cap());
        assert!(!HilbertSpace::new([3, 7, 7], Some(6)).unwrap().undersized_for_cap());
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let space = HilbertSpace::new([2, 2, 2], Some(1)).unwrap();
        let expected = [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0], [1, 0, 1], [1, 1, 0]];
        assert_eq!(space.basis(), &expected);
        for (i, s) in expected.iter().enumerate() {
            assert_eq!(space.index_of(*s), Some(i));
        }
    }

    #[test]
    fn ladder_elements() {
        let space = HilbertSpace::new([1, 1, 2], None).unwrap();
        let b = annihilator(&space, Mode::Mech);
        let one = space.index_of([0, 0, 1]).unwrap();
        let vac = space.index_of([0, 0, 0]).unwrap();
        assert_eq!(b.matrix()[[vac, one]], c(1.0));

        let single = HilbertSpace::new([4, 1, 1], None).unwrap();
        let a = annihilator(&single, Mode::Plus);
        assert!((a.matrix()[[2, 3]] - c(3f64.sqrt())).norm() < 1e-15);

        let space = HilbertSpace::new([3, 3, 3], None).unwrap();
        let vac = space.index_of([0, 0, 0]).unwrap();
        for mode in Mode::ALL {
            let a = annihilator(&space, mode);
            assert!(a.matrix().column(vac).iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn unknown_label_is_an_error() {
        let space = HilbertSpace::new([2, 2, 2], None).unwrap();
        assert!(matches!(annihilator_by_label(&space, "aux"), Err(Error::UnknownMode(_))));
        assert!(annihilator_by_label(&space, "mech").is_ok());
    }

    #[test]
    fn canonical_commutator_below_top_rung() {
        let space = HilbertSpace::new([3, 4, 5], None).unwrap();
        for mode in Mode::ALL {
            let a = annihilator(&space, mode);
            let comm = a.commutator(&a.dagger()).unwrap();
            let top = space.dims()[mode.index()] - 1;
            for (i, occ) in space.basis().iter().enumerate() {
                for j in 0..space.len() {
                    let want = if i == j && occ[mode.index()] < top { 1.0 } else if i == j { -(top as f64) } else { 0.0 };
                    assert!((comm.matrix()[[i, j]] - c(want)).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn distinct_modes_commute() {
        let space = HilbertSpace::new([3, 3, 3], Some(4)).unwrap();
        for (i, &m1) in Mode::ALL.iter().enumerate() {
            for &m2 in &Mode::ALL[i + 1..] {
                let a = annihilator(&space, m1);
                let b = annihilator(&space, m2);
                assert!(linalg::max_abs(a.commutator(&b).unwrap().matrix()) < 1e-14);
                assert!(linalg::max_abs(a.commutator(&b.dagger()).unwrap().matrix()) < 1e-14);
            }
        }
    }

    #[test]
    fn number_and_total_operators() {
        let space = HilbertSpace::new([3, 7, 7], Some(6)).unwrap();
        let n_b = number_op(&space, Mode::Mech);
        let idx = space.index_of([0, 0, 2]).unwrap();
        assert_eq!(n_b.matrix()[[idx, idx]], c(2.0));
        assert_eq!(identity(&space).trace(), c(84.0));
        let ntot = n_tot_op(&space);
        for (i, occ) in space.basis().iter().enumerate() {
            assert_eq!(ntot.matrix()[[i, i]], c((occ[1] + occ[2]) as f64));
        }
        assert!(linalg::max_abs(ntot.commutator(&identity(&space)).unwrap().matrix()) == 0.0);
    }

    #[test]
    fn fock_states() {
        let space = HilbertSpace::new([3, 7, 7], Some(6)).unwrap();
        let rho = fock_state(&space, [0, 0, 1]).unwrap();
        rho.validate(1e-12).unwrap();
        let nb = number_op(&space, Mode::Mech);
        assert!((nb.matrix().dot(rho.matrix()).diag().sum() - c(1.0)).norm() < 1e-15);
        assert!((rho.purity() - 1.0).abs() < 1e-15);
        let vac = fock_state(&space, [0, 0, 0]).unwrap();
        assert_eq!(n_tot_op(&space).matrix().dot(vac.matrix()).diag().sum(), c(0.0));
        assert!(matches!(fock_state(&space, [0, 0, 7]), Err(Error::OutsideBasis(_))));
    }

    #[test]
    fn block_space_bilinears_are_exact() {
        // b†c₋ inside a single excitation block must not vanish even though
        // c₋ alone leaves the block.
        let space = HilbertSpace::excitation_block(1, 1).unwrap();
        let jp = ladder_monomial(&space, &[Ladder::Create(Mode::Mech), Ladder::Destroy(Mode::Minus)]);
        let from = space.index_of([0, 1, 0]).unwrap();
        let to = space.index_of([0, 0, 1]).unwrap();
        assert_eq!(jp.matrix()[[to, from]], c(1.0));
        assert!(linalg::max_abs(annihilator(&space, Mode::Minus).matrix()) == 0.0);
    }
}
