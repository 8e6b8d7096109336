use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Liouvillian;
use crate::C64;

/// Condition number of the eigenvector matrix above which the spectral
/// route is abandoned for dense matrix exponentials.
pub const CONDITION_LIMIT: f64 = 1e9;

/// Eigendecomposition `L = V diag(λ) V⁻¹` of a Liouvillian matrix.
#[derive(Clone, Debug)]
pub struct Spectral {
    values: Array1<C64>,
    right: Array2<C64>,
    left: Array2<C64>,
    condition: f64,
}

impl Spectral {
    pub fn new(matrix: &Array2<C64>) -> Result<Self> {
        let (values, right) = matrix.eig().map_err(|e| Error::linalg("eig", e))?;
        let left = right.inv().map_err(|e| Error::linalg("eigenvector inverse", e))?;
        let condition = linalg::one_norm(&right) * linalg::one_norm(&left);
        if !condition.is_finite() || values.iter().any(|z| !z.is_finite()) {
            return Err(Error::linalg("eig", "non-finite eigendecomposition"));
        }
        Ok(Spectral { values, right, left, condition })
    }

    pub fn values(&self) -> &Array1<C64> {
        &self.values
    }

    /// Columns are right eigenvectors.
    pub fn right(&self) -> &Array2<C64> {
        &self.right
    }

    /// Rows are left eigenvectors (`V⁻¹`).
    pub fn left(&self) -> &Array2<C64> {
        &self.left
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn max_real_part(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Eigenbasis coefficients `V⁻¹ v`.
    pub fn coefficients(&self, v: &Array1<C64>) -> Array1<C64> {
        linalg::matvec(&self.left, v)
    }

    /// `V (e^{λt} ⊙ c)`.
    pub fn reconstruct(&self, coeffs: &Array1<C64>, t: f64) -> Array1<C64> {
        let scaled: Array1<C64> = coeffs
            .iter()
            .zip(self.values.iter())
            .map(|(c, l)| c * (l * t).exp())
            .collect();
        linalg::matvec(&self.right, &scaled)
    }

    pub fn apply(&self, v: &Array1<C64>, t: f64) -> Array1<C64> {
        self.reconstruct(&self.coefficients(v), t)
    }
}

/// How a time-independent generator is exponentiated.
#[derive(Clone, Debug)]
pub enum Propagator {
    Spectral(Spectral),
    /// Fallback for defective or ill-conditioned generators: a fresh Padé
    /// matrix exponential per step.
    Dense(Array2<C64>),
}

impl Propagator {
    pub fn new(l: &Liouvillian) -> Self {
        Self::from_matrix(l.matrix())
    }

    pub fn from_matrix(matrix: &Array2<C64>) -> Self {
        match Spectral::new(matrix) {
            Ok(s) if s.condition() <= CONDITION_LIMIT => Propagator::Spectral(s),
            _ => Propagator::Dense(matrix.clone()),
        }
    }

    pub fn method(&self) -> PropagationMethod {
        match self {
            Propagator::Spectral(_) => PropagationMethod::Spectral,
            Propagator::Dense(_) => PropagationMethod::DenseExpm,
        }
    }

    pub fn apply(&self, v: &Array1<C64>, t: f64) -> Result<Array1<C64>> {
        match self {
            Propagator::Spectral(s) => Ok(s.apply(v, t)),
            Propagator::Dense(m) => Ok(linalg::matvec(&linalg::expm(&m.mapv(|z| z * t))?, v)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropagationMethod {
    Spectral,
    DenseExpm,
}

impl std::fmt::Display for PropagationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PropagationMethod::Spectral => "spectral",
            PropagationMethod::DenseExpm => "dense-expm",
        })
    }
}
