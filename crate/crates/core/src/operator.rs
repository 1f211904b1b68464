//! Dense complex operator algebra.
//!
//! Every Hamiltonian in the crate is a [`HermitianOperator`]: a dense
//! `dim × dim` complex matrix whose Hermiticity was checked when it was
//! built. Generic products such as commutators are plain [`CMatrix`] values
//! since they are anti-Hermitian in general.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative Hermiticity tolerance applied on construction.
pub const HERMITIAN_TOL: f64 = 1e-13;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// A dense Hermitian matrix with a short human-readable label.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
    label: String,
}

impl HermitianOperator {
    /// Wraps `entries` after checking squareness and Hermiticity.
    ///
    /// The check is relative to the largest entry magnitude, and absolute
    /// for the zero matrix.
    pub fn new(entries: CMatrix, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                context: "HermitianOperator::new (square)",
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "operator '{label}' has dimension 0"
            )));
        }
        let deviation = hermitian_deviation(&entries);
        let scale = max_abs(&entries);
        let allowed = if scale > 0.0 { HERMITIAN_TOL * scale } else { HERMITIAN_TOL };
        if !(deviation <= allowed) {
            return Err(Error::NotHermitian { label, deviation });
        }
        Ok(Self { entries, label })
    }

    /// Builds a real symmetric operator from row-major real entries.
    pub fn from_real_rows(rows: &[&[f64]], label: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "HermitianOperator::from_real_rows",
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = C64::new(x, 0.0);
            }
        }
        Self::new(m, label)
    }

    pub fn identity(dim: usize, label: impl Into<String>) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim), label)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Largest |Im a_ij|; zero for operators with real matrix elements.
    pub fn max_imag(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
    }

    pub fn to_json(&self) -> OperatorJson {
        OperatorJson {
            dim: self.dim(),
            entries: self
                .entries
                .transpose()
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
            label: self.label.clone(),
        }
    }

    pub fn from_json(json: &OperatorJson) -> Result<Self> {
        let n = json.dim;
        if n == 0 {
            return Err(Error::Serialization("dim must be at least 1".into()));
        }
        if json.entries.len() != n * n {
            return Err(Error::Serialization(format!(
                "expected {} entries for dim {n}, found {}",
                n * n,
                json.entries.len()
            )));
        }
        if json.entries.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Serialization("non-finite matrix entry".into()));
        }
        let m = CMatrix::from_row_iterator(
            n,
            n,
            json.entries.iter().map(|&[re, im]| C64::new(re, im)),
        );
        Self::new(m, json.label.clone())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("operator JSON is always serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: OperatorJson =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        Self::from_json(&json)
    }
}

/// Structured text form of an operator: row-major `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
    pub label: String,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `AB − BA`, computed without any symmetrization.
pub fn commutator(a: &HermitianOperator, b: &HermitianOperator) -> Result<CMatrix> {
    commutator_matrices(a.matrix(), b.matrix())
}

pub fn commutator_matrices(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "commutator",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(a * b - b * a)
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian operator.
///
/// Eigenvalues are ascending. Each eigenvector column is rotated so that its
/// largest-magnitude entry is real and positive (ties resolved towards the
/// lowest row index), which makes the output reproducible bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    /// Smallest distance between consecutive eigenvalues (infinite for dim 1).
    pub fn min_gap(&self) -> f64 {
        self.values
            .as_slice()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// `V diag(f(λ)) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            for r in 0..n {
                scaled[(r, k)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eigensystem(a: &HermitianOperator) -> Result<Eigensystem> {
    eigensystem_of_matrix(a.matrix(), a.label())
}

/// As [`hermitian_eigensystem`] for a matrix already known to be Hermitian.
pub(crate) fn eigensystem_of_matrix(m: &CMatrix, label: &str) -> Result<Eigensystem> {
    let n = m.nrows();
    if n == 1 {
        return Ok(Eigensystem {
            values: DVector::from_element(1, m[(0, 0)].re),
            vectors: CMatrix::identity(1, 1),
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::EigenNoConvergence { label: label.to_string() })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let norm = col.norm();
        let max_mag = col.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
        let pivot = col
            .iter()
            .position(|z| z.norm() >= max_mag * (1.0 - 1e-12))
            .unwrap_or(0);
        let phase = col[pivot].conj() / col[pivot].norm();
        for r in 0..n {
            vectors[(r, dst)] = col[r] * phase / norm;
        }
        vectors[(pivot, dst)] = C64::new(vectors[(pivot, dst)].norm(), 0.0);
    }
    Ok(Eigensystem { values, vectors })
}

/// `exp(−i H dt)` for Hermitian `H`, via its eigen-decomposition.
pub fn unitary_step(h: &HermitianOperator, dt: f64) -> Result<CMatrix> {
    unitary_step_matrix(h.matrix(), dt, h.label())
}

pub(crate) fn unitary_step_matrix(h: &CMatrix, dt: f64, label: &str) -> Result<CMatrix> {
    let eig = eigensystem_of_matrix(h, label)?;
    Ok(eig.map_spectrum(|lambda| C64::from_polar(1.0, -lambda * dt)))
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    frobenius_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Pauli matrices, handy in tests and small examples.
pub mod pauli {
    use super::{CMatrix, C64};

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])
    }
}
