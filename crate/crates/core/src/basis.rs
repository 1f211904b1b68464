//! Spin-1/2 ⊗ truncated boson product spaces and their elementary operators.
//!
//! Basis states are enumerated boson-occupation major: index
//! `n · 2^{N_s} + bits`, where bit `j` of `bits` set means spin `j` is up.
//! The boson mode is truncated at occupation `n_max`, so `[a, a†] = 1` holds
//! on every occupation below the cutoff and fails on the top row only.

use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64};

pub const DEFAULT_DIM_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinBosonBasis {
    n_spins: usize,
    boson_cutoff: usize,
}

impl SpinBosonBasis {
    pub fn new(n_spins: usize, boson_cutoff: usize) -> Self {
        Self { n_spins, boson_cutoff }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Highest boson occupation kept; 0 means no boson mode.
    pub fn boson_cutoff(&self) -> usize {
        self.boson_cutoff
    }

    pub fn spin_dim(&self) -> usize {
        1usize << self.n_spins
    }

    pub fn dim(&self) -> usize {
        (self.boson_cutoff + 1) * self.spin_dim()
    }

    pub fn index(&self, occupation: usize, spin_bits: usize) -> usize {
        debug_assert!(occupation <= self.boson_cutoff && spin_bits < self.spin_dim());
        occupation * self.spin_dim() + spin_bits
    }

    /// Inverse of [`SpinBosonBasis::index`].
    pub fn state(&self, index: usize) -> (usize, usize) {
        (index / self.spin_dim(), index % self.spin_dim())
    }

    pub fn spin_up(&self, index: usize, spin: usize) -> bool {
        (self.state(index).1 >> spin) & 1 == 1
    }

    /// Boson occupation plus the number of up spins.
    pub fn excitations(&self, index: usize) -> usize {
        let (n, bits) = self.state(index);
        n + bits.count_ones() as usize
    }

    /// Label such as `2;ud` (two bosons, spin 0 up, spin 1 down).
    pub fn label(&self, index: usize) -> String {
        let (n, bits) = self.state(index);
        let spins: String = (0..self.n_spins)
            .map(|j| if (bits >> j) & 1 == 1 { 'u' } else { 'd' })
            .collect();
        if self.boson_cutoff == 0 {
            spins
        } else if self.n_spins == 0 {
            n.to_string()
        } else {
            format!("{n};{spins}")
        }
    }
}

/// Cached elementary operators on a [`SpinBosonBasis`].
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub basis: SpinBosonBasis,
    pub s_z: Vec<CMatrix>,
    pub s_plus: Vec<CMatrix>,
    pub s_minus: Vec<CMatrix>,
    pub a: CMatrix,
    pub a_dagger: CMatrix,
    pub identity: CMatrix,
}

impl OperatorBundle {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn number(&self) -> CMatrix {
        &self.a_dagger * &self.a
    }

    /// `s_j · s_k = s^z_j s^z_k + (s^+_j s^-_k + s^-_j s^+_k)/2`.
    pub fn spin_dot(&self, j: usize, k: usize) -> CMatrix {
        &self.s_z[j] * &self.s_z[k]
            + (&self.s_plus[j] * &self.s_minus[k] + &self.s_minus[j] * &self.s_plus[k]) * C64::new(0.5, 0.0)
    }

    pub fn total_s_z(&self) -> CMatrix {
        self.s_z.iter().fold(CMatrix::zeros(self.dim(), self.dim()), |acc, m| acc + m)
    }
}

pub fn build_spin_boson_bundle(n_spins: usize, boson_cutoff: usize) -> Result<OperatorBundle> {
    build_spin_boson_bundle_with_limit(n_spins, boson_cutoff, DEFAULT_DIM_LIMIT)
}

pub fn build_spin_boson_bundle_with_limit(
    n_spins: usize,
    boson_cutoff: usize,
    limit: usize,
) -> Result<OperatorBundle> {
    let requested = (boson_cutoff as u128 + 1)
        .checked_mul(1u128.checked_shl(n_spins as u32).unwrap_or(u128::MAX))
        .unwrap_or(u128::MAX);
    if n_spins >= 64 || requested > limit as u128 {
        return Err(Error::ResourceLimit {
            requested: requested.min(usize::MAX as u128) as usize,
            limit,
        });
    }
    let basis = SpinBosonBasis::new(n_spins, boson_cutoff);
    let dim = basis.dim();
    let one = C64::new(1.0, 0.0);

    let mut s_z = Vec::with_capacity(n_spins);
    let mut s_plus = Vec::with_capacity(n_spins);
    let mut s_minus = Vec::with_capacity(n_spins);
    for j in 0..n_spins {
        let mut z = CMatrix::zeros(dim, dim);
        let mut plus = CMatrix::zeros(dim, dim);
        for idx in 0..dim {
            if basis.spin_up(idx, j) {
                z[(idx, idx)] = C64::new(0.5, 0.0);
            } else {
                z[(idx, idx)] = C64::new(-0.5, 0.0);
                plus[(idx | (1 << j), idx)] = one;
            }
        }
        s_minus.push(plus.transpose());
        s_plus.push(plus);
        s_z.push(z);
    }

    let mut a = CMatrix::zeros(dim, dim);
    for idx in 0..dim {
        let (n, bits) = basis.state(idx);
        if n > 0 {
            a[(basis.index(n - 1, bits), idx)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let a_dagger = a.transpose();

    Ok(OperatorBundle {
        basis,
        s_z,
        s_plus,
        s_minus,
        a,
        a_dagger,
        identity: CMatrix::identity(dim, dim),
    })
}

/// Restricts `m` to the basis states listed in `keep` (in that order).
pub fn restrict(m: &CMatrix, keep: &[usize]) -> CMatrix {
    CMatrix::from_fn(keep.len(), keep.len(), |r, c| m[(keep[r], keep[c])])
}
