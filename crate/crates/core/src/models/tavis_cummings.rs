//! Generalized Tavis-Cummings model and its Gaudin-type commuting partners.
//!
//! Coordinates are `x = (ω, ε₁, …, ε_{N_s})`:
//!
//! ```text
//! Ĥ_TC = Σ_j ε_j ŝ^z_j − ω â†â + g Σ_j (â† ŝ⁻_j + â ŝ⁺_j)
//! Ĥ_j  = (ε_j + ω) ŝ^z_j + g (â† ŝ⁻_j + â ŝ⁺_j) + 2g² Σ_{k≠j} ŝ_j·ŝ_k / (ε_j − ε_k)
//! ```
//!
//! All generators conserve the excitation number `â†â + Σ_j (ŝ^z_j + 1/2)`.
//! The boson cutoff only distorts sectors with more than `n_max`
//! excitations, so by default the family lives on the sectors
//! `0..=n_max`, where truncation is exact.

use serde::{Deserialize, Serialize};

use crate::basis::{build_spin_boson_bundle, restrict, OperatorBundle};
use crate::error::{Error, Result};
use crate::family::{HamiltonianFamily, ParamPoint};
use crate::operator::{CMatrix, HermitianOperator, C64};

/// Minimum separation of the ε's before the pairwise terms are rejected.
pub const EPSILON_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcParams {
    pub epsilons: Vec<f64>,
    pub g: f64,
    pub boson_cutoff: usize,
}

impl TcParams {
    pub fn n_spins(&self) -> usize {
        self.epsilons.len()
    }

    /// ε strictly decreasing, distinct by more than [`EPSILON_SEPARATION`].
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("Tavis-Cummings model needs at least one spin".into()));
        }
        if !self.g.is_finite() || self.epsilons.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("Tavis-Cummings parameters must be finite".into()));
        }
        for w in self.epsilons.windows(2) {
            if !(w[0] - w[1] > EPSILON_SEPARATION) {
                return Err(Error::InvalidParameter(format!(
                    "epsilons must be strictly decreasing and distinct (got {:?})",
                    self.epsilons
                )));
            }
        }
        Ok(())
    }
}

/// Which excitation sectors the family is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TcSector {
    /// Every sector with at most `n_max` excitations.
    TruncationExact,
    /// A single sector with exactly this many excitations.
    Excitations(usize),
    /// The whole truncated product space, cutoff artifacts included.
    Full,
}

#[derive(Debug, Clone)]
pub struct TavisCummingsFamily {
    params: TcParams,
    keep: Vec<usize>,
    labels: Vec<String>,
    s_z: Vec<CMatrix>,
    hop: Vec<CMatrix>,
    dots: Vec<Vec<CMatrix>>,
    number: CMatrix,
    excitation: CMatrix,
}

pub fn tavis_cummings_family(params: TcParams) -> Result<TavisCummingsFamily> {
    TavisCummingsFamily::new(params, TcSector::TruncationExact)
}

impl TavisCummingsFamily {
    pub fn new(params: TcParams, sector: TcSector) -> Result<Self> {
        params.validate()?;
        let n = params.n_spins();
        let bundle = build_spin_boson_bundle(n, params.boson_cutoff)?;
        let basis = bundle.basis;
        let keep: Vec<usize> = (0..basis.dim())
            .filter(|&i| match sector {
                TcSector::TruncationExact => basis.excitations(i) <= params.boson_cutoff,
                TcSector::Excitations(k) => basis.excitations(i) == k,
                TcSector::Full => true,
            })
            .collect();
        if let TcSector::Excitations(k) = sector {
            if k > params.boson_cutoff {
                return Err(Error::InvalidParameter(format!(
                    "sector with {k} excitations is distorted by boson cutoff {}",
                    params.boson_cutoff
                )));
            }
        }
        let r = |m: &CMatrix| restrict(m, &keep);
        let hop_full = |j: usize| &bundle.a_dagger * &bundle.s_minus[j] + &bundle.a * &bundle.s_plus[j];
        let s_z = bundle.s_z.iter().map(r).collect();
        let hop = (0..n).map(|j| r(&hop_full(j))).collect();
        let dots = (0..n)
            .map(|j| (0..n).map(|k| if j == k { CMatrix::zeros(keep.len(), keep.len()) } else { r(&bundle.spin_dot(j, k)) }).collect())
            .collect();
        let number = r(&bundle.number());
        let excitation = r(&excitation_operator(&bundle));
        let labels = keep.iter().map(|&i| basis.label(i)).collect();
        Ok(Self { params, keep, labels, s_z, hop, dots, number, excitation })
    }

    pub fn params(&self) -> &TcParams {
        &self.params
    }

    /// Indices (in the full product basis) of the retained states.
    pub fn retained_states(&self) -> &[usize] {
        &self.keep
    }

    /// `N̂ = â†â + Σ_j ŝ^z_j`.
    pub fn excitation_number(&self) -> HermitianOperator {
        HermitianOperator::new(self.excitation.clone(), "N").expect("diagonal real operator")
    }

    /// Coordinates `(ω, ε₁, …)` with the model's own ε values.
    pub fn point(&self, omega: f64) -> ParamPoint {
        let mut c = vec![omega];
        c.extend_from_slice(&self.params.epsilons);
        ParamPoint::new(c)
    }

    fn epsilons<'a>(&self, x: &'a ParamPoint) -> Result<&'a [f64]> {
        let eps = &x.coords()[1..];
        for j in 0..eps.len() {
            for k in (j + 1)..eps.len() {
                if (eps[j] - eps[k]).abs() <= EPSILON_SEPARATION {
                    return Err(Error::InvalidParameter(format!("coincident epsilons ε{} = ε{}", j + 1, k + 1)));
                }
            }
        }
        Ok(eps)
    }

    fn gaudin_sum(&self, j: usize, eps: &[f64], power: i32) -> CMatrix {
        let dim = self.keep.len();
        let mut out = CMatrix::zeros(dim, dim);
        for k in 0..eps.len() {
            if k != j {
                out += &self.dots[j][k] * C64::new((eps[j] - eps[k]).powi(-power), 0.0);
            }
        }
        out
    }
}

fn excitation_operator(bundle: &OperatorBundle) -> CMatrix {
    bundle.number() + bundle.total_s_z()
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

impl HamiltonianFamily for TavisCummingsFamily {
    fn name(&self) -> &str {
        "tavis-cummings"
    }

    fn num_generators(&self) -> usize {
        self.params.n_spins() + 1
    }

    fn dim(&self) -> usize {
        self.keep.len()
    }

    fn is_real_valued(&self) -> bool {
        true
    }

    fn evaluate(&self, j: usize, x: &ParamPoint) -> Result<HermitianOperator> {
        let omega = x.get(0);
        let eps = self.epsilons(x)?;
        let g = self.params.g;
        let m = if j == 0 {
            let mut h = &self.number * real(-omega);
            for (k, e) in eps.iter().enumerate() {
                h += &self.s_z[k] * real(*e) + &self.hop[k] * real(g);
            }
            h
        } else if j <= eps.len() {
            let s = j - 1;
            &self.s_z[s] * real(eps[s] + omega) + &self.hop[s] * real(g) + self.gaudin_sum(s, eps, 1) * real(2.0 * g * g)
        } else {
            return Err(Error::IndexOutOfRange { what: "generator", index: j, bound: self.num_generators() });
        };
        HermitianOperator::new(m, if j == 0 { "H_TC".to_string() } else { format!("H_{j}") })
    }

    fn partial(&self, j: usize, k: usize, x: &ParamPoint) -> Option<Result<HermitianOperator>> {
        let n = self.params.n_spins();
        if j > n || k > n {
            return None;
        }
        let eps = match self.epsilons(x) {
            Ok(e) => e,
            Err(e) => return Some(Err(e)),
        };
        let g2 = 2.0 * self.params.g * self.params.g;
        let m = match (j, k) {
            (0, 0) => -self.number.clone(),
            (0, k) => self.s_z[k - 1].clone(),
            (j, 0) => self.s_z[j - 1].clone(),
            (j, k) if j == k => &self.s_z[j - 1] - self.gaudin_sum(j - 1, eps, 2) * real(g2),
            (j, k) => {
                let (a, b) = (j - 1, k - 1);
                &self.dots[a][b] * real(g2 / (eps[a] - eps[b]).powi(2))
            }
        };
        Some(HermitianOperator::new(m, format!("d{k} H{j}")))
    }

    fn has_analytic_partials(&self) -> bool {
        true
    }

    fn slot_names(&self) -> Vec<String> {
        let mut names = vec!["omega".to_string()];
        names.extend((1..=self.params.n_spins()).map(|j| format!("eps{j}")));
        names
    }

    fn basis_labels(&self) -> Vec<String> {
        self.labels.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{check_commutation, check_curl, DerivativePolicy};
    use crate::operator::{commutator_matrices, frobenius_norm};

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    fn three_spin() -> TavisCummingsFamily {
        tavis_cummings_family(TcParams { epsilons: vec![1.3, 0.4, -0.9], g: 0.35, boson_cutoff: 8 }).unwrap()
    }

    #[test]
    fn single_spin_partner_is_the_hamiltonian_plus_omega_n() {
        let fam = tavis_cummings_family(TcParams { epsilons: vec![0.8], g: 0.3, boson_cutoff: 3 }).unwrap();
        let x = fam.point(-1.7);
        let h_tc = fam.evaluate(0, &x).unwrap().into_matrix();
        let h1 = fam.evaluate(1, &x).unwrap().into_matrix();
        let n = fam.excitation_number().into_matrix();
        assert!(max_abs(&(h_tc + n * real(-1.7) - h1)) < 1e-14);
    }

    #[test]
    fn three_spin_family_commutes_and_conserves_excitations() {
        let fam = three_spin();
        // sectors 0..=8: 1 + 4 + 7 + 6·8 states
        assert_eq!(fam.dim(), 60);
        let x = fam.point(0.6);
        let n = fam.excitation_number();
        let mut sum = CMatrix::zeros(fam.dim(), fam.dim());
        for j in 0..4 {
            let hj = fam.evaluate(j, &x).unwrap();
            assert!(frobenius_norm(&commutator_matrices(n.matrix(), hj.matrix()).unwrap()) < 1e-12);
            for k in (j + 1)..4 {
                assert!(check_commutation(&fam, &x, j, k).unwrap() < 1e-10, "pair ({j},{k})");
                assert!(check_curl(&fam, &x, j, k, DerivativePolicy::default()).unwrap() < 1e-10);
            }
            if j > 0 {
                sum += hj.matrix();
            }
        }
        let h_tc = fam.evaluate(0, &x).unwrap().into_matrix();
        assert!(max_abs(&(sum - h_tc - n.matrix() * real(0.6))) < 1e-12);
    }

    #[test]
    fn full_truncated_space_breaks_commutation_at_the_cutoff() {
        let p = TcParams { epsilons: vec![1.0, 0.2], g: 0.4, boson_cutoff: 2 };
        let full = TavisCummingsFamily::new(p.clone(), TcSector::Full).unwrap();
        let exact = TavisCummingsFamily::new(p, TcSector::TruncationExact).unwrap();
        let x = full.point(0.3);
        assert!(check_commutation(&full, &x, 1, 2).unwrap() > 1e-3);
        assert!(check_commutation(&exact, &x, 1, 2).unwrap() < 1e-12);
    }

    #[test]
    fn analytic_partials_match_central_differences() {
        let fam = three_spin();
        let x = fam.point(0.25);
        let auto = DerivativePolicy::default();
        let fd = DerivativePolicy::CentralDifference { rel_step: 1e-5 };
        for j in 0..4 {
            for k in (j + 1)..4 {
                let a = check_curl(&fam, &x, j, k, auto).unwrap();
                let b = check_curl(&fam, &x, j, k, fd).unwrap();
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_sector_and_validation() {
        let fam = TavisCummingsFamily::new(
            TcParams { epsilons: vec![1.0, 0.8], g: 0.25, boson_cutoff: 1 },
            TcSector::Excitations(1),
        )
        .unwrap();
        assert_eq!(fam.dim(), 3);
        assert_eq!(fam.basis_labels(), vec!["0;ud", "0;du", "1;dd"]);
        assert!(tavis_cummings_family(TcParams { epsilons: vec![0.2, 1.0], g: 0.1, boson_cutoff: 1 }).is_err());
        assert!(tavis_cummings_family(TcParams { epsilons: vec![1.0, 1.0], g: 0.1, boson_cutoff: 1 }).is_err());
        assert!(fam.evaluate(1, &[0.0, 0.5, 0.5].into()).is_err());
        assert!(TavisCummingsFamily::new(
            TcParams { epsilons: vec![1.0], g: 0.1, boson_cutoff: 1 },
            TcSector::Excitations(2)
        )
        .is_err());
    }
}
