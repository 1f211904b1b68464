//! BCS Hamiltonian with its Gaudin-magnet partners, slot 0 being the field `B`.
//!
//! ```text
//! Ĥ_BCS = Σ_j 2ε_j ŝ^z_j − (2B)⁻¹ Ŝ⁺Ŝ⁻
//! Ĥ_j   = 2B ŝ^z_j − Σ_{k≠j} ŝ_j·ŝ_k / (ε_j − ε_k)
//! ```

use serde::{Deserialize, Serialize};

use crate::basis::build_spin_boson_bundle;
use crate::error::{Error, Result};
use crate::family::{HamiltonianFamily, ParamPoint};
use crate::operator::{CMatrix, HermitianOperator, C64};

pub const EPSILON_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaudinParams {
    pub epsilons: Vec<f64>,
    #[serde(rename = "B")]
    pub b: f64,
}

impl GaudinParams {
    pub fn n_spins(&self) -> usize {
        self.epsilons.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("Gaudin model needs at least one spin".into()));
        }
        if !self.b.is_finite() || self.epsilons.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("Gaudin parameters must be finite".into()));
        }
        check_distinct(&self.epsilons)
    }
}

fn check_distinct(eps: &[f64]) -> Result<()> {
    for j in 0..eps.len() {
        for k in (j + 1)..eps.len() {
            if (eps[j] - eps[k]).abs() <= EPSILON_SEPARATION {
                return Err(Error::InvalidParameter(format!("coincident epsilons ε{} = ε{}", j + 1, k + 1)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GaudinFamily {
    params: GaudinParams,
    labels: Vec<String>,
    s_z: Vec<CMatrix>,
    pairing: CMatrix,
    dots: Vec<Vec<CMatrix>>,
}

pub fn gaudin_family(params: GaudinParams) -> Result<GaudinFamily> {
    GaudinFamily::new(params)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

impl GaudinFamily {
    pub fn new(params: GaudinParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_spins();
        let b = build_spin_boson_bundle(n, 0)?;
        let dim = b.dim();
        let s_plus = b.s_plus.iter().fold(CMatrix::zeros(dim, dim), |acc, m| acc + m);
        let s_minus = s_plus.adjoint();
        let dots = (0..n)
            .map(|j| (0..n).map(|k| if j == k { CMatrix::zeros(dim, dim) } else { b.spin_dot(j, k) }).collect())
            .collect();
        let labels = (0..dim).map(|i| b.basis.label(i)).collect();
        Ok(Self { params, labels, s_z: b.s_z.clone(), pairing: &s_plus * &s_minus, dots })
    }

    pub fn params(&self) -> &GaudinParams {
        &self.params
    }

    /// Coordinates `(B, ε₁, …)` from the stored parameters.
    pub fn point(&self) -> ParamPoint {
        let mut c = vec![self.params.b];
        c.extend_from_slice(&self.params.epsilons);
        ParamPoint::new(c)
    }

    /// `S^z = Σ_j ŝ^z_j`.
    pub fn total_s_z(&self) -> CMatrix {
        let d = self.dim();
        self.s_z.iter().fold(CMatrix::zeros(d, d), |acc, m| acc + m)
    }

    fn pair_sum(&self, j: usize, eps: &[f64], power: i32) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for k in 0..eps.len() {
            if k != j {
                out += &self.dots[j][k] * real((eps[j] - eps[k]).powi(-power));
            }
        }
        out
    }
}

impl HamiltonianFamily for GaudinFamily {
    fn name(&self) -> &str {
        "gaudin"
    }

    fn num_generators(&self) -> usize {
        self.params.n_spins() + 1
    }

    fn dim(&self) -> usize {
        self.labels.len()
    }

    fn is_real_valued(&self) -> bool {
        true
    }

    fn evaluate(&self, j: usize, x: &ParamPoint) -> Result<HermitianOperator> {
        let bf = x.get(0);
        let eps = &x.coords()[1..];
        check_distinct(eps)?;
        let m = if j == 0 {
            if bf == 0.0 {
                return Err(Error::InvalidParameter("BCS coupling 1/(2B) is singular at B = 0".into()));
            }
            let mut h = &self.pairing * real(-0.5 / bf);
            for (k, e) in eps.iter().enumerate() {
                h += &self.s_z[k] * real(2.0 * e);
            }
            h
        } else if j <= eps.len() {
            &self.s_z[j - 1] * real(2.0 * bf) - self.pair_sum(j - 1, eps, 1)
        } else {
            return Err(Error::IndexOutOfRange { what: "generator", index: j, bound: self.num_generators() });
        };
        HermitianOperator::new(m, if j == 0 { "H_BCS".to_string() } else { format!("H_{j}") })
    }

    fn partial(&self, j: usize, k: usize, x: &ParamPoint) -> Option<Result<HermitianOperator>> {
        let n = self.params.n_spins();
        if j > n || k > n {
            return None;
        }
        let bf = x.get(0);
        let eps = &x.coords()[1..];
        if let Err(e) = check_distinct(eps) {
            return Some(Err(e));
        }
        let m = match (j, k) {
            (0, 0) => {
                if bf == 0.0 {
                    return Some(Err(Error::InvalidParameter("BCS coupling 1/(2B) is singular at B = 0".into())));
                }
                &self.pairing * real(0.5 / (bf * bf))
            }
            (0, k) => &self.s_z[k - 1] * real(2.0),
            (j, 0) => &self.s_z[j - 1] * real(2.0),
            (j, k) if j == k => self.pair_sum(j - 1, eps, 2),
            (j, k) => {
                let (a, b) = (j - 1, k - 1);
                &self.dots[a][b] * real(-1.0 / (eps[a] - eps[b]).powi(2))
            }
        };
        Some(HermitianOperator::new(m, format!("d{k} H{j}")))
    }

    fn has_analytic_partials(&self) -> bool {
        true
    }

    fn slot_names(&self) -> Vec<String> {
        let mut names = vec!["B".to_string()];
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

    fn family() -> GaudinFamily {
        gaudin_family(GaudinParams { epsilons: vec![0.9, -0.3, 0.45], b: 0.7 }).unwrap()
    }

    #[test]
    fn generators_commute() {
        let f = family();
        let x = f.point();
        for j in 0..4 {
            for k in (j + 1)..4 {
                assert!(check_commutation(&f, &x, j, k).unwrap() < 1e-10, "({j},{k})");
            }
        }
    }

    #[test]
    fn curls_vanish_both_ways() {
        let f = family();
        let x = f.point();
        for policy in [DerivativePolicy::default(), DerivativePolicy::CentralDifference { rel_step: 1e-5 }] {
            for j in 0..4 {
                for k in (j + 1)..4 {
                    assert!(check_curl(&f, &x, j, k, policy).unwrap() < 1e-8, "({j},{k})");
                }
            }
        }
    }

    #[test]
    fn zero_field_partners_have_no_sz_term() {
        let f = gaudin_family(GaudinParams { epsilons: vec![1.0, 0.0], b: 0.0 }).unwrap();
        let h1 = f.evaluate(1, &[0.0, 1.0, 0.0].into()).unwrap();
        // −s₁·s₂ on two spins: diagonal −1/4 on |dd⟩, |uu⟩
        assert_eq!(h1.matrix()[(0, 0)].re, -0.25);
        assert_eq!(h1.matrix()[(3, 3)].re, -0.25);
        assert!(f.evaluate(0, &[0.0, 1.0, 0.0].into()).is_err());
        assert!(gaudin_family(GaudinParams { epsilons: vec![1.0, 1.0], b: 0.5 }).is_err());
    }
}
