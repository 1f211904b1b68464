//! The 4-state linear-in-time model `H₀(t, e)`, its commuting partner
//! `H₁(t, e)`, and the effective Hamiltonian `h(τ) = H₀ + v H₁` along the
//! straight path `t = τ, e = vτ + e₀`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{HamiltonianFamily, ParamPoint};
use crate::operator::HermitianOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourStateParams {
    pub b1: f64,
    pub b2: f64,
    pub g: f64,
    pub gamma: f64,
    #[serde(default)]
    pub e0: f64,
    #[serde(default)]
    pub v: f64,
}

impl FourStateParams {
    /// Requires `b1 > b2 > 0` and `v ≥ 0`.
    pub fn new(b1: f64, b2: f64, g: f64, gamma: f64, e0: f64, v: f64) -> Result<Self> {
        let p = Self { b1, b2, g, gamma, e0, v };
        p.validate()?;
        Ok(p)
    }

    /// `b1 = 1, b2 = 0.5, g = 0.2, γ = 0.3, e₀ = 0` at sweep rate `v`.
    pub fn reference(v: f64) -> Self {
        Self { b1: 1.0, b2: 0.5, g: 0.2, gamma: 0.3, e0: 0.0, v }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.b1, self.b2, self.g, self.gamma, self.e0, self.v];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("four-state parameters must be finite".into()));
        }
        if !(self.b1 > self.b2 && self.b2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "four-state slopes need b1 > b2 > 0 (got b1 = {}, b2 = {})",
                self.b1, self.b2
            )));
        }
        if self.v < 0.0 {
            return Err(Error::InvalidParameter(format!("sweep rate v must be non-negative (got {})", self.v)));
        }
        Ok(())
    }

    /// `b1² − b2²`.
    pub fn slope_product(&self) -> f64 {
        (self.b1 - self.b2) * (self.b1 + self.b2)
    }
}

fn check_partner_slopes(p: &FourStateParams) -> Result<()> {
    if p.b1 == p.b2 || p.b1 == -p.b2 {
        return Err(Error::InvalidParameter(format!(
            "partner undefined for |b1| = |b2| (b1 = {}, b2 = {})",
            p.b1, p.b2
        )));
    }
    Ok(())
}

/// `H₀(t, e)`: diabatic levels `b₁t + e, −b₁t + e, b₂t, −b₂t` with couplings
/// `g` on (1,3), (2,4), `γ` on (2,3) and `−γ` on (1,4).
pub fn four_state_h0(p: &FourStateParams, t: f64, e: f64) -> Result<HermitianOperator> {
    let (b1, b2, g, c) = (p.b1, p.b2, p.g, p.gamma);
    HermitianOperator::from_real_rows(
        &[
            &[b1 * t + e, 0.0, g, -c],
            &[0.0, -b1 * t + e, c, g],
            &[g, c, b2 * t, 0.0],
            &[-c, g, 0.0, -b2 * t],
        ],
        "H0",
    )
}

/// The nontrivial commuting partner `H₁(t, e)`.
pub fn four_state_h1(p: &FourStateParams, t: f64, e: f64) -> Result<HermitianOperator> {
    check_partner_slopes(p)?;
    let (b1, b2, g, c) = (p.b1, p.b2, p.g, p.gamma);
    let d = p.slope_product();
    let gm = g / (b1 - b2);
    let cp = c / (b1 + b2);
    HermitianOperator::from_real_rows(
        &[
            &[t + b1 * e / d, 0.0, gm, -cp],
            &[0.0, t - b1 * e / d, -cp, -gm],
            &[gm, -cp, -b2 * e / d, 0.0],
            &[-cp, -gm, 0.0, b2 * e / d],
        ],
        "H1",
    )
}

/// `h(τ) = H₀(τ, vτ + e₀) + v H₁(τ, vτ + e₀)`.
pub fn four_state_h_tau(p: &FourStateParams, tau: f64) -> Result<HermitianOperator> {
    let e = p.v * tau + p.e0;
    let h0 = four_state_h0(p, tau, e)?;
    let h1 = four_state_h1(p, tau, e)?;
    HermitianOperator::new(h0.into_matrix() + h1.into_matrix() * crate::operator::C64::new(p.v, 0.0), "h(tau)")
}

/// Closed-form entries of `h(τ)`, written in terms of
/// `x = v/(b₁−b₂)`, `y = v/(b₁+b₂)`.
///
/// `xy/v = v/(b₁²−b₂²)` is used directly so `v = 0` needs no special case.
pub fn four_state_h_tau_explicit(p: &FourStateParams, tau: f64) -> Result<HermitianOperator> {
    check_partner_slopes(p)?;
    let (b1, b2, g, c, v, e0) = (p.b1, p.b2, p.g, p.gamma, p.v, p.e0);
    let x = v / (b1 - b2);
    let y = v / (b1 + b2);
    let xy = x * y;
    let xy_over_v = v / p.slope_product();
    let beta = [2.0 * v + b1 * (1.0 + xy), 2.0 * v - b1 * (1.0 + xy), b2 * (1.0 - xy), -b2 * (1.0 - xy)];
    let offs = [
        e0 * (1.0 + b1 * xy_over_v),
        e0 * (1.0 - b1 * xy_over_v),
        -e0 * b2 * xy_over_v,
        e0 * b2 * xy_over_v,
    ];
    let d = |k: usize| beta[k] * tau + offs[k];
    HermitianOperator::from_real_rows(
        &[
            &[d(0), 0.0, g * (1.0 + x), -c * (1.0 + y)],
            &[0.0, d(1), c * (1.0 - y), g * (1.0 - x)],
            &[g * (1.0 + x), c * (1.0 - y), d(2), 0.0],
            &[-c * (1.0 + y), g * (1.0 - x), 0.0, d(3)],
        ],
        "h(tau)",
    )
}

/// Diabatic energies of `H₀` (the diagonal), in label order 1..4.
pub fn four_state_diabatic_energies(p: &FourStateParams, t: f64, e: f64) -> [f64; 4] {
    [p.b1 * t + e, -p.b1 * t + e, p.b2 * t, -p.b2 * t]
}

/// `{H₀, H₁}` over `(t, e)`, with analytic partials.
#[derive(Debug, Clone)]
pub struct FourStateFamily {
    params: FourStateParams,
}

impl FourStateFamily {
    pub fn new(params: FourStateParams) -> Result<Self> {
        params.validate()?;
        check_partner_slopes(&params)?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &FourStateParams {
        &self.params
    }
}

impl HamiltonianFamily for FourStateFamily {
    fn name(&self) -> &str {
        "four-state"
    }

    fn num_generators(&self) -> usize {
        2
    }

    fn dim(&self) -> usize {
        4
    }

    fn is_real_valued(&self) -> bool {
        true
    }

    fn evaluate(&self, j: usize, x: &ParamPoint) -> Result<HermitianOperator> {
        let (t, e) = (x.get(0), x.get(1));
        match j {
            0 => four_state_h0(&self.params, t, e),
            1 => four_state_h1(&self.params, t, e),
            _ => Err(Error::IndexOutOfRange { what: "generator", index: j, bound: 2 }),
        }
    }

    fn partial(&self, j: usize, k: usize, _x: &ParamPoint) -> Option<Result<HermitianOperator>> {
        let p = &self.params;
        let d = p.slope_product();
        let diag = match (j, k) {
            (0, 0) => [p.b1, -p.b1, p.b2, -p.b2],
            (0, 1) | (1, 0) => [1.0, 1.0, 0.0, 0.0],
            (1, 1) => [p.b1 / d, -p.b1 / d, -p.b2 / d, p.b2 / d],
            _ => return None,
        };
        Some(HermitianOperator::from_real_rows(
            &[
                &[diag[0], 0.0, 0.0, 0.0],
                &[0.0, diag[1], 0.0, 0.0],
                &[0.0, 0.0, diag[2], 0.0],
                &[0.0, 0.0, 0.0, diag[3]],
            ],
            format!("d{k} H{j}"),
        ))
    }

    fn has_analytic_partials(&self) -> bool {
        true
    }

    fn slot_names(&self) -> Vec<String> {
        vec!["t".into(), "e".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{check_commutation, check_curl, DerivativePolicy};
    use crate::operator::{commutator, frobenius_norm, CMatrix, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    #[test]
    fn h0_layout() {
        let p = FourStateParams::new(1.0, 0.5, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(max_abs(four_state_h0(&p, 0.0, 0.0).unwrap().matrix()), 0.0);

        let p = FourStateParams::reference(0.0);
        let h = four_state_h0(&p, 0.0, 5.0).unwrap();
        let m = h.matrix();
        let expect = [
            [5.0, 0.0, 0.2, -0.3],
            [0.0, 5.0, 0.3, 0.2],
            [0.2, 0.3, 0.0, 0.0],
            [-0.3, 0.2, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m[(r, c)], C64::new(expect[r][c], 0.0));
            }
        }
        assert_eq!(h.max_imag(), 0.0);
    }

    #[test]
    fn h1_at_zero_e() {
        let p = FourStateParams::reference(0.0);
        let m = four_state_h1(&p, 1.0, 0.0).unwrap().into_matrix();
        assert_eq!(m[(0, 0)].re, 1.0);
        assert_eq!(m[(1, 1)].re, 1.0);
        assert_eq!(m[(2, 2)].re, 0.0);
        assert_eq!(m[(3, 3)].re, 0.0);
        assert!((m[(0, 2)].re - 0.4).abs() < 1e-15);
        assert!((m[(0, 3)].re + 0.2).abs() < 1e-15);
        assert!((m[(1, 2)].re + 0.2).abs() < 1e-15);
        assert!((m[(1, 3)].re + 0.4).abs() < 1e-15);
    }

    #[test]
    fn partner_commutes_at_random_points() {
        let p = FourStateParams::reference(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (t, e) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let c = commutator(&four_state_h0(&p, t, e).unwrap(), &four_state_h1(&p, t, e).unwrap()).unwrap();
            assert!(max_abs(&c) < 1e-12);
        }
        let c = commutator(&four_state_h0(&p, 0.7, -1.3).unwrap(), &four_state_h1(&p, 0.7, -1.3).unwrap()).unwrap();
        assert!(max_abs(&c) < 1e-12);
    }

    #[test]
    fn linear_structure_of_partials() {
        // ∂_t H1 = diag(1,1,0,0) = ∂_e H0, and they match finite differences exactly
        let p = FourStateParams::reference(0.0);
        let dt_h1 = four_state_h1(&p, 2.0, 0.0).unwrap().into_matrix() - four_state_h1(&p, 1.0, 0.0).unwrap().into_matrix();
        let de_h0 = four_state_h0(&p, 1.0, 2.0).unwrap().into_matrix() - four_state_h0(&p, 1.0, 1.0).unwrap().into_matrix();
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]));
        assert_eq!(dt_h1, expected);
        assert_eq!(de_h0, expected);

        let fam = FourStateFamily::new(p).unwrap();
        let x: ParamPoint = [0.4, -2.0].into();
        assert_eq!(check_curl(&fam, &x, 0, 1, DerivativePolicy::default()).unwrap(), 0.0);
        assert!(check_commutation(&fam, &x, 0, 1).unwrap() < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_coefficients() {
        let p = FourStateParams::reference(0.2);
        let x = p.v / (p.b1 - p.b2);
        let y = p.v / (p.b1 + p.b2);
        assert!((x - 0.4).abs() < 1e-15);
        assert!((y - 2.0 / 15.0).abs() < 1e-15);
        assert!((x * y - 4.0 / 75.0).abs() < 1e-15);
    }

    #[test]
    fn effective_hamiltonian_dual_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let b2 = rng.random_range(0.1..2.0);
            let b1 = b2 + rng.random_range(0.1..2.0);
            let p = FourStateParams::new(
                b1,
                b2,
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.0..3.0),
            )
            .unwrap();
            let tau = rng.random_range(-5.0..5.0);
            let a = four_state_h_tau(&p, tau).unwrap();
            let b = four_state_h_tau_explicit(&p, tau).unwrap();
            let scale = max_abs(a.matrix()).max(1.0);
            assert!(max_abs(&(a.matrix() - b.matrix())) <= 1e-13 * scale);
        }
    }

    #[test]
    fn zero_sweep_rate_limit() {
        let p = FourStateParams { e0: 1.7, ..FourStateParams::reference(0.0) };
        for tau in [-3.0, 0.0, 2.5] {
            let h = four_state_h_tau_explicit(&p, tau).unwrap();
            let h0 = four_state_h0(&p, tau, p.e0).unwrap();
            assert_eq!(frobenius_norm(&(h.matrix() - h0.matrix())), 0.0);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(FourStateParams::new(0.5, 1.0, 0.2, 0.3, 0.0, 0.2).is_err());
        assert!(FourStateParams::new(1.0, 0.0, 0.2, 0.3, 0.0, 0.2).is_err());
        assert!(FourStateParams::new(1.0, 0.5, 0.2, 0.3, 0.0, -0.1).is_err());
        assert!(FourStateParams::new(1.0, 0.5, f64::NAN, 0.3, 0.0, 0.1).is_err());
        let degenerate = FourStateParams { b1: 1.0, b2: 1.0, ..FourStateParams::reference(0.1) };
        assert!(four_state_h1(&degenerate, 0.0, 0.0).is_err());
    }
}
