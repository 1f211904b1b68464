use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{HamiltonianFamily, ParamPoint};
use crate::operator::HermitianOperator;

/// Two-level crossing `H(t) = [[b₁t, g], [g, b₂t]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandauZenerParams {
    pub b1: f64,
    pub b2: f64,
    pub g: f64,
}

impl LandauZenerParams {
    pub fn validate(&self) -> Result<()> {
        if ![self.b1, self.b2, self.g].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("Landau-Zener parameters must be finite".into()));
        }
        if self.b1 == self.b2 {
            return Err(Error::InvalidParameter("Landau-Zener slopes must differ".into()));
        }
        Ok(())
    }

    pub fn slope_difference(&self) -> f64 {
        self.b1 - self.b2
    }

    /// Survival probability on the diabatic level, `exp(−2πg²/|b₁−b₂|)`.
    pub fn survival_probability(&self) -> f64 {
        (-2.0 * std::f64::consts::PI * self.g * self.g / self.slope_difference().abs()).exp()
    }
}

#[derive(Debug, Clone)]
pub struct LandauZenerFamily {
    params: LandauZenerParams,
}

/// Single-generator family with slopes `±b/2`, so `b₁ − b₂ = b`.
pub fn lz_two_state(b: f64, g: f64) -> Result<LandauZenerFamily> {
    if b == 0.0 {
        return Err(Error::InvalidParameter("slope difference b must be non-zero".into()));
    }
    LandauZenerFamily::new(LandauZenerParams { b1: 0.5 * b, b2: -0.5 * b, g })
}

impl LandauZenerFamily {
    pub fn new(params: LandauZenerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &LandauZenerParams {
        &self.params
    }
}

impl HamiltonianFamily for LandauZenerFamily {
    fn name(&self) -> &str {
        "landau-zener"
    }

    fn num_generators(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        2
    }

    fn is_real_valued(&self) -> bool {
        true
    }

    fn evaluate(&self, j: usize, x: &ParamPoint) -> Result<HermitianOperator> {
        if j != 0 {
            return Err(Error::IndexOutOfRange { what: "generator", index: j, bound: 1 });
        }
        let t = x.get(0);
        let p = &self.params;
        HermitianOperator::from_real_rows(&[&[p.b1 * t, p.g], &[p.g, p.b2 * t]], "H_LZ")
    }

    fn partial(&self, j: usize, k: usize, _x: &ParamPoint) -> Option<Result<HermitianOperator>> {
        if j != 0 || k != 0 {
            return None;
        }
        let p = &self.params;
        Some(HermitianOperator::from_real_rows(&[&[p.b1, 0.0], &[0.0, p.b2]], "dt H_LZ"))
    }

    fn has_analytic_partials(&self) -> bool {
        true
    }

    fn slot_names(&self) -> Vec<String> {
        vec!["t".into()]
    }
}
