//! Commuting Hamiltonian families over `x = (t, x¹, …, x^M)` and the
//! zero-curvature verifier.
//!
//! A family supplies generators `Ĥ_j(x)` for `j = 0..=M`. Joint evolution
//! `i ∂_j Ψ = Ĥ_j Ψ` is consistent iff
//!
//! ```text
//! F_jk = ∂_j Ĥ_k − ∂_k Ĥ_j − i [Ĥ_k, Ĥ_j] = 0
//! ```
//!
//! For families with real matrix elements the real and imaginary parts give
//! the separate conditions `[Ĥ_j, Ĥ_k] = 0` and `∂_j Ĥ_k = ∂_k Ĥ_j`.
//! The verifier reports norms only; thresholds are the caller's business.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{commutator_matrices, frobenius_norm, CMatrix, HermitianOperator, C64};
use crate::util::fmt_f64;

/// Point in parameter space; coordinate 0 is the time slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    /// Copy of this point with coordinate `k` shifted by `delta`.
    pub fn shifted(&self, k: usize, delta: f64) -> Self {
        let mut c = self.0.clone();
        c[k] += delta;
        Self(c)
    }

    /// `self + s · (other − self)`.
    pub fn lerp(&self, other: &ParamPoint, s: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for ParamPoint {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// A family of Hamiltonians `Ĥ_j(x)`, `j = 0..=M`, over `M + 1` coordinates.
///
/// Implementations must be pure functions of `(j, x)`: the verifier and the
/// integrators evaluate them concurrently.
pub trait HamiltonianFamily: Send + Sync {
    fn name(&self) -> &str;

    /// `M + 1`: number of generators, equal to the number of coordinates.
    fn num_generators(&self) -> usize;

    fn dim(&self) -> usize;

    /// Whether every generator has real matrix elements.
    fn is_real_valued(&self) -> bool;

    fn evaluate(&self, j: usize, x: &ParamPoint) -> Result<HermitianOperator>;

    /// `∂_k Ĥ_j(x)` when the family knows it in closed form.
    fn partial(&self, _j: usize, _k: usize, _x: &ParamPoint) -> Option<Result<HermitianOperator>> {
        None
    }

    fn has_analytic_partials(&self) -> bool {
        false
    }

    fn slot_names(&self) -> Vec<String> {
        (0..self.num_generators()).map(|k| format!("x{k}")).collect()
    }

    /// Names of the diabatic (coordinate) basis states.
    fn basis_labels(&self) -> Vec<String> {
        (1..=self.dim()).map(|k| k.to_string()).collect()
    }
}

pub(crate) fn check_index(family: &dyn HamiltonianFamily, j: usize) -> Result<()> {
    if j >= family.num_generators() {
        return Err(Error::IndexOutOfRange {
            what: "generator",
            index: j,
            bound: family.num_generators(),
        });
    }
    Ok(())
}

pub(crate) fn check_point(family: &dyn HamiltonianFamily, x: &ParamPoint) -> Result<()> {
    if x.len() != family.num_generators() {
        return Err(Error::DimensionMismatch {
            context: "parameter point",
            expected: family.num_generators(),
            found: x.len(),
        });
    }
    if x.coords().iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite coordinate in {:?}", x.coords())));
    }
    Ok(())
}

/// Evaluates a generator, checking the point's dimension and attaching the
/// point to any failure.
pub fn evaluate_checked(family: &dyn HamiltonianFamily, j: usize, x: &ParamPoint) -> Result<HermitianOperator> {
    check_index(family, j)?;
    check_point(family, x)?;
    let h = family.evaluate(j, x).map_err(|e| e.at_point(x.coords()))?;
    if h.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            context: "generator dimension",
            expected: family.dim(),
            found: h.dim(),
        });
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DerivativeMethod {
    Analytic,
    CentralDifference { rel_step: f64 },
}

impl DerivativeMethod {
    pub fn describe(&self) -> String {
        match self {
            DerivativeMethod::Analytic => "analytic".to_string(),
            DerivativeMethod::CentralDifference { rel_step } => format!("central-difference({rel_step:e})"),
        }
    }
}

/// How partial derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativePolicy {
    /// Analytic partials when the family provides them, central differences otherwise.
    Auto { rel_step: f64 },
    CentralDifference { rel_step: f64 },
}

pub const DEFAULT_REL_STEP: f64 = 1e-5;

impl Default for DerivativePolicy {
    fn default() -> Self {
        DerivativePolicy::Auto { rel_step: DEFAULT_REL_STEP }
    }
}

impl DerivativePolicy {
    fn resolve(&self, family: &dyn HamiltonianFamily) -> DerivativeMethod {
        match *self {
            DerivativePolicy::Auto { rel_step } => {
                if family.has_analytic_partials() {
                    DerivativeMethod::Analytic
                } else {
                    DerivativeMethod::CentralDifference { rel_step }
                }
            }
            DerivativePolicy::CentralDifference { rel_step } => DerivativeMethod::CentralDifference { rel_step },
        }
    }
}

/// `∂_k Ĥ_j(x)` by the given method.
pub fn partial_derivative(
    family: &dyn HamiltonianFamily,
    j: usize,
    k: usize,
    x: &ParamPoint,
    method: DerivativeMethod,
) -> Result<CMatrix> {
    check_index(family, j)?;
    check_index(family, k)?;
    check_point(family, x)?;
    match method {
        DerivativeMethod::Analytic => match family.partial(j, k, x) {
            Some(h) => Ok(h.map_err(|e| e.at_point(x.coords()))?.into_matrix()),
            None => Err(Error::InvalidParameter(format!(
                "family '{}' has no analytic partial for ({j}, {k})",
                family.name()
            ))),
        },
        DerivativeMethod::CentralDifference { rel_step } => {
            let h = rel_step * x.get(k).abs().max(1.0);
            let plus = evaluate_checked(family, j, &x.shifted(k, h))?;
            let minus = evaluate_checked(family, j, &x.shifted(k, -h))?;
            Ok((plus.into_matrix() - minus.into_matrix()) / C64::new(2.0 * h, 0.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub point: ParamPoint,
    pub pair: (usize, usize),
    pub commutator_norm: f64,
    pub curl_norm: f64,
    pub full_curvature_norm: f64,
    pub derivative_method: DerivativeMethod,
}

/// `‖[Ĥ_j(x), Ĥ_k(x)]‖_F`.
pub fn check_commutation(family: &dyn HamiltonianFamily, x: &ParamPoint, j: usize, k: usize) -> Result<f64> {
    check_index(family, j)?;
    check_index(family, k)?;
    if j == k {
        check_point(family, x)?;
        return Ok(0.0);
    }
    let hj = evaluate_checked(family, j, x)?;
    let hk = evaluate_checked(family, k, x)?;
    Ok(frobenius_norm(&commutator_matrices(hj.matrix(), hk.matrix())?))
}

/// `‖∂_j Ĥ_k − ∂_k Ĥ_j‖_F`.
pub fn check_curl(
    family: &dyn HamiltonianFamily,
    x: &ParamPoint,
    j: usize,
    k: usize,
    policy: DerivativePolicy,
) -> Result<f64> {
    check_index(family, j)?;
    check_index(family, k)?;
    check_point(family, x)?;
    if j == k {
        return Ok(0.0);
    }
    let method = policy.resolve(family);
    let curl = partial_derivative(family, k, j, x, method)? - partial_derivative(family, j, k, x, method)?;
    Ok(frobenius_norm(&curl))
}

/// Full curvature `‖∂_j Ĥ_k − ∂_k Ĥ_j − i[Ĥ_k, Ĥ_j]‖_F` plus the two split norms.
pub fn check_zero_curvature(
    family: &dyn HamiltonianFamily,
    x: &ParamPoint,
    j: usize,
    k: usize,
    policy: DerivativePolicy,
) -> Result<CurvatureReport> {
    check_index(family, j)?;
    check_index(family, k)?;
    check_point(family, x)?;
    let method = policy.resolve(family);
    if j == k {
        return Ok(CurvatureReport {
            point: x.clone(),
            pair: (j, k),
            commutator_norm: 0.0,
            curl_norm: 0.0,
            full_curvature_norm: 0.0,
            derivative_method: method,
        });
    }
    let hj = evaluate_checked(family, j, x)?;
    let hk = evaluate_checked(family, k, x)?;
    let comm = commutator_matrices(hk.matrix(), hj.matrix())?;
    let curl = partial_derivative(family, k, j, x, method)? - partial_derivative(family, j, k, x, method)?;
    let full = &curl - &comm * C64::new(0.0, 1.0);
    Ok(CurvatureReport {
        point: x.clone(),
        pair: (j, k),
        commutator_norm: frobenius_norm(&comm),
        curl_norm: frobenius_norm(&curl),
        full_curvature_norm: frobenius_norm(&full),
        derivative_method: method,
    })
}

/// Curvature reports for every pair `j < k` at one point.
pub fn check_all_pairs(
    family: &dyn HamiltonianFamily,
    x: &ParamPoint,
    policy: DerivativePolicy,
) -> Result<Vec<CurvatureReport>> {
    let n = family.num_generators();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            out.push(check_zero_curvature(family, x, j, k, policy)?);
        }
    }
    Ok(out)
}

/// Worst (largest full-curvature) report per pair `j < k` over a grid.
///
/// Grid points are evaluated in parallel; ties keep the earliest grid point,
/// so the result does not depend on scheduling.
pub fn scan_family(
    family: &dyn HamiltonianFamily,
    grid: &[ParamPoint],
    policy: DerivativePolicy,
) -> Result<Vec<CurvatureReport>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("scan grid is empty".into()));
    }
    let per_point: Vec<Vec<CurvatureReport>> = grid
        .par_iter()
        .map(|x| check_all_pairs(family, x, policy).map_err(|e| e.at_point(x.coords())))
        .collect::<Result<_>>()?;

    let mut worst: Vec<CurvatureReport> = per_point[0].clone();
    for reports in &per_point[1..] {
        for (w, r) in worst.iter_mut().zip(reports) {
            if r.full_curvature_norm > w.full_curvature_norm {
                *w = r.clone();
            }
        }
    }
    Ok(worst)
}

/// Regular grid with `n` points per axis over the box `[lo_k, hi_k]`.
pub fn box_grid(lo: &[f64], hi: &[f64], n: usize) -> Vec<ParamPoint> {
    assert_eq!(lo.len(), hi.len());
    let dims = lo.len();
    let coord = |k: usize, i: usize| {
        if n == 1 {
            0.5 * (lo[k] + hi[k])
        } else {
            lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64
        }
    };
    let total = n.pow(dims as u32);
    (0..total)
        .map(|mut flat| {
            let mut c = vec![0.0; dims];
            for k in (0..dims).rev() {
                c[k] = coord(k, flat % n);
                flat /= n;
            }
            ParamPoint::new(c)
        })
        .collect()
}

/// CSV rendering of curvature reports: coordinates, pair, the three norms, method.
pub fn reports_to_csv(reports: &[CurvatureReport], slot_names: &[String]) -> String {
    let mut out = String::new();
    for name in slot_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("j,k,commutator_norm,curl_norm,full_norm,method\n");
    for r in reports {
        for c in r.point.coords() {
            out.push_str(&fmt_f64(*c));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.pair.0,
            r.pair.1,
            fmt_f64(r.commutator_norm),
            fmt_f64(r.curl_norm),
            fmt_f64(r.full_curvature_norm),
            r.derivative_method.describe()
        ));
    }
    out
}
