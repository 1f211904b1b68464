//! Transition probabilities by direct propagation between asymptotic points.

use nalgebra::DMatrix;
use serde::Serialize;

use super::TransitionMatrix;
use crate::error::{Error, Result};
use crate::evolution::{propagate_matrix, ParamPath, PropagationOptions};
use crate::family::{HamiltonianFamily, ParamPoint};
use crate::models::FourStateParams;
use crate::operator::{eigensystem_of_matrix, CMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterOptions {
    pub propagation: PropagationOptions,
    /// Turn precondition warnings into errors.
    pub strict: bool,
    /// Required ratio of diabatic gap to coupling at the endpoints.
    pub gap_ratio: f64,
    /// Labels are ambiguous when the two largest overlaps differ by less.
    pub ambiguity: f64,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        Self { propagation: PropagationOptions::default(), strict: false, gap_ratio: 20.0, ambiguity: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatterResult {
    pub matrix: TransitionMatrix,
    pub unitarity_defect: f64,
    pub steps_taken: usize,
    pub warnings: Vec<String>,
    /// `max |P(R) − P(2R)|` when requested.
    pub drift: Option<f64>,
}

/// Effective Hamiltonian at one end of the path (its direction of travel is
/// what matters for the eigenbasis there).
fn endpoint_matrix(family: &dyn HamiltonianFamily, path: &ParamPath, at_end: bool) -> Result<CMatrix> {
    let seg = if at_end { path.num_segments() - 1 } else { 0 };
    let tau = if at_end { 1.0 } else { 0.0 };
    Ok(crate::evolution::effective_hamiltonian(family, path, seg, tau)?.into_matrix())
}

/// For each diabatic label `n`, the column of the eigenvector that belongs to it.
fn label_eigenvectors(h: &CMatrix, ambiguity: f64, where_: &str) -> Result<CMatrix> {
    let eig = eigensystem_of_matrix(h, "endpoint")?;
    let n = h.nrows();
    let mut owner = vec![usize::MAX; n];
    for a in 0..n {
        let mut ov: Vec<(f64, usize)> = (0..n).map(|k| (eig.vectors[(k, a)].norm_sqr(), k)).collect();
        ov.sort_by(|x, y| y.0.total_cmp(&x.0));
        if n > 1 && ov[0].0 - ov[1].0 < ambiguity {
            return Err(Error::Labeling(format!(
                "eigenvector {a} at the {where_} overlaps labels {} and {} almost equally ({:.3} vs {:.3})",
                ov[0].1 + 1,
                ov[1].1 + 1,
                ov[0].0,
                ov[1].0
            )));
        }
        if owner[ov[0].1] != usize::MAX {
            return Err(Error::Labeling(format!("label {} claimed twice at the {where_}", ov[0].1 + 1)));
        }
        owner[ov[0].1] = a;
    }
    Ok(CMatrix::from_fn(n, n, |r, c| eig.vectors[(r, owner[c])]))
}

/// Checks that directly coupled levels are far apart compared to their coupling.
fn endpoint_warnings(h: &CMatrix, ratio: f64, where_: &str) -> Vec<String> {
    let n = h.nrows();
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let c = h[(a, b)].norm();
            if c == 0.0 {
                continue;
            }
            let gap = (h[(a, a)].re - h[(b, b)].re).abs();
            if gap <= ratio * c {
                out.push(format!(
                    "levels {} and {} at the {where_}: gap {gap:.3e} is not above {ratio} x coupling {c:.3e}",
                    a + 1,
                    b + 1
                ));
            }
        }
    }
    out
}

/// Propagates along `path` and returns `P[n][n'] = |⟨f_n|U|i_n'⟩|²` between
/// the endpoint eigenstates, labelled by their dominant diabatic component.
pub fn numeric_transition_matrix(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    opts: &ScatterOptions,
) -> Result<ScatterResult> {
    if path.num_segments() == 0 {
        return Err(Error::InvalidParameter("scattering needs a path of non-zero length".into()));
    }
    let h_in = endpoint_matrix(family, path, false)?;
    let h_out = endpoint_matrix(family, path, true)?;
    let mut warnings = endpoint_warnings(&h_in, opts.gap_ratio, "start");
    warnings.extend(endpoint_warnings(&h_out, opts.gap_ratio, "end"));
    if !warnings.is_empty() {
        if opts.strict {
            return Err(Error::Precondition(warnings.join("; ")));
        }
        for w in &warnings {
            log::warn!("{w}");
        }
    }
    let v_in = label_eigenvectors(&h_in, opts.ambiguity, "start")?;
    let v_out = label_eigenvectors(&h_out, opts.ambiguity, "end")?;
    let prop = propagate_matrix(family, path, &opts.propagation)?;
    let s = v_out.adjoint() * &prop.unitary * v_in;
    let n = family.dim();
    let p = DMatrix::from_fn(n, n, |r, c| s[(r, c)].norm_sqr());
    Ok(ScatterResult {
        matrix: TransitionMatrix::new(p, family.basis_labels(), None)?,
        unitarity_defect: prop.unitarity_defect,
        steps_taken: prop.steps_taken,
        warnings,
        drift: None,
    })
}

/// As [`numeric_transition_matrix`] at horizon `r`, plus a second run at
/// `2r` whose largest entry difference is reported as the drift.
pub fn numeric_transition_matrix_with_drift(
    family: &dyn HamiltonianFamily,
    build_path: impl Fn(f64) -> Result<ParamPath> + Sync,
    r: f64,
    opts: &ScatterOptions,
) -> Result<ScatterResult> {
    let (a, b) = rayon::join(
        || numeric_transition_matrix(family, &build_path(r)?, opts),
        || numeric_transition_matrix(family, &build_path(2.0 * r)?, opts),
    );
    let mut a = a?;
    let b = b?;
    a.drift = Some(a.matrix.max_deviation(&b.matrix));
    Ok(a)
}

/// How a deformed path gets from `start` to `end`.
#[derive(Debug, Clone, PartialEq)]
pub enum WaypointPolicy {
    /// Move the non-time coordinates at the start time, then move time.
    ParametersFirst,
    /// Move time first, then the other coordinates.
    TimeFirst,
    /// Explicit interior waypoints.
    Through(Vec<ParamPoint>),
}

pub fn deformed_path(start: &ParamPoint, end: &ParamPoint, policy: &WaypointPolicy) -> Result<ParamPath> {
    let mut v = vec![start.clone()];
    match policy {
        WaypointPolicy::ParametersFirst => {
            let mut c = end.coords().to_vec();
            c[0] = start.get(0);
            v.push(ParamPoint::new(c));
        }
        WaypointPolicy::TimeFirst => {
            let mut c = start.coords().to_vec();
            c[0] = end.get(0);
            v.push(ParamPoint::new(c));
        }
        WaypointPolicy::Through(points) => v.extend(points.iter().cloned()),
    }
    v.push(end.clone());
    v.dedup();
    ParamPath::new(v)
}

pub fn deformed_path_transition_matrix(
    family: &dyn HamiltonianFamily,
    start: &ParamPoint,
    end: &ParamPoint,
    policy: &WaypointPolicy,
    opts: &ScatterOptions,
) -> Result<ScatterResult> {
    numeric_transition_matrix(family, &deformed_path(start, end, policy)?, opts)
}

fn sweep_endpoints(p: &FourStateParams, r: f64) -> Result<(ParamPoint, ParamPoint)> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon R must be positive (got {r})")));
    }
    Ok((ParamPoint::new(vec![-r, -p.v * r + p.e0]), ParamPoint::new(vec![r, p.v * r + p.e0])))
}

/// Straight path `t = τ, e = vτ + e₀` for `τ ∈ [−R, R]`.
pub fn four_state_sweep_path(p: &FourStateParams, r: f64) -> Result<ParamPath> {
    let (a, b) = sweep_endpoints(p, r)?;
    ParamPath::new(vec![a, b])
}

/// Same endpoints, but up in `e` at `t = −R` first and then along `t`.
pub fn four_state_rectangular_path(p: &FourStateParams, r: f64) -> Result<ParamPath> {
    let (a, b) = sweep_endpoints(p, r)?;
    deformed_path(&a, &b, &WaypointPolicy::ParametersFirst)
}
