//! Path-ordered evolution of the multi-time Schrödinger system.
//!
//! A path is a polyline in `(t, x¹, …)`. Segment `s` runs from vertex `s` to
//! vertex `s + 1` with local parameter `τ ∈ [0, 1]`, so its velocity is
//! simply the vertex difference and
//!
//! ```text
//! ĥ(τ) = Σ_j v^j Ĥ_j(x(τ)),   U = T exp(−i ∫ ĥ dτ)
//! ```
//!
//! Each step applies `exp(−i ĥ(τ_mid) Δτ)` (exponential midpoint, second
//! order). The adaptive controller estimates the leading local error from
//! the same three evaluations that bracket the step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{evaluate_checked, HamiltonianFamily, ParamPoint};
use crate::operator::{
    eigensystem_of_matrix, frobenius_norm, unitarity_defect, CMatrix, CVector, HermitianOperator, C64,
};

/// Propagators whose defect exceeds this are reported as failures.
pub const UNITARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamPath {
    vertices: Vec<ParamPoint>,
}

impl ParamPath {
    pub fn new(vertices: Vec<ParamPoint>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidParameter("a path needs at least two vertices".into()));
        }
        let n = vertices[0].len();
        for (i, w) in vertices.windows(2).enumerate() {
            if w[1].len() != n {
                return Err(Error::DimensionMismatch { context: "path vertex", expected: n, found: w[1].len() });
            }
            if w[0] == w[1] {
                return Err(Error::InvalidParameter(format!("path vertices {i} and {} coincide", i + 1)));
            }
        }
        if vertices.iter().any(|v| v.coords().iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter("path vertices must be finite".into()));
        }
        Ok(Self { vertices })
    }

    /// Zero-length path sitting at `x`; its propagator is the identity.
    pub fn stationary(x: ParamPoint) -> Self {
        Self { vertices: vec![x] }
    }

    pub fn from_coords(vertices: &[&[f64]]) -> Result<Self> {
        Self::new(vertices.iter().map(|v| ParamPoint::new(v.to_vec())).collect())
    }

    pub fn vertices(&self) -> &[ParamPoint] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn num_segments(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn start(&self) -> &ParamPoint {
        &self.vertices[0]
    }

    pub fn end(&self) -> &ParamPoint {
        self.vertices.last().expect("non-empty path")
    }

    pub fn velocity(&self, segment: usize) -> Vec<f64> {
        let (a, b) = (&self.vertices[segment], &self.vertices[segment + 1]);
        a.coords().iter().zip(b.coords()).map(|(x, y)| y - x).collect()
    }

    /// Largest coordinate change along the segment.
    pub fn segment_length(&self, segment: usize) -> f64 {
        self.velocity(segment).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn point(&self, segment: usize, tau: f64) -> ParamPoint {
        self.vertices[segment].lerp(&self.vertices[segment + 1], tau)
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        Self { vertices: v }
    }

    /// This path followed by `other`, which must start where this one ends.
    pub fn then(&self, other: &ParamPath) -> Result<Self> {
        if self.end() != other.start() {
            return Err(Error::InvalidParameter("concatenated paths do not meet".into()));
        }
        let mut v = self.vertices.clone();
        v.extend_from_slice(&other.vertices[1..]);
        Ok(Self { vertices: v })
    }
}

/// `ĥ(τ) = Σ_j v^j Ĥ_j(x(τ))` on one segment; generators with zero velocity
/// are not evaluated.
pub fn effective_hamiltonian(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    segment: usize,
    tau: f64,
) -> Result<HermitianOperator> {
    if segment >= path.num_segments() {
        return Err(Error::IndexOutOfRange { what: "segment", index: segment, bound: path.num_segments() });
    }
    if !(-1e-12..=1.0 + 1e-12).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau = {tau} outside segment range [0, 1]")));
    }
    let m = effective_matrix(family, path, segment, tau)?;
    HermitianOperator::new(m, "h(tau)")
}

fn effective_matrix(family: &dyn HamiltonianFamily, path: &ParamPath, segment: usize, tau: f64) -> Result<CMatrix> {
    if path.dim() != family.num_generators() {
        return Err(Error::DimensionMismatch {
            context: "path dimension",
            expected: family.num_generators(),
            found: path.dim(),
        });
    }
    let x = path.point(segment, tau);
    let n = family.dim();
    let mut h = CMatrix::zeros(n, n);
    for (j, vj) in path.velocity(segment).into_iter().enumerate() {
        if vj != 0.0 {
            h += evaluate_checked(family, j, &x)?.into_matrix() * C64::new(vj, 0.0);
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StepControl {
    /// Each segment is cut into `ceil(length / step)` equal steps.
    Fixed { step: f64 },
    /// Error-controlled steps. `tol` bounds the estimated local error per unit
    /// of coordinate length; steps are kept within `[min_step, max_step]`
    /// (coordinate length), and `max_phase` optionally caps `‖ĥ‖·Δτ`.
    Adaptive {
        tol: f64,
        min_step: f64,
        max_step: f64,
        max_phase: Option<f64>,
    },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Adaptive { tol: 1e-6, min_step: 1e-9, max_step: 1.0, max_phase: None }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepControl::Fixed { step } => step > 0.0 && step.is_finite(),
            StepControl::Adaptive { tol, min_step, max_step, max_phase } => {
                tol > 0.0
                    && min_step > 0.0
                    && max_step >= min_step
                    && max_step.is_finite()
                    && max_phase.is_none_or(|p| p > 0.0 && p.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step control {self:?}")))
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            StepControl::Fixed { .. } => "fixed-step",
            StepControl::Adaptive { .. } => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationOptions {
    pub control: StepControl,
    /// Record `(segment, τ, populations)` after every accepted step.
    pub trace: bool,
}

impl PropagationOptions {
    pub fn fixed(step: f64) -> Self {
        Self { control: StepControl::Fixed { step }, trace: false }
    }

    pub fn adaptive(tol: f64) -> Self {
        let StepControl::Adaptive { min_step, max_step, max_phase, .. } = StepControl::default() else {
            unreachable!()
        };
        Self { control: StepControl::Adaptive { tol, min_step, max_step, max_phase }, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub segment: usize,
    pub tau: f64,
    pub point: Vec<f64>,
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub unitary: CMatrix,
    pub path: ParamPath,
    pub steps_taken: usize,
    pub steps_rejected: usize,
    pub unitarity_defect: f64,
    pub method: StepControl,
}

impl Propagator {
    pub fn apply(&self, psi: &CVector) -> CVector {
        &self.unitary * psi
    }
}

/// Runs the integrator. When `watch` is given, populations of `U·watch` are
/// traced after each accepted step.
fn integrate(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    control: StepControl,
    watch: Option<&CVector>,
) -> Result<(Propagator, Vec<TraceRow>)> {
    control.validate()?;
    if path.dim() != family.num_generators() {
        return Err(Error::DimensionMismatch {
            context: "path dimension",
            expected: family.num_generators(),
            found: path.dim(),
        });
    }
    let n = family.dim();
    let mut u = CMatrix::identity(n, n);
    let mut trace = Vec::new();
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let record = |u: &CMatrix, seg: usize, tau: f64, trace: &mut Vec<TraceRow>| {
        if let Some(psi0) = watch {
            let psi = u * psi0;
            trace.push(TraceRow {
                segment: seg,
                tau,
                point: path.point(seg, tau).coords().to_vec(),
                populations: psi.iter().map(|z| z.norm_sqr()).collect(),
            });
        }
    };

    for seg in 0..path.num_segments() {
        let len = path.segment_length(seg);
        if seg == 0 {
            record(&u, 0, 0.0, &mut trace);
        }
        match control {
            StepControl::Fixed { step } => {
                let m = (len / step).ceil().max(1.0) as usize;
                fixed_segment(family, path, seg, m, &mut u, &mut steps, |u, tau| record(u, seg, tau, &mut trace))?;
            }
            StepControl::Adaptive { tol, min_step, max_step, max_phase } => {
                let ds_min = min_step / len;
                let ds_max = (max_step / len).min(1.0);
                let mut tau = 0.0;
                let mut ds = ds_max;
                let mut h_s = effective_matrix(family, path, seg, 0.0)?;
                while tau < 1.0 {
                    let last = tau + ds >= 1.0 - 1e-14;
                    let step = if last { 1.0 - tau } else { ds };
                    let te = if last { 1.0 } else { tau + step };
                    let h_m = effective_matrix(family, path, seg, tau + 0.5 * step)?;
                    let h_e = effective_matrix(family, path, seg, te)?;
                    let diff = &h_e - &h_s;
                    let curv = &h_e - &h_m * C64::new(2.0, 0.0) + &h_s;
                    let comm = &h_m * &diff - &diff * &h_m;
                    let err = step * step / 12.0 * frobenius_norm(&comm) + step / 6.0 * frobenius_norm(&curv);
                    let allowed = tol * step * len;
                    let eig = eigensystem_of_matrix(&h_m, "h(tau)")?;
                    let radius = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    let phase_ok = max_phase.is_none_or(|p| radius * step <= p * (1.0 + 1e-12));
                    let ratio = if err > 0.0 { allowed / err } else { f64::INFINITY };
                    if err <= allowed && phase_ok {
                        u = eig.map_spectrum(|l| C64::from_polar(1.0, -l * step)) * u;
                        steps += 1;
                        tau = te;
                        h_s = h_e;
                        record(&u, seg, tau, &mut trace);
                        let mut factor = (0.9 * ratio.sqrt()).clamp(0.2, 2.0);
                        if let Some(p) = max_phase {
                            if radius > 0.0 {
                                factor = factor.min(p / (radius * step));
                            }
                        }
                        if !last {
                            ds = (step * factor).clamp(ds_min, ds_max);
                        }
                    } else {
                        rejected += 1;
                        if step <= ds_min * (1.0 + 1e-12) {
                            return Err(Error::StepUnderflow { segment: seg, tau, step: step * len });
                        }
                        let mut factor = (0.9 * ratio.sqrt()).clamp(0.2, 0.9);
                        if !phase_ok {
                            factor = factor.min(max_phase.unwrap() / (radius * step));
                        }
                        ds = (step * factor).max(ds_min);
                    }
                }
            }
        }
    }
    let defect = unitarity_defect(&u);
    if !(defect < UNITARITY_TOL) {
        return Err(Error::UnitarityLoss { defect });
    }
    Ok((
        Propagator {
            unitary: u,
            path: path.clone(),
            steps_taken: steps,
            steps_rejected: rejected,
            unitarity_defect: defect,
            method: control,
        },
        trace,
    ))
}

fn fixed_segment(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    seg: usize,
    m: usize,
    u: &mut CMatrix,
    steps: &mut usize,
    mut after: impl FnMut(&CMatrix, f64),
) -> Result<()> {
    let ds = 1.0 / m as f64;
    for i in 0..m {
        let h = effective_matrix(family, path, seg, (i as f64 + 0.5) * ds)?;
        let eig = eigensystem_of_matrix(&h, "h(tau)")?;
        *u = eig.map_spectrum(|l| C64::from_polar(1.0, -l * ds)) * &*u;
        *steps += 1;
        after(u, (i + 1) as f64 * ds);
    }
    Ok(())
}

/// Full evolution operator along `path`.
pub fn propagate_matrix(family: &dyn HamiltonianFamily, path: &ParamPath, opts: &PropagationOptions) -> Result<Propagator> {
    Ok(integrate(family, path, opts.control, None)?.0)
}

/// Evolves `psi0` along `path`; the trace is empty unless `opts.trace`.
pub fn propagate(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    psi0: &CVector,
    opts: &PropagationOptions,
) -> Result<(CVector, Propagator, Vec<TraceRow>)> {
    if psi0.len() != family.dim() {
        return Err(Error::DimensionMismatch { context: "initial state", expected: family.dim(), found: psi0.len() });
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("initial state has norm {norm}, expected 1")));
    }
    let (prop, trace) = integrate(family, path, opts.control, opts.trace.then_some(psi0))?;
    Ok((prop.apply(psi0), prop, trace))
}

/// `|e_k⟩` in the coordinate basis.
pub fn basis_state(dim: usize, k: usize) -> Result<CVector> {
    if k >= dim {
        return Err(Error::IndexOutOfRange { what: "basis state", index: k, bound: dim });
    }
    let mut v = CVector::zeros(dim);
    v[k] = C64::new(1.0, 0.0);
    Ok(v)
}

/// `1 − |⟨a|b⟩|²`.
pub fn state_infidelity(a: &CVector, b: &CVector) -> f64 {
    1.0 - a.dotc(b).norm_sqr()
}

/// `min_θ ‖A − e^{iθ} B‖_F`, i.e. the distance modulo a global phase.
pub fn phase_insensitive_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: C64 = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { C64::new(1.0, 0.0) };
    frobenius_norm(&(a - b * phase))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichardsonReport {
    /// Coarsest step (coordinate length); the others are `/2` and `/4`.
    pub step: f64,
    /// `‖ψ_h − ψ_{h/2}‖` and `‖ψ_{h/2} − ψ_{h/4}‖`.
    pub errors: [f64; 2],
    /// `log₂(e₁/e₂)`; absent when both differences sit at rounding level.
    pub order: Option<f64>,
}

/// Below this the self-convergence differences are treated as rounding noise.
pub const RICHARDSON_FLOOR: f64 = 1e-12;

/// Self-convergence of the fixed-step integrator at steps `h`, `h/2`, `h/4`.
pub fn richardson_check(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    psi0: &CVector,
    step: f64,
) -> Result<RichardsonReport> {
    StepControl::Fixed { step }.validate()?;
    let run = |factor: usize| -> Result<CVector> {
        let n = family.dim();
        let mut u = CMatrix::identity(n, n);
        let mut steps = 0;
        for seg in 0..path.num_segments() {
            let m = (path.segment_length(seg) / step).ceil().max(1.0) as usize * factor;
            fixed_segment(family, path, seg, m, &mut u, &mut steps, |_, _| {})?;
        }
        Ok(u * psi0)
    };
    let (a, b, c) = (run(1)?, run(2)?, run(4)?);
    let e1 = (&a - &b).norm();
    let e2 = (&b - &c).norm();
    let order = if e1 < RICHARDSON_FLOOR || e2 < RICHARDSON_FLOOR {
        None
    } else {
        Some((e1 / e2).log2())
    };
    Ok(RichardsonReport { step, errors: [e1, e2], order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{four_state_h_tau, lz_two_state, FourStateFamily, FourStateParams};
    use crate::operator::{pauli, unitary_step};

    struct Static(CMatrix);

    impl HamiltonianFamily for Static {
        fn name(&self) -> &str {
            "static"
        }
        fn num_generators(&self) -> usize {
            1
        }
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn is_real_valued(&self) -> bool {
            false
        }
        fn evaluate(&self, _j: usize, _x: &ParamPoint) -> Result<HermitianOperator> {
            HermitianOperator::new(self.0.clone(), "H")
        }
    }

    fn static_family() -> Static {
        Static(pauli::x() * C64::new(0.7, 0.0) + pauli::y() * C64::new(-0.3, 0.0) + pauli::z() * C64::new(0.2, 0.0))
    }

    #[test]
    fn stationary_path_is_identity() {
        let f = static_family();
        let p = propagate_matrix(&f, &ParamPath::stationary([0.0].into()), &PropagationOptions::default()).unwrap();
        assert_eq!(p.unitary, CMatrix::identity(2, 2));
        assert_eq!(p.steps_taken, 0);
    }

    #[test]
    fn static_hamiltonian_matches_exponential() {
        let f = static_family();
        let path = ParamPath::from_coords(&[&[0.0], &[2.5]]).unwrap();
        let exact = unitary_step(&HermitianOperator::new(f.0.clone(), "H").unwrap(), 2.5).unwrap();
        for opts in [PropagationOptions::fixed(0.1), PropagationOptions::default()] {
            let p = propagate_matrix(&f, &path, &opts).unwrap();
            assert!(frobenius_norm(&(p.unitary - &exact)) < 1e-12);
        }
        let r = richardson_check(&f, &path, &basis_state(2, 0).unwrap(), 0.5).unwrap();
        assert!(r.order.is_none());
    }

    #[test]
    fn effective_hamiltonian_of_sweep_path_is_h_tau() {
        let p = FourStateParams::reference(0.2);
        let fam = FourStateFamily::new(p.clone()).unwrap();
        // τ ∈ [−10, 10] mapped onto one segment
        let path = ParamPath::from_coords(&[&[-10.0, -2.0], &[10.0, 2.0]]).unwrap();
        for s in [0.0, 0.3, 0.5, 1.0] {
            let h = effective_hamiltonian(&fam, &path, 0, s).unwrap().into_matrix() / C64::new(20.0, 0.0);
            let tau = -10.0 + 20.0 * s;
            let expected = four_state_h_tau(&p, tau).unwrap().into_matrix();
            assert!(frobenius_norm(&(h - expected)) < 1e-13);
        }
        assert!(effective_hamiltonian(&fam, &path, 0, 1.5).is_err());
        assert!(effective_hamiltonian(&fam, &path, 1, 0.5).is_err());
    }

    #[test]
    fn reversed_path_undoes_evolution() {
        let fam = FourStateFamily::new(FourStateParams::reference(0.2)).unwrap();
        let path = ParamPath::from_coords(&[&[-5.0, -1.0], &[0.5, 3.0], &[4.0, 3.0]]).unwrap();
        let opts = PropagationOptions::default();
        let a = propagate_matrix(&fam, &path, &opts).unwrap();
        let b = propagate_matrix(&fam, &path.reversed(), &opts).unwrap();
        assert!(frobenius_norm(&(b.unitary * a.unitary - CMatrix::identity(4, 4))) < 1e-8);
        assert!(a.unitarity_defect < 1e-8);
    }

    #[test]
    fn composition() {
        let fam = FourStateFamily::new(FourStateParams::reference(0.2)).unwrap();
        let p1 = ParamPath::from_coords(&[&[-3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let p2 = ParamPath::from_coords(&[&[0.0, 1.0], &[2.0, -1.0]]).unwrap();
        let opts = PropagationOptions::adaptive(1e-9);
        let whole = propagate_matrix(&fam, &p1.then(&p2).unwrap(), &opts).unwrap();
        let u1 = propagate_matrix(&fam, &p1, &opts).unwrap();
        let u2 = propagate_matrix(&fam, &p2, &opts).unwrap();
        assert!(frobenius_norm(&(whole.unitary - u2.unitary * u1.unitary)) < 1e-12);
        assert!(p1.then(&p1).is_err());
    }

    #[test]
    fn second_order_convergence_for_lz() {
        let f = lz_two_state(0.5, 0.2).unwrap();
        let path = ParamPath::from_coords(&[&[-50.0], &[50.0]]).unwrap();
        let r = richardson_check(&f, &path, &basis_state(2, 0).unwrap(), 0.05).unwrap();
        let order = r.order.unwrap();
        assert!((1.8..=2.2).contains(&order), "order {order}, errors {:?}", r.errors);
    }

    #[test]
    fn input_validation() {
        let f = static_family();
        let path = ParamPath::from_coords(&[&[0.0], &[1.0]]).unwrap();
        let bad = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(propagate(&f, &path, &bad, &PropagationOptions::default()).is_err());
        assert!(ParamPath::from_coords(&[&[0.0], &[0.0]]).is_err());
        assert!(ParamPath::from_coords(&[&[0.0]]).is_err());
        assert!(ParamPath::from_coords(&[&[0.0, 1.0], &[0.0]]).is_err());
        assert!(propagate_matrix(&f, &path, &PropagationOptions::fixed(0.0)).is_err());
        let p2 = ParamPath::from_coords(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        assert!(propagate_matrix(&f, &p2, &PropagationOptions::default()).is_err());
    }

    #[test]
    fn trace_records_every_step() {
        let f = lz_two_state(0.5, 0.2).unwrap();
        let path = ParamPath::from_coords(&[&[-5.0], &[5.0]]).unwrap();
        let opts = PropagationOptions { control: StepControl::Fixed { step: 1.0 }, trace: true };
        let (psi, prop, trace) = propagate(&f, &path, &basis_state(2, 0).unwrap(), &opts).unwrap();
        assert_eq!(prop.steps_taken, 10);
        assert_eq!(trace.len(), 11);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        for row in &trace {
            assert!((row.populations.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(trace.last().unwrap().point, vec![5.0]);
    }
}
