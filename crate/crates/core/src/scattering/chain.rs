//! Scattering as an ordered product of independent pairwise LZ crossings.
//!
//! Each crossing of levels `(i, j)` contributes the block
//!
//! ```text
//! S_ii = S_jj = √p,   S_hl = i·s·√q·e^{iφ},   S_lh = i·s·√q·e^{−iφ}
//! ```
//!
//! where `h` is the level with the higher slope at the crossing, `l` the
//! other one, and `s` the sign of the coupling. Between crossings the levels
//! pick up diagonal adiabatic phases.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::{four_state_labels, four_state_regime, lz_probability, Regime, TransitionMatrix};
use crate::error::{Error, Result};
use crate::models::FourStateParams;
use crate::operator::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEvent {
    /// Position along the plan's path; events must be strictly increasing.
    pub location: f64,
    pub pair: (usize, usize),
    /// Survival probability `p` on the diabatic level.
    pub probability: f64,
    pub phase: f64,
    pub coupling_sign: f64,
    /// Member of `pair` with the larger slope at the crossing.
    pub higher_slope: usize,
    /// Generator that drives the crossing.
    pub generator: usize,
    /// Events in the same group share one LZ phase.
    pub phase_group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhasePolicy {
    Keep,
    Drop,
}

/// Reflection symmetry of a plan: level `k` in interval `m` mirrors level
/// `level_map[k]` in interval `interval_map[m]` (if any).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSymmetry {
    pub level_map: Vec<usize>,
    pub interval_map: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainScatteringPlan {
    pub dim: usize,
    pub events: Vec<CrossingEvent>,
    pub policy: PhasePolicy,
    /// `events.len() + 1` rows of per-level phases, one per interval between
    /// consecutive events (including before the first and after the last).
    pub adiabatic_phases: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub regime: Option<Regime>,
    pub symmetry: Option<PlanSymmetry>,
}

impl ChainScatteringPlan {
    pub fn new(dim: usize, events: Vec<CrossingEvent>, labels: Vec<String>) -> Result<Self> {
        let plan = Self {
            dim,
            adiabatic_phases: vec![vec![0.0; dim]; events.len() + 1],
            events,
            policy: PhasePolicy::Drop,
            labels,
            regime: None,
            symmetry: None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.dim {
            return Err(Error::DimensionMismatch { context: "plan labels", expected: self.dim, found: self.labels.len() });
        }
        for e in &self.events {
            let (i, j) = e.pair;
            if i >= self.dim || j >= self.dim || i == j {
                return Err(Error::InvalidParameter(format!("invalid crossing pair ({i}, {j}) for dimension {}", self.dim)));
            }
            if e.higher_slope != i && e.higher_slope != j {
                return Err(Error::InvalidParameter(format!("higher-slope level {} not in pair ({i}, {j})", e.higher_slope)));
            }
            if !(e.probability > 0.0 && e.probability <= 1.0) {
                return Err(Error::InvalidParameter(format!("LZ probability {} outside (0, 1]", e.probability)));
            }
        }
        if self.events.windows(2).any(|w| !(w[0].location < w[1].location)) {
            return Err(Error::InvalidParameter("crossing events are not strictly ordered".into()));
        }
        if self.adiabatic_phases.len() != self.events.len() + 1
            || self.adiabatic_phases.iter().any(|row| row.len() != self.dim)
        {
            return Err(Error::InvalidParameter("adiabatic phase table has the wrong shape".into()));
        }
        Ok(())
    }
}

fn lz_block(dim: usize, e: &CrossingEvent) -> CMatrix {
    let mut s = CMatrix::identity(dim, dim);
    let (i, j) = e.pair;
    let (h, l) = if e.higher_slope == i { (i, j) } else { (j, i) };
    let sp = C64::new(e.probability.sqrt(), 0.0);
    let sq = (1.0 - e.probability).max(0.0).sqrt();
    let sign = if e.coupling_sign < 0.0 { -1.0 } else { 1.0 };
    s[(i, i)] = sp;
    s[(j, j)] = sp;
    s[(h, l)] = C64::new(0.0, sign * sq) * C64::from_polar(1.0, e.phase);
    s[(l, h)] = C64::new(0.0, sign * sq) * C64::from_polar(1.0, -e.phase);
    s
}

fn phase_matrix(phases: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        phases.len(),
        phases.iter().map(|&t| C64::from_polar(1.0, t)),
    ))
}

/// `S = U_n S_n ⋯ U_1 S_1 U_0` and `P = |S|²`.
pub fn chain_scatter(plan: &ChainScatteringPlan) -> Result<(CMatrix, TransitionMatrix)> {
    plan.validate()?;
    let keep = plan.policy == PhasePolicy::Keep;
    let mut s = if keep { phase_matrix(&plan.adiabatic_phases[0]) } else { CMatrix::identity(plan.dim, plan.dim) };
    for (k, e) in plan.events.iter().enumerate() {
        s = lz_block(plan.dim, e) * s;
        if keep {
            s = phase_matrix(&plan.adiabatic_phases[k + 1]) * s;
        }
    }
    let p = DMatrix::from_fn(plan.dim, plan.dim, |r, c| s[(r, c)].norm_sqr());
    let tm = TransitionMatrix::new(p, plan.labels.clone(), plan.regime)?;
    Ok((s, tm))
}

/// Copy of `plan` with random LZ phases (one per phase group) and random
/// adiabatic phases in `[−π, π)`, constrained by the plan's symmetry.
/// The returned plan keeps its phases.
pub fn randomize_phases<R: Rng>(plan: &ChainScatteringPlan, rng: &mut R) -> ChainScatteringPlan {
    use std::f64::consts::PI;
    let mut out = plan.clone();
    out.policy = PhasePolicy::Keep;
    let groups = plan.events.iter().map(|e| e.phase_group + 1).max().unwrap_or(0);
    let group_phase: Vec<f64> = (0..groups).map(|_| rng.random_range(-PI..PI)).collect();
    for e in &mut out.events {
        e.phase = group_phase[e.phase_group];
    }
    let n_int = plan.events.len() + 1;
    let mut table: Vec<Vec<Option<f64>>> = vec![vec![None; plan.dim]; n_int];
    for m in 0..n_int {
        for k in 0..plan.dim {
            if table[m][k].is_some() {
                continue;
            }
            let theta = rng.random_range(-PI..PI);
            table[m][k] = Some(theta);
            if let Some(sym) = &plan.symmetry {
                if let Some(Some(mm)) = sym.interval_map.get(m) {
                    let kk = sym.level_map[k];
                    table[*mm][kk] = Some(theta);
                }
            }
        }
    }
    out.adiabatic_phases = table.into_iter().map(|row| row.into_iter().map(|t| t.unwrap_or(0.0)).collect()).collect();
    out
}

/// Crossing sequence of the 4-state model along the rectangular path: up in
/// `e` at `t = −R` (driven by `Ĥ₁`), then along `t` at `e = vR + e₀`
/// (driven by `Ĥ₀`).
///
/// Locations are reported as arc length from the path start, so events on
/// the vertical leg come first. LZ phase group 0 holds the `g` crossings and
/// group 1 the `γ` crossings.
pub fn four_state_event_sequence(p: &FourStateParams, r: f64) -> Result<ChainScatteringPlan> {
    let regime = four_state_regime(p)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon R must be positive (got {r})")));
    }
    let (b1, b2) = (p.b1, p.b2);
    let p1 = lz_probability(p.g, b1 - b2)?;
    let p2 = lz_probability(p.gamma, b1 + b2)?;
    let e_top = p.v * r + p.e0;
    let e_bottom = -p.v * r + p.e0;
    let leg = e_top - e_bottom;

    // vertical leg: crossing e-values at t = −R, couplings of Ĥ₁
    let vertical = |pair: (usize, usize), e: f64, sign: f64, higher: usize| CrossingEvent {
        location: e - e_bottom,
        pair,
        probability: if pair == (0, 2) || pair == (1, 3) { p1 } else { p2 },
        phase: 0.0,
        coupling_sign: sign,
        higher_slope: higher,
        generator: 1,
        phase_group: if pair == (0, 2) || pair == (1, 3) { 0 } else { 1 },
    };
    // horizontal leg: crossing times at e = e_top, couplings of Ĥ₀
    let horizontal = |pair: (usize, usize), t: f64, sign: f64, higher: usize| CrossingEvent {
        location: leg + (t + r),
        pair,
        probability: if pair == (0, 2) || pair == (1, 3) { p1 } else { p2 },
        phase: 0.0,
        coupling_sign: sign,
        higher_slope: higher,
        generator: 0,
        phase_group: if pair == (0, 2) || pair == (1, 3) { 0 } else { 1 },
    };
    let t13 = -e_top / (b1 - b2);
    let t14 = -e_top / (b1 + b2);
    let e13 = r * (b1 - b2);
    let e14 = r * (b1 + b2);

    let (events, interval_map) = match regime {
        Regime::Slow => (
            vec![
                horizontal((0, 2), t13, 1.0, 0),
                horizontal((0, 3), t14, -1.0, 0),
                horizontal((1, 2), -t14, 1.0, 2),
                horizontal((1, 3), -t13, 1.0, 3),
            ],
            (0..5).rev().map(Some).collect(),
        ),
        Regime::Intermediate => (
            vec![
                vertical((1, 3), -e13, -1.0, 3),
                vertical((0, 2), e13, 1.0, 0),
                horizontal((0, 3), t14, -1.0, 0),
                horizontal((1, 2), -t14, 1.0, 2),
            ],
            vec![None, Some(1), None, Some(3), None],
        ),
        Regime::Fast => (
            vec![
                vertical((1, 2), -e14, -1.0, 2),
                vertical((1, 3), -e13, -1.0, 3),
                vertical((0, 2), e13, 1.0, 0),
                vertical((0, 3), e14, -1.0, 0),
            ],
            (0..5).rev().map(Some).collect(),
        ),
    };
    if events.iter().any(|e| !(e.location > 0.0 && e.location < leg + 2.0 * r)) {
        return Err(Error::Precondition(format!(
            "horizon R = {r} is too small for the crossings to lie on the path"
        )));
    }
    let mut plan = ChainScatteringPlan::new(4, events, four_state_labels())?;
    plan.regime = Some(regime);
    plan.symmetry = Some(PlanSymmetry { level_map: vec![1, 0, 3, 2], interval_map });
    Ok(plan)
}
