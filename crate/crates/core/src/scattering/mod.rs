//! Multistate Landau-Zener transition probabilities.
//!
//! `P[n][n'] = P_{n'→n} = |S_{nn'}|²`, obtained by direct propagation
//! ([`numeric`]), by a product of pairwise LZ blocks ([`chain`]), or for the
//! 4-state model from the closed forms in [`four_state_closed_form`].

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::FourStateParams;
use crate::util::{csv_line, fmt_f64};

pub mod chain;
pub mod numeric;

pub use chain::{
    chain_scatter, four_state_event_sequence, randomize_phases, ChainScatteringPlan, CrossingEvent, PhasePolicy,
    PlanSymmetry,
};
pub use numeric::{
    deformed_path, deformed_path_transition_matrix, four_state_rectangular_path, four_state_sweep_path,
    numeric_transition_matrix, numeric_transition_matrix_with_drift, ScatterOptions, ScatterResult, WaypointPolicy,
};

/// Entries may leave `[0, 1]` by at most this much.
pub const ENTRY_TOL: f64 = 1e-9;
/// Row and column sums must equal one within this.
pub const STOCHASTIC_TOL: f64 = 1e-6;

/// `exp(−2π·coupling²/slope_diff)`.
pub fn lz_probability(coupling: f64, slope_diff: f64) -> Result<f64> {
    if !(slope_diff > 0.0) || !slope_diff.is_finite() || !coupling.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "LZ probability needs a positive slope difference (got {slope_diff})"
        )));
    }
    Ok((-2.0 * std::f64::consts::PI * coupling * coupling / slope_diff).exp())
}

/// Sweep-rate regime of the 4-state model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `v < b₁ − b₂`
    Slow,
    /// `b₁ − b₂ < v < b₁ + b₂`
    Intermediate,
    /// `v > b₁ + b₂`
    Fast,
}

impl Regime {
    pub fn number(&self) -> u8 {
        match self {
            Regime::Slow => 1,
            Regime::Intermediate => 2,
            Regime::Fast => 3,
        }
    }
}

pub fn four_state_regime(p: &FourStateParams) -> Result<Regime> {
    p.validate()?;
    let (lo, hi) = (p.b1 - p.b2, p.b1 + p.b2);
    if p.v == lo || p.v == hi {
        return Err(Error::DegenerateRegime(format!("v = {} equals b1 ∓ b2", p.v)));
    }
    Ok(if p.v < lo {
        Regime::Slow
    } else if p.v < hi {
        Regime::Intermediate
    } else {
        Regime::Fast
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    /// `entries[(n, n')]` is the probability to go from `n'` to `n`.
    #[serde(serialize_with = "serialize_rows")]
    pub entries: DMatrix<f64>,
    pub labels: Vec<String>,
    pub regime: Option<Regime>,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl TransitionMatrix {
    /// Validates the probability bounds and double stochasticity.
    pub fn new(entries: DMatrix<f64>, labels: Vec<String>, regime: Option<Regime>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n || labels.len() != n {
            return Err(Error::DimensionMismatch { context: "transition matrix", expected: n, found: labels.len() });
        }
        if let Some(x) = entries.iter().find(|x| !(-ENTRY_TOL..=1.0 + ENTRY_TOL).contains(*x)) {
            return Err(Error::InvalidParameter(format!("transition probability {x} outside [0, 1]")));
        }
        let m = Self { entries, labels, regime };
        let defect = m.stochasticity_defect();
        if defect > STOCHASTIC_TOL {
            return Err(Error::InvalidParameter(format!("transition matrix not doubly stochastic (defect {defect:.3e})")));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest deviation of a row or column sum from one.
    pub fn stochasticity_defect(&self) -> f64 {
        let rows = self.entries.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.entries.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn max_deviation(&self, other: &TransitionMatrix) -> f64 {
        (&self.entries - &other.entries).amax()
    }

    /// `P_{from→to}` with 0-based indices.
    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.entries[(to, from)]
    }

    /// Header `to\from,<labels…>`, then one row per final state.
    pub fn to_csv(&self) -> String {
        let mut out = csv_line(std::iter::once("to\\from".to_string()).chain(self.labels.iter().cloned()));
        out.push('\n');
        for (r, label) in self.labels.iter().enumerate() {
            let row: Vec<String> = self.entries.row(r).iter().map(|x| fmt_f64(*x)).collect();
            out.push_str(&csv_line(std::iter::once(label.clone()).chain(row)));
            out.push('\n');
        }
        out
    }
}

pub fn four_state_labels() -> Vec<String> {
    (1..=4).map(|k| k.to_string()).collect()
}

/// Exact large-R answer for the 4-state model in its sweep-rate regime.
pub fn four_state_closed_form(p: &FourStateParams) -> Result<TransitionMatrix> {
    let regime = four_state_regime(p)?;
    let p1 = lz_probability(p.g, p.b1 - p.b2)?;
    let p2 = lz_probability(p.gamma, p.b1 + p.b2)?;
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    let d = p1 * p2;
    let rows: [[f64; 4]; 4] = match regime {
        Regime::Slow => [
            [d, 0.0, p2 * q1, q2],
            [0.0, d, q2, p2 * q1],
            [p2 * q1, q2, d, 0.0],
            [q2, p2 * q1, 0.0, d],
        ],
        Regime::Intermediate => [
            [d, q1 * q2, p2 * q1, p1 * q2],
            [q1 * q2, d, p1 * q2, p2 * q1],
            [p2 * q1, p1 * q2, d, q1 * q2],
            [p1 * q2, p2 * q1, q1 * q2, d],
        ],
        Regime::Fast => [
            [d, 0.0, q1, p1 * q2],
            [0.0, d, p1 * q2, q1],
            [q1, p1 * q2, d, 0.0],
            [p1 * q2, q1, 0.0, d],
        ],
    };
    let m = DMatrix::from_fn(4, 4, |r, c| rows[r][c]);
    TransitionMatrix::new(m, four_state_labels(), Some(regime))
}
