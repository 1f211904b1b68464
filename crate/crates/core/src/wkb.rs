//! Adiabatic frames and the multidimensional WKB picture.
//!
//! At a point `x` the generators share eigenvectors `|e_a⟩`, with
//! `Ĥ_j|e_a⟩ = −p_jᵃ|e_a⟩`. The momenta are gradients of actions `𝒮ᵃ`, the
//! connection `ℬ_jᵃᵇ = ⟨e_a|∂_j e_b⟩` is collinear with
//! `λ_jᵃᵇ = p_jᵃ − p_jᵇ`, and the ratio `κᵃᵇ = ℬ_jᵃᵇ/λ_jᵃᵇ` measures how
//! far from adiabatic the point is. Away from places where `κ` is large the
//! wavefunction is a sum of `e^{i𝒮ᵃ}|e_a⟩`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{propagate_matrix, ParamPath, PropagationOptions};
use crate::family::{evaluate_checked, partial_derivative, DerivativeMethod, HamiltonianFamily, ParamPoint};
use crate::operator::{eigensystem_of_matrix, CMatrix, CVector, C64};
use crate::scattering::{lz_probability, CrossingEvent};
use crate::util::{csv_line, fmt_f64};

/// Frames with a smaller gap in `Ĥ₀` are rejected (and masked in maps).
pub const DEGENERACY_GAP: f64 = 1e-8;
/// Relative size of off-diagonal elements tolerated when checking that all
/// generators are diagonal in the frame.
pub const DIAGONAL_TOL: f64 = 1e-9;
/// Default largest `κ` still treated as adiabatic.
pub const KAPPA_THRESHOLD: f64 = 0.05;
/// Pairs whose `|λ_j|` is below this for every `j` have no `κ`.
pub const LAMBDA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AdiabaticFrame {
    pub point: ParamPoint,
    /// Eigenvalues of `Ĥ₀`, ascending.
    pub energies: Vec<f64>,
    /// Column `a` is `|e_a⟩`.
    pub vectors: CMatrix,
    /// `momenta[(j, a)] = p_jᵃ`.
    pub momenta: DMatrix<f64>,
    /// Diabatic label (0-based basis index) of each eigenvector.
    pub diabatic: Vec<usize>,
}

impl AdiabaticFrame {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Eigenvector index carrying diabatic label `d`.
    pub fn index_of_label(&self, d: usize) -> Option<usize> {
        self.diabatic.iter().position(|&x| x == d)
    }

    pub fn min_gap(&self) -> f64 {
        self.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Assigns each eigenvector a distinct diabatic label, maximizing the
/// product of squared overlaps (exhaustive up to 8 states, greedy beyond).
pub fn assign_diabatic_labels(vectors: &CMatrix) -> Vec<usize> {
    let n = vectors.ncols();
    let w = DMatrix::from_fn(n, n, |a, d| vectors[(d, a)].norm_sqr().max(1e-300).ln());
    if n <= 8 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = perm.clone();
        let mut best_score = f64::NEG_INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(a, &d)| w[(a, d)]).sum();
            if s > best_score {
                best_score = s;
                best = p.to_vec();
            }
        });
        best
    } else {
        let mut taken = vec![false; n];
        let mut out = vec![0; n];
        let mut order: Vec<(f64, usize, usize)> =
            (0..n).flat_map(|a| (0..n).map(move |d| (a, d))).map(|(a, d)| (w[(a, d)], a, d)).collect();
        order.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut done = vec![false; n];
        for (_, a, d) in order {
            if !done[a] && !taken[d] {
                out[a] = d;
                done[a] = true;
                taken[d] = true;
            }
        }
        out
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Diagonalizes `Ĥ₀(x)` and reads off the momenta of every generator.
pub fn adiabatic_frame(family: &dyn HamiltonianFamily, x: &ParamPoint) -> Result<AdiabaticFrame> {
    let gens: Vec<CMatrix> = (0..family.num_generators())
        .map(|j| evaluate_checked(family, j, x).map(|h| h.into_matrix()))
        .collect::<Result<_>>()?;
    let eig = eigensystem_of_matrix(&gens[0], "H0")?;
    let gap = eig.min_gap();
    if gap < DEGENERACY_GAP {
        return Err(Error::Degenerate { point: x.coords().to_vec(), gap });
    }
    let v = &eig.vectors;
    let n = family.dim();
    let mut momenta = DMatrix::zeros(gens.len(), n);
    for (j, h) in gens.iter().enumerate() {
        let d = v.adjoint() * h * v;
        let scale = crate::operator::frobenius_norm(h).max(1.0);
        for a in 0..n {
            momenta[(j, a)] = -d[(a, a)].re;
            for b in 0..n {
                if a != b && d[(a, b)].norm() > DIAGONAL_TOL * scale {
                    return Err(Error::NotCommuting { point: x.coords().to_vec(), residual: d[(a, b)].norm() });
                }
            }
        }
    }
    Ok(AdiabaticFrame {
        point: x.clone(),
        energies: eig.values.iter().copied().collect(),
        diabatic: assign_diabatic_labels(v),
        vectors: eig.vectors,
        momenta,
    })
}

#[derive(Debug, Clone)]
pub struct CouplingField {
    pub frame: AdiabaticFrame,
    /// `connection[j][(a, b)] = ℬ_jᵃᵇ`.
    pub connection: Vec<CMatrix>,
    /// `lambda[j][(a, b)] = p_jᵃ − p_jᵇ`.
    pub lambda: Vec<DMatrix<f64>>,
    /// `κᵃᵇ` by eigenvector index; `None` on the diagonal and for pairs with
    /// no usable `λ`. Signed for real families, a modulus otherwise.
    pub kappa: Vec<Vec<Option<f64>>>,
    /// `max |λ_jᵃᵇ ℬ_kᵃᵇ − λ_kᵃᵇ ℬ_jᵃᵇ|`.
    pub collinearity_residual: f64,
    /// `max |ℬ_jᵃᵇ + (ℬ_jᵇᵃ)*|`.
    pub anti_hermiticity_residual: f64,
}

impl CouplingField {
    /// `κ` between two diabatic labels.
    pub fn kappa_between_labels(&self, d1: usize, d2: usize) -> Option<f64> {
        let a = self.frame.index_of_label(d1)?;
        let b = self.frame.index_of_label(d2)?;
        self.kappa[a][b]
    }

    /// Largest `|κ|` over all pairs.
    pub fn max_kappa(&self) -> f64 {
        self.kappa.iter().flatten().flatten().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// `κᵃᵇ` computed from slot `j` alone.
    pub fn kappa_from_slot(&self, j: usize, a: usize, b: usize) -> Option<C64> {
        let l = self.lambda[j][(a, b)];
        (l.abs() > LAMBDA_FLOOR).then(|| self.connection[j][(a, b)] / l)
    }
}

fn derivative_method(family: &dyn HamiltonianFamily) -> DerivativeMethod {
    if family.has_analytic_partials() {
        DerivativeMethod::Analytic
    } else {
        DerivativeMethod::CentralDifference { rel_step: crate::family::DEFAULT_REL_STEP }
    }
}

/// `ℬ_jᵃᵇ = ⟨e_a|∂_jĤ₀|e_b⟩ / (E_b − E_a)` and the derived `κ`.
pub fn coupling_field(family: &dyn HamiltonianFamily, x: &ParamPoint) -> Result<CouplingField> {
    let frame = adiabatic_frame(family, x)?;
    let n = frame.dim();
    let m = family.num_generators();
    let method = derivative_method(family);
    let v = &frame.vectors;
    let mut connection = Vec::with_capacity(m);
    let mut lambda = Vec::with_capacity(m);
    for j in 0..m {
        let d = v.adjoint() * partial_derivative(family, 0, j, x, method)? * v;
        connection.push(CMatrix::from_fn(n, n, |a, b| {
            if a == b {
                C64::new(0.0, 0.0)
            } else {
                d[(a, b)] / (frame.energies[b] - frame.energies[a])
            }
        }));
        lambda.push(DMatrix::from_fn(n, n, |a, b| frame.momenta[(j, a)] - frame.momenta[(j, b)]));
    }
    let real = family.is_real_valued();
    let mut kappa = vec![vec![None; n]; n];
    let mut residual = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let best = (0..m).max_by(|&i, &k| lambda[i][(a, b)].abs().total_cmp(&lambda[k][(a, b)].abs()));
            if let Some(j) = best.filter(|&j| lambda[j][(a, b)].abs() > LAMBDA_FLOOR) {
                let k = connection[j][(a, b)] / lambda[j][(a, b)];
                kappa[a][b] = Some(if real { k.re } else { k.norm() });
            }
            for j in 0..m {
                for k in (j + 1)..m {
                    let r = (connection[k][(a, b)] * lambda[j][(a, b)] - connection[j][(a, b)] * lambda[k][(a, b)]).norm();
                    residual = residual.max(r);
                }
            }
        }
    }
    let anti = connection
        .iter()
        .map(|b| (b + b.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm())))
        .fold(0.0, f64::max);
    Ok(CouplingField { frame, connection, lambda, kappa, collinearity_residual: residual, anti_hermiticity_residual: anti })
}

/// Central-difference `∂_j p_kᵃ − ∂_k p_jᵃ` for eigenvector index `a`.
pub fn momentum_curl_check(
    family: &dyn HamiltonianFamily,
    x: &ParamPoint,
    j: usize,
    k: usize,
    a: usize,
) -> Result<f64> {
    let m = family.num_generators();
    if j >= m || k >= m {
        return Err(Error::IndexOutOfRange { what: "slot", index: j.max(k), bound: m });
    }
    if a >= family.dim() {
        return Err(Error::IndexOutOfRange { what: "level", index: a, bound: family.dim() });
    }
    let p = |slot: usize, along: usize, sign: f64| -> Result<f64> {
        let h = crate::family::DEFAULT_REL_STEP * x.get(along).abs().max(1.0);
        let f = adiabatic_frame(family, &x.shifted(along, sign * h))?;
        Ok(f.momenta[(slot, a)])
    };
    let hj = crate::family::DEFAULT_REL_STEP * x.get(j).abs().max(1.0);
    let hk = crate::family::DEFAULT_REL_STEP * x.get(k).abs().max(1.0);
    let djpk = (p(k, j, 1.0)? - p(k, j, -1.0)?) / (2.0 * hj);
    let dkpj = (p(j, k, 1.0)? - p(j, k, -1.0)?) / (2.0 * hk);
    Ok((djpk - dkpj).abs())
}

/// Rectangular grid over two slots, other coordinates taken from `base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapGrid {
    pub base: Vec<f64>,
    pub axes: (usize, usize),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl MapGrid {
    /// `(t, e)` grid for two-slot families such as the 4-state model.
    pub fn plane(lo: f64, hi: f64, n: usize) -> Self {
        Self { base: vec![0.0, 0.0], axes: (0, 1), x_range: (lo, hi), y_range: (lo, hi), nx: n, ny: n }
    }

    fn coord(range: (f64, f64), n: usize, i: usize) -> f64 {
        if n == 1 {
            range.0
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        Self::coord(self.x_range, self.nx, i)
    }

    pub fn y(&self, i: usize) -> f64 {
        Self::coord(self.y_range, self.ny, i)
    }

    pub fn spacing(&self) -> (f64, f64) {
        let s = |r: (f64, f64), n: usize| if n > 1 { (r.1 - r.0) / (n - 1) as f64 } else { 0.0 };
        (s(self.x_range, self.nx), s(self.y_range, self.ny))
    }

    fn point(&self, ix: usize, iy: usize) -> ParamPoint {
        let mut c = self.base.clone();
        c[self.axes.0] = self.x(ix);
        c[self.axes.1] = self.y(iy);
        ParamPoint::new(c)
    }

    fn validate(&self, family: &dyn HamiltonianFamily) -> Result<()> {
        let m = family.num_generators();
        if self.base.len() != m {
            return Err(Error::DimensionMismatch { context: "map base point", expected: m, found: self.base.len() });
        }
        if self.axes.0 >= m || self.axes.1 >= m || self.axes.0 == self.axes.1 {
            return Err(Error::InvalidParameter(format!("invalid map axes {:?}", self.axes)));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidParameter("map grid needs at least one point per axis".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapCell {
    pub x: f64,
    pub y: f64,
    /// `|κ|` for the requested pair; `None` when masked or undefined.
    pub kappa: Option<f64>,
    pub masked: bool,
    pub domain: Option<u8>,
}

/// κ raster for one diabatic pair, with the analytic boundary lines when
/// the family has them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainMap {
    pub model: String,
    pub pair: (usize, usize),
    pub grid: MapGrid,
    /// Row-major with `x` varying fastest.
    pub cells: Vec<MapCell>,
    /// Slopes of boundary lines `y = s·x` through the origin.
    pub boundary_slopes: Vec<f64>,
}

/// The 4-state degeneracy lines `e = (±b₂ ± b₁)t`, sorted by slope.
pub fn four_state_boundary_slopes(b1: f64, b2: f64) -> Vec<f64> {
    let mut s = vec![b1 + b2, b1 - b2, -(b1 - b2), -(b1 + b2)];
    s.sort_by(f64::total_cmp);
    s
}

/// Number of the sector between boundary lines that contains `(x, y)`.
///
/// Sectors are numbered 1.. counterclockwise starting from the one that
/// contains the negative `y` axis. Points on a line get `None`.
pub fn domain_of(slopes: &[f64], x: f64, y: f64) -> Option<u8> {
    use std::f64::consts::{PI, TAU};
    if slopes.is_empty() || (x == 0.0 && y == 0.0) {
        return None;
    }
    let mut rays: Vec<f64> = slopes.iter().flat_map(|s| [s.atan().rem_euclid(TAU), (s.atan() + PI).rem_euclid(TAU)]).collect();
    rays.sort_by(f64::total_cmp);
    let angle = y.atan2(x).rem_euclid(TAU);
    if rays.iter().any(|r| (r - angle).abs() < 1e-15) {
        return None;
    }
    let sector = |a: f64| rays.iter().filter(|&&r| r < a).count() % rays.len();
    let start = sector(1.5 * PI);
    let k = (sector(angle) + rays.len() - start) % rays.len();
    Some(k as u8 + 1)
}

/// Evaluates `|κ|` for diabatic pair `pair` on `grid` in parallel. Points
/// whose frame cannot be built (degenerate or ill-conditioned) are masked.
pub fn kappa_map(
    family: &dyn HamiltonianFamily,
    grid: &MapGrid,
    pair: (usize, usize),
    boundary_slopes: Vec<f64>,
) -> Result<DomainMap> {
    grid.validate(family)?;
    let n = family.dim();
    if pair.0 >= n || pair.1 >= n || pair.0 == pair.1 {
        return Err(Error::InvalidParameter(format!("invalid level pair ({}, {})", pair.0 + 1, pair.1 + 1)));
    }
    let cells = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|idx| {
            let (ix, iy) = (idx % grid.nx, idx / grid.nx);
            let x = grid.point(ix, iy);
            let (px, py) = (grid.x(ix), grid.y(iy));
            let kappa = coupling_field(family, &x).ok().and_then(|f| f.kappa_between_labels(pair.0, pair.1));
            MapCell {
                x: px,
                y: py,
                kappa: kappa.map(f64::abs),
                masked: kappa.is_none(),
                domain: domain_of(&boundary_slopes, px, py),
            }
        })
        .collect();
    Ok(DomainMap { model: family.name().to_string(), pair, grid: grid.clone(), cells, boundary_slopes })
}

impl DomainMap {
    /// Unmasked cell with the largest `κ`.
    pub fn argmax(&self) -> Option<&MapCell> {
        self.cells
            .iter()
            .filter(|c| c.kappa.is_some())
            .max_by(|a, b| a.kappa.unwrap().total_cmp(&b.kappa.unwrap()))
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|c| c.masked).count()
    }

    /// Columns `x,y,kappa,masked,domain`; masked cells have an empty κ.
    pub fn to_csv(&self, names: (&str, &str)) -> String {
        let mut out = csv_line([names.0, names.1, "kappa", "masked", "domain"]);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&csv_line([
                fmt_f64(c.x),
                fmt_f64(c.y),
                c.kappa.map(fmt_f64).unwrap_or_default(),
                (c.masked as u8).to_string(),
                c.domain.map(|d| d.to_string()).unwrap_or_default(),
            ]));
            out.push('\n');
        }
        out
    }

    /// Boundary lines clipped to the grid's x range, as two-point polylines.
    pub fn lines_csv(&self, names: (&str, &str)) -> String {
        let mut out = csv_line(["line", "slope", names.0, names.1]);
        out.push('\n');
        for (i, s) in self.boundary_slopes.iter().enumerate() {
            for x in [self.grid.x_range.0, self.grid.x_range.1] {
                out.push_str(&csv_line([(i + 1).to_string(), fmt_f64(*s), fmt_f64(x), fmt_f64(s * x)]));
                out.push('\n');
            }
        }
        out
    }
}

/// Angular half-width, seen from the origin, of the region around the line
/// `y = slope·x` (at fixed `x`) where `|κ|` for `pair` exceeds `threshold`.
///
/// The row is scanned over `±window` around the line and the two edges of
/// the region containing the line are refined by bisection.
pub fn kappa_angular_half_width(
    family: &dyn HamiltonianFamily,
    grid_base: &MapGrid,
    pair: (usize, usize),
    x: f64,
    slope: f64,
    threshold: f64,
    window: f64,
) -> Result<f64> {
    let at = |y: f64| -> f64 {
        let mut c = grid_base.base.clone();
        c[grid_base.axes.0] = x;
        c[grid_base.axes.1] = y;
        coupling_field(family, &ParamPoint::new(c))
            .ok()
            .and_then(|f| f.kappa_between_labels(pair.0, pair.1))
            .map(f64::abs)
            .unwrap_or(f64::INFINITY)
    };
    let y0 = slope * x;
    if !(at(y0) > threshold) {
        return Err(Error::InvalidParameter(format!("|κ| at the line point ({x}, {y0}) is below {threshold}")));
    }
    let edge = |dir: f64| -> Result<f64> {
        let steps = 400;
        let mut inside = y0;
        for i in 1..=steps {
            let y = y0 + dir * window * i as f64 / steps as f64;
            if at(y) > threshold {
                inside = y;
            } else {
                let mut lo = inside;
                let mut hi = y;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::InvalidParameter(format!("κ region around ({x}, {y0}) extends past the scan window")))
    };
    let (lo, hi) = (edge(-1.0)?, edge(1.0)?);
    let ang = |y: f64| y.atan2(x);
    Ok((ang(hi) - ang(y0)).abs().max((ang(y0) - ang(lo)).abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WkbOptions {
    pub kappa_threshold: f64,
    /// Sample points per unit of coordinate length along each segment.
    pub samples_per_unit: f64,
    pub min_samples: usize,
}

impl Default for WkbOptions {
    fn default() -> Self {
        Self { kappa_threshold: KAPPA_THRESHOLD, samples_per_unit: 20.0, min_samples: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct WkbResult {
    /// Amplitudes on the transported final frame.
    pub amplitudes: CVector,
    /// `Δ𝒮ᵃ = ∫ p_jᵃ dx^j` by the trapezoid rule.
    pub action: Vec<f64>,
    pub max_kappa: f64,
    pub initial_frame: AdiabaticFrame,
    /// Final frame with eigenvector phases carried continuously along the path.
    pub final_frame: AdiabaticFrame,
}

fn align_gauge(prev: &CMatrix, next: &mut CMatrix) {
    for a in 0..next.ncols() {
        let ov: C64 = prev.column(a).dotc(&next.column(a));
        if ov.norm() > 0.0 {
            let phase = ov.conj() / ov.norm();
            for r in 0..next.nrows() {
                next[(r, a)] *= phase;
            }
        }
    }
}

/// Adiabatic transport of frame amplitudes along `path`:
/// `Ψᵃ(x) = e^{iΔ𝒮ᵃ} Ψᵃ(x₀)`.
pub fn wkb_propagate(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    amplitudes: &CVector,
    opts: &WkbOptions,
) -> Result<WkbResult> {
    if amplitudes.len() != family.dim() {
        return Err(Error::DimensionMismatch { context: "WKB amplitudes", expected: family.dim(), found: amplitudes.len() });
    }
    let first = coupling_field(family, path.start())?;
    let mut max_kappa = first.max_kappa();
    if max_kappa > opts.kappa_threshold {
        return Err(Error::Adiabaticity { point: path.start().coords().to_vec(), kappa: max_kappa });
    }
    let initial = first.frame;
    let n = family.dim();
    let mut action = vec![0.0; n];
    let mut frame = initial.clone();
    for seg in 0..path.num_segments() {
        let dx = path.velocity(seg);
        let samples = ((path.segment_length(seg) * opts.samples_per_unit).ceil() as usize).max(opts.min_samples);
        for i in 1..=samples {
            let x = path.point(seg, i as f64 / samples as f64);
            let field = coupling_field(family, &x)?;
            let k = field.max_kappa();
            max_kappa = max_kappa.max(k);
            if k > opts.kappa_threshold {
                return Err(Error::Adiabaticity { point: x.coords().to_vec(), kappa: k });
            }
            let mut next = field.frame;
            if next.diabatic != frame.diabatic {
                return Err(Error::Adiabaticity { point: x.coords().to_vec(), kappa: k });
            }
            align_gauge(&frame.vectors, &mut next.vectors);
            for (a, s) in action.iter_mut().enumerate() {
                let dot = |f: &AdiabaticFrame| dx.iter().enumerate().map(|(j, v)| v * f.momenta[(j, a)]).sum::<f64>();
                *s += 0.5 * (dot(&frame) + dot(&next)) / samples as f64;
            }
            frame = next;
        }
    }
    let amps = CVector::from_iterator(n, (0..n).map(|a| amplitudes[a] * C64::from_polar(1.0, action[a])));
    Ok(WkbResult { amplitudes: amps, action, max_kappa, initial_frame: initial, final_frame: frame })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WkbComparison {
    /// `max_a ||Ψᵃ_full|² − |Ψᵃ_wkb|²|`.
    pub population_difference: f64,
    /// `‖Ψ_full − Ψ_wkb‖` in the transported frame.
    pub amplitude_difference: f64,
    pub max_kappa: f64,
}

/// Runs [`wkb_propagate`] and the full integrator from the same initial
/// frame amplitudes and compares them in the transported final frame.
pub fn wkb_compare(
    family: &dyn HamiltonianFamily,
    path: &ParamPath,
    amplitudes: &CVector,
    wkb: &WkbOptions,
    prop: &PropagationOptions,
) -> Result<WkbComparison> {
    let w = wkb_propagate(family, path, amplitudes, wkb)?;
    let u = propagate_matrix(family, path, prop)?;
    let psi0 = &w.initial_frame.vectors * amplitudes;
    let full = w.final_frame.vectors.adjoint() * (u.unitary * psi0);
    let pops = (0..full.len())
        .map(|a| (full[a].norm_sqr() - w.amplitudes[a].norm_sqr()).abs())
        .fold(0.0, f64::max);
    Ok(WkbComparison {
        population_difference: pops,
        amplitude_difference: (&full - &w.amplitudes).norm(),
        max_kappa: w.max_kappa,
    })
}

/// Isolated two-level crossing of diabatic levels `pair`, driven along slot `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LzCrossing {
    pub pair: (usize, usize),
    pub generator: usize,
    /// `|∂_j (H_j[aa] − H_j[bb])|`.
    pub slope: f64,
    /// `|H_j[ab]|`.
    pub coupling: f64,
    pub coupling_sign: f64,
    /// Diabatic level whose `H_j` diagonal grows faster along `x^j`.
    pub higher_slope: usize,
}

impl LzCrossing {
    /// Reads slope and coupling for `pair` from generator `j` at `x`.
    pub fn from_family(family: &dyn HamiltonianFamily, x: &ParamPoint, j: usize, pair: (usize, usize)) -> Result<Self> {
        let n = family.dim();
        let (a, b) = pair;
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidParameter(format!("invalid level pair ({}, {})", a + 1, b + 1)));
        }
        let h = evaluate_checked(family, j, x)?.into_matrix();
        let d = partial_derivative(family, j, j, x, derivative_method(family))?;
        let ds = d[(a, a)].re - d[(b, b)].re;
        if ds == 0.0 {
            return Err(Error::UnsupportedCrossing(format!("levels {} and {} are parallel along slot {j}", a + 1, b + 1)));
        }
        let c = h[(a, b)];
        Ok(Self {
            pair,
            generator: j,
            slope: ds.abs(),
            coupling: c.norm(),
            coupling_sign: if c.re < 0.0 { -1.0 } else { 1.0 },
            higher_slope: if ds > 0.0 { a } else { b },
        })
    }

    pub fn probability(&self) -> Result<f64> {
        lz_probability(self.coupling, self.slope)
    }
}

fn diabatic_energy(frame: &AdiabaticFrame, d: usize) -> f64 {
    frame.energies[frame.index_of_label(d).expect("labels form a permutation")]
}

/// LZ block `S̄_ab ⊕ I` connecting the domain of `frame_in` with that of
/// `frame_out`, in diabatic labels. Exactly one pair of diabatic levels may
/// change energy order between the two frames, and it must be the
/// crossing's pair.
pub fn match_domains(frame_in: &AdiabaticFrame, frame_out: &AdiabaticFrame, crossing: &LzCrossing) -> Result<CMatrix> {
    let n = frame_in.dim();
    if frame_out.dim() != n {
        return Err(Error::DimensionMismatch { context: "matched frames", expected: n, found: frame_out.dim() });
    }
    let mut swapped = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let before = diabatic_energy(frame_in, a) < diabatic_energy(frame_in, b);
            let after = diabatic_energy(frame_out, a) < diabatic_energy(frame_out, b);
            if before != after {
                swapped.push((a, b));
            }
        }
    }
    let want = (crossing.pair.0.min(crossing.pair.1), crossing.pair.0.max(crossing.pair.1));
    if swapped != [want] {
        return Err(Error::UnsupportedCrossing(format!(
            "expected only levels {} and {} to swap between domains, found {:?}",
            want.0 + 1,
            want.1 + 1,
            swapped.iter().map(|(a, b)| (a + 1, b + 1)).collect::<Vec<_>>()
        )));
    }
    let event = CrossingEvent {
        location: 0.0,
        pair: crossing.pair,
        probability: crossing.probability()?,
        phase: 0.0,
        coupling_sign: crossing.coupling_sign,
        higher_slope: crossing.higher_slope,
        generator: crossing.generator,
        phase_group: 0,
    };
    let labels = (1..=n).map(|k| k.to_string()).collect();
    let plan = crate::scattering::ChainScatteringPlan::new(n, vec![event], labels)?;
    Ok(crate::scattering::chain_scatter(&plan)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaudin_family, FourStateFamily, FourStateParams, GaudinParams};

    fn four() -> FourStateFamily {
        FourStateFamily::new(FourStateParams::reference(0.0)).unwrap()
    }

    #[test]
    fn frame_near_diabatic_far_out() {
        let f = adiabatic_frame(&four(), &[20.0, 5.0].into()).unwrap();
        let mut d = [25.0, -15.0, 10.0, -10.0];
        d.sort_by(f64::total_cmp);
        for (e, x) in f.energies.iter().zip(d) {
            assert!((e - x).abs() < 5e-2, "{e} vs {x}");
        }
        assert_eq!(f.diabatic, vec![1, 3, 2, 0]);
    }

    #[test]
    fn degenerate_point_is_rejected() {
        assert!(matches!(adiabatic_frame(&four(), &[0.0, 1.0].into()), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn kappa_asymptote_and_collinearity() {
        let field = coupling_field(&four(), &[30.0, 5.0].into()).unwrap();
        let k = field.kappa_between_labels(1, 2).unwrap();
        let asymptote = 0.3 * 1.5 / (1.5f64 * 30.0 - 5.0).powi(3);
        assert!((k.abs() / asymptote - 1.0).abs() < 0.1, "{k} vs {asymptote}");
        assert!(field.collinearity_residual < 1e-8);
        // κ from either slot agrees
        let (a, b) = (field.frame.index_of_label(1).unwrap(), field.frame.index_of_label(2).unwrap());
        let k0 = field.kappa_from_slot(0, a, b).unwrap();
        let k1 = field.kappa_from_slot(1, a, b).unwrap();
        assert!((k0 - k1).norm() < 1e-6);
    }

    #[test]
    fn momentum_curl_vanishes() {
        for a in 0..4 {
            assert!(momentum_curl_check(&four(), &[5.0, 2.0].into(), 0, 1, a).unwrap() < 1e-6);
        }
        let g = gaudin_family(GaudinParams { epsilons: vec![1.0, -0.4], b: 0.8 }).unwrap();
        for a in 0..4 {
            assert!(momentum_curl_check(&g, &g.point(), 0, 1, a).unwrap() < 1e-6);
        }
    }

    #[test]
    fn domain_numbering() {
        let s = four_state_boundary_slopes(1.0, 0.5);
        assert_eq!(domain_of(&s, 0.0, -1.0), Some(1));
        assert_eq!(domain_of(&s, 1.0, 0.0), Some(3));
        assert_eq!(domain_of(&s, -1.0, 0.0), Some(7));
        assert_eq!(domain_of(&s, 0.0, 1.0), Some(5));
        assert_eq!(domain_of(&s, 2.0, 3.0), None);
        let all: std::collections::BTreeSet<u8> = (0..360)
            .filter_map(|d| {
                let t = (d as f64 + 0.5).to_radians();
                domain_of(&s, t.cos(), t.sin())
            })
            .collect();
        assert_eq!(all.len(), 8);
    }

    #[test]
    fn uncoupled_map_is_zero() {
        let mut p = FourStateParams::reference(0.0);
        p.g = 0.0;
        p.gamma = 0.0;
        let fam = FourStateFamily::new(p).unwrap();
        let map = kappa_map(&fam, &MapGrid::plane(-10.0, 10.0, 11), (1, 2), vec![]).unwrap();
        assert!(map.cells.iter().all(|c| c.masked || c.kappa == Some(0.0)));
        assert!(map.masked_count() > 0);
    }

    #[test]
    fn match_block_structure() {
        let fam = four();
        let fin = adiabatic_frame(&fam, &[20.0, 25.0].into()).unwrap();
        let fout = adiabatic_frame(&fam, &[20.0, 35.0].into()).unwrap();
        let c = LzCrossing::from_family(&fam, &[20.0, 30.0].into(), 0, (1, 2)).unwrap();
        assert!((c.slope - 1.5).abs() < 1e-15);
        assert!((c.coupling - 0.3).abs() < 1e-15);
        let s = match_domains(&fin, &fout, &c).unwrap();
        for r in [0, 3] {
            for k in 0..4 {
                let expect = if r == k { 1.0 } else { 0.0 };
                assert_eq!(s[(r, k)], C64::new(expect, 0.0));
                assert_eq!(s[(k, r)], C64::new(expect, 0.0));
            }
        }
        assert!((s[(1, 1)].norm_sqr() - c.probability().unwrap()).abs() < 1e-15);
        let far = adiabatic_frame(&fam, &[-20.0, 35.0].into()).unwrap();
        assert!(matches!(match_domains(&fin, &far, &c), Err(Error::UnsupportedCrossing(_))));
    }
}
