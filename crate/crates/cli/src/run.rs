//! Task dispatch. Every task returns its primary artifact as text plus a JSON
//! payload for the run record; nothing here touches the filesystem.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use mtlz_core::evolution::{basis_state, effective_hamiltonian, propagate, ParamPath};
use mtlz_core::family::{box_grid, reports_to_csv, scan_family, DerivativePolicy};
use mtlz_core::operator::hermitian_eigensystem;
use mtlz_core::scattering::{
    chain_scatter, four_state_closed_form, four_state_event_sequence, four_state_rectangular_path,
    four_state_regime, four_state_sweep_path, numeric_transition_matrix, numeric_transition_matrix_with_drift,
    randomize_phases, ScatterOptions, TransitionMatrix,
};
use mtlz_core::util::{csv_line, fmt_f64};
use mtlz_core::wkb::{four_state_boundary_slopes, kappa_map, MapGrid};
use mtlz_core::{CVector, HamiltonianFamily, ParamPoint, C64};

use crate::config::{
    Derivatives, ExperimentConfig, Format, InitialState, ModelConfig, PathChoice, PhaseChoice, ScatterMethod,
    SweepConfig, TaskName,
};
use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub strict: bool,
    pub format: Format,
    pub trace_spectrum: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unitarity_defects: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_curvature: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub artifact: String,
    /// Companion files as `(suffix, contents)`, written next to `--out`.
    pub extra: Vec<(String, String)>,
    pub results: Value,
    /// Headline numbers, used as sweep columns.
    pub scalars: Vec<(String, f64)>,
    pub diagnostics: Diagnostics,
    pub summary: String,
    /// Set when a strict-mode check failed after the run completed.
    pub verification_failure: Option<String>,
}

impl TaskOutput {
    fn new(artifact: String, results: Value, summary: String) -> Self {
        Self {
            artifact,
            extra: Vec::new(),
            results,
            scalars: Vec::new(),
            diagnostics: Diagnostics::default(),
            summary,
            verification_failure: None,
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialize");
    s.push('\n');
    s
}

fn points(vertices: &[Vec<f64>]) -> Result<ParamPath, CliError> {
    Ok(ParamPath::new(vertices.iter().map(|v| ParamPoint::new(v.clone())).collect())?)
}

pub fn run_task(task: TaskName, cfg: &ExperimentConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    if let Some(t) = cfg.task {
        if t != task {
            return Err(CliError::Config(format!(
                "config names task '{}' but the subcommand is '{}'",
                t.as_str(),
                task.as_str()
            )));
        }
    }
    match task {
        TaskName::VerifyFamily => verify_family(cfg, ctx),
        TaskName::Evolve => evolve(cfg, ctx),
        TaskName::Scatter => scatter(cfg, ctx),
        TaskName::KappaMap => kappa(cfg, ctx),
        TaskName::Sweep => {
            let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep needs a 'sweep' block".into()))?;
            sweep_task(cfg, sweep, ctx)
        }
    }
}

fn verify_family(cfg: &ExperimentConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    let fam = cfg.model.build()?;
    let m = fam.num_generators();
    let v = &cfg.verify;
    let base = cfg.model.base_point();
    let hw = cfg.model.default_half_widths();
    let lo = v.lo.clone().unwrap_or_else(|| base.iter().zip(&hw).map(|(b, h)| b - h).collect());
    let hi = v.hi.clone().unwrap_or_else(|| base.iter().zip(&hw).map(|(b, h)| b + h).collect());
    if lo.len() != m || hi.len() != m {
        return Err(CliError::Config(format!("verify.lo and verify.hi need {m} entries for model '{}'", cfg.model.name())));
    }
    let n = v.n.unwrap_or(match m {
        0..=2 => 10,
        3 => 5,
        _ => 3,
    });
    if n == 0 || (n as f64).powi(m as i32) > 1e6 {
        return Err(CliError::Config(format!("verify.n = {n} gives an empty or oversized grid over {m} slots")));
    }
    if !(v.rel_step > 0.0) {
        return Err(CliError::Config("verify.rel_step must be positive".into()));
    }
    let policy = match v.derivatives {
        Derivatives::Auto => DerivativePolicy::Auto { rel_step: v.rel_step },
        Derivatives::CentralDifference => DerivativePolicy::CentralDifference { rel_step: v.rel_step },
    };
    let grid = box_grid(&lo, &hi, n);
    let reports = scan_family(fam.as_ref(), &grid, policy)?;
    let worst = reports.iter().map(|r| r.full_curvature_norm).fold(0.0, f64::max);
    let method = reports.first().map(|r| r.derivative_method.describe()).unwrap_or_else(|| "none".into());
    let results = json!({ "points": grid.len(), "worst_full_curvature": worst, "pairs": reports });
    let artifact = match ctx.format {
        Format::Csv => reports_to_csv(&reports, &fam.slot_names()),
        Format::JsonText => pretty(&results),
    };
    let summary = format!(
        "verify-family: worst full curvature {worst:.3e} over {} points ({method})",
        grid.len()
    );
    let mut out = TaskOutput::new(artifact, results, summary);
    out.scalars.push(("worst_full_curvature".into(), worst));
    out.diagnostics.worst_curvature = Some(worst);
    if worst > v.threshold {
        let msg = format!("worst full curvature {worst:.3e} exceeds threshold {:.3e}", v.threshold);
        if ctx.strict {
            out.verification_failure = Some(msg);
        } else {
            log::warn!("{msg}");
            out.diagnostics.warnings.push(msg);
        }
    }
    Ok(out)
}

fn initial_state(init: &InitialState, n: usize) -> Result<CVector, CliError> {
    match init {
        InitialState::State(k) => {
            if *k == 0 || *k > n {
                return Err(CliError::Config(format!("evolve.initial.state must be in 1..={n} (got {k})")));
            }
            Ok(basis_state(n, k - 1)?)
        }
        InitialState::Vector(v) => {
            if v.len() != n {
                return Err(CliError::Config(format!("evolve.initial.vector needs {n} entries (got {})", v.len())));
            }
            Ok(CVector::from_iterator(n, v.iter().map(|[re, im]| C64::new(*re, *im))))
        }
    }
}

/// Eigenvalues of the effective Hamiltonian per unit advance of slot 0 (or
/// per unit length when slot 0 does not move).
fn spectrum(fam: &dyn HamiltonianFamily, path: &ParamPath, seg: usize, tau: f64) -> Result<Vec<f64>, CliError> {
    let vel = path.velocity(seg);
    let scale = if vel[0] != 0.0 { vel[0].abs() } else { path.segment_length(seg) };
    let h = effective_hamiltonian(fam, path, seg, tau)?;
    Ok(hermitian_eigensystem(&h)?.values.iter().map(|e| e / scale).collect())
}

fn evolve(cfg: &ExperimentConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    let fam = cfg.model.build()?;
    let n = fam.dim();
    let e = &cfg.evolve;
    let vertices = match &e.path {
        Some(v) => v.clone(),
        None => cfg.model.default_path(e.r).ok_or_else(|| {
            CliError::Config(format!("model '{}' has no default path; set evolve.path", cfg.model.name()))
        })?,
    };
    let path = points(&vertices)?;
    let psi0 = initial_state(&e.initial, n)?;
    let mut opts = e.step.options()?;
    opts.trace = e.trace || ctx.trace_spectrum;
    let (psi, prop, trace) = propagate(fam.as_ref(), &path, &psi0, &opts)?;
    let pops: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();

    let artifact = if opts.trace && ctx.format == Format::Csv {
        let mut head: Vec<String> = vec!["segment".into(), "tau".into()];
        head.extend(fam.slot_names());
        head.extend((1..=n).map(|k| format!("p{k}")));
        if ctx.trace_spectrum {
            head.extend((1..=n).map(|k| format!("E{k}")));
        }
        let mut s = csv_line(head);
        s.push('\n');
        for row in &trace {
            let mut f: Vec<String> = vec![row.segment.to_string(), fmt_f64(row.tau)];
            f.extend(row.point.iter().map(|x| fmt_f64(*x)));
            f.extend(row.populations.iter().map(|x| fmt_f64(*x)));
            if ctx.trace_spectrum {
                f.extend(spectrum(fam.as_ref(), &path, row.segment, row.tau)?.into_iter().map(fmt_f64));
            }
            s.push_str(&csv_line(f));
            s.push('\n');
        }
        s
    } else if ctx.format == Format::Csv {
        let mut s = csv_line(["level", "re", "im", "population"]);
        s.push('\n');
        for (k, z) in psi.iter().enumerate() {
            s.push_str(&csv_line([fam.basis_labels()[k].clone(), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm_sqr())]));
            s.push('\n');
        }
        s
    } else {
        String::new()
    };
    let results = json!({
        "final_state": psi.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "populations": pops,
        "steps_taken": prop.steps_taken,
        "steps_rejected": prop.steps_rejected,
        "method": prop.method.describe(),
        "trace": if opts.trace { to_json(&trace) } else { Value::Null },
    });
    let artifact = if ctx.format == Format::JsonText { pretty(&results) } else { artifact };
    let summary = format!(
        "evolve: {} steps ({} rejected), unitarity defect {:.3e}, final populations [{}]",
        prop.steps_taken,
        prop.steps_rejected,
        prop.unitarity_defect,
        pops.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(", ")
    );
    let mut out = TaskOutput::new(artifact, results, summary);
    out.scalars = pops.iter().enumerate().map(|(k, p)| (format!("p{}", k + 1), *p)).collect();
    out.diagnostics.unitarity_defects.push(prop.unitarity_defect);
    Ok(out)
}

fn entry_name(r: usize, c: usize, n: usize) -> String {
    if n < 10 {
        format!("P{}{}", r + 1, c + 1)
    } else {
        format!("P{}_{}", r + 1, c + 1)
    }
}

fn scatter(cfg: &ExperimentConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    let s = &cfg.scatter;
    if !(s.r > 0.0) {
        return Err(CliError::Config(format!("scatter.R must be positive (got {})", s.r)));
    }
    let fam = cfg.model.build()?;
    let opts = ScatterOptions { propagation: s.step.options()?, strict: ctx.strict, ..Default::default() };
    let mut diag = Diagnostics::default();

    let reference = match &cfg.model {
        ModelConfig::FourState(p) => {
            four_state_regime(p)?;
            Some(four_state_closed_form(p)?)
        }
        ModelConfig::LandauZener(p) => {
            let q = p.survival_probability();
            let m = nalgebra::DMatrix::from_row_slice(2, 2, &[q, 1.0 - q, 1.0 - q, q]);
            Some(TransitionMatrix::new(m, fam.basis_labels(), None)?)
        }
        _ => None,
    };
    if s.method != ScatterMethod::Numeric && !matches!(cfg.model, ModelConfig::FourState(_)) {
        return Err(CliError::Config("chain and closed-form scattering are only available for the four-state model".into()));
    }

    let mut steps = None;
    let matrix = match s.method {
        ScatterMethod::ClosedForm => reference.clone().expect("four-state reference"),
        ScatterMethod::Chain => {
            let ModelConfig::FourState(p) = &cfg.model else { unreachable!() };
            let plan = four_state_event_sequence(p, s.r)?;
            let plan = match s.phases {
                PhaseChoice::Keep => plan,
                PhaseChoice::Random => randomize_phases(&plan, &mut ChaCha8Rng::seed_from_u64(ctx.seed)),
            };
            chain_scatter(&plan)?.1
        }
        ScatterMethod::Numeric => {
            let model = cfg.model.clone();
            let choice = s.path.clone();
            let build = move |r: f64| -> Result<ParamPath, mtlz_core::Error> {
                match (&model, &choice) {
                    (ModelConfig::FourState(p), PathChoice::Straight) => four_state_sweep_path(p, r),
                    (ModelConfig::FourState(p), PathChoice::Rectangular) => four_state_rectangular_path(p, r),
                    (_, PathChoice::Vertices(v)) => {
                        ParamPath::new(v.iter().map(|x| ParamPoint::new(x.clone())).collect())
                    }
                    (m, PathChoice::Straight) => ParamPath::new(
                        m.default_path(r).expect("checked above").into_iter().map(ParamPoint::new).collect(),
                    ),
                    (_, PathChoice::Rectangular) => unreachable!("checked above"),
                }
            };
            match (&cfg.model, &s.path) {
                (ModelConfig::FourState(_), _) | (_, PathChoice::Vertices(_)) => {}
                (m, PathChoice::Straight) if m.default_path(1.0).is_some() => {}
                (m, _) => {
                    return Err(CliError::Config(format!(
                        "model '{}' needs scatter.path = {{\"vertices\": ...}}",
                        m.name()
                    )))
                }
            }
            if s.drift && matches!(s.path, PathChoice::Vertices(_)) {
                return Err(CliError::Config("scatter.drift needs a path that scales with R".into()));
            }
            let res = if s.drift {
                numeric_transition_matrix_with_drift(fam.as_ref(), build, s.r, &opts)?
            } else {
                numeric_transition_matrix(fam.as_ref(), &build(s.r)?, &opts)?
            };
            diag.unitarity_defects.push(res.unitarity_defect);
            diag.r_drift = res.drift;
            diag.warnings.extend(res.warnings);
            steps = Some(res.steps_taken);
            res.matrix
        }
    };
    let deviation = reference.as_ref().map(|r| matrix.max_deviation(r));
    let n = matrix.dim();
    let results = json!({
        "method": s.method,
        "R": s.r,
        "regime": matrix.regime.or(reference.as_ref().and_then(|r| r.regime)),
        "matrix": matrix,
        "reference": reference,
        "max_deviation_from_reference": deviation,
        "steps_taken": steps,
    });
    let artifact = match ctx.format {
        Format::Csv => matrix.to_csv(),
        Format::JsonText => pretty(&results),
    };
    let mut summary = format!("scatter ({}): {n}x{n} transition matrix", cfg.model.name());
    if let Some(d) = deviation {
        summary.push_str(&format!(", max deviation from reference {d:.3e}"));
    }
    if let Some(d) = diag.r_drift {
        summary.push_str(&format!(", R-drift {d:.3e}"));
    }
    let mut out = TaskOutput::new(artifact, results, summary);
    out.scalars = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| (entry_name(r, c, n), matrix.entries[(r, c)])).collect();
    out.diagnostics = diag;
    Ok(out)
}

fn kappa(cfg: &ExperimentConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    let fam = cfg.model.build()?;
    let k = &cfg.kappa_map;
    let base = k.base.clone().unwrap_or_else(|| cfg.model.base_point());
    let (a, b) = k.pair;
    if a == 0 || b == 0 {
        return Err(CliError::Config("kappa_map.pair uses 1-based levels".into()));
    }
    let grid = MapGrid {
        base,
        axes: k.axes,
        x_range: (k.x.0, k.x.1),
        y_range: (k.y.0, k.y.1),
        nx: k.x.2,
        ny: k.y.2,
    };
    let slopes = match &cfg.model {
        ModelConfig::FourState(p) if k.axes == (0, 1) => four_state_boundary_slopes(p.b1, p.b2),
        _ => Vec::new(),
    };
    let map = kappa_map(fam.as_ref(), &grid, (a - 1, b - 1), slopes)?;
    let names = fam.slot_names();
    let axis_names = (
        names.get(k.axes.0).map_or("x", String::as_str),
        names.get(k.axes.1).map_or("y", String::as_str),
    );
    let argmax = map.argmax().cloned();
    let results = json!({
        "pair": [a, b],
        "cells": map.cells.len(),
        "masked": map.masked_count(),
        "argmax": argmax,
        "boundary_slopes": map.boundary_slopes,
    });
    let artifact = match ctx.format {
        Format::Csv => map.to_csv(axis_names),
        Format::JsonText => pretty(&to_json(&map)),
    };
    let summary = match &argmax {
        Some(c) => format!(
            "kappa-map: |kappa{a}{b}| max {:.3e} at ({}, {}), {} of {} cells masked",
            c.kappa.unwrap_or(0.0),
            c.x,
            c.y,
            map.masked_count(),
            map.cells.len()
        ),
        None => format!("kappa-map: every one of {} cells masked", map.cells.len()),
    };
    let mut out = TaskOutput::new(artifact, results, summary);
    if !map.boundary_slopes.is_empty() {
        out.extra.push((".lines.csv".into(), map.lines_csv(axis_names)));
    }
    if let Some(c) = argmax {
        out.scalars.push(("kappa_max".into(), c.kappa.unwrap_or(0.0)));
    }
    Ok(out)
}

fn set_pointer(root: &mut Value, pointer: &[String], x: f64) -> Result<(), CliError> {
    let missing = || CliError::Config(format!("sweep parameter '{}' not found in the config", pointer.join(".")));
    let mut node = root;
    for part in pointer {
        node = match node {
            Value::Object(m) => m.get_mut(part).ok_or_else(missing)?,
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)).ok_or_else(missing)?,
            _ => return Err(missing()),
        };
    }
    if !node.is_number() {
        return Err(CliError::Config(format!("sweep parameter '{}' is not a number", pointer.join("."))));
    }
    *node = if (node.is_u64() || node.is_i64()) && x.fract() == 0.0 {
        json!(x as i64)
    } else {
        json!(x)
    };
    Ok(())
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn sweep_task(cfg: &ExperimentConfig, sweep: &SweepConfig, ctx: &Context) -> Result<TaskOutput, CliError> {
    if sweep.count < 2 {
        return Err(CliError::Config(format!("sweep.count must be at least 2 (got {})", sweep.count)));
    }
    if sweep.task == TaskName::Sweep {
        return Err(CliError::Config("sweep.task cannot be 'sweep'".into()));
    }
    let mut template = cfg.clone();
    template.sweep = None;
    template.task = None;
    let template = serde_json::to_value(&template).expect("config serializes");
    let pointer = sweep.pointer();
    // fail fast on a bad pointer rather than once per row
    set_pointer(&mut template.clone(), &pointer, sweep.from)?;

    let values = sweep.values();
    let rows: Vec<Result<TaskOutput, CliError>> = values
        .par_iter()
        .map(|&x| {
            let mut v = template.clone();
            set_pointer(&mut v, &pointer, x)?;
            let c = ExperimentConfig::from_value(v)?;
            run_task(sweep.task, &c, ctx)
        })
        .collect();

    let columns: Vec<String> = rows
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|o| o.scalars.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut diag = Diagnostics::default();
    let mut table = Vec::with_capacity(rows.len());
    let mut failures = 0;
    for (x, row) in values.iter().zip(&rows) {
        match row {
            Ok(o) => {
                diag.unitarity_defects.extend(&o.diagnostics.unitarity_defects);
                let vals: Vec<f64> = o.scalars.iter().map(|(_, v)| *v).collect();
                let error = (vals.len() != columns.len()).then(|| "result shape differs from the first row".to_string());
                table.push((*x, vals, error));
            }
            Err(e) => {
                failures += 1;
                table.push((*x, Vec::new(), Some(e.to_string())));
            }
        }
    }
    let results = json!({
        "parameter": sweep.parameter,
        "task": sweep.task,
        "columns": columns,
        "rows": table.iter().map(|(x, v, e)| json!({"value": x, "scalars": v, "error": e})).collect::<Vec<_>>(),
    });
    let artifact = match ctx.format {
        Format::Csv => {
            let mut s = csv_line(std::iter::once(sweep.parameter.clone()).chain(columns.iter().cloned()).chain(["error".into()]));
            s.push('\n');
            for (x, v, e) in &table {
                let mut f = vec![fmt_f64(*x)];
                if v.len() == columns.len() {
                    f.extend(v.iter().map(|y| fmt_f64(*y)));
                } else {
                    f.extend(columns.iter().map(|_| String::new()));
                }
                f.push(e.as_deref().map(csv_quote).unwrap_or_default());
                s.push_str(&csv_line(f));
                s.push('\n');
            }
            s
        }
        Format::JsonText => pretty(&results),
    };
    let summary = format!(
        "sweep: {} over {} values of {}, {} failed",
        sweep.task.as_str(),
        values.len(),
        sweep.parameter,
        failures
    );
    let mut out = TaskOutput::new(artifact, results, summary);
    out.diagnostics = diag;
    Ok(out)
}
