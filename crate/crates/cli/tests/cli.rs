use std::path::Path;
use std::process::{Command, Output};

fn mtlz(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mtlz"));
    cmd.current_dir(dir).env_remove("MTLZ_THREADS");
    if let Some(text) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_family_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlz(&["verify-family"], None, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("worst full curvature"));
    let out = stdout(&o);
    assert!(out.starts_with("t,e,j,k,commutator_norm,curl_norm,full_norm,method\n"), "{out}");
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn strict_threshold_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"verify": {"threshold": 1e-30}}"#;
    assert_eq!(code(&mtlz(&["verify-family"], Some(cfg), dir.path())), 0);
    let o = mtlz(&["verify-family", "--strict"], Some(cfg), dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn regime_boundary_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"name": "four-state", "params": {"b1": 1, "b2": 0.5, "g": 0.2, "gamma": 0.3, "v": 1.5}}}"#;
    let o = mtlz(&["scatter"], Some(cfg), dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("boundary"), "{}", stderr(&o));
}

#[test]
fn unnormalized_initial_state_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"evolve": {"initial": {"vector": [[1, 0], [1, 0], [0, 0], [0, 0]]}, "R": 2}}"#;
    let o = mtlz(&["evolve"], Some(cfg), dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("norm"));
}

#[test]
fn misspelled_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    for (cfg, key) in [
        (r#"{"scatter": {"methd": "chain"}}"#, "methd"),
        (r#"{"model": {"name": "landau-zener", "params": {"b1": 1, "b2": 0, "gg": 0.1}}}"#, "gg"),
        (r#"{"outptu": {}}"#, "outptu"),
    ] {
        let o = mtlz(&["scatter"], Some(cfg), dir.path());
        assert_eq!(code(&o), 2);
        assert!(stderr(&o).contains(&format!("`{key}`")), "{}", stderr(&o));
    }
}

#[test]
fn step_underflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"evolve": {"R": 5, "step": {"method": "adaptive", "tol": 1e-15, "min_step": 0.5, "max_step": 0.5}}}"#;
    let o = mtlz(&["evolve"], Some(cfg), dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn task_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlz(&["scatter"], Some(r#"{"task": "evolve"}"#), dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn outputs_and_record_are_reproducible() {
    let cfg = r#"{"model": {"name": "landau-zener", "params": {"b1": 0.5, "b2": 0, "g": 0.2}},
                  "scatter": {"R": 60}}"#;
    let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = mtlz(&["scatter", "--out", "p.csv"], Some(cfg), dir.path());
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            assert!(stdout(&o).is_empty());
            (std::fs::read(dir.path().join("p.csv")).unwrap(), std::fs::read(dir.path().join("p.csv.record.json")).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let record: serde_json::Value = serde_json::from_slice(&runs[0].1).unwrap();
    assert_eq!(record["task"], "scatter");
    assert!(record["diagnostics"]["unitarity_defects"][0].as_f64().unwrap() < 1e-8);
    let dev = record["results"]["max_deviation_from_reference"].as_f64().unwrap();
    assert!(dev < 1e-2, "{dev}");
    assert!(record.get("timings").is_none());
}

#[test]
fn csv_uses_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlz(&["scatter"], Some(r#"{"scatter": {"method": "closed-form"}}"#), dir.path());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let lz = |c: f64, s: f64| (-2.0 * std::f64::consts::PI * c * c / s).exp();
    assert_eq!(row[1].parse::<f64>().unwrap(), lz(0.2, 0.5) * lz(0.3, 1.5));
    let mantissa = row[1].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn json_text_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlz(&["scatter", "--format", "json-text"], Some(r#"{"scatter": {"method": "chain"}}"#), dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "slow");
    assert_eq!(v["matrix"]["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_rows_follow_sweep_order_and_record_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"scatter": {"method": "closed-form"},
                  "sweep": {"parameter": "v", "from": 0.1, "to": 0.9, "count": 5, "task": "scatter"}}"#;
    let o = mtlz(&["sweep", "--threads", "3"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("v,P11,P12,"));
    assert!(lines[0].ends_with(",error"));
    assert_eq!(lines.len(), 6);
    let v: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(v, vec![0.1, 0.30000000000000004, 0.5, 0.7000000000000001, 0.9]);
    // v = 0.5 sits on a regime boundary
    assert!(lines[3].contains("boundary"));
    let p12 = |l: &str| l.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert_eq!(p12(lines[1]), 0.0);
    assert!((p12(lines[4]) - 0.12407).abs() < 1e-4);
}

#[test]
fn sweep_value_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = r#"{"scatter": {"method": "chain", "phases": "random"},
                    "sweep": {"parameter": "v", "from": 0.2, "to": 2.0, "count": 2, "task": "scatter"}}"#;
    let o = mtlz(&["sweep", "--seed", "7"], Some(sweep), dir.path());
    let out = stdout(&o);
    let last: Vec<String> = out.lines().nth(2).unwrap().split(',').map(str::to_string).collect();
    let single = r#"{"model": {"name": "four-state", "params": {"b1": 1, "b2": 0.5, "g": 0.2, "gamma": 0.3, "v": 2.0}},
                     "scatter": {"method": "chain", "phases": "random"}}"#;
    let s = stdout(&mtlz(&["scatter", "--seed", "7"], Some(single), dir.path()));
    let first_row: Vec<&str> = s.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&last[1..5], &first_row[1..5]);
}

#[test]
fn uncoupled_level_stays_unpopulated_across_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"name": "four-state", "params": {"b1": 1, "b2": 0.5, "g": 0.2, "gamma": 0.0, "v": 0.2}},
                  "scatter": {"method": "chain"},
                  "sweep": {"parameter": "g", "from": 0.0, "to": 0.5, "count": 6, "task": "scatter"}}"#;
    let out = stdout(&mtlz(&["sweep"], Some(cfg), dir.path()));
    let lines: Vec<&str> = out.lines().collect();
    let col = lines[0].split(',').position(|h| h == "P14").unwrap();
    for l in &lines[1..] {
        let p: f64 = l.split(',').nth(col).unwrap().parse().unwrap();
        assert!(p < 1e-12, "{l}");
    }
}

#[test]
fn bad_sweep_parameter_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlz(
        &["sweep"],
        Some(r#"{"sweep": {"parameter": "vv", "from": 0, "to": 1, "count": 3, "task": "scatter"}}"#),
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("vv"));
    let o = mtlz(
        &["sweep"],
        Some(r#"{"sweep": {"parameter": "v", "from": 0, "to": 1, "count": 1, "task": "scatter"}}"#),
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn kappa_map_writes_raster_lines_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"kappa_map": {"x": [-30, 30, 21], "y": [-30, 30, 21]}}"#;
    let o = mtlz(&["kappa-map", "--out", "k.csv"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let raster = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert!(raster.starts_with("t,e,kappa,masked,domain\n"));
    assert_eq!(raster.lines().count(), 1 + 21 * 21);
    let lines = std::fs::read_to_string(dir.path().join("k.csv.lines.csv")).unwrap();
    assert_eq!(lines.lines().count(), 1 + 8);
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("k.csv.record.json")).unwrap()).unwrap();
    let arg = &rec["results"]["argmax"];
    let (t, e) = (arg["x"].as_f64().unwrap(), arg["y"].as_f64().unwrap());
    assert!((e - 1.5 * t).abs() <= 3.0 * 2.5, "argmax at ({t}, {e})");
}

#[test]
fn trace_spectrum_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"evolve": {"R": 3, "step": {"method": "fixed", "step": 0.5}}}"#;
    let o = mtlz(&["evolve", "--trace-spectrum"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "segment,tau,t,e,p1,p2,p3,p4,E1,E2,E3,E4");
    assert_eq!(lines.len(), 1 + 1 + 12);
    // levels are sorted and at t = −3 close to the diabatic energies −3, −1.5, 1.5, 3 shifted by e = −0.6
    let row: Vec<f64> = lines[1].split(',').skip(8).map(|x| x.parse().unwrap()).collect();
    assert!(row.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn thread_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: &str, args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_mtlz"))
            .current_dir(dir.path())
            .env("MTLZ_THREADS", env)
            .args(args)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("0", &["verify-family"])), 2);
    assert_eq!(code(&run("0", &["verify-family", "--threads", "2"])), 0);
    assert_eq!(code(&run("2", &["verify-family"])), 0);
}
