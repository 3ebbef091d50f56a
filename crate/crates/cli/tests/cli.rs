use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_episwitch");

const B1B2: &str = r#"[{"d":[1,1],"b":[[0,0.1],[3,0]]},{"d":[1,1],"b":[[0,3],[0.1,0]]}]"#;
const DIAG: &str = r#"[{"d":[1,4],"b":[[2,0],[0,1]]},{"d":[4,1],"b":[[1,0],[0,2]]}]"#;
const SCALAR: &str = r#"[{"d":[1],"b":[[2]]}]"#;
const DESK: &str = r#"[{"d":[1.5],"b":[[0.5]]},{"d":[2.5],"b":[[0.5]]}]"#;

fn episwitch(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("EPISWITCH_THREADS", "2").output().expect("binary runs")
}

fn run_text(dir: &Path, file: &str, text: &str, extra: &[&str]) -> Output {
    let path = dir.join(file);
    fs::write(&path, text).unwrap();
    let out = dir.join(format!("{file}.out"));
    let mut args = vec!["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    episwitch(&args)
}

fn report(dir: &Path, file: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{file}.out")).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn classify_scalar_reports_threshold_and_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_text(dir.path(), "c.json", &format!(r#"{{"name":"c","models":{SCALAR},"task":"classify"}}"#), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path(), "c.json");
    let m = &r["result"]["models"][0];
    assert!((m["r0"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((m["endemic"][0].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(m["tolerance"].as_f64().unwrap(), 1e-10);
    assert_eq!(r["task"], "classify");
    assert!(r["version"].is_string() && r["wall_clock_seconds"].is_number());
}

#[test]
fn persist_csv_respects_delta() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(r#"{{"name":"p","models":{B1B2},"task":"persist","params":{{"kappa":[0.5,0.5]}}}}"#);
    let o = run_text(dir.path(), "p.json", &text, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(dir.path(), "p.json");
    let delta = r["result"]["delta"].as_f64().unwrap();
    assert!(delta > 0.0 && r["result"]["period"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(dir.path().join("p.json.out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,sigma"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        for v in &f[1..3] {
            assert!(v.parse::<f64>().unwrap() >= delta - 1e-6);
        }
    }
}

#[test]
fn hypothesis_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Stable constituents cannot be stabilized by switching.
    let o = run_text(dir.path(), "s.json", &format!(r#"{{"name":"s","models":{B1B2},"task":"stabilize"}}"#), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // An unstable constituent rules out a DFE certificate.
    let o = run_text(dir.path(), "d.json", &format!(r#"{{"name":"d","models":{SCALAR},"task":"certify-dfe","seed":1}}"#), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // Unstable constituents cannot have the stable-mode periodic orbit.
    let o = run_text(dir.path(), "o.json", &format!(r#"{{"name":"o","models":{DIAG},"task":"orbit","params":{{"kappa":[0.5,0.5]}}}}"#), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

/// Twenty-five malformed scenarios, each with the field its diagnostic must name.
fn malformed() -> Vec<(&'static str, String)> {
    let ok_models = B1B2;
    vec![
        ("JSON", "{not json".to_string()),
        ("name", r#"{"models":[{"d":[1],"b":[[2]]}],"task":"classify"}"#.to_string()),
        ("models", r#"{"name":"x","task":"classify"}"#.to_string()),
        ("task", format!(r#"{{"name":"x","models":{SCALAR},"task":"explode"}}"#)),
        ("colour", format!(r#"{{"name":"x","models":{SCALAR},"task":"classify","colour":1}}"#)),
        ("models[0].d[0]", r#"{"name":"x","models":[{"d":[-1],"b":[[2]]}],"task":"classify"}"#.to_string()),
        ("models[0].d[1]", r#"{"name":"x","models":[{"d":[1,0],"b":[[0,1],[1,0]]}],"task":"classify"}"#.to_string()),
        ("models[0].b[0][1]", r#"{"name":"x","models":[{"d":[1,1],"b":[[0,-1],[1,0]]}],"task":"classify"}"#.to_string()),
        ("models[0].b[1]", r#"{"name":"x","models":[{"d":[1,1],"b":[[0,1],[1]]}],"task":"classify"}"#.to_string()),
        ("models[1].d", r#"{"name":"x","models":[{"d":[1,1],"b":[[0,1],[1,0]]},{"d":[1],"b":[[1]]}],"task":"classify"}"#.to_string()),
        ("models", format!(r#"{{"name":"x","models":{SCALAR},"task":"persist","params":{{"kappa":[1]}}}}"#)),
        ("params.kappa", format!(r#"{{"name":"x","models":{ok_models},"task":"persist","params":{{"kappa":[1]}}}}"#)),
        ("params.kappa", format!(r#"{{"name":"x","models":{ok_models},"task":"orbit","params":{{"kappa":[0.5,0.6]}}}}"#)),
        ("params.kappa[0]", format!(r#"{{"name":"x","models":{ok_models},"task":"persist","params":{{"kappa":[-0.5,1.5]}}}}"#)),
        ("params", format!(r#"{{"name":"x","models":{ok_models},"task":"stabilize","params":{{"horizn":3}}}}"#)),
        ("params.pi[0]", format!(r#"{{"name":"x","models":{DESK},"task":"markov","seed":1,"params":{{"pi":[[-1,2],[2,-2]],"x0":[1]}}}}"#)),
        ("params.sigma0", format!(r#"{{"name":"x","models":{DESK},"task":"markov","seed":1,"params":{{"pi":[[-1,1],[2,-2]],"x0":[1],"sigma0":3}}}}"#)),
        ("params.x0[0]", format!(r#"{{"name":"x","models":{DESK},"task":"markov","seed":1,"params":{{"pi":[[-1,1],[2,-2]],"x0":[1.5]}}}}"#)),
        ("params.signal.segments[0].mode", format!(r#"{{"name":"x","models":{SCALAR},"task":"simulate","params":{{"signal":{{"kind":"periodic","segments":[{{"mode":0,"duration":1}}]}},"x0":[0.1],"horizon":1}}}}"#)),
        ("params.signal.segments[0].duration", format!(r#"{{"name":"x","models":{SCALAR},"task":"simulate","params":{{"signal":{{"kind":"periodic","segments":[{{"mode":1,"duration":-1}}]}},"x0":[0.1],"horizon":1}}}}"#)),
        ("seed", format!(r#"{{"name":"x","models":{SCALAR},"task":"jle"}}"#)),
        ("models[0].d[0]", r#"{"name":"x","models":[{"d":["a"],"b":[[2]]}],"task":"classify"}"#.to_string()),
        ("models[0].d", r#"{"name":"x","models":[{"d":[],"b":[]}],"task":"classify"}"#.to_string()),
        ("params.horizon", format!(r#"{{"name":"x","models":{SCALAR},"task":"simulate","params":{{"signal":{{"kind":"piecewise-constant","segments":[{{"mode":1,"duration":1}}]}},"x0":[0.1],"horizon":2}}}}"#)),
        ("params.paths", format!(r#"{{"name":"x","models":{DESK},"task":"markov","seed":1,"params":{{"pi":[[-1,1],[2,-2]],"x0":[1],"paths":10}}}}"#)),
    ]
}

#[test]
fn malformed_scenarios_are_rejected_with_field_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cases = malformed();
    assert!(cases.len() >= 20);
    for (k, (field, text)) in cases.iter().enumerate() {
        let o = run_text(dir.path(), &format!("bad{k}.json"), text, &[]);
        assert_eq!(o.status.code(), Some(1), "case {k} ({field}) should exit 1: {}", stderr(&o));
        let msg = stderr(&o);
        assert!(msg.contains(field), "case {k}: diagnostic `{msg}` does not name `{field}`");
        assert!(!dir.path().join(format!("bad{k}.json.out")).exists(), "case {k} wrote output");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(episwitch(&[]).status.code(), Some(1));
    assert_eq!(episwitch(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(episwitch(&["run", "/nonexistent/scenario.json"]).status.code(), Some(1));
    assert_eq!(episwitch(&["--version"]).status.code(), Some(0));
    let o = Command::new(BIN).args(["run", "x.json"]).env("EPISWITCH_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("EPISWITCH_THREADS"));
}

#[test]
fn seed_flag_overrides_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(r#"{{"name":"m","models":{DESK},"task":"markov","seed":5,"params":{{"pi":[[-1,1],[2,-2]],"x0":[0.9],"paths":200,"t_end":5}}}}"#);
    let path = dir.path().join("m.json");
    fs::write(&path, &text).unwrap();
    let run = |out: &str, seed: Option<&str>| {
        let out = dir.path().join(out);
        let mut args = vec!["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(episwitch(&args).status.success());
        let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        (fs::read(out.join("trajectory.csv")).unwrap(), r)
    };
    let (a, ra) = run("a", None);
    let (b, rb) = run("b", None);
    let (c, rc) = run("c", Some("6"));
    assert_eq!(a, b);
    assert_eq!(ra["result"], rb["result"]);
    assert_eq!(rc["seed"], 6);
    assert_ne!(ra["result"]["xi_mean"], rc["result"]["xi_mean"]);
    assert_ne!(a, c);
}

#[test]
fn default_output_directory_is_next_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, format!(r#"{{"name":"my run","models":{SCALAR},"task":"classify"}}"#)).unwrap();
    assert!(episwitch(&["run", path.to_str().unwrap()]).status.success());
    assert!(dir.path().join("my_run/report.json").exists());
    fs::write(&path, format!(r#"{{"name":"c","models":{SCALAR},"task":"classify","output":"sub/dir"}}"#)).unwrap();
    assert!(episwitch(&["run", path.to_str().unwrap()]).status.success());
    assert!(dir.path().join("sub/dir/trajectory.svg").exists());
}

#[test]
fn plot_command() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("zero.csv");
    fs::write(&csv, "t,x1,sigma\n0,0,1\n1,0,1\n").unwrap();
    let o = episwitch(&["plot", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("zero.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.contains(r#"version="1.1""#) && svg.trim_end().ends_with("</svg>"));
    let out = dir.path().join("again.svg");
    assert!(episwitch(&["plot", csv.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(&out).unwrap().len(), svg.len());

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x1,sigma\n0,zz,1\n").unwrap();
    let o = episwitch(&["plot", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn every_task_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = [
        format!(r#"{{"name":"a","models":{B1B2},"task":"jle","seed":1,"params":{{"budget":32}}}}"#),
        format!(r#"{{"name":"b","models":{B1B2},"task":"orbit","params":{{"kappa":[0.5,0.5]}}}}"#),
        format!(r#"{{"name":"c","models":{DIAG},"task":"stabilize"}}"#),
        r#"{"name":"d","models":[{"d":[2,2],"b":[[0.5,0.5],[0.2,0.3]]},{"d":[1.5,2.5],"b":[[0.1,0.9],[0.4,0.2]]}],"task":"certify-dfe","seed":3,"params":{"samples":200}}"#.to_string(),
        format!(r#"{{"name":"e","models":{DIAG},"task":"simulate","params":{{"signal":{{"kind":"piecewise-constant","segments":[{{"mode":2,"duration":0.5}},{{"mode":1,"duration":1}}]}},"x0":[0.2,0.3],"horizon":1.5,"linear":true}}}}"#),
    ];
    for (k, text) in scenarios.iter().enumerate() {
        let file = format!("t{k}.json");
        let o = run_text(dir.path(), &file, text, &[]);
        assert!(o.status.success(), "scenario {k}: {}", stderr(&o));
        let out = dir.path().join(format!("{file}.out"));
        for a in ["report.json", "trajectory.csv", "trajectory.svg"] {
            assert!(out.join(a).metadata().unwrap().len() > 0, "scenario {k} missing {a}");
        }
    }
    let r = report(dir.path(), "t3.json");
    assert_eq!(r["result"]["certified"], true);
    assert_eq!(r["result"]["nonstrict"]["tolerance"].as_f64(), Some(1e-8));
}

#[test]
fn shipped_scenarios_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<_> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(files.len() >= 8);
    for f in files {
        let out = dir.path().join(f.file_stem().unwrap());
        let o = episwitch(&["run", f.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", f.display(), stderr(&o));
        let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(r["scenario"]["name"].as_str(), f.file_stem().unwrap().to_str().map(|s| s.replace('_', "-")).as_deref());
    }
}
