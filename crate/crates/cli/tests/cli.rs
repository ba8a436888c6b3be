use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn peace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peace"))
        .args(args)
        .env_remove("PEACE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(o: &Output) -> f64 {
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).expect("json output");
    v["value"].as_f64().expect("value field")
}

fn newton_closed(d: f64) -> f64 {
    1.0 / (d.sqrt() * 2f64.powf(d) * PI.powf(d - 0.5) * 0.1f64.powf(2.0 * d - 1.0))
}

#[test]
fn compute_newton_matches_closed_form() {
    let o = peace(&["compute", "--model", &model("newton.json"), "--degree", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v = value(&o);
    assert!((v - 2.820947917738781).abs() < 1e-4, "{v}");
}

#[test]
fn compute_constant_is_zero() {
    let o = peace(&["compute", "--model", &model("constant.json"), "--degree", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&o), 0.0);
}

#[test]
fn invalid_model_exits_two_with_report() {
    let o = peace(&["compute", "--model", &model("bad.json")]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("INVALID") && out.contains("normalization"), "{out}");
}

#[test]
fn sweep_tracks_newton_curve() {
    let o = peace(&["sweep", "--model", &model("newton.json"), "--degrees", "0.1:1:0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("d,value,err"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for (k, r) in rows.iter().enumerate() {
        let d = 0.1 * (k + 1) as f64;
        assert!((r[0] - d).abs() < 1e-12);
        let expected = newton_closed(d);
        assert!(
            ((r[1] - expected) / expected).abs() < 1e-3,
            "d={d}: {} vs {expected}",
            r[1]
        );
    }
}

#[test]
fn oversized_step_gives_single_row() {
    let o = peace(&["sweep", "--model", &model("newton.json"), "--degrees", "0.5:0.7:1"]);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(out.lines().nth(1).unwrap().starts_with("0.5,"));
}

#[test]
fn bad_degree_range_is_a_usage_error() {
    for r in ["1:0.5:0.1", "0:1:0", "0:1", "a:b:c"] {
        let o = peace(&["sweep", "--model", &model("newton.json"), "--degrees", r]);
        assert_eq!(o.status.code(), Some(1), "{r}");
    }
    let o = peace(&["compute", "--model", &model("newton.json"), "--degree", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_model_is_a_usage_error() {
    let o = peace(&["compute", "--model", "/nonexistent/model.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let args = ["compute", "--model", &model("cubic.json"), "--method", "oracle"];
    let a = peace(&args);
    let b = peace(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = peace(&["validate"]);
    assert_eq!(v.stdout, peace(&["validate"]).stdout);
}

#[test]
fn oracle_stays_below_closed_integral() {
    let closed = value(&peace(&["compute", "--model", &model("cubic.json")]));
    let oracle = value(&peace(&[
        "compute",
        "--model",
        &model("cubic.json"),
        "--method",
        "oracle",
    ]));
    assert!(oracle <= closed + 1e-9 && oracle > 0.8 * closed, "{oracle} vs {closed}");
    let grid = value(&peace(&[
        "compute",
        "--model",
        &model("cubic.json"),
        "--method",
        "discrete",
        "--cells",
        "1024",
    ]));
    assert!(((grid - closed) / closed).abs() < 1e-2);
}

#[test]
fn examples_report_pass_and_unknown_names_fail() {
    let o = peace(&["example", "uniform"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("expected 1.000000000000, computed 1.000000000000") && out.contains("PASS"));
    let o = peace(&["example", "dis-con"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1024"));
    for name in ["newton", "joint", "linear-product"] {
        assert_eq!(peace(&["example", name]).status.code(), Some(0), "{name}");
    }
    assert_eq!(peace(&["example", "nosuch"]).status.code(), Some(1));
}

#[test]
fn validate_passes_and_detects_injected_fault() {
    let o = peace(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = peace(&["validate", "--inject-fault", "dif-sign"]);
    assert_ne!(o.status.code(), Some(0));
    let out = stdout(&o);
    let line = |name: &str| out.lines().find(|l| l.contains(name)).unwrap().to_string();
    assert!(line("additivity").starts_with("PASS"));
    assert!(line("signed-refinement").starts_with("FAIL"));
}

#[test]
fn validate_model_file() {
    assert_eq!(
        peace(&["validate", "--model", &model("newton.json")]).status.code(),
        Some(0)
    );
    assert_eq!(
        peace(&["validate", "--model", &model("bad.json")]).status.code(),
        Some(2)
    );
}

#[test]
fn help_never_reads_files() {
    for sub in ["compute", "sweep", "signed", "tv", "from-data", "validate", "example"] {
        let o = peace(&[sub, "--help", "--model", "/nonexistent/x.json"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"));
    }
}

#[test]
fn signed_and_tv_subcommands() {
    let o = peace(&["signed", "--model", &model("cubic.json"), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row: Vec<f64> = out
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((row[1] + row[2] - row[3]).abs() < 1e-9);
    let o = peace(&["tv", "--model", &model("uniform-grid.json")]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["flux_tv"].as_f64().unwrap() - 20f64.sqrt()).abs() < 1e-12);
    assert_eq!(peace(&["tv", "--model", &model("cubic.json")]).status.code(), Some(1));
}

#[test]
fn out_flag_and_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let o = peace(&[
        "compute",
        "--model",
        &model("uniform-grid.json"),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap() > 0.0);

    let run = |seed: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_peace"));
        c.args([
            "compute",
            "--model",
            &model("uniform-grid.json"),
            "--method",
            "oracle",
            "--oracle.budget",
            "3",
        ]);
        match seed {
            Some(s) => c.env("PEACE_SEED", s),
            None => c.env_remove("PEACE_SEED"),
        };
        c.output().unwrap().stdout
    };
    assert_eq!(run(None), run(Some("42")));
}

#[test]
fn from_data_single_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut text = String::from("x,z,y\n");
    // deterministic low-discrepancy design in place of random draws
    let n = 2000;
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        let z = ((i as f64) * 0.618_033_988_749_895).fract();
        let noise = 0.05 * ((i * 7919 % 1000) as f64 / 1000.0 - 0.5);
        text.push_str(&format!("{x},{z},{}\n", 2.0 * x + z + noise));
    }
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let o = peace(&[
        "from-data",
        "--data",
        p,
        "--x",
        "x",
        "--z",
        "z",
        "--y",
        "y",
        "--degree",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["mean_abs_gradient"].as_f64().unwrap() - 2.0).abs() < 0.2);
    assert!((v["value"].as_f64().unwrap() - 2.0).abs() < 0.3);

    let o = peace(&[
        "from-data",
        "--data",
        p,
        "--x",
        "x",
        "--z",
        "z",
        "--y",
        "y",
        "--degrees",
        "0:1:0.5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("d,value,stderr"));
    assert_eq!(out.lines().count(), 4);

    let o = peace(&["from-data", "--data", p, "--x", "nope", "--y", "y"]);
    assert_ne!(o.status.code(), Some(0));
}
