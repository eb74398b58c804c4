use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use siegel_core::famalg::PerturbationFamily;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_siegel-lab"));
    c.env_remove(siegel_lab::config::PRECISION_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("siegel-lab-it-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn brjuno_csv_header_and_rows() {
    let out = run(&["brjuno", "--quotients", "golden", "--terms", "20", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    assert_eq!(lines.next().unwrap(), "n,q_n,t_n,B_n");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows[0].starts_with("1,1,"));
    assert!(rows[4].starts_with("5,8,"));
}

#[test]
fn fs_audit_example_reports_parabolic_weight() {
    let out = run(&["fs-audit", "--family", "unicritical", "--d", "2", "--c", "0.25+0i"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["command"], "fs-audit");
    assert_eq!(v["result"]["gamma_ap"], 1);
    assert_eq!(v["result"]["n_inf"], 1);
    assert_eq!(v["partial"], false);
}

#[test]
fn reports_embed_config_and_version() {
    let out = run(&["cycles", "--family", "unicritical", "--c", "-1", "--q-max", "2"]);
    let v = json_of(&out);
    assert_eq!(v["artifact"]["name"], "siegel-lab");
    assert_eq!(v["artifact"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["q_max"], 2);
    assert_eq!(v["config"]["precision_bits"], 256);
    assert!(v["config"]["tolerances"]["match"].is_f64());
}

#[test]
fn identical_runs_are_byte_identical() {
    let cases: &[&[&str]] = &[
        &["sweep", "--family", "unicritical", "--samples", "6", "--jobs", "3", "--seed", "7"],
        &["linearize", "--lambda-rot", "golden", "--order", "60"],
        &["cycles", "--family", "petal", "--d", "3", "--c", "0.2-0.1i", "--format", "csv"],
    ];
    for args in cases {
        let a = run(args);
        let b = run(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let base = ["sweep", "--family", "unicritical", "--samples", "8", "--seed", "3"];
    let one = run(&[&base[..], &["--jobs", "1"]].concat());
    let four = run(&[&base[..], &["--jobs", "4"]].concat());
    let (mut a, mut b) = (json_of(&one), json_of(&four));
    assert_eq!(a["result"], b["result"]);
    a["inputs"] = Value::Null;
    b["inputs"] = Value::Null;
    assert_eq!(a, b);
    let other = json_of(&run(&["sweep", "--family", "unicritical", "--samples", "8", "--seed", "4"]));
    assert_ne!(a["result"], other["result"]);
}

#[test]
fn json_output_round_trips() {
    let out = run(&["cycles", "--family", "unicritical", "--c", "-1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let again = siegel_lab::report::to_canonical_json(&v).unwrap();
    assert_eq!(again, text);
}

#[test]
fn perturb_families_round_trip_bit_exactly() {
    let lam = num_complex::Complex64::from_polar(1.0, std::f64::consts::TAU * (5f64.sqrt() - 1.0) / 2.0);
    let poly = format!("[[0,0],[{:e},{:e}],[1,0]]", lam.re, lam.im);
    let out = run(&["perturb", "--poly", &poly, "--family-order", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    let fam_json = &v["result"]["local_families"][0]["family"];
    let fam: PerturbationFamily = serde_json::from_value(fam_json.clone()).unwrap();
    let back = serde_json::to_value(&fam).unwrap();
    let fam2: PerturbationFamily = serde_json::from_value(back).unwrap();
    assert_eq!(fam, fam2);
    assert_eq!(fam.order(), 8);
    let text = siegel_lab::report::to_canonical_json(fam_json).unwrap();
    let fam3: PerturbationFamily = serde_json::from_str(&text).unwrap();
    assert_eq!(fam, fam3);
}

#[test]
fn exit_codes() {
    let bad = run(&["brjuno"]);
    assert_eq!(bad.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&bad.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "input");

    let rational = run(&["brjuno", "--quotients", "0.5"]);
    assert_eq!(rational.status.code(), Some(2));

    let zero = run(&["cycles", "--poly", "[[1,0]]"]);
    assert_eq!(zero.status.code(), Some(2));

    // a deliberately wrong indifference band makes the census violate the index inequality
    let defect = run(&["fs-audit", "--family", "unicritical", "--c", "-1", "--tol", "indifference=0.9"]);
    assert_eq!(defect.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&defect.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "numerical_defect");
    let report = json_of(&defect);
    assert!(!report["result"]["alarms"].as_array().unwrap().is_empty());

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn partial_results_are_marked() {
    let out = run(&["brjuno", "--quotients", "1,2,3", "--terms", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json_of(&out);
    assert_eq!(v["partial"], true);
    assert_eq!(v["result"]["sum"]["partial_sums"].as_array().unwrap().len(), 2);
}

#[test]
fn config_precedence_file_env_flag() {
    let dir = tmp_dir("cfg");
    let cfg = dir.join("c.json");
    std::fs::write(&cfg, r#"{"precision_bits": 300, "seed": 5, "tolerances": {"cluster": 2e-3}}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let get = |extra: &[&str], env: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["brjuno", "--quotients", "golden", "--terms", "3", "--config", c]).args(extra);
        if let Some(e) = env {
            cmd.env(siegel_lab::config::PRECISION_ENV, e);
        }
        let v: Value = serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap();
        v["config"].clone()
    };
    let f = get(&[], None);
    assert_eq!((f["precision_bits"].as_u64(), f["seed"].as_u64()), (Some(300), Some(5)));
    assert_eq!(f["tolerances"]["cluster"].as_f64(), Some(2e-3));
    assert_eq!(get(&[], Some("320"))["precision_bits"].as_u64(), Some(320));
    assert_eq!(get(&["--precision", "384"], Some("320"))["precision_bits"].as_u64(), Some(384));
    assert_eq!(get(&["--tol", "cluster=5e-4"], None)["tolerances"]["cluster"].as_f64(), Some(5e-4));

    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    let out = bin().args(["brjuno", "--quotients", "golden", "--config", c]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn output_file_written() {
    let dir = tmp_dir("out");
    let path = dir.join("r.csv");
    let out = run(&["cycles", "--family", "unicritical", "--c", "-1", "--format", "csv", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("index,period,"));

    let missing = dir.join("no/such/dir/r.json");
    let out = run(&["cycles", "--family", "unicritical", "--c", "-1", "-o", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("no/such/dir"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn complex_literals() {
    use num_complex::Complex64;
    use siegel_lab::parse_complex;
    assert_eq!(parse_complex("0.25+0i").unwrap(), Complex64::new(0.25, 0.0));
    assert_eq!(parse_complex("-1").unwrap(), Complex64::new(-1.0, 0.0));
    assert_eq!(parse_complex("2i").unwrap(), Complex64::new(0.0, 2.0));
    assert_eq!(parse_complex(" 0.1 - 0.3i ").unwrap(), Complex64::new(0.1, -0.3));
    assert!(parse_complex("abc").is_err());
}

#[test]
fn linearize_reports_coefficients_and_radius() {
    let out = run(&["linearize", "--lambda-rot", "golden", "--map", "quadratic", "--order", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let lin = &v["result"]["linearization"];
    assert!(lin.get("h").is_some());
    assert!(lin["radius_root_test"].as_f64().unwrap() > 0.1);
    assert_eq!(lin["h"].as_array().unwrap().len(), 201);
}
