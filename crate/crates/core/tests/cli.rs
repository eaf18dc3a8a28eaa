use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopman-clf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("koopman-clf-cli-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const COUPLED: &str = r#"{"n":2,"truncation_degree":6,"subsystems":[{"coefficients":[
 {"component":1,"alpha":[1,0],"re":-1},{"component":1,"alpha":[0,1],"re":0.9},{"component":2,"alpha":[0,1],"re":-1}]}],
 "scheme":{"kind":"dd"},"simulation":{"trials":6,"points":10,"horizon":8,"dt":0.02}}"#;

#[test]
fn example1_analyze_and_refuse() {
    let d = dir("ex1");
    let cfg = d.join("e1.json");
    assert_eq!(run(&["example1", "--out", s(&cfg)]).status.code(), Some(0));
    let rep = d.join("r.json");
    assert_eq!(run(&["analyze", "--config", s(&cfg), "--out", s(&rep)]).status.code(), Some(0));
    let r = json(&rep);
    assert_eq!(r["outcome"], "certified");
    assert_eq!(r["rho_certified"], 1.0);
    assert!((r["condition"]["computed_sup"].as_f64().unwrap() - 0.7425).abs() < 1e-10);

    let bad = d.join("bad.json");
    run(&["example1", "--b", "0.5", "--out", s(&bad)]);
    let o = run(&["analyze", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("condition fails"));

    // a small ξ inflates Q by 1/ξ² and the weights grow geometrically
    let o = run(&["analyze", "--config", s(&cfg), "--xi", "0.5", "--out", s(&d.join("div.json"))]);
    assert_eq!(o.status.code(), Some(4));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn example2_radius_within_five_percent() {
    let d = dir("ex2");
    let cfg = d.join("e2.json");
    assert_eq!(run(&["example2", "--mu", "3", "--degree", "20", "--out", s(&cfg)]).status.code(), Some(0));
    let c = json(&cfg);
    assert!(c["subsystems"][0]["tail_l1"].is_array());
    let rep = d.join("r.json");
    assert_eq!(run(&["analyze", "--config", s(&cfg), "--out", s(&rep)]).status.code(), Some(0));
    let rho = json(&rep)["rho_certified"].as_f64().unwrap();
    let closed = 1.0 / (1.0 + (2f64.cosh() + 1.0) / 6.0);
    assert!((rho - closed).abs() <= 0.05 * closed, "ρ = {rho}");
    let o = run(&["analyze", "--config", s(&cfg), "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("alpha,degree,epsilon\n"));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn unsolvable_family_exits_2() {
    let d = dir("sl2");
    let cfg = d.join("sl2.json");
    std::fs::write(
        &cfg,
        r#"{"n":2,"truncation_degree":4,"subsystems":[
          {"coefficients":[{"component":1,"alpha":[1,0],"re":-1},{"component":1,"alpha":[0,1],"re":1},{"component":2,"alpha":[0,1],"re":-1}]},
          {"coefficients":[{"component":1,"alpha":[1,0],"re":-1},{"component":2,"alpha":[1,0],"re":1},{"component":2,"alpha":[0,1],"re":-1}]}]}"#,
    )
    .unwrap();
    let o = run(&["analyze", "--config", s(&cfg), "--out", s(&d.join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not solvable"));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn simulate_pass_and_negative_control() {
    let d = dir("sim");
    let cfg = d.join("c.json");
    std::fs::write(&cfg, COUPLED).unwrap();
    let out = d.join("audit.json");
    let traces = d.join("traces");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&out), "--trace-dir", s(&traces)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out)["audit"]["pass"], true);
    let trace = std::fs::read_to_string(traces.join("trace_signal001.csv")).unwrap();
    assert!(trace.starts_with("t,re_z1,im_z1,re_z2,im_z2,V,active_subsystem\n"));

    let o = run(&["simulate", "--config", s(&cfg), "--perturb-epsilon", "0.01", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(5));
    let a = json(&out);
    assert_eq!(a["audit"]["pass"], false);
    assert_eq!(a["perturbed"]["alpha"], serde_json::json!([0, 1]));

    // audit of a stored report
    let rep = d.join("r.json");
    run(&["analyze", "--config", s(&cfg), "--out", s(&rep)]);
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--report", s(&rep), "--out", s(&out)]).status.code(), Some(0));

    assert_eq!(run(&["simulate", "--config", s(&cfg), "--trials", "0"]).status.code(), Some(64));
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn simulate_is_deterministic() {
    let d = dir("det");
    let cfg = d.join("c.json");
    std::fs::write(&cfg, COUPLED).unwrap();
    let a = run(&["simulate", "--config", s(&cfg), "--seed", "3"]).stdout;
    let b = bin().args(["simulate", "--config", s(&cfg), "--seed", "3"]).env("KOOPMAN_CLF_THREADS", "1").output().unwrap().stdout;
    assert_eq!(a, b);
    std::fs::remove_dir_all(d).ok();
}

#[test]
fn figure_rho_curve() {
    let o = run(&["figure-rho", "--mu-min", "2.4", "--mu-max", "12", "--steps", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu,rho_closed_form"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 100);
    assert!((rows[0].1 - 0.50198).abs() < 5e-6);
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1));

    let o = run(&["figure-rho", "--mu-min", "3", "--mu-max", "6", "--steps", "3", "--pipeline", "--degree", "16"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for l in text.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[2] >= 0.95 * v[1]);
    }

    let o = run(&["figure-rho", "--mu-min", "2"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("12/5"));
}

#[test]
fn selftest_and_fault_injection() {
    let a = run(&["selftest"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, run(&["selftest"]).stdout);
    assert_eq!(run(&["selftest", "--inject-fault", "sign-flip"]).status.code(), Some(1));
}

#[test]
fn usage_and_data_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["analyze"]).status.code(), Some(64));
    assert_eq!(run(&["analyze", "--scheme", "nope"]).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    let d = dir("err");
    let cfg = d.join("bad.json");
    std::fs::write(&cfg, r#"{"n":1,"truncation_degree":3,"subsystems":[{"coefficients":[{"component":1,"alpha":[0],"re":1}]}]}"#).unwrap();
    let o = run(&["analyze", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&o.stderr).contains("constant term"));
    assert_eq!(run(&["analyze", "--config", s(&d.join("missing.json"))]).status.code(), Some(65));
    std::fs::remove_dir_all(d).ok();
}
