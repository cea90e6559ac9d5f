use std::process::{Command, Output};

use gentwistor::gca::ComponentTag;
use gentwistor::riemann::metric_by_name;
use gentwistor::verdict::{check, parse_report, report_json, CheckParams, Structure, Verdict};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gentwistor"))
        .args(args)
        .output()
        .unwrap()
}

const CHECK: [&str; 12] = [
    "check",
    "--metric",
    "fubini-study",
    "--component",
    "-+",
    "--structure",
    "J1",
    "--seed",
    "7",
    "--base-samples",
    "4",
    "--json",
];

#[test]
fn seeded_json_is_byte_identical() {
    let a = run(&CHECK);
    let b = run(&CHECK);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let r = parse_report(std::str::from_utf8(&a.stdout).unwrap()).unwrap();
    assert_eq!(r.seed, 7);
    assert!(r.wall_time.is_none());
}

#[test]
fn library_and_cli_reports_agree() {
    let m = metric_by_name("fubini-study").unwrap();
    let params = CheckParams::new(ComponentTag::MinusPlus, Structure::J1)
        .samples(4, 32)
        .seed(7);
    let r = check(&m, &params).unwrap();
    let out = run(&CHECK);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim_end(),
        report_json(&r)
    );
}

#[test]
fn more_fibers_never_lower_the_residual() {
    let m = metric_by_name("eguchi-hanson").unwrap();
    let mut last = 0.0;
    for n in [4, 8, 16, 32] {
        let params = CheckParams::new(ComponentTag::PlusMinus, Structure::GenJ)
            .samples(4, n)
            .seed(3);
        let r = check(&m, &params).unwrap();
        assert!(r.max_residual >= last, "{n}: {} < {last}", r.max_residual);
        last = r.max_residual;
    }
}

#[test]
fn exit_codes() {
    let ok = run(&[
        "check",
        "--metric",
        "flat",
        "--component",
        "++",
        "--structure",
        "J",
        "--base-samples",
        "2",
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let missing = run(&[
        "check",
        "--metric",
        "nowhere",
        "--component",
        "++",
        "--structure",
        "J",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let semi = run(&[
        "check",
        "--metric",
        "flat",
        "--component",
        "++",
        "--structure",
        "semi",
    ]);
    assert_eq!(semi.status.code(), Some(1));
}

#[test]
fn obstruction_is_reported_as_agreement() {
    let m = metric_by_name("schwarzschild").unwrap();
    let params = CheckParams::new(ComponentTag::PlusPlus, Structure::GenJ).samples(4, 8);
    let r = check(&m, &params).unwrap();
    assert_eq!(r.verdict, Verdict::Obstructed);
    assert!(!r.prediction && r.agreement);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn type_and_curvature_verbs() {
    let t = run(&["type", "--fiber", "0,0,1,0,0,1", "--component", "++"]);
    assert_eq!(String::from_utf8(t.stdout).unwrap().trim(), "4");
    let t = run(&["type", "--fiber", "0,0,1,1,0,0", "--component", "+-"]);
    assert_eq!(String::from_utf8(t.stdout).unwrap().trim(), "3");
    let c = run(&[
        "curvature",
        "--metric",
        "s4",
        "--point",
        "0.1,-0.2,0.3,0",
        "--json",
    ]);
    assert_eq!(c.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert!(
        (v["scalar"].as_f64().unwrap().abs() - 12.0).abs() < 1e-4,
        "{v}"
    );
}

#[test]
fn metric_file_extends_the_catalog() {
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/../../metrics/s4.toml");
    let out = run(&["--metric-file", file, "catalog"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("s4-dsl")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("schwarzschild")));
}
