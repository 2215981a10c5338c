use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cavity_gme_cli::config::{RunConfig, ScanSpec, ScenarioSpec, TrajectorySpec};
use cavity_gme_cli::{parse_pair, Report};
use proptest::prelude::*;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavity-gme"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Structural equality with a relative tolerance on numbers.
fn close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300), "{path}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                close(p, q, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}");
            for (k, p) in x {
                close(p, &y[k], &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn golden_reports() {
    for (cmd, cfg, golden) in [
        ("scenario-a", "data/scenario_a_pinned.json", "golden/scenario_a.json"),
        ("scenario-b", "data/scenario_b_pinned.json", "golden/scenario_b.json"),
    ] {
        let got = stdout(&run(&[cmd, "--config", data(cfg).to_str().unwrap()]));
        let want = std::fs::read_to_string(data(golden)).unwrap();
        close(&serde_json::from_str(&got).unwrap(), &serde_json::from_str(&want).unwrap(), cmd);
    }
}

#[test]
fn golden_scan_csv() {
    let got = stdout(&run(&["resonance-scan", "--config", data("data/scan_small.json").to_str().unwrap()]));
    let want = std::fs::read_to_string(data("golden/scan_small.csv")).unwrap();
    let (g, w): (Vec<&str>, Vec<&str>) = (got.lines().collect(), want.lines().collect());
    assert_eq!(g[0], "u,beta1_1_2,beta1_2_3");
    assert_eq!(g.len(), w.len());
    for (a, b) in g.iter().zip(&w).skip(1) {
        for (x, y) in a.split(',').zip(b.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
        }
    }
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("data/scan_small.json");
    let mut seen = Vec::new();
    for i in 0..2 {
        let (csv, svg) = (dir.path().join(format!("s{i}.csv")), dir.path().join(format!("s{i}.svg")));
        let o = run(&["resonance-scan", "--config", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
        assert!(o.status.success() && o.stdout.is_empty());
        seen.push((std::fs::read(csv).unwrap(), std::fs::read(svg).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
    let a = run(&["scenario-a", "--config", data("data/scenario_a_pinned.json").to_str().unwrap()]);
    let b = run(&["scenario-a", "--config", data("data/scenario_a_pinned.json").to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn report_round_trips() {
    let text = stdout(&run(&["scenario-b", "--field", "dirac", "--n-max", "6"]));
    let r = Report::from_json(&text).unwrap();
    assert_eq!(r.to_json(), text);
    assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    assert!(r.result.w_fidelity.is_some());
}

#[test]
fn fermionic_scenario_a_reports_dicke_fidelity() {
    let v: Value = serde_json::from_str(&stdout(&run(&["scenario-a", "--field", "dirac", "--n-max", "6"]))).unwrap();
    let f = &v["result"]["dicke_fidelity"];
    assert_eq!(f["value"]["c0"][0].as_f64().map(|x| (x - 1.0).abs() < 1e-12), Some(true));
    assert_eq!(f["value"]["c1"], serde_json::json!([0.0, 0.0]));
}

#[test]
fn zero_h_gives_zero_witnesses() {
    for cmd in ["scenario-a", "scenario-b"] {
        for field in ["scalar", "dirac"] {
            let v: Value = serde_json::from_str(&stdout(&run(&[cmd, "--field", field, "--n-max", "6", "--h", "0"]))).unwrap();
            assert_eq!(v["result"]["witness_at_h"], 0.0, "{cmd} {field}");
            assert_eq!(v["result"]["witness"]["violated"], false);
        }
    }
}

#[test]
fn coeffs_table() {
    let t = stdout(&run(&["coeffs", "--n-max", "4"]));
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], "m,n,re,im,abs");
    assert_eq!(lines.len(), 17);
    // parity zeros are exact
    assert!(lines.contains(&"1,3,0.0,0.0,0.0"));
    let row: Vec<&str> = lines.iter().find(|l| l.starts_with("1,2,")).unwrap().split(',').collect();
    assert!((row[4].parse::<f64>().unwrap() - 1.0614e-2).abs() < 1e-6);
    let o = stdout(&run(&["coeffs", "--n-max", "3", "--pair", "1,2", "--pair", "2,3", "--oracle"]));
    assert!(o.starts_with("m,n,re,im,abs,oracle,diff\n"));
    assert_eq!(o.lines().count(), 3);
    let dirac = stdout(&run(&["coeffs", "--field", "dirac", "--n-max", "3", "--pair", "1,-2"]));
    assert_eq!(dirac.lines().count(), 2);
}

#[test]
fn single_point_scan() {
    let t = stdout(&run(&["resonance-scan", "--pair", "1,2", "--h", "0.005", "--blocks", "1"]));
    assert_eq!(t.lines().count(), 601);
    let cfg = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(cfg.path(), r#"{"scan":{"u_min":0.3,"u_max":0.4,"u_steps":1}}"#).unwrap();
    let t = stdout(&run(&["resonance-scan", "--config", cfg.path().to_str().unwrap()]));
    assert_eq!(t.lines().count(), 2);
    assert!(t.lines().nth(1).unwrap().starts_with("4.0000000000000002e-1,"));
}

#[test]
fn svg_markers() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("f.svg");
    let o = run(&["resonance-scan", "--config", data("data/scan_small.json").to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert!(o.status.success());
    let s = std::fs::read_to_string(svg).unwrap();
    assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    // j/3 for j = 1..3 and j/5 for j = 1..6
    assert_eq!(s.matches("stroke-dasharray").count(), 9);
    assert_eq!(s.matches(r#"opacity="1""#).count(), 5);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["scenario-a", "--h", "0.05", "--blocks", "3"]), 2);
    assert_eq!(code(&["scenario-a", "--h", "0.05", "--blocks", "3", "--allow-large-Nh"]), 0);
    assert_eq!(code(&["resonance-scan", "--h", "0.01", "--blocks", "15", "--pair", "1,2"]), 2);
    assert_eq!(code(&["coeffs", "--pair", "1"]), 1);
    assert_eq!(code(&["nonsense"]), 1);
    assert_eq!(code(&["scenario-a", "--config", "/nonexistent.json"]), 1);
    assert_eq!(code(&["scenario-a", "--n-max", "3"]), 1);
    assert_eq!(code(&["oracle-check", "--label-max", "2"]), 0);
    assert_eq!(code(&["--help"]), 0);
    let cfg = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(cfg.path(), r#"{"cavity":{"field":"scalar_massless"},"colour":"red"}"#).unwrap();
    assert_eq!(code(&["scenario-a", "--config", cfg.path().to_str().unwrap()]), 1);
}

#[test]
fn regime_warning_is_reported() {
    let v: Value = serde_json::from_str(&stdout(&run(&["scenario-b", "--h", "0.05", "--blocks", "3", "--allow-large-Nh"]))).unwrap();
    assert!(v["result"]["regime_warning"].as_str().unwrap().contains("N*h"));
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![Just(None), (1e-4f64..0.05, 0.1f64..4.0, 1usize..5).prop_map(|(h, tau, n)| Some(TrajectorySpec::Blocks { h, tau, n }))],
        proptest::option::of(-1e3f64..1e3),
        proptest::option::of(proptest::collection::vec(-9i32..10, 0..4)),
        proptest::collection::vec((-9i32..10, -9i32..10), 1..4),
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(|(trajectory, h, modes, pairs, seed, allow)| RunConfig {
            trajectory,
            h,
            scenario: modes.map(|modes| ScenarioSpec { modes, sign: -1, fermion_order: Default::default() }),
            scan: ScanSpec { pairs, ..Default::default() },
            seed,
            allow_large_nh: allow,
            ..Default::default()
        })
}

proptest! {
    #[test]
    fn config_json_round_trips(c in config()) {
        let s = serde_json::to_string(&c).unwrap();
        prop_assert_eq!(RunConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn pair_arg_round_trips(m in any::<i32>(), n in any::<i32>(), pad in "[ ]{0,2}") {
        prop_assert_eq!(parse_pair(&format!("{pad}{m}{pad},{pad}{n}")), Ok((m, n)));
    }
}
