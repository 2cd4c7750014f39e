use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn polygonal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polygonal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn fit_single_component_converges() {
    let v = json(&polygonal(&[
        "fit",
        &fixture("tri05_sample.csv"),
        "--g",
        "1",
    ]));
    assert_eq!(v["converged"], true);
    assert_eq!(v["params"]["weights"].as_array().unwrap().len(), 1);
    let trace = v["trace"].as_array().unwrap();
    assert!(trace.windows(2).all(|w| w[1].as_f64() >= w[0].as_f64()));
}

#[test]
fn divergence_between_fixture_files() {
    let v = json(&polygonal(&[
        "divergence",
        &fixture("uniform.json"),
        &fixture("tri05.json"),
    ]));
    assert_eq!(v["metric"], "kl");
    assert!((v["value"].as_f64().unwrap() - 0.306853).abs() < 1e-6);
    let v = json(&polygonal(&[
        "divergence",
        "uniform",
        "tri:0.5",
        "--metric",
        "hellinger",
    ]));
    assert!((v["value"].as_f64().unwrap() - 0.114382).abs() < 1e-6);
}

#[test]
fn approximate_reports_weights_and_bound() {
    let v = json(&polygonal(&["approximate", "quad6", "--g", "2"]));
    assert_eq!(v["sup_error"].as_f64().unwrap(), 0.375);
    let w: Vec<f64> = v["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(w, vec![0.0, 0.75, 0.0]);
}

#[test]
fn select_writes_a_calibration_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    let v = json(&polygonal(&[
        "select",
        &fixture("tri05_sample.csv"),
        "--gamma",
        "3",
        "--restarts",
        "2",
        "--path-csv",
        path.to_str().unwrap(),
    ]));
    let g = v["chosen_g"].as_u64().unwrap();
    assert!((1..=3).contains(&g));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("kappa_prime,g_hat"));
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = polygonal(&[
            "simulate",
            &fixture("consistency.json"),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            o.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(polygonal(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(polygonal(&["fit"]).status.code(), Some(1));
    assert_eq!(polygonal(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_one() {
    let o = polygonal(&["fit", "/definitely/not/here.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let convex = dir.path().join("convex.csv");
    std::fs::write(&convex, "x,y\n0,1\n0.5,0\n1,1\n").unwrap();
    let o = polygonal(&["approximate", convex.to_str().unwrap(), "--g", "4"]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}
