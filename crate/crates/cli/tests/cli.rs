use std::path::Path;
use std::process::{Command, Output};

fn nmext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmext"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_fixture_writes_header_plus_f32_grid() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.udfg");
    let b = dir.path().join("b.udfg");
    for p in [&a, &b] {
        let out = nmext(&["gen-fixture", "sphere", "--resolution", "64", "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes.len(), 68 + 64 * 64 * 64 * 4);
    assert_eq!(&bytes[..4], b"UDFG");
    assert_eq!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmext(&["gen-fixture", "nope", "--out", s(&dir.path().join("x.udfg"))]);
    assert_eq!(out.status.code(), Some(2));
    let mesh = dir.path().join("m.obj");
    let out = nmext(&["extract", "--input", "fixture:sphere", "--output", s(&mesh), "--r1", "0.01", "--r2", "0.02"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!mesh.exists());
    let out = nmext(&["extract", "--input", "fixture:sphere", "--output", s(&mesh), "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nmext(&["--threads", "0", "gen-fixture", "sphere", "--out", s(&dir.path().join("y.udfg"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmext(&[
        "extract",
        "--input",
        s(&dir.path().join("absent.udfg")),
        "--output",
        s(&dir.path().join("m.obj")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn extract_then_eval_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("sphere.obj");
    let labels = dir.path().join("labels.lblf");
    let signs = dir.path().join("signs.sgnf");
    let summary = dir.path().join("summary.json");
    let out = nmext(&[
        "--threads",
        "2",
        "extract",
        "--input",
        "fixture:sphere",
        "--output",
        s(&mesh),
        "--resolution",
        "128",
        "--samples",
        "200000",
        "--dump-labels",
        s(&labels),
        "--dump-signfield",
        s(&signs),
        "--summary",
        s(&summary),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obj = std::fs::read_to_string(&mesh).unwrap();
    assert!(obj.lines().any(|l| l == "g mat_1_2"));
    assert_eq!(std::fs::metadata(&labels).unwrap().len(), 68 + 128u64.pow(3) * 4);
    assert_eq!(std::fs::metadata(&signs).unwrap().len(), 68 + 128u64.pow(3) * 5);
    let sum: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(sum["partitions"], 2);

    let report = dir.path().join("report.json");
    let csv = dir.path().join("table.csv");
    let out = nmext(&[
        "eval",
        "--mesh",
        s(&mesh),
        "--ref",
        "fixture:sphere",
        "--report",
        s(&report),
        "--csv",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let cd = rep["chamfer"].as_f64().unwrap();
    assert!(cd < 0.5, "chamfer {cd}");
    assert_eq!(rep["topology_report"]["boundary_edges"], 0);
    assert!(rep["runtime_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
}
