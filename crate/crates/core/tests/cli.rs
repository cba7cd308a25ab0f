use std::path::Path;
use std::process::{Command, Output};

use nildyn::cli::{exit_code, Report};
use nildyn::Error;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .display()
        .to_string()
}

fn nildyn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nildyn"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn success_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&nildyn(&["analyze", &data("cat.toml")], dir.path())),
        0
    );
    assert_eq!(
        code(&nildyn(&["suword", &data("square_loop.toml")], dir.path())),
        0
    );
    assert_eq!(
        code(&nildyn(&["rotnum", &data("rotation.toml")], dir.path())),
        0
    );
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = \"nildyn/1\"\n[group\nn = 1\n").unwrap();
    let out = nildyn(&["analyze", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    std::fs::write(
        &bad,
        "version = \"nildyn/1\"\n[group]\nn = 1\n[[generators]]\nmatrix = [[1, 1], [0, 2]]\n",
    )
    .unwrap();
    let out = nildyn(&["analyze", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("generators[0]"));
}

#[test]
fn unsupported_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = nildyn(&["--json", "centralizer", "[1, 0, 1]"], dir.path());
    assert_eq!(code(&out), 3);
    let report: Report = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.results.get("classification").is_some());
}

#[test]
fn law_violation_maps_to_four() {
    assert_eq!(
        exit_code(&Error::LawViolation("oracle rank differs".into())),
        4
    );
}

#[test]
fn tolerance_miss_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let out = nildyn(
        &[
            "--depth",
            "5",
            "conjugacy",
            &data("perturbed_cat.toml"),
            "--no-probe",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 5);
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = nildyn(
        &["--json", "analyze", &data("quartic_units.toml")],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.command.name, "analyze");
    assert_eq!(report.to_json().trim_end(), text.trim_end());
}

#[test]
fn conjugacy_writes_grid_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = nildyn(
        &[
            "conjugacy",
            &data("zero_perturbation.toml"),
            "--csv",
            "res.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("phi.grid").exists());
    assert!(
        std::fs::read_to_string(dir.path().join("res.csv"))
            .unwrap()
            .lines()
            .count()
            > 1
    );
}
