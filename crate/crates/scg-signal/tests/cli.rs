//! End-to-end checks of the command-line interface: exit codes, file
//! round trips, determinism, and the fixture files shipped in the repo.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_scg-signal")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("scg-signal-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn shipped_table1_fixture_matches_the_generator() {
    let from_file = scg_signal::instances::io::read_instance(&fixture("table1.json")).unwrap();
    let generated = scg_signal::instances::gen_table1(None).unwrap();
    assert_eq!(from_file, generated);
}

#[test]
fn generate_solve_verify_compare_pipeline() {
    let instance = tmp("d.json");
    let scheme = tmp("d_private.json");
    let out = run(&["generate", "table1", "--out", instance.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&[
        "solve",
        "private",
        "--in",
        instance.to_str().unwrap(),
        "--out",
        scheme.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["values"]["private_value"], "9");
    assert!(report["instance"]["digest"]
        .as_str()
        .unwrap()
        .starts_with("sha256:"));

    let out = run(&[
        "verify",
        "--scheme",
        scheme.to_str().unwrap(),
        "--instance",
        instance.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["values"]["status"], "OK");

    let out = run(&["compare", "--in", instance.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["values"]["private"], "9");
    assert_eq!(report["values"]["public_best"], "9");
    assert_eq!(report["values"]["full_info_best"], "11.5");
    assert_eq!(report["values"]["no_info_best"], "9");

    // Public solve in float mode agrees with the rational value.
    let out = run(&[
        "solve",
        "public",
        "--in",
        instance.to_str().unwrap(),
        "--arith",
        "float",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let value: f64 = report["values"]["public_value"]
        .as_str()
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - 9.0).abs() < 1e-7);
}

#[test]
fn random_generation_is_reproducible() {
    let a = tmp("rand_a.json");
    let b = tmp("rand_b.json");
    for path in [&a, &b] {
        let out = run(&[
            "generate", "random", "--n", "4", "--r", "3", "--states", "2", "--seed", "7",
            "--asymmetric", "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sampling_is_seed_deterministic() {
    let instance = tmp("s.json");
    let scheme = tmp("s_private.json");
    run(&["generate", "table1", "--out", instance.to_str().unwrap()]);
    run(&[
        "solve",
        "private",
        "--in",
        instance.to_str().unwrap(),
        "--out",
        scheme.to_str().unwrap(),
    ]);
    let draw = |seed: &str| -> serde_json::Value {
        let out = run(&[
            "sample",
            "--scheme",
            scheme.to_str().unwrap(),
            "--instance",
            instance.to_str().unwrap(),
            "--state",
            "theta1",
            "--seed",
            seed,
            "--draws",
            "32",
        ]);
        assert!(out.status.success());
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["draws"].clone()
    };
    let first = draw("42");
    assert_eq!(first, draw("42"));
    assert_eq!(first.as_array().unwrap().len(), 32);
    assert_ne!(first, draw("43"));
}

#[test]
fn hardness_generation_reads_edge_lists() {
    let out_path = tmp("c4.json");
    let scheme_path = tmp("c4_coloring.json");
    let out = run(&[
        "generate",
        "hardness",
        "--graph",
        fixture("c4.edges").to_str().unwrap(),
        "--q",
        "2",
        "--k",
        "1",
        "--eps",
        "0",
        "--out",
        out_path.to_str().unwrap(),
        "--scheme-out",
        scheme_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let inst = scg_signal::instances::io::read_instance(&out_path).unwrap();
    assert_eq!(inst.num_agents(), 2);
    assert_eq!(inst.num_resources(), 5);
    assert_eq!(inst.num_states(), 4);

    let out = run(&[
        "verify",
        "--scheme",
        scheme_path.to_str().unwrap(),
        "--instance",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
}

#[test]
fn exit_codes_classify_failures() {
    // 2: unreadable input.
    let out = run(&["solve", "public", "--in", "/nonexistent/nope.json"]);
    assert_eq!(out.status.code(), Some(2));

    // 2: generator parameter validation.
    let bad = tmp("unused.json");
    let out = run(&[
        "generate", "figure1", "--n", "1", "--eps", "0.01", "--out",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // 3: size guard trips when the cap is forced down.
    let instance = tmp("guard.json");
    run(&["generate", "table1", "--out", instance.to_str().unwrap()]);
    let out = run(&[
        "solve",
        "public",
        "--in",
        instance.to_str().unwrap(),
        "--max-size",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));

    // 5: a loadable private scheme that is not obedient.
    let disobedient = tmp("disobedient.json");
    // Everyone is herded onto the expensive resource in both states.
    std::fs::write(
        &disobedient,
        r#"{
  "type": "private",
  "reduced_form": [
    ["theta1", [0, 3], 0, 1, "1"],
    ["theta1", [0, 3], 1, 1, "1"],
    ["theta1", [0, 3], 2, 1, "1"],
    ["theta2", [0, 3], 0, 1, "1"],
    ["theta2", [0, 3], 1, 1, "1"],
    ["theta2", [0, 3], 2, 1, "1"]
  ]
}"#,
    )
    .unwrap();
    let out = run(&[
        "verify",
        "--scheme",
        disobedient.to_str().unwrap(),
        "--instance",
        instance.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}
