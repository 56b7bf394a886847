//! End-to-end tests of the affinepr binary: subcommand behavior, exit codes,
//! schema validity of every JSON output, and CSV determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use affinepr::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_affinepr"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn affinepr");
    assert!(
        out.status.success(),
        "affinepr {args:?} failed: status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn run_raw(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn affinepr")
}

fn schema_check(schema_file: &str, instance: &serde_json::Value) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(schema_file);
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&schema_path).expect("read schema"))
            .expect("schema json");
    let validator = jsonschema::validator_for(&schema).expect("compile schema");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| format!("{e}"))
        .collect();
    assert!(
        errors.is_empty(),
        "{schema_file} violations: {errors:?}\ninstance: {instance}"
    );
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn construct_certify_validate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ens = tmp(&dir, "ens.json");
    run_ok(&[
        "construct",
        "--kind",
        "real-minimal",
        "--d",
        "2",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let ens_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ens).unwrap()).unwrap();
    schema_check("ensemble.schema.json", &ens_json);

    let validate = run_ok(&["validate", "--in", ens.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&validate).unwrap();
    schema_check("violations.schema.json", &v);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);

    let verdict_text = run_ok(&["certify", "--in", ens.to_str().unwrap(), "--tol", "1e-10"]);
    let verdict: serde_json::Value = serde_json::from_str(&verdict_text).unwrap();
    schema_check("verdict.schema.json", &verdict);
    assert_eq!(verdict["outcome"], "retrievable");

    // The rational mode agrees on the same input.
    let rational = run_ok(&["certify", "--in", ens.to_str().unwrap(), "--rational"]);
    let rv: serde_json::Value = serde_json::from_str(&rational).unwrap();
    assert_eq!(rv["outcome"], "retrievable");
}

#[test]
fn validate_reports_shape_findings_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = tmp(&dir, "bad.json");
    std::fs::write(
        &bad,
        r#"{"field":"real","m":2,"d":1,"rows":[[1.0],[1.0]],"shifts":[0.0]}"#,
    )
    .unwrap();
    let out = run_raw(&["validate", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    schema_check("violations.schema.json", &v);
    assert_eq!(v["violations"][0]["field"], "shifts");
}

#[test]
fn measure_then_recover_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ens = tmp(&dir, "ens.json");
    run_ok(&[
        "construct",
        "--kind",
        "complex-minimal",
        "--d",
        "2",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let ensemble: MeasurementEnsemble =
        serde_json::from_str(&std::fs::read_to_string(&ens).unwrap()).unwrap();
    let x = Signal::complex(&[
        num_complex::Complex64::new(0.7, -0.2),
        num_complex::Complex64::new(-1.1, 0.4),
    ])
    .unwrap();

    let measure_in = tmp(&dir, "measure.json");
    std::fs::write(
        &measure_in,
        serde_json::to_string(&serde_json::json!({
            "ensemble": serde_json::to_value(&ensemble).unwrap(),
            "signal": serde_json::to_value(&x).unwrap(),
        }))
        .unwrap(),
    )
    .unwrap();
    let mags_text = run_ok(&["measure", "--in", measure_in.to_str().unwrap()]);
    let mags_json: serde_json::Value = serde_json::from_str(&mags_text).unwrap();
    schema_check("magnitudes.schema.json", &mags_json);

    let recover_in = tmp(&dir, "recover.json");
    std::fs::write(
        &recover_in,
        serde_json::to_string(&serde_json::json!({
            "ensemble": serde_json::to_value(&ensemble).unwrap(),
            "magnitudes": mags_json["values"],
        }))
        .unwrap(),
    )
    .unwrap();
    let result_text = run_ok(&["recover", "--in", recover_in.to_str().unwrap()]);
    let result_json: serde_json::Value = serde_json::from_str(&result_text).unwrap();
    schema_check("recovery_result.schema.json", &result_json);
    assert_eq!(result_json["converged"], true);

    let x_hat: Signal = serde_json::from_value(result_json["x_hat"].clone()).unwrap();
    assert!(x_hat.distance(&x) < 1e-8);
}

#[test]
fn perturb_emits_a_verified_report() {
    let out_text = run_ok(&["perturb", "--kind", "real", "--d", "2", "--delta", "0.1"]);
    let report_json: serde_json::Value = serde_json::from_str(&out_text).unwrap();
    schema_check("perturbation_report.schema.json", &report_json);

    let report: PerturbationReport = serde_json::from_value(report_json).unwrap();
    report.witness.verify(&report.perturbed).unwrap();
    assert!((report.frobenius_distance - 0.1).abs() < 1e-15);

    let complex_text = run_ok(&["perturb", "--kind", "complex", "--d", "3", "--delta", "0.01"]);
    let creport: PerturbationReport =
        serde_json::from_str(&complex_text).unwrap();
    creport.witness.verify(&creport.perturbed).unwrap();
}

#[test]
fn falsify_finds_subminimal_witness() {
    let dir = tempfile::tempdir().unwrap();
    let ens = tmp(&dir, "sub.json");
    run_ok(&[
        "construct",
        "--kind",
        "generic",
        "--field",
        "complex",
        "--m",
        "5",
        "--d",
        "2",
        "--seed",
        "3",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let text = run_ok(&[
        "falsify",
        "--in",
        ens.to_str().unwrap(),
        "--seed",
        "1",
        "--restarts",
        "16",
    ]);
    let verdict: serde_json::Value = serde_json::from_str(&text).unwrap();
    schema_check("verdict.schema.json", &verdict);
    assert_eq!(verdict["outcome"], "not_retrievable");
}

#[test]
fn sparse_certify_detects_the_transition() {
    let dir = tempfile::tempdir().unwrap();
    for (m, expected) in [(2usize, "not_retrievable"), (3, "retrievable")] {
        let ens = tmp(&dir, &format!("sp{m}.json"));
        run_ok(&[
            "construct",
            "--kind",
            "generic",
            "--field",
            "real",
            "--m",
            &m.to_string(),
            "--d",
            "3",
            "--seed",
            "42",
            "--out",
            ens.to_str().unwrap(),
        ]);
        let text = run_ok(&["sparse-certify", "--in", ens.to_str().unwrap(), "--s", "1"]);
        let verdict: serde_json::Value = serde_json::from_str(&text).unwrap();
        schema_check("sparse_verdict.schema.json", &verdict);
        assert_eq!(verdict["outcome"], expected, "m = {m}");
    }
}

#[test]
fn stability_emits_estimate_and_ratio_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ens = tmp(&dir, "ens.json");
    run_ok(&[
        "construct",
        "--kind",
        "real-minimal",
        "--d",
        "2",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let csv = tmp(&dir, "ratios.csv");
    let text = run_ok(&[
        "stability",
        "--in",
        ens.to_str().unwrap(),
        "--radius",
        "5",
        "--pairs",
        "500",
        "--seed",
        "7",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let est: serde_json::Value = serde_json::from_str(&text).unwrap();
    schema_check("lipschitz_estimate.schema.json", &est);
    assert!(est["c2_hat"].as_f64().unwrap() > 0.0);

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("# affinepr-stability-ratios v1\n"));
    // header comment + column header + 500 rows
    assert_eq!(csv_text.lines().count(), 502);
}

#[test]
fn experiment_phase_transition_matches_theory_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = tmp(&dir, "t1.csv");
    let base_args = |out: &Path| {
        vec![
            "experiment".to_string(),
            "--kind".into(),
            "phase-transition".into(),
            "--field".into(),
            "real".into(),
            "--d".into(),
            "3".into(),
            "--m".into(),
            "4..8".into(),
            "--trials".into(),
            "200".into(),
            "--seed".into(),
            "1".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let args1: Vec<String> = base_args(&out1);
    let args1_ref: Vec<&str> = args1.iter().map(|s| s.as_str()).collect();
    run_ok(&args1_ref);
    let csv = std::fs::read_to_string(&out1).unwrap();
    assert!(csv.starts_with("# affinepr-experiment v1 kind=phase-transition"));

    let fraction = |m: usize| -> f64 {
        let rows: Vec<&str> = csv
            .lines()
            .skip(2)
            .filter(|l| l.split(',').nth(1) == Some(&m.to_string()))
            .collect();
        assert_eq!(rows.len(), 200, "m = {m}");
        rows.iter().filter(|l| l.ends_with("retrievable") && !l.ends_with("not_retrievable")).count() as f64
            / rows.len() as f64
    };
    assert_eq!(fraction(4), 0.0);
    assert_eq!(fraction(5), 0.0);
    assert_eq!(fraction(6), 1.0);
    assert_eq!(fraction(7), 1.0);
    assert_eq!(fraction(8), 1.0);

    // Byte-identical rerun, including in parallel.
    let out2 = tmp(&dir, "t2.csv");
    let mut args2: Vec<String> = base_args(&out2);
    args2.push("--jobs".into());
    args2.push("4".into());
    let args2_ref: Vec<&str> = args2.iter().map(|s| s.as_str()).collect();
    run_ok(&args2_ref);
    let csv2 = std::fs::read_to_string(&out2).unwrap();
    assert_eq!(csv, csv2);
}

#[test]
fn complex_falsification_experiment_finds_all_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "cf.csv");
    run_ok(&[
        "experiment",
        "--kind",
        "phase-transition",
        "--field",
        "complex",
        "--d",
        "2",
        "--m",
        "5",
        "--trials",
        "100",
        "--seed",
        "2",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|l| l.ends_with("witness_found")));
}

#[test]
fn error_taxonomy_and_exit_codes() {
    // I/O failure: format error, exit 2.
    let out = run_raw(&["certify", "--in", "/nonexistent/ens.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    schema_check("error.schema.json", &err);
    assert_eq!(err["error"], "format");

    // Domain rejection: equal shift pair in a construct spec, exit 1.
    let dir = tempfile::tempdir().unwrap();
    let spec = tmp(&dir, "pairs.json");
    std::fs::write(&spec, r#"{"pairs":[[1.0,1.0]]}"#).unwrap();
    let out = run_raw(&[
        "construct",
        "--kind",
        "real-minimal",
        "--in",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    schema_check("error.schema.json", &err);
    assert_eq!(err["error"], "domain");
    assert_eq!(err["kind"], "equal_shift_pair");

    // Domain rejection: sparsity out of range.
    let ens = tmp(&dir, "e.json");
    run_ok(&[
        "construct",
        "--kind",
        "generic",
        "--field",
        "real",
        "--m",
        "3",
        "--d",
        "3",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let out = run_raw(&["sparse-certify", "--in", ens.to_str().unwrap(), "--s", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "sparsity_range");

    // Unknown subcommand: usage text, exit 2.
    let out = run_raw(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: exit 2.
    let out = run_raw(&["certify", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn real_certification_always_decides() {
    // Inconclusive is a complex-field outcome only: a real input reaches the
    // exact certifier whenever the structured pattern does not apply.
    let dir = tempfile::tempdir().unwrap();
    for (m, seed) in [(3usize, 5u64), (4, 6), (5, 7)] {
        let ens = tmp(&dir, &format!("r{m}.json"));
        run_ok(&[
            "construct",
            "--kind",
            "generic",
            "--field",
            "real",
            "--m",
            &m.to_string(),
            "--d",
            "2",
            "--seed",
            &seed.to_string(),
            "--out",
            ens.to_str().unwrap(),
        ]);
        let text = run_ok(&["certify", "--in", ens.to_str().unwrap()]);
        let verdict: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_ne!(verdict["outcome"], "inconclusive", "m = {m}");
    }
}

#[test]
fn json_outputs_reread_and_rewrite_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ens = tmp(&dir, "ens.json");
    run_ok(&[
        "construct",
        "--kind",
        "generic",
        "--field",
        "complex",
        "--m",
        "4",
        "--d",
        "2",
        "--seed",
        "9",
        "--out",
        ens.to_str().unwrap(),
    ]);
    let first = std::fs::read_to_string(&ens).unwrap();
    let parsed: MeasurementEnsemble = serde_json::from_str(&first).unwrap();
    let mut second = serde_json::to_string_pretty(&parsed).unwrap();
    second.push('\n');
    assert_eq!(first, second);
}
