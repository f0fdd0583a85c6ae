use std::path::Path;
use std::process::{Command, Output};

fn dynsbm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynsbm"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn simulate_is_reproducible_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(dynsbm(
            &[
                "--seed",
                "9",
                "simulate",
                "--scenario",
                "scenario2",
                "--n",
                "10"
            ],
            d
        )
        .status
        .success());
    }
    let text = read(&a.join("sim_001.json"));
    assert_eq!(text, read(&b.join("sim_001.json")));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let edges = v["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 3);
    assert!(edges.iter().all(|s| s.as_array().unwrap().len() == 45));

    let c = dir.path().join("c");
    assert!(dynsbm(
        &[
            "simulate",
            "--scenario",
            "scenario1",
            "--n",
            "150",
            "--no-latent"
        ],
        &c
    )
    .status
    .success());
    let v: serde_json::Value = serde_json::from_str(&read(&c.join("sim_001.json"))).unwrap();
    assert_eq!(v["edges"].as_array().unwrap().len(), 2);
    assert!(v.get("latent").is_none_or(|l| l.is_null()));
}

#[test]
fn fit_reads_simulated_files_and_reports_missing_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        dynsbm(&["simulate", "--scenario", "scenario2", "--n", "30"], d)
            .status
            .success()
    );
    let input = d.join("sim_001.json");
    let out = dynsbm(
        &["fit", "--input", input.to_str().unwrap(), "--states", "1"],
        d,
    );
    assert!(out.status.success());
    let csv = read(&d.join("estimates.csv"));
    assert!(csv.starts_with("replicate,group,t,q,l,x,estimate,truth\n"));
    assert!(csv.contains("\n1,pi,1,1,,,1,\n"));
    let fit: serde_json::Value = serde_json::from_str(&read(&d.join("fit.json"))).unwrap();
    assert_eq!(fit["n_iterations"], 1);

    let out = dynsbm(
        &["fit", "--input", "/nonexistent/net.json", "--states", "2"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn fit_with_truth_fills_the_truth_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        dynsbm(&["simulate", "--scenario", "scenario2", "--n", "40"], d)
            .status
            .success()
    );
    let input = d.join("sim_001.json");
    let out = dynsbm(
        &[
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--scenario",
            "scenario2",
            "--restarts",
            "3",
        ],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&d.join("estimates.csv"));
    let bp_rows: Vec<&str> = csv.lines().filter(|l| l.starts_with("1,bp,")).collect();
    assert_eq!(bp_rows.len(), 3 * 6 * 3);
    assert!(bp_rows.iter().all(|l| !l.ends_with(',')));
    assert_eq!(csv.lines().filter(|l| l.starts_with("1,sigma,")).count(), 3);
}

#[test]
fn config_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.json");
    std::fs::write(
        &config,
        r#"{"scenario": "scenario2", "n": 12, "replicates": 2, "seed": 4}"#,
    )
    .unwrap();
    let out = dynsbm(
        &["--config", config.to_str().unwrap(), "simulate", "--n", "8"],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&read(&d.join("sim_002.json"))).unwrap();
    assert_eq!(v["n"], 8);
    assert!(!d.join("sim_003.json").exists());
}

#[test]
fn identify_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        dynsbm(&["identify", "--scenario", "scenario1", "--n", "150"], d)
            .status
            .code(),
        Some(0)
    );
    assert!(d.join("identify_report.json").exists());
    assert_eq!(
        dynsbm(&["identify", "--scenario", "scenario2", "--n", "8"], d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        dynsbm(&["identify", "--scenario", "nope", "--n", "8"], d)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dynsbm(
            &[
                "identify",
                "--scenario",
                "scenario1",
                "--n",
                "150",
                "--theorem",
                "t3"
            ],
            d
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn single_replicate_experiment_draws_degenerate_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = dynsbm(
        &[
            "experiment",
            "--scenario",
            "scenario1_inhomogeneous",
            "--n",
            "20",
            "--replicates",
            "1",
            "--restarts",
            "2",
        ],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for panel in ["pi", "bp", "rho_t2", "rho_t3", "rho_t4"] {
        let svg = read(&d.join(format!("boxplot_{panel}.svg")));
        assert!(svg.lines().nth(1).unwrap().starts_with("<!-- dynsbm-cli"));
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&d.join("summary.json"))).unwrap();
    assert_eq!(summary["replicates"].as_array().unwrap().len(), 1);
    assert!(summary.get("elapsed").is_none());
}

#[test]
fn recover_demo_reports_errors_and_violations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = dynsbm(
        &["recover-demo", "--scenario", "scenario1", "--method", "phi"],
        d,
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(&d.join("recover_phi.json"))).unwrap();
    assert!(report["max_abs_error"].as_f64().unwrap() < 1e-8);

    let out = dynsbm(
        &[
            "recover-demo",
            "--scenario",
            "scenario2",
            "--method",
            "static",
        ],
        d,
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(&d.join("recover_static.json"))).unwrap();
    assert!(report["max_abs_error"].as_f64().unwrap() < 1e-10);

    // Three edge states cannot carry six independent laws.
    let out = dynsbm(
        &["recover-demo", "--scenario", "scenario2", "--method", "phi"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        dynsbm(
            &["recover-demo", "--scenario", "scenario2", "--method", "x"],
            d
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn small_rank_table_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = dynsbm(
        &[
            "rank-table",
            "--q-min",
            "2",
            "--q-max",
            "2",
            "--kappa-min",
            "2",
            "--kappa-max",
            "2",
            "--trials",
            "1",
        ],
        d,
    );
    assert!(out.status.success());
    assert_eq!(
        read(&d.join("rank_table.csv")),
        "Q,kappa,minimal_m,trials,rel_tol\n2,2,4,1,0.000000001\n"
    );
}
