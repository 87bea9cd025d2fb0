//! End-to-end tests of the `ptlab` binary: exit codes, file schemas,
//! flagged-case handling, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ptlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ptlab"));
    // Keep the output-directory fallback deterministic regardless of the
    // test environment.
    cmd.env_remove("PTLAB_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing output file {name}: {e}"))
}

#[test]
fn speedup_table_matches_hand_computed_bounds_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "speedup"

            [speedup]
            n_slices = [15]
            n_iter = [2, 3, 15]
            cost_ratios = [2.5, 100.0]
        "#,
    );
    let out = tmp.path().join("results");
    let run = ptlab(&["--config", &config, "--out", out.to_str().unwrap()], &[]);
    assert!(run.status.success(), "stderr: {:?}", run.stderr);
    let expected = "\
n_slices,n_iter,cost_ratio,bound
15,2,2.5,2.5000000000000000e0
15,2,100,7.5000000000000000e0
15,3,2.5,2.5000000000000000e0
15,3,100,5.0000000000000000e0
15,15,2.5,1.0000000000000000e0
15,15,100,1.0000000000000000e0
";
    assert_eq!(read(&out, "speedup.csv"), expected);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["experiment"], "speedup");
    assert_eq!(manifest["measured"], serde_json::Value::Null);
}

#[test]
fn speedup_without_cost_inputs_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("results");
    let run = ptlab(
        &["--experiment", "speedup", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("cost"), "diagnostic was: {stderr}");
}

#[test]
fn degenerate_single_point_stability_window_is_neutral() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "stability"

            [stability]
            re_min = 0.0
            re_max = 0.0
            im_min = 0.0
            im_max = 0.0
            resolution = 2
            iterations = [1]
        "#,
    );
    let out = tmp.path().join("results");
    let run = ptlab(&["--config", &config, "--out", out.to_str().unwrap()], &[]);
    assert!(run.status.success(), "stderr: {:?}", run.stderr);
    for name in ["coarse_serial.csv", "fine_serial.csv", "parareal_k1.csv"] {
        let body = read(&out, name);
        let mut lines = body.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scheme,re,im,amplification,accuracy_error"
        );
        let mut rows = 0;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[1], "0");
            assert_eq!(fields[2], "0");
            let amp: f64 = fields[3].parse().unwrap();
            assert_eq!(amp, 1.0, "{name}: {line}");
            rows += 1;
        }
        assert_eq!(rows, 4);
    }
}

#[test]
fn identical_stability_configs_produce_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "stability"

            [stability]
            re_min = -1.0
            re_max = 0.0
            im_min = -1.0
            im_max = 1.0
            resolution = 5
            iterations = [1, 2]
        "#,
    );
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let run = ptlab(&["--config", &config, "--out", out.to_str().unwrap()], &[]);
        assert!(run.status.success(), "stderr: {:?}", run.stderr);
    }
    for name in [
        "coarse_serial.csv",
        "fine_serial.csv",
        "parareal_k1.csv",
        "parareal_k2.csv",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn cavity_sweep_records_convergence_and_flags_the_unstable_case() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "cavity"

            [decomposition]
            t_end = 3.0
            n_slices = 3

            [cavity]
            nx = [8, 64]
            nu = [0.1]
            dt_coarse = [0.005]
            max_iter = 2
        "#,
    );
    let out = tmp.path().join("results");
    let run = ptlab(&["--config", &config, "--out", out.to_str().unwrap()], &[]);
    assert!(run.status.success(), "stderr: {:?}", run.stderr);

    let good = read(&out, "cavity_nx8_nu0.1_dtc0.005.csv");
    let lines: Vec<&str> = good.lines().collect();
    assert_eq!(lines[0], "nx,nu,dt_coarse,dt_fine,k,error,flagged_unstable");
    // Header plus k = 0, 1, 2.
    assert_eq!(lines.len(), 4);
    let mut previous = f64::INFINITY;
    for (k, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "8");
        assert_eq!(fields[4], k.to_string());
        assert_eq!(fields[6], "false");
        let error: f64 = fields[5].parse().unwrap();
        assert!(error < previous, "errors did not decrease: {good}");
        previous = error;
    }

    let flagged = read(&out, "cavity_nx64_nu0.1_dtc0.005.csv");
    let lines: Vec<&str> = flagged.lines().collect();
    assert_eq!(lines.len(), 2, "flagged case should be a single row");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[4], "0");
    assert_eq!(fields[5], "NaN");
    assert_eq!(fields[6], "true");

    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    let outcomes: Vec<&str> = manifest["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["outcome"].as_str().unwrap())
        .collect();
    assert_eq!(outcomes, ["completed", "flagged_unstable"]);
}

#[test]
fn zero_corrective_iterations_leave_only_the_prediction_row() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "cavity"

            [decomposition]
            t_end = 3.0
            n_slices = 3

            [cavity]
            nx = [8]
            nu = [0.1]
            dt_coarse = [0.005]
            max_iter = 0
        "#,
    );
    let out = tmp.path().join("results");
    let run = ptlab(
        &[
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--format",
            "json",
        ],
        &[],
    );
    assert!(run.status.success(), "stderr: {:?}", run.stderr);
    let case: serde_json::Value =
        serde_json::from_str(&read(&out, "cavity_nx8_nu0.1_dtc0.005.json")).unwrap();
    let rows = case["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["k"], 0);
    assert!(rows[0]["error"].as_f64().unwrap() > 0.0);
    assert_eq!(rows[0]["flagged_unstable"], false);
}

#[test]
fn nonpositive_viscosity_is_rejected_before_any_case_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("results");
    let run = ptlab(
        &[
            "--experiment",
            "cavity",
            "--out",
            out.to_str().unwrap(),
            "--nx",
            "8",
            "--nu",
            "-0.5",
        ],
        &[],
    );
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("viscosity"), "diagnostic was: {stderr}");
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn output_directory_falls_back_to_the_environment_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"
            experiment = "speedup"

            [speedup]
            n_slices = [4]
            n_iter = [2]
            cost_ratios = [3.0]
        "#,
    );
    let out = tmp.path().join("from_env");
    let run = ptlab(
        &["--config", &config],
        &[("PTLAB_OUT", out.to_str().unwrap())],
    );
    assert!(run.status.success(), "stderr: {:?}", run.stderr);
    assert!(out.join("speedup.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn missing_experiment_selection_is_a_configuration_error() {
    let run = ptlab(&[], &[]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("experiment"), "diagnostic was: {stderr}");
}
