use std::path::Path;
use std::process::{Command, Output};

use adatrans_bench::config::{ExperimentSpec, Factor, Method, Profile, Sweep};
use adatrans_bench::experiment::{run_experiment, ResultRow};
use adatrans_bench::output::{read_csv, summarize, write_csv, HEADER, SCHEMA_VERSION};
use adatrans::datagen::{Setting, SettingSpec};

fn adatrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adatrans")).args(args).output().unwrap()
}

fn tiny(methods: Vec<Method>, reps: usize) -> ExperimentSpec {
    let spec = SettingSpec {
        p: 20,
        s_k: 12,
        n_t: 20,
        n_s: 30,
        ..SettingSpec::feature_wise()
    };
    let mut e = ExperimentSpec::new(spec, methods, reps);
    e.base_seed = 3;
    e
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&mut out, rows, Path::new("mem")).unwrap();
    out
}

#[test]
fn golden_header() {
    assert_eq!(SCHEMA_VERSION, 1);
    let text = String::from_utf8(csv_bytes(&[])).unwrap();
    assert_eq!(
        text,
        "method,setting,p,s,n_T,n_S,K,h_wedge,s_k,rep,seed,l2_error_sq,delta_support_f1,kappa_diag,runtime_ms,converged\n"
    );
    assert_eq!(HEADER.len(), 16);
}

#[test]
fn one_row_gives_two_lines_and_round_trips() {
    let rows = run_experiment(&tiny(vec![Method::OracleEst], 1)).unwrap();
    assert_eq!(rows.len(), 1);
    let bytes = csv_bytes(&rows);
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    let line = text.lines().nth(1).unwrap();
    assert!(line.starts_with("oracle-est,1,20,8,20,30,2,5.9999999999999998e-1,12,0,"));
    assert!(line.ends_with(",,true"), "{line}");
    assert_eq!(read_csv(bytes.as_slice(), Path::new("mem")).unwrap(), rows);
}

#[test]
fn rows_are_ordered_and_deterministic() {
    let methods = vec![Method::FAda, Method::Lasso, Method::OracleEst];
    let a = run_experiment(&tiny(methods.clone(), 3)).unwrap();
    let b = run_experiment(&tiny(methods, 3)).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    let keys: Vec<(usize, Method)> = a.iter().map(|r| (r.rep, r.method)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    // Dropping a method leaves the data of the others untouched.
    let lasso_only = run_experiment(&tiny(vec![Method::Lasso], 3)).unwrap();
    let lasso_rows: Vec<_> = a.into_iter().filter(|r| r.method == Method::Lasso).collect();
    assert_eq!(lasso_only, lasso_rows);
}

#[test]
fn sweep_gives_one_row_per_value() {
    let mut spec = tiny(vec![Method::Lasso], 1);
    spec.sweep = Some(Sweep {
        factor: Factor::HWedge,
        values: vec![0.2, 0.4, 0.8],
    });
    let rows = run_experiment(&spec).unwrap();
    assert_eq!(rows.iter().map(|r| r.h_wedge).collect::<Vec<_>>(), vec![0.2, 0.4, 0.8]);
    let summary = summarize(&rows, Some(Factor::HWedge));
    assert_eq!(summary.len(), 3);
    assert!(summary.iter().all(|s| s.count == 1 && s.sd == 0.0));
}

#[test]
fn desk_profile_is_smaller() {
    assert_eq!(Profile::Desk.setting_spec(Setting::SampleWise).p, 100);
    assert_eq!(Profile::Paper.setting_spec(Setting::SampleWise).p, 500);
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "setting = 3\n").unwrap();
    let out = adatrans(&["bench", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(adatrans(&["bench", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let out = adatrans(&["sweep", "--factor", "h", "--values", "-1", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_fit_and_weights_work_on_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("pb");
    let p = problem.to_str().unwrap();
    let gen = adatrans(&["gen", "--setting", "2", "--p", "30", "--sk", "27", "--nt", "30", "--ns", "60", "--seed", "4", "--out", p]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let fit = adatrans(&["fit", "--problem", p, "--method", "oracle-est"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let text = String::from_utf8(fit.stdout).unwrap();
    assert!(text.starts_with("l2_error_sq "));
    assert!(text.contains("converged true"));
    let weights = adatrans(&["weights", "--problem", p, "--lambda-w", "0.5"]);
    assert!(weights.status.success());
    let text = String::from_utf8(weights.stdout).unwrap();
    assert!(text.contains("\nqp ") && text.contains("\noracle "));
}

#[test]
fn bench_writes_summary_and_plot_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let run = adatrans(&[
        "sweep", "--factor", "h", "--values", "0.3,0.6", "--p", "20", "--sk", "12", "--nt", "20", "--ns", "30",
        "--reps", "2", "--methods", "lasso,oracle-est", "--out", out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 2 * 2 * 2);
    let plot = std::fs::read_to_string(dir.path().join("res.plot.csv")).unwrap();
    assert!(plot.starts_with("x,lasso_mean,lasso_sd,oracle-est_mean,oracle-est_sd\n"));
    assert_eq!(plot.lines().count(), 3);
    assert!(dir.path().join("res.summary.csv").exists());
}
