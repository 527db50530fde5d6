use std::path::Path;
use std::process::{Command, Output};

use psmix::io::FitRecord;
use psmix::{MixturePmf, Pmf};

fn psmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_writes_result_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("result.json");
    let o = psmix(&["fit", "--data", "earthquakes", "--kernel", "poisson", "--estimator", "mle", "--out", path_arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["kernel", "support", "weights", "objective", "loglik", "grad_sup", "iterations", "converged", "seed", "estimator"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["kernel"]["family"], "poisson");
    assert_eq!(v["converged"], true);
    assert_eq!(v["estimator"], "mle");
}

#[test]
fn result_round_trips_pmf() {
    let dir = tempfile::tempdir().unwrap();
    for (estimator, kernel) in [("mle", "poisson"), ("wlse:0.4", "poisson"), ("mle", "negbinomial:4"), ("hybrid", "poisson")] {
        let out = dir.path().join("result.json");
        let o = psmix(&["fit", "--data", "earthquakes", "--kernel", kernel, "--estimator", estimator, "--out", path_arg(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let record = FitRecord::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();

        // refit in-process and compare pmfs
        let data = psmix::EmpiricalPmf::from_observations(&psmix::io::EARTHQUAKES).unwrap();
        let k: psmix::KernelSpec = kernel.parse().unwrap();
        let est: psmix::estimate::Estimator = estimator.parse().unwrap();
        let direct = psmix::estimate::fit_estimate(est, &data, &k, None).unwrap();
        let loaded = record.estimate().unwrap();
        for x in 0..=100 {
            assert!((direct.prob(x) - loaded.prob(x)).abs() <= 1e-12, "{estimator} k={x}");
        }
        if estimator != "hybrid" {
            let mix = MixturePmf::new(record.kernel, record.mixing().unwrap()).unwrap();
            assert_eq!(mix.prob(20), loaded.prob(20));
        }
    }
}

#[test]
fn theory_prints_constants() {
    let o = psmix(&["theory", "--kernel", "poisson", "--support-bound", "5", "--delta0", "0.5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["t0"], 0.5);
    assert_eq!(v["u"], 6);
    assert_eq!(v["w"], 9);
}

#[test]
fn usage_errors_exit_2() {
    let o = psmix(&["fit", "--data", "earthquakes", "--kernel", "binomial"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown kernel"), "{err}");
    assert!(err.contains("Usage"), "{err}");

    // randomized commands need an explicit seed
    let o = psmix(&["cv", "--data", "earthquakes", "--runs", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = psmix(&["fit", "--data", "earthquakes", "--estimator", "wlse:1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(psmix(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "3\n-1\n").unwrap();
    let o = psmix(&["fit", "--data", path_arg(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = psmix(&["fit", "--data", path_arg(&dir.path().join("missing.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = psmix(&["simulate", "--scenario", "nope", "--ns", "10", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = psmix(&["theory", "--kernel", "geometric", "--support-bound", "1.5", "--delta0", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn frequency_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("freq.txt");
    std::fs::write(&data, "# k count\n0 2\n3 1\n").unwrap();
    let o = psmix(&["fit", "--data", path_arg(&data), "--estimator", "empirical"]);
    assert!(o.status.success());
    let record = FitRecord::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(record.counts, vec![(0, 2), (3, 1)]);
}

#[test]
fn randomized_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["cv", "--data", "earthquakes", "--runs", "4", "--estimators", "empirical,mle,wlse:0.4", "--seed", "9"],
        &["bootstrap", "--data", "earthquakes", "--mode", "np", "-B", "40", "--k-range", "10:14", "--seed", "9"],
        &["simulate", "--scenario", "geom-finite-7", "--ns", "50,100", "--reps", "3", "--estimators", "empirical,mle", "--seed", "9"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("out{i}.csv"));
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--out", path_arg(&out)]);
            let o = psmix(&full);
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{args:?}");
        assert!(!outputs[0].is_empty());
    }
}

#[test]
fn csv_headers() {
    let o = psmix(&["bootstrap", "--data", "earthquakes", "--mode", "param", "-B", "40", "--k-range", "12", "--seed", "1"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,point,lower,upper,mode,B,level"));
    assert!(lines.next().unwrap().starts_with("12,"));

    let o = psmix(&["cv", "--data", "earthquakes", "--runs", "2", "--estimators", "mle", "--seed", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("estimator,metric,mean,se,runs"));

    let o = psmix(&["simulate", "--scenario", "poisson-finite-2", "--ns", "30", "--reps", "2", "--estimators", "empirical", "--seed", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("scenario,n,estimator,metric,scaled_mean,std_error,reps,seed"));
}
