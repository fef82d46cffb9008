use std::process::{Command, Output};

fn dickman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dickman")).args(args).env_remove("DICKMAN_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn rho_for_cara_is_certified_half() {
    let o = dickman(&["rho", "--utility", "exp", "--alpha", "2", "--theta", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "0.5");
    assert_eq!(row[1], "concave:theta/(theta+1)");
}

#[test]
fn rho_json() {
    let o = dickman(&["rho", "--utility", "log", "--theta", "2", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["certified"], true);
}

#[test]
fn sample_output_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, threads) in [(&a, "1"), (&b, "4")] {
        let o = dickman(&[
            "sample",
            "--theta",
            "1",
            "--depth",
            "60",
            "--samples",
            "40000",
            "--seed",
            "7",
            "--threads",
            threads,
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# theta=1\n"));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "value");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 40_001);
}

#[test]
fn seed_falls_back_to_environment() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_dickman"))
        .args(["sample", "--samples", "50"])
        .env("DICKMAN_SEED", "11")
        .output()
        .unwrap();
    let with_flag = dickman(&["sample", "--samples", "50", "--seed", "11"]);
    let default = dickman(&["sample", "--samples", "50"]);
    let zero = dickman(&["sample", "--samples", "50", "--seed", "0"]);
    assert_eq!(with_env.stdout, with_flag.stdout);
    assert_eq!(default.stdout, zero.stdout);
    assert_ne!(default.stdout, with_flag.stdout);
}

#[test]
fn bound_check_reports_theoretical_value() {
    let o =
        dickman(&["bound-check", "--claim", "weighted-bernoulli", "--n", "100", "--samples", "200000", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((v["theoretical"].as_f64().unwrap() - 0.0075).abs() < 1e-15);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["samples"], 200000);
}

#[test]
fn bound_check_list_covers_every_claim() {
    let o = dickman(&["bound-check", "--list", "--format", "json"]);
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["claim"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), dickman::claims::list_claims().len());
    assert!(ids.iter().any(|i| i == "prime-poisson-log-ratio"));
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    for args in [
        vec!["sample", "--theta", "-1"],
        vec!["bogus"],
        vec!["bound-check", "--claim", "no-such-claim"],
        vec!["prime-sum", "--marks", "uniform"],
        vec!["stein", "--utility", "exp"],
        vec!["stein", "--test-fn", "cube"],
        vec!["sample", "--samples", "ten"],
    ] {
        let o = dickman(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn stein_csv_layout() {
    let o = dickman(&["stein", "--theta", "1", "--test-fn", "sin:1", "--x-max", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let header = out.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "x,f,f_prime,f_double_prime");
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 512);
}

#[test]
fn prime_table_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("primes.bin");
    let cache = cache.to_str().unwrap();
    let first = dickman(&["prime-table", "--n", "5000", "--table-cache", cache]);
    assert!(first.status.success());
    assert!(std::path::Path::new(cache).exists());
    let second = dickman(&["prime-table", "--n", "5000", "--table-cache", cache]);
    assert_eq!(first.stdout, second.stdout);
    let v: serde_json::Value = serde_json::from_str(stdout(&first).trim()).unwrap();
    assert_eq!(v["p_n"], 48611);
}

#[test]
fn prime_sum_metadata() {
    let o = dickman(&["prime-sum", "--n", "1000", "--marks", "bernoulli", "--samples", "100", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("# marks=bernoulli\n"));
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 101);
}
