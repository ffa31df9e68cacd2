use hardphase::cli::{main_with, read_bundle_checkpoint, EXIT_CONFIG, EXIT_GUARD, EXIT_IDENTITY, EXIT_NONCONVERGENCE};
use hardphase::config::{SimConfig, OUTPUT_DIR_ENV};
use hardphase::error::Error;
use hardphase::io::*;
use proptest::prelude::*;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

// The output-directory override is process wide.
static ENV: Mutex<()> = Mutex::new(());

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hardphase-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

const SMALL: &str = "c = 1.0\nfamily = \"radial\"\namplitude = 0.1\ndepth = 1\nbasis_degree = 3\ndt = 1e-3\nt_final = 0.005\n";

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let out = dir.join("out");
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{body}output_dir = {:?}\n", out.to_str().unwrap())).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let mut v = vec!["hardphase"];
    v.extend_from_slice(args);
    main_with(v)
}

fn sim(dir: &Path, body: &str) -> i32 {
    let cfg = write_config(dir, body);
    run(&["simulate", "--config", cfg.to_str().unwrap()])
}

#[test]
fn fmt17_examples() {
    assert_eq!(fmt17(1.0), "1.0000000000000000e0");
    assert_eq!(fmt17(-0.1), "-1.0000000000000001e-1");
    assert_eq!(fmt17(f64::INFINITY), "inf");
    assert_eq!(fmt17(f64::NEG_INFINITY), "-inf");
    assert_eq!(fmt17(f64::NAN), "nan");
}

proptest! {
    #[test]
    fn fmt17_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = fmt17(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        let mant = s.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
        prop_assert_eq!(mant.len(), 17);
    }

    #[test]
    fn checkpoint_round_trips(rows in 0usize..5, cols in 0usize..7, seed in any::<u64>()) {
        let dir = scratch(&format!("ck{seed}"));
        let data: Vec<f64> = (0..rows * cols).map(|i| (seed as f64 + i as f64).sin()).collect();
        let p = dir.join("a.bin");
        write_checkpoint(&p, &[rows, cols], &data).unwrap();
        let (d, x) = read_checkpoint(&p).unwrap();
        prop_assert_eq!(d, vec![rows, cols]);
        prop_assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_config_keys_are_rejected(key in "[a-z]{3,12}") {
        let known = ["family", "amplitude", "depth", "dt", "seed", "ladder", "samples", "t1"];
        prop_assume!(!known.contains(&key.as_str()) && toml::from_str::<toml::Value>(&format!("{key} = 1")).is_ok());
        prop_assume!(SimConfig::from_toml(&format!("c = 1.0\n{key} = 1.0")).is_err());
        let e = SimConfig::from_toml(&format!("c = 1.0\n{key} = 1")).unwrap_err();
        prop_assert!(matches!(e, Error::Config(ref m) if !m.contains('\n')), "{:?}", e);
    }
}

#[test]
fn unknown_key_message_names_the_key() {
    match SimConfig::from_toml("c = 1.0\nbogus_key = 3") {
        Err(Error::Config(m)) => assert!(m.contains("bogus_key"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_validation() {
    let ok = SimConfig::from_toml("c = 2.0").unwrap();
    assert_eq!(ok, SimConfig::default_with_c(2.0));
    assert_eq!(ok.quad_orders(), (14, 14));
    for bad in [
        "c = 0.0",
        "c = -1.0",
        "amplitude = 0.1",
        "c = 1.0\ndepth = 0",
        "c = 1.0\nbasis_degree = 1",
        "c = 1.0\ndt = 0.0",
        "c = 1.0\nt_final = 1e-3\ndt = 1e-3",
        "c = 1.0\nmax_iter = 0",
        "c = 1.0\nladder = []",
        "c = 1.0\npsi_linear = [1.0, 0.0, 0.0]",
        "c = \"one\"",
    ] {
        assert!(matches!(SimConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
    }
    let sweep = SimConfig::from_toml("c = 1.0\nsweep_depth = 2\nt1 = 0.02").unwrap().sweep_solver();
    assert_eq!((sweep.depth, sweep.t_final), (2, 0.02));
}

#[test]
fn csv_is_rfc4180() {
    let s = csv_string(&["a", "b,c"], &[vec!["1".into(), "say \"hi\"".into()], vec!["x\ny".into(), "".into()]]);
    assert_eq!(s, "a,\"b,c\"\r\n1,\"say \"\"hi\"\"\"\r\n\"x\ny\",\r\n");
}

#[test]
fn json_uses_17_digits_and_null() {
    let s = json_string(&serde_json::json!({ "a": 0.1, "b": [1.0] })).unwrap();
    assert!(s.contains("1.0000000000000001e-1"), "{s}");
    assert!(s.contains("1.0000000000000000e0"), "{s}");
    #[derive(serde::Serialize)]
    struct R {
        x: f64,
    }
    let s = json_string(&R { x: f64::INFINITY }).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&s).unwrap()["x"], serde_json::Value::Null);
}

#[test]
fn checkpoint_errors() {
    let dir = scratch("ckerr");
    let p = dir.join("c.bin");
    assert!(matches!(write_checkpoint(&p, &[2, 2], &[1.0]), Err(Error::Invalid(_))));
    write_checkpoint(&p, &[3], &[1.0, 2.0, 3.0]).unwrap();
    let good = std::fs::read(&p).unwrap();
    let mut bad = good.clone();
    bad[0] = b'X';
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::Invalid(_))));
    let mut bad = good.clone();
    bad[4] = 9;
    std::fs::write(&p, &bad).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::Invalid(_))));
    std::fs::write(&p, &good[..good.len() - 1]).unwrap();
    assert!(matches!(read_checkpoint(&p), Err(Error::Invalid(_))));
    assert!(matches!(read_checkpoint(&dir.join("missing.bin")), Err(Error::Io(_))));
}

#[test]
fn simulate_writes_reports() {
    let dir = scratch("sim");
    assert_eq!(sim(&dir, SMALL), 0);
    let out = dir.join("out");
    for f in ["monitor.csv", "energy.csv", "lambda.csv", "constraints.csv", "constraints.json", "convergence.json", "report.json", "checkpoint.bin"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["command"], "simulate");
    assert_eq!(rep["convergence"]["converged"], true);
    assert_eq!(rep["basis"]["m_h1"], 20);
    let csv = std::fs::read_to_string(out.join("monitor.csv")).unwrap();
    assert!(csv.starts_with("t,min_a_bar,min_Theta0,boundary_drift\r\n"));
    assert_eq!(csv.matches("\r\n").count(), 7);
    let states = read_bundle_checkpoint(&out.join("checkpoint.bin"), 1, 20, 4).unwrap();
    assert_eq!(states.len(), 6);
    assert!((states[5].t - 0.005).abs() < 1e-15);
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    assert_eq!(sim(&a, SMALL), 0);
    assert_eq!(sim(&b, SMALL), 0);
    for f in ["monitor.csv", "energy.csv", "lambda.csv", "constraints.csv", "convergence.json", "checkpoint.bin"] {
        assert_eq!(std::fs::read(a.join("out").join(f)).unwrap(), std::fs::read(b.join("out").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn env_overrides_output_dir() {
    let dir = scratch("env");
    let target = dir.join("elsewhere");
    let cfg = write_config(&dir, SMALL);
    let code = {
        let _g = ENV.lock().unwrap_or_else(|e| e.into_inner());
        std::env::set_var(OUTPUT_DIR_ENV, &target);
        let code = main_with(["hardphase", "gen-data", "--config", cfg.to_str().unwrap()]);
        std::env::remove_var(OUTPUT_DIR_ENV);
        code
    };
    assert_eq!(code, 0);
    for f in ["data.csv", "data.json", "data.bin"] {
        assert!(target.join(f).is_file(), "{f}");
    }
    assert!(!dir.join("out").exists());
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    assert_eq!(sim(&dir, &format!("{SMALL}mystery = 1\n")), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--config", dir.join("nope.toml").to_str().unwrap()]), EXIT_CONFIG);
    assert_eq!(run(&["simulate"]), EXIT_CONFIG);
    assert_eq!(run(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(sim(&dir, &SMALL.replace("amplitude = 0.1", "amplitude = 0.0")), EXIT_GUARD);
    assert_eq!(sim(&dir, &SMALL.replace("dt = 1e-3", "dt = 0.5").replace("t_final = 0.005", "t_final = 2.0")), EXIT_GUARD);
    assert_eq!(sim(&dir, &format!("{SMALL}picard_tol = 1e-300\nmax_iter = 1\n")), EXIT_NONCONVERGENCE);
    assert_eq!(run(&["verify-identities", "--sets", "5"]), 0);
    assert_eq!(run(&["verify-identities", "--sets", "5", "--corrupt", "commutator_2"]), EXIT_IDENTITY);
    assert_eq!(run(&["verify-identities", "--corrupt", "nonsense"]), EXIT_CONFIG);
    assert_eq!(run(&["verify-identities", "--degree", "9"]), EXIT_CONFIG);
}

#[test]
fn limit_sweep_writes_plot() {
    let dir = scratch("sweep");
    let body = "c = 1.0\nfamily = \"potential\"\namplitude = 0.06\npsi_hessian = [[0.3, 0.0, 0.0], [0.0, -0.3, 0.0], [0.0, 0.0, 0.0]]\n\
                basis_degree = 3\nladder = [1.0, 2.0]\nt1 = 0.004\nsamples = 2\n";
    let cfg = write_config(&dir, body);
    assert_eq!(run(&["limit-sweep", "--config", cfg.to_str().unwrap()]), 0);
    let out = dir.join("out");
    let plot = std::fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(plot.contains("sweep_differences.csv"));
    let diff = std::fs::read_to_string(out.join("sweep_differences.csv")).unwrap();
    assert_eq!(diff.lines().count(), 2);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(rep["sweep"]["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn gen_data_checkpoint_matches_shape() {
    let dir = scratch("gen");
    let cfg = write_config(&dir, SMALL);
    assert_eq!(run(&["gen-data", "--config", cfg.to_str().unwrap()]), 0);
    let states = read_bundle_checkpoint(&dir.join("out/data.bin"), 1, 20, 4).unwrap();
    assert_eq!(states.len(), 1);
    assert!(matches!(read_bundle_checkpoint(&dir.join("out/data.bin"), 2, 20, 4), Err(Error::Invalid(_))));
}
