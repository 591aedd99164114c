use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qode_core::{build_sampling_distribution, MdpModel, RandomMdp, Shape};
use serde_json::Value;
use tempfile::TempDir;

fn qode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qode")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn twin_action(dir: &Path) -> PathBuf {
    let shape = Shape::new(1, 2).unwrap();
    let mdp = MdpModel::new(shape, 0.5, vec![1.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.5], None).unwrap();
    let path = dir.join("twin.json");
    mdp.save(&path).unwrap();
    path
}

fn gen(dir: &Path, states: &str, actions: &str, gamma: &str, seed: &str, out: &str) -> PathBuf {
    let o = qode(dir, &["gen-mdp", "--states", states, "--actions", actions, "--gamma", gamma, "--seed", seed, "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(out)
}

#[test]
fn gen_mdp_single_pair() {
    let dir = TempDir::new().unwrap();
    let o = qode(dir.path(), &["gen-mdp", "--states", "1", "--actions", "1", "--gamma", "0.5", "--seed", "0", "--out", "one.json"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("one.json"));
    assert!(out.contains("min d(s,a)=1.000000e0"), "{out}");
    let mdp = MdpModel::load(dir.path().join("one.json")).unwrap();
    assert_eq!(build_sampling_distribution(&mdp).unwrap().min_d(), 1.0);
}

#[test]
fn gen_mdp_is_deterministic_and_reloads() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "5", "3", "0.9", "42", "a.json");
    let b = gen(dir.path(), "5", "3", "0.9", "42", "b.json");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let mdp = MdpModel::load(&a).unwrap();
    assert_eq!(mdp, RandomMdp::new(5, 3).gamma(0.9).generate(42).unwrap());
    assert!(build_sampling_distribution(&mdp).unwrap().min_d() > 0.0);
}

#[test]
fn gen_mdp_rejects_bad_gamma() {
    let dir = TempDir::new().unwrap();
    let o = qode(dir.path(), &["gen-mdp", "--states", "2", "--actions", "2", "--gamma", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_single_pair_max() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), "1", "1", "0.5", "0", "one.json");
    let mdp = MdpModel::load(&path).unwrap();
    let r = mdp.expected_reward()[0];
    let o = qode(dir.path(), &["solve", "--mdp", "one.json", "--operator", "max"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let q = v["q_star"][0].as_f64().unwrap();
    assert!((q - r / 0.5).abs() < 1e-9, "{q} vs {}", r / 0.5);
}

#[test]
fn solve_lse_twin_action() {
    let dir = TempDir::new().unwrap();
    twin_action(dir.path());
    let o = qode(dir.path(), &["solve", "--mdp", "twin.json", "--operator", "lse", "--temperature", "1", "--out", "s.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    for q in v["q_star"].as_array().unwrap() {
        assert!((q.as_f64().unwrap() - 2.6931472).abs() < 1e-7);
    }
}

#[test]
fn solve_residual_respects_tolerance() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "4", "3", "0.9", "3", "m.json");
    let o = qode(dir.path(), &["solve", "--mdp", "m.json", "--tol", "1e-10"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["converged"].as_bool().unwrap());
    assert!(v["residual"].as_f64().unwrap() <= 1e-10 * (1.0 - 0.9));
}

#[test]
fn solve_non_convergence_exits_2() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "5", "3", "0.9", "42", "m.json");
    let o = qode(dir.path(), &["solve", "--mdp", "m.json", "--operator", "boltzmann", "--temperature", "5", "--max-iter", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn solve_unknown_operator_exits_1() {
    let dir = TempDir::new().unwrap();
    twin_action(dir.path());
    let o = qode(dir.path(), &["solve", "--mdp", "twin.json", "--operator", "median"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ode_scalar_certificate() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "1", "1", "0.5", "0", "one.json");
    let o = qode(dir.path(), &["ode", "--mdp", "one.json", "--t-end", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(cert["passed"].as_bool().unwrap());
    assert!(cert["max_violation"].as_f64().unwrap() <= 1e-9);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,q_0\n"));
}

#[test]
fn ode_rejects_small_p() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "2", "2", "0.9", "1", "m.json");
    let o = qode(dir.path(), &["ode", "--mdp", "m.json", "--p", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("minimum admissible even p: 16"), "{}", stderr(&o));
    let o = qode(dir.path(), &["ode", "--mdp", "m.json", "--p", "17"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ode_auto_records_p() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "2", "2", "0.9", "1", "m.json");
    let o = qode(
        dir.path(),
        &["ode", "--mdp", "m.json", "--p", "auto", "--t-end", "2", "--stride", "50", "--certificate", "c.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(cert["p"].as_u64(), Some(16));
}

#[test]
fn learn_rejects_summable_steps() {
    let dir = TempDir::new().unwrap();
    twin_action(dir.path());
    let o = qode(dir.path(), &["learn", "--mdp", "twin.json", "--steps-a", "1", "--steps-q", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Σα_k < ∞"));
}

#[test]
fn learn_is_reproducible() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "3", "2", "0.9", "5", "m.json");
    let args = ["learn", "--mdp", "m.json", "--iterations", "5000", "--seed", "9"];
    let run = |out: &str| {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        let o = qode(dir.path(), &a);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    assert!(String::from_utf8(first).unwrap().starts_with("k,error_inf,alpha,lambda,eps_sq,moment_bound\n"));
}

#[test]
fn learn_fixed_boltzmann_warns() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "3", "2", "0.9", "5", "m.json");
    let o = qode(dir.path(), &["learn", "--mdp", "m.json", "--operator", "boltzmann", "--temperature", "5", "--iterations", "2000"]);
    assert!(stderr(&o).contains("fixed-temperature Boltzmann: convergence not guaranteed by theory"));
    assert!(dir.path().join("run.csv").exists());
    assert!(stdout(&o).contains("final_error"));
}

#[test]
fn learn_seed_sweep_writes_one_file_per_seed() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "3", "2", "0.9", "5", "m.json");
    let o = qode(dir.path(), &["learn", "--mdp", "m.json", "--anneal", "--iterations", "3000", "--seed", "4", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("run_seed4.csv").exists());
    assert!(dir.path().join("run_seed5.csv").exists());
    assert!(stdout(&o).contains("annealed_residual_bound pass"));
}

#[test]
fn verify_rejects_zero_trials() {
    let dir = TempDir::new().unwrap();
    let o = qode(dir.path(), &["verify", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_norms_report() {
    let dir = TempDir::new().unwrap();
    let o = qode(dir.path(), &["verify", "--suite", "norms", "--trials", "1000", "--seed", "1", "--out", "r.json"]);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["suite"], "norms");
    let checks = v["checks"].as_array().unwrap();
    let passed = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap()["passed"].as_bool().unwrap();
    for name in ["norms.w_min_plain_p_le_weighted_p", "norms.weighted_p_le_w_max_plain_p", "norms.inf_le_p", "norms.p_le_root_n_inf"] {
        assert!(passed(name), "{name}");
    }
    // With the weighted ∞-norm max_i w_i|x_i| this sandwich breaks for weights away from one.
    assert!(!passed("norms.weighted_inf_le_weighted_p"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_passing_suite_exits_0() {
    let dir = TempDir::new().unwrap();
    let o = qode(dir.path(), &["verify", "--suite", "operators", "--trials", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"].as_bool().unwrap()));
}

#[test]
fn config_file_supplies_flags() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"states": 2, "actions": 3, "gamma": 0.5, "out": "cfg.json"}"#).unwrap();
    let o = qode(dir.path(), &["gen-mdp", "--config", "c.json", "--gamma", "0.8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mdp = MdpModel::load(dir.path().join("cfg.json")).unwrap();
    assert_eq!((mdp.n_states(), mdp.n_actions(), mdp.gamma()), (2, 3, 0.8));
}

#[test]
fn usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    assert_eq!(qode(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(qode(dir.path(), &["solve"]).status.code(), Some(1));
    assert_eq!(qode(dir.path(), &["solve", "--mdp", "missing.json"]).status.code(), Some(1));
    assert!(qode(dir.path(), &["--help"]).status.success());
}
