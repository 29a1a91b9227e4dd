use std::fs;

use svrpo::harness::{checkpoint, restore, run_experiment, CSV_HEADER};
use svrpo::policy::GaussianMlpPolicy;
use svrpo::rollout::collect;
use svrpo::{Error, ExperimentConfig, PendulumEnv, Policy, PolicyArchitecture, Rng};

fn config(dir: &std::path::Path, extra: &[(&str, &str)]) -> ExperimentConfig {
    let mut pairs: Vec<(String, String)> = vec![
        ("N".into(), "300".into()),
        ("L".into(), "2".into()),
        ("m".into(), "50".into()),
        ("hidden".into(), "8".into()),
        ("out".into(), dir.display().to_string()),
    ];
    pairs.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    ExperimentConfig::from_sources(None, &pairs).unwrap()
}

fn drop_wall_ms(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let arch = PolicyArchitecture::new(3, 1, vec![5, 4], -0.5).unwrap();
    let policy = GaussianMlpPolicy::random(arch, &mut Rng::new(4, 1)).unwrap();
    let path = dir.path().join("p.policy");
    checkpoint(&policy, &path).unwrap();
    let back: Policy = restore(&path).unwrap();
    assert_eq!(back, policy);
    for (a, b) in back.params().iter().zip(policy.params().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn truncated_checkpoint_names_the_expected_count() {
    let dir = tempfile::tempdir().unwrap();
    let arch = PolicyArchitecture::new(2, 1, vec![3], 0.0).unwrap();
    let policy = GaussianMlpPolicy::<f64>::random(arch, &mut Rng::new(1, 1)).unwrap();
    let text = policy.to_checkpoint();
    let cut: Vec<&str> = text.lines().take(5).collect();
    let path = dir.path().join("cut.policy");
    fs::write(&path, cut.join("\n")).unwrap();
    let err = restore::<f64>(&path).unwrap_err();
    assert!(matches!(err, Error::Format(_)));
    assert!(err.to_string().contains(&policy.param_count().to_string()));
}

#[test]
fn restored_policy_replays_identical_rollouts() {
    let dir = tempfile::tempdir().unwrap();
    let env = PendulumEnv::default();
    let arch = PolicyArchitecture::new(3, 1, vec![16], 0.0).unwrap();
    let policy = GaussianMlpPolicy::random(arch, &mut Rng::new(2, 1)).unwrap();
    let path = dir.path().join("r.policy");
    checkpoint(&policy, &path).unwrap();
    let back: Policy = restore(&path).unwrap();
    let a = collect(&policy, &env, 600, &mut Rng::new(9, 2)).unwrap();
    let b = collect(&back, &env, 600, &mut Rng::new(9, 2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_epochs_write_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("L", "0"), ("seeds", "0")]);
    run_experiment(&cfg).unwrap();
    let csv = fs::read_to_string(dir.path().join("svrpo_pointmass_seed0.csv")).unwrap();
    assert_eq!(csv, format!("{CSV_HEADER}\n"));
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = [("algo", "svrpo,trpo,svrpo-sgd,svrpo-nofisher"), ("seeds", "0,1")];
    run_experiment(&config(a.path(), &extra)).unwrap();
    let mut cfg_b = config(b.path(), &extra);
    cfg_b.parallel = true;
    run_experiment(&cfg_b).unwrap();
    let mut compared = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let x = fs::read_to_string(&path).unwrap();
            let y = fs::read_to_string(b.path().join(path.file_name().unwrap())).unwrap();
            assert_eq!(drop_wall_ms(&x), drop_wall_ms(&y));
            compared += 1;
        }
    }
    assert_eq!(compared, 8);
}

#[test]
fn summary_and_checkpoints_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[("algo", "svrpo,trpo"), ("seeds", "3,4,5"), ("dump_trajectories", "true")]);
    let (summary, runs) = run_experiment(&cfg).unwrap();
    assert_eq!(runs.len(), 6);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["algorithms"]["svrpo"]["final_returns"].as_array().unwrap().len(), 3);
    assert!(json["algorithms"]["trpo"]["median_auc"].is_number());
    assert!(summary.efficiency.is_some());
    let restored: Policy = restore(dir.path().join("trpo_pointmass_seed4.policy")).unwrap();
    let run = runs.iter().find(|r| r.algorithm == svrpo::Algorithm::Trpo).unwrap();
    assert_eq!(restored.architecture(), run.policy.architecture());
    let dump = fs::read_to_string(dir.path().join("svrpo_pointmass_seed3_epoch1.jsonl")).unwrap();
    assert_eq!(dump.lines().count(), 300);
    let line: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert_eq!(line["epoch"], 1);
}

#[test]
fn unwritable_output_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = config(&blocker.join("sub"), &[("L", "200")]);
    let started = std::time::Instant::now();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(started.elapsed().as_secs() < 2);
}
