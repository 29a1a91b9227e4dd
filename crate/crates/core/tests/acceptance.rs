//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any binding criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use svrpo::envs::{Environment, PendulumEnv, PointMassEnv};
use svrpo::gradients::{
    full_gradient, minibatch_gradient, per_sample_grad, svrg_gradient, AnchorGradientCache,
};
use svrpo::harness::{records_to_csv, run_experiment, run_file_stem, summarize};
use svrpo::policy::EmpiricalFisher;
use svrpo::trustopt::{conjugate_gradient, train_with_hook, CgConfig};
use svrpo::{Algorithm, EnvName, ExperimentConfig, Policy, Rng, SvrpoConfig, TrainRun, Vector};

type Check = std::result::Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, budget: Duration, check: impl FnOnce() -> Check) {
        let started = Instant::now();
        let result = check();
        let elapsed = started.elapsed();
        let over = if elapsed > budget { " (over time budget)" } else { "" };
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {id:>2} {tag}  {name}: {detail} [{:.1}s of {}s{over}]",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn perturbed(p: &Policy, scale: f64, rng: &mut Rng) -> Policy {
    let dir = normal_vec(p.param_count(), scale, rng);
    p.with_params(p.params().iter().zip(dir.iter()).map(|(a, d)| a + d).collect())
        .unwrap()
}

fn gradient_correctness() -> Check {
    let mut rng = Rng::new(2024, 0);
    let mut worst_score: f64 = 0.0;
    let mut worst_term: f64 = 0.0;
    for _ in 0..100 {
        let obs = 1 + rng.index(3);
        let act = 1 + rng.index(2);
        let hidden: Vec<usize> = (0..1 + rng.index(2)).map(|_| 1 + rng.index(4)).collect();
        let anchor = random_policy(arch(obs, &hidden, act), 0.6, &mut rng);
        let s = normal_vec(obs, 1.0, &mut rng);
        let a = normal_vec(act, 1.0, &mut rng);
        let analytic = anchor.grad_log_prob(&s, &a).unwrap();
        let fd = central_diff(anchor.params(), 1e-5, |w| {
            anchor.with_params(w.to_vec().into()).unwrap().log_prob(&s, &a).unwrap()
        });
        worst_score = worst_score.max(rel_err(&analytic, &fd));

        let batch = synthetic_batch(&anchor, 3, &mut rng);
        let w = perturbed(&anchor, 0.05, &mut rng);
        let t = rng.index(3);
        let analytic = per_sample_grad(&w, &batch, t).unwrap();
        let fd = central_diff(w.params(), 1e-5, |p| {
            let lp = w
                .with_params(p.to_vec().into())
                .unwrap()
                .log_prob(batch.observation(t), batch.action(t))
                .unwrap();
            (lp - batch.anchor_log_prob(t)).exp() * batch.advantage(t)
        });
        worst_term = worst_term.max(rel_err(&analytic, &fd));
    }
    ensure(
        worst_score <= 1e-5 && worst_term <= 1e-5,
        format!("max rel err grad_log_prob {worst_score:.2e}, per_sample_grad {worst_term:.2e} (tol 1e-5)"),
    )
}

fn svrg_unbiasedness() -> Check {
    let mut rng = Rng::new(2025, 0);
    let anchor = random_policy(arch(4, &[8, 8], 2), 0.4, &mut rng);
    let batch = synthetic_batch(&anchor, 50, &mut rng);
    let cache = AnchorGradientCache::new(anchor.clone(), &batch).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w = perturbed(&anchor, 0.05, &mut rng);
        let full = full_gradient(&w, &batch).unwrap().vector;
        let mut avg = vec![0.0; w.param_count()];
        for t in 0..50 {
            let g = svrg_gradient(&w, &cache, &batch, &[t]).unwrap().vector;
            for (x, y) in avg.iter_mut().zip(g.iter()) {
                *x += y / 50.0;
            }
        }
        let diff: Vec<f64> = avg.iter().zip(full.iter()).map(|(a, b)| a - b).collect();
        worst = worst.max(max_abs(&diff));
    }
    ensure(worst <= 1e-12, format!("max |mean singleton svrg - full| = {worst:.2e} (tol 1e-12)"))
}

fn anchor_identity() -> Check {
    let (anchor, batch) = env_batch(&PointMassEnv::default(), 2000, 3);
    let cache = AnchorGradientCache::new(anchor.clone(), &batch).unwrap();
    let mut rng = Rng::new(2026, 0);
    let mut mismatches = 0;
    for _ in 0..20 {
        let m = 1 + rng.index(400);
        let idx = rng.indices_with_replacement(batch.len(), m);
        let g = svrg_gradient(&anchor, &cache, &batch, &idx).unwrap();
        if g.vector != *cache.full_gradient() {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} of 20 minibatches differ from the snapshot gradient"))
}

fn variance_ratio<E: Environment<f64>>(env: &E, seed: u64) -> (f64, f64) {
    let (anchor, batch) = env_batch(env, 2000, seed);
    let cache = AnchorGradientCache::new(anchor.clone(), &batch).unwrap();
    let mut rng = Rng::new(seed, 99);
    let dir = normal_vec(anchor.param_count(), 1.0, &mut rng);
    let scale = 1e-3 * anchor.params().norm() / dir.norm();
    let w = anchor
        .with_params(anchor.params().iter().zip(dir.iter()).map(|(a, d)| a + scale * d).collect())
        .unwrap();
    let mut svrg = Vec::with_capacity(500);
    let mut plain = Vec::with_capacity(500);
    for _ in 0..500 {
        let idx = rng.indices_with_replacement(batch.len(), 400);
        svrg.push(svrg_gradient(&w, &cache, &batch, &idx).unwrap().vector.into_inner());
        plain.push(minibatch_gradient(&w, &batch, &idx).unwrap().vector.into_inner());
    }
    let overall = trace_covariance(&svrg) / trace_covariance(&plain);
    let worst_block = (0..5)
        .map(|b| {
            let r = b * 100..(b + 1) * 100;
            trace_covariance(&svrg[r.clone()]) / trace_covariance(&plain[r])
        })
        .fold(0.0, f64::max);
    (overall, worst_block)
}

fn variance_reduction() -> Check {
    let (pm, pm_block) = variance_ratio(&PointMassEnv::default(), 11);
    let (pd, pd_block) = variance_ratio(&PendulumEnv::default(), 12);
    ensure(
        pm.max(pm_block).max(pd).max(pd_block) <= 0.5,
        format!(
            "trace-cov ratio svrg/minibatch: pointmass {pm:.2e} (worst 100-draw block {pm_block:.2e}), \
             pendulum {pd:.2e} (worst block {pd_block:.2e}) (limit 0.5)"
        ),
    )
}

fn fisher_and_cg() -> Check {
    let mut rng = Rng::new(2027, 0);
    let mut fvp_err: f64 = 0.0;
    for _ in 0..10 {
        let policy = random_policy(arch(2 + rng.index(2), &[3], 1 + rng.index(2)), 0.6, &mut rng);
        assert!(policy.param_count() <= 30);
        let batch = synthetic_batch(&policy, 40, &mut rng);
        let idx = rng.subset(40, 15);
        let scores: Vec<_> = batch
            .pairs(&idx)
            .map(|(s, a)| policy.grad_log_prob(s, a).unwrap())
            .collect();
        let dense = dense_fisher(&scores, 1e-5);
        let fisher = EmpiricalFisher::new(&policy, batch.pairs(&idx), 1e-5).unwrap();
        let v = normal_vec(policy.param_count(), 1.0, &mut rng);
        let got = fisher.apply(&v).unwrap();
        let want = dense_matvec(&dense, &v);
        let diff: Vec<f64> = got.iter().zip(&want).map(|(a, b)| a - b).collect();
        fvp_err = fvp_err.max(max_abs(&diff));
    }
    let mut cg_err: f64 = 0.0;
    let cfg = CgConfig {
        max_iters: 200,
        residual_tol: 1e-14,
    };
    for _ in 0..10 {
        let a = random_spd(20, 1.0, &mut rng);
        let g = normal_vec(20, 1.0, &mut rng);
        let want = dense_solve(&a, &g);
        let got = conjugate_gradient(|v: &[f64]| Ok(Vector::from(dense_matvec(&a, v))), &g, &cfg)
            .unwrap()
            .solution;
        let diff: Vec<f64> = got.iter().zip(&want).map(|(a, b)| a - b).collect();
        cg_err = cg_err.max(max_abs(&diff));
    }
    ensure(
        fvp_err <= 1e-10 && cg_err <= 1e-8,
        format!("max FVP err {fvp_err:.2e} (tol 1e-10), max CG err {cg_err:.2e} (tol 1e-8)"),
    )
}

struct Observed {
    run: TrainRun,
    states: Vec<Vec<Vector>>,
}

fn observed_run(algorithm: Algorithm, env: EnvName, seed: u64) -> Observed {
    let cfg = SvrpoConfig {
        seed,
        ..SvrpoConfig::default()
    };
    let mut states = Vec::new();
    let mut hook = |_: usize, trajs: &[svrpo::Trajectory]| {
        states.push(
            trajs
                .iter()
                .flat_map(|t| t.transitions.iter().map(|x| x.observation.clone()))
                .collect(),
        );
        Ok(())
    };
    let run = train_with_hook(algorithm, &cfg, &env.build(), &mut hook).unwrap();
    Observed { run, states }
}

fn trust_region(runs: &BTreeMap<(Algorithm, u64), Observed>) -> Check {
    let delta = SvrpoConfig::default().line_search.delta;
    let (mut accepted, mut violations, mut worst_kl) = (0usize, 0usize, 0.0f64);
    for obs in runs.values() {
        let mut anchor = obs.run.initial_policy.clone();
        for (e, rec) in obs.run.records.iter().enumerate() {
            for step in rec.inner.iter().filter(|s| s.outcome.accepted) {
                accepted += 1;
                let o = &step.outcome;
                worst_kl = worst_kl.max(o.measured_kl);
                if !(o.measured_kl <= delta && o.surrogate_after > o.surrogate_before) {
                    violations += 1;
                }
            }
            let end = anchor.with_params(obs.run.params_history[e].clone()).unwrap();
            let kl = anchor.mean_kl(&end, obs.states[e].iter().map(|s| s.as_slice())).unwrap();
            worst_kl = worst_kl.max(kl);
            if kl > delta * (1.0 + 1e-9) {
                violations += 1;
            }
            anchor = end;
        }
    }
    ensure(
        violations == 0 && accepted > 0,
        format!(
            "{accepted} accepted steps over {} runs, {violations} violations, max KL {worst_kl:.5} (delta {delta})",
            runs.len()
        ),
    )
}

fn trpo_equivalence() -> Check {
    let env = PointMassEnv::default();
    let base = SvrpoConfig {
        epochs: 10,
        inner_iters: 1,
        minibatch_size: 2000,
        fisher_ratio: 1.0,
        seed: 5,
        ..SvrpoConfig::default()
    };
    let svrpo = svrpo::trustopt::svrpo_train::<f64, _>(&base, &env).unwrap();
    let trpo = svrpo::trustopt::trpo_train::<f64, _>(&base, &env).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in svrpo.params_history.iter().zip(&trpo.params_history) {
        let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        worst = worst.max(max_abs(&diff));
    }
    let accepted: usize = trpo.records.iter().map(|r| r.accepted_steps).sum();
    ensure(
        svrpo.params_history.len() == 10 && worst <= 1e-10,
        format!("max per-epoch param gap {worst:.2e} over 10 epochs ({accepted} accepted TRPO steps) (tol 1e-10)"),
    )
}

fn headline(runs: &BTreeMap<(Algorithm, u64), Observed>) -> Check {
    let selected: Vec<TrainRun> = runs
        .iter()
        .filter(|((a, _), _)| matches!(a, Algorithm::Svrpo | Algorithm::Trpo))
        .map(|(_, o)| o.run.clone())
        .collect();
    let seeds: Vec<u64> = (0..5).collect();
    let summary = summarize(EnvName::PointMass, &seeds, &selected);
    let s = summary.algorithms[&Algorithm::Svrpo].median_final_return;
    let t = summary.algorithms[&Algorithm::Trpo].median_final_return;
    let eff = summary.efficiency.as_ref().unwrap();
    let soft = match eff.steps_fraction {
        Some(f) => format!("reaches TRPO final median at {:.0}% of its steps", 100.0 * f),
        None => "never reaches TRPO final median".to_string(),
    };
    let soft = if eff.meets_target {
        format!("soft target met, {soft}")
    } else {
        let ratios: Vec<String> = eff
            .variance_ratio_per_epoch
            .as_ref()
            .unwrap()
            .iter()
            .map(|r| r.map_or("-".into(), |x| format!("{x:.3}")))
            .collect();
        format!("soft target MISSED, {soft}; per-epoch variance ratios [{}]", ratios.join(" "))
    };
    ensure(
        s >= t,
        format!("median final return svrpo {s:.3} vs trpo {t:.3}; {soft}"),
    )
}

fn ablation_ordering() -> Check {
    let mut finals: BTreeMap<Algorithm, Vec<f64>> = BTreeMap::new();
    let mut runs = Vec::new();
    for algo in [Algorithm::Svrpo, Algorithm::SvrpoSgd, Algorithm::SvrpoNoFisher] {
        for seed in 0..5 {
            let cfg = SvrpoConfig {
                seed,
                ..SvrpoConfig::default()
            };
            let run = svrpo::trustopt::train::<f64, _>(algo, &cfg, &PendulumEnv::default()).unwrap();
            finals.entry(algo).or_default().push(run.records.last().unwrap().mean_return);
            runs.push(run);
        }
    }
    let summary = summarize(EnvName::Pendulum, &(0..5).collect::<Vec<_>>(), &runs);
    let med = |a: Algorithm| summary.algorithms[&a].median_final_return;
    let (s, g, f) = (med(Algorithm::Svrpo), med(Algorithm::SvrpoSgd), med(Algorithm::SvrpoNoFisher));
    ensure(
        s >= g && s >= f,
        format!("pendulum median final return svrpo {s:.1}, svrpo-sgd {g:.1}, svrpo-nofisher {f:.1}"),
    )
}

fn without_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(runs: &BTreeMap<(Algorithm, u64), Observed>) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = vec![
        ("algo".to_string(), "svrpo,trpo,svrpo-sgd,svrpo-nofisher".to_string()),
        ("seeds".to_string(), "0".to_string()),
        ("out".to_string(), dir.path().display().to_string()),
    ];
    let cfg = ExperimentConfig::from_sources(None, &overrides).map_err(|e| e.to_string())?;
    run_experiment(&cfg).map_err(|e| e.to_string())?;
    let mut identical = 0;
    for algo in Algorithm::ALL {
        let path = dir.path().join(format!("{}.csv", run_file_stem(algo, EnvName::PointMass, 0)));
        let written = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let earlier = records_to_csv(&runs[&(algo, 0)].run.records);
        if without_wall_ms(&written) == without_wall_ms(&earlier) {
            identical += 1;
        }
    }
    ensure(identical == 4, format!("{identical} of 4 re-run CSVs identical excluding wall_ms"))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let secs = Duration::from_secs;
    suite.run(1, "gradient correctness", secs(10), gradient_correctness);
    suite.run(2, "SVRG unbiasedness", secs(10), svrg_unbiasedness);
    suite.run(3, "anchor identity", secs(5), anchor_identity);
    suite.run(4, "variance reduction", secs(60), variance_reduction);
    suite.run(5, "Fisher/CG correctness", secs(10), fisher_and_cg);

    let mut runs: BTreeMap<(Algorithm, u64), Observed> = BTreeMap::new();
    suite.run(6, "trust-region contract", secs(600), || {
        for algo in Algorithm::ALL {
            for seed in 0..3 {
                runs.insert((algo, seed), observed_run(algo, EnvName::PointMass, seed));
            }
        }
        trust_region(&runs)
    });
    suite.run(7, "TRPO equivalence", secs(120), trpo_equivalence);
    suite.run(8, "PointMass svrpo vs trpo", secs(600), || {
        for algo in [Algorithm::Svrpo, Algorithm::Trpo] {
            for seed in 3..5 {
                runs.insert((algo, seed), observed_run(algo, EnvName::PointMass, seed));
            }
        }
        headline(&runs)
    });
    suite.run(9, "Pendulum ablation ordering", secs(900), ablation_ordering);
    suite.run(10, "determinism", secs(600), || determinism(&runs));

    println!("acceptance: {} of 10 criteria failed", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
