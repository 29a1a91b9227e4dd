use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::checkpoint;
use super::config::ExperimentConfig;
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::rollout::write_trajectory_dump;
use crate::trustopt::{train_with_hook, Algorithm, IterationRecord, TrainRun};

pub const CSV_HEADER: &str =
    "epoch,env_steps,mean_return,std_return,mean_kl,accepted,rejected,grad_norm,wall_ms";

/// Fraction of the reference algorithm's budget the soft efficiency target allows.
pub const EFFICIENCY_TARGET: f64 = 0.8;

/// One CSV row per record, header first.
pub fn records_to_csv(records: &[IterationRecord<f64>]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.env_steps_cumulative,
            r.mean_return,
            r.std_return,
            r.mean_kl,
            r.accepted_steps,
            r.rejected_steps,
            r.grad_norm,
            r.wall_ms
        ));
    }
    out
}

pub fn run_file_stem(algorithm: Algorithm, env: EnvName, seed: u64) -> String {
    format!("{algorithm}_{env}_seed{seed}")
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AlgorithmSummary {
    pub final_returns: Vec<f64>,
    pub median_final_return: f64,
    /// Trapezoidal area under mean return vs. cumulative env steps, per seed.
    pub auc: Vec<f64>,
    pub median_auc: f64,
    /// Per-epoch median of mean return across seeds.
    pub median_curve: Vec<f64>,
    pub env_steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EfficiencyReport {
    pub reference: Algorithm,
    pub candidate: Algorithm,
    pub reference_final_median: f64,
    /// Env steps the candidate's median curve needs to reach the reference's
    /// final median, as a fraction of the reference's total; `None` if never.
    pub steps_fraction: Option<f64>,
    pub meets_target: bool,
    /// Candidate's per-epoch mean SVRG/plain variance ratio, reported when
    /// the target is missed.
    pub variance_ratio_per_epoch: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExperimentSummary {
    pub env: String,
    pub seeds: Vec<u64>,
    pub algorithms: BTreeMap<Algorithm, AlgorithmSummary>,
    pub efficiency: Option<EfficiencyReport>,
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub fn area_under_curve(records: &[IterationRecord<f64>]) -> f64 {
    records
        .windows(2)
        .map(|w| {
            let dx = (w[1].env_steps_cumulative - w[0].env_steps_cumulative) as f64;
            0.5 * dx * (w[0].mean_return + w[1].mean_return)
        })
        .sum()
}

fn summarize_algorithm(runs: &[&TrainRun<f64>]) -> AlgorithmSummary {
    let final_returns: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.records.last().map(|x| x.mean_return))
        .collect();
    let auc: Vec<f64> = runs.iter().map(|r| area_under_curve(&r.records)).collect();
    let epochs = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let median_curve = (0..epochs)
        .map(|e| median(&runs.iter().map(|r| r.records[e].mean_return).collect::<Vec<_>>()))
        .collect();
    let env_steps = runs
        .first()
        .map(|r| r.records[..epochs].iter().map(|x| x.env_steps_cumulative).collect())
        .unwrap_or_default();
    AlgorithmSummary {
        median_final_return: median(&final_returns),
        median_auc: median(&auc),
        final_returns,
        auc,
        median_curve,
        env_steps,
    }
}

/// How much of the reference's budget the candidate needs to match the
/// reference's final median return.
pub fn efficiency(
    candidate: Algorithm,
    candidate_summary: &AlgorithmSummary,
    candidate_runs: &[&TrainRun<f64>],
    reference: Algorithm,
    reference_summary: &AlgorithmSummary,
) -> EfficiencyReport {
    let target = reference_summary.median_final_return;
    let total = reference_summary.env_steps.last().copied().unwrap_or(0) as f64;
    let steps_fraction = candidate_summary
        .median_curve
        .iter()
        .position(|&r| r >= target)
        .map(|e| candidate_summary.env_steps[e] as f64 / total);
    let meets_target = steps_fraction.is_some_and(|f| f <= EFFICIENCY_TARGET);
    let variance_ratio_per_epoch = (!meets_target).then(|| {
        let epochs = candidate_summary.median_curve.len();
        (0..epochs)
            .map(|e| {
                let ratios: Vec<f64> = candidate_runs
                    .iter()
                    .filter_map(|r| r.records[e].mean_variance_ratio())
                    .collect();
                (!ratios.is_empty()).then(|| median(&ratios))
            })
            .collect()
    });
    EfficiencyReport {
        reference,
        candidate,
        reference_final_median: target,
        steps_fraction,
        meets_target,
        variance_ratio_per_epoch,
    }
}

pub fn summarize(env: EnvName, seeds: &[u64], runs: &[TrainRun<f64>]) -> ExperimentSummary {
    let mut grouped: BTreeMap<Algorithm, Vec<&TrainRun<f64>>> = BTreeMap::new();
    for run in runs {
        grouped.entry(run.algorithm).or_default().push(run);
    }
    let algorithms: BTreeMap<Algorithm, AlgorithmSummary> = grouped
        .iter()
        .map(|(a, rs)| (*a, summarize_algorithm(rs)))
        .collect();
    let efficiency = match (
        algorithms.get(&Algorithm::Svrpo),
        algorithms.get(&Algorithm::Trpo),
    ) {
        (Some(c), Some(r)) => Some(efficiency(
            Algorithm::Svrpo,
            c,
            &grouped[&Algorithm::Svrpo],
            Algorithm::Trpo,
            r,
        )),
        _ => None,
    };
    ExperimentSummary {
        env: env.to_string(),
        seeds: seeds.to_vec(),
        algorithms,
        efficiency,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".svrpo-write-probe");
    File::create(&probe).map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn run_one(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<TrainRun<f64>> {
    let env = cfg.environment();
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let stem = run_file_stem(algorithm, cfg.env, seed);
    let out_dir: PathBuf = cfg.out_dir.clone();
    let dump = cfg.dump_trajectories;
    let mut hook = |epoch: usize, trajectories: &[crate::rollout::Trajectory<f64>]| -> Result<()> {
        if !dump {
            return Ok(());
        }
        let path = out_dir.join(format!("{stem}_epoch{epoch}.jsonl"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        write_trajectory_dump(&mut w, epoch, trajectories)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))
    };
    let run = train_with_hook(algorithm, &train_cfg, &env, &mut hook)?;
    let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
    write_file(&csv_path, records_to_csv(&run.records).as_bytes())?;
    checkpoint(&run.policy, cfg.out_dir.join(format!("{stem}.policy")))?;
    Ok(run)
}

/// Runs every `(algorithm, seed)` pair, writing one CSV and one checkpoint
/// per run plus `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentSummary, Vec<TrainRun<f64>>)> {
    cfg.validate()?;
    ensure_writable(&cfg.out_dir)?;
    let jobs: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs: Vec<TrainRun<f64>> = if cfg.parallel {
        jobs.par_iter()
            .map(|&(a, s)| run_one(cfg, a, s))
            .collect::<Result<_>>()?
    } else {
        jobs.iter()
            .map(|&(a, s)| run_one(cfg, a, s))
            .collect::<Result<_>>()?
    };
    let summary = summarize(cfg.env, &cfg.seeds, &runs);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.out_dir.join("summary.json"), json.as_bytes())?;
    Ok((summary, runs))
}
