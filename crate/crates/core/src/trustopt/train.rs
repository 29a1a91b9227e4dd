use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::cg::{conjugate_gradient, natural_step, CgConfig};
use super::linesearch::{backtracking_line_search, LineSearchConfig, StepOutcome};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::gradients::{minibatch_gradient, svrg_gradient_probed, AnchorGradientCache};
use crate::numkit::{dot, mean_and_var, Rng, Vector};
use crate::policy::{EmpiricalFisher, GaussianMlpPolicy, ParamVector, PolicyArchitecture};
use crate::rollout::{build_batch, collect, fit_baseline, LinearBaseline, SurrogateBatch, Trajectory};
use crate::scalar::Scalar;

// Stream ids carved out of the run seed. Keeping them separate means an
// algorithm that draws minibatches does not shift the rollout sequence.
const INIT_STREAM: u64 = 1;
const ROLLOUT_STREAM: u64 = 2;
const MINIBATCH_STREAM: u64 = 3;
const FISHER_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// SVRG gradients preconditioned by the sub-sampled Fisher.
    Svrpo,
    /// One full-gradient natural step per epoch.
    Trpo,
    /// Plain minibatch gradients, no Fisher.
    SvrpoSgd,
    /// SVRG gradients, identity in place of the Fisher.
    SvrpoNoFisher,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Svrpo,
        Algorithm::Trpo,
        Algorithm::SvrpoSgd,
        Algorithm::SvrpoNoFisher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svrpo => "svrpo",
            Algorithm::Trpo => "trpo",
            Algorithm::SvrpoSgd => "svrpo-sgd",
            Algorithm::SvrpoNoFisher => "svrpo-nofisher",
        }
    }

    fn uses_fisher(self) -> bool {
        matches!(self, Algorithm::Svrpo | Algorithm::Trpo)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected svrpo | trpo | svrpo-sgd | svrpo-nofisher)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrpoConfig {
    /// Transitions collected per epoch (N).
    pub batch_size: usize,
    /// Outer iterations (L).
    pub epochs: usize,
    /// Inner minibatch steps per epoch (J).
    pub inner_iters: usize,
    /// Minibatch size (m).
    pub minibatch_size: usize,
    /// Fraction of the batch used for each Fisher estimate (ν).
    pub fisher_ratio: f64,
    pub gamma: f64,
    pub cg: CgConfig,
    pub line_search: LineSearchConfig,
    pub damping: f64,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
}

impl Default for SvrpoConfig {
    fn default() -> Self {
        SvrpoConfig {
            batch_size: 2000,
            epochs: 50,
            inner_iters: 5,
            minibatch_size: 400,
            fisher_ratio: 0.1,
            gamma: 0.99,
            cg: CgConfig::default(),
            line_search: LineSearchConfig::default(),
            damping: 1e-5,
            seed: 0,
            hidden_sizes: vec![32, 32],
            init_log_std: 0.0,
            normalize_advantages: true,
        }
    }
}

impl SvrpoConfig {
    /// Checks every invariant, naming the offending configuration key.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.batch_size == 0 {
            return fail("N", "must be positive".into());
        }
        if self.inner_iters == 0 {
            return fail("J", "must be at least 1".into());
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.batch_size {
            return fail("m", format!("must lie in 1..=N (N = {})", self.batch_size));
        }
        if !(self.fisher_ratio > 0.0 && self.fisher_ratio <= 1.0) {
            return fail("nu", format!("must lie in (0, 1], got {}", self.fisher_ratio));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma", format!("must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.line_search.delta > 0.0 && self.line_search.delta.is_finite()) {
            return fail("delta", format!("must be positive, got {}", self.line_search.delta));
        }
        if self.line_search.max_backtracks == 0 {
            return fail("max_backtracks", "must be at least 1".into());
        }
        if !(self.line_search.accept_ratio >= 0.0 && self.line_search.accept_ratio.is_finite()) {
            return fail("accept_ratio", "must be finite and non-negative".into());
        }
        if self.cg.max_iters == 0 {
            return fail("cg_iters", "must be at least 1".into());
        }
        if !(self.cg.residual_tol > 0.0 && self.cg.residual_tol.is_finite()) {
            return fail("cg_tol", "must be positive".into());
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return fail("damping", "must be finite and non-negative".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden", "must be a non-empty list of positive sizes".into());
        }
        if !self.init_log_std.is_finite() {
            return fail("init_log_std", "must be finite".into());
        }
        Ok(())
    }

    pub fn architecture(&self, obs_dim: usize, action_dim: usize) -> Result<PolicyArchitecture> {
        PolicyArchitecture::new(obs_dim, action_dim, self.hidden_sizes.clone(), self.init_log_std)
    }

    /// Size of each Fisher subsample for a batch of `n` transitions, `⌈nν⌉`.
    pub fn fisher_sample_size(&self, n: usize) -> usize {
        ((n as f64 * self.fisher_ratio).ceil() as usize).clamp(1, n)
    }
}

/// Diagnostics of the linear solve behind one inner step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgDiagnostics<T> {
    pub iterations: usize,
    pub residual_norm: T,
    pub rhs_norm: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerStep<T> {
    pub outcome: StepOutcome<T>,
    /// `None` for the identity-preconditioned variants and for skipped steps.
    pub cg: Option<CgDiagnostics<T>>,
    pub gradient_norm: T,
    /// Ratio of SVRG to plain per-sample term variance inside the minibatch.
    pub variance_ratio: Option<T>,
}

/// Per-epoch telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub epoch: usize,
    pub env_steps_cumulative: usize,
    pub mean_return: T,
    pub std_return: T,
    /// KL from the epoch anchor to the final inner iterate.
    pub mean_kl: T,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Norm of the full anchor gradient.
    pub grad_norm: T,
    pub wall_ms: u64,
    pub inner: Vec<InnerStep<T>>,
}

impl<T: Scalar> IterationRecord<T> {
    pub fn mean_variance_ratio(&self) -> Option<T> {
        let ratios: Vec<T> = self.inner.iter().filter_map(|s| s.variance_ratio).collect();
        (!ratios.is_empty()).then(|| ratios.iter().copied().sum::<T>() / T::from_usize_lossy(ratios.len()))
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun<T> {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord<T>>,
    /// Parameters at the end of every epoch.
    pub params_history: Vec<ParamVector<T>>,
    pub initial_policy: GaussianMlpPolicy<T>,
    pub policy: GaussianMlpPolicy<T>,
}

/// Observer invoked with each epoch's freshly collected trajectories.
pub type RolloutHook<'a, T> = dyn FnMut(usize, &[Trajectory<T>]) -> Result<()> + 'a;

pub fn train<T, E>(algorithm: Algorithm, cfg: &SvrpoConfig, env: &E) -> Result<TrainRun<T>>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
{
    train_with_hook(algorithm, cfg, env, &mut |_, _| Ok(()))
}

pub fn svrpo_train<T: Scalar, E: Environment<T> + ?Sized>(cfg: &SvrpoConfig, env: &E) -> Result<TrainRun<T>> {
    train(Algorithm::Svrpo, cfg, env)
}

pub fn trpo_train<T: Scalar, E: Environment<T> + ?Sized>(cfg: &SvrpoConfig, env: &E) -> Result<TrainRun<T>> {
    train(Algorithm::Trpo, cfg, env)
}

pub fn ablation_sgd_train<T: Scalar, E: Environment<T> + ?Sized>(cfg: &SvrpoConfig, env: &E) -> Result<TrainRun<T>> {
    train(Algorithm::SvrpoSgd, cfg, env)
}

pub fn ablation_nofisher_train<T: Scalar, E: Environment<T> + ?Sized>(
    cfg: &SvrpoConfig,
    env: &E,
) -> Result<TrainRun<T>> {
    train(Algorithm::SvrpoNoFisher, cfg, env)
}

pub fn train_with_hook<T, E>(
    algorithm: Algorithm,
    cfg: &SvrpoConfig,
    env: &E,
    hook: &mut RolloutHook<'_, T>,
) -> Result<TrainRun<T>>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
{
    cfg.validate()?;
    if cfg.batch_size < env.horizon() {
        return Err(Error::config(
            "N",
            format!("must be at least the horizon ({})", env.horizon()),
        ));
    }
    let arch = cfg.architecture(env.obs_dim(), env.action_dim())?;
    let initial_policy = GaussianMlpPolicy::random(arch, &mut Rng::new(cfg.seed, INIT_STREAM))?;
    let mut rollout_rng = Rng::new(cfg.seed, ROLLOUT_STREAM);
    let mut minibatch_rng = Rng::new(cfg.seed, MINIBATCH_STREAM);
    let mut fisher_rng = Rng::new(cfg.seed, FISHER_STREAM);

    let gamma = T::lit(cfg.gamma);
    let mut policy = initial_policy.clone();
    let mut baseline = LinearBaseline::zero(env.obs_dim());
    let mut env_steps = 0;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut params_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let ctx = |inner: usize| move |e: Error| Error::Training {
            epoch,
            inner,
            source: Box::new(e),
        };

        let trajectories = collect(&policy, env, cfg.batch_size, &mut rollout_rng).map_err(ctx(0))?;
        hook(epoch, &trajectories)?;
        let batch = build_batch(&policy, &trajectories, &baseline, gamma, cfg.normalize_advantages)
            .map_err(ctx(0))?;
        baseline = fit_baseline(&trajectories, gamma).map_err(ctx(0))?;
        let cache = AnchorGradientCache::new(policy.clone(), &batch).map_err(ctx(0))?;

        let inner_iters = if algorithm == Algorithm::Trpo { 1 } else { cfg.inner_iters };
        let mut current = policy.clone();
        let mut inner = Vec::with_capacity(inner_iters);
        let mut final_kl = T::zero();
        for j in 0..inner_iters {
            let step = inner_step(
                algorithm,
                cfg,
                &current,
                &cache,
                &batch,
                &mut minibatch_rng,
                &mut fisher_rng,
            )
            .map_err(ctx(j))?;
            if let Some(next) = step.1 {
                final_kl = step.0.outcome.measured_kl;
                current = next;
            }
            inner.push(step.0);
        }

        let returns: Vec<T> = trajectories.iter().map(Trajectory::total_reward).collect();
        let (mean_return, var_return) = mean_and_var(&returns).map_err(ctx(0))?;
        env_steps += batch.len();
        let accepted = inner.iter().filter(|s| s.outcome.accepted).count();
        records.push(IterationRecord {
            epoch,
            env_steps_cumulative: env_steps,
            mean_return,
            std_return: var_return.sqrt(),
            mean_kl: final_kl,
            accepted_steps: accepted,
            rejected_steps: inner.len() - accepted,
            grad_norm: cache.full_gradient().norm(),
            wall_ms: started.elapsed().as_millis() as u64,
            inner,
        });
        policy = current;
        params_history.push(policy.flatten());
    }

    Ok(TrainRun {
        algorithm,
        records,
        params_history,
        initial_policy,
        policy,
    })
}

/// One minibatch update; returns the telemetry and the new iterate if accepted.
fn inner_step<T: Scalar>(
    algorithm: Algorithm,
    cfg: &SvrpoConfig,
    current: &GaussianMlpPolicy<T>,
    cache: &AnchorGradientCache<T>,
    batch: &SurrogateBatch<T>,
    minibatch_rng: &mut Rng,
    fisher_rng: &mut Rng,
) -> Result<(InnerStep<T>, Option<GaussianMlpPolicy<T>>)> {
    let n = batch.len();
    let m = cfg.minibatch_size.min(n);
    let (gradient, variance_ratio): (ParamVector<T>, Option<T>) = match algorithm {
        Algorithm::Trpo => (cache.full_gradient().clone(), None),
        Algorithm::Svrpo | Algorithm::SvrpoNoFisher => {
            let indices = minibatch_rng.indices_with_replacement(n, m);
            let (est, probe) = svrg_gradient_probed(current, cache, batch, &indices)?;
            (est.vector, probe.ratio())
        }
        Algorithm::SvrpoSgd => {
            let indices = minibatch_rng.indices_with_replacement(n, m);
            (minibatch_gradient(current, batch, &indices)?.vector, None)
        }
    };
    let gradient_norm = gradient.norm();

    let fisher = if algorithm.uses_fisher() {
        let subset = fisher_rng.subset(n, cfg.fisher_sample_size(n));
        Some(EmpiricalFisher::new(current, batch.pairs(&subset), T::lit(cfg.damping))?)
    } else {
        None
    };

    if !(gradient_norm > T::zero()) {
        let surrogate = crate::gradients::evaluate_candidate(current, batch)?;
        let outcome = StepOutcome {
            accepted: false,
            eta: T::zero(),
            measured_kl: surrogate.mean_kl,
            surrogate_before: surrogate.surrogate,
            surrogate_after: surrogate.surrogate,
            backtracks: 0,
        };
        return Ok((
            InnerStep {
                outcome,
                cg: None,
                gradient_norm,
                variance_ratio,
            },
            None,
        ));
    }

    let apply = |v: &[T]| -> Result<Vector<T>> {
        match &fisher {
            Some(f) => f.apply(v),
            None => Ok(Vector::from(v)),
        }
    };
    let (direction, cg) = match &fisher {
        Some(_) => {
            let report = conjugate_gradient(apply, &gradient, &cfg.cg)?;
            let diag = CgDiagnostics {
                iterations: report.iterations,
                residual_norm: report.residual_norm,
                rhs_norm: gradient_norm,
                converged: report.converged,
            };
            (report.solution, Some(diag))
        }
        None => (Vector::from(gradient.as_slice()), None),
    };
    let (step, eta0) = natural_step(&direction, apply, T::lit(cfg.line_search.delta))?;
    let expected_gain = dot(&gradient, &step)?;
    let (outcome, next) =
        backtracking_line_search(current, &step, eta0, expected_gain, batch, &cfg.line_search)?;
    Ok((
        InnerStep {
            outcome,
            cg,
            gradient_norm,
            variance_ratio,
        },
        outcome.accepted.then_some(next),
    ))
}
