//! Policy execution, discounted returns, the linear value baseline and the
//! frozen per-epoch surrogate batch.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::envs::Environment;
use crate::error::{check_dim, Error, Result};
use crate::numkit::{cholesky_solve, gaussian_sample, mean_and_var, Matrix, Rng, Vector};
use crate::policy::{GaussianMlpPolicy, ParamVector};
use crate::scalar::Scalar;

/// Ridge coefficient of the baseline's normal equations.
pub const BASELINE_RIDGE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub observation: Vector<T>,
    pub action: Vector<T>,
    pub reward: T,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub transitions: Vec<Transition<T>>,
    pub terminal: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<T> {
        self.transitions.iter().map(|tr| tr.reward).collect()
    }

    /// Undiscounted episode return.
    pub fn total_reward(&self) -> T {
        self.transitions.iter().map(|tr| tr.reward).sum()
    }
}

/// Runs one episode to termination.
pub fn run_episode<T, E>(
    policy: &GaussianMlpPolicy<T>,
    env: &E,
    rng: &mut Rng,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
{
    let mut state = env.reset(rng);
    let mut transitions = Vec::with_capacity(env.horizon());
    while !state.done {
        let (mean, std) = policy.forward(&state.observation)?;
        let action = gaussian_sample(rng, &mean, &std)?;
        let step = env.step(&state, &action)?;
        transitions.push(Transition {
            observation: state.observation,
            action,
            reward: step.reward,
            t: state.t,
        });
        state = step.next_state;
    }
    Ok(Trajectory {
        transitions,
        terminal: state.done,
    })
}

/// Collects whole episodes until at least `n_transitions` have been gathered.
///
/// Each episode runs on its own stream derived from one draw of `rng`, so the
/// output does not depend on how episodes are scheduled across threads.
pub fn collect<T, E>(
    policy: &GaussianMlpPolicy<T>,
    env: &E,
    n_transitions: usize,
    rng: &mut Rng,
) -> Result<Vec<Trajectory<T>>>
where
    T: Scalar,
    E: Environment<T> + ?Sized,
{
    let horizon = env.horizon();
    if horizon == 0 || n_transitions < horizon {
        return Err(Error::argument(format!(
            "need at least one horizon of transitions (N = {n_transitions}, horizon = {horizon})"
        )));
    }
    check_dim("policy observation size", env.obs_dim(), policy.obs_dim())?;
    check_dim("policy action size", env.action_dim(), policy.action_dim())?;

    let base_seed = rand::RngCore::next_u64(rng);
    let mut trajectories: Vec<Trajectory<T>> = Vec::new();
    let mut total = 0;
    let mut next_episode = 0u64;
    while total < n_transitions {
        let wave = (n_transitions - total).div_ceil(horizon) as u64;
        let batch: Vec<Trajectory<T>> = (next_episode..next_episode + wave)
            .into_par_iter()
            .map(|episode| {
                let mut episode_rng = Rng::new(base_seed, episode);
                run_episode(policy, env, &mut episode_rng)
            })
            .collect::<Result<_>>()?;
        next_episode += wave;
        total += batch.iter().map(Trajectory::len).sum::<usize>();
        trajectories.extend(batch);
    }
    Ok(trajectories)
}

/// `R_t = r_t + γ R_{t+1}` within one trajectory, no bootstrapping.
pub fn discounted_returns<T: Scalar>(rewards: &[T], gamma: T) -> Result<Vec<T>> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::argument(format!("discount must lie in (0, 1), got {gamma}")));
    }
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    Ok(out)
}

/// Linear value baseline over `φ(s, t) = [s, s⊙s, τ, τ², τ³, 1]` with `τ = 0.01 t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaseline<T> {
    obs_dim: usize,
    coefficients: Vector<T>,
}

impl<T: Scalar> LinearBaseline<T> {
    pub fn zero(obs_dim: usize) -> Self {
        LinearBaseline {
            obs_dim,
            coefficients: Vector::zeros(Self::feature_len(obs_dim)),
        }
    }

    pub fn feature_len(obs_dim: usize) -> usize {
        2 * obs_dim + 4
    }

    pub fn coefficients(&self) -> &Vector<T> {
        &self.coefficients
    }

    pub fn features(obs: &[T], t: usize) -> Vec<T> {
        let tau = T::lit(0.01) * T::from_usize_lossy(t);
        let mut phi = Vec::with_capacity(Self::feature_len(obs.len()));
        phi.extend_from_slice(obs);
        phi.extend(obs.iter().map(|&x| x * x));
        phi.extend([tau, tau * tau, tau * tau * tau, T::one()]);
        phi
    }

    pub fn predict(&self, obs: &[T], t: usize) -> Result<T> {
        check_dim("baseline observation", self.obs_dim, obs.len())?;
        crate::numkit::dot(&Self::features(obs, t), &self.coefficients)
    }

    /// Ridge least squares on explicit `(observation, t, target)` samples.
    pub fn fit_samples<'a, I>(obs_dim: usize, samples: I, ridge: T) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [T], usize, T)>,
    {
        let k = Self::feature_len(obs_dim);
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (obs, t, target) in samples {
            check_dim("baseline observation", obs_dim, obs.len())?;
            rows.extend(Self::features(obs, t));
            targets.push(target);
        }
        let design = Matrix::new(targets.len(), k, rows)?;
        let mut normal = design.gram();
        for i in 0..k {
            normal[(i, i)] = normal[(i, i)] + ridge;
        }
        let rhs = design.transpose_matvec(&targets)?;
        let coefficients = cholesky_solve(&normal, &rhs)?;
        crate::numkit::ensure_finite("baseline coefficients", &coefficients)?;
        Ok(LinearBaseline {
            obs_dim,
            coefficients,
        })
    }
}

/// Fits the baseline to the discounted returns of `trajectories`.
pub fn fit_baseline<T: Scalar>(trajectories: &[Trajectory<T>], gamma: T) -> Result<LinearBaseline<T>> {
    let first = trajectories
        .iter()
        .find(|tr| !tr.is_empty())
        .ok_or_else(|| Error::argument("fit_baseline needs at least one non-empty trajectory"))?;
    let obs_dim = first.transitions[0].observation.len();
    let returns = trajectories
        .iter()
        .map(|tr| discounted_returns(&tr.rewards(), gamma))
        .collect::<Result<Vec<_>>>()?;
    let samples = trajectories.iter().zip(&returns).flat_map(|(tr, rets)| {
        tr.transitions
            .iter()
            .zip(rets)
            .map(|(x, &r)| (x.observation.as_slice(), x.t, r))
    });
    LinearBaseline::fit_samples(obs_dim, samples, T::lit(BASELINE_RIDGE))
}

/// Frozen dataset defining the epoch's importance-weighted surrogate.
///
/// Everything is computed once at the anchor parameters and never mutated.
#[derive(Debug, Clone)]
pub struct SurrogateBatch<T> {
    anchor_params: ParamVector<T>,
    observations: Vec<Vector<T>>,
    actions: Vec<Vector<T>>,
    advantages: Vec<T>,
    anchor_log_probs: Vec<T>,
    anchor_means: Vec<Vector<T>>,
    anchor_log_std: Vector<T>,
}

impl<T: Scalar> SurrogateBatch<T> {
    /// Builds a batch from explicit samples, evaluating the anchor policy on each.
    pub fn new(
        anchor: &GaussianMlpPolicy<T>,
        observations: Vec<Vector<T>>,
        actions: Vec<Vector<T>>,
        advantages: Vec<T>,
    ) -> Result<Self> {
        check_dim("batch actions", observations.len(), actions.len())?;
        check_dim("batch advantages", observations.len(), advantages.len())?;
        if observations.is_empty() {
            return Err(Error::argument("surrogate batch must not be empty"));
        }
        crate::numkit::ensure_finite("advantages", &advantages)?;
        let mut anchor_log_probs = Vec::with_capacity(observations.len());
        let mut anchor_means = Vec::with_capacity(observations.len());
        for (s, a) in observations.iter().zip(&actions) {
            anchor_log_probs.push(anchor.log_prob(s, a)?);
            anchor_means.push(anchor.mean(s)?);
        }
        Ok(SurrogateBatch {
            anchor_params: anchor.flatten(),
            observations,
            actions,
            advantages,
            anchor_log_probs,
            anchor_means,
            anchor_log_std: Vector::from(anchor.log_std()),
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn anchor_params(&self) -> &ParamVector<T> {
        &self.anchor_params
    }

    pub fn observation(&self, t: usize) -> &[T] {
        &self.observations[t]
    }

    pub fn action(&self, t: usize) -> &[T] {
        &self.actions[t]
    }

    pub fn advantage(&self, t: usize) -> T {
        self.advantages[t]
    }

    pub fn advantages(&self) -> &[T] {
        &self.advantages
    }

    pub fn anchor_log_prob(&self, t: usize) -> T {
        self.anchor_log_probs[t]
    }

    pub fn anchor_mean(&self, t: usize) -> &[T] {
        &self.anchor_means[t]
    }

    pub fn anchor_log_std(&self) -> &[T] {
        &self.anchor_log_std
    }

    pub fn observations(&self) -> impl Iterator<Item = &[T]> {
        self.observations.iter().map(|v| v.as_slice())
    }

    /// `(state, action)` pairs for the given sample indices.
    pub fn pairs<'a>(&'a self, indices: &'a [usize]) -> impl Iterator<Item = (&'a [T], &'a [T])> + 'a {
        indices
            .iter()
            .map(move |&i| (self.observations[i].as_slice(), self.actions[i].as_slice()))
    }

    /// Copy of this batch with every advantage multiplied by `c`.
    pub fn with_scaled_advantages(&self, c: T) -> Self {
        let mut out = self.clone();
        for a in &mut out.advantages {
            *a = *a * c;
        }
        out
    }
}

/// Assembles the epoch batch: `Â_t = R_t − V̂(s_t, t)`, optionally standardized.
///
/// `baseline` is the one fitted on the previous epoch.
pub fn build_batch<T: Scalar>(
    anchor: &GaussianMlpPolicy<T>,
    trajectories: &[Trajectory<T>],
    baseline: &LinearBaseline<T>,
    gamma: T,
    normalize_advantages: bool,
) -> Result<SurrogateBatch<T>> {
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut advantages = Vec::new();
    for tr in trajectories {
        let returns = discounted_returns(&tr.rewards(), gamma)?;
        for (x, r) in tr.transitions.iter().zip(returns) {
            advantages.push(r - baseline.predict(&x.observation, x.t)?);
            observations.push(x.observation.clone());
            actions.push(x.action.clone());
        }
    }
    if normalize_advantages {
        standardize(&mut advantages)?;
    }
    SurrogateBatch::new(anchor, observations, actions, advantages)
}

/// Shifts to mean zero and scales to unit population standard deviation.
/// A constant input is only centred.
pub fn standardize<T: Scalar>(values: &mut [T]) -> Result<()> {
    let (mean, var) = mean_and_var(values)?;
    let std = var.sqrt();
    let scale = if std > T::lit(1e-12) { std } else { T::one() };
    for v in values.iter_mut() {
        *v = (*v - mean) / scale;
    }
    Ok(())
}

#[derive(Serialize)]
struct DumpLine<'a, T> {
    epoch: usize,
    traj_id: usize,
    t: usize,
    obs: &'a [T],
    act: &'a [T],
    reward: T,
}

/// Writes one JSON object per transition.
pub fn write_trajectory_dump<T, W>(out: &mut W, epoch: usize, trajectories: &[Trajectory<T>]) -> std::io::Result<()>
where
    T: Scalar + Serialize,
    W: Write,
{
    for (traj_id, tr) in trajectories.iter().enumerate() {
        for x in &tr.transitions {
            let line = DumpLine {
                epoch,
                traj_id,
                t: x.t,
                obs: &x.observation,
                act: &x.action,
                reward: x.reward,
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
