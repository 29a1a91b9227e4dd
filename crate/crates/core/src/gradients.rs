//! Surrogate-gradient estimators over a frozen [`SurrogateBatch`].
//!
//! The per-sample term is `∇U^t(w) = ρ_t ∇log π_w(a_t|s_t) Â_t` with
//! `ρ_t = π_w(a_t|s_t) / π_anchor(a_t|s_t)`. Advantages and anchor
//! log-probabilities are constants; nothing differentiates through them.
//!
//! Sums over samples are split into fixed-width chunks that may run in
//! parallel; chunk partials are combined in index order so results are
//! bitwise reproducible.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{diagonal_gaussian_kl, GaussianMlpPolicy, ParamVector};
use crate::rollout::SurrogateBatch;
use crate::scalar::Scalar;

/// Log importance ratios above this are reported as divergence.
pub const MAX_LOG_RATIO: f64 = 30.0;

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Full,
    Minibatch,
    Svrg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<T> {
    pub vector: ParamVector<T>,
    pub n_samples_used: usize,
    pub kind: EstimatorKind,
}

/// Snapshot gradient `g̃ = (1/N) Σ_t ∇U^t(w̃)` and the snapshot policy.
///
/// Per-sample snapshot terms are recomputed when the SVRG correction needs
/// them; only `g̃` is stored.
#[derive(Debug, Clone)]
pub struct AnchorGradientCache<T> {
    anchor: GaussianMlpPolicy<T>,
    full_gradient: ParamVector<T>,
}

impl<T: Scalar> AnchorGradientCache<T> {
    pub fn new(anchor: GaussianMlpPolicy<T>, batch: &SurrogateBatch<T>) -> Result<Self> {
        let full_gradient = full_gradient(&anchor, batch)?.vector;
        Ok(AnchorGradientCache {
            anchor,
            full_gradient,
        })
    }

    pub fn anchor(&self) -> &GaussianMlpPolicy<T> {
        &self.anchor
    }

    pub fn full_gradient(&self) -> &ParamVector<T> {
        &self.full_gradient
    }
}

/// Spread of the per-sample terms inside one SVRG minibatch.
///
/// Both fields are traces of the sample covariance (divisor `m`): of the
/// corrections `∇U^t(w) − ∇U^t(w̃)` and of the raw terms `∇U^t(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceProbe<T> {
    pub svrg_trace: T,
    pub plain_trace: T,
}

impl<T: Scalar> VarianceProbe<T> {
    /// `svrg_trace / plain_trace`, or `None` when the raw terms do not vary.
    pub fn ratio(&self) -> Option<T> {
        (self.plain_trace > T::zero()).then(|| self.svrg_trace / self.plain_trace)
    }
}

fn log_ratio<T: Scalar>(log_prob: T, batch: &SurrogateBatch<T>, t: usize) -> Result<T> {
    let lr = log_prob - batch.anchor_log_prob(t);
    if lr > T::lit(MAX_LOG_RATIO) || lr.is_nan() {
        return Err(Error::Divergence {
            index: t,
            log_ratio: lr.as_f64(),
            limit: MAX_LOG_RATIO,
        });
    }
    Ok(lr)
}

/// Adds `∇U^t(w)` into `acc`.
fn add_per_sample<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    batch: &SurrogateBatch<T>,
    t: usize,
    sign: T,
    acc: &mut [T],
) -> Result<()> {
    let (lp, score) = policy.log_prob_and_grad(batch.observation(t), batch.action(t))?;
    let coef = sign * log_ratio(lp, batch, t)?.exp() * batch.advantage(t);
    for (a, g) in acc.iter_mut().zip(score.iter()) {
        *a = *a + coef * *g;
    }
    Ok(())
}

fn check_index<T: Scalar>(batch: &SurrogateBatch<T>, t: usize) -> Result<()> {
    if t >= batch.len() {
        return Err(Error::argument(format!(
            "sample index {t} out of range for a batch of {}",
            batch.len()
        )));
    }
    Ok(())
}

/// Deterministic chunked sum of `n` per-term contributions into a `width`-long
/// accumulator.
fn chunked_sum<T, F>(n: usize, width: usize, add_term: F) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(usize, &mut [T]) -> Result<()> + Sync,
{
    let partials: Vec<Vec<T>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![T::zero(); width];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                add_term(k, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![T::zero(); width];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t = *t + p;
        }
    }
    Ok(total)
}

/// `ρ_t ∇log π_w(a_t|s_t) Â_t` for sample `t`.
pub fn per_sample_grad<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    batch: &SurrogateBatch<T>,
    t: usize,
) -> Result<ParamVector<T>> {
    check_index(batch, t)?;
    let mut g = ParamVector::zeros(policy.param_count());
    add_per_sample(policy, batch, t, T::one(), &mut g)?;
    Ok(g)
}

pub fn full_gradient<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    batch: &SurrogateBatch<T>,
) -> Result<GradientEstimate<T>> {
    let n = batch.len();
    let sum = chunked_sum(n, policy.param_count(), |t, acc| {
        add_per_sample(policy, batch, t, T::one(), acc)
    })?;
    let inv = T::one() / T::from_usize_lossy(n);
    Ok(GradientEstimate {
        vector: sum.into_iter().map(|x| x * inv).collect(),
        n_samples_used: n,
        kind: EstimatorKind::Full,
    })
}

/// `(1/m) Σ_{t∈I} ∇U^t(w)`.
pub fn minibatch_gradient<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    batch: &SurrogateBatch<T>,
    indices: &[usize],
) -> Result<GradientEstimate<T>> {
    if indices.is_empty() {
        return Err(Error::argument("minibatch must contain at least one index"));
    }
    for &t in indices {
        check_index(batch, t)?;
    }
    let sum = chunked_sum(indices.len(), policy.param_count(), |k, acc| {
        add_per_sample(policy, batch, indices[k], T::one(), acc)
    })?;
    let inv = T::one() / T::from_usize_lossy(indices.len());
    Ok(GradientEstimate {
        vector: sum.into_iter().map(|x| x * inv).collect(),
        n_samples_used: indices.len(),
        kind: EstimatorKind::Minibatch,
    })
}

/// `g̃ + (1/m) Σ_{t∈I} [∇U^t(w) − ∇U^t(w̃)]`.
pub fn svrg_gradient<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    cache: &AnchorGradientCache<T>,
    batch: &SurrogateBatch<T>,
    indices: &[usize],
) -> Result<GradientEstimate<T>> {
    Ok(svrg_gradient_probed(policy, cache, batch, indices)?.0)
}

/// [`svrg_gradient`] plus the spread of its per-sample terms.
pub fn svrg_gradient_probed<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    cache: &AnchorGradientCache<T>,
    batch: &SurrogateBatch<T>,
    indices: &[usize],
) -> Result<(GradientEstimate<T>, VarianceProbe<T>)> {
    if indices.is_empty() {
        return Err(Error::argument("minibatch must contain at least one index"));
    }
    for &t in indices {
        check_index(batch, t)?;
    }
    let p = policy.param_count();
    let anchor = cache.anchor();
    // accumulator layout: [Σ diff (p), Σ raw (p), Σ‖diff‖², Σ‖raw‖²]
    let sums = chunked_sum(indices.len(), 2 * p + 2, |k, acc| {
        let t = indices[k];
        let mut raw = vec![T::zero(); p];
        add_per_sample(policy, batch, t, T::one(), &mut raw)?;
        let mut diff = raw.clone();
        add_per_sample(anchor, batch, t, -T::one(), &mut diff)?;
        let (sq_diff, sq_raw) = diff
            .iter()
            .zip(&raw)
            .fold((T::zero(), T::zero()), |(sd, sr), (&d, &r)| (sd + d * d, sr + r * r));
        for i in 0..p {
            acc[i] = acc[i] + diff[i];
            acc[p + i] = acc[p + i] + raw[i];
        }
        acc[2 * p] = acc[2 * p] + sq_diff;
        acc[2 * p + 1] = acc[2 * p + 1] + sq_raw;
        Ok(())
    })?;
    let inv = T::one() / T::from_usize_lossy(indices.len());
    let vector = cache
        .full_gradient()
        .iter()
        .zip(&sums[..p])
        .map(|(&g, &d)| g + d * inv)
        .collect();
    let trace = |sum: &[T], sq: T| {
        let mean_sq: T = sum.iter().map(|&s| (s * inv) * (s * inv)).sum();
        (sq * inv - mean_sq).max(T::zero())
    };
    let probe = VarianceProbe {
        svrg_trace: trace(&sums[..p], sums[2 * p]),
        plain_trace: trace(&sums[p..2 * p], sums[2 * p + 1]),
    };
    Ok((
        GradientEstimate {
            vector,
            n_samples_used: indices.len(),
            kind: EstimatorKind::Svrg,
        },
        probe,
    ))
}

/// Empirical surrogate `(1/N) Σ_t ρ_t Â_t`.
pub fn surrogate_value<T: Scalar>(policy: &GaussianMlpPolicy<T>, batch: &SurrogateBatch<T>) -> Result<T> {
    Ok(evaluate_candidate(policy, batch)?.surrogate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEvaluation<T> {
    pub surrogate: T,
    /// Mean over batch states of `KL(π_anchor(·|s) ‖ π_w(·|s))`.
    pub mean_kl: T,
}

/// Surrogate value and mean KL from the batch anchor, in one pass.
pub fn evaluate_candidate<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    batch: &SurrogateBatch<T>,
) -> Result<CandidateEvaluation<T>> {
    let n = batch.len();
    let log_std = policy.log_std();
    let sums = chunked_sum(n, 2, |t, acc: &mut [T]| {
        let s = batch.observation(t);
        let mean = policy.mean(s)?;
        let lp = crate::policy::gaussian_log_density(&mean, log_std, batch.action(t));
        let rho = log_ratio(lp, batch, t)?.exp();
        acc[0] = acc[0] + rho * batch.advantage(t);
        acc[1] = acc[1]
            + diagonal_gaussian_kl(batch.anchor_mean(t), batch.anchor_log_std(), &mean, log_std);
        Ok(())
    })?;
    let inv = T::one() / T::from_usize_lossy(n);
    Ok(CandidateEvaluation {
        surrogate: sums[0] * inv,
        mean_kl: sums[1] * inv,
    })
}
