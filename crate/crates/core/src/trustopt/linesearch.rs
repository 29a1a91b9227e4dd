use crate::error::{check_dim, Error, Result};
use crate::gradients::{evaluate_candidate, CandidateEvaluation};
use crate::numkit::Vector;
use crate::policy::{GaussianMlpPolicy, ParamVector};
use crate::rollout::SurrogateBatch;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchConfig {
    pub max_backtracks: usize,
    /// KL radius of the trust region.
    pub delta: f64,
    /// Required fraction of the first-order predicted gain. Zero accepts any
    /// strict improvement.
    pub accept_ratio: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            max_backtracks: 10,
            delta: 0.01,
            accept_ratio: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    pub accepted: bool,
    /// Step size actually applied, `η₀ / 2^k`; zero when rejected.
    pub eta: T,
    pub measured_kl: T,
    pub surrogate_before: T,
    pub surrogate_after: T,
    pub backtracks: usize,
}

/// Something the line search can score: surrogate value and KL from the
/// trust-region centre at a parameter vector.
pub trait StepObjective<T> {
    fn evaluate(&self, params: &[T]) -> Result<CandidateEvaluation<T>>;
}

/// The epoch surrogate on a frozen batch, KL measured from the batch anchor.
pub struct SurrogateObjective<'a, T> {
    template: &'a GaussianMlpPolicy<T>,
    batch: &'a SurrogateBatch<T>,
}

impl<'a, T: Scalar> SurrogateObjective<'a, T> {
    pub fn new(template: &'a GaussianMlpPolicy<T>, batch: &'a SurrogateBatch<T>) -> Self {
        SurrogateObjective { template, batch }
    }
}

impl<T: Scalar> StepObjective<T> for SurrogateObjective<'_, T> {
    fn evaluate(&self, params: &[T]) -> Result<CandidateEvaluation<T>> {
        let policy = self.template.with_params(ParamVector::from(params.to_vec()))?;
        evaluate_candidate(&policy, self.batch)
    }
}

/// Halves `step` until the candidate strictly improves the objective while
/// staying inside the KL radius.
///
/// Candidates are `w + step / 2^k` for `k = 0..max_backtracks`. A candidate
/// whose evaluation diverges counts as rejected. When nothing is accepted the
/// returned parameters are `w` itself.
pub fn backtrack<T, O>(
    objective: &O,
    w: &[T],
    step: &[T],
    eta0: T,
    expected_gain: T,
    cfg: &LineSearchConfig,
) -> Result<(StepOutcome<T>, Vector<T>)>
where
    T: Scalar,
    O: StepObjective<T> + ?Sized,
{
    check_dim("line-search step", w.len(), step.len())?;
    if step.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("line-search step is not finite".into()));
    }
    let delta = T::lit(cfg.delta);
    let before = objective.evaluate(w)?;
    let mut outcome = StepOutcome {
        accepted: false,
        eta: T::zero(),
        measured_kl: before.mean_kl,
        surrogate_before: before.surrogate,
        surrogate_after: before.surrogate,
        backtracks: cfg.max_backtracks,
    };
    let mut fraction = T::one();
    for k in 0..cfg.max_backtracks {
        let candidate: Vec<T> = w.iter().zip(step).map(|(&wi, &si)| wi + fraction * si).collect();
        match objective.evaluate(&candidate) {
            Ok(eval) => {
                let gain = eval.surrogate - before.surrogate;
                let required = T::lit(cfg.accept_ratio) * expected_gain * fraction;
                if gain > T::zero() && gain >= required && eval.mean_kl <= delta {
                    outcome = StepOutcome {
                        accepted: true,
                        eta: eta0 * fraction,
                        measured_kl: eval.mean_kl,
                        surrogate_before: before.surrogate,
                        surrogate_after: eval.surrogate,
                        backtracks: k,
                    };
                    return Ok((outcome, Vector::from(candidate)));
                }
            }
            Err(e) if e.is_numerical() => {}
            Err(e) => return Err(e),
        }
        fraction = fraction * T::lit(0.5);
    }
    Ok((outcome, Vector::from(w)))
}

/// [`backtrack`] on the epoch surrogate, starting from `policy`.
pub fn backtracking_line_search<T: Scalar>(
    policy: &GaussianMlpPolicy<T>,
    step: &[T],
    eta0: T,
    expected_gain: T,
    batch: &SurrogateBatch<T>,
    cfg: &LineSearchConfig,
) -> Result<(StepOutcome<T>, GaussianMlpPolicy<T>)> {
    let objective = SurrogateObjective::new(policy, batch);
    let (outcome, params) = backtrack(&objective, policy.params(), step, eta0, expected_gain, cfg)?;
    let next = if outcome.accepted {
        policy.with_params(params.into())?
    } else {
        policy.clone()
    };
    Ok((outcome, next))
}
