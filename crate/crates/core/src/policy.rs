//! Diagonal-Gaussian policy whose mean is a tanh MLP.
//!
//! All parameters live in one flat [`ParamVector`]. The layout is layer-major:
//! for each layer the `out × in` weight matrix (row-major) followed by its
//! `out` biases, and the state-independent `log_std` vector last. The
//! checkpoint format writes the vector in exactly this order.

use std::fmt::Write as _;
use std::ops::{Deref, DerefMut};

use crate::error::{check_dim, Error, Result};
use crate::numkit::{ensure_finite, Matrix, Rng, Vector};
use crate::scalar::Scalar;

const CHECKPOINT_MAGIC: &str = "svrpo-policy v1";

/// Flat vector of every policy parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![T::zero(); n])
    }

    pub fn norm(&self) -> T {
        crate::numkit::norm(&self.0)
    }
}

impl<T> ParamVector<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParamVector(v)
    }
}

impl<T> From<Vector<T>> for ParamVector<T> {
    fn from(v: Vector<T>) -> Self {
        ParamVector(v.into_inner())
    }
}

impl<T> FromIterator<T> for ParamVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        ParamVector(iter.into_iter().collect())
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParamVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArchitecture {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden_sizes: Vec<usize>,
    /// Initial value of every `log_std` entry. Not part of the policy's identity.
    pub init_log_std: f64,
}

impl PolicyArchitecture {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden_sizes: Vec<usize>,
        init_log_std: f64,
    ) -> Result<Self> {
        let arch = PolicyArchitecture {
            obs_dim,
            action_dim,
            hidden_sizes,
            init_log_std,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.action_dim == 0 {
            return Err(Error::argument("obs_dim and action_dim must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::argument(
                "hidden_sizes must be a non-empty list of positive integers",
            ));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::argument("init_log_std must be finite"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 2);
        dims.push(self.obs_dim);
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.action_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum::<usize>()
            + self.action_dim
    }

    fn log_std_offset(&self) -> usize {
        self.param_count() - self.action_dim
    }

    fn same_shape(&self, other: &PolicyArchitecture) -> bool {
        self.obs_dim == other.obs_dim
            && self.action_dim == other.action_dim
            && self.hidden_sizes == other.hidden_sizes
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

fn layer_slots(arch: &PolicyArchitecture) -> Vec<LayerSlot> {
    let mut offset = 0;
    arch.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                weights: offset,
                biases: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GaussianMlpPolicy<T> {
    arch: PolicyArchitecture,
    slots: Vec<LayerSlot>,
    params: ParamVector<T>,
}

/// Equal when the network shape and every parameter agree bitwise.
impl<T: PartialEq> PartialEq for GaussianMlpPolicy<T> {
    fn eq(&self, other: &Self) -> bool {
        self.arch.same_shape(&other.arch) && self.params == other.params
    }
}

impl<T: Scalar> GaussianMlpPolicy<T> {
    /// All weights and biases zero, `log_std = init_log_std`.
    pub fn zeros(arch: PolicyArchitecture) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamVector::zeros(arch.param_count());
        let off = arch.log_std_offset();
        for p in &mut params[off..] {
            *p = T::lit(arch.init_log_std);
        }
        Ok(Self::assemble(arch, params))
    }

    /// Glorot-uniform weights, zero biases, `log_std = init_log_std`.
    pub fn random(arch: PolicyArchitecture, rng: &mut Rng) -> Result<Self> {
        let mut policy = Self::zeros(arch)?;
        for slot in policy.slots.clone() {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            for w in &mut policy.params[slot.weights..slot.biases] {
                *w = T::lit(rng.uniform_in(-limit, limit));
            }
        }
        Ok(policy)
    }

    pub fn from_params(arch: PolicyArchitecture, params: ParamVector<T>) -> Result<Self> {
        arch.validate()?;
        check_dim("policy parameters", arch.param_count(), params.len())?;
        ensure_finite("policy parameters", &params)?;
        Ok(Self::assemble(arch, params))
    }

    fn assemble(arch: PolicyArchitecture, params: ParamVector<T>) -> Self {
        GaussianMlpPolicy {
            slots: layer_slots(&arch),
            arch,
            params,
        }
    }

    /// Same architecture, new parameters.
    pub fn with_params(&self, params: ParamVector<T>) -> Result<Self> {
        check_dim("policy parameters", self.param_count(), params.len())?;
        ensure_finite("policy parameters", &params)?;
        Ok(GaussianMlpPolicy {
            arch: self.arch.clone(),
            slots: self.slots.clone(),
            params,
        })
    }

    pub fn flatten(&self) -> ParamVector<T> {
        self.params.clone()
    }

    pub fn unflatten(arch: PolicyArchitecture, params: ParamVector<T>) -> Result<Self> {
        Self::from_params(arch, params)
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn architecture(&self) -> &PolicyArchitecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.arch.action_dim
    }

    pub fn log_std(&self) -> &[T] {
        &self.params[self.arch.log_std_offset()..]
    }

    pub fn std(&self) -> Vector<T> {
        self.log_std().iter().map(|l| l.exp()).collect()
    }

    fn check_obs(&self, s: &[T]) -> Result<()> {
        check_dim("observation", self.arch.obs_dim, s.len())?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::argument("observation has a non-finite entry"));
        }
        Ok(())
    }

    /// Layer activations; `acts[0]` is the input and the last entry the mean.
    fn activations(&self, s: &[T]) -> Vec<Vec<T>> {
        let last = self.slots.len() - 1;
        let mut acts = Vec::with_capacity(self.slots.len() + 1);
        acts.push(s.to_vec());
        for (l, slot) in self.slots.iter().enumerate() {
            let input = &acts[l];
            let w = &self.params[slot.weights..slot.biases];
            let b = &self.params[slot.biases..slot.biases + slot.fan_out];
            let out: Vec<T> = (0..slot.fan_out)
                .map(|i| {
                    let row = &w[i * slot.fan_in..(i + 1) * slot.fan_in];
                    let z = row
                        .iter()
                        .zip(input)
                        .fold(b[i], |acc, (&wij, &xj)| acc + wij * xj);
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Accumulates `∂(dmeanᵀ μ)/∂θ` for the network weights into `grad`.
    fn backprop_mean(&self, acts: &[Vec<T>], dmean: &[T], grad: &mut [T]) {
        let mut delta = dmean.to_vec();
        for (l, slot) in self.slots.iter().enumerate().rev() {
            let input = &acts[l];
            for i in 0..slot.fan_out {
                let d = delta[i];
                let gw = &mut grad[slot.weights + i * slot.fan_in..slot.weights + (i + 1) * slot.fan_in];
                for (g, &x) in gw.iter_mut().zip(input) {
                    *g = *g + d * x;
                }
                grad[slot.biases + i] = grad[slot.biases + i] + d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[slot.weights..slot.biases];
            let mut prev = vec![T::zero(); slot.fan_in];
            for (i, &d) in delta.iter().enumerate() {
                let row = &w[i * slot.fan_in..(i + 1) * slot.fan_in];
                for (p, &wij) in prev.iter_mut().zip(row) {
                    *p = *p + wij * d;
                }
            }
            // input is tanh output of the layer below: d tanh = 1 - h²
            for (p, &h) in prev.iter_mut().zip(input) {
                *p = *p * (T::one() - h * h);
            }
            delta = prev;
        }
    }

    pub fn forward(&self, s: &[T]) -> Result<(Vector<T>, Vector<T>)> {
        self.check_obs(s)?;
        let mut acts = self.activations(s);
        let mean = Vector::from(acts.pop().unwrap_or_default());
        Ok((mean, self.std()))
    }

    pub fn mean(&self, s: &[T]) -> Result<Vector<T>> {
        Ok(self.forward(s)?.0)
    }

    pub fn log_prob(&self, s: &[T], a: &[T]) -> Result<T> {
        check_dim("action", self.arch.action_dim, a.len())?;
        let (mean, _) = self.forward(s)?;
        Ok(gaussian_log_density(&mean, self.log_std(), a))
    }

    pub fn grad_log_prob(&self, s: &[T], a: &[T]) -> Result<ParamVector<T>> {
        Ok(self.log_prob_and_grad(s, a)?.1)
    }

    /// `log π(a|s)` together with its gradient, sharing one forward pass.
    pub fn log_prob_and_grad(&self, s: &[T], a: &[T]) -> Result<(T, ParamVector<T>)> {
        self.check_obs(s)?;
        check_dim("action", self.arch.action_dim, a.len())?;
        let acts = self.activations(s);
        let mean = &acts[acts.len() - 1];
        let log_std = self.log_std();
        let mut dmean = Vec::with_capacity(a.len());
        let mut dlog_std = Vec::with_capacity(a.len());
        for k in 0..a.len() {
            let inv_var = (-(log_std[k] + log_std[k])).exp();
            let diff = a[k] - mean[k];
            dmean.push(diff * inv_var);
            dlog_std.push(diff * diff * inv_var - T::one());
        }
        let mut grad = ParamVector::zeros(self.param_count());
        self.backprop_mean(&acts, &dmean, &mut grad);
        let off = self.arch.log_std_offset();
        grad[off..].copy_from_slice(&dlog_std);
        Ok((gaussian_log_density(mean, log_std, a), grad))
    }

    /// `KL(self(·|s) ‖ other(·|s))`.
    pub fn kl(&self, other: &Self, s: &[T]) -> Result<T> {
        if !self.arch.same_shape(&other.arch) {
            return Err(Error::argument("KL between policies of different architecture"));
        }
        let (mu_p, _) = self.forward(s)?;
        let (mu_q, _) = other.forward(s)?;
        Ok(diagonal_gaussian_kl(
            &mu_p,
            self.log_std(),
            &mu_q,
            other.log_std(),
        ))
    }

    /// Mean state-wise KL over a set of observations.
    pub fn mean_kl<'a, I>(&self, other: &Self, states: I) -> Result<T>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut total = T::zero();
        let mut n = 0usize;
        for s in states {
            total = total + self.kl(other, s)?;
            n += 1;
        }
        if n == 0 {
            return Err(Error::argument("mean_kl over an empty state set"));
        }
        Ok(total / T::from_usize_lossy(n))
    }

    /// Serializes to the line-oriented checkpoint format.
    pub fn to_checkpoint(&self) -> String {
        let hidden: Vec<String> = self.arch.hidden_sizes.iter().map(|h| h.to_string()).collect();
        let mut out = format!(
            "{CHECKPOINT_MAGIC} obs={} act={} hidden={}\n",
            self.arch.obs_dim,
            self.arch.action_dim,
            hidden.join(",")
        );
        for p in self.params.iter() {
            // Display on floats prints the shortest string that round-trips.
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty checkpoint".into()))?;
        let arch = parse_checkpoint_header(header)?;
        let expected = arch.param_count();
        let values: Vec<&str> = lines.map(str::trim).filter(|l| !l.is_empty()).collect();
        if values.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} parameters, found {}",
                values.len()
            )));
        }
        let params = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.parse::<T>()
                    .map_err(|_| Error::Format(format!("parameter {i}: cannot parse `{v}`")))
            })
            .collect::<Result<ParamVector<T>>>()?;
        Self::from_params(arch, params).map_err(|e| Error::Format(e.to_string()))
    }
}

fn parse_checkpoint_header(header: &str) -> Result<PolicyArchitecture> {
    let rest = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::Format(format!("bad header `{header}`")))?;
    let mut obs = None;
    let mut act = None;
    let mut hidden = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field `{field}`")))?;
        let bad = || Error::Format(format!("bad value in header field `{field}`"));
        match key {
            "obs" => obs = Some(value.parse::<usize>().map_err(|_| bad())?),
            "act" => act = Some(value.parse::<usize>().map_err(|_| bad())?),
            "hidden" => {
                hidden = Some(
                    value
                        .split(',')
                        .map(|h| h.parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(Error::Format(format!("unknown header field `{key}`"))),
        }
    }
    match (obs, act, hidden) {
        (Some(obs), Some(act), Some(hidden)) => PolicyArchitecture::new(obs, act, hidden, 0.0)
            .map_err(|e| Error::Format(e.to_string())),
        _ => Err(Error::Format(format!("incomplete header `{header}`"))),
    }
}

/// `Σ_k −(a_k − μ_k)²/(2σ_k²) − log σ_k − ½ log 2π`.
pub fn gaussian_log_density<T: Scalar>(mean: &[T], log_std: &[T], a: &[T]) -> T {
    let half = T::lit(0.5);
    let half_log_two_pi = half * (T::lit(2.0) * T::PI()).ln();
    mean.iter()
        .zip(log_std)
        .zip(a)
        .fold(T::zero(), |acc, ((&mu, &ls), &ak)| {
            let z = (ak - mu) * (-ls).exp();
            acc - half * z * z - ls - half_log_two_pi
        })
}

/// KL divergence between diagonal Gaussians `N(μp, σp²)` and `N(μq, σq²)`.
pub fn diagonal_gaussian_kl<T: Scalar>(
    mean_p: &[T],
    log_std_p: &[T],
    mean_q: &[T],
    log_std_q: &[T],
) -> T {
    let half = T::lit(0.5);
    let mut kl = T::zero();
    for k in 0..mean_p.len() {
        let var_p = (log_std_p[k] + log_std_p[k]).exp();
        let var_q = (log_std_q[k] + log_std_q[k]).exp();
        let d = mean_p[k] - mean_q[k];
        kl = kl + log_std_q[k] - log_std_p[k] + (var_p + d * d) / (var_q + var_q) - half;
    }
    kl
}

/// Empirical Fisher information `(1/n) Σ gᵢ gᵢᵀ + λI` as a matrix-free operator.
///
/// The score vectors `gᵢ = ∇ log π(aᵢ|sᵢ)` are evaluated once at construction,
/// so each product costs two passes over an `n × P` table.
#[derive(Debug, Clone)]
pub struct EmpiricalFisher<T> {
    scores: Matrix<T>,
    damping: T,
}

impl<T: Scalar> EmpiricalFisher<T> {
    pub fn new<'a, I>(policy: &GaussianMlpPolicy<T>, pairs: I, damping: T) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [T], &'a [T])>,
    {
        let p = policy.param_count();
        let mut data = Vec::new();
        let mut n = 0;
        for (s, a) in pairs {
            data.extend_from_slice(&policy.grad_log_prob(s, a)?);
            n += 1;
        }
        if n == 0 {
            return Err(Error::argument("Fisher estimate needs a non-empty subsample"));
        }
        if damping < T::zero() || !damping.is_finite() {
            return Err(Error::argument("Fisher damping must be finite and non-negative"));
        }
        Ok(EmpiricalFisher {
            scores: Matrix::new(n, p, data)?,
            damping,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.scores.rows()
    }

    pub fn dim(&self) -> usize {
        self.scores.cols()
    }

    pub fn apply(&self, v: &[T]) -> Result<Vector<T>> {
        check_dim("Fisher-vector product", self.dim(), v.len())?;
        let n = T::from_usize_lossy(self.sample_count());
        let projections: Vec<T> = (0..self.sample_count())
            .map(|i| crate::numkit::dot(self.scores.row(i), v))
            .collect::<Result<_>>()?;
        let mut out = self.scores.transpose_matvec(&projections)?;
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = *o / n + self.damping * vi;
        }
        Ok(out)
    }
}

/// One-shot Fisher-vector product on the given `(state, action)` pairs.
pub fn fisher_vector_product<'a, T, I>(
    policy: &GaussianMlpPolicy<T>,
    pairs: I,
    v: &[T],
    damping: T,
) -> Result<ParamVector<T>>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    Ok(EmpiricalFisher::new(policy, pairs, damping)?.apply(v)?.into())
}
