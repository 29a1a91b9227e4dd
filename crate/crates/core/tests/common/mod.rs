#![allow(dead_code)]

use svrpo::envs::Environment;
use svrpo::policy::{GaussianMlpPolicy, ParamVector, PolicyArchitecture};
use svrpo::rollout::{build_batch, collect, fit_baseline, SurrogateBatch};
use svrpo::{Policy, Rng, Vector};

pub fn arch(obs: usize, hidden: &[usize], act: usize) -> PolicyArchitecture {
    PolicyArchitecture::new(obs, act, hidden.to_vec(), 0.0).unwrap()
}

/// Policy with every parameter, log_std included, drawn from N(0, scale²).
pub fn random_policy(arch: PolicyArchitecture, scale: f64, rng: &mut Rng) -> Policy {
    let p = arch.param_count();
    let params: ParamVector<f64> = (0..p).map(|_| scale * rng.standard_normal()).collect();
    GaussianMlpPolicy::from_params(arch, params).unwrap()
}

pub fn normal_vec(n: usize, scale: f64, rng: &mut Rng) -> Vector {
    (0..n).map(|_| scale * rng.standard_normal()).collect()
}

/// Batch of `n` random states, actions sampled from `anchor`, standard-normal advantages.
pub fn synthetic_batch(anchor: &Policy, n: usize, rng: &mut Rng) -> SurrogateBatch<f64> {
    let mut obs = Vec::with_capacity(n);
    let mut acts = Vec::with_capacity(n);
    for _ in 0..n {
        let s = normal_vec(anchor.obs_dim(), 1.0, rng);
        let (mean, std) = anchor.forward(&s).unwrap();
        acts.push(rng.gaussian_sample(&mean, &std).unwrap());
        obs.push(s);
    }
    let adv = (0..n).map(|_| rng.standard_normal()).collect();
    SurrogateBatch::new(anchor, obs, acts, adv).unwrap()
}

/// Batch collected from `env` under a freshly initialized policy, as epoch 1
/// of training would see it.
pub fn env_batch<E: Environment<f64>>(env: &E, n: usize, seed: u64) -> (Policy, SurrogateBatch<f64>) {
    let a = PolicyArchitecture::new(env.obs_dim(), env.action_dim(), vec![32, 32], 0.0).unwrap();
    let policy = GaussianMlpPolicy::random(a, &mut Rng::new(seed, 1)).unwrap();
    let mut rng = Rng::new(seed, 2);
    let warmup = collect(&policy, env, n, &mut rng).unwrap();
    let baseline = fit_baseline(&warmup, 0.99).unwrap();
    let trajs = collect(&policy, env, n, &mut rng).unwrap();
    let batch = build_batch(&policy, &trajs, &baseline, 0.99, true).unwrap();
    (policy, batch)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞ / max(‖b‖∞, 1e-12)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&diff) / max_abs(b).max(1e-12)
}

/// Central differences of `f` at `w` with step `h`.
pub fn central_diff(w: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            x[i] = w[i] + h;
            let up = f(&x);
            x[i] = w[i] - h;
            let down = f(&x);
            x[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Dense `(1/n) Σ g gᵀ + damping·I` from explicit score vectors.
pub fn dense_fisher(scores: &[ParamVector<f64>], damping: f64) -> Vec<Vec<f64>> {
    let p = scores[0].len();
    let n = scores.len() as f64;
    let mut h = vec![vec![0.0; p]; p];
    for g in scores {
        for i in 0..p {
            for j in 0..p {
                h[i][j] += g[i] * g[j] / n;
            }
        }
    }
    for (i, row) in h.iter_mut().enumerate() {
        row[i] += damping;
    }
    h
}

pub fn dense_matvec(h: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    h.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Trace of the sample covariance (divisor `k`) of `k` vectors.
pub fn trace_covariance(samples: &[Vec<f64>]) -> f64 {
    let k = samples.len() as f64;
    let p = samples[0].len();
    let mut mean = vec![0.0; p];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / k;
        }
    }
    samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / k
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &r)| {
        let mut row = row.clone();
        row.push(r);
        row
    }).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// `BᵀB + shift·I` for a random square `B`.
pub fn random_spd(n: usize, shift: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(n, 1.0, rng).into_inner()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect()
}
