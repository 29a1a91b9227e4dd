use crate::error::{check_dim, Error, Result};
use crate::numkit::{dot, ensure_finite, norm, Vector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    pub residual_tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            max_iters: 10,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport<T> {
    pub solution: Vector<T>,
    pub iterations: usize,
    /// `‖H x − g‖` from the CG recurrence at exit.
    pub residual_norm: T,
    pub converged: bool,
}

/// Solves `H x = g` by conjugate gradients from `x₀ = 0`.
///
/// Stops once `‖r‖ ≤ residual_tol · max(1, ‖g‖)` or after `max_iters`
/// iterations. `apply_h` must be symmetric positive definite.
pub fn conjugate_gradient<T, F>(mut apply_h: F, g: &[T], cfg: &CgConfig) -> Result<CgReport<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Vector<T>>,
{
    if cfg.max_iters == 0 {
        return Err(Error::argument("CG needs max_iters >= 1"));
    }
    ensure_finite("CG right-hand side", g)?;
    let n = g.len();
    let threshold = T::lit(cfg.residual_tol) * norm(g).max(T::one());

    let mut x = vec![T::zero(); n];
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = dot(&r, &r)?;
    let mut iterations = 0;
    while iterations < cfg.max_iters && rr.sqrt() > threshold {
        let hp = apply_h(&p)?;
        check_dim("CG operator output", n, hp.len())?;
        let curvature = dot(&p, &hp)?;
        if !(curvature > T::zero()) {
            return Err(Error::Numerical(format!(
                "CG met non-positive curvature {curvature} at iteration {iterations}"
            )));
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * hp[i];
        }
        let rr_next = dot(&r, &r)?;
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
        if !rr.is_finite() {
            return Err(Error::Numerical(format!(
                "CG residual became non-finite at iteration {iterations}"
            )));
        }
    }
    ensure_finite("CG solution", &x)?;
    let residual_norm = rr.sqrt();
    Ok(CgReport {
        solution: Vector::from(x),
        iterations,
        residual_norm,
        converged: residual_norm <= threshold,
    })
}

/// Scales direction `x` so the quadratic KL model `½ (ηx)ᵀ H (ηx)` equals `delta`.
///
/// Returns `(η₀ x, η₀)` with `η₀ = sqrt(2δ / xᵀHx)`.
pub fn natural_step<T, F>(x: &[T], mut apply_h: F, delta: T) -> Result<(Vector<T>, T)>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Vector<T>>,
{
    if !(delta > T::zero()) {
        return Err(Error::argument("trust-region radius must be positive"));
    }
    let hx = apply_h(x)?;
    let curvature = dot(x, &hx)?;
    if !(curvature > T::zero()) || !curvature.is_finite() {
        return Err(Error::Numerical(format!(
            "natural step needs positive curvature, got xᵀHx = {curvature}"
        )));
    }
    let eta0 = (T::lit(2.0) * delta / curvature).sqrt();
    Ok((x.iter().map(|&xi| eta0 * xi).collect(), eta0))
}
