//! Seeded random numbers and the dense linear-algebra kernel.

mod linalg;
mod rng;

pub use linalg::{
    axpy, cholesky_solve, dot, ensure_finite, matvec, mean_and_var, norm, scale, sub, Matrix,
    Vector,
};
pub use rng::{gaussian_sample, Rng};
