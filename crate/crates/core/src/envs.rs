//! Deterministic toy continuous-control tasks.
//!
//! Environments are plain values; `step` is a pure function of the state and
//! action. Rewards are charged at the pre-step state.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::numkit::{Rng, Vector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState<T> {
    /// Physical state; layout is environment specific.
    pub physical: Vec<T>,
    pub observation: Vector<T>,
    pub t: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub next_state: EnvState<T>,
    pub reward: T,
}

impl<T> StepResult<T> {
    pub fn next_observation(&self) -> &Vector<T> {
        &self.next_state.observation
    }

    pub fn done(&self) -> bool {
        self.next_state.done
    }
}

pub trait Environment<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset(&self, rng: &mut Rng) -> EnvState<T>;
    fn step(&self, state: &EnvState<T>, action: &[T]) -> Result<StepResult<T>>;
    fn observe(&self, physical: &[T]) -> Vector<T>;

    /// Builds a state at `t = 0` from raw physical coordinates.
    fn state_from(&self, physical: Vec<T>) -> EnvState<T> {
        EnvState {
            observation: self.observe(&physical),
            physical,
            t: 0,
            done: false,
        }
    }
}

fn check_step<T: Scalar>(
    env: &dyn Environment<T>,
    state: &EnvState<T>,
    action: &[T],
) -> Result<()> {
    if state.done {
        return Err(Error::Usage(format!(
            "{}: step called on a finished episode (t = {})",
            env.name(),
            state.t
        )));
    }
    check_dim("action", env.action_dim(), action.len())?;
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::argument("action has a non-finite entry"));
    }
    Ok(())
}

fn clip<T: Scalar>(x: T, lo: f64, hi: f64) -> T {
    x.max(T::lit(lo)).min(T::lit(hi))
}

/// Point mass in the plane pushed toward the goal `(1, 1)`.
///
/// Physical state `(x, y, vx, vy)`; action is a force clipped to `[−1, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    pub goal: [f64; 2],
    pub dt: f64,
    pub horizon: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        PointMassEnv {
            goal: [1.0, 1.0],
            dt: 0.05,
            horizon: 100,
        }
    }
}

impl<T: Scalar> Environment<T> for PointMassEnv {
    fn name(&self) -> &'static str {
        "pointmass"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&self, rng: &mut Rng) -> EnvState<T> {
        let x = T::lit(rng.uniform_in(-1.0, 1.0));
        let y = T::lit(rng.uniform_in(-1.0, 1.0));
        self.state_from(vec![x, y, T::zero(), T::zero()])
    }

    fn step(&self, state: &EnvState<T>, action: &[T]) -> Result<StepResult<T>> {
        check_step(self, state, action)?;
        let dt = T::lit(self.dt);
        let (x, y, vx, vy) = (
            state.physical[0],
            state.physical[1],
            state.physical[2],
            state.physical[3],
        );
        let ax = clip(action[0], -1.0, 1.0);
        let ay = clip(action[1], -1.0, 1.0);
        let gx = x - T::lit(self.goal[0]);
        let gy = y - T::lit(self.goal[1]);
        let reward = -(gx * gx + gy * gy) - T::lit(0.01) * (ax * ax + ay * ay);

        let vx = vx + ax * dt;
        let vy = vy + ay * dt;
        let physical = vec![x + vx * dt, y + vy * dt, vx, vy];
        let t = state.t + 1;
        Ok(StepResult {
            next_state: EnvState {
                observation: self.observe(&physical),
                physical,
                t,
                done: t >= self.horizon,
            },
            reward,
        })
    }

    fn observe(&self, physical: &[T]) -> Vector<T> {
        Vector::from(physical)
    }
}

/// Torque-limited pendulum, `θ = 0` upright.
///
/// Physical state `(θ, θ̇)` with θ wrapped to `(−π, π]` and θ̇ clipped to
/// `[−max_speed, max_speed]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumEnv {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub max_torque: f64,
    pub horizon: usize,
}

impl Default for PendulumEnv {
    fn default() -> Self {
        PendulumEnv {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            max_torque: 2.0,
            horizon: 200,
        }
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let two_pi = T::lit(2.0 * PI);
    let pi = T::lit(PI);
    let mut w = theta - two_pi * ((theta + pi) / two_pi).floor();
    // floor maps the upper edge to −π; the interval is closed at +π
    if w <= -pi {
        w = w + two_pi;
    }
    w
}

impl PendulumEnv {
    pub fn angular_acceleration<T: Scalar>(&self, theta: T, torque: T) -> T {
        let g = T::lit(self.gravity);
        let l = T::lit(self.length);
        let m = T::lit(self.mass);
        T::lit(1.5) * g / l * theta.sin() + T::lit(3.0) / (m * l * l) * torque
    }

    /// Conserved quantity of the torque-free dynamics, `½θ̇² + (3g/2l) cos θ`.
    pub fn energy<T: Scalar>(&self, theta: T, theta_dot: T) -> T {
        T::lit(0.5) * theta_dot * theta_dot
            + T::lit(1.5 * self.gravity / self.length) * theta.cos()
    }
}

impl<T: Scalar> Environment<T> for PendulumEnv {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&self, rng: &mut Rng) -> EnvState<T> {
        // PI - 2π·U[0,1) lies in (−π, π]
        let theta = T::lit(PI - 2.0 * PI * rng.uniform());
        let theta_dot = T::lit(rng.uniform_in(-1.0, 1.0));
        self.state_from(vec![theta, theta_dot])
    }

    fn step(&self, state: &EnvState<T>, action: &[T]) -> Result<StepResult<T>> {
        check_step(self, state, action)?;
        let (theta, theta_dot) = (state.physical[0], state.physical[1]);
        let u = clip(action[0], -self.max_torque, self.max_torque);
        let reward = -(theta * theta
            + T::lit(0.1) * theta_dot * theta_dot
            + T::lit(0.001) * u * u);

        let dt = T::lit(self.dt);
        let acc = self.angular_acceleration(theta, u);
        let theta_dot = clip(theta_dot + acc * dt, -self.max_speed, self.max_speed);
        let theta = wrap_angle(theta + theta_dot * dt);
        let physical = vec![theta, theta_dot];
        let t = state.t + 1;
        Ok(StepResult {
            next_state: EnvState {
                observation: self.observe(&physical),
                physical,
                t,
                done: t >= self.horizon,
            },
            reward,
        })
    }

    fn observe(&self, physical: &[T]) -> Vector<T> {
        let theta = physical[0];
        Vector::from(vec![theta.cos(), theta.sin(), physical[1]])
    }
}

/// Environment selected by name.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    PointMass(PointMassEnv),
    Pendulum(PendulumEnv),
}

impl EnvKind {
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        match &mut self {
            EnvKind::PointMass(e) => e.horizon = horizon,
            EnvKind::Pendulum(e) => e.horizon = horizon,
        }
        self
    }

    fn inner<T: Scalar>(&self) -> &dyn Environment<T> {
        match self {
            EnvKind::PointMass(e) => e,
            EnvKind::Pendulum(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvName {
    PointMass,
    Pendulum,
}

impl EnvName {
    pub fn build(self) -> EnvKind {
        match self {
            EnvName::PointMass => EnvKind::PointMass(PointMassEnv::default()),
            EnvName::Pendulum => EnvKind::Pendulum(PendulumEnv::default()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::PointMass => "pointmass",
            EnvName::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pointmass" => Ok(EnvName::PointMass),
            "pendulum" => Ok(EnvName::Pendulum),
            other => Err(format!("unknown environment `{other}` (expected pointmass | pendulum)")),
        }
    }
}

impl<T: Scalar> Environment<T> for EnvKind {
    fn name(&self) -> &'static str {
        self.inner::<T>().name()
    }
    fn obs_dim(&self) -> usize {
        self.inner::<T>().obs_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner::<T>().action_dim()
    }
    fn horizon(&self) -> usize {
        self.inner::<T>().horizon()
    }
    fn reset(&self, rng: &mut Rng) -> EnvState<T> {
        self.inner().reset(rng)
    }
    fn step(&self, state: &EnvState<T>, action: &[T]) -> Result<StepResult<T>> {
        self.inner().step(state, action)
    }
    fn observe(&self, physical: &[T]) -> Vector<T> {
        self.inner().observe(physical)
    }
}
