//! Equations of motion and the fixed-step RK4 integrator.

use super::catalog::EnvSpec;
use crate::error::{CoreError, Result};

pub const GRAVITY: f64 = 9.81;
pub const PENDULUM_LENGTH: f64 = 1.0;

// fixed joint constants for the per-link-mass chains
const CHAIN_FIXED_STIFFNESS: f64 = 5.0;
const CHAIN_FIXED_DAMPING: f64 = 0.2;
const CHAIN_FIXED_FRICTION: f64 = 0.05;
/// Rest length between neighbouring chain links (m).
pub const CHAIN_REST: f64 = 1.0;

/// Physical right-hand sides. Built once per model from denormalized
/// parameters; evaluation is pure.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Pendulum {
        mass: f64,
        damping: f64,
    },
    SpringDamper {
        mass: f64,
        stiffness: f64,
        damping: f64,
    },
    BouncingBall {
        restitution: f64,
        gravity: f64,
        drag: f64,
    },
    /// Surjective diagnostic: only `shape * scale` enters the dynamics.
    BallProduct {
        effective_gravity: f64,
    },
    ChainLinks {
        masses: Vec<f64>,
    },
    ChainJoints {
        damping: Vec<f64>,
        stiffness: Vec<f64>,
        friction: Vec<f64>,
    },
}

impl Dynamics {
    pub fn from_phys(spec: &EnvSpec, phys: &[f64]) -> Result<Self> {
        let d = match spec.env_id {
            "pendulum" => Dynamics::Pendulum {
                mass: phys[0],
                damping: phys[1],
            },
            "spring-damper" => Dynamics::SpringDamper {
                mass: phys[0],
                stiffness: phys[1],
                damping: phys[2],
            },
            "bouncing-ball" => Dynamics::BouncingBall {
                restitution: phys[0],
                gravity: phys[1],
                drag: phys[2],
            },
            "bouncing-ball-product" => Dynamics::BallProduct {
                effective_gravity: GRAVITY * phys[0] * phys[1],
            },
            id if id.starts_with("chain-links-") => Dynamics::ChainLinks {
                masses: phys.to_vec(),
            },
            id if id.starts_with("chain-joints-") => {
                let n = phys.len() / 3;
                let mut damping = Vec::with_capacity(n);
                let mut stiffness = Vec::with_capacity(n);
                let mut friction = Vec::with_capacity(n);
                for j in 0..n {
                    damping.push(phys[3 * j]);
                    stiffness.push(phys[3 * j + 1]);
                    friction.push(phys[3 * j + 2]);
                }
                Dynamics::ChainJoints {
                    damping,
                    stiffness,
                    friction,
                }
            }
            other => {
                return Err(CoreError::UnknownEnv {
                    id: other.to_string(),
                    valid: "catalog ids".into(),
                })
            }
        };
        Ok(d)
    }

    /// Time derivative of the state under a fixed (already clamped) action.
    pub fn deriv(&self, state: &[f64], action: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Pendulum { mass, damping } => {
                let (th, thdot, u) = (state[0], state[1], action[0]);
                let ml2 = mass * PENDULUM_LENGTH * PENDULUM_LENGTH;
                out[0] = thdot;
                out[1] = -(GRAVITY / PENDULUM_LENGTH) * th.sin() - (damping / ml2) * thdot
                    + u / ml2;
            }
            Dynamics::SpringDamper {
                mass,
                stiffness,
                damping,
            } => {
                let (x, v, u) = (state[0], state[1], action[0]);
                out[0] = v;
                out[1] = (-stiffness * x - damping * v + u) / mass;
            }
            Dynamics::BouncingBall { gravity, drag, .. } => {
                let (_, v, u) = (state[0], state[1], action[0]);
                out[0] = v;
                out[1] = -gravity - drag * v + u;
            }
            Dynamics::BallProduct { effective_gravity } => {
                out[0] = state[1];
                out[1] = -effective_gravity;
            }
            Dynamics::ChainLinks { masses } => {
                let n = masses.len();
                let (xs, vs) = state.split_at(n);
                for i in 0..n {
                    let mut force = action[i];
                    if i > 0 {
                        let stretch = (xs[i] - xs[i - 1]) - CHAIN_REST;
                        force -= CHAIN_FIXED_STIFFNESS * stretch
                            + CHAIN_FIXED_DAMPING * (vs[i] - vs[i - 1]);
                    }
                    if i + 1 < n {
                        let stretch = (xs[i + 1] - xs[i]) - CHAIN_REST;
                        force += CHAIN_FIXED_STIFFNESS * stretch
                            + CHAIN_FIXED_DAMPING * (vs[i + 1] - vs[i]);
                    }
                    out[i] = vs[i];
                    out[n + i] = force / masses[i] - CHAIN_FIXED_FRICTION * vs[i];
                }
            }
            Dynamics::ChainJoints {
                damping,
                stiffness,
                friction,
            } => {
                // n joints connect n+1 unit masses; joint j sits between
                // links j and j+1 and its friction damps the distal link
                let nj = damping.len();
                let n = nj + 1;
                let (xs, vs) = state.split_at(n);
                for i in 0..n {
                    let mut force = 0.0;
                    if i > 0 {
                        let j = i - 1;
                        let stretch = (xs[i] - xs[i - 1]) - CHAIN_REST;
                        force -= stiffness[j] * stretch + damping[j] * (vs[i] - vs[i - 1]);
                        force += action[j];
                    }
                    if i + 1 < n {
                        let j = i;
                        let stretch = (xs[i + 1] - xs[i]) - CHAIN_REST;
                        force += stiffness[j] * stretch + damping[j] * (vs[i + 1] - vs[i]);
                        force -= action[j];
                    }
                    let fr = if i == 0 { CHAIN_FIXED_FRICTION } else { friction[i - 1] };
                    out[i] = vs[i];
                    out[n + i] = force - fr * vs[i];
                }
            }
        }
    }

    /// Discrete event applied after each integration step.
    pub fn post_step(&self, state: &mut [f64]) {
        match self {
            Dynamics::BouncingBall { restitution, .. } => {
                if state[0] < 0.0 {
                    state[0] = -state[0];
                    state[1] = -restitution * state[1];
                }
            }
            Dynamics::BallProduct { .. } => {
                if state[0] < 0.0 {
                    state[0] = -state[0];
                    state[1] = -0.8 * state[1];
                }
            }
            _ => {}
        }
    }
}

/// One classical RK4 step of size `dt` under a zero-order-hold action.
pub fn rk4_step(dyn_: &Dynamics, state: &[f64], action: &[f64], dt: f64) -> Vec<f64> {
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    dyn_.deriv(state, action, &mut k1);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    dyn_.deriv(&tmp, action, &mut k2);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    dyn_.deriv(&tmp, action, &mut k3);
    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    dyn_.deriv(&tmp, action, &mut k4);

    let mut next = vec![0.0; n];
    for i in 0..n {
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next
}

/// Wrap an angle to [-pi, pi]; used by the pendulum reward only.
pub fn wrap_angle(th: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (th + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w < -std::f64::consts::PI {
        w += two_pi;
    }
    w
}
