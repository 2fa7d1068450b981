//! Projection of state-input curves onto trajectories of the double integrator.
//!
//! A curve `(alpha, mu)` is mapped to the trajectory of the closed loop
//! `u = mu + K (alpha - x)` with `K = [k_p I, k_v I]`. Between grid nodes
//! the input is held linear in time. RK4 under a linearly interpolated input
//! is exact for the double integrator, so each step reduces to
//!
//! ```text
//! p⁺ = p + h v + h²/3 u_k + h²/6 u_{k+1}
//! v⁺ = v + h/2 u_k + h/2 u_{k+1}
//! ```
//!
//! with the node input `u_{k+1}` depending on `x_{k+1}` through the feedback
//! law. The resulting per-coordinate scalar equation is solved in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OiftError, Result};
use crate::grid::TimeGrid;
use crate::model::SystemMatrices;

/// Discrete transition of one double-integrator step with first-order-hold input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HoldStep {
    pub h: f64,
    pub p_from_u0: f64,
    pub p_from_u1: f64,
    pub v_from_u: f64,
}

impl HoldStep {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            p_from_u0: h * h / 3.0,
            p_from_u1: h * h / 6.0,
            v_from_u: 0.5 * h,
        }
    }

    /// `x_{k+1}` given `x_k`, `u_k`, `u_{k+1}`.
    pub fn advance(&self, x: &DVector<f64>, u0: &DVector<f64>, u1: &DVector<f64>) -> DVector<f64> {
        let nn = u0.len();
        let mut next = DVector::zeros(2 * nn);
        for c in 0..nn {
            let (p, v) = (x[c], x[nn + c]);
            next[c] = p + self.h * v + self.p_from_u0 * u0[c] + self.p_from_u1 * u1[c];
            next[nn + c] = v + self.v_from_u * (u0[c] + u1[c]);
        }
        next
    }

    /// Part of `x_{k+1}` that does not depend on `u_{k+1}`.
    pub fn free_response(&self, x: &DVector<f64>, u0: &DVector<f64>) -> DVector<f64> {
        self.advance(x, u0, &DVector::zeros(u0.len()))
    }
}

/// One classical RK4 step of `ẋ = A x + B u(t)` with `u` linear over the step.
pub fn rk4_step(
    sys: &SystemMatrices,
    x: &DVector<f64>,
    u0: &DVector<f64>,
    u1: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let f = |x: &DVector<f64>, u: &DVector<f64>| &sys.a * x + &sys.b * u;
    let um = (u0 + u1) * 0.5;
    let k1 = f(x, u0);
    let k2 = f(&(x + &k1 * (0.5 * h)), &um);
    let k3 = f(&(x + &k2 * (0.5 * h)), &um);
    let k4 = f(&(x + &k3 * h), u1);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Largest per-step mismatch between stored states and an RK4 step under
/// the stored inputs.
pub fn max_defect(
    sys: &SystemMatrices,
    grid: &TimeGrid,
    x: &[DVector<f64>],
    u: &[DVector<f64>],
) -> f64 {
    (0..grid.steps())
        .map(|k| (rk4_step(sys, &x[k], &u[k], &u[k + 1], grid.dt()) - &x[k + 1]).amax())
        .fold(0.0, f64::max)
}

/// State-like and input-like paths sampled on a grid; not necessarily a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub grid: TimeGrid,
    pub alpha: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
}

impl Curve {
    pub fn new(grid: TimeGrid, alpha: Vec<DVector<f64>>, mu: Vec<DVector<f64>>) -> Result<Self> {
        for (what, len) in [("alpha samples", alpha.len()), ("mu samples", mu.len())] {
            if len != grid.nodes() {
                return Err(OiftError::DimensionMismatch {
                    what,
                    expected: grid.nodes(),
                    got: len,
                });
            }
        }
        Ok(Self { grid, alpha, mu })
    }

    /// `xi + gamma * (z, v)` node by node.
    pub fn offset(xi: &Trajectory, gamma: f64, z: &[DVector<f64>], v: &[DVector<f64>]) -> Self {
        let alpha = xi.x.iter().zip(z).map(|(x, z)| x + z * gamma).collect();
        let mu = xi.u.iter().zip(v).map(|(u, v)| u + v * gamma).collect();
        Self {
            grid: xi.grid,
            alpha,
            mu,
        }
    }
}

/// How a trajectory's states were generated from its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegrationScheme {
    /// RK4 with inputs linearly interpolated between nodes.
    Rk4LinearInput,
}

/// A state-input pair satisfying the dynamics on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub(crate) grid: TimeGrid,
    pub(crate) x: Vec<DVector<f64>>,
    pub(crate) u: Vec<DVector<f64>>,
    pub(crate) scheme: IntegrationScheme,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn scheme(&self) -> IntegrationScheme {
        self.scheme
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.x[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        &self.x[self.x.len() - 1]
    }

    pub fn to_curve(&self) -> Curve {
        Curve {
            grid: self.grid,
            alpha: self.x.clone(),
            mu: self.u.clone(),
        }
    }

    pub fn max_defect(&self, sys: &SystemMatrices) -> f64 {
        max_defect(sys, &self.grid, &self.x, &self.u)
    }

    /// Sup-norm distance over states and inputs.
    pub fn distance(&self, other: &Trajectory) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.u.iter().zip(&other.u))
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// Constant PD gains of the projection feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackGains {
    pub k_p: f64,
    pub k_v: f64,
    pub omega_n: f64,
    pub zeta: f64,
}

impl FeedbackGains {
    /// `k_p = ω_n²`, `k_v = 2 ζ ω_n`.
    pub fn from_second_order(omega_n: f64, zeta: f64) -> Result<Self> {
        if !(omega_n > 0.0 && zeta > 0.0) {
            return Err(OiftError::InvalidParameter(format!(
                "natural frequency and damping must be positive (omega_n = {omega_n}, zeta = {zeta})"
            )));
        }
        Ok(Self {
            k_p: omega_n * omega_n,
            k_v: 2.0 * zeta * omega_n,
            omega_n,
            zeta,
        })
    }

    /// Dense `K = [k_p I_N, k_v I_N]`.
    pub fn matrix(&self, nn: usize) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(nn, 2 * nn);
        for c in 0..nn {
            k[(c, c)] = self.k_p;
            k[(c, nn + c)] = self.k_v;
        }
        k
    }
}

impl Default for FeedbackGains {
    fn default() -> Self {
        default_gains()
    }
}

/// `ω_n = 3 rad/s`, `ζ = 0.7`.
pub fn default_gains() -> FeedbackGains {
    FeedbackGains::from_second_order(3.0, 0.7).expect("positive constants")
}

fn check_initial(x0: &DVector<f64>, nn: usize) -> Result<()> {
    if x0.len() != 2 * nn {
        return Err(OiftError::DimensionMismatch {
            what: "initial state",
            expected: 2 * nn,
            got: x0.len(),
        });
    }
    Ok(())
}

fn check_finite(x: &DVector<f64>, u: &DVector<f64>, k: usize, grid: &TimeGrid, stage: &'static str) -> Result<()> {
    if x.iter().chain(u.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OiftError::NonFinite {
            stage,
            node: k,
            t: grid.time(k),
        })
    }
}

/// Closed-loop projection of `curve` starting from `x0`.
pub fn project(
    curve: &Curve,
    gains: &FeedbackGains,
    sys: &SystemMatrices,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    let nn = sys.config_dim();
    check_initial(x0, nn)?;
    let grid = curve.grid;
    let step = HoldStep::new(grid.dt());
    let feedback = |alpha: &DVector<f64>, mu: &DVector<f64>, x: &DVector<f64>| {
        DVector::from_fn(nn, |c, _| {
            mu[c] + gains.k_p * (alpha[c] - x[c]) + gains.k_v * (alpha[nn + c] - x[nn + c])
        })
    };
    // u_{k+1} (1 + k_p h²/6 + k_v h/2) = mu + K alpha - K (free response)
    let denom = 1.0 + gains.k_p * step.p_from_u1 + gains.k_v * step.v_from_u;

    let mut xs = Vec::with_capacity(grid.nodes());
    let mut us = Vec::with_capacity(grid.nodes());
    let u0 = feedback(&curve.alpha[0], &curve.mu[0], x0);
    check_finite(x0, &u0, 0, &grid, "projection")?;
    xs.push(x0.clone());
    us.push(u0);
    for k in 0..grid.steps() {
        let free = step.free_response(&xs[k], &us[k]);
        let u1 = feedback(&curve.alpha[k + 1], &curve.mu[k + 1], &free) / denom;
        let x1 = step.advance(&xs[k], &us[k], &u1);
        check_finite(&x1, &u1, k + 1, &grid, "projection")?;
        xs.push(x1);
        us.push(u1);
    }
    Ok(Trajectory {
        grid,
        x: xs,
        u: us,
        scheme: IntegrationScheme::Rk4LinearInput,
    })
}

/// Open-loop integration of node inputs `u` from `x0`.
pub fn open_loop_rollout(
    grid: TimeGrid,
    u: Vec<DVector<f64>>,
    sys: &SystemMatrices,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    let nn = sys.config_dim();
    check_initial(x0, nn)?;
    if u.len() != grid.nodes() {
        return Err(OiftError::DimensionMismatch {
            what: "input samples",
            expected: grid.nodes(),
            got: u.len(),
        });
    }
    let step = HoldStep::new(grid.dt());
    let mut xs = Vec::with_capacity(grid.nodes());
    xs.push(x0.clone());
    for k in 0..grid.steps() {
        let x1 = step.advance(&xs[k], &u[k], &u[k + 1]);
        check_finite(&x1, &u[k + 1], k + 1, &grid, "rollout")?;
        xs.push(x1);
    }
    Ok(Trajectory {
        grid,
        x: xs,
        u,
        scheme: IntegrationScheme::Rk4LinearInput,
    })
}
