//! Projection-operator Newton iteration.
//!
//! Each iteration solves the LQ model of the cost along the current
//! trajectory for a search direction `zeta`, backtracks on
//! `g(xi + gamma zeta) = h(P(xi + gamma zeta))` and projects the step back
//! onto the trajectory set.

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cost::{assemble_lq_data, total_cost, CostWeights, DesiredOutput, LqData};
use crate::error::{OiftError, Result};
use crate::grid::TimeGrid;
use crate::lq::{riccati_sweep, search_direction, SearchDirection};
use crate::model::SystemMatrices;
use crate::potential::{FormationSpec, HessianMode};
use crate::projection::{open_loop_rollout, project, Curve, FeedbackGains, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub epsilon: f64,
    pub armijo_alpha: f64,
    pub armijo_beta: f64,
    pub gamma_min: f64,
    pub safe_hessian: bool,
}

impl SolverOptions {
    pub fn with_max_iter(max_iter: usize) -> Self {
        Self {
            max_iter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OiftError::InvalidParameter(msg));
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.armijo_alpha > 0.0 && self.armijo_alpha <= 0.5) {
            return bad(format!("armijo_alpha must lie in (0, 0.5], got {}", self.armijo_alpha));
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return bad(format!("armijo_beta must lie in (0, 1), got {}", self.armijo_beta));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min <= 1.0) {
            return bad(format!("gamma_min must lie in (0, 1], got {}", self.gamma_min));
        }
        Ok(())
    }

    pub fn hessian_mode(&self) -> HessianMode {
        if self.safe_hessian {
            HessianMode::Safe
        } else {
            HessianMode::Exact
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            epsilon: 1e-8,
            armijo_alpha: 1e-4,
            armijo_beta: 0.5,
            gamma_min: 1e-8,
            safe_hessian: true,
        }
    }
}

/// A fully specified formation-tracking problem on a fixed grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub sys: SystemMatrices,
    pub formation: FormationSpec,
    pub weights: CostWeights,
    pub desired: DesiredOutput,
    pub gains: FeedbackGains,
    pub x0: DVector<f64>,
    pub grid: TimeGrid,
}

impl Problem {
    /// `h(xi)`.
    pub fn cost(&self, xi: &Trajectory) -> Result<f64> {
        total_cost(xi, &self.weights, self.sys.spec, &self.formation, &self.desired)
    }

    pub fn project(&self, curve: &Curve) -> Result<Trajectory> {
        project(curve, &self.gains, &self.sys, &self.x0)
    }

    /// Zero-input rollout from `x0`.
    pub fn initial_trajectory(&self) -> Result<Trajectory> {
        let nn = self.sys.config_dim();
        open_loop_rollout(
            self.grid,
            vec![DVector::zeros(nn); self.grid.nodes()],
            &self.sys,
            &self.x0,
        )
    }

    pub fn lq_data(&self, xi: &Trajectory, mode: HessianMode) -> Result<LqData> {
        assemble_lq_data(xi, &self.weights, &self.sys, &self.formation, &self.desired, mode)
    }

    pub fn direction(&self, xi: &Trajectory, mode: HessianMode) -> Result<SearchDirection> {
        let lq = self.lq_data(xi, mode)?;
        let ric = riccati_sweep(&lq, &self.sys)?;
        search_direction(&lq, &ric, &self.sys)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Cost at the start of the iteration.
    pub g: f64,
    pub dg: f64,
    /// Accepted step; zero when no step was taken.
    pub gamma: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterReached,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub xi_star: Trajectory,
    pub history: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// `g(xi_star)`.
    pub final_cost: f64,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Accepted Armijo step.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub gamma: f64,
    pub g_new: f64,
    pub backtracks: usize,
    pub trajectory: Trajectory,
}

/// Largest `gamma = beta^m >= gamma_min` with
/// `g(P(xi + gamma zeta)) <= g + alpha gamma dg`; `None` when none qualifies.
pub fn line_search(
    problem: &Problem,
    xi: &Trajectory,
    g: f64,
    zeta: &SearchDirection,
    options: &SolverOptions,
) -> Result<Option<LineSearchStep>> {
    if !(zeta.dg < 0.0) {
        return Err(OiftError::NotDescent(zeta.dg));
    }
    let mut gamma = 1.0;
    let mut backtracks = 0;
    while gamma >= options.gamma_min {
        let curve = Curve::offset(xi, gamma, &zeta.z, &zeta.v);
        // A diverging trial step is treated like an insufficient decrease.
        let trial = problem
            .project(&curve)
            .and_then(|t| problem.cost(&t).map(|c| (t, c)));
        if let Ok((trajectory, g_new)) = trial {
            if g_new.is_finite() && g_new <= g + options.armijo_alpha * gamma * zeta.dg {
                return Ok(Some(LineSearchStep {
                    gamma,
                    g_new,
                    backtracks,
                    trajectory,
                }));
            }
        }
        gamma *= options.armijo_beta;
        backtracks += 1;
    }
    Ok(None)
}

/// Runs the Newton iteration from the zero-input trajectory.
pub fn solve(problem: &Problem, options: &SolverOptions) -> Result<SolveResult> {
    options.validate()?;
    let xi0 = problem.initial_trajectory()?;
    solve_from(problem, xi0, options)
}

/// Runs the Newton iteration from a given trajectory.
pub fn solve_from(problem: &Problem, mut xi: Trajectory, options: &SolverOptions) -> Result<SolveResult> {
    options.validate()?;
    let mode = options.hessian_mode();
    let mut g = problem.cost(&xi)?;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterReached;
    for k in 0..options.max_iter {
        let zeta = problem.direction(&xi, mode)?;
        let dg = zeta.dg;
        debug!("iteration {k}: g = {g:.10e}, dg = {dg:.3e}");
        if -dg < options.epsilon {
            if dg > options.epsilon {
                // Continuous sweep vs discrete cost mismatch near the optimum.
                warn!("iteration {k}: direction is not a descent direction (dg = {dg:.3e}), stopping");
            }
            history.push(IterationRecord { k, g, dg, gamma: 0.0, backtracks: 0 });
            status = SolveStatus::Converged;
            break;
        }
        match line_search(problem, &xi, g, &zeta, options)? {
            Some(step) => {
                history.push(IterationRecord {
                    k,
                    g,
                    dg,
                    gamma: step.gamma,
                    backtracks: step.backtracks,
                });
                xi = step.trajectory;
                g = step.g_new;
            }
            None => {
                let backtracks =
                    (options.gamma_min.ln() / options.armijo_beta.ln()).floor() as usize + 1;
                history.push(IterationRecord { k, g, dg, gamma: 0.0, backtracks });
                status = SolveStatus::LineSearchFailed;
                break;
            }
        }
    }
    Ok(SolveResult {
        xi_star: xi,
        history,
        status,
        final_cost: g,
    })
}
