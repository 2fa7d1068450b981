//! Cost functional and the local LQ data it induces along a trajectory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OiftError, Result};
use crate::grid::TimeGrid;
use crate::model::{SystemMatrices, SystemSpec};
use crate::potential::{formation_derivatives, FormationSpec, HessianMode, PotentialParams};
use crate::projection::Trajectory;
use crate::scenarios::TrajectoryGenerator;

/// Tracking, input and formation weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q_p: f64,
    pub q_v: f64,
    pub r_a: f64,
    pub k_f: f64,
    pub potential: PotentialParams,
}

impl CostWeights {
    /// Tracking weights `q_p`, `q_v` with `r_a = 1`, `k_F = 0.1`, `k_r = 100`, `k_a = 1`.
    pub fn with_tracking(q_p: f64, q_v: f64) -> Self {
        Self {
            q_p,
            q_v,
            r_a: 1.0,
            k_f: 0.1,
            potential: PotentialParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_p >= 0.0 && self.q_v >= 0.0) {
            return Err(OiftError::InvalidParameter(format!(
                "tracking weights must be nonnegative (q_p = {}, q_v = {})",
                self.q_p, self.q_v
            )));
        }
        if !(self.r_a > 0.0) {
            return Err(OiftError::InvalidParameter(format!(
                "input weight must be positive, got {}",
                self.r_a
            )));
        }
        if !(self.k_f > 0.0) {
            return Err(OiftError::InvalidParameter(format!(
                "formation weight must be positive, got {}",
                self.k_f
            )));
        }
        self.potential.validate()
    }

    /// `Q_B = diag(q_p I_M, q_v I_M)`.
    pub fn output_weight(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(2 * m, 2 * m, |r, c| match (r == c, r < m) {
            (true, true) => self.q_p,
            (true, false) => self.q_v,
            _ => 0.0,
        })
    }
}

/// Desired barycenter output sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredOutput {
    generator: TrajectoryGenerator,
    grid: TimeGrid,
    samples: Vec<DVector<f64>>,
}

impl DesiredOutput {
    pub fn sample(generator: TrajectoryGenerator, grid: TimeGrid) -> Result<Self> {
        let samples = grid
            .times()
            .map(|t| generator.evaluate(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            generator,
            grid,
            samples,
        })
    }

    pub fn generator(&self) -> &TrajectoryGenerator {
        &self.generator
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len() / 2
    }

    /// Sample at grid node `k`.
    pub fn node(&self, k: usize) -> &DVector<f64> {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    /// Analytic value at any `t` in `[0, T]`.
    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        let horizon = self.grid.horizon();
        if !(-1e-12..=horizon + 1e-12).contains(&t) {
            return Err(OiftError::TimeOutOfRange { t, horizon });
        }
        self.generator.evaluate(t)
    }
}

/// The three instantaneous cost contributions at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostTerms {
    pub tracking: f64,
    pub input: f64,
    pub formation: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.tracking + self.input + self.formation
    }
}

pub fn tracking_cost(xb: &DVector<f64>, xb_des: &DVector<f64>, weights: &CostWeights) -> f64 {
    let m = xb.len() / 2;
    let e = xb - xb_des;
    let pos = e.rows(0, m).norm_squared();
    let vel = e.rows(m, m).norm_squared();
    0.5 * (weights.q_p * pos + weights.q_v * vel)
}

pub fn input_cost(u: &DVector<f64>, weights: &CostWeights) -> f64 {
    0.5 * weights.r_a * u.norm_squared()
}

/// Instantaneous terms for state `x`, input `u` and desired output `xb_des`.
pub fn cost_terms_at(
    x: &DVector<f64>,
    u: &DVector<f64>,
    xb_des: &DVector<f64>,
    weights: &CostWeights,
    spec: SystemSpec,
    formation: &FormationSpec,
) -> Result<CostTerms> {
    let xb = crate::model::barycenter(x, spec)?;
    if xb_des.len() != xb.len() {
        return Err(OiftError::DimensionMismatch {
            what: "desired output",
            expected: xb.len(),
            got: xb_des.len(),
        });
    }
    if u.len() != spec.config_dim() {
        return Err(OiftError::DimensionMismatch {
            what: "input",
            expected: spec.config_dim(),
            got: u.len(),
        });
    }
    let p = x.rows(0, spec.config_dim());
    Ok(CostTerms {
        tracking: tracking_cost(&xb, xb_des, weights),
        input: input_cost(u, weights),
        formation: crate::potential::formation_cost(p, formation, weights.k_f, &weights.potential)?,
    })
}

/// `l(x, u, t)`.
pub fn instantaneous_cost(
    x: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
    weights: &CostWeights,
    spec: SystemSpec,
    formation: &FormationSpec,
    desired: &DesiredOutput,
) -> Result<f64> {
    let xb_des = desired.at(t)?;
    cost_terms_at(x, u, &xb_des, weights, spec, formation).map(|c| c.total())
}

fn check_grid(xi: &Trajectory, desired: &DesiredOutput) -> Result<()> {
    if xi.grid() != desired.grid() {
        return Err(OiftError::GridMismatch(format!(
            "trajectory has {} nodes at dt = {}, desired output has {} nodes at dt = {}",
            xi.grid().nodes(),
            xi.grid().dt(),
            desired.grid().nodes(),
            desired.grid().dt()
        )));
    }
    Ok(())
}

/// Per-node cost terms along a trajectory.
pub fn cost_terms(
    xi: &Trajectory,
    weights: &CostWeights,
    spec: SystemSpec,
    formation: &FormationSpec,
    desired: &DesiredOutput,
) -> Result<Vec<CostTerms>> {
    check_grid(xi, desired)?;
    xi.states()
        .iter()
        .zip(xi.inputs())
        .zip(desired.samples())
        .map(|((x, u), xd)| cost_terms_at(x, u, xd, weights, spec, formation))
        .collect()
}

/// `h(xi)`: trapezoid quadrature of `l`; the terminal cost is zero.
pub fn total_cost(
    xi: &Trajectory,
    weights: &CostWeights,
    spec: SystemSpec,
    formation: &FormationSpec,
    desired: &DesiredOutput,
) -> Result<f64> {
    let terms = cost_terms(xi, weights, spec, formation, desired)?;
    Ok(xi.grid().trapezoid(terms.iter().map(CostTerms::total)))
}

/// Time-varying data of the search-direction LQ problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LqData {
    pub grid: TimeGrid,
    /// `l_x` at each node.
    pub a: Vec<DVector<f64>>,
    /// `l_u` at each node.
    pub b: Vec<DVector<f64>>,
    pub q_o: Vec<DMatrix<f64>>,
    /// Cross weight; `None` means identically zero.
    pub s_o: Option<Vec<DMatrix<f64>>>,
    /// Constant input weight.
    pub r_o: DMatrix<f64>,
    pub r1: DVector<f64>,
    pub p1: DMatrix<f64>,
}

impl LqData {
    pub fn state_dim(&self) -> usize {
        self.r1.len()
    }

    pub fn input_dim(&self) -> usize {
        self.r_o.nrows()
    }
}

/// Gradient and Hessian of `l` along `xi`.
pub fn assemble_lq_data(
    xi: &Trajectory,
    weights: &CostWeights,
    sys: &SystemMatrices,
    formation: &FormationSpec,
    desired: &DesiredOutput,
    mode: HessianMode,
) -> Result<LqData> {
    check_grid(xi, desired)?;
    let spec = sys.spec;
    let nn = spec.config_dim();
    let qb = weights.output_weight(spec.dim());
    let ct_qb = sys.c.transpose() * &qb;
    let tracking_hessian = &ct_qb * &sys.c;

    let mut a = Vec::with_capacity(xi.grid().nodes());
    let mut b = Vec::with_capacity(xi.grid().nodes());
    let mut q_o = Vec::with_capacity(xi.grid().nodes());
    for ((x, u), xd) in xi.states().iter().zip(xi.inputs()).zip(desired.samples()) {
        let xb = crate::model::barycenter(x, spec)?;
        let fo = formation_derivatives(
            x.rows(0, nn),
            formation,
            weights.k_f,
            &weights.potential,
            Some(mode),
        )?;
        let mut ak = &ct_qb * (xb - xd);
        ak.rows_mut(0, nn).axpy(1.0, &fo.grad_p, 1.0);
        let mut qk = tracking_hessian.clone();
        let mut pp = qk.view_mut((0, 0), (nn, nn));
        pp += &fo.hess_pp;
        a.push(ak);
        b.push(u * weights.r_a);
        q_o.push(qk);
    }
    Ok(LqData {
        grid: *xi.grid(),
        a,
        b,
        q_o,
        s_o: None,
        r_o: DMatrix::identity(nn, nn) * weights.r_a,
        r1: DVector::zeros(2 * nn),
        p1: DMatrix::zeros(2 * nn, 2 * nn),
    })
}
