//! Evaluation metrics for solved trajectories.

use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use crate::cost::{cost_terms, CostTerms, DesiredOutput};
use crate::error::{OiftError, Result};
use crate::model::SystemMatrices;
use crate::potential::FormationSpec;
use crate::pronto::Problem;
use crate::projection::Trajectory;

/// Relative band `|r_ij - d_ij| / d_ij` within which a constraint counts as met.
pub const RELATIVE_BAND: f64 = 0.1;

/// Satisfied over total undirected distance constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintRatio {
    pub satisfied: usize,
    pub total: usize,
}

impl ConstraintRatio {
    pub fn value(&self) -> f64 {
        self.satisfied as f64 / self.total as f64
    }
}

impl fmt::Display for ConstraintRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.satisfied, self.total)
    }
}

/// Distance between agents `i` and `j` (1-based) of stacked positions `p`.
pub fn agent_distance(p: &DVector<f64>, i: usize, j: usize, m: usize) -> f64 {
    (p.rows((i - 1) * m, m) - p.rows((j - 1) * m, m)).norm()
}

/// Achieved distance of every formation edge, in edge order.
pub fn edge_distances(p: &DVector<f64>, formation: &FormationSpec) -> Vec<f64> {
    let m = p.len() / formation.agents();
    formation
        .edges()
        .iter()
        .map(|e| agent_distance(p, e.i, e.j, m))
        .collect()
}

pub fn constraint_ratio(p_final: &DVector<f64>, formation: &FormationSpec) -> Result<ConstraintRatio> {
    if formation.edges().is_empty() {
        return Err(OiftError::InvalidFormation("no distance constraints".into()));
    }
    if p_final.len() % formation.agents() != 0 {
        return Err(OiftError::DimensionMismatch {
            what: "final positions",
            expected: formation.agents(),
            got: p_final.len(),
        });
    }
    let satisfied = formation
        .edges()
        .iter()
        .zip(edge_distances(p_final, formation))
        .filter(|(e, r)| (r - e.d).abs() / e.d < RELATIVE_BAND)
        .count();
    Ok(ConstraintRatio {
        satisfied,
        total: formation.edges().len(),
    })
}

/// `|p_B(t) - p_B,des(t)|` at every node.
pub fn tracking_displacement(xi: &Trajectory, desired: &DesiredOutput, sys: &SystemMatrices) -> Result<Vec<f64>> {
    if xi.grid() != desired.grid() {
        return Err(OiftError::GridMismatch(
            "trajectory and desired output use different grids".into(),
        ));
    }
    let m = sys.spec.dim();
    xi.states()
        .iter()
        .zip(desired.samples())
        .map(|(x, xd)| {
            let xb = sys.barycenter(x)?;
            Ok((xb.rows(0, m) - xd.rows(0, m)).norm())
        })
        .collect()
}

fn orthonormalize(basis: &[Vec<f64>], m: usize) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for b in basis {
        if b.len() != m {
            return Err(OiftError::DimensionMismatch {
                what: "subspace basis vector",
                expected: m,
                got: b.len(),
            });
        }
        let mut v = DVector::from_column_slice(b);
        let scale = v.norm();
        for q in &out {
            v -= q * q.dot(&v);
        }
        let norm = v.norm();
        if !(scale > 0.0) || norm <= 1e-10 * scale {
            return Err(OiftError::DegenerateBasis);
        }
        out.push(v / norm);
    }
    if out.is_empty() {
        return Err(OiftError::DegenerateBasis);
    }
    Ok(out)
}

/// Largest distance of any agent position from `span(basis)` over the horizon.
pub fn subspace_residual(xi: &Trajectory, basis: &[Vec<f64>], sys: &SystemMatrices) -> Result<f64> {
    let (n, m) = (sys.spec.agents(), sys.spec.dim());
    let q = orthonormalize(basis, m)?;
    let mut worst: f64 = 0.0;
    for x in xi.states() {
        for i in 0..n {
            let mut r = x.rows(i * m, m).into_owned();
            for qk in &q {
                r -= qk * qk.dot(&r);
            }
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}

/// Metrics of one solved trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub phi_c: ConstraintRatio,
    pub phi_c_value: f64,
    pub final_distances: Vec<f64>,
    pub tracking_error: Vec<f64>,
    pub terminal_tracking_error: f64,
    pub cost_terms: Vec<CostTerms>,
    pub subspace_residual: Option<f64>,
}

pub fn metrics_report(problem: &Problem, xi: &Trajectory, subspace: Option<&[Vec<f64>]>) -> Result<MetricsReport> {
    let nn = problem.sys.config_dim();
    let p_final = xi.final_state().rows(0, nn).into_owned();
    let phi_c = constraint_ratio(&p_final, &problem.formation)?;
    let tracking_error = tracking_displacement(xi, &problem.desired, &problem.sys)?;
    let terms = cost_terms(
        xi,
        &problem.weights,
        problem.sys.spec,
        &problem.formation,
        &problem.desired,
    )?;
    let subspace_residual = subspace
        .map(|basis| subspace_residual(xi, basis, &problem.sys))
        .transpose()?;
    Ok(MetricsReport {
        phi_c,
        phi_c_value: phi_c.value(),
        final_distances: edge_distances(&p_final, &problem.formation),
        terminal_tracking_error: *tracking_error.last().unwrap_or(&f64::NAN),
        tracking_error,
        cost_terms: terms,
        subspace_residual,
    })
}
