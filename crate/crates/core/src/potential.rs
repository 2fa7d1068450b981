//! Distance-based formation potential.
//!
//! For a pair with desired distance `d` and squared distance `s`,
//!
//! ```text
//! sigma(s) = k_r (1 - s/d²)³        for 0 <= s <= d²
//!          = k_a (sqrt(s)/d - 1)³   for s >= d²
//! ```
//!
//! which is C² with a unique zero at `s = d²`. The formation cost sums
//! `sigma` over ordered agent pairs scaled by `k_F / 2`, so each undirected
//! edge contributes `k_F sigma`.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{OiftError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub k_r: f64,
    pub k_a: f64,
}

impl PotentialParams {
    pub fn new(k_r: f64, k_a: f64) -> Result<Self> {
        let p = Self { k_r, k_a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_r > 0.0 && self.k_a > 0.0) {
            return Err(OiftError::InvalidParameter(format!(
                "potential gains must be positive (k_r = {}, k_a = {})",
                self.k_r, self.k_a
            )));
        }
        Ok(())
    }
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self { k_r: 100.0, k_a: 1.0 }
    }
}

fn check_s(s: f64) -> Result<()> {
    if s < 0.0 || s.is_nan() {
        return Err(OiftError::NegativeSquaredDistance(s));
    }
    Ok(())
}

/// Value, first and second derivative of the potential with respect to `s`.
/// `s = d²` is evaluated on the repulsive branch.
pub fn sigma_all(s: f64, d: f64, params: &PotentialParams) -> Result<(f64, f64, f64)> {
    check_s(s)?;
    let d2 = d * d;
    if s <= d2 {
        let w = 1.0 - s / d2;
        Ok((
            params.k_r * w * w * w,
            -3.0 * params.k_r * w * w / d2,
            6.0 * params.k_r * w / (d2 * d2),
        ))
    } else {
        let r = s.sqrt();
        let w = r / d - 1.0;
        let value = params.k_a * w * w * w;
        let first = 3.0 * params.k_a * w * w / (2.0 * d * r);
        let second = 3.0 * params.k_a * (w / (2.0 * d2 * s) - w * w / (4.0 * d * s * r));
        Ok((value, first, second))
    }
}

pub fn sigma(s: f64, d: f64, params: &PotentialParams) -> Result<f64> {
    sigma_all(s, d, params).map(|t| t.0)
}

pub fn sigma_prime(s: f64, d: f64, params: &PotentialParams) -> Result<f64> {
    sigma_all(s, d, params).map(|t| t.1)
}

pub fn sigma_second(s: f64, d: f64, params: &PotentialParams) -> Result<f64> {
    sigma_all(s, d, params).map(|t| t.2)
}

/// Undirected constraint `|p_i - p_j| = d` between 1-based agents `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

/// Weighted edge list of desired inter-agent distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFormation", into = "RawFormation")]
pub struct FormationSpec {
    agents: usize,
    edges: Vec<Edge>,
    complete: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawFormation {
    Complete { agents: usize, distance: f64 },
    Edges { agents: usize, edges: Vec<Edge> },
}

impl TryFrom<RawFormation> for FormationSpec {
    type Error = OiftError;
    fn try_from(raw: RawFormation) -> Result<Self> {
        match raw {
            RawFormation::Complete { agents, distance } => Self::complete(agents, distance),
            RawFormation::Edges { agents, edges } => Self::from_edges(agents, edges),
        }
    }
}

impl From<FormationSpec> for RawFormation {
    fn from(f: FormationSpec) -> Self {
        match (f.complete, f.edges.first()) {
            (true, Some(e)) => RawFormation::Complete {
                agents: f.agents,
                distance: e.d,
            },
            _ => RawFormation::Edges {
                agents: f.agents,
                edges: f.edges,
            },
        }
    }
}

impl FormationSpec {
    /// Every pair of the `n` agents at the common distance `d`.
    pub fn complete(n: usize, d: f64) -> Result<Self> {
        let edges = (1..=n)
            .flat_map(|i| (i + 1..=n).map(move |j| Edge { i, j, d }))
            .collect();
        let mut f = Self::from_edges(n, edges)?;
        f.complete = true;
        Ok(f)
    }

    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n < 2 {
            return Err(OiftError::InvalidFormation(format!(
                "need at least two agents, got {n}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.i == 0 || e.j > n || e.i >= e.j {
                return Err(OiftError::InvalidFormation(format!(
                    "edge ({}, {}) must satisfy 1 <= i < j <= {n}",
                    e.i, e.j
                )));
            }
            if !(e.d > 0.0 && e.d.is_finite()) {
                return Err(OiftError::InvalidFormation(format!(
                    "edge ({}, {}) has non-positive distance {}",
                    e.i, e.j, e.d
                )));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(OiftError::InvalidFormation(format!(
                    "duplicate edge ({}, {})",
                    e.i, e.j
                )));
            }
        }
        let complete = edges.len() == n * (n - 1) / 2;
        let common = edges.windows(2).all(|w| w[0].d == w[1].d);
        Ok(Self {
            agents: n,
            edges,
            complete: complete && common,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Desired distance of the pair `(i, j)`, in either order.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges.iter().find(|e| e.i == a && e.j == b).map(|e| e.d)
    }

    /// Spatial dimension implied by a stacked position vector.
    fn dim_of(&self, len: usize) -> Result<usize> {
        if len == 0 || len % self.agents != 0 || len / self.agents > 3 {
            return Err(OiftError::DimensionMismatch {
                what: "stacked positions",
                expected: self.agents,
                got: len,
            });
        }
        Ok(len / self.agents)
    }
}

/// Which Hessian of the formation cost to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianMode {
    /// True second derivative; indefinite whenever a pair is repelling.
    Exact,
    /// Repulsive `sigma'` identity terms dropped so every edge block is PSD.
    #[default]
    Safe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationDerivatives {
    pub value: f64,
    pub grad_p: DVector<f64>,
    pub hess_pp: DMatrix<f64>,
    pub mode: HessianMode,
}

struct EdgeTerm {
    a: usize,
    b: usize,
    sigma: f64,
    first: f64,
    second: f64,
}

fn edge_terms<'a>(
    p: DVectorView<'a, f64>,
    formation: &'a FormationSpec,
    params: &'a PotentialParams,
    m: usize,
) -> impl Iterator<Item = Result<(EdgeTerm, DVector<f64>)>> + 'a {
    formation.edges.iter().map(move |e| {
        let (a, b) = (e.i - 1, e.j - 1);
        let diff = p.rows(a * m, m) - p.rows(b * m, m);
        let (sigma, first, second) = sigma_all(diff.norm_squared(), e.d, params)?;
        Ok((
            EdgeTerm {
                a,
                b,
                sigma,
                first,
                second,
            },
            diff,
        ))
    })
}

/// `(k_F / 2) Σ_i Σ_{j≠i} sigma(r_ij²)` over the specified edges.
pub fn formation_cost(
    p: DVectorView<f64>,
    formation: &FormationSpec,
    k_f: f64,
    params: &PotentialParams,
) -> Result<f64> {
    let m = formation.dim_of(p.len())?;
    let mut total = 0.0;
    for term in edge_terms(p, formation, params, m) {
        total += term?.0.sigma;
    }
    Ok(k_f * total)
}

/// Stacked `∇_{p_i} = 2 k_F Σ_j sigma'(s_ij) (p_i - p_j)`.
pub fn formation_gradient(
    p: DVectorView<f64>,
    formation: &FormationSpec,
    k_f: f64,
    params: &PotentialParams,
) -> Result<DVector<f64>> {
    Ok(formation_derivatives(p, formation, k_f, params, None)?.grad_p)
}

pub fn formation_hessian(
    p: DVectorView<f64>,
    formation: &FormationSpec,
    k_f: f64,
    params: &PotentialParams,
    mode: HessianMode,
) -> Result<DMatrix<f64>> {
    Ok(formation_derivatives(p, formation, k_f, params, Some(mode))?.hess_pp)
}

/// Value, gradient and (when `mode` is given) Hessian in a single pass over
/// the edge list. Without a mode the returned Hessian is empty.
pub fn formation_derivatives(
    p: DVectorView<f64>,
    formation: &FormationSpec,
    k_f: f64,
    params: &PotentialParams,
    mode: Option<HessianMode>,
) -> Result<FormationDerivatives> {
    let m = formation.dim_of(p.len())?;
    let nn = p.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(nn);
    let mut hess = if mode.is_some() {
        DMatrix::zeros(nn, nn)
    } else {
        DMatrix::zeros(0, 0)
    };
    for term in edge_terms(p, formation, params, m) {
        let (t, diff) = term?;
        value += t.sigma;
        let g = &diff * (2.0 * k_f * t.first);
        grad.rows_mut(t.a * m, m).axpy(1.0, &g, 1.0);
        grad.rows_mut(t.b * m, m).axpy(-1.0, &g, 1.0);

        let Some(mode) = mode else { continue };
        // Off-diagonal block H_{p_a p_b}; the diagonal blocks collect its negative.
        let mut off = &diff * diff.transpose() * (-4.0 * k_f * t.second);
        if mode == HessianMode::Exact || t.first > 0.0 {
            for d in 0..m {
                off[(d, d)] -= 2.0 * k_f * t.first;
            }
        }
        let (ra, rb) = (t.a * m, t.b * m);
        for r in 0..m {
            for c in 0..m {
                let o = off[(r, c)];
                hess[(ra + r, rb + c)] += o;
                hess[(rb + r, ra + c)] += o;
                hess[(ra + r, ra + c)] -= o;
                hess[(rb + r, rb + c)] -= o;
            }
        }
    }
    Ok(FormationDerivatives {
        value: k_f * value,
        grad_p: grad,
        hess_pp: hess,
        mode: mode.unwrap_or_default(),
    })
}
