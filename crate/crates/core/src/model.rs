//! Linear double-integrator model of `n` agents moving in `M` dimensions.
//!
//! The stacked state is `x = [p; pdot]` with `p = [p_1; ...; p_n]`, each
//! `p_i` an `M`-vector, and the input is the stacked acceleration `u`.
//! The output `x_B = C x` is the barycenter position and velocity.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{OiftError, Result};

/// Agent count and spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct SystemSpec {
    n: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    agents: usize,
    dim: usize,
}

impl TryFrom<RawSpec> for SystemSpec {
    type Error = OiftError;
    fn try_from(raw: RawSpec) -> Result<Self> {
        SystemSpec::new(raw.agents, raw.dim)
    }
}

impl From<SystemSpec> for RawSpec {
    fn from(s: SystemSpec) -> Self {
        RawSpec {
            agents: s.n,
            dim: s.m,
        }
    }
}

impl SystemSpec {
    /// `n > 1` agents in `m ∈ {1, 2, 3}` dimensions.
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n <= 1 {
            return Err(OiftError::InvalidSystem(format!(
                "at least two agents required, got {n}"
            )));
        }
        Self::new_relaxed(n, m)
    }

    /// Same as [`SystemSpec::new`] but admits a single agent. Used to probe
    /// the per-agent block structure in isolation.
    pub fn new_relaxed(n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(OiftError::InvalidSystem("no agents".into()));
        }
        if !(1..=3).contains(&m) {
            return Err(OiftError::InvalidSystem(format!(
                "spatial dimension must be 1, 2 or 3, got {m}"
            )));
        }
        Ok(Self { n, m })
    }

    /// Number of agents.
    pub fn agents(&self) -> usize {
        self.n
    }

    /// Spatial dimension `M`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// `N = n M`, the length of the stacked position (and input) vector.
    pub fn config_dim(&self) -> usize {
        self.n * self.m
    }

    pub fn state_dim(&self) -> usize {
        2 * self.config_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.m
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(OiftError::DimensionMismatch {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// State split into stacked positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    pub p: DVector<f64>,
    pub pdot: DVector<f64>,
}

impl StackedState {
    pub fn from_agents(positions: &[Vec<f64>], velocities: &[Vec<f64>]) -> Self {
        let p = DVector::from_iterator(
            positions.iter().map(Vec::len).sum(),
            positions.iter().flatten().copied(),
        );
        let pdot = DVector::from_iterator(
            velocities.iter().map(Vec::len).sum(),
            velocities.iter().flatten().copied(),
        );
        Self { p, pdot }
    }

    pub fn split(x: &DVector<f64>) -> Self {
        let half = x.len() / 2;
        Self {
            p: x.rows(0, half).into_owned(),
            pdot: x.rows(half, half).into_owned(),
        }
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.p.len() + self.pdot.len());
        x.rows_mut(0, self.p.len()).copy_from(&self.p);
        x.rows_mut(self.p.len(), self.pdot.len())
            .copy_from(&self.pdot);
        x
    }
}

/// Explicit `A`, `B`, `C` of the stacked double integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub spec: SystemSpec,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

pub fn build_system(spec: SystemSpec) -> SystemMatrices {
    let nn = spec.config_dim();
    let (n, m) = (spec.agents(), spec.dim());
    let mut a = DMatrix::zeros(2 * nn, 2 * nn);
    a.view_mut((0, nn), (nn, nn)).fill_with_identity();
    let mut b = DMatrix::zeros(2 * nn, nn);
    b.view_mut((nn, 0), (nn, nn)).fill_with_identity();
    let mut c = DMatrix::zeros(2 * m, 2 * nn);
    let w = 1.0 / n as f64;
    for i in 0..n {
        for d in 0..m {
            c[(d, i * m + d)] = w;
            c[(m + d, nn + i * m + d)] = w;
        }
    }
    SystemMatrices { spec, a, b, c }
}

impl SystemMatrices {
    pub fn config_dim(&self) -> usize {
        self.spec.config_dim()
    }

    /// `A x + B u`, i.e. `(pdot, u)`.
    pub fn state_derivative(&self, x: DVectorView<f64>, u: DVectorView<f64>) -> DVector<f64> {
        let nn = self.config_dim();
        let mut dx = DVector::zeros(2 * nn);
        dx.rows_mut(0, nn).copy_from(&x.rows(nn, nn));
        dx.rows_mut(nn, nn).copy_from(&u);
        dx
    }

    /// `Aᵀ P`: the top half of `P` shifted into the bottom rows.
    pub fn a_transpose_mul(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let nn = self.config_dim();
        let mut out = DMatrix::zeros(2 * nn, p.ncols());
        out.view_mut((nn, 0), (nn, p.ncols()))
            .copy_from(&p.view((0, 0), (nn, p.ncols())));
        out
    }

    /// `P A`: the left half of `P` shifted into the right columns.
    pub fn mul_a(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let nn = self.config_dim();
        let mut out = DMatrix::zeros(p.nrows(), 2 * nn);
        out.view_mut((0, nn), (p.nrows(), nn))
            .copy_from(&p.view((0, 0), (p.nrows(), nn)));
        out
    }

    /// `Aᵀ r` for a vector.
    pub fn a_transpose_mul_vec(&self, r: &DVector<f64>) -> DVector<f64> {
        let nn = self.config_dim();
        let mut out = DVector::zeros(2 * nn);
        out.rows_mut(nn, nn).copy_from(&r.rows(0, nn));
        out
    }

    /// `Bᵀ P`: the bottom rows of `P`.
    pub fn b_transpose_mul(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let nn = self.config_dim();
        p.view((nn, 0), (nn, p.ncols())).into_owned()
    }

    pub fn b_transpose_mul_vec(&self, r: &DVector<f64>) -> DVector<f64> {
        let nn = self.config_dim();
        r.rows(nn, nn).into_owned()
    }

    /// `B v`.
    pub fn b_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let nn = self.config_dim();
        let mut out = DVector::zeros(2 * nn);
        out.rows_mut(nn, nn).copy_from(v);
        out
    }

    /// `A z` for a vector.
    pub fn a_mul_vec(&self, z: &DVector<f64>) -> DVector<f64> {
        let nn = self.config_dim();
        let mut out = DVector::zeros(2 * nn);
        out.rows_mut(0, nn).copy_from(&z.rows(nn, nn));
        out
    }

    /// Barycenter output `C x` computed by per-agent averaging.
    pub fn barycenter(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        barycenter(x, self.spec)
    }
}

/// `x_B = C x`: mean position followed by mean velocity.
pub fn barycenter(x: &DVector<f64>, spec: SystemSpec) -> Result<DVector<f64>> {
    spec.check_state(x)?;
    let (n, m, nn) = (spec.agents(), spec.dim(), spec.config_dim());
    let mut xb = DVector::zeros(2 * m);
    for i in 0..n {
        for d in 0..m {
            xb[d] += x[i * m + d];
            xb[m + d] += x[nn + i * m + d];
        }
    }
    xb /= n as f64;
    Ok(xb)
}

/// Position of agent `i` (1-based).
pub fn agent_position(x: &DVector<f64>, i: usize, spec: SystemSpec) -> Result<DVector<f64>> {
    spec.check_state(x)?;
    agent_slice(x, i, spec)
}

/// Agent `i` (1-based) of a stacked position vector `p` of length `N`.
pub fn agent_slice(p: &DVector<f64>, i: usize, spec: SystemSpec) -> Result<DVector<f64>> {
    if i == 0 || i > spec.agents() {
        return Err(OiftError::AgentIndex {
            index: i,
            count: spec.agents(),
        });
    }
    let m = spec.dim();
    Ok(p.rows((i - 1) * m, m).into_owned())
}
