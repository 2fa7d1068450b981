//! Time-varying LQ search direction.
//!
//! Backward sweep, integrated with RK4 from `P(T) = P₁`, `r(T) = r₁`:
//!
//! ```text
//! -Ṗ = AᵀP + PA - K_oᵀ R_o K_o + Q_o,   K_o = R_o⁻¹ (S_oᵀ + BᵀP)
//! -ṙ = (A - B K_o)ᵀ r + a - K_oᵀ b
//! ```
//!
//! The minimizer is then `v = -K_o z - R_o⁻¹ (Bᵀ r + b)` with `z(0) = 0`.
//! The forward pass holds `v` linear between nodes (the same discretization
//! as the projection), so `(z, v)` is an exact tangent of the discrete
//! trajectory set.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::cost::LqData;
use crate::error::{OiftError, Result};
use crate::model::SystemMatrices;
use crate::projection::HoldStep;

/// Relative asymmetry of `P` tolerated before symmetrization.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: Vec<DMatrix<f64>>,
    pub k_o: Vec<DMatrix<f64>>,
    pub r: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchDirection {
    pub z: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// `Dg(xi) · zeta`.
    pub dg: f64,
}

struct Stage<'a> {
    q: DMatrix<f64>,
    a: DVector<f64>,
    b: DVector<f64>,
    s: Option<DMatrix<f64>>,
    r_inv: &'a DMatrix<f64>,
}

fn input_weight_inverse(lq: &LqData) -> Result<DMatrix<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(lq.r_o.clone()).ok_or_else(|| {
        OiftError::InvalidParameter("input weight R_o is not positive definite".into())
    })?;
    Ok(chol.inverse())
}

/// `K_o = R_o⁻¹ (S_oᵀ + Bᵀ P)`.
fn gain(sys: &SystemMatrices, p: &DMatrix<f64>, s: Option<&DMatrix<f64>>, r_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = sys.b_transpose_mul(p);
    if let Some(s) = s {
        g += s.transpose();
    }
    r_inv * g
}

/// Backward-time derivatives `(-Ṗ, -ṙ)`.
fn backward_rhs(
    sys: &SystemMatrices,
    p: &DMatrix<f64>,
    r: &DVector<f64>,
    st: &Stage,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut g = sys.b_transpose_mul(p);
    if let Some(s) = &st.s {
        g += s.transpose();
    }
    let k = st.r_inv * &g;
    let dp = sys.a_transpose_mul(p) + sys.mul_a(p) - g.transpose() * &k + &st.q;
    let dr = sys.a_transpose_mul_vec(r) + &st.a - k.transpose() * (sys.b_transpose_mul_vec(r) + &st.b);
    (dp, dr)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// The first node whose `Q_o` is indefinite, if any.
pub fn first_indefinite_node(lq: &LqData, tol: f64) -> Option<(usize, f64)> {
    lq.q_o
        .iter()
        .enumerate()
        .map(|(k, q)| (k, min_eigenvalue(q)))
        .find(|&(_, ev)| ev < -tol)
}

pub fn riccati_sweep(lq: &LqData, sys: &SystemMatrices) -> Result<RiccatiSolution> {
    let grid = lq.grid;
    let nodes = grid.nodes();
    let h = grid.dt();
    let r_inv = input_weight_inverse(lq)?;
    let s_at = |k: usize| lq.s_o.as_ref().map(|s| s[k].clone());
    let stage_at = |k: usize| Stage {
        q: lq.q_o[k].clone(),
        a: lq.a[k].clone(),
        b: lq.b[k].clone(),
        s: s_at(k),
        r_inv: &r_inv,
    };

    let mut p = vec![DMatrix::zeros(0, 0); nodes];
    let mut r = vec![DVector::zeros(0); nodes];
    let mut k_o = vec![DMatrix::zeros(0, 0); nodes];
    p[nodes - 1] = lq.p1.clone();
    r[nodes - 1] = lq.r1.clone();

    for k in (0..grid.steps()).rev() {
        let hi = stage_at(k + 1);
        let lo = stage_at(k);
        let mid = Stage {
            q: (&hi.q + &lo.q) * 0.5,
            a: (&hi.a + &lo.a) * 0.5,
            b: (&hi.b + &lo.b) * 0.5,
            s: match (&hi.s, &lo.s) {
                (Some(x), Some(y)) => Some((x + y) * 0.5),
                _ => None,
            },
            r_inv: &r_inv,
        };
        let (p1, r1) = (&p[k + 1], &r[k + 1]);
        let (kp1, kr1) = backward_rhs(sys, p1, r1, &hi);
        let (kp2, kr2) = backward_rhs(sys, &(p1 + &kp1 * (0.5 * h)), &(r1 + &kr1 * (0.5 * h)), &mid);
        let (kp3, kr3) = backward_rhs(sys, &(p1 + &kp2 * (0.5 * h)), &(r1 + &kr2 * (0.5 * h)), &mid);
        let (kp4, kr4) = backward_rhs(sys, &(p1 + &kp3 * h), &(r1 + &kr3 * h), &lo);
        let mut pk = p1 + (kp1 + kp2 * 2.0 + kp3 * 2.0 + kp4) * (h / 6.0);
        let rk = r1 + (kr1 + kr2 * 2.0 + kr3 * 2.0 + kr4) * (h / 6.0);

        if !(pk.iter().all(|v| v.is_finite()) && rk.iter().all(|v| v.is_finite())) {
            if let Some((node, min_eigenvalue)) = first_indefinite_node(lq, 1e-8) {
                return Err(OiftError::IndefiniteWeight {
                    node,
                    min_eigenvalue,
                });
            }
            return Err(OiftError::NonFinite {
                stage: "Riccati sweep",
                node: k,
                t: grid.time(k),
            });
        }
        let asym = (&pk - pk.transpose()).amax() / pk.amax().max(1.0);
        if asym > SYMMETRY_TOLERANCE {
            return Err(OiftError::RiccatiAsymmetry {
                t: grid.time(k),
                asymmetry: asym,
            });
        }
        pk = (&pk + pk.transpose()) * 0.5;
        p[k] = pk;
        r[k] = rk;
    }
    for k in 0..nodes {
        k_o[k] = gain(sys, &p[k], lq.s_o.as_ref().map(|s| &s[k]), &r_inv);
    }
    Ok(RiccatiSolution { p, k_o, r })
}

/// Minimizing perturbation `(z, v)` from `z(0) = 0` and its directional derivative.
pub fn search_direction(lq: &LqData, ric: &RiccatiSolution, sys: &SystemMatrices) -> Result<SearchDirection> {
    let grid = lq.grid;
    let nn = lq.input_dim();
    let r_inv = input_weight_inverse(lq)?;
    let step = HoldStep::new(grid.dt());
    let feedforward = |k: usize| &r_inv * (sys.b_transpose_mul_vec(&ric.r[k]) + &lq.b[k]);

    let mut z = Vec::with_capacity(grid.nodes());
    let mut v = Vec::with_capacity(grid.nodes());
    z.push(DVector::zeros(2 * nn));
    v.push(-feedforward(0));
    for k in 0..grid.steps() {
        let kg = &ric.k_o[k + 1];
        let free = step.free_response(&z[k], &v[k]);
        // z_{k+1} = free + Γ₁ v_{k+1},  Γ₁ = [h²/6 I; h/2 I]
        let k_gamma = kg.columns(0, nn) * step.p_from_u1 + kg.columns(nn, nn) * step.v_from_u;
        let lhs = DMatrix::identity(nn, nn) + k_gamma;
        let rhs = -(kg * &free) - feedforward(k + 1);
        let v1 = lhs.lu().solve(&rhs).ok_or(OiftError::NonFinite {
            stage: "search direction",
            node: k + 1,
            t: grid.time(k + 1),
        })?;
        let z1 = step.advance(&z[k], &v[k], &v1);
        if !(z1.iter().all(|x| x.is_finite()) && v1.iter().all(|x| x.is_finite())) {
            return Err(OiftError::NonFinite {
                stage: "search direction",
                node: k + 1,
                t: grid.time(k + 1),
            });
        }
        z.push(z1);
        v.push(v1);
    }
    let dg = directional_derivative(lq, &z, &v);
    Ok(SearchDirection { z, v, dg })
}

/// `∫ (aᵀz + bᵀv) dt + r₁ᵀ z(T)` by the trapezoid rule.
pub fn directional_derivative(lq: &LqData, z: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
    let integrand = (0..lq.grid.nodes()).map(|k| lq.a[k].dot(&z[k]) + lq.b[k].dot(&v[k]));
    lq.grid.trapezoid(integrand) + lq.r1.dot(&z[z.len() - 1])
}

/// Full LQ objective at `(z, v)`, trapezoid in time.
pub fn lq_objective(lq: &LqData, z: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
    let integrand = (0..lq.grid.nodes()).map(|k| {
        let (zk, vk) = (&z[k], &v[k]);
        let mut quad = zk.dot(&(&lq.q_o[k] * zk)) + vk.dot(&(&lq.r_o * vk));
        if let Some(s) = &lq.s_o {
            quad += 2.0 * zk.dot(&(&s[k] * vk));
        }
        lq.a[k].dot(zk) + lq.b[k].dot(vk) + 0.5 * quad
    });
    let zt = &z[z.len() - 1];
    lq.grid.trapezoid(integrand) + lq.r1.dot(zt) + 0.5 * zt.dot(&(&lq.p1 * zt))
}
