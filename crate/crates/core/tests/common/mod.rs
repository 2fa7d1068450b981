#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use oift::cost::LqData;
use oift::grid::TimeGrid;
use oift::model::SystemMatrices;
use oift::potential::{formation_cost, formation_gradient, formation_hessian, FormationSpec, HessianMode, PotentialParams};
use oift::projection::Curve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Positions uniform in `[-half_width, half_width]^m` per agent.
pub fn random_positions<R: Rng>(rng: &mut R, n: usize, m: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n * m, |_, _| rng.gen_range(-half_width..half_width))
}

/// Max-norm relative errors of the analytic gradient and exact Hessian
/// against central differences.
pub fn derivative_errors(p: &DVector<f64>, f: &FormationSpec, k_f: f64, params: &PotentialParams) -> (f64, f64) {
    let n = p.len();
    let grad = formation_gradient(p.as_view(), f, k_f, params).unwrap();
    let hess = formation_hessian(p.as_view(), f, k_f, params, HessianMode::Exact).unwrap();
    let mut fd_grad = DVector::zeros(n);
    let mut fd_hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let step = 1e-6 * p[i].abs().max(1.0);
        let mut hi = p.clone();
        let mut lo = p.clone();
        hi[i] += step;
        lo[i] -= step;
        fd_grad[i] = (formation_cost(hi.as_view(), f, k_f, params).unwrap()
            - formation_cost(lo.as_view(), f, k_f, params).unwrap())
            / (2.0 * step);
        let col = (formation_gradient(hi.as_view(), f, k_f, params).unwrap()
            - formation_gradient(lo.as_view(), f, k_f, params).unwrap())
            / (2.0 * step);
        fd_hess.set_column(i, &col);
    }
    let ge = (&fd_grad - &grad).amax() / grad.amax().max(1e-8);
    let he = (&fd_hess - &hess).amax() / hess.amax().max(1e-8);
    (ge, he)
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.min()
}

/// True when some pair is closer than its target distance.
pub fn has_repelling_pair(p: &DVector<f64>, f: &FormationSpec) -> bool {
    let m = p.len() / f.agents();
    f.edges().iter().any(|e| {
        (p.rows((e.i - 1) * m, m) - p.rows((e.j - 1) * m, m)).norm() < e.d
    })
}

/// Smooth random state/input curve with a few sinusoidal modes per channel.
pub fn random_curve<R: Rng>(rng: &mut R, grid: TimeGrid, nn: usize) -> Curve {
    let mut channel = |len: usize| -> Vec<[f64; 4]> {
        (0..len)
            .map(|_| {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.2..3.0),
                    rng.gen_range(0.0..6.0),
                ]
            })
            .collect()
    };
    let xc = channel(2 * nn);
    let uc = channel(nn);
    let eval = |c: &[f64; 4], t: f64| c[0] + c[1] * (c[2] * t + c[3]).sin();
    let times: Vec<f64> = grid.times().collect();
    let alpha = times
        .iter()
        .map(|&t| DVector::from_iterator(2 * nn, xc.iter().map(|c| eval(c, t))))
        .collect();
    let mu = times
        .iter()
        .map(|&t| DVector::from_iterator(nn, uc.iter().map(|c| eval(c, t))))
        .collect();
    Curve::new(grid, alpha, mu).unwrap()
}

/// Smooth random LQ data with PSD `Q_o` and zero cross and terminal terms.
pub fn random_lq(sys: &SystemMatrices, grid: TimeGrid, seed: u64) -> LqData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, nu) = (sys.spec.state_dim(), sys.config_dim());
    let mut smooth = |len: usize| -> Vec<[f64; 3]> {
        (0..len).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0)]).collect()
    };
    let a_coef = smooth(nx);
    let b_coef = smooth(nu);
    let q_base = DMatrix::from_fn(nx, nx, |_, _| rng.gen_range(-1.0..1.0));
    let q_base = &q_base * q_base.transpose();
    let q_tilt = DMatrix::from_fn(nx, nx, |_, _| rng.gen_range(-0.5..0.5));
    let q_tilt = &q_tilt * q_tilt.transpose();
    let wave = |c: &[f64; 3], t: f64| c[0] + c[1] * (c[2] * t).sin();
    let times: Vec<f64> = grid.times().collect();
    LqData {
        grid,
        a: times.iter().map(|&t| DVector::from_iterator(nx, a_coef.iter().map(|c| wave(c, t)))).collect(),
        b: times.iter().map(|&t| DVector::from_iterator(nu, b_coef.iter().map(|c| wave(c, t)))).collect(),
        q_o: times.iter().map(|&t| &q_base + &q_tilt * (1.0 + t.cos())).collect(),
        s_o: None,
        r_o: DMatrix::identity(nu, nu) * rng.gen_range(0.5..2.0),
        r1: DVector::zeros(nx),
        p1: DMatrix::zeros(nx, nx),
    }
}

/// Solves the optimality system of the LQ problem (state equation, adjoint
/// equation, stationarity `v = -R^-1 (B' lambda + b)`, `z(0) = 0`,
/// `lambda(T) = 0`) discretized by the trapezoid rule, as one dense system.
pub fn optimality_system_solve(lq: &LqData, sys: &SystemMatrices) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let nx = sys.spec.state_dim();
    let nodes = lq.grid.nodes();
    let h = lq.grid.dt();
    let r_inv = lq.r_o.clone().try_inverse().expect("R is invertible");
    let brb = &sys.b * &r_inv * sys.b.transpose();
    let at = sys.a.transpose();
    let n = 2 * nx * nodes;
    let zi = |k: usize| 2 * nx * k;
    let li = |k: usize| 2 * nx * k + nx;
    let eye = DMatrix::<f64>::identity(nx, nx);
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    m.view_mut((0, zi(0)), (nx, nx)).copy_from(&eye);
    for k in 0..nodes - 1 {
        // z' = A z - B R^-1 B' lambda - B R^-1 b
        let row = nx + 2 * nx * k;
        for (node, sign) in [(k, -1.0), (k + 1, 1.0)] {
            m.view_mut((row, zi(node)), (nx, nx)).copy_from(&(&eye * sign - &sys.a * (0.5 * h)));
            m.view_mut((row, li(node)), (nx, nx)).copy_from(&(&brb * (0.5 * h)));
        }
        let forcing = &sys.b * &r_inv * (&lq.b[k] + &lq.b[k + 1]) * (-0.5 * h);
        rhs.rows_mut(row, nx).copy_from(&forcing);
        // lambda' = -Q z - A' lambda - a
        let row = row + nx;
        for (node, sign) in [(k, -1.0), (k + 1, 1.0)] {
            m.view_mut((row, li(node)), (nx, nx)).copy_from(&(&eye * sign + &at * (0.5 * h)));
            m.view_mut((row, zi(node)), (nx, nx)).copy_from(&(&lq.q_o[node] * (0.5 * h)));
        }
        rhs.rows_mut(row, nx).copy_from(&((&lq.a[k] + &lq.a[k + 1]) * (-0.5 * h)));
    }
    m.view_mut((n - nx, li(nodes - 1)), (nx, nx)).copy_from(&eye);
    let sol = m.lu().solve(&rhs).expect("optimality system is nonsingular");
    let z = (0..nodes).map(|k| sol.rows(zi(k), nx).into_owned()).collect();
    let v = (0..nodes)
        .map(|k| -&r_inv * (sys.b.transpose() * sol.rows(li(k), nx) + &lq.b[k]))
        .collect();
    (z, v)
}

pub fn stacked_rel_err(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let norm: f64 = b.iter().map(|y| y.norm_squared()).sum();
    (diff / norm).sqrt()
}
