//! Desired-output generators, initial deployments and the named scenario catalog.

use nalgebra::DVector;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostWeights, DesiredOutput};
use crate::error::{OiftError, Result};
use crate::grid::TimeGrid;
use crate::model::{build_system, StackedState, SystemSpec};
use crate::potential::{Edge, FormationSpec};
use crate::pronto::{Problem, SolverOptions};
use crate::projection::FeedbackGains;

/// Analytic desired barycenter path; every kind supplies its own velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryGenerator {
    /// `start + velocity t`.
    Line { start: Vec<f64>, velocity: Vec<f64> },
    /// Planar `(v t, r tanh(t - T/2))`.
    TanhSCurve { v: f64, r: f64, horizon: f64 },
    /// `(r cos t, r sin t, v t)`.
    Helix { v: f64, r: f64 },
    /// Stationary point.
    ConstantPoint { point: Vec<f64> },
    /// `(v t, a (v t)², 0...)` in `dim` dimensions.
    Parabola { v: f64, a: f64, dim: usize },
}

impl TrajectoryGenerator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Line { start, .. } => start.len(),
            Self::TanhSCurve { .. } => 2,
            Self::Helix { .. } => 3,
            Self::ConstantPoint { point } => point.len(),
            Self::Parabola { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OiftError::InvalidParameter(msg));
        match self {
            Self::Line { start, velocity } if start.len() != velocity.len() => bad(format!(
                "line start has {} components but velocity has {}",
                start.len(),
                velocity.len()
            )),
            Self::Parabola { dim, .. } if !(2..=3).contains(dim) => {
                bad(format!("parabola needs 2 or 3 dimensions, got {dim}"))
            }
            _ if !(1..=3).contains(&self.dim()) => {
                bad(format!("generator dimension {} not in 1..=3", self.dim()))
            }
            _ => Ok(()),
        }
    }

    /// `[p_des(t); pdot_des(t)]`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        self.validate()?;
        let out = match self {
            Self::Line { start, velocity } => {
                let pos = start.iter().zip(velocity).map(|(s, v)| s + v * t);
                DVector::from_iterator(2 * start.len(), pos.chain(velocity.iter().copied()))
            }
            Self::TanhSCurve { v, r, horizon } => {
                let arg = t - horizon / 2.0;
                let sech = 1.0 / arg.cosh();
                DVector::from_vec(vec![v * t, r * arg.tanh(), *v, r * sech * sech])
            }
            Self::Helix { v, r } => DVector::from_vec(vec![
                r * t.cos(),
                r * t.sin(),
                v * t,
                -r * t.sin(),
                r * t.cos(),
                *v,
            ]),
            Self::ConstantPoint { point } => {
                let m = point.len();
                DVector::from_fn(2 * m, |i, _| if i < m { point[i] } else { 0.0 })
            }
            Self::Parabola { v, a, dim } => {
                let x = v * t;
                let mut out = DVector::zeros(2 * dim);
                out[0] = x;
                out[1] = a * x * x;
                out[*dim] = *v;
                out[*dim + 1] = 2.0 * a * x * v;
                out
            }
        };
        Ok(out)
    }
}

pub fn gen_line(start: Vec<f64>, velocity: Vec<f64>) -> TrajectoryGenerator {
    TrajectoryGenerator::Line { start, velocity }
}

pub fn gen_tanh(v: f64, r: f64, horizon: f64) -> TrajectoryGenerator {
    TrajectoryGenerator::TanhSCurve { v, r, horizon }
}

pub fn gen_helix(v: f64, r: f64) -> TrajectoryGenerator {
    TrajectoryGenerator::Helix { v, r }
}

/// Positions uniform in `[-radius, radius]^M` per agent, velocities zero.
pub fn deploy_random(n: usize, m: usize, radius: f64, seed: u64) -> Result<DVector<f64>> {
    if !(radius > 0.0) {
        return Err(OiftError::InvalidParameter(format!(
            "deployment radius must be positive, got {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-radius, radius);
    let nn = n * m;
    let mut x = DVector::zeros(2 * nn);
    for c in 0..nn {
        x[c] = dist.sample(&mut rng);
    }
    Ok(x)
}

/// How the initial state is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Explicit {
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
    },
    /// Uniform deployment around the origin, drawn from the scenario seed.
    RandomDeploy { radius: f64 },
}

/// Everything needed to set up and solve one formation-tracking problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSpec,
    pub initial: InitialCondition,
    pub formation: FormationSpec,
    pub desired: TrajectoryGenerator,
    pub weights: CostWeights,
    #[serde(default)]
    pub gains: FeedbackGains,
    pub options: SolverOptions,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Spanning vectors of a subspace the motion is expected to stay in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<Vec<Vec<f64>>>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.system.agents(), self.system.dim());
        if self.formation.agents() != n {
            return Err(OiftError::InvalidFormation(format!(
                "formation is for {} agents but the system has {n}",
                self.formation.agents()
            )));
        }
        self.desired.validate()?;
        if self.desired.dim() != m {
            return Err(OiftError::DimensionMismatch {
                what: "desired output dimension",
                expected: m,
                got: self.desired.dim(),
            });
        }
        if let InitialCondition::Explicit {
            positions,
            velocities,
        } = &self.initial
        {
            let ok = |v: &Vec<Vec<f64>>| v.len() == n && v.iter().all(|p| p.len() == m);
            if !ok(positions) || !ok(velocities) {
                return Err(OiftError::DimensionMismatch {
                    what: "initial condition agents x dim",
                    expected: n * m,
                    got: positions.iter().chain(velocities).map(Vec::len).sum::<usize>() / 2,
                });
            }
        }
        self.weights.validate()?;
        FeedbackGains::from_second_order(self.gains.omega_n, self.gains.zeta)?;
        if !(self.gains.k_p > 0.0 && self.gains.k_v > 0.0) {
            return Err(OiftError::InvalidParameter("feedback gains must be positive".into()));
        }
        self.options.validate()?;
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.dt)
    }

    pub fn initial_state(&self) -> Result<DVector<f64>> {
        match &self.initial {
            InitialCondition::Explicit {
                positions,
                velocities,
            } => Ok(StackedState::from_agents(positions, velocities).pack()),
            InitialCondition::RandomDeploy { radius } => deploy_random(
                self.system.agents(),
                self.system.dim(),
                *radius,
                self.seed,
            ),
        }
    }

    /// Validated problem ready for the solver.
    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let grid = self.grid()?;
        Ok(Problem {
            sys: build_system(self.system),
            formation: self.formation.clone(),
            weights: self.weights,
            desired: DesiredOutput::sample(self.desired.clone(), grid)?,
            gains: self.gains,
            x0: self.initial_state()?,
            grid,
        })
    }
}

pub const DEFAULT_DISTANCE: f64 = 5.0;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_DT: f64 = 0.02;
pub const DEFAULT_DEPLOY_RADIUS: f64 = 2.5;

fn explicit(positions: &[&[f64]], velocities: &[&[f64]]) -> InitialCondition {
    InitialCondition::Explicit {
        positions: positions.iter().map(|p| p.to_vec()).collect(),
        velocities: velocities.iter().map(|v| v.to_vec()).collect(),
    }
}

fn at_rest(positions: &[&[f64]]) -> InitialCondition {
    let zero = vec![0.0; positions[0].len()];
    let zeros: Vec<&[f64]> = positions.iter().map(|_| zero.as_slice()).collect();
    explicit(positions, &zeros)
}

fn base(name: &str, n: usize, m: usize, initial: InitialCondition, desired: TrajectoryGenerator) -> Scenario {
    Scenario {
        name: name.to_string(),
        system: SystemSpec::new(n, m).expect("catalog sizes are valid"),
        initial,
        formation: FormationSpec::complete(n, DEFAULT_DISTANCE).expect("catalog sizes are valid"),
        desired,
        weights: CostWeights::with_tracking(10.0, 1.0),
        gains: FeedbackGains::default(),
        options: SolverOptions::with_max_iter(50),
        horizon: DEFAULT_HORIZON,
        dt: DEFAULT_DT,
        seed: 0,
        subspace: None,
    }
}

/// Unit-speed line through the initial barycenter along the mean initial velocity.
fn line_through_barycenter(initial: &InitialCondition) -> TrajectoryGenerator {
    let InitialCondition::Explicit {
        positions,
        velocities,
    } = initial
    else {
        unreachable!("line scenarios use explicit initial conditions")
    };
    let n = positions.len() as f64;
    let mean = |v: &Vec<Vec<f64>>| -> Vec<f64> {
        (0..v[0].len())
            .map(|d| v.iter().map(|p| p[d]).sum::<f64>() / n)
            .collect()
    };
    let start = mean(positions);
    let dir = mean(velocities);
    let norm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    gen_line(start, dir.iter().map(|c| c / norm).collect())
}

fn valid2d() -> Scenario {
    let initial = explicit(
        &[&[-2.0, 1.0], &[-3.0, -1.0], &[2.0, -2.0]],
        &[&[0.0, -5.0], &[0.0, -5.0], &[0.0, -5.0]],
    );
    let desired = line_through_barycenter(&initial);
    base("valid2d", 3, 2, initial, desired)
}

fn valid3d() -> Scenario {
    let initial = explicit(
        &[
            &[-2.0, 1.0, 0.0],
            &[-3.0, -1.0, 1.0],
            &[2.0, -2.0, 2.0],
            &[1.0, 3.0, 3.0],
        ],
        &[
            &[0.0, -5.0, 5.0],
            &[0.0, -5.0, 0.0],
            &[0.0, -5.0, 10.0],
            &[0.0, 0.0, 0.0],
        ],
    );
    let desired = line_through_barycenter(&initial);
    base("valid3d", 4, 3, initial, desired)
}

/// Catalog name of the equilibrium scenario with `n` agents in `m` dimensions.
pub fn equilibria_name(m: usize, n: usize) -> String {
    format!("equilibria_m{m}_n{n}")
}

fn equilibria(m: usize, n: usize) -> Scenario {
    let mut s = base(
        &equilibria_name(m, n),
        n,
        m,
        InitialCondition::RandomDeploy {
            radius: DEFAULT_DEPLOY_RADIUS,
        },
        TrajectoryGenerator::ConstantPoint { point: vec![0.0; m] },
    );
    s.options = SolverOptions::with_max_iter(100);
    s
}

fn tanh_triangle() -> Scenario {
    let initial = at_rest(&[&[-0.5, -0.5], &[0.0, 0.0], &[6.0, 6.0]]);
    let mut s = base("tanh_triangle", 3, 2, initial, gen_tanh(1.0, 2.0, DEFAULT_HORIZON));
    // Right angle at agent 2.
    s.formation = FormationSpec::from_edges(
        3,
        vec![
            Edge { i: 1, j: 2, d: 3.0 },
            Edge { i: 2, j: 3, d: 4.0 },
            Edge { i: 1, j: 3, d: 5.0 },
        ],
    )
    .expect("valid edges");
    s.weights.q_p = 100.0;
    s
}

fn helix_square() -> Scenario {
    let initial = at_rest(&[
        &[-5.0, -5.0, 0.0],
        &[0.0, 0.0, 2.0],
        &[6.0, 6.0, 0.0],
        &[-2.0, 2.0, 0.0],
    ]);
    let mut s = base("helix_square", 4, 3, initial, gen_helix(2.0, 15.0));
    let side = DEFAULT_DISTANCE;
    let diag = side * 2f64.sqrt();
    // Cycle 1-2-3-4; agents 1/3 and 2/4 are opposite corners.
    s.formation = FormationSpec::from_edges(
        4,
        vec![
            Edge { i: 1, j: 2, d: side },
            Edge { i: 2, j: 3, d: side },
            Edge { i: 3, j: 4, d: side },
            Edge { i: 1, j: 4, d: side },
            Edge { i: 1, j: 3, d: diag },
            Edge { i: 2, j: 4, d: diag },
        ],
    )
    .expect("valid edges");
    s.weights.q_p = 100.0;
    s
}

fn subspace1d() -> Scenario {
    let initial = at_rest(&[&[-1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]]);
    let mut s = base("subspace1d", 3, 2, initial, gen_line(vec![0.0, 0.0], vec![1.0, 0.0]));
    s.subspace = Some(vec![vec![1.0, 0.0]]);
    s
}

fn subspace2d() -> Scenario {
    let initial = at_rest(&[
        &[-1.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0],
        &[2.0, 0.0, 0.0],
    ]);
    let desired = TrajectoryGenerator::Parabola {
        v: 1.0,
        a: 1.0 / 200.0,
        dim: 3,
    };
    let mut s = base("subspace2d", 4, 3, initial, desired);
    s.subspace = Some(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    s
}

/// Agent counts and dimensions of the equilibrium study.
pub const EQUILIBRIA_SIZES: [(usize, usize); 6] = [(2, 5), (2, 6), (2, 8), (3, 5), (3, 6), (3, 8)];

/// The named scenario catalog.
pub fn catalog() -> Vec<Scenario> {
    let mut all = vec![valid2d(), valid3d()];
    all.extend(EQUILIBRIA_SIZES.iter().map(|&(m, n)| equilibria(m, n)));
    all.extend([tanh_triangle(), helix_square(), subspace1d(), subspace2d()]);
    all
}

pub fn scenario_by_name(name: &str) -> Result<Scenario> {
    catalog()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| OiftError::UnknownScenario(name.to_string()))
}

pub fn scenario_names() -> Vec<String> {
    catalog().into_iter().map(|s| s.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_velocity(gen: &TrajectoryGenerator, t: f64) -> Vec<f64> {
        let h = 1e-5;
        let m = gen.dim();
        let (a, b) = (gen.evaluate(t + h).unwrap(), gen.evaluate(t - h).unwrap());
        (0..m).map(|d| (a[d] - b[d]) / (2.0 * h)).collect()
    }

    fn assert_velocity_consistent(gen: &TrajectoryGenerator) {
        let m = gen.dim();
        for t in [0.5, 3.3, 9.9, 10.0, 14.2, 19.5] {
            let x = gen.evaluate(t).unwrap();
            for (d, fd) in fd_velocity(gen, t).into_iter().enumerate() {
                let v = x[m + d];
                assert!((v - fd).abs() <= 1e-6 * v.abs().max(1.0), "t={t} d={d}: {v} vs {fd}");
            }
        }
    }

    #[test]
    fn line_generator() {
        let g = gen_line(vec![0.0, 0.0], vec![0.0, -1.0]);
        assert_eq!(g.evaluate(0.0).unwrap(), DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0]));
        let end = g.evaluate(20.0).unwrap();
        assert_relative_eq!(end.rows(0, 2).norm(), 20.0);
        assert_velocity_consistent(&g);
        assert!(gen_line(vec![0.0], vec![1.0, 2.0]).evaluate(0.0).is_err());
    }

    #[test]
    fn tanh_generator() {
        let g = gen_tanh(1.0, 2.0, 20.0);
        let mid = g.evaluate(10.0).unwrap();
        assert_eq!(mid[1], 0.0);
        assert_eq!(mid[3], 2.0);
        assert!((g.evaluate(0.0).unwrap()[1] + 2.0).abs() < 1e-8 * 2.0);
        assert!((g.evaluate(20.0).unwrap()[1] - 2.0).abs() < 1e-8 * 2.0);
        assert_velocity_consistent(&g);
    }

    #[test]
    fn helix_generator() {
        let g = gen_helix(2.0, 15.0);
        assert_eq!(
            g.evaluate(0.0).unwrap(),
            DVector::from_vec(vec![15.0, 0.0, 0.0, 0.0, 15.0, 2.0])
        );
        for t in [0.3, 4.0, 17.0] {
            let x = g.evaluate(t).unwrap();
            assert_relative_eq!((x[3] * x[3] + x[4] * x[4]).sqrt(), 15.0, epsilon = 1e-12);
        }
        assert_velocity_consistent(&g);
    }

    #[test]
    fn parabola_and_point_generators() {
        assert_velocity_consistent(&TrajectoryGenerator::Parabola { v: 1.0, a: 0.005, dim: 3 });
        let p = TrajectoryGenerator::ConstantPoint { point: vec![1.0, 2.0, 3.0] };
        assert_eq!(p.evaluate(7.0).unwrap(), DVector::from_vec(vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn random_deployment() {
        let a = deploy_random(5, 2, 2.5, 42).unwrap();
        assert_eq!(a, deploy_random(5, 2, 2.5, 42).unwrap());
        assert_ne!(a, deploy_random(5, 2, 2.5, 43).unwrap());
        assert!(a.rows(10, 10).iter().all(|&v| v == 0.0));
        assert!(a.rows(0, 10).iter().all(|v| v.abs() <= 2.5));
        assert!(deploy_random(5, 2, 0.0, 1).is_err());
    }

    #[test]
    fn random_deployment_is_centred() {
        // Uniform on [-r, r]: sd = r / sqrt(3); the mean of N samples has sd r / sqrt(3N).
        let (n, r) = (10_000, 2.5);
        let x = deploy_random(n, 1, r, 9).unwrap();
        let mean = x.rows(0, n).sum() / n as f64;
        assert!(mean.abs() < 3.0 * r / (3.0 * n as f64).sqrt());
    }

    #[test]
    fn catalog_contents() {
        let all = catalog();
        assert_eq!(all.len(), 12);
        for s in &all {
            s.validate().unwrap();
            assert_eq!(scenario_by_name(&s.name).unwrap(), *s);
        }
        assert!(matches!(scenario_by_name("nonexistent"), Err(OiftError::UnknownScenario(_))));

        let v2 = scenario_by_name("valid2d").unwrap();
        let x0 = v2.initial_state().unwrap();
        assert_eq!(x0.as_slice(), &[-2.0, 1.0, -3.0, -1.0, 2.0, -2.0, 0.0, -5.0, 0.0, -5.0, 0.0, -5.0]);
        assert_eq!(v2.options.max_iter, 50);

        let helix = scenario_by_name("helix_square").unwrap();
        let edges = helix.formation.edges();
        assert_eq!(edges.iter().filter(|e| e.d == 5.0).count(), 4);
        assert_eq!(edges.iter().filter(|e| (e.d - 5.0 * 2f64.sqrt()).abs() < 1e-12).count(), 2);

        let sub = scenario_by_name("subspace2d").unwrap();
        let x0 = sub.initial_state().unwrap();
        assert_eq!(x0.rows(0, 12).as_slice(), &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);

        let eq = scenario_by_name(&equilibria_name(2, 6)).unwrap();
        assert_eq!(eq.options.max_iter, 100);
        assert_eq!(eq.formation.edges().len(), 15);
    }

    #[test]
    fn scenario_json_round_trip() {
        for s in catalog() {
            let text = serde_json::to_string(&s).unwrap();
            let back: Scenario = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
        }
    }
}
