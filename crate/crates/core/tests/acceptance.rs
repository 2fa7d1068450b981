//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use oift::analysis::{edge_distances, subspace_residual};
use oift::cli::{run_scenario, RunOutcome};
use oift::grid::TimeGrid;
use oift::lq::{riccati_sweep, search_direction};
use oift::model::{build_system, SystemSpec};
use oift::potential::{formation_hessian, sigma_all, FormationSpec, HessianMode, PotentialParams};
use oift::projection::{project, Curve, FeedbackGains};
use oift::pronto::SolveStatus;
use oift::scenarios::{equilibria_name, scenario_by_name, InitialCondition, Scenario, EQUILIBRIA_SIZES};
use oift::cost::LqData;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn solve(name: &str) -> RunOutcome {
    run_scenario(&scenario_by_name(name).unwrap()).unwrap()
}

fn solve_seeded(name: &str, seed: u64) -> RunOutcome {
    let mut s = scenario_by_name(name).unwrap();
    s.seed = seed;
    run_scenario(&s).unwrap()
}

fn final_positions(o: &RunOutcome) -> DVector<f64> {
    let nn = o.problem.sys.config_dim();
    o.result.xi_star.final_state().rows(0, nn).into_owned()
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("[{}]", items.join(", "))
}

/// Every edge within 10 % of its target.
fn all_edges_within(o: &RunOutcome) -> (bool, Vec<f64>) {
    let f = &o.problem.formation;
    let d = edge_distances(&final_positions(o), f);
    let ok = f.edges().iter().zip(&d).all(|(e, r)| (r - e.d).abs() / e.d < 0.1);
    (ok, d)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut junction: f64 = 0.0;
    for d in [0.5, 1.0, 5.0, 12.0] {
        for (k_r, k_a) in [(100.0, 1.0), (1.0, 100.0), (0.3, 7.0)] {
            let p = PotentialParams::new(k_r, k_a).unwrap();
            let d2 = d * d;
            for i in 0..=4000 {
                let s = 4.0 * d2 * i as f64 / 4000.0;
                let (v, first, second) = sigma_all(s, d, &p).unwrap();
                let at_junction = s == d2;
                if v < 0.0 || (!at_junction && v <= 0.0) || (at_junction && v != 0.0) {
                    violations.push(format!("sigma({s}) = {v} (d = {d})"));
                }
                if (s < d2 && first > 0.0) || (s > d2 && first < 0.0) || second < 0.0 {
                    violations.push(format!("sign pattern at s = {s} (d = {d})"));
                }
            }
            let eps = 4.0 * f64::EPSILON * d2;
            let (lo, hi) = (sigma_all(d2 - eps, d, &p).unwrap(), sigma_all(d2 + eps, d, &p).unwrap());
            junction = junction.max((lo.0 - hi.0).abs()).max((lo.1 - hi.1).abs()).max((lo.2 - hi.2).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = violations.is_empty() && junction < 1e-9 && elapsed < Duration::from_secs(1);
    Verdict::new(
        pass,
        format!(
            "{} sign/zero violations over 12 (d, k_r, k_a) grids; junction jump {junction:.1e} (< 1e-9); {:.3} s",
            violations.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut ge, mut he) = (0.0f64, 0.0f64);
    let params = PotentialParams::default();
    for k in 0..100 {
        let n = 2 + k % 5;
        let m = 1 + k % 3;
        let p = common::random_positions(&mut rng, n, m, 5.0);
        let f = FormationSpec::complete(n, 5.0).unwrap();
        let (g, h) = common::derivative_errors(&p, &f, 0.1, &params);
        ge = ge.max(g);
        he = he.max(h);
    }
    Verdict::new(
        ge < 1e-5 && he < 1e-4,
        format!("100 configurations: max gradient rel error {ge:.1e} (< 1e-5), Hessian {he:.1e} (< 1e-4)"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = PotentialParams::default();
    let (mut worst_safe, mut repelling, mut exact_negative) = (f64::INFINITY, 0, 0);
    for k in 0..100 {
        let n = 2 + k % 5;
        let m = 1 + k % 3;
        let p = common::random_positions(&mut rng, n, m, 4.0);
        let f = FormationSpec::complete(n, 5.0).unwrap();
        let safe = formation_hessian(p.as_view(), &f, 0.1, &params, HessianMode::Safe).unwrap();
        worst_safe = worst_safe.min(common::min_eigenvalue(&safe));
        if common::has_repelling_pair(&p, &f) {
            repelling += 1;
            let exact = formation_hessian(p.as_view(), &f, 0.1, &params, HessianMode::Exact).unwrap();
            if common::min_eigenvalue(&exact) < -1e-8 {
                exact_negative += 1;
            }
        }
    }
    Verdict::new(
        worst_safe >= -1e-8 && exact_negative > 0,
        format!(
            "safe min eigenvalue {worst_safe:.1e} (>= -1e-8); exact Hessian indefinite in {exact_negative}/{repelling} repelling cases"
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gains = FeedbackGains::default();
    let mut idem: f64 = 0.0;
    for k in 0..20 {
        let (n, m) = (2 + k % 3, 1 + k % 3);
        let sys = build_system(SystemSpec::new(n, m).unwrap());
        let grid = TimeGrid::new(5.0, 0.02).unwrap();
        let curve = common::random_curve(&mut rng, grid, n * m);
        let x0 = curve.alpha[0].clone();
        let once = project(&curve, &gains, &sys, &x0).unwrap();
        let twice = project(&once.to_curve(), &gains, &sys, &x0).unwrap();
        idem = idem.max(twice.distance(&once));
    }

    let sys = build_system(SystemSpec::new_relaxed(1, 1).unwrap());
    let grid = TimeGrid::new(10.0, 0.01).unwrap();
    let curve = Curve::new(
        grid,
        vec![DVector::from_vec(vec![1.0, 0.0]); grid.nodes()],
        vec![DVector::zeros(1); grid.nodes()],
    )
    .unwrap();
    let step = project(&curve, &gains, &sys, &DVector::zeros(2)).unwrap();
    let overshoot = step.states().iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max) - 1.0;
    let zeta = gains.zeta;
    let expected = (-zeta * PI / (1.0 - zeta * zeta).sqrt()).exp();
    let rel = (overshoot - expected).abs() / expected;
    Verdict::new(
        idem < 1e-6 && rel < 0.02,
        format!(
            "idempotence {idem:.1e} (< 1e-6) on 20 random curves; overshoot {:.3}% vs {:.3}% (rel error {:.1e} < 2%)",
            100.0 * overshoot,
            100.0 * expected,
            rel
        ),
    )
}

fn criterion_5() -> Verdict {
    let sys = build_system(SystemSpec::new(2, 1).unwrap());
    let grid = TimeGrid::new(1.0, 0.02).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let lq = common::random_lq(&sys, grid, seed);
        let ric = riccati_sweep(&lq, &sys).unwrap();
        let dir = search_direction(&lq, &ric, &sys).unwrap();
        let (z, v) = common::optimality_system_solve(&lq, &sys);
        worst = worst.max(common::stacked_rel_err(&dir.z, &z)).max(common::stacked_rel_err(&dir.v, &v));
    }

    let di = build_system(SystemSpec::new_relaxed(1, 1).unwrap());
    let grid = TimeGrid::new(20.0, 0.02).unwrap();
    let lq = LqData {
        grid,
        a: vec![DVector::zeros(2); grid.nodes()],
        b: vec![DVector::zeros(1); grid.nodes()],
        q_o: vec![DMatrix::identity(2, 2); grid.nodes()],
        s_o: None,
        r_o: DMatrix::identity(1, 1),
        r1: DVector::zeros(2),
        p1: DMatrix::zeros(2, 2),
    };
    let p0 = riccati_sweep(&lq, &di).unwrap().p[0].clone();
    let s3 = 3f64.sqrt();
    let are = (p0 - DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3])).amax();
    Verdict::new(
        worst < 1e-3 && are < 1e-4,
        format!(
            "5 random 51-node instances: max rel error vs dense optimality system {worst:.1e} (< 1e-3); P(0) vs ARE {are:.1e} (< 1e-4)"
        ),
    )
}

fn criterion_6(runs: &[(&str, RunOutcome, Duration)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, o, took) in runs {
        let h = &o.result.history;
        let last = h.last().unwrap();
        let monotone = h.windows(2).all(|w| w[1].g < w[0].g);
        let ok = o.result.status == SolveStatus::Converged
            && -last.dg < 1e-8
            && o.result.iterations() < 50
            && monotone
            && *took < Duration::from_secs(120);
        pass &= ok;
        parts.push(format!(
            "{name}: {:?} after {} iterations, final dg {:.1e}, monotone {monotone}, {:.1} s",
            o.result.status,
            o.result.iterations(),
            last.dg,
            took.as_secs_f64()
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn criterion_7(runs: &[(&str, RunOutcome, Duration)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, o, _) in runs {
        let (edges_ok, d) = all_edges_within(o);
        let track = o.metrics.terminal_tracking_error;
        pass &= edges_ok && track < 0.1;
        parts.push(format!(
            "{name}: phi_c {} distances {} terminal tracking {track:.1e} m",
            o.metrics.phi_c,
            fmt_list(&d)
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn pentagon_like(o: &RunOutcome) -> bool {
    let mut d = edge_distances(&final_positions(o), &o.problem.formation);
    d.sort_by(f64::total_cmp);
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let side = 5.0;
    d.len() == 10
        && d[..5].iter().all(|r| (r - side).abs() / side < 0.1)
        && d[5..].iter().all(|r| (r - side * golden).abs() / (side * golden) < 0.1)
}

fn criterion_8() -> Verdict {
    let reference = [((2, 5), "5/10"), ((2, 6), "9/15"), ((2, 8), "12/28"), ((3, 5), "6/10"), ((3, 6), "12/15"), ((3, 8), "14/28")];
    let jobs: Vec<((usize, usize), u64)> = EQUILIBRIA_SIZES
        .iter()
        .flat_map(|&size| SEEDS.iter().map(move |&s| (size, s)))
        .collect();
    let results: Vec<((usize, usize), u64, RunOutcome)> = jobs
        .par_iter()
        .map(|&((m, n), seed)| ((m, n), seed, solve_seeded(&equilibria_name(m, n), seed)))
        .collect();
    let cell = |m: usize, n: usize| -> Vec<&RunOutcome> {
        results.iter().filter(|r| r.0 == (m, n)).map(|r| &r.2).collect()
    };
    let ratios = |m: usize, n: usize| -> Vec<String> { cell(m, n).iter().map(|o| o.metrics.phi_c.to_string()).collect() };

    let hit_26 = cell(2, 6).iter().any(|o| o.metrics.phi_c.satisfied >= 9);
    let hit_36 = cell(3, 6).iter().any(|o| o.metrics.phi_c.satisfied >= 12);
    let pentagon = cell(2, 5).iter().any(|o| o.metrics.phi_c.satisfied == 5 && pentagon_like(o));
    let mut detail = format!(
        "seeds {SEEDS:?}: (2,6) {:?} needs 9/15 [{}]; (3,6) {:?} needs 12/15 [{}]; (2,5) {:?} regular pentagon [{}]",
        ratios(2, 6),
        if hit_26 { "ok" } else { "missed" },
        ratios(3, 6),
        if hit_36 { "ok" } else { "missed" },
        ratios(2, 5),
        if pentagon { "ok" } else { "missed" },
    );
    detail.push_str("; reported only:");
    for ((m, n), published) in reference {
        if [(2, 8), (3, 5), (3, 8)].contains(&(m, n)) {
            detail.push_str(&format!(" ({m},{n}) {:?} vs published {published}", ratios(m, n)));
        }
    }
    Verdict::new(hit_26 && hit_36 && pentagon, detail)
}

fn criterion_9() -> Verdict {
    let tanh = solve("tanh_triangle");
    let helix = solve("helix_square");
    let (tanh_ok, tanh_d) = all_edges_within(&tanh);
    let (helix_ok, helix_d) = all_edges_within(&helix);
    let mut low = scenario_by_name("tanh_triangle").unwrap();
    low.weights.q_p = 10.0;
    let low = run_scenario(&low).unwrap();
    let (e10, e100) = (low.metrics.terminal_tracking_error, tanh.metrics.terminal_tracking_error);
    Verdict::new(
        tanh_ok && helix_ok && e100 < e10,
        format!(
            "tanh_triangle distances {} vs (3, 4, 5) [{}]; helix_square distances {} vs 4 x 5, 2 x 7.07 [{}]; terminal tracking q_p=10 {e10:.2e} m > q_p=100 {e100:.2e} m [{}]",
            fmt_list(&tanh_d),
            if tanh_ok { "ok" } else { "missed" },
            fmt_list(&helix_d),
            if helix_ok { "ok" } else { "missed" },
            if e100 < e10 { "ok" } else { "missed" },
        ),
    )
}

fn perturbed(mut s: Scenario) -> Scenario {
    if let InitialCondition::Explicit { positions, .. } = &mut s.initial {
        positions[0][1] += 0.1;
    }
    s
}

fn criterion_10() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["subspace1d", "subspace2d"] {
        let o = solve(name);
        let r = o.metrics.subspace_residual.unwrap();
        pass &= r < 1e-6;
        parts.push(format!("{name} residual {r:.1e} m ({:?})", o.result.status));
    }
    let s = perturbed(scenario_by_name("subspace1d").unwrap());
    let o = run_scenario(&s).unwrap();
    let r = subspace_residual(&o.result.xi_star, s.subspace.as_deref().unwrap(), &o.problem.sys).unwrap();
    pass &= r > 0.05;
    parts.push(format!("negative control (0.1 m off-axis) residual {r:.2} m (> 0.05)"));
    Verdict::new(pass, parts.join("; "))
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(panic_message)
}

fn main() {
    // Accept and ignore harness flags such as `--list`.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: usize, title: &str, v: Result<Verdict, String>| {
        let v = v.unwrap_or_else(|msg| Verdict::new(false, format!("error: {msg}")));
        if !v.pass {
            failed += 1;
        }
        println!("criterion {id:>2} [{}] {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };

    report(1, "potential correctness", guarded(criterion_1));
    report(2, "derivative validation", guarded(criterion_2));
    report(3, "safe Hessian PSD", guarded(criterion_3));
    report(4, "projection operator", guarded(criterion_4));
    report(5, "LQ oracle equivalence", guarded(criterion_5));

    let runs = guarded(|| {
        ["valid2d", "valid3d"]
            .iter()
            .map(|&name| {
                let t = Instant::now();
                let o = solve(name);
                (name, o, t.elapsed())
            })
            .collect::<Vec<_>>()
    });
    match &runs {
        Ok(runs) => {
            report(6, "monotone descent and termination", guarded(|| criterion_6(runs)));
            report(7, "formation attainment", guarded(|| criterion_7(runs)));
        }
        Err(msg) => {
            report(6, "monotone descent and termination", Err(msg.clone()));
            report(7, "formation attainment", Err(msg.clone()));
        }
    }
    report(8, "equilibria statistics", guarded(criterion_8));
    report(9, "complex tracking", guarded(criterion_9));
    report(10, "subspace invariance", guarded(criterion_10));

    println!(
        "acceptance: {} of 10 criteria passed in {:.0} s",
        10 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
