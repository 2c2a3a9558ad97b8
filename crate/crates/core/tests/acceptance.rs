//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run a subset with `cargo test -p rshg --test acceptance -- 4 7`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rshg::diagnostics::{
    estimate_constants, fit_rate, lemma_monitor, manifold_axioms, random_state, AxiomOptions, ConstantEstimates,
    LemmaConstants, MonitorReport, Region,
};
use rshg::directions::{enumerate_batches, srg_term, svrg_term, DirectionRegistry, HybridState};
use rshg::manifold::{Euclidean, Manifold, Point, Spd, Sphere, SphereTransport, Tangent};
use rshg::optimizer::{output_metric, run, run_observed, sample_batch, OutputOption, RunConfig, RunTrace, StepView};
use rshg::problems::{synthetic, FiniteSumProblem, LeastSquares, PcaSphere};
use rshg::schedules::{
    kappa_of, restart_epochs_theorem7, step_bound_theorem6, ScheduleKind, ScheduleSpec, Sequence, Theorem5,
};

static RUNS: AtomicU64 = AtomicU64::new(0);
static MISCOUNTED: AtomicU64 = AtomicU64::new(0);

/// Every optimizer run in the suite goes through here so criterion 9 sees it.
fn checked<T>(p: &dyn FiniteSumProblem, cfg: &RunConfig, trace: &RunTrace, value: T) -> T {
    RUNS.fetch_add(1, Ordering::Relaxed);
    let per_epoch = p.n() as u64 + (cfg.m as u64 - 1) * cfg.direction.step_cost(p.n(), cfg.b);
    let ok = trace.total_evals() == cfg.expected_evals(p.n())
        && trace.epochs.iter().all(|e| e.evals == per_epoch * e.s as u64);
    if !ok {
        MISCOUNTED.fetch_add(1, Ordering::Relaxed);
    }
    value
}

fn counted_run(p: &dyn FiniteSumProblem, cfg: &RunConfig) -> (Point, RunTrace) {
    let (w, tr) = run(p, cfg).expect("run");
    checked(p, cfg, &tr, ());
    (w, tr)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn constant(v: f64) -> Sequence {
    Sequence::Constant { value: v }
}

fn algorithm(name: &str) -> std::sync::Arc<dyn rshg::directions::Direction> {
    DirectionRegistry::builtin().get(name).unwrap()
}

/// A point at geodesic distance at most `radius` from `center`.
fn start_near(m: &dyn Manifold, center: &Point, radius: f64, rng: &mut ChaCha8Rng) -> Point {
    let dir = m.random_tangent(center, rng).unwrap();
    m.exp_map(center, &dir.scale(radius * rng.random::<f64>())).unwrap()
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

// ---------------------------------------------------------------- 1

/// Mean direction by explicit enumeration of batches, built from the
/// separate SVRG and SRG terms.
fn enumerated_mean(p: &dyn FiniteSumProblem, w: &Point, st: &HybridState, phi: f64, psi_tilde: f64, b: usize) -> DMatrix<f64> {
    let batches = enumerate_batches(p.n(), b).unwrap();
    let mut acc = DMatrix::zeros(w.coords().nrows(), w.coords().ncols());
    for batch in &batches {
        let sv = svrg_term(p, batch, w, st).unwrap();
        let sr = srg_term(p, batch, w, st).unwrap();
        let sg = p.batch_grad(batch, w).unwrap();
        acc += sv.coords() * phi + sr.coords() * psi_tilde + sg.coords() * (1.0 - phi - psi_tilde);
    }
    acc / batches.len() as f64
}

/// `grad f(w_t) + psi_tilde * T(V_{t-1} - grad f(w_{t-1}))` from manifold primitives.
fn expected_mean(p: &dyn FiniteSumProblem, w: &Point, st: &HybridState, psi_tilde: f64) -> DMatrix<f64> {
    let m = p.manifold();
    let prev_full = p.full_grad(&st.prev_point).unwrap();
    let diff = Tangent::clone(&st.prev_direction).sub(&prev_full).unwrap();
    let carried = m.transport(&st.prev_point, &st.prev_direction.scale(-st.prev_step), &diff).unwrap();
    p.full_grad(w).unwrap().coords() + carried.coords() * psi_tilde
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let problems: Vec<Box<dyn FiniteSumProblem>> = vec![
        Box::new(synthetic::least_squares(&mut rng, 6, 4, 0.4).unwrap()),
        Box::new(synthetic::pca(&mut rng, 6, 5, 0.4, SphereTransport::Parallel).unwrap()),
        Box::new(synthetic::karcher(&mut rng, 6, 3, 0.5).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    for p in &problems {
        for b in [1, 2] {
            for _ in 0..100 {
                let (st, w) = random_state(p.as_ref(), &mut rng).unwrap();
                let phi: f64 = rng.random_range(0.0..1.0);
                let psi_tilde: f64 = rng.random_range(0.0..(1.0 - phi));
                let lhs = enumerated_mean(p.as_ref(), &w, &st, phi, psi_tilde, b);
                worst = worst.max(max_rel(&lhs, &expected_mean(p.as_ref(), &w, &st, psi_tilde)));
            }
        }
    }
    outcome(worst <= 1e-12, format!("worst residual {worst:.2e} over 600 states (tol 1e-12)"))
}

// ---------------------------------------------------------------- 2 and 10

struct Suite {
    problem: PcaSphere,
    constants: ConstantEstimates,
    reports: Vec<(&'static str, MonitorReport)>,
}

fn suite_config(p: &PcaSphere, algo: &str, seed: u64) -> RunConfig {
    let (m, epochs) = (5, 50);
    let kind = ScheduleKind::DecayingDefault { phi: constant(0.3), psi: constant(0.5) };
    let schedule = ScheduleSpec::new(kind, 0.5, m, epochs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7_000));
    let center = &p.known_optimum().unwrap().point;
    RunConfig {
        direction: algorithm(algo),
        schedule,
        m,
        epochs,
        b: 1,
        seed,
        output: OutputOption::UniformRandom,
        initial: start_near(p.manifold(), center, 1.0, &mut rng),
    }
}

fn build_suite() -> Suite {
    let problem = synthetic::pca(&mut ChaCha8Rng::seed_from_u64(202), 100, 10, 0.3, SphereTransport::Parallel).unwrap();
    let region = Region::around_optimum(&problem, 1.5, 1.0).unwrap();
    let constants = estimate_constants(&problem, &region, 4000, 3).unwrap();
    let lc = LemmaConstants::from(&constants);
    let mut reports = Vec::new();
    for algo in ["adaptive", "svrg_srg", "timevarying"] {
        let per_seed: Vec<MonitorReport> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let cfg = suite_config(&problem, algo, seed);
                let (_, tr) = counted_run(&problem, &cfg);
                lemma_monitor(&problem, &cfg, &tr, &lc).expect("monitor")
            })
            .collect();
        let mut total = MonitorReport::default();
        for r in per_seed {
            total.merge(r);
        }
        reports.push((algo, total));
    }
    Suite { problem, constants, reports }
}

fn criterion_2(suite: &Suite) -> Outcome {
    let (_, r) = suite.reports.iter().find(|(a, _)| *a == "adaptive").unwrap();
    let clips = r.violations.iter().filter(|v| v.kind == rshg::diagnostics::CheckKind::Clip).count();
    outcome(
        clips == 0 && r.clip_checks == 50 * 50 * 4,
        format!("{clips} clip violations over {} adaptive steps, 50 seeds (slack 1e-12)", r.clip_checks),
    )
}

fn criterion_10(suite: &Suite) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (algo, r) in &suite.reports {
        let v = r.violations.iter().filter(|v| v.kind != rshg::diagnostics::CheckKind::Clip).count();
        ok &= v == 0 && r.notices.is_empty() && r.variance_checks == 50 * 50 * 5;
        parts.push(format!(
            "{algo}: {v} of {} (min rel slack {:.2e})",
            r.variance_checks,
            r.min_relative_slack.unwrap_or(f64::NAN)
        ));
    }
    let c = &suite.constants;
    outcome(
        ok,
        format!(
            "violations {}; N={:.3} M={:.3} theta={:.1e} on {}",
            parts.join(", "),
            c.n_grad.value,
            c.m.value,
            c.theta.value,
            suite.problem.name()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let ms: Vec<Box<dyn Manifold>> = vec![
        Box::new(Euclidean::new(5)),
        Box::new(Sphere::new(6)),
        Box::new(Sphere::with_transport(6, SphereTransport::Projection)),
        Box::new(Spd::new(3)),
    ];
    let mut failing = Vec::new();
    for (k, m) in ms.iter().enumerate() {
        let opts = AxiomOptions { trials: 200, seed: 300 + k as u64, ..AxiomOptions::default() };
        let r = manifold_axioms(m.as_ref(), &opts).unwrap();
        for c in r.checks.iter().filter(|c| !c.pass) {
            failing.push(format!("{}:{}={:.2e}", r.manifold, c.name, c.worst));
        }
    }
    outcome(failing.is_empty(), if failing.is_empty() { "all axioms hold on R^5, S^5 (both transports), SPD(3)".into() } else { failing.join(", ") })
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let p = synthetic::pca(&mut ChaCha8Rng::seed_from_u64(404), 100, 20, 0.3, SphereTransport::Parallel).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for algo in ["timevarying", "adaptive"] {
        let epochs_needed: Vec<Option<usize>> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let (m, epochs) = (5, 500);
                let kind = ScheduleKind::DecayingDefault { phi: constant(0.6), psi: constant(0.3) };
                let cfg = RunConfig {
                    direction: algorithm(algo),
                    schedule: ScheduleSpec::new(kind, 0.5, m, epochs).unwrap(),
                    m,
                    epochs,
                    b: 5,
                    seed,
                    output: OutputOption::LastIterate,
                    initial: p.manifold().random_point(&mut ChaCha8Rng::seed_from_u64(seed + 40_000)),
                };
                let (_, tr) = counted_run(&p, &cfg);
                tr.epochs.iter().find(|e| e.mean_grad_norm_sq < 1e-3).map(|e| e.s)
            })
            .collect();
        let hits = epochs_needed.iter().flatten().count();
        let slowest = epochs_needed.iter().flatten().max().copied().unwrap_or(0);
        ok &= hits >= 45;
        parts.push(format!("{algo} {hits}/50 (slowest epoch {slowest})"));
    }
    outcome(ok, format!("seeds below 1e-3 within 500 epochs: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- 5 and 6

const GRID: [usize; 5] = [10, 20, 40, 80, 160];

fn sweep_slope<F>(p: &dyn FiniteSumProblem, make: F) -> (f64, Vec<(f64, f64)>)
where
    F: Fn(usize, u64) -> RunConfig + Sync,
{
    let cells: Vec<(usize, f64)> = GRID
        .iter()
        .flat_map(|&s| (0..10u64).map(move |seed| (s, seed)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, seed)| {
            let cfg = make(s, seed);
            let (_, tr) = counted_run(p, &cfg);
            (s, output_metric(&tr))
        })
        .collect();
    let means: Vec<(f64, f64)> = GRID
        .iter()
        .map(|&s| {
            let v: Vec<f64> = cells.iter().filter(|c| c.0 == s).map(|c| c.1).collect();
            (s as f64, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    let fit = fit_rate(&means).unwrap();
    (fit.slope, means)
}

fn fmt_points(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(s, v)| format!("{s}:{v:.2e}")).collect::<Vec<_>>().join(" ")
}

fn rate_problem() -> (PcaSphere, ConstantEstimates) {
    let p = synthetic::pca(&mut ChaCha8Rng::seed_from_u64(505), 50, 5, 0.3, SphereTransport::Parallel).unwrap();
    let region = Region::around_optimum(&p, 0.8, 0.5).unwrap();
    let c = estimate_constants(&p, &region, 4000, 5).unwrap();
    (p, c)
}

fn criterion_5() -> Outcome {
    // The fixed step is small enough that on PCA the grid stays in the transient
    // phase; a well-conditioned least-squares instance reaches the 1/S regime by S=10.
    let p = synthetic::least_squares(&mut ChaCha8Rng::seed_from_u64(515), 50, 5, 0.1).unwrap();
    let region = Region::around_optimum(&p, 2.0, 1.0).unwrap();
    let c = estimate_constants(&p, &region, 4000, 5).unwrap();
    let m = 5;
    let alpha = step_bound_theorem6(c.l.value, c.msq_theta_nsq(), c.c1.value, c.c2.value, m).unwrap();
    let center = p.known_optimum().unwrap().point.clone();
    let (slope, pts) = sweep_slope(&p, |s, seed| {
        // phi^s + psi^s = 1 - 1/(s+1), split evenly.
        let total: Vec<f64> = (1..=s).map(|k| 0.5 * (1.0 - 1.0 / (k as f64 + 1.0))).collect();
        let kind = ScheduleKind::Fixed {
            c_alpha: alpha,
            phi: Sequence::List { values: total.clone() },
            psi: Sequence::List { values: total },
        };
        RunConfig {
            direction: algorithm("timevarying"),
            schedule: ScheduleSpec::new(kind, 0.5, m, s).unwrap(),
            m,
            epochs: s,
            b: 1,
            seed: seed * 1000 + s as u64,
            output: OutputOption::UniformRandom,
            initial: start_near(p.manifold(), &center, 2.0, &mut ChaCha8Rng::seed_from_u64(seed + 50_000)),
        }
    });
    outcome(slope <= -0.8, format!("slope {slope:.3} (need <= -0.8), alpha {alpha:.3e}, E|grad|^2 {}", fmt_points(&pts)))
}

fn criterion_6() -> Outcome {
    let (p, c) = rate_problem();
    let k = c.msq_theta_nsq();
    let (pp, q, beta, gamma) = (1.0 / 3.0, 2.0 / 3.0, 4.5, 2.0);
    let c_alpha = (1.0 / c.l.value).min(((1.0 - pp) / (6.0 * beta * k)).sqrt());
    let c_psi = (pp + 6.0 * beta * c_alpha * c_alpha * k).min(1.0);
    let t5 = Theorem5 {
        c_alpha,
        c_psi,
        c_phi: 0.5 * c_psi,
        p: pp,
        q,
        rexp: q,
        gamma,
        beta,
        msq_theta_nsq: Some(k),
        l: Some(c.l.value),
    };
    let kappa = match t5.validate() {
        Ok(kappa) => kappa,
        Err(e) => return outcome(false, format!("validator rejected the schedule: {e}")),
    };
    let m = 5;
    let center = p.known_optimum().unwrap().point.clone();
    let (slope, pts) = sweep_slope(&p, |s, seed| RunConfig {
        direction: algorithm("timevarying"),
        schedule: ScheduleSpec::new(ScheduleKind::Theorem5(t5.clone()), 0.5, m, s).unwrap(),
        m,
        epochs: s,
        b: 1,
        seed: seed * 1000 + s as u64,
        output: OutputOption::UniformRandom,
        initial: start_near(p.manifold(), &center, 0.8, &mut ChaCha8Rng::seed_from_u64(seed + 60_000)),
    });
    outcome(
        slope <= -0.5 && kappa == 2 && kappa_of(2.0).unwrap() == 2,
        format!("validator ok (kappa {kappa}), slope {slope:.3} (need <= -0.5), E|grad|^2 {}", fmt_points(&pts)),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let p: LeastSquares = synthetic::least_squares(&mut ChaCha8Rng::seed_from_u64(707), 50, 10, 0.3).unwrap();
    let tau = p.tau().unwrap();
    let f_star = p.known_optimum().unwrap().value;
    let region = Region::around_optimum(&p, 2.0, 1.0).unwrap();
    let c = estimate_constants(&p, &region, 2000, 7).unwrap();
    let m = 5;
    let alpha = step_bound_theorem6(c.l.value, c.msq_theta_nsq(), c.c1.value, c.c2.value, m).unwrap();
    let gamma = 2.0;
    let epochs = restart_epochs_theorem7(tau, gamma, m, alpha).unwrap();
    let k = 8;
    let gaps: Vec<Vec<f64>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let kind = ScheduleKind::Fixed { c_alpha: alpha, phi: constant(0.5), psi: constant(0.5) };
            let cfg = RunConfig {
                direction: algorithm("timevarying"),
                schedule: ScheduleSpec::new(kind, 0.5, m, 1).unwrap(),
                m,
                epochs: 1,
                b: 1,
                seed,
                output: OutputOption::UniformRandom,
                initial: start_near(p.manifold(), &p.known_optimum().unwrap().point, 2.0, &mut ChaCha8Rng::seed_from_u64(seed + 70_000)),
            };
            let out = rshg::optimizer::run_restarted(&p, &cfg, gamma, k).expect("restarts");
            for tr in &out.traces {
                let restart_cfg = RunConfig { epochs: out.epochs, schedule: cfg.schedule.with_horizon(out.epochs).unwrap(), ..cfg.clone() };
                checked(&p, &restart_cfg, tr, ());
            }
            out.points.iter().map(|w| p.cost(w).unwrap() - f_star).collect()
        })
        .collect();
    let mean: Vec<f64> = (0..=k).map(|j| gaps.iter().map(|g| g[j]).sum::<f64>() / gaps.len() as f64).collect();
    let log_sum: f64 = (1..=k).map(|j| (mean[j] / mean[j - 1]).ln()).sum();
    let geo = (log_sum / k as f64).exp();
    outcome(
        geo <= 0.6,
        format!("geometric mean ratio {geo:.3e} (need <= 0.6), S={epochs}, tau={tau:.3}, E[f-f*] {:.2e} -> {:.2e}", mean[0], mean[k]),
    )
}

// ---------------------------------------------------------------- 8

/// Independent reference loops. Each returns every iterate `w_t^s` it visits
/// plus the final snapshot.
mod reference {
    use super::*;

    fn batches(seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        rng
    }

    pub fn rsvrg(p: &dyn FiniteSumProblem, x0: &Point, alpha: f64, m: usize, epochs: usize, b: usize, seed: u64) -> Vec<Point> {
        let man = p.manifold();
        let mut rng = batches(seed);
        let mut out = Vec::new();
        let mut snap = x0.clone();
        for _ in 0..epochs {
            let mu = p.full_grad(&snap).unwrap();
            out.push(snap.clone());
            let mut w = man.retract(&snap, &mu.scale(-alpha)).unwrap();
            for _ in 1..m {
                out.push(w.clone());
                let batch = sample_batch(&mut rng, p.n(), b).unwrap();
                let gw = p.batch_grad(&batch, &w).unwrap();
                let g0 = p.batch_grad(&batch, &snap).unwrap();
                let corr = man.transport_to(&snap, &w, &g0.sub(&mu).unwrap()).unwrap();
                let v = Tangent::clone(&gw).sub(&corr.reanchor(&w).unwrap()).unwrap();
                w = man.retract(&w, &v.scale(-alpha)).unwrap();
            }
            snap = w;
        }
        out.push(snap);
        out
    }

    pub fn rsgd(p: &dyn FiniteSumProblem, x0: &Point, alpha: f64, m: usize, epochs: usize, b: usize, seed: u64) -> Vec<Point> {
        let man = p.manifold();
        let mut rng = batches(seed);
        let mut out = Vec::new();
        let mut w = x0.clone();
        for _ in 0..epochs {
            out.push(w.clone());
            w = man.retract(&w, &p.full_grad(&w).unwrap().scale(-alpha)).unwrap();
            for _ in 1..m {
                out.push(w.clone());
                let batch = sample_batch(&mut rng, p.n(), b).unwrap();
                w = man.retract(&w, &p.batch_grad(&batch, &w).unwrap().scale(-alpha)).unwrap();
            }
        }
        out.push(w);
        out
    }

    /// Flat recursive estimator on plain vectors.
    pub fn sarah(p: &dyn FiniteSumProblem, x0: &DMatrix<f64>, alpha: f64, m: usize, epochs: usize, b: usize, seed: u64) -> Vec<DMatrix<f64>> {
        let man = p.manifold();
        let grad = |batch: Option<&rshg::problems::BatchIndex>, x: &DMatrix<f64>| -> DMatrix<f64> {
            let pt = man.point(x.clone()).unwrap();
            match batch {
                Some(bi) => p.batch_grad(bi, &pt).unwrap().coords().clone(),
                None => p.full_grad(&pt).unwrap().coords().clone(),
            }
        };
        let mut rng = batches(seed);
        let mut out = Vec::new();
        let mut x = x0.clone();
        for _ in 0..epochs {
            let mut v = grad(None, &x);
            out.push(x.clone());
            let mut prev = x.clone();
            x = &x + &v * (-alpha);
            for _ in 1..m {
                out.push(x.clone());
                let batch = sample_batch(&mut rng, p.n(), b).unwrap();
                v = (grad(Some(&batch), &x) - grad(Some(&batch), &prev)) + &v;
                prev = x.clone();
                x = &x + &v * (-alpha);
            }
        }
        out.push(x);
        out
    }
}

fn library_path(p: &dyn FiniteSumProblem, algo: &str, phi: f64, psi: f64, x0: &Point, alpha: f64, seed: u64) -> Vec<Point> {
    let (m, epochs, b) = (4, 6, 2);
    let kind = ScheduleKind::Fixed { c_alpha: alpha, phi: constant(phi), psi: constant(psi) };
    let cfg = RunConfig {
        direction: algorithm(algo),
        schedule: ScheduleSpec::new(kind, 0.5, m, epochs).unwrap(),
        m,
        epochs,
        b,
        seed,
        output: OutputOption::LastIterate,
        initial: x0.clone(),
    };
    let mut pts = Vec::new();
    let (last, tr) = run_observed(p, &cfg, &mut |v: &StepView<'_>| {
        pts.push(v.point.clone());
        Ok(())
    })
    .unwrap();
    checked(p, &cfg, &tr, ());
    pts.push(last);
    pts
}

fn same_points(a: &[Point], b: &[Point]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bitwise_eq(y))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let pca = synthetic::pca(&mut rng, 12, 4, 0.3, SphereTransport::Parallel).unwrap();
    let karcher = synthetic::karcher(&mut rng, 10, 3, 0.4).unwrap();
    let ls = synthetic::least_squares(&mut rng, 10, 3, 0.3).unwrap();
    let (m, epochs, b) = (4, 6, 2);
    let mut failures = Vec::new();
    let mut cases = 0;
    let riemannian: [&dyn FiniteSumProblem; 2] = [&pca, &karcher];
    for (k, p) in riemannian.into_iter().enumerate() {
        for seed in 0..5u64 {
            let x0 = p.manifold().random_point(&mut rng);
            let alpha = 0.05;
            let want = reference::rsvrg(p, &x0, alpha, m, epochs, b, seed);
            for algo in ["timevarying", "adaptive"] {
                cases += 1;
                if !same_points(&library_path(p, algo, 1.0, 0.0, &x0, alpha, seed), &want) {
                    failures.push(format!("svrg/{algo}/{k}/{seed}"));
                }
            }
            let want = reference::rsgd(p, &x0, alpha, m, epochs, b, seed);
            for algo in ["timevarying", "adaptive", "sgd"] {
                cases += 1;
                if !same_points(&library_path(p, algo, 0.0, 0.0, &x0, alpha, seed), &want) {
                    failures.push(format!("sgd/{algo}/{k}/{seed}"));
                }
            }
        }
    }
    for seed in 0..5u64 {
        let x0 = ls.manifold().random_point(&mut rng);
        let want = reference::sarah(&ls, x0.coords(), 0.05, m, epochs, b, seed);
        for algo in ["timevarying", "srg"] {
            cases += 1;
            let got = library_path(&ls, algo, 0.0, 1.0, &x0, 0.05, seed);
            let same = got.len() == want.len()
                && got.iter().zip(&want).all(|(g, w)| g.coords().iter().zip(w.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            if !same {
                failures.push(format!("sarah/{algo}/{seed}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} trajectories bitwise equal to reference R-SVRG, R-SGD and flat SARAH")
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let runs = RUNS.load(Ordering::Relaxed);
    let bad = MISCOUNTED.load(Ordering::Relaxed);
    outcome(runs > 0 && bad == 0, format!("{bad} of {runs} suite runs deviate from the closed-form evaluation count"))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let names = [
        "conditional-expectation identity",
        "clip bound",
        "manifold axioms",
        "qualitative convergence, decaying steps",
        "O(1/S) rate, fixed step",
        "polynomial schedule validity and rate",
        "linear decay under restarts",
        "degeneracy equivalences",
        "evaluation accounting",
        "variance-lemma monitors",
    ];
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };
    let suite = if want(2) || want(10) {
        let t = Instant::now();
        let s = build_suite();
        Some((s, t.elapsed().as_secs_f64()))
    } else {
        None
    };
    for k in 1..=10u32 {
        if !want(k) || k == 9 {
            continue;
        }
        let (o, secs) = match k {
            1 => timed(&criterion_1),
            2 => (criterion_2(&suite.as_ref().unwrap().0), suite.as_ref().unwrap().1),
            3 => timed(&criterion_3),
            4 => timed(&criterion_4),
            5 => timed(&criterion_5),
            6 => timed(&criterion_6),
            7 => timed(&criterion_7),
            8 => timed(&criterion_8),
            10 => (criterion_10(&suite.as_ref().unwrap().0), suite.as_ref().unwrap().1),
            _ => unreachable!(),
        };
        results.push((k, o, secs));
    }
    if want(9) {
        results.push((9, criterion_9(), 0.0));
    }
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (k, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {k:>2} [{tag}] {} ({secs:.1}s): {}", names[*k as usize - 1], o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
