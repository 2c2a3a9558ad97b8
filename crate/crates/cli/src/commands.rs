use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rshg::diagnostics::{
    estimate_constants, expectation_identity, fit_rate, gradient_fd_check, lemma_monitor, manifold_axioms, AxiomOptions,
    ConstantEstimates, LemmaConstants, MonitorReport, RateFit, Region,
};
use rshg::optimizer::{self, output_metric, RunTrace, Selection};
use rshg::problems::FiniteSumProblem;
use rshg::schedules::{step_bound_theorem3, step_bound_theorem4, step_bound_theorem6};
use rshg::Error;

use crate::config::{self, CheckName, Loaded};
use crate::output::{out_dir, seed_dir, write_json, write_manifest, write_trace};
use crate::{Common, Failure};

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const EXPECTATION_TOL: f64 = 1e-12;

macro_rules! say {
    ($common:expr, $($arg:tt)*) => {
        if !$common.quiet {
            println!($($arg)*);
        }
    };
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    records: usize,
    final_f: f64,
    final_grad_norm_sq: f64,
    /// `E[|grad f(w_a)|^2]` over the output choice; the per-cell sweep metric.
    metric: f64,
    evals: u64,
    expected_evals: u64,
    selection: Option<Selection>,
    /// Per-restart final values when the run uses restarts.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    restart_final_f: Vec<f64>,
}

#[derive(Serialize)]
struct RunReport {
    algorithm: String,
    status: &'static str,
    seeds: Vec<SeedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abort: Option<String>,
}

fn summarize(seed: u64, trace: &RunTrace, expected: u64) -> SeedSummary {
    let last = trace.records.last();
    SeedSummary {
        seed,
        records: trace.records.len(),
        final_f: trace.selection.as_ref().map(|s| s.f).or(last.map(|r| r.f)).unwrap_or(f64::NAN),
        final_grad_norm_sq: trace
            .selection
            .as_ref()
            .map(|s| s.grad_norm_sq)
            .or(last.map(|r| r.grad_norm_sq))
            .unwrap_or(f64::NAN),
        metric: output_metric(trace),
        evals: trace.total_evals(),
        expected_evals: expected,
        selection: trace.selection.clone(),
        restart_final_f: Vec::new(),
    }
}

pub fn run(common: &Common) -> Result<(), Failure> {
    let loaded = config::load(&common.config)?;
    let problem = loaded.problem()?;
    let p = problem.as_ref();
    let schedule = loaded.schedule(None)?;
    let out = out_dir(common, &loaded)?;
    write_manifest(&out, "run", &loaded)?;

    let r = &loaded.config.run;
    let mut report = RunReport { algorithm: r.algorithm.clone(), status: "ok", seeds: Vec::new(), abort: None };
    for &seed in &r.seeds {
        let cfg = loaded.run_config(p, seed, r.epochs, schedule.clone())?;
        let dir = seed_dir(&out, seed);
        match &r.restarts {
            None => match optimizer::run(p, &cfg) {
                Ok((_, trace)) => {
                    write_trace(&dir, &trace)?;
                    let s = summarize(seed, &trace, cfg.expected_evals(p.n()));
                    say!(common, "seed {seed}: f = {:.6e}, |grad f|^2 = {:.3e}, evals = {}", s.final_f, s.final_grad_norm_sq, s.evals);
                    report.seeds.push(s);
                }
                Err(Error::Aborted { s, t, reason, trace }) => {
                    write_trace(&dir, &trace)?;
                    report.seeds.push(summarize(seed, &trace, cfg.expected_evals(p.n())));
                    let msg = format!("seed {seed} aborted at (s={s}, t={t}): {reason}; partial trace in {}", dir.display());
                    report.status = "aborted";
                    report.abort = Some(msg.clone());
                    write_json(&out.join("report.json"), &report)?;
                    return Err(Failure::Numerical(msg));
                }
                Err(e) => return Err(Failure::Config(format!("run: {e}"))),
            },
            Some(rs) => {
                let outcome = match optimizer::run_restarted(p, &cfg, rs.gamma, rs.count) {
                    Ok(o) => o,
                    Err(Error::Aborted { s, t, reason, trace }) => {
                        write_trace(&dir.join("aborted"), &trace)?;
                        let msg = format!("seed {seed} aborted at (s={s}, t={t}) during restarts: {reason}");
                        report.status = "aborted";
                        report.abort = Some(msg.clone());
                        write_json(&out.join("report.json"), &report)?;
                        return Err(Failure::Numerical(msg));
                    }
                    Err(e) => return Err(Failure::Config(format!("run.restarts: {e}"))),
                };
                let mut finals = Vec::with_capacity(outcome.traces.len());
                for (k, tr) in outcome.traces.iter().enumerate() {
                    write_trace(&dir.join(format!("restart-{k}")), tr)?;
                    finals.push(p.cost(&outcome.points[k + 1]).map_err(|e| Failure::Other(e.to_string()))?);
                }
                let mut s = match outcome.traces.last() {
                    Some(tr) => summarize(seed, tr, cfg.expected_evals(p.n())),
                    None => summarize(seed, &RunTrace::default(), 0),
                };
                s.evals = outcome.traces.iter().map(RunTrace::total_evals).sum();
                s.expected_evals = outcome.traces.len() as u64
                    * (outcome.epochs as u64 * (p.n() as u64 + (cfg.m as u64 - 1) * cfg.direction.step_cost(p.n(), cfg.b)));
                say!(common, "seed {seed}: {} restarts of S = {}, final f = {:.6e}", outcome.traces.len(), outcome.epochs, finals.last().copied().unwrap_or(f64::NAN));
                s.restart_final_f = finals;
                report.seeds.push(s);
            }
        }
    }
    write_json(&out.join("report.json"), &report)
}

#[derive(Serialize)]
struct CheckRow {
    check: String,
    subject: String,
    worst: f64,
    tol: f64,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    rows: Vec<CheckRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monitor: Option<MonitorReport>,
    notices: Vec<String>,
}

fn constants_for(loaded: &Loaded, p: &dyn FiniteSumProblem) -> Result<ConstantEstimates, Failure> {
    let e = &loaded.config.estimate;
    let region = Region::around_optimum(p, e.radius, e.step_radius).map_err(|err| Failure::Config(format!("estimate: {err}")))?;
    estimate_constants(p, &region, e.samples, e.seed).map_err(|err| match err {
        Error::InsufficientData(m) => Failure::Check(format!("estimate_constants: {m}")),
        other => Failure::Config(format!("estimate: {other}")),
    })
}

pub fn verify(common: &Common) -> Result<(), Failure> {
    let loaded = config::load(&common.config)?;
    let problem = loaded.problem()?;
    let p = problem.as_ref();
    let spec = loaded.config.verify.clone().unwrap_or_else(config::default_checks);
    let out = out_dir(common, &loaded)?;
    write_manifest(&out, "verify", &loaded)?;
    let lib = |e: Error| Failure::Other(e.to_string());

    let seed0 = loaded.config.run.seeds[0];
    let mut rows = Vec::new();
    let mut notices = Vec::new();
    let mut monitor = None;
    let subject = format!("{} on {}", p.name(), p.manifold().id());
    let mut seen = BTreeSet::new();
    for c in &spec.checks {
        if !seen.insert(format!("{c:?}")) {
            continue;
        }
        match c {
            CheckName::Axioms => {
                let opts = AxiomOptions {
                    trials: spec.trials,
                    seed: seed0,
                    transport_isometry: spec.transport_isometry,
                    ..AxiomOptions::default()
                };
                let rep = manifold_axioms(p.manifold(), &opts).map_err(lib)?;
                for ch in rep.checks {
                    rows.push(CheckRow {
                        check: format!("axiom:{}", ch.name),
                        subject: rep.manifold.clone(),
                        worst: ch.worst,
                        tol: ch.tol,
                        pass: ch.pass,
                        detail: None,
                    });
                }
            }
            CheckName::Gradient => {
                let w = loaded.initial(p, seed0)?;
                let worst = gradient_fd_check(p, &w, spec.trials, FD_STEP, seed0).map_err(lib)?;
                rows.push(CheckRow {
                    check: "gradient_fd".into(),
                    subject: subject.clone(),
                    worst,
                    tol: FD_TOL,
                    pass: worst <= FD_TOL,
                    detail: Some(format!("initial point of seed {seed0}, h = {FD_STEP:e}")),
                });
            }
            CheckName::Expectation => {
                let b = loaded.config.run.b;
                if !loaded.enumerable(p.n()) {
                    notices.push(format!("expectation identity skipped: C({}, {b}) batches exceed the enumeration limit", p.n()));
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed0);
                let worst = expectation_identity(p, b, spec.trials, &mut rng).map_err(lib)?;
                rows.push(CheckRow {
                    check: "expectation_identity".into(),
                    subject: subject.clone(),
                    worst,
                    tol: EXPECTATION_TOL,
                    pass: worst <= EXPECTATION_TOL,
                    detail: Some(format!("b = {b}, {} random states", spec.trials)),
                });
            }
            CheckName::Monitor => {
                let constants = constants_for(&loaded, p)?;
                let lc = LemmaConstants::from(&constants);
                let schedule = loaded.schedule(None)?;
                let mut merged = MonitorReport::default();
                for &seed in &loaded.config.run.seeds {
                    let cfg = loaded.run_config(p, seed, loaded.config.run.epochs, schedule.clone())?;
                    let trace = match optimizer::run(p, &cfg) {
                        Ok((_, tr)) => tr,
                        Err(Error::Aborted { s, t, reason, .. }) => {
                            return Err(Failure::Numerical(format!("monitor run for seed {seed} aborted at (s={s}, t={t}): {reason}")))
                        }
                        Err(e) => return Err(lib(e)),
                    };
                    merged.merge(lemma_monitor(p, &cfg, &trace, &lc).map_err(lib)?);
                }
                let detail = merged
                    .violations
                    .first()
                    .map(|v| format!("{:?} at (s={}, t={}): lhs {:e} > rhs {:e}", v.kind, v.s, v.t, v.lhs, v.rhs))
                    .unwrap_or_else(|| format!("{} clip and {} variance checks", merged.clip_checks, merged.variance_checks));
                rows.push(CheckRow {
                    check: "lemma_monitor".into(),
                    subject: subject.clone(),
                    worst: merged.violations.len() as f64,
                    tol: 0.0,
                    pass: merged.pass(),
                    detail: Some(detail),
                });
                notices.extend(merged.notices.iter().cloned());
                monitor = Some(merged);
            }
        }
    }

    let pass = rows.iter().all(|r| r.pass);
    if !common.quiet {
        println!("{:<34} {:<18} {:>12} {:>10}  result", "check", "subject", "worst", "tol");
        for r in &rows {
            println!(
                "{:<34} {:<18} {:>12.3e} {:>10.1e}  {}",
                r.check,
                r.subject,
                r.worst,
                r.tol,
                if r.pass { "pass" } else { "FAIL" }
            );
        }
        for n in &notices {
            println!("notice: {n}");
        }
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} on {} (worst {:e}{})", r.check, r.subject, r.worst, r.detail.as_ref().map(|d| format!(", {d}")).unwrap_or_default()))
        .collect();
    write_json(&out.join("report.json"), &VerifyReport { pass, rows, monitor, notices })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct CellRow {
    epochs: usize,
    seed: u64,
    metric: Option<f64>,
    error: Option<String>,
    evals: u64,
}

#[derive(Serialize)]
struct MeanRow {
    epochs: usize,
    mean: f64,
    ok: usize,
}

#[derive(Serialize)]
struct SweepReport {
    algorithm: String,
    cells: Vec<CellRow>,
    means: Vec<MeanRow>,
    fit: Option<RateFit>,
    failed_cells: usize,
    notices: Vec<String>,
}

pub fn sweep(common: &Common) -> Result<(), Failure> {
    let loaded = config::load(&common.config)?;
    let grid = loaded
        .config
        .sweep
        .clone()
        .ok_or_else(|| Failure::Config("sweep: the config has no [sweep] table".into()))?;
    let problem = loaded.problem()?;
    let p = problem.as_ref();
    let base = loaded.schedule(None)?;
    // Validate each epoch count up front so schema errors surface as exit 2.
    for &s in &grid.epochs {
        let schedule = base.with_horizon(s).map_err(|e| Failure::Config(format!("sweep.epochs: {e}")))?;
        for &seed in &loaded.config.run.seeds {
            loaded.run_config(p, seed, s, schedule.clone())?;
        }
    }
    let out = out_dir(common, &loaded)?;
    write_manifest(&out, "sweep", &loaded)?;

    let seeds = &loaded.config.run.seeds;
    let cells = optimizer::sweep(p, &grid.epochs, seeds, |s, seed| {
        let schedule = base.with_horizon(s)?;
        loaded
            .run_config(p, seed, s, schedule)
            .map_err(|f| Error::Parse(f.to_string()))
    });
    let means = optimizer::aggregate(&cells, &grid.epochs);
    let failed = cells.iter().filter(|c| c.metric.is_err()).count();

    let mut notices = Vec::new();
    let distinct: BTreeSet<usize> = grid.epochs.iter().copied().collect();
    let points: Vec<(f64, f64)> = means.iter().filter(|m| m.2 > 0).map(|m| (m.0 as f64, m.1)).collect();
    let fit = if distinct.len() < 4 {
        notices.push(format!("rate fit skipped: {} distinct epoch counts, at least 4 needed", distinct.len()));
        None
    } else {
        match fit_rate(&points) {
            Ok(f) => Some(f),
            Err(e) => {
                notices.push(format!("rate fit skipped: {e}"));
                None
            }
        }
    };

    if !common.quiet {
        println!("{:>8} {:>14} {:>6}", "S", "mean metric", "ok");
        for (s, mean, ok) in &means {
            println!("{s:>8} {mean:>14.4e} {ok:>6}");
        }
        if let Some(f) = &fit {
            println!("log-log slope {:.4}, intercept {:.4}, residual {:.3e}", f.slope, f.intercept, f.residual);
        }
        for n in &notices {
            println!("notice: {n}");
        }
    }
    let report = SweepReport {
        algorithm: loaded.config.run.algorithm.clone(),
        cells: cells
            .iter()
            .map(|c| CellRow {
                epochs: c.epochs,
                seed: c.seed,
                metric: c.metric.as_ref().ok().copied(),
                error: c.metric.as_ref().err().cloned(),
                evals: c.evals,
            })
            .collect(),
        means: means.iter().map(|&(epochs, mean, ok)| MeanRow { epochs, mean, ok }).collect(),
        fit,
        failed_cells: failed,
        notices,
    };
    write_json(&out.join("report.json"), &report)?;
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} sweep cells failed; see report.json", cells.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct Bound {
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl From<rshg::Result<f64>> for Bound {
    fn from(r: rshg::Result<f64>) -> Self {
        match r {
            Ok(v) => Bound { value: Some(v), error: None },
            Err(e) => Bound { value: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Serialize)]
struct Bounds {
    theorem3: Bound,
    theorem4: Bound,
    theorem6: Bound,
}

#[derive(Serialize)]
struct EstimateReport {
    constants: ConstantEstimates,
    msq_theta_nsq: f64,
    m: usize,
    bounds: Bounds,
}

pub fn estimate(common: &Common) -> Result<(), Failure> {
    let loaded = config::load(&common.config)?;
    let problem = loaded.problem()?;
    let p = problem.as_ref();
    let out = out_dir(common, &loaded)?;
    write_manifest(&out, "estimate", &loaded)?;
    let constants = constants_for(&loaded, p)?;
    let k = constants.msq_theta_nsq();
    let (l, c1, c2) = (constants.l.value, constants.c1.value, constants.c2.value);
    let m = loaded.config.run.m;
    let bounds = Bounds {
        theorem3: step_bound_theorem3(l, k, c1, c2, m).into(),
        theorem4: step_bound_theorem4(l, k, c1, c2, m).into(),
        theorem6: step_bound_theorem6(l, k, c1, c2, m).into(),
    };
    if !common.quiet {
        println!(
            "N = {:.4e}  L = {:.4e}  M = {:.4e}  theta = {:.4e}  C1 = {:.6}  C2 = {:.6}",
            constants.n_grad.value, l, constants.m.value, constants.theta.value, c1, c2
        );
        for (name, b) in [("theorem3", &bounds.theorem3), ("theorem4", &bounds.theorem4), ("theorem6", &bounds.theorem6)] {
            match (&b.value, &b.error) {
                (Some(v), _) => println!("{name} step bound (m = {m}): {v:.6e}"),
                (None, e) => println!("{name} step bound unavailable: {}", e.as_deref().unwrap_or("")),
            }
        }
    }
    write_json(&out.join("report.json"), &EstimateReport { constants, msq_theta_nsq: k, m, bounds })
}
