//! The double-loop driver.
//!
//! Epoch `s` starts at the snapshot `w_0 = w~^{s-1}`, takes one step along the
//! full gradient and then `m - 1` steps along the configured direction.
//! Epoch `s` therefore retracts `m` times and `w~^s = w_m`.
//!
//! Randomness comes from one ChaCha8 seed split into two streams: stream 0
//! draws mini-batches, stream 1 draws the uniform output index. Observers and
//! diagnostics never touch either stream.

mod trace;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use trace::{read_epochs_csv, read_jsonl, EpochSummary, OutputOption, RunTrace, Selection, StepRecord, CSV_HEADER};

use crate::directions::{Direction, DirectionOutput, HybridState, StepContext};
use crate::error::{Error, Result};
use crate::manifold::{ensure_on, Point, Tangent};
use crate::problems::{BatchIndex, Counted, FiniteSumProblem};
use crate::schedules::{restart_epochs_theorem7, ScheduleKind, ScheduleSpec};

const BATCH_STREAM: u64 = 0;
const OUTPUT_STREAM: u64 = 1;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub direction: Arc<dyn Direction>,
    pub schedule: ScheduleSpec,
    /// Inner-loop length.
    pub m: usize,
    /// Outer epochs.
    pub epochs: usize,
    pub b: usize,
    pub seed: u64,
    pub output: OutputOption,
    pub initial: Point,
}

impl RunConfig {
    pub fn validate(&self, p: &dyn FiniteSumProblem) -> Result<()> {
        let n = p.n();
        if self.m == 0 || self.epochs == 0 {
            return Err(Error::contract(format!("need m >= 1 and S >= 1, got m={}, S={}", self.m, self.epochs)));
        }
        if self.b == 0 || self.b > n {
            return Err(Error::contract(format!("batch size b={} must lie in 1..={n}", self.b)));
        }
        if self.schedule.m() != self.m {
            return Err(Error::contract(format!(
                "schedule validated for m={}, run uses m={}",
                self.schedule.m(),
                self.m
            )));
        }
        if self.schedule.horizon() < self.epochs {
            return Err(Error::contract(format!(
                "schedule validated for {} epochs, run needs {}",
                self.schedule.horizon(),
                self.epochs
            )));
        }
        ensure_on(p.manifold().id(), &self.initial)?;
        p.manifold().check_point(self.initial.coords())
    }

    /// Closed-form component-gradient count for the whole run.
    pub fn expected_evals(&self, n: usize) -> u64 {
        let per_epoch = n as u64 + (self.m as u64 - 1) * self.direction.step_cost(n, self.b);
        per_epoch * self.epochs as u64
    }
}

/// Everything the optimizer knows at one inner step, handed to observers.
pub struct StepView<'a> {
    pub s: usize,
    pub t: usize,
    pub point: &'a Point,
    /// `None` at `t = 0`, where `V_0` is the full gradient.
    pub state: Option<&'a HybridState>,
    pub batch: Option<&'a BatchIndex>,
    pub output: Option<&'a DirectionOutput>,
    pub direction: &'a Tangent,
    pub step: f64,
    pub record: &'a StepRecord,
}

pub trait Observer {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()>;
}

impl<F: FnMut(&StepView<'_>) -> Result<()>> Observer for F {
    fn on_step(&mut self, view: &StepView<'_>) -> Result<()> {
        self(view)
    }
}

/// Draws a uniform `b`-subset of `0..n` by a partial Fisher-Yates shuffle.
///
/// Consumes exactly `b` calls to `next_u64`, each mapped to `i..n` by a
/// 128-bit multiply, and returns the indices sorted.
pub fn sample_batch(rng: &mut dyn RngCore, n: usize, b: usize) -> Result<BatchIndex> {
    if b == 0 || b > n {
        return Err(Error::contract(format!("batch size b={b} must lie in 1..={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let u = rng.next_u64();
        let j = i + ((u as u128 * (n - i) as u128) >> 64) as usize;
        perm.swap(i, j);
    }
    perm.truncate(b);
    BatchIndex::new(perm, n)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn all_finite(t: &Tangent) -> bool {
    t.is_finite()
}

/// Runs the configured algorithm; returns `w_a` and the trace.
pub fn run(problem: &dyn FiniteSumProblem, config: &RunConfig) -> Result<(Point, RunTrace)> {
    run_observed(problem, config, &mut |_: &StepView<'_>| Ok(()))
}

pub fn run_observed(problem: &dyn FiniteSumProblem, config: &RunConfig, observer: &mut dyn Observer) -> Result<(Point, RunTrace)> {
    config.validate(problem)?;
    let counted = Counted::new(problem);
    let man = problem.manifold();
    let (m, n_epochs) = (config.m, config.epochs);
    let mut batch_rng = stream(config.seed, BATCH_STREAM);
    let pick = match config.output {
        OutputOption::UniformRandom => Some(stream(config.seed, OUTPUT_STREAM).random_range(0..m * n_epochs)),
        OutputOption::LastIterate => None,
    };
    let clock = Instant::now();
    let mut trace = RunTrace::default();
    let mut chosen: Option<Point> = None;
    let mut snapshot = config.initial.clone();

    let abort = |trace: &RunTrace, s: usize, t: usize, reason: String| Error::Aborted {
        s,
        t,
        reason,
        trace: Box::new(trace.clone()),
    };

    for s in 1..=n_epochs {
        let g0 = counted.full_grad(&snapshot).map_err(|e| abort(&trace, s, 0, e.to_string()))?;
        if !all_finite(&g0) {
            return Err(abort(&trace, s, 0, "non-finite snapshot gradient".into()));
        }
        let mut point = snapshot.clone();
        let mut direction = g0.clone();
        let mut state: Option<HybridState> = None;
        let mut last_batch: Option<BatchIndex> = None;
        let mut last_out: Option<DirectionOutput> = None;

        for t in 0..m {
            if t > 0 {
                let st = state.as_ref().expect("state set after the first step");
                let batch = sample_batch(&mut batch_rng, problem.n(), config.b)?;
                let (phi, psi) = config.schedule.params(t, s)?;
                let ctx = StepContext {
                    problem: &counted,
                    point: &point,
                    state: st,
                    batch: &batch,
                    phi,
                    psi,
                    mu: config.schedule.mu(),
                };
                let out = config.direction.compute(&ctx).map_err(|e| abort(&trace, s, t, e.to_string()))?;
                if !all_finite(&out.direction) {
                    return Err(abort(&trace, s, t, "non-finite direction".into()));
                }
                direction = out.direction.clone();
                last_batch = Some(batch);
                last_out = Some(out);
            }
            let f = problem.cost(&point).map_err(|e| abort(&trace, s, t, e.to_string()))?;
            let grad_norm_sq = if t == 0 {
                man.norm_sq(&g0)?
            } else {
                let g = problem.full_grad(&point).map_err(|e| abort(&trace, s, t, e.to_string()))?;
                man.norm_sq(&g)?
            };
            let record = StepRecord {
                s,
                t,
                f,
                grad_norm_sq,
                v_norm_sq: man.norm_sq(&direction)?,
                psi_tilde: last_out.as_ref().filter(|_| t > 0).map_or(0.0, |o| o.psi_tilde()),
                clip_active: t > 0 && last_out.as_ref().is_some_and(|o| o.clip_active()),
                evals: counted.evals(),
                wall_time: clock.elapsed().as_secs_f64(),
            };
            if !(f.is_finite() && grad_norm_sq.is_finite()) {
                return Err(abort(&trace, s, t, "non-finite objective or gradient".into()));
            }
            let step = config.schedule.step(t, s);
            observer.on_step(&StepView {
                s,
                t,
                point: &point,
                state: state.as_ref().filter(|_| t > 0),
                batch: last_batch.as_ref().filter(|_| t > 0),
                output: last_out.as_ref().filter(|_| t > 0),
                direction: &direction,
                step,
                record: &record,
            })?;
            trace.push(record);
            if pick == Some((s - 1) * m + t) {
                chosen = Some(point.clone());
            }

            let next = man
                .retract(&point, &direction.scale(-step))
                .map_err(|e| abort(&trace, s, t, e.to_string()))?;
            state = Some(HybridState {
                snapshot: snapshot.clone(),
                snapshot_full_grad: g0.clone(),
                prev_point: point,
                prev_direction: direction.clone(),
                prev_step: step,
            });
            point = next;
        }
        trace.close_epoch(s);
        snapshot = point;
    }

    let selection = match (pick, chosen) {
        (Some(k), Some(p)) => {
            let r = &trace.records[k];
            let sel = Selection {
                option: OutputOption::UniformRandom,
                s: r.s,
                t: r.t,
                f: r.f,
                grad_norm_sq: r.grad_norm_sq,
            };
            (p, sel)
        }
        _ => {
            let g = problem.full_grad(&snapshot)?;
            let sel = Selection {
                option: OutputOption::LastIterate,
                s: n_epochs,
                t: m,
                f: problem.cost(&snapshot)?,
                grad_norm_sq: man.norm_sq(&g)?,
            };
            (snapshot, sel)
        }
    };
    trace.selection = Some(selection.1);
    Ok((selection.0, trace))
}

/// SplitMix64 finaliser, used to derive per-restart seeds.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RestartOutcome {
    /// `w~^0, ..., w~^K`.
    pub points: Vec<Point>,
    pub traces: Vec<RunTrace>,
    /// Epochs per restart.
    pub epochs: usize,
}

/// `K` warm-started runs of `config.epochs = S`, with `S` from the restart rule.
///
/// Restart 0 uses `config.seed`; restart `k >= 1` uses `derive_seed(seed, k)`.
pub fn run_restarted(problem: &dyn FiniteSumProblem, config: &RunConfig, gamma: f64, k: usize) -> Result<RestartOutcome> {
    let tau = problem
        .tau()
        .ok_or_else(|| Error::contract(format!("problem {} has no gradient-domination constant", problem.name())))?;
    let c_alpha = match config.schedule.kind() {
        ScheduleKind::Fixed { c_alpha, .. } => *c_alpha,
        _ => return Err(Error::contract("restarts need a fixed-step schedule")),
    };
    let epochs = restart_epochs_theorem7(tau, gamma, config.m, c_alpha)?;
    let schedule = config.schedule.with_horizon(epochs)?;
    if !schedule.sums_to_one() {
        return Err(Error::contract("restarts need phi + psi = 1 in every epoch"));
    }
    let mut points = vec![config.initial.clone()];
    let mut traces = Vec::with_capacity(k);
    for j in 0..k {
        let cfg = RunConfig {
            schedule: schedule.clone(),
            epochs,
            seed: if j == 0 { config.seed } else { derive_seed(config.seed, j as u64) },
            initial: points[j].clone(),
            ..config.clone()
        };
        let (p, tr) = run(problem, &cfg)?;
        points.push(p);
        traces.push(tr);
    }
    Ok(RestartOutcome { points, traces, epochs })
}

/// One `(S, seed)` cell of a sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub epochs: usize,
    pub seed: u64,
    /// `E[|grad f(w_a)|^2]` over the output choice, or the error message.
    pub metric: std::result::Result<f64, String>,
    pub evals: u64,
}

/// Output metric of a finished run: the exact mean over the uniform output
/// choice for option 2, the final gradient norm for option 1.
pub fn output_metric(trace: &RunTrace) -> f64 {
    match &trace.selection {
        Some(sel) if sel.option == OutputOption::UniformRandom => trace.mean_grad_norm_sq(),
        Some(sel) => sel.grad_norm_sq,
        None => f64::NAN,
    }
}

/// Runs every `(S, seed)` pair in parallel; cells are returned in grid order.
/// `make` builds the config for a cell, typically rescaling the schedule.
pub fn sweep<F>(problem: &dyn FiniteSumProblem, epochs: &[usize], seeds: &[u64], make: F) -> Vec<SweepCell>
where
    F: Fn(usize, u64) -> Result<RunConfig> + Sync,
{
    let grid: Vec<(usize, u64)> = epochs.iter().flat_map(|&s| seeds.iter().map(move |&z| (s, z))).collect();
    grid.par_iter()
        .map(|&(s, seed)| {
            let res = make(s, seed).and_then(|cfg| run(problem, &cfg));
            match res {
                Ok((_, tr)) => SweepCell { epochs: s, seed, metric: Ok(output_metric(&tr)), evals: tr.total_evals() },
                Err(e) => SweepCell { epochs: s, seed, metric: Err(e.to_string()), evals: 0 },
            }
        })
        .collect()
}

/// Per-`S` mean of successful cells, in the order of `epochs`.
pub fn aggregate(cells: &[SweepCell], epochs: &[usize]) -> Vec<(usize, f64, usize)> {
    epochs
        .iter()
        .map(|&s| {
            let ok: Vec<f64> = cells.iter().filter(|c| c.epochs == s).filter_map(|c| c.metric.clone().ok()).collect();
            let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
            (s, mean, ok.len())
        })
        .collect()
}
