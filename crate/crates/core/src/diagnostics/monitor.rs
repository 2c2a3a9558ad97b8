//! Offline checks of the clip bound and the variance lemmas.
//!
//! The monitor replays a run with an observer, confirms the replay reproduces
//! the stored trace, and at every inner step enumerates all mini-batches to
//! get the exact conditional second moment `E[|V_t - grad f(w_t)|^2]`.

use rand::{Rng, RngCore};
use serde::Serialize;

use super::ConstantEstimates;
use crate::directions::{
    binomial, carried_bias, direction_with_weights, expectation_oracle, lemma_expectation_rhs, map_batches,
    DirectionOutput, HybridCoeffs, HybridState, VarianceLemma, MAX_ENUMERATION,
};
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::manifold::{Point, Tangent};
use crate::optimizer::{run_observed, RunConfig, RunTrace, StepView};
use crate::problems::FiniteSumProblem;

/// Relative slack for all monitored inequalities.
const SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LemmaConstants {
    #[serde(rename = "N")]
    pub n_grad: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub theta: f64,
}

impl LemmaConstants {
    pub fn k(&self) -> f64 {
        self.m * self.m + self.theta * self.theta * self.n_grad * self.n_grad
    }
}

impl From<&ConstantEstimates> for LemmaConstants {
    fn from(c: &ConstantEstimates) -> Self {
        LemmaConstants { n_grad: c.n_grad.value, m: c.m.value, theta: c.theta.value }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Clip,
    Hybrid,
    SvrgSrg,
    ThreeTerm,
}

impl From<VarianceLemma> for CheckKind {
    fn from(v: VarianceLemma) -> Self {
        match v {
            VarianceLemma::Hybrid => CheckKind::Hybrid,
            VarianceLemma::SvrgSrg => CheckKind::SvrgSrg,
            VarianceLemma::ThreeTerm => CheckKind::ThreeTerm,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub s: usize,
    pub t: usize,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MonitorReport {
    pub steps: usize,
    pub clip_checks: usize,
    pub variance_checks: usize,
    pub violations: Vec<Violation>,
    /// Smallest `(rhs - lhs) / (1 + |rhs|)` over all checks.
    pub min_relative_slack: Option<f64>,
    pub notices: Vec<String>,
}

impl MonitorReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, s: usize, t: usize, kind: CheckKind, lhs: f64, rhs: f64) {
        let rel = (rhs - lhs) / (1.0 + rhs.abs());
        self.min_relative_slack = Some(self.min_relative_slack.map_or(rel, |m| m.min(rel)));
        if lhs > rhs + SLACK * (1.0 + rhs.abs()) {
            self.violations.push(Violation { s, t, kind, lhs, rhs });
        }
    }

    pub fn merge(&mut self, other: MonitorReport) {
        self.steps += other.steps;
        self.clip_checks += other.clip_checks;
        self.variance_checks += other.variance_checks;
        self.violations.extend(other.violations);
        self.min_relative_slack = match (self.min_relative_slack, other.min_relative_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.notices.extend(other.notices);
    }
}

/// Right-hand side of the variance inequality for `lemma` at one step.
///
/// `xi_sq = |xi_{w_0 -> w_t}|^2`, `bias_sq = |V_{t-1} - grad f(w_{t-1})|^2`,
/// `step_sq = alpha_{t-1}^2 |V_{t-1}|^2`.
pub fn lemma_bound(lemma: VarianceLemma, c: &LemmaConstants, out: &DirectionOutput, xi_sq: f64, bias_sq: f64, step_sq: f64) -> f64 {
    let k = c.k();
    let n2 = c.n_grad * c.n_grad;
    match lemma {
        VarianceLemma::Hybrid => {
            let (phi, psi) = (out.phi, out.psi);
            4.0 * k * phi * phi * xi_sq + 4.0 * n2 * ((1.0 - phi).powi(2) + psi * psi) + psi * psi * bias_sq
        }
        VarianceLemma::SvrgSrg => {
            let pt = out.psi_tilde();
            let ph = 1.0 - pt;
            4.0 * k * ph * ph * xi_sq + 8.0 * n2 * pt * pt + pt * pt * bias_sq
        }
        VarianceLemma::ThreeTerm => {
            let (phi, psi) = (out.phi, out.psi);
            6.0 * phi * phi * k * xi_sq + 6.0 * psi * psi * k * step_sq + 12.0 * (1.0 - phi - psi).powi(2) * n2 + psi * psi * bias_sq
        }
    }
}

fn check_step(
    p: &dyn FiniteSumProblem,
    b: usize,
    mu: f64,
    lemma: VarianceLemma,
    c: &LemmaConstants,
    v: &StepView<'_>,
    report: &mut MonitorReport,
) -> Result<()> {
    let man = p.manifold();
    report.steps += 1;
    let (Some(state), Some(out), Some(_)) = (v.state, v.output, v.batch) else {
        // t = 0: V_0 is the full gradient, so its conditional variance is zero.
        let g = p.full_grad(v.point)?;
        let lhs = man.norm_sq(&v.direction.sub(&g)?)?;
        report.variance_checks += 1;
        report.record(v.s, v.t, lemma.into(), lhs, 0.0);
        return Ok(());
    };
    let g_t = p.full_grad(v.point)?;
    let g_prev = p.full_grad(&state.prev_point)?;

    if out.clip.is_some() {
        let carried = carried_bias(p, v.point, state, &g_prev)?;
        let lhs = out.psi_tilde() * man.inner(&carried, &g_t)?;
        let bound = mu * man.norm_sq(&g_t)?;
        report.clip_checks += 1;
        report.record(v.s, v.t, CheckKind::Clip, lhs, bound);
        report.record(v.s, v.t, CheckKind::Clip, -lhs, bound);
    }

    let devs = map_batches(p.n(), b, |batch| {
        let d = direction_with_weights(p, batch, v.point, state, out.weights)?;
        man.norm_sq(&d.sub(&g_t)?)
    })?;
    let lhs = devs.iter().sum::<f64>() / devs.len() as f64;

    let xi_sq = if state.snapshot.bitwise_eq(v.point) {
        0.0
    } else {
        match man.inverse_retract(&state.snapshot, v.point) {
            Ok(xi) => man.norm_sq(&xi)?,
            Err(e) => {
                report.notices.push(format!("(s={}, t={}): variance check skipped: {e}", v.s, v.t));
                return Ok(());
            }
        }
    };
    let bias_sq = man.norm_sq(&state.prev_direction.sub(&g_prev)?)?;
    let step_sq = state.prev_step.powi(2) * man.norm_sq(&state.prev_direction)?;
    let rhs = lemma_bound(lemma, c, out, xi_sq, bias_sq, step_sq);
    report.variance_checks += 1;
    report.record(v.s, v.t, lemma.into(), lhs, rhs);
    Ok(())
}

/// Replays `config` and checks the clip bound (where the strategy clips) and
/// the strategy's variance lemma at every step.
///
/// Returns a report with a notice and no checks when `C(n, b)` exceeds the
/// enumeration limit.
pub fn lemma_monitor(p: &dyn FiniteSumProblem, config: &RunConfig, trace: &RunTrace, constants: &LemmaConstants) -> Result<MonitorReport> {
    let mut report = MonitorReport::default();
    let count = binomial(p.n(), config.b);
    if count > MAX_ENUMERATION as u128 {
        report.notices.push(format!(
            "skipped: C({}, {}) = {count} batches exceeds the enumeration limit {MAX_ENUMERATION}",
            p.n(),
            config.b
        ));
        return Ok(report);
    }
    let lemma = config.direction.variance_lemma();
    let mu = config.schedule.mu();
    let (_, replayed) = run_observed(p, config, &mut |v: &StepView<'_>| {
        check_step(p, config.b, mu, lemma, constants, v, &mut report)
    })?;
    if !replayed.same_path(trace) {
        return Err(Error::contract("replay does not reproduce the given trace"));
    }
    Ok(report)
}

/// A random inner-loop state: snapshot, a previous iterate near it and a
/// previous direction; returns the state and the current iterate.
pub fn random_state(p: &dyn FiniteSumProblem, rng: &mut dyn RngCore) -> Result<(HybridState, Point)> {
    let m = p.manifold();
    let snapshot = m.random_point(rng);
    let r: f64 = rng.random_range(0.0..0.3);
    let prev_point = m.retract(&snapshot, &m.random_tangent(&snapshot, rng)?.scale(r))?;
    let v: f64 = rng.random_range(0.2..2.0);
    let prev_direction: Tangent = m.random_tangent(&prev_point, rng)?.scale(v);
    let state = HybridState {
        snapshot_full_grad: p.full_grad(&snapshot)?,
        snapshot,
        prev_point,
        prev_direction,
        prev_step: rng.random_range(0.01..0.2),
    };
    let point = m.retract(&state.prev_point, &state.prev_displacement())?;
    Ok((state, point))
}

/// Worst relative residual of the conditional-mean identity over `trials`
/// random states with random `phi`, `psi_tilde`.
pub fn expectation_identity(p: &dyn FiniteSumProblem, b: usize, trials: usize, rng: &mut dyn RngCore) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (state, point) = random_state(p, rng)?;
        let phi: f64 = rng.random_range(0.0..1.0);
        let psi: f64 = rng.random_range(0.0..(1.0 - phi));
        let psi_tilde: f64 = rng.random_range(0.0..=psi);
        let c = HybridCoeffs { phi, psi, mu: 0.5, psi_tilde };
        let lhs = expectation_oracle(p, &point, &state, &c, b)?;
        let rhs = lemma_expectation_rhs(p, &point, &state, psi_tilde)?;
        worst = worst.max(max_abs(&(lhs.coords() - rhs.coords())) / (1.0 + max_abs(rhs.coords())));
    }
    Ok(worst)
}
