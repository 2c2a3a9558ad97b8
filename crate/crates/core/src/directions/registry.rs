//! Direction strategies behind a common trait, selectable by name.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{carried_bias, clip, combine, svrg_from, srg_from, ClipOutcome, HybridCoeffs, HybridState, Pieces};
use crate::error::{Error, Result};
use crate::manifold::{Point, Tangent};
use crate::problems::{BatchIndex, FiniteSumProblem};

/// Everything a strategy may look at when forming `V_t` for `t >= 1`.
pub struct StepContext<'a> {
    pub problem: &'a dyn FiniteSumProblem,
    pub point: &'a Point,
    pub state: &'a HybridState,
    pub batch: &'a BatchIndex,
    pub phi: f64,
    pub psi: f64,
    pub mu: f64,
}

/// Weights on the SVRG, SRG and plain batch-gradient terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub svrg: f64,
    pub srg: f64,
    pub sgd: f64,
}

/// Which variance inequality the strategy's direction is tracked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceLemma {
    /// Two-block bound with unclipped `psi` for the adaptive hybrid.
    Hybrid,
    /// `phi = 1 - psi_tilde`, the SVRG+SRG special case.
    SvrgSrg,
    /// Three-block bound for time-varying coefficients.
    ThreeTerm,
}

#[derive(Clone, Debug)]
pub struct DirectionOutput {
    pub direction: Tangent,
    pub weights: Weights,
    /// Nominal coefficients the bound is stated in (`psi` before clipping).
    pub phi: f64,
    pub psi: f64,
    pub clip: Option<ClipOutcome>,
}

impl DirectionOutput {
    /// Weight actually placed on the recursive term.
    pub fn psi_tilde(&self) -> f64 {
        self.weights.srg
    }

    pub fn clip_active(&self) -> bool {
        self.clip.is_some_and(|c| c.active)
    }
}

/// A stochastic direction rule for the inner loop.
pub trait Direction: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Component-gradient evaluations consumed by one inner step (`t >= 1`).
    fn step_cost(&self, n: usize, b: usize) -> u64;

    fn variance_lemma(&self) -> VarianceLemma;

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput>;
}

/// Direction for fixed weights over a given batch, used by replays and oracles.
pub fn direction_with_weights(
    p: &dyn FiniteSumProblem,
    batch: &BatchIndex,
    w_t: &Point,
    state: &HybridState,
    w: Weights,
) -> Result<Tangent> {
    let pieces = Pieces::compute(p, batch, w_t, state)?;
    let svrg = svrg_from(p, w_t, state, &pieces.at_current, &pieces.at_snapshot)?;
    let srg = srg_from(p, w_t, state, &pieces.at_current, &pieces.at_prev)?;
    Ok(combine(w_t, &[(w.svrg, &svrg), (w.srg, &srg), (w.sgd, &pieces.at_current)]))
}

fn clip_at(ctx: &StepContext<'_>) -> Result<ClipOutcome> {
    let p = ctx.problem;
    let prev_full = p.full_grad(&ctx.state.prev_point)?;
    let g_t = p.full_grad(ctx.point)?;
    let carried = carried_bias(p, ctx.point, ctx.state, &prev_full)?;
    let m = p.manifold();
    clip(ctx.psi, ctx.mu, &g_t, &carried, |a, b| m.inner(a, b))
}

fn three_terms(ctx: &StepContext<'_>, w: Weights, clip: Option<ClipOutcome>) -> Result<DirectionOutput> {
    let (p, w_t, state) = (ctx.problem, ctx.point, ctx.state);
    let pieces = Pieces::compute(p, ctx.batch, w_t, state)?;
    let svrg = svrg_from(p, w_t, state, &pieces.at_current, &pieces.at_snapshot)?;
    let srg = srg_from(p, w_t, state, &pieces.at_current, &pieces.at_prev)?;
    let direction = combine(w_t, &[(w.svrg, &svrg), (w.srg, &srg), (w.sgd, &pieces.at_current)]);
    Ok(DirectionOutput { direction, weights: w, phi: ctx.phi, psi: ctx.psi, clip })
}

/// Adaptive hybrid with `psi` clipped against the full gradient.
#[derive(Debug, Default)]
pub struct Adaptive;

impl Direction for Adaptive {
    fn name(&self) -> &'static str {
        "adaptive"
    }

    fn step_cost(&self, n: usize, b: usize) -> u64 {
        (2 * n + 3 * b) as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::Hybrid
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        HybridCoeffs::unclipped(ctx.phi, ctx.psi, ctx.mu).validate()?;
        let c = clip_at(ctx)?;
        let w = Weights {
            svrg: ctx.phi,
            srg: c.psi_tilde,
            sgd: 1.0 - (ctx.phi + c.psi_tilde),
        };
        three_terms(ctx, w, Some(c))
    }
}

/// Time-varying hybrid with the scheduled `psi`, no full gradients inside the loop.
#[derive(Debug, Default)]
pub struct TimeVarying;

impl Direction for TimeVarying {
    fn name(&self) -> &'static str {
        "timevarying"
    }

    fn step_cost(&self, _n: usize, b: usize) -> u64 {
        (3 * b) as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::ThreeTerm
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        HybridCoeffs::unclipped(ctx.phi, ctx.psi, ctx.mu).validate()?;
        let w = Weights {
            svrg: ctx.phi,
            srg: ctx.psi,
            sgd: 1.0 - (ctx.phi + ctx.psi),
        };
        three_terms(ctx, w, None)
    }
}

/// The adaptive rule with `phi = 1 - psi_tilde`: no plain batch-gradient term.
#[derive(Debug, Default)]
pub struct SvrgSrg;

impl Direction for SvrgSrg {
    fn name(&self) -> &'static str {
        "svrg_srg"
    }

    fn step_cost(&self, n: usize, b: usize) -> u64 {
        (2 * n + 3 * b) as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::SvrgSrg
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        if !(0.0..=1.0).contains(&ctx.psi) {
            return Err(Error::contract(format!("psi must lie in [0, 1], got {}", ctx.psi)));
        }
        let c = clip_at(ctx)?;
        let w = Weights {
            svrg: 1.0 - c.psi_tilde,
            srg: c.psi_tilde,
            sgd: 0.0,
        };
        three_terms(ctx, w, Some(c))
    }
}

/// Riemannian SVRG; ignores the scheduled coefficients.
#[derive(Debug, Default)]
pub struct Svrg;

impl Direction for Svrg {
    fn name(&self) -> &'static str {
        "svrg"
    }

    fn step_cost(&self, _n: usize, b: usize) -> u64 {
        (2 * b) as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::Hybrid
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        let (p, w_t, state) = (ctx.problem, ctx.point, ctx.state);
        let g_t = p.batch_grad(ctx.batch, w_t)?;
        let g_0 = p.batch_grad(ctx.batch, &state.snapshot)?;
        let direction = svrg_from(p, w_t, state, &g_t, &g_0)?;
        let weights = Weights { svrg: 1.0, srg: 0.0, sgd: 0.0 };
        Ok(DirectionOutput { direction, weights, phi: 1.0, psi: 0.0, clip: None })
    }
}

/// Riemannian recursive (SARAH-style) gradient; ignores the scheduled coefficients.
#[derive(Debug, Default)]
pub struct Srg;

impl Direction for Srg {
    fn name(&self) -> &'static str {
        "srg"
    }

    fn step_cost(&self, _n: usize, b: usize) -> u64 {
        (2 * b) as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::ThreeTerm
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        let (p, w_t, state) = (ctx.problem, ctx.point, ctx.state);
        let g_t = p.batch_grad(ctx.batch, w_t)?;
        let g_prev = p.batch_grad(ctx.batch, &state.prev_point)?;
        let direction = srg_from(p, w_t, state, &g_t, &g_prev)?;
        let weights = Weights { svrg: 0.0, srg: 1.0, sgd: 0.0 };
        Ok(DirectionOutput { direction, weights, phi: 0.0, psi: 1.0, clip: None })
    }
}

/// Plain mini-batch Riemannian gradient.
#[derive(Debug, Default)]
pub struct Sgd;

impl Direction for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn step_cost(&self, _n: usize, b: usize) -> u64 {
        b as u64
    }

    fn variance_lemma(&self) -> VarianceLemma {
        VarianceLemma::Hybrid
    }

    fn compute(&self, ctx: &StepContext<'_>) -> Result<DirectionOutput> {
        let direction = ctx.problem.batch_grad(ctx.batch, ctx.point)?;
        let weights = Weights { svrg: 0.0, srg: 0.0, sgd: 1.0 };
        Ok(DirectionOutput { direction, weights, phi: 0.0, psi: 0.0, clip: None })
    }
}

/// Name-keyed collection of direction strategies.
#[derive(Clone, Debug, Default)]
pub struct DirectionRegistry {
    entries: BTreeMap<String, Arc<dyn Direction>>,
}

impl DirectionRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the six shipped strategies.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Adaptive));
        r.register(Arc::new(TimeVarying));
        r.register(Arc::new(SvrgSrg));
        r.register(Arc::new(Svrg));
        r.register(Arc::new(Srg));
        r.register(Arc::new(Sgd));
        r
    }

    /// Adds `d` under its name, returning any strategy it replaced.
    pub fn register(&mut self, d: Arc<dyn Direction>) -> Option<Arc<dyn Direction>> {
        self.entries.insert(d.name().to_string(), d)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Direction>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::contract(format!(
                "unknown algorithm {name:?}; available: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
