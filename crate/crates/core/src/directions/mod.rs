//! Stochastic descent directions for the inner loop.
//!
//! Every estimator is built from three mini-batch gradients at the current
//! iterate `w_t`, the epoch snapshot `w_0` and the previous iterate `w_{t-1}`:
//!
//! * SVRG term: `g_I(w_t) - T_{w_0 -> w_t}(g_I(w_0) - grad f(w_0))`
//! * SRG term:  `g_I(w_t) - T_{w_{t-1} -> w_t}(g_I(w_{t-1}) - V_{t-1})`
//! * SGD term:  `g_I(w_t)`
//!
//! The hybrid direction is `phi * svrg + psi * srg + (1 - phi - psi) * sgd`,
//! where the adaptive variant replaces `psi` by a clipped value.

mod enumerate;
mod registry;

pub use enumerate::{
    binomial, enumerate_batches, expectation_oracle, lemma_expectation_rhs, map_batches, mean_over_batches, MAX_ENUMERATION,
};
pub use registry::{
    direction_with_weights, Adaptive, Direction, DirectionOutput, DirectionRegistry, Sgd, Srg, StepContext, Svrg, SvrgSrg,
    TimeVarying, VarianceLemma, Weights,
};

use crate::error::{Error, Result};
use crate::manifold::{Point, Tangent};
use crate::problems::{BatchIndex, FiniteSumProblem};

/// Relative threshold below which the clip inner product counts as zero.
pub const CLIP_ZERO_TOL: f64 = 1e-14;

/// Inner-loop state carried from one step to the next.
#[derive(Clone, Debug)]
pub struct HybridState {
    pub snapshot: Point,
    pub snapshot_full_grad: Tangent,
    pub prev_point: Point,
    pub prev_direction: Tangent,
    /// Step taken from `prev_point` along `-prev_direction` to reach the current iterate.
    pub prev_step: f64,
}

impl HybridState {
    /// Transport direction from `prev_point` to the current iterate.
    pub fn prev_displacement(&self) -> Tangent {
        self.prev_direction.scale(-self.prev_step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridCoeffs {
    pub phi: f64,
    pub psi: f64,
    pub mu: f64,
    pub psi_tilde: f64,
}

impl HybridCoeffs {
    /// Coefficients with `psi_tilde = psi` (no clipping).
    pub fn unclipped(phi: f64, psi: f64, mu: f64) -> Self {
        HybridCoeffs { phi, psi, mu, psi_tilde: psi }
    }

    pub fn validate(&self) -> Result<()> {
        let HybridCoeffs { phi, psi, mu, psi_tilde } = *self;
        if !(phi >= 0.0 && psi >= 0.0 && phi + psi <= 1.0 + 1e-12) {
            return Err(Error::contract(format!(
                "need phi, psi >= 0 and phi + psi <= 1, got phi={phi}, psi={psi}"
            )));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::contract(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(psi_tilde >= 0.0 && psi_tilde <= psi) {
            return Err(Error::contract(format!(
                "need 0 <= psi_tilde <= psi, got psi_tilde={psi_tilde}, psi={psi}"
            )));
        }
        Ok(())
    }
}

/// What the clipping rule decided at one inner step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipOutcome {
    pub psi_tilde: f64,
    /// `<carried, grad f(w_t)>`
    pub inner: f64,
    pub grad_norm_sq: f64,
    pub active: bool,
}

/// Batch gradients shared by all estimator terms.
pub(crate) struct Pieces {
    pub at_current: Tangent,
    pub at_snapshot: Tangent,
    pub at_prev: Tangent,
}

impl Pieces {
    pub(crate) fn compute(p: &dyn FiniteSumProblem, batch: &BatchIndex, w_t: &Point, state: &HybridState) -> Result<Self> {
        Ok(Pieces {
            at_current: p.batch_grad(batch, w_t)?,
            at_snapshot: p.batch_grad(batch, &state.snapshot)?,
            at_prev: p.batch_grad(batch, &state.prev_point)?,
        })
    }
}

pub(crate) fn svrg_from(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, g_t: &Tangent, g_0: &Tangent) -> Result<Tangent> {
    let correction = g_0.sub(&state.snapshot_full_grad)?;
    let carried = p.manifold().transport_to(&state.snapshot, w_t, &correction)?;
    Ok(Tangent::new_unchecked(w_t.clone(), g_t.coords() - carried.coords()))
}

pub(crate) fn srg_from(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, g_t: &Tangent, g_prev: &Tangent) -> Result<Tangent> {
    let m = p.manifold();
    let eta = state.prev_displacement();
    let tg = m.transport(&state.prev_point, &eta, g_prev)?.reanchor(w_t)?;
    let tv = m.transport(&state.prev_point, &eta, &state.prev_direction)?.reanchor(w_t)?;
    // (g_t - T g_prev) + T V: reduces to the flat recursion (a - b) + c.
    let diff = g_t.coords() - tg.coords();
    Ok(Tangent::new_unchecked(w_t.clone(), diff + tv.coords()))
}

pub fn svrg_term(p: &dyn FiniteSumProblem, batch: &BatchIndex, w_t: &Point, state: &HybridState) -> Result<Tangent> {
    let g_t = p.batch_grad(batch, w_t)?;
    let g_0 = p.batch_grad(batch, &state.snapshot)?;
    svrg_from(p, w_t, state, &g_t, &g_0)
}

pub fn srg_term(p: &dyn FiniteSumProblem, batch: &BatchIndex, w_t: &Point, state: &HybridState) -> Result<Tangent> {
    let g_t = p.batch_grad(batch, w_t)?;
    let g_prev = p.batch_grad(batch, &state.prev_point)?;
    srg_from(p, w_t, state, &g_t, &g_prev)
}

/// `T_{w_{t-1} -> w_t}(V_{t-1} - grad f(w_{t-1}))`, the bias carried into step `t`.
pub fn carried_bias(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, prev_full_grad: &Tangent) -> Result<Tangent> {
    let diff = state.prev_direction.sub(prev_full_grad)?;
    p.manifold()
        .transport(&state.prev_point, &state.prev_displacement(), &diff)?
        .reanchor(w_t)
}

/// The clipping rule with its diagnostics. `g_t` must be the full gradient at `w_t`.
pub fn clip(psi: f64, mu: f64, g_t: &Tangent, carried: &Tangent, inner_fn: impl Fn(&Tangent, &Tangent) -> Result<f64>) -> Result<ClipOutcome> {
    if !(psi >= 0.0) {
        return Err(Error::contract(format!("psi must be nonnegative, got {psi}")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::contract(format!("mu must lie in (0, 1), got {mu}")));
    }
    let inner = inner_fn(carried, g_t)?;
    let gsq = inner_fn(g_t, g_t)?;
    let csq = inner_fn(carried, carried)?;
    let zero = CLIP_ZERO_TOL * csq.max(0.0).sqrt() * gsq.max(0.0).sqrt();
    let psi_tilde = if inner.abs() > zero {
        psi.min(mu * gsq / inner.abs())
    } else {
        psi
    };
    Ok(ClipOutcome {
        psi_tilde,
        inner,
        grad_norm_sq: gsq,
        active: psi_tilde < psi,
    })
}

pub fn clip_psi(p: &dyn FiniteSumProblem, psi: f64, mu: f64, g_t: &Tangent, carried: &Tangent) -> Result<f64> {
    let m = p.manifold();
    Ok(clip(psi, mu, g_t, carried, |a, b| m.inner(a, b))?.psi_tilde)
}

/// `sum_k c_k v_k` in order, skipping zero coefficients and copying unit ones,
/// so degenerate coefficient choices reproduce a single term bit for bit.
pub(crate) fn combine(anchor: &Point, terms: &[(f64, &Tangent)]) -> Tangent {
    let mut acc: Option<nalgebra::DMatrix<f64>> = None;
    for &(c, v) in terms {
        if c == 0.0 {
            continue;
        }
        let scaled = if c == 1.0 { v.coords().clone() } else { v.coords() * c };
        acc = Some(match acc {
            None => scaled,
            Some(a) => a + scaled,
        });
    }
    let coords = acc.unwrap_or_else(|| anchor.coords() * 0.0);
    Tangent::new_unchecked(anchor.clone(), coords)
}

/// `phi * svrg + psi_eff * srg + (1 - phi - psi_eff) * g_I(w_t)`.
pub(crate) fn hybrid_from(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, pieces: &Pieces, phi: f64, psi_eff: f64) -> Result<Tangent> {
    let svrg = svrg_from(p, w_t, state, &pieces.at_current, &pieces.at_snapshot)?;
    let srg = srg_from(p, w_t, state, &pieces.at_current, &pieces.at_prev)?;
    // 1 - (phi + psi) is exactly zero whenever the sum rounds to one.
    let rest = 1.0 - (phi + psi_eff);
    Ok(combine(w_t, &[(phi, &svrg), (psi_eff, &srg), (rest, &pieces.at_current)]))
}

/// Per-step output of a hybrid direction.
#[derive(Clone, Debug)]
pub struct HybridDiagnostics {
    pub psi_tilde: f64,
    pub clip_active: bool,
}

/// Algorithm-1 direction with an already clipped `coeffs.psi_tilde`.
pub fn hybrid_direction_adaptive(
    p: &dyn FiniteSumProblem,
    batch: &BatchIndex,
    w_t: &Point,
    state: &HybridState,
    coeffs: &HybridCoeffs,
) -> Result<(Tangent, HybridDiagnostics)> {
    coeffs.validate()?;
    let pieces = Pieces::compute(p, batch, w_t, state)?;
    let v = hybrid_from(p, w_t, state, &pieces, coeffs.phi, coeffs.psi_tilde)?;
    Ok((
        v,
        HybridDiagnostics {
            psi_tilde: coeffs.psi_tilde,
            clip_active: coeffs.psi_tilde < coeffs.psi,
        },
    ))
}

/// Algorithm-2 direction: the same combination with `psi` used unclipped.
pub fn hybrid_direction_timevarying(
    p: &dyn FiniteSumProblem,
    batch: &BatchIndex,
    w_t: &Point,
    state: &HybridState,
    coeffs: &HybridCoeffs,
) -> Result<Tangent> {
    HybridCoeffs::unclipped(coeffs.phi, coeffs.psi, coeffs.mu).validate()?;
    let pieces = Pieces::compute(p, batch, w_t, state)?;
    hybrid_from(p, w_t, state, &pieces, coeffs.phi, coeffs.psi)
}

/// `(1 - psi_tilde) * svrg + psi_tilde * srg`.
pub fn svrg_srg_direction(
    p: &dyn FiniteSumProblem,
    batch: &BatchIndex,
    w_t: &Point,
    state: &HybridState,
    psi_tilde: f64,
) -> Result<Tangent> {
    if !(0.0..=1.0).contains(&psi_tilde) {
        return Err(Error::contract(format!("psi_tilde must lie in [0, 1], got {psi_tilde}")));
    }
    let pieces = Pieces::compute(p, batch, w_t, state)?;
    svrg_srg_from(p, w_t, state, &pieces, psi_tilde)
}

pub(crate) fn svrg_srg_from(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, pieces: &Pieces, psi_tilde: f64) -> Result<Tangent> {
    let svrg = svrg_from(p, w_t, state, &pieces.at_current, &pieces.at_snapshot)?;
    let srg = srg_from(p, w_t, state, &pieces.at_current, &pieces.at_prev)?;
    Ok(combine(w_t, &[(1.0 - psi_tilde, &svrg), (psi_tilde, &srg)]))
}
