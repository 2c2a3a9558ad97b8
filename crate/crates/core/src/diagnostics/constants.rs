//! Empirical suprema of the assumption ratios over a metric ball.
//!
//! Sample `k` draws from its own ChaCha8 stream, so adding samples never
//! changes earlier ones and every estimate is nondecreasing in the count.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldId, Point};
use crate::problems::FiniteSumProblem;

/// Multiplier applied to every empirical supremum.
pub const SAFETY: f64 = 1.1;
pub const MIN_VALID_SAMPLES: usize = 10;

/// Ratios below this denominator are skipped.
const TINY: f64 = 1e-12;

/// Points `x` are drawn within `radius` of `center`; pairs `y = R_x(xi)` use
/// `step_radius / 10 <= |xi| <= step_radius`.
#[derive(Clone, Debug)]
pub struct Region {
    pub center: Point,
    pub radius: f64,
    pub step_radius: f64,
}

impl Region {
    pub fn new(center: Point, radius: f64, step_radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && step_radius > 0.0) {
            return Err(Error::contract(format!("need radius >= 0 and step_radius > 0, got {radius}, {step_radius}")));
        }
        if matches!(center.id(), ManifoldId::Sphere { .. }) && radius >= FRAC_PI_2 {
            return Err(Error::contract(format!("sphere region radius must be below pi/2, got {radius}")));
        }
        Ok(Region { center, radius, step_radius })
    }

    /// Ball around the problem's known optimum.
    pub fn around_optimum(p: &dyn FiniteSumProblem, radius: f64, step_radius: f64) -> Result<Self> {
        let opt = p
            .known_optimum()
            .ok_or_else(|| Error::contract(format!("problem {} has no known optimum", p.name())))?;
        Region::new(opt.point.clone(), radius, step_radius)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionSummary {
    pub center: Vec<f64>,
    pub radius: f64,
    pub step_radius: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    /// Reported constant (supremum with the safety factor).
    pub value: f64,
    /// Raw supremum of the defining ratio.
    pub sup: f64,
    /// Sample index attaining the supremum.
    pub argmax: Option<usize>,
    pub valid: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantEstimates {
    #[serde(rename = "N")]
    pub n_grad: Estimate,
    #[serde(rename = "L")]
    pub l: Estimate,
    #[serde(rename = "M")]
    pub m: Estimate,
    pub theta: Estimate,
    #[serde(rename = "C1")]
    pub c1: Estimate,
    #[serde(rename = "C2")]
    pub c2: Estimate,
    pub region: RegionSummary,
}

impl ConstantEstimates {
    /// `M^2 + theta^2 N^2`, the combination every step bound uses.
    pub fn msq_theta_nsq(&self) -> f64 {
        self.m.value.powi(2) + self.theta.value.powi(2) * self.n_grad.value.powi(2)
    }
}

#[derive(Default)]
struct Ratios {
    n: Option<f64>,
    l: Option<f64>,
    m_sq: Option<f64>,
    theta: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
}

fn sample(p: &dyn FiniteSumProblem, region: &Region, seed: u64, k: usize) -> Ratios {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    sample_with(p, region, &mut rng).unwrap_or_default()
}

fn sample_with(p: &dyn FiniteSumProblem, region: &Region, rng: &mut ChaCha8Rng) -> Result<Ratios> {
    let man = p.manifold();
    let c = &region.center;
    let dir = man.random_tangent(c, rng)?;
    let x = man.exp_map(c, &dir.scale(region.radius * rng.random::<f64>()))?;
    let xi = man.random_tangent(&x, rng)?.scale(region.step_radius * rng.random_range(0.1..=1.0));
    let eta = man.random_tangent(&x, rng)?;
    let y = man.retract(&x, &xi)?;
    let mut out = Ratios::default();

    let mut n_sup: f64 = 0.0;
    for w in [&x, &y] {
        for i in 0..p.n() {
            n_sup = n_sup.max(man.norm(&p.component_rgrad(i, w)?)?);
        }
    }
    out.n = Some(n_sup);

    let xi_sq = man.norm_sq(&xi)?;
    if xi_sq <= TINY * TINY {
        return Ok(out);
    }
    let xi_norm = xi_sq.sqrt();
    let g = p.full_grad(&x)?;
    let lin = p.cost(&y)? - p.cost(&x)? - man.inner(&g, &xi)?;
    out.l = Some(2.0 * lin / xi_sq);

    let mut acc = 0.0;
    for i in 0..p.n() {
        let gx = man.parallel_transport(&x, &xi, &p.component_rgrad(i, &x)?)?;
        let gy = p.component_rgrad(i, &y)?;
        let diff = gy.coords() - gx.coords();
        acc += man.norm_sq(&crate::manifold::Tangent::new_unchecked(y.clone(), diff))?;
    }
    out.m_sq = Some(acc / p.n() as f64 / xi_sq);

    let gamma = man.parallel_transport(&x, &xi, &eta)?;
    let tau = man.transport(&x, &xi, &eta)?.reanchor(&gamma.anchor().clone())?;
    out.theta = Some(man.norm(&gamma.sub(&tau)?)? / (xi_norm * man.norm(&eta)?));

    let d = man.dist(&x, &y)?;
    if d > TINY {
        out.c1 = Some(xi_norm / d);
        out.c2 = Some(d / xi_norm);
    }
    Ok(out)
}

fn reduce(vals: impl Iterator<Item = Option<f64>>) -> (f64, Option<usize>, usize) {
    let mut sup = f64::NEG_INFINITY;
    let mut arg = None;
    let mut valid = 0;
    for (k, v) in vals.enumerate() {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            valid += 1;
            if v > sup {
                sup = v;
                arg = Some(k);
            }
        }
    }
    (sup, arg, valid)
}

fn estimate(name: &str, vals: impl Iterator<Item = Option<f64>>, report: impl Fn(f64) -> f64) -> Result<Estimate> {
    let (sup, argmax, valid) = reduce(vals);
    if valid < MIN_VALID_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{name}: {valid} valid samples, need at least {MIN_VALID_SAMPLES}"
        )));
    }
    Ok(Estimate { value: report(sup), sup, argmax, valid })
}

/// Estimates `N, L, M, theta, C1, C2` from `samples` draws in `region`.
///
/// `C1` and `C2` are ratios that equal one in flat space, so the safety factor
/// inflates only their excess over one.
pub fn estimate_constants(p: &dyn FiniteSumProblem, region: &Region, samples: usize, seed: u64) -> Result<ConstantEstimates> {
    crate::manifold::ensure_on(p.manifold().id(), &region.center)?;
    let draws: Vec<Ratios> = (0..samples).into_par_iter().map(|k| sample(p, region, seed, k)).collect();
    let scaled = |s: f64| SAFETY * s.max(0.0);
    let excess = |s: f64| 1.0 + SAFETY * (s - 1.0).max(0.0);
    Ok(ConstantEstimates {
        n_grad: estimate("N", draws.iter().map(|r| r.n), scaled)?,
        l: estimate("L", draws.iter().map(|r| r.l), scaled)?,
        m: estimate("M", draws.iter().map(|r| r.m_sq), |s| SAFETY * s.max(0.0).sqrt())?,
        theta: estimate("theta", draws.iter().map(|r| r.theta), scaled)?,
        c1: estimate("C1", draws.iter().map(|r| r.c1), excess)?,
        c2: estimate("C2", draws.iter().map(|r| r.c2), excess)?,
        region: RegionSummary {
            center: region.center.coords().iter().copied().collect(),
            radius: region.radius,
            step_radius: region.step_radius,
            samples,
        },
    })
}
