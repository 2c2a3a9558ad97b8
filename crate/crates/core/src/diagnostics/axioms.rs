//! Retraction and transport axioms, checked numerically on random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::manifold::{Manifold, Point, Tangent};
use crate::problems::FiniteSumProblem;

#[derive(Clone, Debug, Serialize)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub manifold: String,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AxiomOptions {
    pub trials: usize,
    pub seed: u64,
    /// Norm of the random tangent vectors used for steps.
    pub scale: f64,
    /// Also require the optimizer's transport to preserve inner products.
    pub transport_isometry: bool,
}

impl Default for AxiomOptions {
    fn default() -> Self {
        AxiomOptions { trials: 50, seed: 0, scale: 0.5, transport_isometry: false }
    }
}

/// Largest entry of `a - b`, relative to `1 + |b|`.
fn rel(a: &Tangent, b: &Tangent) -> f64 {
    max_abs(&(a.coords() - b.coords())) / (1.0 + max_abs(b.coords()))
}

fn bits_differ(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    if a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()) {
        0.0
    } else {
        max_abs(&(a - b)).max(f64::MIN_POSITIVE)
    }
}

struct Worst {
    checks: Vec<AxiomCheck>,
}

impl Worst {
    fn entry(&mut self, name: &'static str, tol: f64) -> usize {
        self.checks.push(AxiomCheck { name, worst: 0.0, tol, pass: true });
        self.checks.len() - 1
    }

    fn update(&mut self, k: usize, v: f64) {
        let c = &mut self.checks[k];
        if !(v <= c.worst) {
            c.worst = v;
        }
        c.pass = c.worst <= c.tol;
    }
}

pub fn manifold_axioms(m: &dyn Manifold, opts: &AxiomOptions) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = Worst { checks: Vec::new() };
    let zero_retract = w.entry("retraction_at_zero", 0.0);
    let tangency = w.entry("retraction_fd_tangency", 1e-6);
    let zero_transport = w.entry("transport_at_zero", 0.0);
    let linear = w.entry("transport_linearity", 1e-12);
    let tangent_out = w.entry("transport_output_tangent", 0.0);
    let isometry = w.entry("parallel_transport_isometry", 1e-10);
    let exp_log = w.entry("exp_log_round_trip", 1e-9);
    let retract_inv = w.entry("retract_inverse_round_trip", 1e-9);
    let transport_iso = opts.transport_isometry.then(|| w.entry("transport_isometry", 1e-10));

    for _ in 0..opts.trials {
        let x = m.random_point(&mut rng);
        let xi = m.random_tangent(&x, &mut rng)?.scale(opts.scale);
        let z1 = m.random_tangent(&x, &mut rng)?;
        let z2 = m.random_tangent(&x, &mut rng)?;
        let zero = Tangent::zero(&x);

        w.update(zero_retract, bits_differ(m.retract(&x, &zero)?.coords(), x.coords()));

        let h = 1e-5;
        let plus = m.retract(&x, &xi.scale(h))?;
        let minus = m.retract(&x, &xi.scale(-h))?;
        let fd = (plus.coords() - minus.coords()) / (2.0 * h);
        w.update(tangency, max_abs(&(fd - xi.coords())) / (1.0 + max_abs(xi.coords())));

        w.update(zero_transport, bits_differ(m.transport(&x, &zero, &z1)?.coords(), z1.coords()));

        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let combo = m.transport(&x, &xi, &z1.scale(a).add(&z2.scale(b))?)?;
        let t1 = m.transport(&x, &xi, &z1)?;
        let t2 = m.transport(&x, &xi, &z2)?;
        w.update(linear, rel(&combo, &t1.scale(a).add(&t2.scale(b))?));
        w.update(tangent_out, if m.check_tangent(&t1).is_ok() { 0.0 } else { 1.0 });

        let p1 = m.parallel_transport(&x, &xi, &z1)?;
        let p2 = m.parallel_transport(&x, &xi, &z2)?;
        let before = m.inner(&z1, &z2)?;
        w.update(isometry, (m.inner(&p1, &p2)? - before).abs() / (1.0 + before.abs()));
        if let Some(k) = transport_iso {
            w.update(k, (m.inner(&t1, &t2)? - before).abs() / (1.0 + before.abs()));
        }

        let y = m.exp_map(&x, &xi)?;
        w.update(exp_log, rel(&m.log_map(&x, &y)?, &xi));
        let r = m.retract(&x, &xi)?;
        w.update(retract_inv, rel(&m.inverse_retract(&x, &r)?, &xi));
    }
    Ok(AxiomReport { manifold: m.id().to_string(), checks: w.checks })
}

/// Worst relative error of the central difference of `f` along random unit
/// tangents against `<grad f(w), xi>`.
pub fn gradient_fd_check(p: &dyn FiniteSumProblem, w: &Point, trials: usize, h: f64, seed: u64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::contract(format!("finite-difference step h={h} outside [1e-7, 1e-3]")));
    }
    let m = p.manifold();
    let g = p.full_grad(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let xi = m.random_tangent(w, &mut rng)?;
        let fp = p.cost(&m.retract(w, &xi.scale(h))?)?;
        let fm = p.cost(&m.retract(w, &xi.scale(-h))?)?;
        let inner = m.inner(&g, &xi)?;
        worst = worst.max(((fp - fm) / (2.0 * h) - inner).abs() / (1.0 + inner.abs()));
    }
    Ok(worst)
}
