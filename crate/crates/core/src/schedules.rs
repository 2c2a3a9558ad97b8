//! Step sizes and hybrid coefficients `(phi, psi)` for the double loop.
//!
//! Indices follow the optimizer: `s` counts outer epochs from 1, `t` counts
//! inner steps from 0 to `m - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for comparisons against closed-form boundaries such as
/// `P = (gamma Q - 1) / (gamma - 1)`.
const BOUNDARY_TOL: f64 = 1e-12;

/// A per-epoch parameter sequence evaluated at `s >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sequence {
    Constant { value: f64 },
    /// `1 - scale / (s + 1)`
    OneMinusInv {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale / (s + 1)`
    Inv {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale / (s + 1)^2`
    InvSq {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Explicit values for `s = 1, 2, ...`.
    List { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl Sequence {
    pub fn at(&self, s: usize) -> Result<f64> {
        let x = (s + 1) as f64;
        Ok(match self {
            Sequence::Constant { value } => *value,
            Sequence::OneMinusInv { scale } => 1.0 - scale / x,
            Sequence::Inv { scale } => scale / x,
            Sequence::InvSq { scale } => scale / (x * x),
            Sequence::List { values } => *values.get(s.wrapping_sub(1)).ok_or_else(|| {
                Error::Schedule(format!("parameter list has {} entries, epoch {s} requested", values.len()))
            })?,
        })
    }
}

/// Constants of the polynomially decaying schedule family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem5 {
    pub c_alpha: f64,
    pub c_psi: f64,
    pub c_phi: f64,
    pub p: f64,
    pub q: f64,
    pub rexp: f64,
    pub gamma: f64,
    pub beta: f64,
    /// `M^2 + theta^2 N^2`; enables the constraint on `C_psi` when present.
    #[serde(default)]
    pub msq_theta_nsq: Option<f64>,
    /// Smoothness constant; enables the `C_alpha <= 1/L` cap when present
    /// together with `msq_theta_nsq`.
    #[serde(default)]
    pub l: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// `alpha = 1 / (t + s + 1)` with per-epoch coefficients.
    DecayingDefault { phi: Sequence, psi: Sequence },
    /// `alpha = C_alpha` with per-epoch coefficients.
    Fixed { c_alpha: f64, phi: Sequence, psi: Sequence },
    Theorem5(Theorem5),
}

/// A validated schedule. Construction checks every coefficient over the
/// declared horizon, so evaluation never fails for `s <= horizon`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    mu: f64,
    m: usize,
    horizon: usize,
    kappa: u64,
}

pub fn kappa_of(gamma: f64) -> Result<u64> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::contract(format!("kappa needs gamma > 1, got {gamma}")));
    }
    const LIMIT: u64 = 1 << 32;
    for x in 1..LIMIT {
        let xf = x as f64;
        if xf.powf(gamma) >= (xf + 1.0) * (1.0 - BOUNDARY_TOL) {
            return Ok(x);
        }
    }
    Err(Error::contract(format!("kappa for gamma={gamma} exceeds {LIMIT}")))
}

pub fn theorem5_step(c_alpha: f64, p: f64, kappa: u64, t: usize, s: usize) -> f64 {
    let base = (t + s) as f64 + kappa as f64 + 2.0;
    base.powf(-p) * c_alpha
}

/// `(phi, psi) = ((t+s+kappa+1)^-rexp C_phi, 1 - (t+s+kappa+1)^-q C_psi)`.
pub fn theorem5_params(c_phi: f64, c_psi: f64, q: f64, rexp: f64, kappa: u64, t: usize, s: usize) -> (f64, f64) {
    let base = (t + s) as f64 + kappa as f64 + 1.0;
    (base.powf(-rexp) * c_phi, 1.0 - base.powf(-q) * c_psi)
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::contract(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Fixed-step bound `2 / (L + sqrt(L^2 + 4 nu))` with `nu = 4 m^3 (M^2+theta^2 N^2) C1^2 C2^2`.
pub fn step_bound_theorem3(l: f64, msq_theta_nsq: f64, c1: f64, c2: f64, m: usize) -> Result<f64> {
    let nu = 4.0 * (m as f64).powi(3) * msq_theta_nsq * c1 * c1 * c2 * c2;
    bound(l, nu, m, 2.0)
}

/// Half of [`step_bound_theorem3`]: `1 / (L + sqrt(L^2 + 4 nu))`.
pub fn step_bound_theorem4(l: f64, msq_theta_nsq: f64, c1: f64, c2: f64, m: usize) -> Result<f64> {
    let nu = 4.0 * (m as f64).powi(3) * msq_theta_nsq * c1 * c1 * c2 * c2;
    bound(l, nu, m, 1.0)
}

/// `2 / (L + sqrt(L^2 + 4 nu))` with `nu = 6 m^2 (M^2+theta^2 N^2) (C1^2 C2^2 m^2 + 1)`.
pub fn step_bound_theorem6(l: f64, msq_theta_nsq: f64, c1: f64, c2: f64, m: usize) -> Result<f64> {
    let mf = m as f64;
    let nu = 6.0 * mf * mf * msq_theta_nsq * (c1 * c1 * c2 * c2 * mf * mf + 1.0);
    bound(l, nu, m, 2.0)
}

fn bound(l: f64, nu: f64, m: usize, numerator: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::contract("inner loop length m must be at least 1"));
    }
    require_positive("L", l)?;
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::contract(format!("nu must be nonnegative and finite, got {nu}")));
    }
    Ok(numerator / (l + (l * l + 4.0 * nu).sqrt()))
}

/// `S = ceil(2 tau gamma / (m C_alpha))`, at least 1.
pub fn restart_epochs_theorem7(tau: f64, gamma: f64, m: usize, c_alpha: f64) -> Result<usize> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::contract(format!("tau must be nonnegative, got {tau}")));
    }
    if !(gamma > 1.0) {
        return Err(Error::contract(format!("gamma must exceed 1, got {gamma}")));
    }
    if m == 0 {
        return Err(Error::contract("inner loop length m must be at least 1"));
    }
    require_positive("C_alpha", c_alpha)?;
    let s = (2.0 * tau * gamma / (m as f64 * c_alpha)).ceil();
    Ok((s as usize).max(1))
}

impl Theorem5 {
    /// Checks the exponent and constant constraints; returns `kappa`.
    pub fn validate(&self) -> Result<u64> {
        let bad = |msg: String| Err(Error::Schedule(msg));
        let Theorem5 { c_alpha, c_psi, c_phi, p, q, rexp, gamma, beta, .. } = *self;
        for (name, v) in [("c_alpha", c_alpha), ("c_psi", c_psi), ("c_phi", c_phi)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
            return bad(format!("exponents need 0 < P, Q < 1, got P={p}, Q={q}"));
        }
        if !(gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {gamma}"));
        }
        let lower = ((gamma * q - 1.0) / (gamma - 1.0)).max(q / 2.0);
        if p < lower - BOUNDARY_TOL || p > q + BOUNDARY_TOL {
            return bad(format!(
                "need max((gamma Q - 1)/(gamma - 1), Q/2) <= P <= Q, got {lower} <= {p} <= {q}"
            ));
        }
        if rexp < q - BOUNDARY_TOL {
            return bad(format!("need Rexp >= Q, got Rexp={rexp}, Q={q}"));
        }
        if c_phi > c_psi {
            return bad(format!("need C_phi <= C_psi, got {c_phi} > {c_psi}"));
        }
        if !(beta > 4.0) {
            return bad(format!("beta must exceed 4, got {beta}"));
        }
        if let Some(k) = self.msq_theta_nsq {
            let need = p + 6.0 * beta * c_alpha * c_alpha * k;
            if c_psi < need {
                return bad(format!("need C_psi >= P + 6 beta C_alpha^2 (M^2+theta^2 N^2) = {need}, got {c_psi}"));
            }
            if let Some(l) = self.l {
                let cap = (1.0 / l).min(((1.0 - p) / (6.0 * beta * k)).sqrt());
                if c_alpha > cap {
                    return bad(format!("need C_alpha <= {cap}, got {c_alpha}"));
                }
            }
        }
        kappa_of(gamma).map_err(|e| Error::Schedule(e.to_string()))
    }
}

impl ScheduleSpec {
    /// Validates `kind` for epochs `1..=horizon` and inner steps `0..m`.
    pub fn new(kind: ScheduleKind, mu: f64, m: usize, horizon: usize) -> Result<Self> {
        if m == 0 || horizon == 0 {
            return Err(Error::Schedule(format!("need m >= 1 and horizon >= 1, got m={m}, horizon={horizon}")));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Schedule(format!("mu must lie in (0, 1), got {mu}")));
        }
        let kappa = match &kind {
            ScheduleKind::Theorem5(c) => c.validate()?,
            ScheduleKind::Fixed { c_alpha, .. } => {
                if !(*c_alpha > 0.0) || !c_alpha.is_finite() {
                    return Err(Error::Schedule(format!("c_alpha must be positive, got {c_alpha}")));
                }
                0
            }
            ScheduleKind::DecayingDefault { .. } => 0,
        };
        let spec = ScheduleSpec { kind, mu, m, horizon, kappa };
        for s in 1..=horizon {
            for t in 0..m {
                let (phi, psi) = spec.eval_params(t, s)?;
                if !(phi >= 0.0 && psi >= 0.0 && phi + psi <= 1.0 + BOUNDARY_TOL) {
                    return Err(Error::Schedule(format!(
                        "coefficients at (t={t}, s={s}) violate phi, psi >= 0, phi + psi <= 1: phi={phi}, psi={psi}"
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kappa(&self) -> u64 {
        self.kappa
    }

    pub fn step(&self, t: usize, s: usize) -> f64 {
        match &self.kind {
            ScheduleKind::DecayingDefault { .. } => 1.0 / (t + s + 1) as f64,
            ScheduleKind::Fixed { c_alpha, .. } => *c_alpha,
            ScheduleKind::Theorem5(c) => theorem5_step(c.c_alpha, c.p, self.kappa, t, s),
        }
    }

    fn eval_params(&self, t: usize, s: usize) -> Result<(f64, f64)> {
        match &self.kind {
            ScheduleKind::DecayingDefault { phi, psi } | ScheduleKind::Fixed { phi, psi, .. } => {
                Ok((phi.at(s)?, psi.at(s)?))
            }
            ScheduleKind::Theorem5(c) => Ok(theorem5_params(c.c_phi, c.c_psi, c.q, c.rexp, self.kappa, t, s)),
        }
    }

    /// `(phi, psi)` at `(t, s)`; `s` must lie within the validated horizon.
    pub fn params(&self, t: usize, s: usize) -> Result<(f64, f64)> {
        if s == 0 || s > self.horizon || t >= self.m {
            return Err(Error::contract(format!(
                "(t={t}, s={s}) outside the validated range t < {}, 1 <= s <= {}",
                self.m, self.horizon
            )));
        }
        self.eval_params(t, s)
    }

    /// Whether the step sizes satisfy `sum alpha = inf` and `sum alpha^2 < inf`,
    /// decided from the p-series exponent of the step.
    pub fn is_square_summable_divergent(&self) -> bool {
        match &self.kind {
            ScheduleKind::DecayingDefault { .. } => true,
            ScheduleKind::Fixed { .. } => false,
            ScheduleKind::Theorem5(c) => c.p <= 1.0 && 2.0 * c.p > 1.0,
        }
    }

    /// Whether every epoch has `phi + psi = 1` (the restart scheme's requirement).
    pub fn sums_to_one(&self) -> bool {
        (1..=self.horizon).all(|s| {
            (0..self.m).all(|t| match self.eval_params(t, s) {
                Ok((phi, psi)) => (phi + psi - 1.0).abs() <= BOUNDARY_TOL,
                Err(_) => false,
            })
        })
    }

    /// Same schedule validated over a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        ScheduleSpec::new(self.kind.clone(), self.mu, self.m, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t5(p: f64, q: f64, gamma: f64) -> Theorem5 {
        Theorem5 {
            c_alpha: 0.05,
            c_psi: 1.0,
            c_phi: 0.5,
            p,
            q,
            rexp: q,
            gamma,
            beta: 5.0,
            msq_theta_nsq: None,
            l: None,
        }
    }

    fn constant(v: f64) -> Sequence {
        Sequence::Constant { value: v }
    }

    #[test]
    fn decaying_default_first_step() {
        let s = ScheduleSpec::new(
            ScheduleKind::DecayingDefault { phi: constant(0.5), psi: constant(0.3) },
            0.5,
            3,
            10,
        )
        .unwrap();
        assert_eq!(s.step(0, 1), 0.5);
        assert!(s.is_square_summable_divergent());
    }

    #[test]
    fn fixed_step_is_constant() {
        let s = ScheduleSpec::new(
            ScheduleKind::Fixed {
                c_alpha: 0.1,
                phi: Sequence::OneMinusInv { scale: 1.0 },
                psi: Sequence::InvSq { scale: 1.0 },
            },
            0.5,
            4,
            20,
        )
        .unwrap();
        for sidx in 1..=20 {
            for t in 0..4 {
                assert_eq!(s.step(t, sidx), 0.1);
            }
        }
        assert_eq!(s.params(0, 1).unwrap(), (0.5, 0.25));
        assert!(!s.is_square_summable_divergent());
    }

    #[test]
    fn theorem5_formulas() {
        assert_eq!(theorem5_step(0.3, 0.0, 0, 4, 7), 0.3);
        let (_, psi) = theorem5_params(0.1, 1.0, 0.37, 0.5, 0, 0, 0);
        assert_eq!(psi, 0.0);
        let (_, psi) = theorem5_params(0.1, 0.5, 0.5, 0.5, 2, 0, 1);
        assert!((psi - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_of(2.0).unwrap(), 2);
        assert_eq!(kappa_of(1.5).unwrap(), 3);
        assert_eq!(kappa_of(3f64.log2()).unwrap(), 2);
        assert!(kappa_of(1.0).is_err());
        assert!(kappa_of(0.5).is_err());
        let k = kappa_of(1.01).unwrap();
        let kf = k as f64;
        assert!(kf.powf(1.01) >= kf + 1.0 - 1e-9 && (kf - 1.0).powf(1.01) < kf);
    }

    #[test]
    fn step_bound_examples() {
        let b3 = step_bound_theorem3(1.0, 1.0, 1.0, 1.0, 1).unwrap();
        assert!((b3 - 2.0 / (1.0 + 17f64.sqrt())).abs() < 1e-15);
        assert!((b3 - 0.390388).abs() < 1e-6);
        let b4 = step_bound_theorem4(1.0, 1.0, 1.0, 1.0, 1).unwrap();
        assert!((b4 - 0.195194).abs() < 1e-6);
        assert!((b4 - b3 / 2.0).abs() < 1e-16);
        assert!((step_bound_theorem3(2.0, 0.0, 1.0, 1.0, 3).unwrap() - 0.5).abs() < 1e-15);
        assert!((step_bound_theorem4(2.0, 0.0, 1.0, 1.0, 3).unwrap() - 0.25).abs() < 1e-15);
        assert!(step_bound_theorem3(1.0, 1.0, 1.0, 1.0, 2).unwrap() < b3);
        assert_eq!(step_bound_theorem6(1.0, 1.0, 1.0, 1.0, 1).unwrap(), 0.25);
        assert!(step_bound_theorem6(1.0, 1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn restart_epochs_examples() {
        assert_eq!(restart_epochs_theorem7(0.5, 2.0, 1, 0.25).unwrap(), 8);
        assert_eq!(restart_epochs_theorem7(1e-9, 2.0, 10, 0.25).unwrap(), 1);
        assert_eq!(restart_epochs_theorem7(0.0, 2.0, 10, 0.25).unwrap(), 1);
        for (tau, gamma, m, c) in [(3.3, 2.0, 5, 0.07), (0.12, 1.5, 7, 0.3), (10.0, 4.0, 2, 0.01)] {
            let s = restart_epochs_theorem7(tau, gamma, m, c).unwrap();
            assert!(2.0 * tau / (m as f64 * c * s as f64) <= 1.0 / gamma);
        }
    }

    #[test]
    fn theorem5_validator_accepts_optimum_and_rejects_violations() {
        for gamma in [1.5, 2.0, 3.0] {
            let p = 1.0 / (gamma + 1.0);
            let q = 2.0 / (gamma + 1.0);
            assert!(t5(p, q, gamma).validate().is_ok(), "gamma={gamma}");
            let lower = (gamma * q - 1.0) / (gamma - 1.0);
            let q2 = 0.9;
            let lower2 = (gamma * q2 - 1.0) / (gamma - 1.0);
            if lower2 > q2 / 2.0 && lower2 > 0.0 {
                assert!(t5(lower2 - 1e-9, q2, gamma).validate().is_err());
                assert!(t5(lower2, q2, gamma).validate().is_ok());
            }
            assert!(lower <= p + 1e-15);
        }
        let mut bad = t5(1.0 / 3.0, 2.0 / 3.0, 2.0);
        bad.beta = 4.0;
        assert!(bad.validate().is_err());
        let mut bad = t5(1.0 / 3.0, 2.0 / 3.0, 2.0);
        bad.c_phi = 2.0;
        assert!(bad.validate().is_err());
        let mut bad = t5(1.0 / 3.0, 2.0 / 3.0, 2.0);
        bad.rexp = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = t5(1.0 / 3.0, 2.0 / 3.0, 2.0);
        bad.msq_theta_nsq = Some(100.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn theorem5_schedule_stays_feasible() {
        let spec = ScheduleSpec::new(ScheduleKind::Theorem5(t5(1.0 / 3.0, 2.0 / 3.0, 2.0)), 0.5, 5, 200).unwrap();
        assert_eq!(spec.kappa(), 2);
        assert!(!spec.is_square_summable_divergent());
        for s in 1..=200 {
            for t in 0..5 {
                let (phi, psi) = spec.params(t, s).unwrap();
                assert!(phi >= 0.0 && psi >= 0.0 && phi + psi <= 1.0);
            }
        }
        let mut conv = t5(0.75, 0.8, 3.0);
        conv.rexp = 0.9;
        let spec = ScheduleSpec::new(ScheduleKind::Theorem5(conv), 0.5, 5, 10).unwrap();
        assert!(spec.is_square_summable_divergent());
    }

    #[test]
    fn infeasible_coefficients_are_rejected() {
        let r = ScheduleSpec::new(
            ScheduleKind::Fixed { c_alpha: 0.1, phi: constant(0.7), psi: constant(0.5) },
            0.5,
            2,
            3,
        );
        assert!(matches!(r, Err(Error::Schedule(_))));
        let mut big = t5(1.0 / 3.0, 2.0 / 3.0, 2.0);
        big.c_psi = 3.0;
        big.c_phi = 1.0;
        assert!(ScheduleSpec::new(ScheduleKind::Theorem5(big), 0.5, 2, 3).is_err());
        let r = ScheduleSpec::new(
            ScheduleKind::DecayingDefault { phi: Sequence::List { values: vec![0.5] }, psi: constant(0.0) },
            0.5,
            2,
            3,
        );
        assert!(r.is_err());
    }

    #[test]
    fn step_series_partial_sums() {
        // p-series with exponent 1 for the step and 2 for its square: the
        // squared series has a vanishing tail while the plain one keeps growing.
        let s = ScheduleSpec::new(
            ScheduleKind::DecayingDefault { phi: constant(0.0), psi: constant(0.0) },
            0.5,
            1,
            1_000_000,
        );
        let s = s.unwrap();
        let (mut sum, mut sq) = (0.0, 0.0);
        let mut last_sq = 0.0;
        for e in 1..=1_000_000 {
            let a = s.step(0, e);
            sum += a;
            last_sq = sq;
            sq += a * a;
        }
        assert!(sq - last_sq < 1e-9);
        assert!(sum > 13.0);
    }
}
