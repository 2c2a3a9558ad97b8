//! Seeded synthetic instances of the shipped problems.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{KarcherSpd, LeastSquares, PcaSphere};
use crate::error::Result;
use crate::linalg::{expm, symmetrize};
use crate::manifold::SphereTransport;

fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    gaussian(rng, d, d).qr().q()
}

/// Samples `n` points from a zero-mean Gaussian whose covariance has leading
/// eigenvalue 1 and the remaining `d - 1` spread evenly over `[tail/2, tail]`,
/// in a random orthonormal basis.
pub fn pca_data(rng: &mut impl Rng, n: usize, d: usize, tail: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, d);
    let scales: Vec<f64> = (0..d)
        .map(|k| {
            if k == 0 {
                1.0
            } else if d == 2 {
                tail.sqrt()
            } else {
                let frac = (k - 1) as f64 / (d - 2) as f64;
                (tail * (1.0 - 0.5 * frac)).sqrt()
            }
        })
        .collect();
    let z = gaussian(rng, n, d);
    let scaled = DMatrix::from_fn(n, d, |i, j| z[(i, j)] * scales[j]);
    scaled * q.transpose()
}

pub fn pca(rng: &mut impl Rng, n: usize, d: usize, tail: f64, transport: SphereTransport) -> Result<PcaSphere> {
    PcaSphere::with_transport(pca_data(rng, n, d, tail), transport)
}

/// Anchors `Exp_I(spread * S_i)` for symmetric Gaussian `S_i`.
pub fn karcher_anchors(rng: &mut impl Rng, n: usize, d: usize, spread: f64) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|_| expm(&(symmetrize(&gaussian(rng, d, d)) * spread)))
        .collect()
}

pub fn karcher(rng: &mut impl Rng, n: usize, d: usize, spread: f64) -> Result<KarcherSpd> {
    KarcherSpd::new(karcher_anchors(rng, n, d, spread))
}

/// Square components `A_i = I + noise * G_i` with Gaussian targets `c_i`.
pub fn least_squares(rng: &mut impl Rng, n: usize, d: usize, noise: f64) -> Result<LeastSquares> {
    let mut a = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(DMatrix::identity(d, d) + gaussian(rng, d, d) * noise);
        c.push(gaussian(rng, d, 1));
    }
    LeastSquares::new(a, c)
}
