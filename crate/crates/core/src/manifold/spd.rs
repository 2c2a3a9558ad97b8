use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::sphere::is_zero;
use super::{ensure_at, ensure_on, Manifold, ManifoldId, Point, Tangent};
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, expm, inv_spd, inv_sqrtm, logm, min_eigenvalue, sqrtm, symmetrize};

const SYM_TOL: f64 = 1e-12;
/// Smallest eigenvalue a retracted point may have.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric positive definite matrices with the affine-invariant metric
/// `<xi, zeta>_X = tr(X^-1 xi X^-1 zeta)`.
///
/// The retraction is the second-order map `X + xi + xi X^-1 xi / 2`; the
/// transport is parallel translation `E zeta E^T` with `E = (Y X^-1)^{1/2}`.
#[derive(Clone, Debug)]
pub struct Spd {
    dim: usize,
}

impl Spd {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "SPD dimension must be positive");
        Spd { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.dim, self.dim) {
            return Err(Error::contract(format!(
                "expected a {0}x{0} matrix, got shape {1:?}",
                self.dim,
                m.shape()
            )));
        }
        Ok(())
    }

    fn check_sym(&self, m: &DMatrix<f64>) -> Result<()> {
        let a = asymmetry(m);
        if a > SYM_TOL * (1.0 + crate::linalg::max_abs(m)) {
            return Err(Error::contract(format!("matrix is not symmetric (asymmetry {a:e})")));
        }
        Ok(())
    }

    /// `E = X^{1/2} (X^{-1/2} Y X^{-1/2})^{1/2} X^{-1/2}`, the parallel translation factor.
    fn translation_factor(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        let xs = sqrtm(x);
        let xis = inv_sqrtm(x);
        let mid = sqrtm(&symmetrize(&(&xis * y * &xis)));
        &xs * mid * &xis
    }
}

impl Manifold for Spd {
    fn id(&self) -> ManifoldId {
        ManifoldId::Spd { dim: self.dim }
    }

    fn check_point(&self, coords: &DMatrix<f64>) -> Result<()> {
        self.check_shape(coords)?;
        self.check_sym(coords)?;
        let lo = min_eigenvalue(coords);
        if lo <= 0.0 {
            return Err(Error::contract(format!(
                "matrix is not positive definite (min eigenvalue {lo:e})"
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, xi: &Tangent) -> Result<()> {
        self.check_shape(xi.coords())?;
        self.check_sym(xi.coords())
    }

    fn inner(&self, xi: &Tangent, zeta: &Tangent) -> Result<f64> {
        ensure_at(zeta, xi.anchor())?;
        let xinv = inv_spd(xi.anchor().coords());
        let a = &xinv * xi.coords();
        let b = &xinv * zeta.coords();
        Ok((a * b).trace())
    }

    fn retract(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        ensure_on(self.id(), x)?;
        ensure_at(xi, x)?;
        if is_zero(xi.coords()) {
            return Ok(x.clone());
        }
        let xinv = inv_spd(x.coords());
        let y = x.coords() + xi.coords() + xi.coords() * &xinv * xi.coords() * 0.5;
        let y = symmetrize(&y);
        let lo = min_eigenvalue(&y);
        if !(lo > EIGEN_FLOOR) {
            return Err(Error::DegenerateStep(format!(
                "SPD retraction lost positive definiteness (min eigenvalue {lo:e})"
            )));
        }
        Ok(Point::new_unchecked(self.id(), y))
    }

    fn inverse_retract(&self, x: &Point, y: &Point) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        ensure_on(self.id(), y)?;
        let xs = sqrtm(x.coords());
        let xis = inv_sqrtm(x.coords());
        let w = symmetrize(&(&xis * y.coords() * &xis));
        let n = self.dim;
        let inner = &w * 2.0 - DMatrix::identity(n, n);
        let lo = min_eigenvalue(&inner);
        if !(lo > 0.0) {
            return Err(Error::OutsideNeighbourhood(format!(
                "second-order retraction cannot reach y from x (min eigenvalue {lo:e})"
            )));
        }
        let z = sqrtm(&inner) - DMatrix::identity(n, n);
        let xi = symmetrize(&(&xs * z * &xs));
        Ok(Tangent::new_unchecked(x.clone(), xi))
    }

    fn transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        self.parallel_transport(x, xi, zeta)
    }

    fn parallel_transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        ensure_at(zeta, x)?;
        let y = self.retract(x, xi)?;
        if is_zero(xi.coords()) {
            return Ok(Tangent::new_unchecked(y, zeta.coords().clone()));
        }
        let e = Self::translation_factor(x.coords(), y.coords());
        let v = symmetrize(&(&e * zeta.coords() * e.transpose()));
        Ok(Tangent::new_unchecked(y, v))
    }

    fn transport_is_isometric(&self) -> bool {
        true
    }

    /// Parallel translation needs only the endpoints, so this skips the
    /// inverse retraction, which may not exist for distant points.
    fn transport_to(&self, x: &Point, y: &Point, zeta: &Tangent) -> Result<Tangent> {
        ensure_at(zeta, x)?;
        ensure_on(self.id(), y)?;
        if x.bitwise_eq(y) {
            return zeta.clone().reanchor(y);
        }
        let e = Self::translation_factor(x.coords(), y.coords());
        let v = symmetrize(&(&e * zeta.coords() * e.transpose()));
        Ok(Tangent::new_unchecked(y.clone(), v))
    }

    fn exp_map(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        ensure_on(self.id(), x)?;
        ensure_at(xi, x)?;
        if is_zero(xi.coords()) {
            return Ok(x.clone());
        }
        let xs = sqrtm(x.coords());
        let xis = inv_sqrtm(x.coords());
        let inner = symmetrize(&(&xis * xi.coords() * &xis));
        let y = symmetrize(&(&xs * expm(&inner) * &xs));
        Ok(Point::new_unchecked(self.id(), y))
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        ensure_on(self.id(), y)?;
        if x.bitwise_eq(y) {
            return Ok(Tangent::zero(x));
        }
        let xs = sqrtm(x.coords());
        let xis = inv_sqrtm(x.coords());
        let inner = symmetrize(&(&xis * y.coords() * &xis));
        let v = symmetrize(&(&xs * logm(&inner) * &xs));
        Ok(Tangent::new_unchecked(x.clone(), v))
    }

    /// The tangent space is the symmetric matrices, so projection is symmetrization.
    fn project_to_tangent(&self, x: &Point, v: &DMatrix<f64>) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        self.check_shape(v)?;
        Ok(Tangent::new_unchecked(x.clone(), symmetrize(v)))
    }

    /// `X sym(G) X` under the affine-invariant metric.
    fn egrad_to_rgrad(&self, x: &Point, g: &DMatrix<f64>) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        self.check_shape(g)?;
        let r = symmetrize(&(x.coords() * symmetrize(g) * x.coords()));
        Ok(Tangent::new_unchecked(x.clone(), r))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let s = random_symmetric(self.dim, rng) * 0.5;
        Point::new_unchecked(self.id(), expm(&s))
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        let t = Tangent::new_unchecked(x.clone(), random_symmetric(self.dim, rng));
        let n = self.norm(&t)?;
        Ok(t.scale(1.0 / n))
    }
}

fn random_symmetric(dim: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    symmetrize(&g)
}
