use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{ensure_at, ensure_on, Manifold, ManifoldId, Point, Tangent};
use crate::error::{Error, Result};

/// Flat space `R^d`: retraction is addition and every transport is the identity.
#[derive(Clone, Debug)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "Euclidean dimension must be positive");
        Euclidean { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.dim, 1) {
            return Err(Error::contract(format!(
                "expected a {}-vector, got shape {:?}",
                self.dim,
                m.shape()
            )));
        }
        Ok(())
    }
}

impl Manifold for Euclidean {
    fn id(&self) -> ManifoldId {
        ManifoldId::Euclidean { dim: self.dim }
    }

    fn check_point(&self, coords: &DMatrix<f64>) -> Result<()> {
        self.check_shape(coords)
    }

    fn check_tangent(&self, xi: &Tangent) -> Result<()> {
        self.check_shape(xi.coords())
    }

    fn inner(&self, xi: &Tangent, zeta: &Tangent) -> Result<f64> {
        ensure_at(zeta, xi.anchor())?;
        Ok(xi.coords().dot(zeta.coords()))
    }

    fn retract(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        ensure_on(self.id(), x)?;
        ensure_at(xi, x)?;
        Ok(Point::new_unchecked(self.id(), x.coords() + xi.coords()))
    }

    fn inverse_retract(&self, x: &Point, y: &Point) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        ensure_on(self.id(), y)?;
        Ok(Tangent::new_unchecked(x.clone(), y.coords() - x.coords()))
    }

    fn transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        let y = self.retract(x, xi)?;
        ensure_at(zeta, x)?;
        Ok(Tangent::new_unchecked(y, zeta.coords().clone()))
    }

    fn parallel_transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        self.transport(x, xi, zeta)
    }

    fn transport_is_isometric(&self) -> bool {
        true
    }

    fn exp_map(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        self.retract(x, xi)
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.inverse_retract(x, y)
    }

    fn project_to_tangent(&self, x: &Point, v: &DMatrix<f64>) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        self.check_shape(v)?;
        Ok(Tangent::new_unchecked(x.clone(), v.clone()))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let coords = DMatrix::from_fn(self.dim, 1, |_, _| StandardNormal.sample(rng));
        Point::new_unchecked(self.id(), coords)
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        let mut v: DMatrix<f64> = DMatrix::from_fn(self.dim, 1, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 0.0 {
            v /= n;
        }
        Ok(Tangent::new_unchecked(x.clone(), v))
    }
}
