use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ensure_at, ensure_on, Manifold, ManifoldId, Point, Tangent};
use crate::error::{Error, Result};

const POINT_TOL: f64 = 1e-12;
const TANGENT_TOL: f64 = 1e-10;

/// Which vector transport `Sphere::transport` uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereTransport {
    /// Parallel translation along the connecting great circle (isometric).
    #[default]
    Parallel,
    /// Orthogonal projection onto the target tangent space (not isometric).
    Projection,
}

/// Unit sphere in `R^d` with the projection retraction `(x + xi) / |x + xi|`.
#[derive(Clone, Debug)]
pub struct Sphere {
    dim: usize,
    transport: SphereTransport,
}

impl Sphere {
    /// `dim` is the ambient dimension, so the manifold is `S^{dim-1}`.
    pub fn new(dim: usize) -> Self {
        Self::with_transport(dim, SphereTransport::Parallel)
    }

    pub fn with_transport(dim: usize, transport: SphereTransport) -> Self {
        assert!(dim >= 2, "sphere needs ambient dimension >= 2");
        Sphere { dim, transport }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transport_kind(&self) -> SphereTransport {
        self.transport
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

pub(super) fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| *v == 0.0)
}

/// Parallel translation of `zeta` from `x` along the great circle with unit
/// initial direction `u`, through `angle`.
fn translate(x: &DMatrix<f64>, u: &DMatrix<f64>, angle: f64, zeta: &DMatrix<f64>) -> DMatrix<f64> {
    let along = u.dot(zeta);
    let (s, c) = angle.sin_cos();
    zeta + u * ((c - 1.0) * along) - x * (s * along)
}

impl Manifold for Sphere {
    fn id(&self) -> ManifoldId {
        ManifoldId::Sphere { dim: self.dim }
    }

    fn check_point(&self, coords: &DMatrix<f64>) -> Result<()> {
        self.check_shape(coords)?;
        let n = coords.norm();
        if (n - 1.0).abs() > POINT_TOL {
            return Err(Error::contract(format!("sphere point has norm {n}")));
        }
        Ok(())
    }

    fn check_tangent(&self, xi: &Tangent) -> Result<()> {
        self.check_shape(xi.coords())?;
        let d = xi.anchor().coords().dot(xi.coords());
        if d.abs() > TANGENT_TOL * (1.0 + xi.coords().norm()) {
            return Err(Error::contract(format!(
                "vector is not tangent to the sphere (<x, xi> = {d:e})"
            )));
        }
        Ok(())
    }

    fn inner(&self, xi: &Tangent, zeta: &Tangent) -> Result<f64> {
        ensure_at(zeta, xi.anchor())?;
        Ok(xi.coords().dot(zeta.coords()))
    }

    fn retract(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        ensure_on(self.id(), x)?;
        ensure_at(xi, x)?;
        if is_zero(xi.coords()) {
            return Ok(x.clone());
        }
        let y = x.coords() + xi.coords();
        let n = y.norm();
        Ok(Point::new_unchecked(self.id(), y / n))
    }

    fn inverse_retract(&self, x: &Point, y: &Point) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        ensure_on(self.id(), y)?;
        let c = x.coords().dot(y.coords());
        if c <= 0.0 {
            return Err(Error::OutsideNeighbourhood(format!(
                "projection retraction cannot reach y from x (<x, y> = {c})"
            )));
        }
        let xi = y.coords() / c - x.coords();
        // Remove the rounding-level normal component.
        let xi = &xi - x.coords() * x.coords().dot(&xi);
        Ok(Tangent::new_unchecked(x.clone(), xi))
    }

    fn transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        match self.transport {
            SphereTransport::Parallel => self.parallel_transport(x, xi, zeta),
            SphereTransport::Projection => {
                ensure_at(zeta, x)?;
                let y = self.retract(x, xi)?;
                if is_zero(xi.coords()) {
                    return Ok(Tangent::new_unchecked(y, zeta.coords().clone()));
                }
                let v = zeta.coords() - y.coords() * y.coords().dot(zeta.coords());
                Ok(Tangent::new_unchecked(y, v))
            }
        }
    }

    fn parallel_transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent> {
        ensure_at(zeta, x)?;
        let y = self.retract(x, xi)?;
        let n = xi.coords().norm();
        if n == 0.0 {
            return Ok(Tangent::new_unchecked(y, zeta.coords().clone()));
        }
        let u = xi.coords() / n;
        // The projection retraction moves along the geodesic through angle atan(|xi|).
        let v = translate(x.coords(), &u, n.atan(), zeta.coords());
        Ok(Tangent::new_unchecked(y, v))
    }

    fn transport_is_isometric(&self) -> bool {
        self.transport == SphereTransport::Parallel
    }

    fn exp_map(&self, x: &Point, xi: &Tangent) -> Result<Point> {
        ensure_on(self.id(), x)?;
        ensure_at(xi, x)?;
        let n = xi.coords().norm();
        if n == 0.0 {
            return Ok(x.clone());
        }
        let (s, c) = n.sin_cos();
        let y = x.coords() * c + xi.coords() * (s / n);
        let norm = y.norm();
        Ok(Point::new_unchecked(self.id(), y / norm))
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        ensure_on(self.id(), y)?;
        let c = x.coords().dot(y.coords());
        let v = y.coords() - x.coords() * c;
        let s = v.norm();
        if s < 1e-12 && c < 0.0 {
            return Err(Error::Domain("logarithm of antipodal sphere points".into()));
        }
        if s == 0.0 {
            return Ok(Tangent::zero(x));
        }
        let angle = s.atan2(c);
        Ok(Tangent::new_unchecked(x.clone(), v * (angle / s)))
    }

    fn project_to_tangent(&self, x: &Point, v: &DMatrix<f64>) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        self.check_shape(v)?;
        let p = v - x.coords() * x.coords().dot(v);
        Ok(Tangent::new_unchecked(x.clone(), p))
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        loop {
            let v: DMatrix<f64> = DMatrix::from_fn(self.dim, 1, |_, _| StandardNormal.sample(rng));
            let n = v.norm();
            if n > 1e-8 {
                return Point::new_unchecked(self.id(), v / n);
            }
        }
    }

    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        loop {
            let v: DMatrix<f64> = DMatrix::from_fn(self.dim, 1, |_, _| StandardNormal.sample(rng));
            let p = &v - x.coords() * x.coords().dot(&v);
            let n = p.norm();
            if n > 1e-8 {
                return Ok(Tangent::new_unchecked(x.clone(), p / n));
            }
        }
    }
}
