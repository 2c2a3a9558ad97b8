//! Manifolds: metric, retraction, vector transport and the exponential map.
//!
//! Every manifold stores points and tangent vectors as dense `DMatrix<f64>`
//! coordinates: column vectors for Euclidean space and the sphere, symmetric
//! matrices for SPD. A [`Tangent`] always carries the point it is attached to,
//! and every binary operation checks that both operands live in the same
//! tangent space.

mod euclidean;
mod spd;
mod sphere;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use euclidean::Euclidean;
pub use spd::Spd;
pub use sphere::{Sphere, SphereTransport};

use crate::error::{Error, Result};

/// Relative tolerance under which two anchors are treated as the same point.
pub const ANCHOR_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldId {
    Euclidean { dim: usize },
    /// Unit sphere in ambient dimension `dim`.
    Sphere { dim: usize },
    /// Symmetric positive definite `dim × dim` matrices.
    Spd { dim: usize },
}

impl ManifoldId {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            ManifoldId::Euclidean { dim } | ManifoldId::Sphere { dim } => (dim, 1),
            ManifoldId::Spd { dim } => (dim, dim),
        }
    }
}

impl fmt::Display for ManifoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldId::Euclidean { dim } => write!(f, "R^{dim}"),
            ManifoldId::Sphere { dim } => write!(f, "S^{}", dim - 1),
            ManifoldId::Spd { dim } => write!(f, "SPD({dim})"),
        }
    }
}

/// A point on a manifold. Cloning is cheap; coordinates are shared.
#[derive(Clone, Debug)]
pub struct Point {
    id: ManifoldId,
    coords: Arc<DMatrix<f64>>,
}

impl Point {
    /// Builds a point without validation; manifolds call this after checking invariants.
    pub(crate) fn new_unchecked(id: ManifoldId, coords: DMatrix<f64>) -> Self {
        Point {
            id,
            coords: Arc::new(coords),
        }
    }

    pub fn id(&self) -> ManifoldId {
        self.id
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn approx_eq(&self, other: &Point, rel_tol: f64) -> bool {
        if Arc::ptr_eq(&self.coords, &other.coords) {
            return true;
        }
        if self.id != other.id || self.coords.shape() != other.coords.shape() {
            return false;
        }
        let scale = 1.0 + crate::linalg::max_abs(&self.coords);
        crate::linalg::max_abs(&(&*self.coords - &*other.coords)) <= rel_tol * scale
    }

    /// Exact coordinate equality (bitwise on every entry).
    pub fn bitwise_eq(&self, other: &Point) -> bool {
        self.id == other.id
            && self.coords.shape() == other.coords.shape()
            && self
                .coords
                .iter()
                .zip(other.coords.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A tangent vector together with the point it is attached to.
#[derive(Clone, Debug)]
pub struct Tangent {
    coords: DMatrix<f64>,
    anchor: Point,
}

fn check_same_space(a: &Tangent, b: &Tangent) -> Result<()> {
    if a.anchor.approx_eq(&b.anchor, ANCHOR_TOL) {
        Ok(())
    } else {
        Err(Error::contract("tangent vectors anchored at different points"))
    }
}

impl Tangent {
    pub(crate) fn new_unchecked(anchor: Point, coords: DMatrix<f64>) -> Self {
        Tangent { coords, anchor }
    }

    pub fn zero(anchor: &Point) -> Self {
        let (r, c) = anchor.coords().shape();
        Tangent::new_unchecked(anchor.clone(), DMatrix::zeros(r, c))
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn anchor(&self) -> &Point {
        &self.anchor
    }

    pub fn is_anchored_at(&self, x: &Point) -> bool {
        self.anchor.approx_eq(x, ANCHOR_TOL)
    }

    /// Re-attach to a point numerically indistinguishable from the current anchor.
    pub fn reanchor(mut self, x: &Point) -> Result<Self> {
        if !self.is_anchored_at(x) {
            return Err(Error::contract("re-anchoring to a different point"));
        }
        self.anchor = x.clone();
        Ok(self)
    }

    pub fn scale(&self, a: f64) -> Tangent {
        Tangent::new_unchecked(self.anchor.clone(), &self.coords * a)
    }

    pub fn add(&self, other: &Tangent) -> Result<Tangent> {
        check_same_space(self, other)?;
        Ok(Tangent::new_unchecked(
            self.anchor.clone(),
            &self.coords + &other.coords,
        ))
    }

    pub fn sub(&self, other: &Tangent) -> Result<Tangent> {
        check_same_space(self, other)?;
        Ok(Tangent::new_unchecked(
            self.anchor.clone(),
            &self.coords - &other.coords,
        ))
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn bitwise_eq(&self, other: &Tangent) -> bool {
        self.coords.shape() == other.coords.shape()
            && self
                .coords
                .iter()
                .zip(other.coords.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn ensure_on(id: ManifoldId, x: &Point) -> Result<()> {
    if x.id() != id {
        return Err(Error::contract(format!(
            "point belongs to {} but manifold is {}",
            x.id(),
            id
        )));
    }
    Ok(())
}

pub(crate) fn ensure_at(xi: &Tangent, x: &Point) -> Result<()> {
    if !xi.is_anchored_at(x) {
        return Err(Error::contract("tangent vector is not anchored at the given point"));
    }
    Ok(())
}

/// Geometry of a Riemannian manifold.
///
/// `transport` is the vector transport used by the optimizers; it carries a
/// vector from `x` to `retract(x, xi)`. `parallel_transport` is parallel
/// translation along the geodesic joining the same two points and is the
/// reference against which transports are measured.
pub trait Manifold: Send + Sync + fmt::Debug {
    fn id(&self) -> ManifoldId;

    /// Checks the point invariants on raw coordinates.
    fn check_point(&self, coords: &DMatrix<f64>) -> Result<()>;

    /// Checks that `xi` lies in the tangent space at its anchor.
    fn check_tangent(&self, xi: &Tangent) -> Result<()>;

    fn inner(&self, xi: &Tangent, zeta: &Tangent) -> Result<f64>;

    fn retract(&self, x: &Point, xi: &Tangent) -> Result<Point>;

    fn inverse_retract(&self, x: &Point, y: &Point) -> Result<Tangent>;

    fn transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent>;

    fn parallel_transport(&self, x: &Point, xi: &Tangent, zeta: &Tangent) -> Result<Tangent>;

    /// Whether `transport` preserves inner products.
    fn transport_is_isometric(&self) -> bool;

    fn exp_map(&self, x: &Point, xi: &Tangent) -> Result<Point>;

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent>;

    /// Maps an ambient (Euclidean) gradient or vector to the tangent space at `x`.
    fn project_to_tangent(&self, x: &Point, v: &DMatrix<f64>) -> Result<Tangent>;

    /// Converts a Euclidean gradient into the Riemannian gradient at `x`.
    fn egrad_to_rgrad(&self, x: &Point, g: &DMatrix<f64>) -> Result<Tangent> {
        self.project_to_tangent(x, g)
    }

    /// A random point, spread at unit scale around the manifold's natural origin.
    fn random_point(&self, rng: &mut dyn RngCore) -> Point;

    /// A random tangent vector at `x` with unit Riemannian norm.
    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Result<Tangent>;

    fn point(&self, coords: DMatrix<f64>) -> Result<Point> {
        self.check_point(&coords)?;
        Ok(Point::new_unchecked(self.id(), coords))
    }

    fn tangent(&self, x: &Point, coords: DMatrix<f64>) -> Result<Tangent> {
        ensure_on(self.id(), x)?;
        let t = Tangent::new_unchecked(x.clone(), coords);
        self.check_tangent(&t)?;
        Ok(t)
    }

    fn norm(&self, xi: &Tangent) -> Result<f64> {
        Ok(self.inner(xi, xi)?.max(0.0).sqrt())
    }

    fn norm_sq(&self, xi: &Tangent) -> Result<f64> {
        self.inner(xi, xi)
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        let v = self.log_map(x, y)?;
        self.norm(&v)
    }

    /// Transport from `x` to `y`, using `inverse_retract(x, y)` as the transport
    /// direction. The result is anchored exactly at `y`.
    fn transport_to(&self, x: &Point, y: &Point, zeta: &Tangent) -> Result<Tangent> {
        if x.bitwise_eq(y) {
            ensure_at(zeta, x)?;
            return zeta.clone().reanchor(y);
        }
        let xi = self.inverse_retract(x, y)?;
        self.transport(x, &xi, zeta)?.reanchor(y)
    }
}
