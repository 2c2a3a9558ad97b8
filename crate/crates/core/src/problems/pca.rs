use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_index, FiniteSumProblem, Optimum};
use crate::error::{Error, Result};
use crate::manifold::{ensure_on, Manifold, Point, Sphere, SphereTransport, Tangent};

const GAP_TOL: f64 = 1e-10;

/// Leading principal component as a Rayleigh-quotient problem on the sphere:
/// `f_i(w) = -(x_i^T w)^2`.
#[derive(Debug)]
pub struct PcaSphere {
    sphere: Sphere,
    data: DMatrix<f64>,
    optimum: Optimum,
    eigengap: f64,
}

impl PcaSphere {
    /// `data` has one sample per row.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::with_transport(data, SphereTransport::Parallel)
    }

    pub fn with_transport(data: DMatrix<f64>, transport: SphereTransport) -> Result<Self> {
        let (n, d) = data.shape();
        if n == 0 || d < 2 {
            return Err(Error::contract(format!(
                "PCA needs n >= 1 and d >= 2, got n={n}, d={d}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("PCA data contains non-finite entries"));
        }
        let cov = data.transpose() * &data / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]];
        let eigengap = top - eig.eigenvalues[order[1]];
        if eigengap <= GAP_TOL {
            log::warn!(
                "leading eigenvalue {top} is repeated (gap {eigengap:e}); the optimum is only defined up to a subspace"
            );
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(order[0]).into_owned();
        v /= v.norm();
        let sphere = Sphere::with_transport(d, transport);
        let point = sphere.point(DMatrix::from_column_slice(d, 1, v.as_slice()))?;
        Ok(PcaSphere {
            sphere,
            data,
            optimum: Optimum { point, value: -top },
            eigengap,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Gap between the two largest covariance eigenvalues.
    pub fn eigengap(&self) -> f64 {
        self.eigengap
    }

    fn proj(&self, i: usize, w: &Point) -> f64 {
        self.data.row(i).iter().zip(w.coords().iter()).map(|(a, b)| a * b).sum()
    }
}

impl FiniteSumProblem for PcaSphere {
    fn name(&self) -> &str {
        "pca"
    }

    fn manifold(&self) -> &dyn Manifold {
        &self.sphere
    }

    fn n(&self) -> usize {
        self.data.nrows()
    }

    fn component_cost(&self, i: usize, w: &Point) -> Result<f64> {
        check_index(i, self.n())?;
        ensure_on(self.sphere.id(), w)?;
        let c = self.proj(i, w);
        Ok(-c * c)
    }

    fn component_rgrad(&self, i: usize, w: &Point) -> Result<Tangent> {
        check_index(i, self.n())?;
        ensure_on(self.sphere.id(), w)?;
        let c = self.proj(i, w);
        let row = self.data.row(i).transpose() * (-2.0 * c);
        let egrad = DMatrix::from_column_slice(row.len(), 1, row.as_slice());
        self.sphere.project_to_tangent(w, &egrad)
    }

    fn known_optimum(&self) -> Option<&Optimum> {
        Some(&self.optimum)
    }
}
