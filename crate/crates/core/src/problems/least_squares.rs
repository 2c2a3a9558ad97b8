use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_index, FiniteSumProblem, Optimum};
use crate::error::{Error, Result};
use crate::manifold::{ensure_on, Euclidean, Manifold, Point, Tangent};

/// `f_i(w) = |A_i w - c_i|^2 / 2` on R^d.
///
/// With `H = (1/n) sum A_i^T A_i` positive definite the objective is
/// gradient dominated with `tau = 1 / (2 lambda_min(H))`.
#[derive(Debug)]
pub struct LeastSquares {
    space: Euclidean,
    a: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    hessian: DMatrix<f64>,
    optimum: Optimum,
    tau: f64,
}

impl LeastSquares {
    /// `a[i]` is `p_i x d`, `c[i]` is a column of length `p_i`.
    pub fn new(a: Vec<DMatrix<f64>>, c: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != c.len() {
            return Err(Error::contract(format!(
                "least squares needs matching non-empty A and c lists, got {} and {}",
                a.len(),
                c.len()
            )));
        }
        let d = a[0].ncols();
        for (i, (ai, ci)) in a.iter().zip(&c).enumerate() {
            if ai.ncols() != d || ci.shape() != (ai.nrows(), 1) {
                return Err(Error::contract(format!(
                    "component {i}: A is {:?}, c is {:?}, expected p x {d} and p x 1",
                    ai.shape(),
                    ci.shape()
                )));
            }
        }
        let n = a.len() as f64;
        let mut h = DMatrix::zeros(d, d);
        let mut rhs = DMatrix::zeros(d, 1);
        for (ai, ci) in a.iter().zip(&c) {
            h += ai.transpose() * ai;
            rhs += ai.transpose() * ci;
        }
        h /= n;
        rhs /= n;
        let eig = SymmetricEigen::new(h.clone());
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        if !(lmin > 1e-12 * lmax.max(1.0)) {
            return Err(Error::contract(format!(
                "sum of A_i^T A_i is singular (smallest eigenvalue {lmin:e})"
            )));
        }
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::contract("sum of A_i^T A_i is not positive definite"))?;
        let w = chol.solve(&rhs);
        let space = Euclidean::new(d);
        let point = space.point(w)?;
        let mut problem = LeastSquares {
            space,
            a,
            c,
            hessian: h,
            optimum: Optimum { point, value: 0.0 },
            tau: 1.0 / (2.0 * lmin),
        };
        let opt = problem.optimum.point.clone();
        problem.optimum.value = problem.cost(&opt)?;
        Ok(problem)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    fn residual(&self, i: usize, w: &Point) -> Result<DMatrix<f64>> {
        check_index(i, self.n())?;
        ensure_on(self.space.id(), w)?;
        Ok(&self.a[i] * w.coords() - &self.c[i])
    }
}

impl FiniteSumProblem for LeastSquares {
    fn name(&self) -> &str {
        "least_squares"
    }

    fn manifold(&self) -> &dyn Manifold {
        &self.space
    }

    fn n(&self) -> usize {
        self.a.len()
    }

    fn component_cost(&self, i: usize, w: &Point) -> Result<f64> {
        Ok(0.5 * self.residual(i, w)?.norm_squared())
    }

    fn component_rgrad(&self, i: usize, w: &Point) -> Result<Tangent> {
        let r = self.residual(i, w)?;
        Ok(Tangent::new_unchecked(w.clone(), self.a[i].transpose() * r))
    }

    fn known_optimum(&self) -> Option<&Optimum> {
        Some(&self.optimum)
    }

    fn tau(&self) -> Option<f64> {
        Some(self.tau)
    }
}
