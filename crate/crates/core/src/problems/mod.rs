//! Finite-sum objectives `f = (1/n) sum_i f_i` with Riemannian component gradients.

mod io;
mod karcher;
mod least_squares;
mod pca;
pub mod synthetic;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

pub use io::{read_csv_matrix, read_matrix_dir, read_matrix_file};
pub use karcher::KarcherSpd;
pub use least_squares::LeastSquares;
pub use pca::PcaSphere;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};

/// Known minimiser and minimum value of a problem.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub point: Point,
    pub value: f64,
}

/// A set of distinct component indices (0-based) drawn from `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchIndex {
    indices: Vec<usize>,
}

impl BatchIndex {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("batch indices must be distinct"));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::contract(format!("batch index {last} out of range for n={n}")));
            }
        }
        Ok(BatchIndex { indices })
    }

    pub fn full(n: usize) -> Self {
        BatchIndex {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Mean of component gradients over `indices`, summed in the given order.
///
/// `full_grad` and `batch_grad` both go through here so that a full batch
/// reproduces the full gradient bit for bit.
fn mean_grad<P: FiniteSumProblem + ?Sized>(p: &P, indices: &[usize], w: &Point) -> Result<Tangent> {
    let (first, rest) = indices
        .split_first()
        .ok_or_else(|| Error::contract("empty batch"))?;
    let mut acc = p.component_rgrad(*first, w)?.coords().clone();
    for &i in rest {
        acc += p.component_rgrad(i, w)?.coords();
    }
    acc /= indices.len() as f64;
    Ok(Tangent::new_unchecked(w.clone(), acc))
}

pub trait FiniteSumProblem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn manifold(&self) -> &dyn Manifold;

    fn n(&self) -> usize;

    fn component_cost(&self, i: usize, w: &Point) -> Result<f64>;

    fn component_rgrad(&self, i: usize, w: &Point) -> Result<Tangent>;

    fn known_optimum(&self) -> Option<&Optimum> {
        None
    }

    /// Gradient-domination constant: `f(w) - f* <= tau * |grad f(w)|^2`.
    fn tau(&self) -> Option<f64> {
        None
    }

    fn cost(&self, w: &Point) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.n() {
            acc += self.component_cost(i, w)?;
        }
        Ok(acc / self.n() as f64)
    }

    fn full_grad(&self, w: &Point) -> Result<Tangent> {
        let all: Vec<usize> = (0..self.n()).collect();
        mean_grad(self, &all, w)
    }

    fn batch_grad(&self, batch: &BatchIndex, w: &Point) -> Result<Tangent> {
        mean_grad(self, batch.indices(), w)
    }
}

/// Wraps a problem and counts component-gradient evaluations.
#[derive(Debug)]
pub struct Counted<'a> {
    inner: &'a dyn FiniteSumProblem,
    evals: AtomicU64,
}

impl<'a> Counted<'a> {
    pub fn new(inner: &'a dyn FiniteSumProblem) -> Self {
        Counted {
            inner,
            evals: AtomicU64::new(0),
        }
    }

    pub fn evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &'a dyn FiniteSumProblem {
        self.inner
    }
}

impl FiniteSumProblem for Counted<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn manifold(&self) -> &dyn Manifold {
        self.inner.manifold()
    }

    fn n(&self) -> usize {
        self.inner.n()
    }

    fn component_cost(&self, i: usize, w: &Point) -> Result<f64> {
        self.inner.component_cost(i, w)
    }

    fn component_rgrad(&self, i: usize, w: &Point) -> Result<Tangent> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.inner.component_rgrad(i, w)
    }

    fn known_optimum(&self) -> Option<&Optimum> {
        self.inner.known_optimum()
    }

    fn tau(&self) -> Option<f64> {
        self.inner.tau()
    }
}

pub(crate) fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(Error::contract(format!("component index {i} out of range for n={n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
