//! Exact expectations over the uniform distribution on size-`b` batches.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{carried_bias, hybrid_from, HybridCoeffs, HybridState, Pieces};
use crate::error::{Error, Result};
use crate::manifold::{Point, Tangent};
use crate::problems::{BatchIndex, FiniteSumProblem};

/// Largest number of batches the enumeration helpers will visit.
pub const MAX_ENUMERATION: u128 = 100_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// All size-`b` subsets of `0..n` in lexicographic order.
pub fn enumerate_batches(n: usize, b: usize) -> Result<Vec<BatchIndex>> {
    if b == 0 || b > n {
        return Err(Error::contract(format!("batch size {b} outside 1..={n}")));
    }
    let count = binomial(n, b);
    if count > MAX_ENUMERATION {
        return Err(Error::TooLarge(format!(
            "C({n}, {b}) = {count} batches exceeds the limit {MAX_ENUMERATION}"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..b).collect();
    loop {
        out.push(BatchIndex::new(idx.clone(), n)?);
        let mut k = b;
        while k > 0 && idx[k - 1] == n - b + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..b {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}

/// Mean of `f` over every size-`b` batch. Batches are evaluated in parallel
/// and summed in lexicographic order, so the result is deterministic.
pub fn mean_over_batches<F>(n: usize, b: usize, anchor: &Point, f: F) -> Result<Tangent>
where
    F: Fn(&BatchIndex) -> Result<Tangent> + Sync,
{
    let batches = enumerate_batches(n, b)?;
    let values: Vec<Tangent> = batches.par_iter().map(&f).collect::<Result<_>>()?;
    let (r, c) = anchor.coords().shape();
    let mut acc = DMatrix::zeros(r, c);
    for v in &values {
        acc += v.coords();
    }
    acc /= values.len() as f64;
    Ok(Tangent::new_unchecked(anchor.clone(), acc))
}

/// Values of `f` on every size-`b` batch, in lexicographic batch order.
pub fn map_batches<T, F>(n: usize, b: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&BatchIndex) -> Result<T> + Sync,
{
    let batches = enumerate_batches(n, b)?;
    batches.par_iter().map(&f).collect()
}

/// Exact conditional mean of the hybrid direction with `coeffs.phi` and
/// `coeffs.psi_tilde`; the clipped value is fixed across batches because it
/// depends only on full gradients.
pub fn expectation_oracle(
    p: &dyn FiniteSumProblem,
    w_t: &Point,
    state: &HybridState,
    coeffs: &HybridCoeffs,
    b: usize,
) -> Result<Tangent> {
    coeffs.validate()?;
    mean_over_batches(p.n(), b, w_t, |batch| {
        let pieces = Pieces::compute(p, batch, w_t, state)?;
        hybrid_from(p, w_t, state, &pieces, coeffs.phi, coeffs.psi_tilde)
    })
}

/// `grad f(w_t) + psi_tilde * T(V_{t-1} - grad f(w_{t-1}))`.
pub fn lemma_expectation_rhs(p: &dyn FiniteSumProblem, w_t: &Point, state: &HybridState, psi_tilde: f64) -> Result<Tangent> {
    let g = p.full_grad(w_t)?;
    let prev = p.full_grad(&state.prev_point)?;
    let carried = carried_bias(p, w_t, state, &prev)?;
    g.add(&carried.scale(psi_tilde))
}
