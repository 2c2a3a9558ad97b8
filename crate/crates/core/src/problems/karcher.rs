use nalgebra::DMatrix;

use super::{check_index, FiniteSumProblem, Optimum};
use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Spd, Tangent};

const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_ITERS: usize = 500;

/// Riemannian centroid of SPD anchors: `f_i(X) = dist(X, A_i)^2 / 2`,
/// `grad f_i(X) = -Log_X(A_i)`.
#[derive(Debug)]
pub struct KarcherSpd {
    spd: Spd,
    anchors: Vec<Point>,
    optimum: Optimum,
}

impl KarcherSpd {
    pub fn new(anchors: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = anchors
            .first()
            .ok_or_else(|| Error::contract("Karcher mean needs at least one anchor"))?;
        let d = first.nrows();
        let spd = Spd::new(d);
        let anchors = anchors
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                spd.point(a)
                    .map_err(|e| Error::contract(format!("anchor {i} is not SPD({d}): {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let optimum = karcher_fixed_point(&spd, &anchors)?;
        Ok(KarcherSpd {
            spd,
            anchors,
            optimum,
        })
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }
}

/// Iterates `X <- Exp_X(mean_i Log_X(A_i))` from the first anchor.
fn karcher_fixed_point(spd: &Spd, anchors: &[Point]) -> Result<Optimum> {
    let n = anchors.len() as f64;
    let mut x = anchors[0].clone();
    for _ in 0..FIXED_POINT_ITERS {
        let mut step = DMatrix::zeros(spd.dim(), spd.dim());
        for a in anchors {
            step += spd.log_map(&x, a)?.coords();
        }
        step /= n;
        let t = spd.tangent(&x, step)?;
        let norm = spd.norm(&t)?;
        x = spd.exp_map(&x, &t)?;
        if norm < FIXED_POINT_TOL {
            break;
        }
    }
    let mut value = 0.0;
    for a in anchors {
        let dist = spd.dist(&x, a)?;
        value += 0.5 * dist * dist;
    }
    Ok(Optimum {
        point: x,
        value: value / n,
    })
}

impl FiniteSumProblem for KarcherSpd {
    fn name(&self) -> &str {
        "karcher"
    }

    fn manifold(&self) -> &dyn Manifold {
        &self.spd
    }

    fn n(&self) -> usize {
        self.anchors.len()
    }

    fn component_cost(&self, i: usize, w: &Point) -> Result<f64> {
        check_index(i, self.n())?;
        let dist = self.spd.dist(w, &self.anchors[i])?;
        Ok(0.5 * dist * dist)
    }

    fn component_rgrad(&self, i: usize, w: &Point) -> Result<Tangent> {
        check_index(i, self.n())?;
        Ok(self.spd.log_map(w, &self.anchors[i])?.scale(-1.0))
    }

    fn known_optimum(&self) -> Option<&Optimum> {
        Some(&self.optimum)
    }
}
