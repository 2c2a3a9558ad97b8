use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line through `(log S, log metric)`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Points dropped because the metric was not positive and finite.
    pub excluded: Vec<(f64, f64)>,
}

pub fn fit_rate(runs: &[(f64, f64)]) -> Result<RateFit> {
    let (points, excluded): (Vec<_>, Vec<_>) =
        runs.iter().copied().partition(|&(s, v)| s > 0.0 && v > 0.0 && v.is_finite() && s.is_finite());
    if !excluded.is_empty() {
        log::warn!("fit_rate: excluded {} nonpositive or non-finite points", excluded.len());
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 4 distinct S values with positive metric, got {}",
            distinct.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit {
        points,
        slope,
        intercept,
        residual: (ssr / k).sqrt(),
        excluded,
    })
}
