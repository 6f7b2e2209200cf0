//! Replication statistics and the small regressions used to read rates off
//! trajectories.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pointwise summary of several replications of the same curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub sample_count: usize,
    pub means: Vec<f64>,
    /// Normal-approximation confidence half-widths, one per point.
    pub half_widths: Vec<f64>,
    /// Set when only one replication was supplied; half-widths are then 0.
    pub degenerate: bool,
}

/// Two-sided normal quantile, e.g. `z_quantile(0.95) ≈ 1.96`.
pub fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!("confidence level must be in (0,1), got {level}")));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Pointwise mean and `level` confidence half-width across replications.
pub fn mean_and_ci(values: &[Vec<f64>], level: f64) -> Result<ReplicationStats> {
    let first = values
        .first()
        .ok_or_else(|| Error::param("at least one replication is required"))?;
    let len = first.len();
    if let Some(bad) = values.iter().position(|v| v.len() != len) {
        return Err(Error::param(format!(
            "replication {bad} has length {} but replication 0 has length {len}",
            values[bad].len()
        )));
    }
    let z = z_quantile(level)?;
    let n = values.len();
    let mut means = Vec::with_capacity(len);
    let mut half_widths = Vec::with_capacity(len);
    for i in 0..len {
        let mean = values.iter().map(|v| v[i]).sum::<f64>() / n as f64;
        means.push(mean);
        if n == 1 {
            half_widths.push(0.0);
        } else {
            let var = values.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            half_widths.push(z * var.sqrt() / (n as f64).sqrt());
        }
    }
    Ok(ReplicationStats {
        sample_count: n,
        means,
        half_widths,
        degenerate: n == 1,
    })
}

/// Ordinary least squares `y ≈ intercept + slope * x`; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("linear fit needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("linear fit needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `ln y` against `x`. Non-positive `y` values are rejected.
pub fn log_linear_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::param("log fit requires strictly positive values"));
    }
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(linear_fit(xs, &ly)?.0)
}

/// Slope of `ln y` against `ln x`, i.e. the fitted power-law exponent.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::param("log-log fit requires strictly positive abscissae"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    log_linear_slope(&lx, ys)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance() {
        let s = mean_and_ci(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]], 0.95).unwrap();
        assert_eq!(s.means, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.half_widths, vec![0.0, 0.0, 0.0]);
        assert!(!s.degenerate);
    }

    #[test]
    fn two_point_half_width() {
        // sample stddev of {0, 2} is sqrt(2); half-width = z * sqrt(2) / sqrt(2) = z
        let s = mean_and_ci(&[vec![0.0], vec![2.0]], 0.95).unwrap();
        assert_eq!(s.means, vec![1.0]);
        assert!((s.half_widths[0] - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn single_replication_is_flagged() {
        let s = mean_and_ci(&[vec![4.0, 5.0]], 0.95).unwrap();
        assert_eq!(s.means, vec![4.0, 5.0]);
        assert_eq!(s.half_widths, vec![0.0, 0.0]);
        assert!(s.degenerate);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(mean_and_ci(&[], 0.95).is_err());
        assert!(mean_and_ci(&[vec![1.0], vec![1.0, 2.0]], 0.95).is_err());
        assert!(mean_and_ci(&[vec![1.0]], 1.5).is_err());
    }

    #[test]
    fn power_law_slope() {
        let xs: Vec<f64> = (1..50).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|k| 3.0 * k.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
    }
}
