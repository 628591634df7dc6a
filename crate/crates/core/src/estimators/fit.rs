use serde::{Deserialize, Serialize};

use super::EstimateError;

/// Closed interval of time indices used for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub n_min: f64,
    pub n_max: f64,
}

impl FitWindow {
    pub fn new(n_min: f64, n_max: f64) -> Result<Self, EstimateError> {
        if !(n_min > 0.0 && n_max > n_min) {
            return Err(EstimateError::BadWindow(format!("[{n_min}, {n_max}]")));
        }
        Ok(Self { n_min, n_max })
    }

    /// A window whose endpoints are powers of two.
    pub fn dyadic(n_min: u64, n_max: u64) -> Result<Self, EstimateError> {
        if !n_min.is_power_of_two() || !n_max.is_power_of_two() {
            return Err(EstimateError::BadWindow(format!(
                "[{n_min}, {n_max}] endpoints must be powers of two"
            )));
        }
        Self::new(n_min as f64, n_max as f64)
    }

    pub fn contains(&self, n: f64) -> bool {
        n >= self.n_min && n <= self.n_max
    }
}

/// `value ~ amplitude * n^(-exponent)` by least squares in log-log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub window: FitWindow,
    /// RMS of the log-residuals.
    pub residual: f64,
    /// Ordinary least-squares standard error of the exponent.
    pub exponent_std_error: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.amplitude * n.powf(-self.exponent)
    }

    /// Slope of the log-log line (the growth exponent).
    pub fn slope(&self) -> f64 {
        -self.exponent
    }
}

pub fn fit_power_law(
    series: &[(f64, f64)],
    window: FitWindow,
) -> Result<PowerLawFit, EstimateError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(n, _)| window.contains(*n))
        .copied()
        .collect();
    if let Some(&(n, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(EstimateError::NonPositive { n, value: v });
    }
    if pts.len() < 2 {
        return Err(EstimateError::TooFewPoints(pts.len()));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(n, v)| (n.ln(), v.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let exponent_std_error = if logs.len() > 2 {
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        amplitude: intercept.exp(),
        exponent: -slope,
        window,
        residual: (sse / m).sqrt(),
        exponent_std_error,
        points: logs.len(),
    })
}

/// `sum_{j > last} amplitude * (2j)^(-exponent)`: the even-time tail beyond
/// `2 * last` of a fitted power law, by the midpoint integral
/// `amplitude * 2^-a * (last + 1/2)^(1-a) / (a - 1)`.
pub fn even_tail_sum(fit: &PowerLawFit, last: usize) -> Result<f64, EstimateError> {
    let a = fit.exponent;
    if a <= 1.0 {
        return Err(EstimateError::DivergentTail(a));
    }
    Ok(fit.amplitude * 2f64.powf(-a) * (last as f64 + 0.5).powf(1.0 - a) / (a - 1.0))
}
