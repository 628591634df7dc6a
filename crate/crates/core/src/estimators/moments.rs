//! Monte Carlo statistics of the range: mean growth, variance scaling, the
//! weak law of large numbers, and the planar baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_power_law, FitWindow, PowerLawFit};
use super::EstimateError;
use crate::range::RangeTracker;
use crate::walk::{WalkMode, Walker};

/// Mean and variance of `R_n` over a grid of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeMoments {
    pub mode: String,
    pub grid: Vec<usize>,
    pub num_samples: usize,
    pub mean: Vec<f64>,
    pub mean_std_error: Vec<f64>,
    /// Unbiased sample variance `V(n)`.
    pub variance: Vec<f64>,
    pub variance_std_error: Vec<f64>,
    /// `samples[g][i]` is `R_{grid[g]}` of trajectory `i`.
    #[serde(skip)]
    pub samples: Vec<Vec<u32>>,
}

fn describe(mode: &WalkMode) -> String {
    match mode {
        WalkMode::Quenched { field, seed } => {
            format!("quenched({}, walk_seed={seed})", field.describe())
        }
        WalkMode::Annealed { master_seed } => format!("annealed(master_seed={master_seed})"),
        WalkMode::Baseline2D { seed } => format!("baseline2d(seed={seed})"),
    }
}

fn validate_grid(grid: &[usize]) -> Result<(), EstimateError> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EstimateError::BadGrid(format!("{grid:?}")));
    }
    Ok(())
}

/// `R_n` of trajectory `index` at each grid point.
fn range_path(mode: &WalkMode, index: u64, grid: &[usize], tracker: &mut RangeTracker) -> Vec<u32> {
    tracker.clear();
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    let mut walker = Walker::new(mode, index);
    tracker.observe(walker.position());
    // After observing M_0..M_{t-1}, the tracker holds R_t.
    let mut t = 1;
    loop {
        while next < grid.len() && grid[next] == t {
            out.push(tracker.range() as u32);
            next += 1;
        }
        if next == grid.len() {
            return out;
        }
        let (_, p) = walker.next().expect("walker is infinite");
        tracker.observe(p);
        t += 1;
    }
}

impl RangeMoments {
    fn from_samples(mode: String, grid: Vec<usize>, samples: Vec<Vec<u32>>) -> Self {
        let num_samples = samples.first().map_or(0, Vec::len);
        let m = num_samples as f64;
        let mut mean = Vec::new();
        let mut mean_std_error = Vec::new();
        let mut variance = Vec::new();
        let mut variance_std_error = Vec::new();
        for col in &samples {
            let (mu, var) = exact_mean_variance(col);
            let m4 = col.iter().map(|&r| (r as f64 - mu).powi(4)).sum::<f64>() / m;
            mean.push(mu);
            mean_std_error.push((var / m).sqrt());
            variance.push(var);
            let v4 = (m4 - var * var * (m - 3.0) / (m - 1.0)) / m;
            variance_std_error.push(v4.max(0.0).sqrt());
        }
        Self {
            mode,
            grid,
            num_samples,
            mean,
            mean_std_error,
            variance,
            variance_std_error,
            samples,
        }
    }

    /// `E[R_n] / n` with its standard error.
    pub fn mean_over_n(&self) -> Vec<(usize, f64, f64)> {
        self.grid
            .iter()
            .zip(self.mean.iter().zip(&self.mean_std_error))
            .map(|(&n, (&m, &se))| (n, m / n as f64, se / n as f64))
            .collect()
    }

    /// The moments of a contiguous block of trajectories.
    pub fn subsample(&self, range: std::ops::Range<usize>) -> RangeMoments {
        let samples = self
            .samples
            .iter()
            .map(|c| c[range.clone()].to_vec())
            .collect();
        Self::from_samples(self.mode.clone(), self.grid.clone(), samples)
    }
}

/// Mean and unbiased variance from exact integer sums.
fn exact_mean_variance(col: &[u32]) -> (f64, f64) {
    let m = col.len() as u128;
    let s: u128 = col.iter().map(|&r| r as u128).sum();
    let s2: u128 = col.iter().map(|&r| (r as u128) * (r as u128)).sum();
    let mean = s as f64 / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let num = m * s2 - s * s;
    (mean, num as f64 / (m * (m - 1)) as f64)
}

/// Runs `num_samples` trajectories of `mode` and records `R_n` on `grid`.
pub fn range_moments(
    mode: &WalkMode,
    grid: &[usize],
    num_samples: usize,
) -> Result<RangeMoments, EstimateError> {
    validate_grid(grid)?;
    if num_samples < 2 {
        return Err(EstimateError::TooFewSamples(num_samples));
    }
    let horizon = *grid.last().unwrap();
    let rows: Vec<Vec<u32>> = (0..num_samples as u64)
        .into_par_iter()
        .map_init(
            || RangeTracker::with_capacity(horizon),
            |tracker, i| range_path(mode, i, grid, tracker),
        )
        .collect();
    let samples = (0..grid.len())
        .map(|g| rows.iter().map(|r| r[g]).collect())
        .collect();
    Ok(RangeMoments::from_samples(
        describe(mode),
        grid.to_vec(),
        samples,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WllnPoint {
    pub n: usize,
    /// Empirical `P[|R_n/n - gamma_ref| > delta]`.
    pub frequency: f64,
    pub std_error: f64,
    /// `E[(R_n/n - gamma_ref)^2] / delta^2` from the sample moments.
    pub chebyshev_bound: f64,
}

pub fn wlln_check(
    delta: f64,
    moments: &RangeMoments,
    gamma_ref: f64,
) -> Result<Vec<WllnPoint>, EstimateError> {
    if !(delta > 0.0) {
        return Err(EstimateError::BadParameter(format!("delta = {delta}")));
    }
    let m = moments.num_samples as f64;
    Ok(moments
        .grid
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let nf = n as f64;
            let hits = moments.samples[g]
                .iter()
                .filter(|&&r| (r as f64 / nf - gamma_ref).abs() > delta)
                .count() as f64;
            let f = hits / m;
            let bias = moments.mean[g] / nf - gamma_ref;
            WllnPoint {
                n,
                frequency: f,
                std_error: (f * (1.0 - f) / m).sqrt(),
                chebyshev_bound: (moments.variance[g] / (nf * nf) + bias * bias) / (delta * delta),
            }
        })
        .collect())
}

/// Whether each frequency exceeds its predecessor by at most `sigmas` joint
/// standard errors.
pub fn monotone_within(points: &[WllnPoint], sigmas: f64) -> bool {
    points.windows(2).all(|w| {
        let joint = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].frequency <= w[0].frequency + sigmas * joint
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    /// `V(n) ~ amplitude * n^beta`, with `beta = fit.slope()`.
    pub fit: PowerLawFit,
    pub beta: f64,
    /// Spread of `beta` over independent batches of trajectories, divided by
    /// the square root of the batch count.
    pub beta_std_error: f64,
    pub batches: usize,
    /// `beta + 2 * beta_std_error < 2`.
    pub subquadratic: bool,
    /// `V(n)/n^2` strictly decreasing over the upper half of the grid.
    pub ratio_decreasing_top_half: bool,
}

pub fn variance_exponent(
    moments: &RangeMoments,
    window: FitWindow,
    batches: usize,
) -> Result<VarianceFit, EstimateError> {
    let series = |m: &RangeMoments| -> Vec<(f64, f64)> {
        m.grid
            .iter()
            .zip(&m.variance)
            .map(|(&n, &v)| (n as f64, v))
            .collect()
    };
    let fit = fit_power_law(&series(moments), window)?;
    if batches < 2 || moments.num_samples / batches < 2 {
        return Err(EstimateError::TooFewSamples(moments.num_samples));
    }
    let per = moments.num_samples / batches;
    let betas: Vec<f64> = (0..batches)
        .map(|b| {
            let sub = moments.subsample(b * per..(b + 1) * per);
            fit_power_law(&series(&sub), window).map(|f| f.slope())
        })
        .collect::<Result<_, _>>()?;
    let (_, se) = super::mean_and_std_error(&betas);
    let beta = fit.slope();
    let beta_std_error = se.unwrap_or(0.0);
    let ratios: Vec<f64> = moments
        .grid
        .iter()
        .zip(&moments.variance)
        .map(|(&n, &v)| v / (n as f64 * n as f64))
        .collect();
    let top = &ratios[ratios.len() / 2..];
    Ok(VarianceFit {
        fit,
        beta,
        beta_std_error,
        batches,
        subquadratic: beta + 2.0 * beta_std_error < 2.0,
        ratio_decreasing_top_half: top.windows(2).all(|w| w[1] < w[0]),
    })
}

/// Planar four-neighbour walk: the range together with the normalised ratio
/// `E[R_n] * ln(n) / (pi * n)` and its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRange {
    pub moments: RangeMoments,
    pub ratio: Vec<f64>,
    pub ratio_std_error: Vec<f64>,
}

pub fn baseline_planar_range(
    grid: &[usize],
    num_samples: usize,
    seed: u64,
) -> Result<BaselineRange, EstimateError> {
    let moments = range_moments(&WalkMode::Baseline2D { seed }, grid, num_samples)?;
    let scale = |n: usize| (n as f64).ln() / (std::f64::consts::PI * n as f64);
    let ratio = grid
        .iter()
        .zip(&moments.mean)
        .map(|(&n, &m)| m * scale(n))
        .collect();
    let ratio_std_error = grid
        .iter()
        .zip(&moments.mean_std_error)
        .map(|(&n, &s)| s * scale(n))
        .collect();
    Ok(BaselineRange {
        moments,
        ratio,
        ratio_std_error,
    })
}
