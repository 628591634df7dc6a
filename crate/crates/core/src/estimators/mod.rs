//! Estimators for return probabilities, Green functions, escape
//! probabilities and range statistics.

mod fit;
mod green;
mod moments;

pub use fit::{even_tail_sum, fit_power_law, FitWindow, PowerLawFit};
pub use green::{
    annealed_gamma, annealed_return_series, bound_chain_holds, duality_check, green_from_series,
    quenched_gamma, quenched_green, remainders, AnnealedGamma, AnnealedSeries, DualityCheck,
    EnvironmentGreen, GammaEstimate, GammaMethod, GreenEstimate, Remainders, TailMethod,
};
pub use moments::{
    baseline_planar_range, monotone_within, range_moments, variance_exponent, wlln_check,
    BaselineRange, RangeMoments, VarianceFit, WllnPoint,
};

use thiserror::Error;

use crate::exact::ExactError;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("nonpositive value {value} at n = {n} inside the fit window")]
    NonPositive { n: f64, value: f64 },
    #[error("only {0} points inside the fit window")]
    TooFewPoints(usize),
    #[error("invalid fit window {0}")]
    BadWindow(String),
    #[error("fitted exponent {0} <= 1: the tail sum diverges")]
    DivergentTail(f64),
    #[error("truncation must be even and at least 2, got {0}")]
    BadTruncation(usize),
    #[error("too few samples: {0}")]
    TooFewSamples(usize),
    #[error("grid must be nonempty, positive and strictly increasing: {0}")]
    BadGrid(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Sample mean and its standard error (`None` for fewer than two values).
pub fn mean_and_std_error(xs: &[f64]) -> (f64, Option<f64>) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, Some((var / m).sqrt()))
}
