//! Green functions and escape probabilities from exact quenched series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{even_tail_sum, fit_power_law, FitWindow, PowerLawFit};
use super::{mean_and_std_error, EstimateError};
use crate::exact::{return_probabilities, return_series, ReturnSeries};
use crate::orientation::{sample_environment, OrientationField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailMethod {
    None,
    /// Amplitude and exponent fitted on the even times of the upper half of
    /// the computed window, then summed to infinity.
    PowerLaw,
    /// Amplitude fitted on the upper half with the exponent held fixed.
    PinnedPowerLaw {
        exponent: f64,
    },
}

/// `sum_k u(k)` truncated at `truncation`, plus an optional extrapolated tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenEstimate {
    pub partial_sum: f64,
    pub truncation: usize,
    pub tail_estimate: f64,
    pub tail_method: TailMethod,
    pub tail_fit: Option<PowerLawFit>,
    pub std_error: Option<f64>,
}

impl GreenEstimate {
    pub fn total(&self) -> f64 {
        self.partial_sum + self.tail_estimate
    }

    pub fn tail_diverges(&self) -> bool {
        self.tail_estimate.is_infinite()
    }
}

fn check_truncation(n: usize) -> Result<(), EstimateError> {
    if n < 2 || n % 2 != 0 {
        Err(EstimateError::BadTruncation(n))
    } else {
        Ok(())
    }
}

// A fitted exponent <= 1 extrapolates to an infinite Green function; that is
// what the fit says, so report it rather than refuse.
fn tail_or_infinite(fit: &PowerLawFit, last: usize) -> Result<f64, EstimateError> {
    match even_tail_sum(fit, last) {
        Err(EstimateError::DivergentTail(_)) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Green function from a return series `u(0..=N)`.
pub fn green_from_series(
    u: &[f64],
    tail_method: TailMethod,
) -> Result<GreenEstimate, EstimateError> {
    let truncation = u.len() - 1;
    check_truncation(truncation)?;
    let partial_sum = u.iter().sum();
    let upper: Vec<(f64, f64)> = (truncation / 4..=truncation / 2)
        .map(|k| ((2 * k) as f64, u[2 * k]))
        .collect();
    let window = || FitWindow::new((truncation / 2) as f64, truncation as f64);
    let (tail_estimate, tail_fit) = match tail_method {
        TailMethod::None => (0.0, None),
        TailMethod::PowerLaw => {
            let fit = fit_power_law(&upper, window()?)?;
            (tail_or_infinite(&fit, truncation / 2)?, Some(fit))
        }
        TailMethod::PinnedPowerLaw { exponent } => {
            let window = window()?;
            let pts: Vec<_> = upper.iter().filter(|(n, _)| window.contains(*n)).collect();
            if let Some((n, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
                return Err(EstimateError::NonPositive { n: *n, value: *v });
            }
            let log_amp = pts
                .iter()
                .map(|(n, v)| v.ln() + exponent * n.ln())
                .sum::<f64>()
                / pts.len() as f64;
            let residual = (pts
                .iter()
                .map(|(n, v)| (v.ln() + exponent * n.ln() - log_amp).powi(2))
                .sum::<f64>()
                / pts.len() as f64)
                .sqrt();
            let fit = PowerLawFit {
                amplitude: log_amp.exp(),
                exponent,
                window,
                residual,
                exponent_std_error: 0.0,
                points: pts.len(),
            };
            (tail_or_infinite(&fit, truncation / 2)?, Some(fit))
        }
    };
    Ok(GreenEstimate {
        partial_sum,
        truncation,
        tail_estimate,
        tail_method,
        tail_fit,
        std_error: None,
    })
}

pub fn quenched_green(
    field: &OrientationField,
    truncation: usize,
    tail_method: TailMethod,
) -> Result<GreenEstimate, EstimateError> {
    check_truncation(truncation)?;
    green_from_series(&return_probabilities(truncation, field)?, tail_method)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMethod {
    /// `gamma(N)`, the probability of no return up to time `N`.
    Survival { truncation: usize },
    /// `1 / U` with the given tail.
    InverseGreen { truncation: usize, tail: TailMethod },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub method: GammaMethod,
    pub std_error: Option<f64>,
}

pub fn quenched_gamma(
    field: &OrientationField,
    method: GammaMethod,
) -> Result<GammaEstimate, EstimateError> {
    let value = match method {
        GammaMethod::Survival { truncation } => {
            check_truncation(truncation)?;
            crate::exact::survival_probabilities(truncation, field)?[truncation]
        }
        GammaMethod::InverseGreen { truncation, tail } => {
            1.0 / quenched_green(field, truncation, tail)?.total()
        }
    };
    Ok(GammaEstimate {
        value,
        method,
        std_error: None,
    })
}

/// Per-environment quantities behind the annealed escape probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentGreen {
    pub env_index: u64,
    pub green: GreenEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedGamma {
    /// Mean of `1/U` over environments.
    pub estimate: GammaEstimate,
    /// Mean of `U` over environments.
    pub mean_green: f64,
    /// `1 / mean(U)`; never larger than `estimate.value` (Jensen).
    pub inverse_mean_green: f64,
    /// Environments whose fitted tail diverged (they contribute `1/U = 0`).
    pub divergent_tails: usize,
    pub per_env: Vec<EnvironmentGreen>,
}

/// Escape probability averaged over `num_envs` environments of the ensemble
/// `master_seed`, each from an exact series to `truncation` plus `tail`.
pub fn annealed_gamma(
    master_seed: u64,
    num_envs: usize,
    truncation: usize,
    tail: TailMethod,
) -> Result<AnnealedGamma, EstimateError> {
    check_truncation(truncation)?;
    if num_envs == 0 {
        return Err(EstimateError::TooFewSamples(0));
    }
    let per_env = (0..num_envs as u64)
        .into_par_iter()
        .map(|i| {
            let field = sample_environment(master_seed, i);
            Ok(EnvironmentGreen {
                env_index: i,
                green: quenched_green(&field, truncation, tail)?,
            })
        })
        .collect::<Result<Vec<_>, EstimateError>>()?;
    let inverses: Vec<f64> = per_env.iter().map(|e| 1.0 / e.green.total()).collect();
    let (value, se) = mean_and_std_error(&inverses);
    let mean_green = per_env.iter().map(|e| e.green.total()).sum::<f64>() / num_envs as f64;
    Ok(AnnealedGamma {
        estimate: GammaEstimate {
            value,
            method: GammaMethod::InverseGreen { truncation, tail },
            std_error: se,
        },
        mean_green,
        inverse_mean_green: 1.0 / mean_green,
        divergent_tails: per_env.iter().filter(|e| e.green.tail_diverges()).count(),
        per_env,
    })
}

/// Environment average of exact quenched return probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedSeries {
    pub num_envs: usize,
    /// `u(n)` for `n = 0..=N`.
    pub mean: Vec<f64>,
    /// Standard error across environments (zero where `u` does not depend on
    /// the environment).
    pub std_error: Vec<f64>,
}

impl AnnealedSeries {
    /// `(n, u(n))` at even `n` inside `window`.
    pub fn even_points(&self, window: FitWindow) -> Vec<(f64, f64)> {
        self.mean
            .iter()
            .enumerate()
            .step_by(2)
            .map(|(n, &u)| (n as f64, u))
            .filter(|(n, _)| window.contains(*n))
            .collect()
    }

    pub fn fit(&self, window: FitWindow) -> Result<PowerLawFit, EstimateError> {
        fit_power_law(&self.even_points(window), window)
    }
}

pub fn annealed_return_series(
    master_seed: u64,
    num_envs: usize,
    truncation: usize,
) -> Result<AnnealedSeries, EstimateError> {
    if num_envs == 0 {
        return Err(EstimateError::TooFewSamples(0));
    }
    let series = (0..num_envs as u64)
        .into_par_iter()
        .map(|i| return_probabilities(truncation, &sample_environment(master_seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut mean = Vec::with_capacity(truncation + 1);
    let mut std_error = Vec::with_capacity(truncation + 1);
    let mut column = vec![0.0; num_envs];
    for n in 0..=truncation {
        for (c, s) in column.iter_mut().zip(&series) {
            *c = s[n];
        }
        let (m, se) = mean_and_std_error(&column);
        mean.push(m);
        std_error.push(se.unwrap_or(0.0));
    }
    Ok(AnnealedSeries {
        num_envs,
        mean,
        std_error,
    })
}

/// `gamma(N) * U_est` for one environment, the finite-`N` face of `gamma * U = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    pub env_index: u64,
    pub survival: f64,
    pub green: GreenEstimate,
    pub product: f64,
    /// Whether `gamma(N-1-2l) * sum_{k<=l} u(2k) >= 1 - sum_{k=l+1}^{m} u(2k)`
    /// at every split point `l`, for horizons `n = N` and `N + 1`.
    pub bound_chain_holds: bool,
}

/// The lower-bound chain behind `gamma * U >= 1`, checked on an exact series
/// at horizon `n` for every split point.
pub fn bound_chain_holds(series: &ReturnSeries, n: usize) -> bool {
    let m = crate::exact::last_return_index(n);
    (0..=m).all(|l| {
        let head: f64 = (0..=l).map(|k| series.u[2 * k]).sum();
        let rest: f64 = (l + 1..=m).map(|k| series.u[2 * k]).sum();
        series.gamma[n - 1 - 2 * l] * head >= 1.0 - rest - 1e-12
    })
}

/// Duality at truncation `N` in `field`; `env_index` only labels the result.
pub fn duality_check(
    field: &OrientationField,
    env_index: u64,
    truncation: usize,
    tail: TailMethod,
) -> Result<DualityCheck, EstimateError> {
    check_truncation(truncation)?;
    let series = return_series(truncation, field)?;
    let green = green_from_series(&series.u, tail)?;
    let survival = series.gamma[truncation];
    Ok(DualityCheck {
        env_index,
        survival,
        product: survival * green.total(),
        bound_chain_holds: bound_chain_holds(&series, truncation)
            && bound_chain_holds(&series, truncation + 1),
        green,
    })
}

/// Remainders of the escape-probability sandwich, averaged over environments:
/// `B(n) = E[1 - S(n/2) / U]` with `S(m) = sum_{k<=m} u(2k)`, so that
/// `gamma <= gamma(n) <= gamma + B(n)`, and `G(n) = sum_{k<n} B(k)`, so that
/// `n * gamma <= E[R_n] <= n * gamma + G(n)`. Beyond the exact series, `u` is
/// continued by each environment's tail fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remainders {
    pub n: Vec<usize>,
    pub b: Vec<f64>,
    pub g: Vec<f64>,
}

pub fn remainders(
    master_seed: u64,
    fit: &AnnealedGamma,
    grid: &[usize],
) -> Result<Remainders, EstimateError> {
    let horizon = grid.iter().copied().max().unwrap_or(0);
    let per_env: Vec<Vec<f64>> = fit
        .per_env
        .par_iter()
        .map(|e| {
            let u = return_probabilities(
                e.green.truncation,
                &sample_environment(master_seed, e.env_index),
            )?;
            let total = e.green.total();
            // B(k) for k = 0..=horizon.
            let mut b = Vec::with_capacity(horizon + 1);
            let mut s = 0.0;
            for k in 0..=horizon {
                if k % 2 == 0 {
                    s += if k <= e.green.truncation {
                        u[k]
                    } else {
                        e.green
                            .tail_fit
                            .as_ref()
                            .map_or(0.0, |f| f.predict(k as f64))
                    };
                }
                b.push((1.0 - s / total).max(0.0));
            }
            Ok(b)
        })
        .collect::<Result<_, EstimateError>>()?;
    let envs = per_env.len() as f64;
    let b_mean: Vec<f64> = (0..=horizon)
        .map(|k| per_env.iter().map(|b| b[k]).sum::<f64>() / envs)
        .collect();
    let mut g_all = Vec::with_capacity(horizon + 1);
    let mut acc = 0.0;
    for &b in &b_mean {
        g_all.push(acc);
        acc += b;
    }
    Ok(Remainders {
        n: grid.to_vec(),
        b: grid.iter().map(|&n| b_mean[n]).collect(),
        g: grid.iter().map(|&n| g_all[n]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::Sign;

    #[test]
    fn two_step_green_and_gamma() {
        for field in [sample_environment(1, 0), OrientationField::alternating()] {
            let g = quenched_green(&field, 2, TailMethod::None).unwrap();
            assert!((g.partial_sum - 11.0 / 9.0).abs() < 1e-15);
            assert_eq!(g.total(), g.partial_sum);
            let s = quenched_gamma(&field, GammaMethod::Survival { truncation: 2 }).unwrap();
            assert!((s.value - 7.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_must_be_even_and_at_least_two() {
        let f = OrientationField::constant(Sign::Plus);
        assert!(matches!(
            quenched_green(&f, 3, TailMethod::None),
            Err(EstimateError::BadTruncation(3))
        ));
        assert!(quenched_green(&f, 0, TailMethod::None).is_err());
    }

    #[test]
    fn partial_sums_grow_and_survival_shrinks() {
        let f = sample_environment(4, 4);
        let mut prev_sum = 0.0;
        let mut prev_surv = 1.0;
        for n in (2..=80).step_by(2) {
            let g = quenched_green(&f, n, TailMethod::None).unwrap();
            assert!(g.partial_sum >= prev_sum && g.partial_sum >= 1.0);
            prev_sum = g.partial_sum;
            let s = quenched_gamma(&f, GammaMethod::Survival { truncation: n })
                .unwrap()
                .value;
            assert!(s <= prev_surv);
            prev_surv = s;
        }
    }

    #[test]
    fn survival_times_long_run_green() {
        // Split the horizon-(5N+1) renewal sum at 2l = 4N:
        // gamma(N) * S(4N) >= 1 - sum_{4N < 2k <= 5N} u(2k).
        let f = sample_environment(8, 1);
        let n = 60;
        let series = return_series(5 * n + 1, &f).unwrap();
        let surv = quenched_gamma(&f, GammaMethod::Survival { truncation: n })
            .unwrap()
            .value;
        assert_eq!(surv, series.gamma[n]);
        let long = quenched_green(&f, 4 * n, TailMethod::None).unwrap();
        let rest: f64 = (4 * n + 2..=5 * n).step_by(2).map(|k| series.u[k]).sum();
        assert!(surv * long.partial_sum >= 1.0 - rest - 1e-12);
        assert!(bound_chain_holds(&series, 5 * n + 1));
    }

    #[test]
    fn pinned_tail_on_exact_power_law() {
        let u: Vec<f64> = (0..=400)
            .map(|n| {
                if n == 0 {
                    1.0
                } else if n % 2 == 1 {
                    0.0
                } else {
                    0.9 * (n as f64).powf(-1.25)
                }
            })
            .collect();
        let free = green_from_series(&u, TailMethod::PowerLaw).unwrap();
        let pinned = green_from_series(&u, TailMethod::PinnedPowerLaw { exponent: 1.25 }).unwrap();
        let fit = free.tail_fit.unwrap();
        assert!((fit.exponent - 1.25).abs() < 1e-10 && (fit.amplitude - 0.9).abs() < 1e-10);
        assert!((free.tail_estimate - pinned.tail_estimate).abs() < 1e-10);
        let direct: f64 = (201..2_000_000)
            .map(|j| 0.9 * (2.0 * j as f64).powf(-1.25))
            .sum::<f64>();
        // Direct sum stops early; its missing part is about 0.9*2^-1.25*4*(2e6)^-0.25.
        let missing = 0.9 * 2f64.powf(-1.25) * 4.0 * 2e6f64.powf(-0.25);
        assert!((free.tail_estimate - direct - missing).abs() / free.tail_estimate < 1e-3);
    }

    #[test]
    fn flat_tail_is_infinite() {
        let u: Vec<f64> = (0..=100)
            .map(|n| {
                if n == 0 {
                    1.0
                } else if n % 2 == 1 {
                    0.0
                } else {
                    0.5 / n as f64
                }
            })
            .collect();
        let g = green_from_series(&u, TailMethod::PowerLaw).unwrap();
        assert!(g.tail_diverges() && g.partial_sum.is_finite());
        assert_eq!(1.0 / g.total(), 0.0);
    }

    #[test]
    fn annealed_gamma_jensen_and_single_env() {
        let a = annealed_gamma(3, 6, 40, TailMethod::None).unwrap();
        assert!(a.estimate.value > 0.0 && a.estimate.value <= 1.0);
        assert!(a.estimate.value >= a.inverse_mean_green);
        assert!(a.estimate.std_error.is_some());
        let one = annealed_gamma(3, 1, 40, TailMethod::None).unwrap();
        let direct = quenched_gamma(
            &sample_environment(3, 0),
            GammaMethod::InverseGreen {
                truncation: 40,
                tail: TailMethod::None,
            },
        )
        .unwrap();
        assert_eq!(one.estimate.value, direct.value);
        assert_eq!(one.estimate.std_error, None);
    }

    #[test]
    fn annealed_series_basics() {
        let s = annealed_return_series(5, 8, 20).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert!((s.mean[2] - 2.0 / 9.0).abs() < 1e-15);
        assert!(s.std_error[2] < 1e-15);
        for n in (1..=20).step_by(2) {
            assert_eq!(s.mean[n], 0.0);
        }
    }
}
