//! Exact oracles: path enumeration for short walks and distribution
//! propagation for longer quenched runs, plus the identity checks built on
//! them.

mod enumerate;
mod propagate;

pub use enumerate::{
    annealed_by_environment_average, annealed_path_weight, enumerate_annealed, enumerate_quenched,
    positions_of, reversed_path, tally_annealed, tally_quenched, verify_reversibility,
    Displacement, PathWeight, Tally, MAX_BRUTE_FORCE_STEPS, MAX_ENUMERATION_STEPS,
};
pub use propagate::{
    propagate, return_probabilities, return_series, survival_probabilities, ExactDistribution,
    Propagator, ReturnSeries,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orientation::OrientationField;
use crate::walk::Position;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("n = {n} exceeds the enumeration budget of {max} steps")]
    OverBudget { n: usize, max: usize },
    #[error("orientation field does not cover levels -{0}..={0}")]
    FieldTooSmall(usize),
}

/// Number of terms in the last-return decomposition at horizon `n >= 1`:
/// the last visit to the origin strictly before `n` happens at an even time
/// `2k <= n - 1`.
pub fn last_return_index(n: usize) -> usize {
    assert!(n >= 1, "last-return decomposition needs n >= 1");
    (n - 1) / 2
}

/// `|sum_{k=0}^{m} u(2k) * gamma(n-1-2k) - 1|` with `m = (n-1)/2`, i.e. the
/// decomposition over the last visit to the origin before time `n`. After
/// that visit the walk must avoid the origin for the `n-1-2k` remaining steps.
pub fn renewal_residual(series: &ReturnSeries, n: usize) -> f64 {
    assert!(n >= 1 && n <= series.len(), "need u, gamma up to n-1");
    let total: f64 = (0..=last_return_index(n))
        .map(|k| series.u[2 * k] * series.gamma[n - 1 - 2 * k])
        .sum();
    (total - 1.0).abs()
}

/// Renewal residual at horizon `n` from exact propagation.
pub fn verify_renewal(n: usize, field: &OrientationField) -> Result<f64, ExactError> {
    let series = return_series(n.saturating_sub(1), field)?;
    Ok(renewal_residual(&series, n))
}

/// Largest renewal residual over horizons `1..=n`.
pub fn max_renewal_residual(series: &ReturnSeries) -> f64 {
    (1..=series.len())
        .map(|n| renewal_residual(series, n))
        .fold(0.0, f64::max)
}

/// `u(k)` and `gamma(k)` for `k = 0..=n` by enumeration.
pub fn enumerated_series(n: usize, field: &OrientationField) -> Result<ReturnSeries, ExactError> {
    let tally = tally_quenched(n, field, 2 * (n + 1), |p, out| {
        let n = p.len() - 1;
        let mut survived = true;
        for k in 0..=n {
            let home = p[k] == Position::ORIGIN;
            if k > 0 && home {
                survived = false;
            }
            out[k] = home;
            out[n + 1 + k] = survived;
        }
    })?;
    let probs = tally.probabilities();
    Ok(ReturnSeries {
        u: probs[..=n].to_vec(),
        gamma: probs[n + 1..].to_vec(),
    })
}

/// Fills `last[k]` with the latest time `l < k` such that `M_l = M_k`.
fn last_visits(p: &[Position], last: &mut [Option<usize>]) {
    for k in 0..p.len() {
        last[k] = (0..k).rev().find(|&l| p[l] == p[k]);
    }
}

/// Result of the quenched subadditivity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub n: usize,
    /// Whether `P[A_j and A_k] <= P[A_j] * P[A_{j,k}]` for all `j < k <= n`
    /// (compared in exact arithmetic).
    pub holds: bool,
    /// Pairs `(j, k)` where it fails.
    pub violations: Vec<(usize, usize)>,
    /// Largest `P[A_j and A_k] - P[A_j] * P[A_{j,k}]` (negative when it holds strictly).
    pub max_excess: f64,
    /// `max_k |P[A_k] - gamma(k)|` in the given environment.
    pub new_site_vs_survival: f64,
    /// `max_k |P[A_k] - gamma^(-e)(k)|`, survival in the negated environment.
    pub new_site_vs_negated_survival: f64,
}

pub fn verify_subadditivity(
    n: usize,
    field: &OrientationField,
) -> Result<SubadditivityReport, ExactError> {
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|k| (0..k).map(move |j| (j, k))).collect();
    let np = pairs.len();
    // Layout: A_k for k in 0..=n, then per pair A_{j,k}, then per pair A_j and A_k.
    let num_events = (n + 1) + 2 * np;
    let tally = tally_quenched(n, field, num_events, |p, out| {
        let mut last = vec![None; p.len()];
        last_visits(p, &mut last);
        let new_site = |k: usize| last[k].is_none();
        let fresh = |j: usize, k: usize| last[k].is_none_or(|l| l < j);
        for k in 0..p.len() {
            out[k] = new_site(k);
        }
        for (i, &(j, k)) in pairs.iter().enumerate() {
            out[n + 1 + i] = fresh(j, k);
            out[n + 1 + np + i] = new_site(j) && new_site(k);
        }
    })?;
    let den = tally.denominator;
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for (i, &(j, k)) in pairs.iter().enumerate() {
        let joint = tally.numerators[n + 1 + np + i];
        let a_j = tally.numerators[j];
        let fresh = tally.numerators[n + 1 + i];
        // joint / den <= (a_j / den) * (fresh / den)  <=>  joint * den <= a_j * fresh
        if joint * den > a_j * fresh {
            violations.push((j, k));
        }
        let excess =
            tally.probability(n + 1 + np + i) - tally.probability(j) * tally.probability(n + 1 + i);
        max_excess = max_excess.max(excess);
    }
    let gamma = enumerated_series(n, field)?.gamma;
    let gamma_neg = enumerated_series(n, &field.negate())?.gamma;
    let dev = |g: &[f64]| {
        (0..=n)
            .map(|k| (tally.probability(k) - g[k]).abs())
            .fold(0.0, f64::max)
    };
    Ok(SubadditivityReport {
        n,
        holds: violations.is_empty(),
        violations,
        max_excess: if np == 0 { 0.0 } else { max_excess },
        new_site_vs_survival: dev(&gamma),
        new_site_vs_negated_survival: dev(&gamma_neg),
    })
}

/// Quenched time-reversal identity with the environment shift made explicit:
/// reversing a path `0 -> x` in `e` gives a path `0 -> -x` in the negated
/// environment seen from level `x_2`, so
/// `P^e[A_k] = sum_h P^{-e(. + h)}[B_k, M_k.y = -h]`.
/// Returns `max_k` of the absolute gap for `k = 0..=n`.
pub fn shifted_reversal_gap(n: usize, field: &OrientationField) -> Result<f64, ExactError> {
    let r = n as i64;
    let window = field
        .window(-2 * r, 2 * r)
        .map_err(|_| ExactError::FieldTooSmall(2 * n))?;
    let new_site = tally_quenched(n, field, n + 1, |p, out| {
        for k in 0..p.len() {
            out[k] = !p[..k].contains(&p[k]);
        }
    })?;
    let mut rhs = vec![0.0; n + 1];
    for h in -r..=r {
        let shifted = OrientationField::from_levels(
            -r,
            (-r..=r).map(|y| {
                crate::orientation::Sign::from_value(-window[(y + h + 2 * r) as usize])
                    .expect("window holds signs")
            }),
        );
        let t = tally_quenched(n, &shifted, n + 1, |p, out| {
            let mut survived = true;
            for k in 0..p.len() {
                if k > 0 && p[k] == Position::ORIGIN {
                    survived = false;
                }
                out[k] = survived && p[k].y == -h;
            }
        })?;
        for (acc, v) in rhs.iter_mut().zip(t.probabilities()) {
            *acc += v;
        }
    }
    Ok((0..=n)
        .map(|k| (new_site.probability(k) - rhs[k]).abs())
        .fold(0.0, f64::max))
}

/// Annealed `P[A_k]` and `P[B_k]` for `k = 0..=n`, exact.
pub fn annealed_new_site_and_survival(n: usize) -> Result<(Tally, usize), ExactError> {
    let tally = tally_annealed(n, 2 * (n + 1), |p, out| {
        let n = p.len() - 1;
        let mut survived = true;
        for k in 0..=n {
            if k > 0 && p[k] == Position::ORIGIN {
                survived = false;
            }
            out[k] = !p[..k].contains(&p[k]);
            out[n + 1 + k] = survived;
        }
    })?;
    Ok((tally, n + 1))
}

/// `max_k |P[A_k] - P[B_k]|` under the annealed law; zero in exact arithmetic
/// when the identity holds.
pub fn annealed_new_site_gap(n: usize) -> Result<f64, ExactError> {
    let (tally, offset) = annealed_new_site_and_survival(n)?;
    Ok((0..=n)
        .map(|k| {
            if tally.numerators[k] == tally.numerators[offset + k] {
                0.0
            } else {
                (tally.probability(k) - tally.probability(offset + k)).abs()
            }
        })
        .fold(0.0, f64::max))
}

/// Both sides of the annealed subadditivity question for all `j < k <= n`:
/// `E[P^e[A_j] * P^e[A_{j,k}]]` against `P[A_j] * P[A_{k-j}]`, by averaging
/// over every orientation of the levels `-n..=n`. Reported, never asserted.
pub fn annealed_subadditivity_sides(n: usize) -> Result<Vec<(usize, usize, f64, f64)>, ExactError> {
    if n > MAX_BRUTE_FORCE_STEPS {
        return Err(ExactError::OverBudget {
            n,
            max: MAX_BRUTE_FORCE_STEPS,
        });
    }
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|k| (0..k).map(move |j| (j, k))).collect();
    let levels = 2 * n + 1;
    let mut lhs = vec![0.0; pairs.len()];
    let envs = 1u64 << levels;
    for mask in 0..envs {
        let field = OrientationField::from_levels(
            -(n as i64),
            (0..levels).map(|i| {
                if mask >> i & 1 == 1 {
                    crate::orientation::Sign::Plus
                } else {
                    crate::orientation::Sign::Minus
                }
            }),
        );
        let np = pairs.len();
        let t = tally_quenched(n, &field, n + 1 + np, |p, out| {
            let mut last = vec![None; p.len()];
            last_visits(p, &mut last);
            for k in 0..p.len() {
                out[k] = last[k].is_none();
            }
            for (i, &(j, k)) in pairs.iter().enumerate() {
                out[n + 1 + i] = last[k].is_none_or(|l| l < j);
            }
        })?;
        for (i, &(j, _)) in pairs.iter().enumerate() {
            lhs[i] += t.probability(j) * t.probability(n + 1 + i);
        }
    }
    let (annealed, _) = annealed_new_site_and_survival(n)?;
    Ok(pairs
        .iter()
        .zip(lhs)
        .map(|(&(j, k), l)| {
            (
                j,
                k,
                l / envs as f64,
                annealed.probability(j) * annealed.probability(k - j),
            )
        })
        .collect())
}
