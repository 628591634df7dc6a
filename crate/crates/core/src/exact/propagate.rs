//! Exact evolution of the quenched site distribution, optionally with a
//! killed (taboo) site.
//!
//! After `k` steps the support lies in the L1 ball of radius `k` and only on
//! sites with `x + y + k` even, so each step touches about `k^2` cells. Rows
//! are stored densely over the `[-n, n]^2` box with a one-cell halo; the
//! update pulls from the two vertical neighbours and from the horizontal
//! predecessor `x - e_y`, so it is a pure function of the previous step and
//! independent of iteration order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExactError;
use crate::orientation::OrientationField;
use crate::walk::Position;

/// Quenched distribution of `M_step`, restricted to surviving mass when a
/// taboo site is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub mass: BTreeMap<Position, f64>,
    pub step: usize,
    pub taboo: Option<Position>,
    pub leaked: f64,
}

impl ExactDistribution {
    pub fn mass_at(&self, p: Position) -> f64 {
        self.mass.get(&p).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Checks nonnegativity, conservation to `tol`, the support radius and
    /// the parity law.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        for (p, &m) in &self.mass {
            if m < 0.0 {
                return Err(format!("negative mass {m} at {p}"));
            }
            if m != 0.0 && p.l1_norm() > self.step as i64 {
                return Err(format!("mass at {p} beyond radius {}", self.step));
            }
            if m != 0.0 && (p.x + p.y + self.step as i64).rem_euclid(2) != 0 {
                return Err(format!(
                    "mass {m} on odd-parity site {p} at step {}",
                    self.step
                ));
            }
        }
        let total = self.total() + self.leaked;
        if (total - 1.0).abs() > tol {
            return Err(format!("total mass {total} at step {}", self.step));
        }
        Ok(())
    }
}

/// Streaming propagator for up to `max_steps` steps.
#[derive(Debug, Clone)]
pub struct Propagator {
    /// `e_y` for `y` in `-max_steps..=max_steps`.
    directions: Vec<i64>,
    max_steps: usize,
    width: usize,
    current: Vec<f64>,
    next: Vec<f64>,
    step: usize,
    taboo: Option<Position>,
    leaked: f64,
    live: f64,
}

impl Propagator {
    pub fn new(
        field: &OrientationField,
        taboo: Option<Position>,
        max_steps: usize,
    ) -> Result<Self, ExactError> {
        let r = max_steps as i64;
        let directions = field
            .window(-r, r)
            .map_err(|_| ExactError::FieldTooSmall(max_steps))?;
        let width = 2 * max_steps + 3;
        let mut me = Self {
            directions,
            max_steps,
            width,
            current: vec![0.0; width * width],
            next: vec![0.0; width * width],
            step: 0,
            taboo,
            leaked: 0.0,
            live: 1.0,
        };
        let origin = me.index(0, 0);
        me.current[origin] = 1.0;
        Ok(me)
    }

    #[inline]
    fn index(&self, x: i64, y: i64) -> usize {
        let off = self.max_steps as i64 + 1;
        ((y + off) as usize) * self.width + (x + off) as usize
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn leaked(&self) -> f64 {
        self.leaked
    }

    /// Total mass still on the lattice (the survival probability under a taboo).
    pub fn live_mass(&self) -> f64 {
        self.live
    }

    pub fn mass_at(&self, p: Position) -> f64 {
        let r = self.max_steps as i64;
        if p.x.abs() > r || p.y.abs() > r {
            return 0.0;
        }
        self.current[self.index(p.x, p.y)]
    }

    /// Advances one step. Returns `false` once `max_steps` is reached.
    pub fn advance(&mut self) -> bool {
        if self.step == self.max_steps {
            return false;
        }
        let k = (self.step + 1) as i64;
        let w = self.width;
        let third = 1.0 / 3.0;
        let mut live = 0.0;
        for y in -k..=k {
            let span = k - y.abs();
            let e = self.directions[(y + self.max_steps as i64) as usize];
            // First x in [-span, span] with x + y + k even.
            let x0 = -span;
            let row = self.index(0, y) as i64;
            let cur = &self.current;
            let next = &mut self.next;
            let mut x = x0;
            while x <= span {
                let i = (row + x) as usize;
                let v = (cur[i - w] + cur[i + w] + cur[(i as i64 - e) as usize]) * third;
                next[i] = v;
                live += v;
                x += 2;
            }
        }
        if let Some(t) = self.taboo {
            let r = self.max_steps as i64;
            if t.x.abs() <= r && t.y.abs() <= r {
                let i = self.index(t.x, t.y);
                let m = self.next[i];
                self.leaked += m;
                live -= m;
                self.next[i] = 0.0;
            }
        }
        std::mem::swap(&mut self.current, &mut self.next);
        self.live = live;
        self.step += 1;
        true
    }

    /// Sparse copy of the current distribution (every nonzero cell).
    pub fn snapshot(&self) -> ExactDistribution {
        let r = self.max_steps as i64 + 1;
        let mut mass = BTreeMap::new();
        for y in -r..=r {
            for x in -r..=r {
                let m = self.current[self.index(x, y)];
                if m != 0.0 {
                    mass.insert(Position::new(x, y), m);
                }
            }
        }
        ExactDistribution {
            mass,
            step: self.step,
            taboo: self.taboo,
            leaked: self.leaked,
        }
    }
}

/// Distributions at steps `0..=n`. Memory grows like `n^3`; use
/// [`Propagator`] directly or [`return_series`] for long runs.
pub fn propagate(
    n: usize,
    field: &OrientationField,
    taboo: Option<Position>,
) -> Result<Vec<ExactDistribution>, ExactError> {
    let mut p = Propagator::new(field, taboo, n)?;
    let mut out = vec![p.snapshot()];
    while p.advance() {
        out.push(p.snapshot());
    }
    Ok(out)
}

/// Return probabilities `u(k) = P[M_k = (0,0)]` for `k = 0..=n`.
pub fn return_probabilities(n: usize, field: &OrientationField) -> Result<Vec<f64>, ExactError> {
    let mut p = Propagator::new(field, None, n)?;
    let mut u = Vec::with_capacity(n + 1);
    u.push(1.0);
    while p.advance() {
        u.push(p.mass_at(Position::ORIGIN));
    }
    Ok(u)
}

/// Survival probabilities `gamma(k) = P[M_l != (0,0), 1 <= l <= k]` for
/// `k = 0..=n`, as one minus the killed mass (monotone in floating point).
pub fn survival_probabilities(n: usize, field: &OrientationField) -> Result<Vec<f64>, ExactError> {
    let mut p = Propagator::new(field, Some(Position::ORIGIN), n)?;
    let mut g = Vec::with_capacity(n + 1);
    g.push(1.0);
    while p.advance() {
        g.push(1.0 - p.leaked());
    }
    Ok(g)
}

/// Paired return and survival series of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// CSV rows `k,u,gamma`.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::from("k,u,gamma\n");
        for (k, (u, g)) in self.u.iter().zip(&self.gamma).enumerate() {
            s.push_str(&format!(
                "{k},{},{}\n",
                crate::report::fmt_f64(*u),
                crate::report::fmt_f64(*g)
            ));
        }
        s
    }
}

pub fn return_series(n: usize, field: &OrientationField) -> Result<ReturnSeries, ExactError> {
    Ok(ReturnSeries {
        u: return_probabilities(n, field)?,
        gamma: survival_probabilities(n, field)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::{sample_environment, Sign};

    #[test]
    fn starts_with_unit_mass() {
        let d = propagate(0, &sample_environment(1, 1), None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].mass.len(), 1);
        assert_eq!(d[0].mass_at(Position::ORIGIN), 1.0);
    }

    #[test]
    fn two_step_return() {
        for seed in 0..5 {
            let u = return_probabilities(2, &sample_environment(seed, 0)).unwrap();
            assert!((u[2] - 2.0 / 9.0).abs() < 1e-15);
            assert_eq!(u[1], 0.0);
        }
        let g = survival_probabilities(2, &OrientationField::alternating()).unwrap();
        assert!((g[2] - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn invariants_along_the_way() {
        let f = sample_environment(6, 1);
        for taboo in [None, Some(Position::ORIGIN), Some(Position::new(1, 1))] {
            for d in propagate(30, &f, taboo).unwrap() {
                d.check_invariants(1e-12).unwrap();
            }
        }
    }

    #[test]
    fn constant_field_first_steps() {
        let f = OrientationField::constant(Sign::Plus);
        let d = propagate(1, &f, None).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(d[1].mass_at(Position::new(1, 0)), third);
        assert_eq!(d[1].mass_at(Position::new(0, 1)), third);
        assert_eq!(d[1].mass_at(Position::new(0, -1)), third);
        assert_eq!(d[1].mass_at(Position::new(-1, 0)), 0.0);
    }

    #[test]
    fn taboo_leak_accounts_for_first_returns() {
        let f = sample_environment(2, 9);
        let mut p = Propagator::new(&f, Some(Position::ORIGIN), 4).unwrap();
        p.advance();
        assert_eq!(p.leaked(), 0.0);
        p.advance();
        assert!((p.leaked() - 2.0 / 9.0).abs() < 1e-15);
        assert!(!Propagator::new(&f, None, 0).unwrap().advance());
    }

    #[test]
    fn explicit_field_must_cover_the_box() {
        let f = OrientationField::from_levels(-2, [Sign::Plus; 5]);
        assert!(return_probabilities(2, &f).is_ok());
        assert_eq!(
            return_probabilities(3, &f),
            Err(ExactError::FieldTooSmall(3))
        );
    }

    #[test]
    fn survival_is_monotone() {
        let g = survival_probabilities(200, &sample_environment(3, 3)).unwrap();
        for w in g.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(g[200] > 0.0);
        let mut p =
            Propagator::new(&sample_environment(3, 3), Some(Position::ORIGIN), 200).unwrap();
        while p.advance() {
            assert!((p.live_mass() - g[p.step()]).abs() < 1e-13);
        }
    }

    #[test]
    fn series_csv() {
        let s = return_series(2, &OrientationField::alternating()).unwrap();
        let csv = s.to_csv_rows();
        assert!(csv.starts_with(
            "k,u,gamma\n0,1.0000000000000000e0,1.0000000000000000e0\n1,0.0000000000000000e0,1.0000000000000000e0\n"
        ));
    }
}
