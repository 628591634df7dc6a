//! Range of a walk: the number of distinct sites among `M_0, .., M_{n-1}`,
//! with the per-step "new site" and "no return" events.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::walk::{Position, Trajectory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RangeError {
    #[error("time index {index} outside trajectory of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("event requires j < k, got j = {j}, k = {k}")]
    BadOrder { j: usize, k: usize },
}

/// Incremental distinct-site counter over a stream of positions.
#[derive(Debug, Default, Clone)]
pub struct RangeTracker {
    visited: FxHashSet<u64>,
}

impl RangeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            visited: FxHashSet::with_capacity_and_hasher(n, Default::default()),
        }
    }

    /// Records a position; returns whether it had not been seen before.
    #[inline]
    pub fn observe(&mut self, p: Position) -> bool {
        self.visited.insert(p.pack())
    }

    pub fn range(&self) -> usize {
        self.visited.len()
    }

    pub fn clear(&mut self) {
        self.visited.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeSeries {
    /// `R_1, .., R_n`.
    pub counts: Vec<usize>,
    /// Indicator of `A_k` for `k = 0, .., n-1`.
    pub new_site: Vec<bool>,
    /// Largest `k <= n` such that `M_l != (0,0)` for all `1 <= l <= k`.
    pub no_return_horizon: usize,
}

impl RangeSeries {
    /// `R_k`, with `R_0 = 0`.
    pub fn range_at(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.counts[k - 1]
        }
    }

    /// Indicator of `B_k`.
    pub fn no_return(&self, k: usize) -> bool {
        k <= self.no_return_horizon
    }
}

pub fn track(traj: &Trajectory) -> RangeSeries {
    let n = traj.len();
    let mut tracker = RangeTracker::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut new_site = Vec::with_capacity(n);
    for &p in &traj.positions[..n] {
        new_site.push(tracker.observe(p));
        counts.push(tracker.range());
    }
    let no_return_horizon = traj.positions[1..]
        .iter()
        .position(|&p| p == Position::ORIGIN)
        .unwrap_or(n);
    RangeSeries {
        counts,
        new_site,
        no_return_horizon,
    }
}

/// The events whose correlations drive the range variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// `A_k`: `M_k` differs from every earlier position.
    NewSite(usize),
    /// `B_k`: no visit to the origin at times `1..=k`.
    NoReturn(usize),
    /// `A_{j,k}`: `M_k` differs from `M_j, .., M_{k-1}`.
    FreshSince(usize, usize),
    /// `A_{j,k}` minus `A_k`: `M_k` is new since time `j` but was visited before `j`.
    RediscoverOld(usize, usize),
}

pub fn event_probe(traj: &Trajectory, kind: EventKind) -> Result<bool, RangeError> {
    event_on_positions(&traj.positions, kind)
}

/// [`event_probe`] on a bare position sequence `M_0, .., M_n`.
pub fn event_on_positions(positions: &[Position], kind: EventKind) -> Result<bool, RangeError> {
    let n = positions.len() - 1;
    let check = |index: usize| {
        if index > n {
            Err(RangeError::IndexOutOfRange { index, len: n })
        } else {
            Ok(())
        }
    };
    let ordered = |j: usize, k: usize| {
        check(k)?;
        if j >= k {
            Err(RangeError::BadOrder { j, k })
        } else {
            Ok(())
        }
    };
    Ok(match kind {
        EventKind::NewSite(k) => {
            check(k)?;
            !positions[..k].contains(&positions[k])
        }
        EventKind::NoReturn(k) => {
            check(k)?;
            !positions[1..=k].contains(&Position::ORIGIN)
        }
        EventKind::FreshSince(j, k) => {
            ordered(j, k)?;
            !positions[j..k].contains(&positions[k])
        }
        EventKind::RediscoverOld(j, k) => {
            ordered(j, k)?;
            !positions[j..k].contains(&positions[k]) && positions[..j].contains(&positions[k])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::{OrientationField, Sign};
    use crate::walk::{simulate, MoveKind, WalkMode};
    use proptest::prelude::*;

    fn up_down_up_down() -> Trajectory {
        let f = OrientationField::constant(Sign::Plus);
        use MoveKind::*;
        Trajectory::from_moves(&f, &[Up, Down, Up, Down])
    }

    #[test]
    fn hand_counted_path() {
        let s = track(&up_down_up_down());
        assert_eq!(s.counts, vec![1, 2, 2, 2]);
        assert_eq!(s.new_site, vec![true, true, false, false]);
        assert_eq!(s.no_return_horizon, 1);
        assert!(s.no_return(1));
        assert!(!s.no_return(2));
        assert_eq!(s.range_at(0), 0);
    }

    #[test]
    fn self_avoiding_path() {
        let f = OrientationField::constant(Sign::Plus);
        let t = Trajectory::from_moves(&f, &[MoveKind::Horizontal; 25]);
        let s = track(&t);
        for k in 1..=25 {
            assert_eq!(s.range_at(k), k);
        }
        assert_eq!(s.no_return_horizon, 25);
    }

    #[test]
    fn empty_trajectory() {
        let t = simulate(0, &WalkMode::Annealed { master_seed: 0 }, 0);
        let s = track(&t);
        assert!(s.counts.is_empty());
        assert_eq!(s.range_at(0), 0);
        assert_eq!(s.no_return_horizon, 0);
    }

    #[test]
    fn probe_examples() {
        let t = up_down_up_down();
        assert_eq!(event_probe(&t, EventKind::NewSite(0)), Ok(true));
        assert_eq!(event_probe(&t, EventKind::RediscoverOld(2, 3)), Ok(true));
        assert_eq!(event_probe(&t, EventKind::FreshSince(2, 3)), Ok(true));
        assert_eq!(event_probe(&t, EventKind::NewSite(3)), Ok(false));
        for k in 1..=4 {
            assert_eq!(event_probe(&t, EventKind::FreshSince(k - 1, k)), Ok(true));
        }
        assert_eq!(
            event_probe(&t, EventKind::NewSite(5)),
            Err(RangeError::IndexOutOfRange { index: 5, len: 4 })
        );
        assert_eq!(
            event_probe(&t, EventKind::FreshSince(3, 3)),
            Err(RangeError::BadOrder { j: 3, k: 3 })
        );
    }

    proptest! {
        #[test]
        fn series_invariants(seed in any::<u64>(), index in 0u64..1000, n in 0usize..300) {
            let t = simulate(n, &WalkMode::Annealed { master_seed: seed }, index);
            let s = track(&t);
            prop_assert_eq!(s.counts.len(), n);
            if n > 0 {
                prop_assert_eq!(s.counts[0], 1);
                prop_assert!(s.new_site[0]);
            }
            for k in 1..=n {
                let r = s.range_at(k);
                prop_assert!(r <= k);
                prop_assert!(r - s.range_at(k - 1) <= 1);
                let naive: std::collections::BTreeSet<_> = t.positions[..k].iter().collect();
                prop_assert_eq!(r, naive.len());
                prop_assert_eq!(r, s.new_site[..k].iter().filter(|b| **b).count());
            }
            // B_k is decreasing in k and matches the probe.
            for k in 1..=n {
                let b = event_probe(&t, EventKind::NoReturn(k)).unwrap();
                prop_assert_eq!(b, s.no_return(k));
                if k > 1 && b {
                    prop_assert!(s.no_return(k - 1));
                }
            }
            prop_assert_eq!(
                s.no_return_horizon == n,
                !t.positions[1..].contains(&Position::ORIGIN)
            );
        }

        #[test]
        fn fresh_since_is_a_disjoint_union(seed in any::<u64>(), n in 2usize..60) {
            let t = simulate(n, &WalkMode::Annealed { master_seed: seed }, 0);
            for k in 1..=n {
                let a_k = event_probe(&t, EventKind::NewSite(k)).unwrap();
                prop_assert_eq!(event_probe(&t, EventKind::FreshSince(0, k)).unwrap(), a_k);
                for j in 0..k {
                    let fresh = event_probe(&t, EventKind::FreshSince(j, k)).unwrap();
                    let old = event_probe(&t, EventKind::RediscoverOld(j, k)).unwrap();
                    prop_assert!(!(a_k && old));
                    prop_assert_eq!(fresh as u8, a_k as u8 + old as u8);
                }
            }
        }
    }
}
