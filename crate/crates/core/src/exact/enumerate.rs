//! Exhaustive path enumeration, quenched and annealed.
//!
//! Quenched: each of the `3^n` move sequences has weight `3^-n`. Annealed:
//! the environment is integrated out path by path. Under the product measure
//! a path whose horizontal steps agree in direction on every level has
//! weight `3^-n * 2^-h`, where `h` counts the levels carrying horizontal
//! steps; any other path has weight zero. Counting in units of `6^-n` keeps
//! every weight an integer, so all tallies are exact.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rayon::prelude::*;

use super::ExactError;
use crate::orientation::{OrientationField, Sign};
use crate::walk::{step, MoveKind, Position};

/// Enumeration budget in steps.
pub const MAX_ENUMERATION_STEPS: usize = 14;

/// Largest `n` for which annealed values are also computed by averaging over
/// every orientation of the levels `-n..=n`.
pub const MAX_BRUTE_FORCE_STEPS: usize = 6;

/// Exact probabilities of a family of events: `numerators[i] / denominator`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub numerators: Vec<u128>,
    pub denominator: u128,
}

impl Tally {
    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.numerators[i] as f64 / self.denominator as f64
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probability(i)).collect()
    }

    pub fn ratio(&self, i: usize) -> Ratio<u128> {
        Ratio::new(self.numerators[i], self.denominator)
    }

    fn merge(mut self, other: &Tally) -> Tally {
        debug_assert_eq!(self.denominator, other.denominator);
        for (a, b) in self.numerators.iter_mut().zip(&other.numerators) {
            *a += b;
        }
        self
    }
}

fn check_budget(n: usize, max: usize) -> Result<(), ExactError> {
    if n > max {
        Err(ExactError::OverBudget { n, max })
    } else {
        Ok(())
    }
}

/// Evaluates `num_events` indicators on every quenched path of length `n`.
/// The evaluator receives `M_0, .., M_n` and fills one flag per event.
pub fn tally_quenched<F>(
    n: usize,
    field: &OrientationField,
    num_events: usize,
    eval: F,
) -> Result<Tally, ExactError>
where
    F: Fn(&[Position], &mut [bool]) + Sync,
{
    check_budget(n, MAX_ENUMERATION_STEPS)?;
    if !field.covers(-(n as i64), n as i64) {
        return Err(ExactError::FieldTooSmall(n));
    }
    let denominator = 3u128.pow(n as u32);
    let empty = Tally {
        numerators: vec![0; num_events],
        denominator,
    };
    if n == 0 {
        let mut tally = empty;
        let mut flags = vec![false; num_events];
        eval(&[Position::ORIGIN], &mut flags);
        for (c, f) in tally.numerators.iter_mut().zip(&flags) {
            *c += *f as u128;
        }
        return Ok(tally);
    }
    // Parallel over the first move; integer sums make the reduction exact.
    let parts: Vec<Tally> = MoveKind::ALL
        .par_iter()
        .map(|&first| {
            let mut tally = empty.clone();
            let mut positions = vec![Position::ORIGIN; n + 1];
            positions[1] = step(Position::ORIGIN, field, first);
            let mut flags = vec![false; num_events];
            quenched_dfs(field, &mut positions, 2, &eval, &mut flags, &mut tally);
            tally
        })
        .collect();
    Ok(parts.iter().fold(empty.clone(), |acc, t| acc.merge(t)))
}

fn quenched_dfs<F>(
    field: &OrientationField,
    positions: &mut [Position],
    depth: usize,
    eval: &F,
    flags: &mut [bool],
    tally: &mut Tally,
) where
    F: Fn(&[Position], &mut [bool]),
{
    if depth == positions.len() {
        flags.fill(false);
        eval(positions, flags);
        for (c, f) in tally.numerators.iter_mut().zip(flags.iter()) {
            *c += *f as u128;
        }
        return;
    }
    let here = positions[depth - 1];
    for m in MoveKind::ALL {
        positions[depth] = step(here, field, m);
        quenched_dfs(field, positions, depth + 1, eval, flags, tally);
    }
}

/// Annealed counterpart of [`tally_quenched`]: the same events evaluated
/// under the environment-averaged path measure.
pub fn tally_annealed<F>(n: usize, num_events: usize, eval: F) -> Result<Tally, ExactError>
where
    F: Fn(&[Position], &mut [bool]) + Sync,
{
    check_budget(n, MAX_ENUMERATION_STEPS)?;
    let denominator = 6u128.pow(n as u32);
    let empty = Tally {
        numerators: vec![0; num_events],
        denominator,
    };
    let parts: Vec<Tally> = Displacement::ALL
        .par_iter()
        .filter(|_| n > 0)
        .map(|&first| {
            let mut state = AnnealedState::new(n);
            let mut tally = empty.clone();
            let mut flags = vec![false; num_events];
            state.push(first);
            annealed_dfs(&mut state, &eval, &mut flags, &mut tally);
            tally
        })
        .collect();
    if n == 0 {
        let mut tally = empty;
        let mut flags = vec![false; num_events];
        eval(&[Position::ORIGIN], &mut flags);
        for (c, f) in tally.numerators.iter_mut().zip(&flags) {
            *c += *f as u128;
        }
        return Ok(tally);
    }
    Ok(parts.iter().fold(empty.clone(), |acc, t| acc.merge(t)))
}

/// Path prefix plus per-level direction constraints for the annealed walk.
struct AnnealedState {
    n: usize,
    positions: Vec<Position>,
    /// Direction and number of horizontal steps already taken per level,
    /// indexed by `y + n`.
    levels: Vec<(i64, u32)>,
    constrained: u32,
}

impl AnnealedState {
    fn new(n: usize) -> Self {
        let mut positions = Vec::with_capacity(n + 1);
        positions.push(Position::ORIGIN);
        Self {
            n,
            positions,
            levels: vec![(0, 0); 2 * n + 1],
            constrained: 0,
        }
    }

    /// Appends a move; returns false (and leaves the state unchanged) when the
    /// move contradicts an earlier horizontal step on the same level.
    fn push(&mut self, d: Displacement) -> bool {
        let p = *self.positions.last().unwrap();
        let (dx, dy) = d.delta();
        if dx != 0 {
            let slot = &mut self.levels[(p.y + self.n as i64) as usize];
            if slot.1 > 0 && slot.0 != dx {
                return false;
            }
            if slot.1 == 0 {
                slot.0 = dx;
                self.constrained += 1;
            }
            slot.1 += 1;
        }
        self.positions.push(Position::new(p.x + dx, p.y + dy));
        true
    }

    fn pop(&mut self) {
        let q = self.positions.pop().unwrap();
        let p = *self.positions.last().unwrap();
        if q.x != p.x {
            let slot = &mut self.levels[(p.y + self.n as i64) as usize];
            slot.1 -= 1;
            if slot.1 == 0 {
                self.constrained -= 1;
            }
        }
    }
}

fn annealed_dfs<F>(state: &mut AnnealedState, eval: &F, flags: &mut [bool], tally: &mut Tally)
where
    F: Fn(&[Position], &mut [bool]),
{
    if state.positions.len() == state.n + 1 {
        flags.fill(false);
        eval(&state.positions, flags);
        let weight = 1u128 << (state.n as u32 - state.constrained);
        for (c, f) in tally.numerators.iter_mut().zip(flags.iter()) {
            if *f {
                *c += weight;
            }
        }
        return;
    }
    for d in Displacement::ALL {
        if state.push(d) {
            annealed_dfs(state, eval, flags, tally);
            state.pop();
        }
    }
}

/// Exact quenched probability of one event over all paths of length `n`.
pub fn enumerate_quenched<F>(
    n: usize,
    field: &OrientationField,
    event: F,
) -> Result<f64, ExactError>
where
    F: Fn(&[Position]) -> bool + Sync,
{
    Ok(tally_quenched(n, field, 1, |p, out| out[0] = event(p))?.probability(0))
}

/// Exact annealed probability of one event over all paths of length `n`.
pub fn enumerate_annealed<F>(n: usize, event: F) -> Result<f64, ExactError>
where
    F: Fn(&[Position]) -> bool + Sync,
{
    Ok(tally_annealed(n, 1, |p, out| out[0] = event(p))?.probability(0))
}

/// Annealed probabilities computed the slow way: the plain average of the
/// quenched tallies over all `2^(2n+1)` orientations of the levels `-n..=n`.
pub fn annealed_by_environment_average<F>(
    n: usize,
    num_events: usize,
    eval: F,
) -> Result<Vec<Ratio<u128>>, ExactError>
where
    F: Fn(&[Position], &mut [bool]) + Sync,
{
    check_budget(n, MAX_BRUTE_FORCE_STEPS)?;
    let levels = 2 * n + 1;
    let mut sums = vec![0u128; num_events];
    for mask in 0u64..(1 << levels) {
        let field = OrientationField::from_levels(
            -(n as i64),
            (0..levels).map(|i| {
                if mask >> i & 1 == 1 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }),
        );
        let t = tally_quenched(n, &field, num_events, &eval)?;
        for (s, c) in sums.iter_mut().zip(&t.numerators) {
            *s += c;
        }
    }
    let denominator = 3u128.pow(n as u32) << levels;
    Ok(sums
        .into_iter()
        .map(|s| Ratio::new(s, denominator))
        .collect())
}

/// A unit lattice move with explicit horizontal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Displacement {
    Up,
    Down,
    Left,
    Right,
}

impl Displacement {
    pub const ALL: [Displacement; 4] = [
        Displacement::Up,
        Displacement::Down,
        Displacement::Left,
        Displacement::Right,
    ];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Displacement::Up => (0, 1),
            Displacement::Down => (0, -1),
            Displacement::Left => (-1, 0),
            Displacement::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Displacement::Up => Displacement::Down,
            Displacement::Down => Displacement::Up,
            Displacement::Left => Displacement::Right,
            Displacement::Right => Displacement::Left,
        }
    }
}

/// Annealed probability of a fixed displacement sequence from the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathWeight {
    pub probability: Ratio<u128>,
    /// Whether the horizontal steps agree in direction on every level.
    pub consistent: bool,
}

pub fn annealed_path_weight(moves: &[Displacement]) -> PathWeight {
    assert!(moves.len() <= 64, "path too long for exact weights");
    let mut levels: BTreeMap<i64, i64> = BTreeMap::new();
    let mut y = 0i64;
    let mut consistent = true;
    for d in moves {
        let (dx, dy) = d.delta();
        if dx != 0 && *levels.entry(y).or_insert(dx) != dx {
            consistent = false;
        }
        y += dy;
    }
    let probability = if consistent {
        Ratio::new(1, 3u128.pow(moves.len() as u32) << levels.len())
    } else {
        Ratio::new(0, 1)
    };
    PathWeight {
        probability,
        consistent,
    }
}

/// The time-reversed path, translated so that it starts at the origin: if
/// `moves` visits `0, m_1, .., m_n = x`, the result visits
/// `0, m_{n-1} - x, .., -x`.
pub fn reversed_path(moves: &[Displacement]) -> Vec<Displacement> {
    moves.iter().rev().map(|d| d.opposite()).collect()
}

/// Positions visited by a displacement sequence.
pub fn positions_of(moves: &[Displacement]) -> Vec<Position> {
    let mut p = Position::ORIGIN;
    let mut out = vec![p];
    for d in moves {
        let (dx, dy) = d.delta();
        p = Position::new(p.x + dx, p.y + dy);
        out.push(p);
    }
    out
}

/// Largest gap between the annealed weight of an `n`-step path and that of
/// its reversed translate, over all `4^n` displacement sequences.
pub fn verify_reversibility(n: usize) -> Result<f64, ExactError> {
    check_budget(n, 10)?;
    let mut moves = vec![Displacement::Up; n];
    let mut worst = 0.0f64;
    for code in 0u64..(1u64 << (2 * n)) {
        for (i, m) in moves.iter_mut().enumerate() {
            *m = Displacement::ALL[(code >> (2 * i) & 3) as usize];
        }
        let forward = annealed_path_weight(&moves).probability;
        let backward = annealed_path_weight(&reversed_path(&moves)).probability;
        if forward != backward {
            let gap = if forward > backward {
                forward - backward
            } else {
                backward - forward
            };
            worst = worst.max(*gap.numer() as f64 / *gap.denom() as f64);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::sample_environment;

    fn returns_at(k: usize) -> impl Fn(&[Position]) -> bool + Sync {
        move |p| p[k] == Position::ORIGIN
    }

    #[test]
    fn two_step_return_is_two_ninths() {
        for field in [
            OrientationField::constant(Sign::Plus),
            OrientationField::alternating(),
            sample_environment(1, 0),
        ] {
            let t = tally_quenched(2, &field, 1, |p, o| o[0] = p[2] == Position::ORIGIN).unwrap();
            assert_eq!(t.ratio(0), Ratio::new(2, 9));
        }
        let a = tally_annealed(2, 1, |p, o| o[0] = p[2] == Position::ORIGIN).unwrap();
        assert_eq!(a.ratio(0), Ratio::new(2, 9));
    }

    #[test]
    fn odd_returns_and_first_step() {
        let f = sample_environment(4, 2);
        for k in [1, 3, 5, 7] {
            assert_eq!(enumerate_quenched(7, &f, returns_at(k)).unwrap(), 0.0);
            assert_eq!(enumerate_annealed(7, returns_at(k)).unwrap(), 0.0);
        }
        assert_eq!(
            enumerate_quenched(1, &f, |p| p[1] != Position::ORIGIN).unwrap(),
            1.0
        );
    }

    #[test]
    fn totals_are_one() {
        let f = sample_environment(4, 3);
        for n in 0..=8 {
            assert_eq!(enumerate_quenched(n, &f, |_| true).unwrap(), 1.0);
            assert_eq!(enumerate_annealed(n, |_| true).unwrap(), 1.0);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let f = OrientationField::alternating();
        assert_eq!(
            enumerate_quenched(15, &f, |_| true),
            Err(ExactError::OverBudget { n: 15, max: 14 })
        );
        assert!(enumerate_annealed(15, |_| true).is_err());
        assert!(verify_reversibility(11).is_err());
        let small = OrientationField::from_levels(-1, [Sign::Plus; 3]);
        assert_eq!(
            enumerate_quenched(2, &small, |_| true),
            Err(ExactError::FieldTooSmall(2))
        );
    }

    #[test]
    fn path_weights() {
        use Displacement::*;
        let w = annealed_path_weight(&[Right, Right]);
        assert!(w.consistent);
        assert_eq!(w.probability, Ratio::new(1, 18));
        let w = annealed_path_weight(&[Right, Left]);
        assert!(!w.consistent);
        assert_eq!(w.probability, Ratio::new(0, 1));
        // Two constrained levels.
        let w = annealed_path_weight(&[Right, Up, Left, Down, Right]);
        assert_eq!(w.probability, Ratio::new(1, 243 * 4));
        assert_eq!(annealed_path_weight(&[]).probability, Ratio::new(1, 1));
    }

    #[test]
    fn reversed_path_geometry() {
        use Displacement::*;
        let moves = [Right, Up, Up, Left];
        let fwd = positions_of(&moves);
        let bwd = positions_of(&reversed_path(&moves));
        let end = *fwd.last().unwrap();
        for i in 0..=moves.len() {
            let m = fwd[moves.len() - i];
            assert_eq!(bwd[i], Position::new(m.x - end.x, m.y - end.y));
        }
    }

    #[test]
    fn reversibility_small() {
        for n in 0..=6 {
            assert_eq!(verify_reversibility(n).unwrap(), 0.0);
        }
    }

    #[test]
    fn annealed_rule_matches_environment_average() {
        // Return and no-return indicators at every time.
        for n in 0..=5 {
            let eval = |p: &[Position], out: &mut [bool]| {
                let n = p.len() - 1;
                for k in 0..=n {
                    out[k] = p[k] == Position::ORIGIN;
                    out[n + 1 + k] = !p[1..=k].contains(&Position::ORIGIN);
                }
                out[2 * n + 2] = p[n].x > 0;
            };
            let fast = tally_annealed(n, 2 * n + 3, eval).unwrap();
            let slow = annealed_by_environment_average(n, 2 * n + 3, eval).unwrap();
            for (i, s) in slow.iter().enumerate() {
                assert_eq!(fast.ratio(i), *s, "n = {n}, event {i}");
            }
        }
    }
}
