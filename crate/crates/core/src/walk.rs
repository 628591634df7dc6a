//! The quenched walk on an oriented lattice.
//!
//! From `(x, y)` the walker moves to `(x, y+1)`, `(x, y-1)` or `(x + e_y, y)`
//! with probability 1/3 each, where `e_y` is the orientation of its current
//! level. The annealed walk draws a fresh environment per trajectory. A plain
//! four-neighbour planar walk is included for calibrating range statistics.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orientation::{sample_environment, OrientationField};
use crate::rng;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct Position {
    pub x: i64,
    pub y: i64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    /// Packs the coordinates into two 32-bit halves. Lossless while both
    /// coordinates fit in `i32`.
    #[inline]
    pub fn pack(self) -> u64 {
        ((self.x as i32 as u32 as u64) << 32) | (self.y as i32 as u32 as u64)
    }

    pub fn l1_norm(self) -> i64 {
        self.x.abs() + self.y.abs()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Up,
    Down,
    Horizontal,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::Up, MoveKind::Down, MoveKind::Horizontal];

    /// Maps a 64-bit draw to one of the three moves, each with probability 1/3.
    #[inline]
    pub fn from_bits(bits: u64) -> MoveKind {
        Self::ALL[rng::uniform_below(bits, 3) as usize]
    }

    pub fn label(self) -> &'static str {
        match self {
            MoveKind::Up => "up",
            MoveKind::Down => "down",
            MoveKind::Horizontal => "horizontal",
        }
    }
}

/// One step of the quenched walk for a given move outcome.
#[inline]
pub fn step(pos: Position, field: &OrientationField, outcome: MoveKind) -> Position {
    match outcome {
        MoveKind::Up => Position::new(pos.x, pos.y + 1),
        MoveKind::Down => Position::new(pos.x, pos.y - 1),
        MoveKind::Horizontal => Position::new(pos.x + field.direction(pos.y), pos.y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WalkMode {
    /// Fixed environment; `seed` keys the move draws.
    Quenched { field: OrientationField, seed: u64 },
    /// Trajectory `i` runs in `sample_environment(master_seed, i)`.
    Annealed { master_seed: u64 },
    /// Unoriented planar walk with four moves of probability 1/4.
    Baseline2D { seed: u64 },
}

impl WalkMode {
    fn walk_seed(&self) -> u64 {
        match self {
            WalkMode::Quenched { seed, .. } => *seed,
            WalkMode::Annealed { master_seed } => *master_seed,
            WalkMode::Baseline2D { seed } => *seed,
        }
    }

    /// The environment trajectory `index` runs in (none for the baseline).
    pub fn environment(&self, index: u64) -> Option<OrientationField> {
        match self {
            WalkMode::Quenched { field, .. } => Some(field.clone()),
            WalkMode::Annealed { master_seed } => Some(sample_environment(*master_seed, index)),
            WalkMode::Baseline2D { .. } => None,
        }
    }
}

/// Infinite stream of `(move, position after the move)` pairs.
#[derive(Debug, Clone)]
pub struct Walker {
    field: Option<OrientationField>,
    key: u64,
    step: u64,
    pos: Position,
}

impl Walker {
    pub fn new(mode: &WalkMode, trajectory_index: u64) -> Self {
        Self {
            field: mode.environment(trajectory_index),
            key: rng::derive_key(mode.walk_seed(), rng::DOMAIN_WALK, trajectory_index),
            step: 0,
            pos: Position::ORIGIN,
        }
    }

    pub fn position(&self) -> Position {
        self.pos
    }

    pub fn field(&self) -> Option<&OrientationField> {
        self.field.as_ref()
    }
}

impl Iterator for Walker {
    type Item = (MoveKind, Position);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        let bits = rng::prf(self.key, self.step);
        self.step += 1;
        let (kind, next) = match &self.field {
            Some(field) => {
                let kind = MoveKind::from_bits(bits);
                (kind, step(self.pos, field, kind))
            }
            None => {
                let p = self.pos;
                match rng::uniform_below(bits, 4) {
                    0 => (MoveKind::Up, Position::new(p.x, p.y + 1)),
                    1 => (MoveKind::Down, Position::new(p.x, p.y - 1)),
                    2 => (MoveKind::Horizontal, Position::new(p.x + 1, p.y)),
                    _ => (MoveKind::Horizontal, Position::new(p.x - 1, p.y)),
                }
            }
        };
        self.pos = next;
        Some((kind, next))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<Position>,
    pub moves: Vec<MoveKind>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("trajectory must start at the origin")]
    NotAtOrigin,
    #[error("{positions} positions for {moves} moves")]
    LengthMismatch { positions: usize, moves: usize },
    #[error("step {0} is not a unit move of the declared kind")]
    BadStep(usize),
    #[error("step {0} moves against the orientation of its level")]
    AgainstOrientation(usize),
    #[error("orientation field: {0}")]
    Field(#[from] crate::orientation::FieldError),
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn end(&self) -> Position {
        *self
            .positions
            .last()
            .expect("trajectory holds at least the origin")
    }

    /// Replays `moves` from the origin in `field`.
    pub fn from_moves(field: &OrientationField, moves: &[MoveKind]) -> Self {
        let mut positions = Vec::with_capacity(moves.len() + 1);
        let mut p = Position::ORIGIN;
        positions.push(p);
        for &m in moves {
            p = step(p, field, m);
            positions.push(p);
        }
        Self {
            positions,
            moves: moves.to_vec(),
        }
    }

    /// Checks every structural invariant against `field`; `None` skips the
    /// orientation check (baseline walks).
    pub fn validate(&self, field: Option<&OrientationField>) -> Result<(), TrajectoryError> {
        if self.positions.len() != self.moves.len() + 1 {
            return Err(TrajectoryError::LengthMismatch {
                positions: self.positions.len(),
                moves: self.moves.len(),
            });
        }
        if self.positions[0] != Position::ORIGIN {
            return Err(TrajectoryError::NotAtOrigin);
        }
        for (k, (w, &m)) in self.positions.windows(2).zip(&self.moves).enumerate() {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let ok = match m {
                MoveKind::Up => (dx, dy) == (0, 1),
                MoveKind::Down => (dx, dy) == (0, -1),
                MoveKind::Horizontal => dy == 0 && dx.abs() == 1,
            };
            if !ok {
                return Err(TrajectoryError::BadStep(k));
            }
            if let (MoveKind::Horizontal, Some(f)) = (m, field) {
                if f.evaluate(w[0].y)?.value() != dx {
                    return Err(TrajectoryError::AgainstOrientation(k));
                }
            }
        }
        Ok(())
    }

    /// Mirror image under `x -> -x`; it is a valid trajectory of the negated
    /// environment with the same move kinds.
    pub fn reflect_x(&self) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| Position::new(-p.x, p.y))
                .collect(),
            moves: self.moves.clone(),
        }
    }

    /// Writes rows `k,x,y,move` where `move` is the move that led to `M_k`
    /// (`start` for `k = 0`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,x,y,move")?;
        for (k, p) in self.positions.iter().enumerate() {
            let label = if k == 0 {
                "start"
            } else {
                self.moves[k - 1].label()
            };
            writeln!(out, "{k},{},{},{label}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Runs `n` steps of trajectory `trajectory_index` under `mode`.
pub fn simulate(n: usize, mode: &WalkMode, trajectory_index: u64) -> Trajectory {
    let mut positions = Vec::with_capacity(n + 1);
    let mut moves = Vec::with_capacity(n);
    positions.push(Position::ORIGIN);
    for (m, p) in Walker::new(mode, trajectory_index).take(n) {
        moves.push(m);
        positions.push(p);
    }
    Trajectory { positions, moves }
}

/// Vertical/horizontal split of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Levels `y_0, .., y_n`: a simple random walk slowed down by the
    /// horizontal steps.
    pub vertical_path: Vec<i64>,
    /// Whether `x_n` equals the sum of `e_{y_k}` over the horizontal steps.
    pub horizontal_check: bool,
}

pub fn decompose(traj: &Trajectory, field: &OrientationField) -> Decomposition {
    let vertical_path = traj.positions.iter().map(|p| p.y).collect();
    let scenery_sum: Option<i64> = traj
        .moves
        .iter()
        .zip(&traj.positions)
        .filter(|(m, _)| **m == MoveKind::Horizontal)
        .map(|(_, p)| field.evaluate(p.y).ok().map(|s| s.value()))
        .sum();
    Decomposition {
        vertical_path,
        horizontal_check: scenery_sum == Some(traj.end().x),
    }
}
