//! Horizontal orientation environments.
//!
//! An environment assigns to every level `y` a sign: `+1` means the
//! horizontal line at height `y` may only be traversed to the right, `-1` to
//! the left. Random environments are i.i.d. fair signs evaluated lazily from
//! a keyed pseudorandom function of the level, so the infinite field is
//! reproducible, order-free, and shareable between threads without locks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("level not covered: {0}")]
    LevelNotCovered(i64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("failed to read orientation file: {0}")]
    Io(String),
}

/// Orientation of one horizontal line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    #[inline]
    pub fn value(self) -> i64 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    #[inline]
    pub fn flip(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        }
    }

    pub fn from_value(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Minus => f.write_str("-1"),
            Sign::Plus => f.write_str("+1"),
        }
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+1" | "1" => Ok(Sign::Plus),
            "-1" => Ok(Sign::Minus),
            other => Err(format!("invalid sign {other:?}, expected +1 or -1")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    /// i.i.d. fair signs keyed by `seed`.
    Random {
        seed: u64,
    },
    /// `+1` on even levels, `-1` on odd levels.
    Alternating,
    Constant(Sign),
    Explicit(Arc<BTreeMap<i64, Sign>>),
}

/// An orientation environment together with its view modifiers.
///
/// `negated` flips every sign. `reflected` does not change any value; it
/// marks a field as the partner of an x-mirrored walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientationField {
    kind: FieldKind,
    negated: bool,
    reflected: bool,
}

impl OrientationField {
    pub fn new(kind: FieldKind) -> Self {
        Self {
            kind,
            negated: false,
            reflected: false,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self::new(FieldKind::Random { seed })
    }

    pub fn alternating() -> Self {
        Self::new(FieldKind::Alternating)
    }

    pub fn constant(sign: Sign) -> Self {
        Self::new(FieldKind::Constant(sign))
    }

    pub fn explicit(table: BTreeMap<i64, Sign>) -> Self {
        Self::new(FieldKind::Explicit(Arc::new(table)))
    }

    /// Builds an explicit field from the signs of levels `lo, lo+1, ..`.
    pub fn from_levels(lo: i64, signs: impl IntoIterator<Item = Sign>) -> Self {
        let table = signs
            .into_iter()
            .enumerate()
            .map(|(i, s)| (lo + i as i64, s))
            .collect();
        Self::explicit(table)
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    /// Orientation of level `y`.
    pub fn evaluate(&self, y: i64) -> Result<Sign, FieldError> {
        let base = match &self.kind {
            FieldKind::Random { seed } => {
                if rng::prf(*seed, y as u64) >> 63 == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            FieldKind::Alternating => {
                if y.rem_euclid(2) == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            }
            FieldKind::Constant(s) => *s,
            FieldKind::Explicit(table) => *table.get(&y).ok_or(FieldError::LevelNotCovered(y))?,
        };
        Ok(if self.negated { base.flip() } else { base })
    }

    /// Horizontal displacement (`+1` or `-1`) at level `y`.
    ///
    /// # Panics
    /// If an explicit table does not cover `y`. Callers that accept explicit
    /// fields check [`OrientationField::covers`] up front.
    #[inline]
    pub fn direction(&self, y: i64) -> i64 {
        match self.evaluate(y) {
            Ok(s) => s.value(),
            Err(e) => panic!("{e}"),
        }
    }

    /// Whether every level in `lo..=hi` has a defined orientation.
    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        match &self.kind {
            FieldKind::Explicit(table) => (lo..=hi).all(|y| table.contains_key(&y)),
            _ => true,
        }
    }

    pub fn negate(&self) -> Self {
        Self {
            negated: !self.negated,
            ..self.clone()
        }
    }

    pub fn reflect(&self) -> Self {
        Self {
            reflected: !self.reflected,
            ..self.clone()
        }
    }

    /// Signs of levels `lo..=hi` as `+1/-1` integers.
    pub fn window(&self, lo: i64, hi: i64) -> Result<Vec<i64>, FieldError> {
        (lo..=hi)
            .map(|y| self.evaluate(y).map(Sign::value))
            .collect()
    }

    /// Reads a table with one `y sign` pair per line. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_table(text: &str) -> Result<Self, FieldError> {
        let mut table = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| FieldError::Parse {
                line: i + 1,
                reason,
            };
            let mut parts = line.split_whitespace();
            let (Some(y), Some(s), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected \"y sign\", got {line:?}")));
            };
            let y: i64 = y
                .parse()
                .map_err(|e| err(format!("bad level {y:?}: {e}")))?;
            let s: Sign = s.parse().map_err(err)?;
            if table.insert(y, s).is_some() {
                return Err(err(format!("duplicate level {y}")));
            }
        }
        Ok(Self::explicit(table))
    }

    pub fn load(path: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path).map_err(|e| FieldError::Io(e.to_string()))?;
        Self::parse_table(&text)
    }

    /// Writes levels `lo..=hi` in the table format read by [`Self::parse_table`].
    pub fn to_table(&self, lo: i64, hi: i64) -> Result<String, FieldError> {
        let mut out = String::new();
        for y in lo..=hi {
            out.push_str(&format!("{y} {}\n", self.evaluate(y)?));
        }
        Ok(out)
    }

    pub fn describe(&self) -> String {
        let base = match &self.kind {
            FieldKind::Random { seed } => format!("random(seed={seed})"),
            FieldKind::Alternating => "alternating".to_string(),
            FieldKind::Constant(s) => format!("constant({s})"),
            FieldKind::Explicit(t) => format!("explicit({} levels)", t.len()),
        };
        if self.negated {
            format!("negated {base}")
        } else {
            base
        }
    }
}

/// The `env_index`-th environment of the ensemble rooted at `master_seed`.
pub fn sample_environment(master_seed: u64, env_index: u64) -> OrientationField {
    OrientationField::random(rng::derive_key(
        master_seed,
        rng::DOMAIN_ENVIRONMENT,
        env_index,
    ))
}
