//! Distance kernels between non-negative feature vectors.
//!
//! Every kernel makes one left-to-right pass in `f64`, so results are
//! reproducible bit for bit. Degenerate terms follow the usual limits:
//! `0 * ln 0 = 0`, a squared term with `p_i + q_i = 0` contributes nothing,
//! and Kulczynski's ratio is `0` when both sums vanish and
//! [`Distance::INFINITE`] when only the denominator does.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    CityBlock,
    KulczynskiD,
    Czekanowski,
    Dice,
    Squared,
    SquaredChord,
    JensenShannon,
}

impl MetricId {
    pub const ALL: [MetricId; 7] = [
        MetricId::CityBlock,
        MetricId::KulczynskiD,
        MetricId::Czekanowski,
        MetricId::Dice,
        MetricId::Squared,
        MetricId::SquaredChord,
        MetricId::JensenShannon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::CityBlock => "city_block",
            MetricId::KulczynskiD => "kulczynski_d",
            MetricId::Czekanowski => "czekanowski",
            MetricId::Dice => "dice",
            MetricId::Squared => "squared",
            MetricId::SquaredChord => "squared_chord",
            MetricId::JensenShannon => "jensen_shannon",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Non-negative dissimilarity, or the sentinel [`Distance::INFINITE`] that
/// orders after every finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distance {
    Finite(f64),
    Infinite,
}

impl Distance {
    pub const ZERO: Distance = Distance::Finite(0.0);
    pub const INFINITE: Distance = Distance::Infinite;

    /// `None` for negative or non-finite values.
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value >= 0.0).then_some(Distance::Finite(value + 0.0))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Distance::Finite(v) => Some(v),
            Distance::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Distance::Infinite)
    }

    /// Value for threshold comparisons; the sentinel maps to `+inf`.
    pub fn as_f64(self) -> f64 {
        match self {
            Distance::Finite(v) => v,
            Distance::Infinite => f64::INFINITY,
        }
    }
}

impl Eq for Distance {}

impl PartialOrd for Distance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Distance {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Distance::Finite(a), Distance::Finite(b)) => a.total_cmp(b),
            (Distance::Finite(_), Distance::Infinite) => Ordering::Less,
            (Distance::Infinite, Distance::Finite(_)) => Ordering::Greater,
            (Distance::Infinite, Distance::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(v) => write!(f, "{v}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// Checks that `p` and `q` are a valid input pair for [`distance`].
pub fn validate_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::VectorLength {
            left: p.len(),
            right: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::VectorLength { left: 0, right: 0 });
    }
    for (index, &value) in p.iter().chain(q).enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidComponent {
                index: index % p.len(),
                value,
            });
        }
    }
    Ok(())
}

/// Distance between two feature vectors under `metric`.
pub fn distance(metric: MetricId, p: &[f64], q: &[f64]) -> Result<Distance> {
    validate_pair(p, q)?;
    Ok(distance_unchecked(metric, p, q))
}

/// Same as [`distance`] for inputs that already passed [`validate_pair`].
pub(crate) fn distance_unchecked(metric: MetricId, p: &[f64], q: &[f64]) -> Distance {
    let value = match metric {
        MetricId::CityBlock => city_block(p, q),
        MetricId::KulczynskiD => return kulczynski_d(p, q),
        MetricId::Czekanowski => czekanowski(p, q),
        MetricId::Dice => dice(p, q),
        MetricId::Squared => squared(p, q),
        MetricId::SquaredChord => squared_chord(p, q),
        MetricId::JensenShannon => jensen_shannon(p, q),
    };
    // Rounding can leave a few ulps below zero on near-identical inputs.
    Distance::Finite(value.max(0.0))
}

fn city_block(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

fn kulczynski_d(p: &[f64], q: &[f64]) -> Distance {
    let (diff, overlap) = p
        .iter()
        .zip(q)
        .fold((0.0, 0.0), |(diff, overlap), (a, b)| {
            (diff + (a - b).abs(), overlap + a.min(*b))
        });
    if overlap > 0.0 {
        Distance::Finite(diff / overlap)
    } else if diff == 0.0 {
        Distance::ZERO
    } else {
        Distance::INFINITE
    }
}

fn czekanowski(p: &[f64], q: &[f64]) -> f64 {
    let (overlap, total) = p
        .iter()
        .zip(q)
        .fold((0.0, 0.0), |(overlap, total), (a, b)| {
            (overlap + a.min(*b), total + (a + b))
        });
    if total == 0.0 {
        return 0.0;
    }
    1.0 - 2.0 * overlap / total
}

fn dice(p: &[f64], q: &[f64]) -> f64 {
    let (cross, norms) = p
        .iter()
        .zip(q)
        .fold((0.0, 0.0), |(cross, norms), (a, b)| {
            (cross + a * b, norms + (a * a + b * b))
        });
    if norms == 0.0 {
        return 0.0;
    }
    1.0 - 2.0 * cross / norms
}

fn squared(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let total = a + b;
            if total == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / total
            }
        })
        .sum()
}

fn squared_chord(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum()
}

fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let half_sum: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let total = a + b;
            xlog_ratio(a, total) + xlog_ratio(b, total)
        })
        .sum();
    0.5 * half_sum
}

/// `x * ln(2x / total)` with `0 * ln 0 = 0`.
fn xlog_ratio(x: f64, total: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (2.0 * x / total).ln()
    }
}
