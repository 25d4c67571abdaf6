use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A raw rating on the 0.0..=5.0 slider, stored as an integer count of
/// tenths so that the 0.1 grid is exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u8);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("score {0} outside [0, 5]")]
    OutOfRange(f64),
    #[error("off-grid score {0}: slider resolution is 0.1")]
    OffGrid(f64),
    #[error("score {0} outside [0, 50] tenths")]
    TenthsOutOfRange(u32),
}

const GRID_TOLERANCE: f64 = 1e-6;

impl Score {
    pub const MIN: Score = Score(0);
    pub const MAX: Score = Score(50);

    pub fn from_tenths(tenths: u32) -> Result<Self, ScoreError> {
        if tenths > u32::from(Self::MAX.0) {
            return Err(ScoreError::TenthsOutOfRange(tenths));
        }
        Ok(Score(tenths as u8))
    }

    /// Accepts `value` only if it already lies on the 0.1 grid.
    pub fn from_grid(value: f64) -> Result<Self, ScoreError> {
        check_range(value)?;
        let scaled = value * 10.0;
        let nearest = scaled.round();
        if (scaled - nearest).abs() > GRID_TOLERANCE {
            return Err(ScoreError::OffGrid(value));
        }
        Ok(Score(nearest as u8))
    }

    pub fn tenths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

fn check_range(value: f64) -> Result<(), ScoreError> {
    if !value.is_finite() || !(0.0..=5.0).contains(&value) {
        return Err(ScoreError::OutOfRange(value));
    }
    Ok(())
}

/// Snap a slider reading in `[0, 5]` to the nearest multiple of 0.1, rounding
/// exact halves away from zero.
pub fn quantize_score(raw: f64) -> Result<Score, ScoreError> {
    check_range(raw)?;
    let scaled = raw * 10.0;
    let floor = scaled.floor();
    // halves that land a hair below .5 through binary representation still round up
    let tenths = if scaled - floor >= 0.5 - 1e-9 {
        floor + 1.0
    } else {
        floor
    };
    Score::from_tenths(tenths as u32)
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Score::from_grid(value).map_err(serde::de::Error::custom)
    }
}
