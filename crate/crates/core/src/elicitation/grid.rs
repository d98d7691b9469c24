//! Temperature grids and sweep-grid validation.

use serde::{Deserialize, Serialize};

use super::variants::VariantSet;
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("bad temperature range: {0}")]
    BadRange(String),
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
}

/// `k` equally spaced values from `lo` to `hi`, endpoints exact.
pub fn temperature_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>, GridError> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(GridError::BadRange("bounds must be finite".into()));
    }
    if k == 0 {
        return Err(GridError::BadRange("k must be at least 1".into()));
    }
    if lo > hi {
        return Err(GridError::BadRange(format!("lo {lo} exceeds hi {hi}")));
    }
    if k == 1 {
        return if lo == hi {
            Ok(vec![lo])
        } else {
            Err(GridError::BadRange("a single-point grid needs lo == hi".into()))
        };
    }
    let steps = (k - 1) as f64;
    Ok((0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                // Weighted form keeps both endpoints exact and spacing uniform.
                let t = i as f64 / steps;
                lo * (1.0 - t) + hi * t
            }
        })
        .collect())
}

/// The (model × temperature × variant × repetition) design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub models: Vec<ModelSpec>,
    pub temperatures: Vec<f64>,
    pub variants: VariantSet,
    pub repetitions: u32,
}

/// Repetitions per coordinate when none are specified.
pub const DEFAULT_REPETITIONS: u32 = 5;

impl SweepGrid {
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::InvalidGrid(m));
        if self.models.is_empty() {
            return bad("no models".into());
        }
        if self.temperatures.is_empty() {
            return bad("no temperatures".into());
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return bad(format!("temperature {t} must be finite and >= 0"));
        }
        if !self.temperatures.windows(2).all(|w| w[0] < w[1]) {
            return bad("temperatures must be strictly increasing".into());
        }
        if self.variants.variants.is_empty() {
            return bad("no prompt variants".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        let mut ids = std::collections::HashSet::new();
        if !self.models.iter().all(|m| ids.insert(&m.model_id)) {
            return bad("duplicate model_id".into());
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.models.len() * self.temperatures.len() * self.variants.variants.len() * self.repetitions as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_point_grid() {
        let g = temperature_grid(0.01, 1.0, 10).unwrap();
        let expected = [0.01, 0.12, 0.23, 0.34, 0.45, 0.56, 0.67, 0.78, 0.89, 1.00];
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[9], 1.0);
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn small_grids() {
        assert_eq!(temperature_grid(0.0, 1.0, 2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(temperature_grid(0.5, 0.5, 1).unwrap(), vec![0.5]);
        assert!(matches!(temperature_grid(0.1, 0.5, 1), Err(GridError::BadRange(_))));
        assert!(matches!(temperature_grid(1.0, 0.5, 3), Err(GridError::BadRange(_))));
        assert!(temperature_grid(0.0, 1.0, 0).is_err());
    }
}
