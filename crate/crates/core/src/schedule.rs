//! Hyperdyadic scale sequences `0 = m_0 ≤ m_1 ≤ … ≤ m_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default constant `T` in the admissibility condition `d_j ≤ m_j + T`.
pub const DEFAULT_LINEARIZATION_SLACK: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    epsilon: Option<f64>,
    levels: Vec<u32>,
    slack: u32,
}

impl ScaleSchedule {
    /// `m_0 = 0` and `m_j = ⌊(1+ε)^j⌋` for `1 ≤ j ≤ k`.
    pub fn hyperdyadic(epsilon: f64, k: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidSchedule(format!("epsilon {epsilon} must be positive")));
        }
        let mut levels = vec![0u32];
        for j in 1..=k {
            let m = (1.0 + epsilon).powi(j as i32).floor();
            if m > crate::cube::MAX_LEVEL as f64 {
                return Err(Error::InvalidSchedule(format!("m_{j} = {m} exceeds the maximum level")));
            }
            levels.push(m as u32);
        }
        Ok(ScaleSchedule { epsilon: Some(epsilon), levels, slack: DEFAULT_LINEARIZATION_SLACK })
    }

    /// The longest hyperdyadic schedule with `m_k ≤ max_level`.
    pub fn hyperdyadic_within(epsilon: f64, max_level: u32) -> Result<Self> {
        let mut k = 0;
        while ((1.0 + epsilon).powi(k as i32 + 1).floor()) <= max_level as f64 {
            k += 1;
        }
        Self::hyperdyadic(epsilon, k)
    }

    pub fn from_levels(levels: Vec<u32>) -> Result<Self> {
        if levels.first() != Some(&0) {
            return Err(Error::InvalidSchedule("schedules start at m_0 = 0".into()));
        }
        if levels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSchedule(format!("{levels:?} is not nondecreasing")));
        }
        Ok(ScaleSchedule { epsilon: None, levels, slack: DEFAULT_LINEARIZATION_SLACK })
    }

    pub fn with_slack(mut self, slack: u32) -> Self {
        self.slack = slack;
        self
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn slack(&self) -> u32 {
        self.slack
    }

    /// `k`, the index of the last scale.
    pub fn k(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn m(&self, j: usize) -> u32 {
        self.levels[j]
    }

    pub fn last(&self) -> u32 {
        self.levels[self.k()]
    }

    /// `d_j = m_{j+1} − m_j` for `0 ≤ j < k`.
    pub fn gap(&self, j: usize) -> u32 {
        self.levels[j + 1] - self.levels[j]
    }

    pub fn gaps(&self) -> Vec<u32> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn duplicates(&self) -> usize {
        self.levels.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// `d_j ≤ m_j + T` for every `j`.
    pub fn linearization_admissible(&self) -> bool {
        (0..self.k()).all(|j| self.gap(j) <= self.m(j) + self.slack)
    }

    /// `m_j + j ≤ m_{j+1}` for every `j ≥ j1`.
    pub fn vantage_admissible(&self, j1: usize) -> bool {
        (j1..self.k()).all(|j| self.m(j) + j as u32 <= self.m(j + 1))
    }

    pub fn check_within(&self, depth: u32) -> Result<()> {
        if self.last() > depth {
            return Err(Error::InvalidSchedule(format!("m_k = {} exceeds depth {depth}", self.last())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperdyadic_levels() {
        let s = ScaleSchedule::hyperdyadic(0.3, 9).unwrap();
        assert_eq!(s.levels(), &[0, 1, 1, 2, 2, 3, 4, 6, 8, 10]);
        assert_eq!(s.gaps(), vec![1, 0, 1, 0, 1, 1, 2, 2, 2]);
        assert_eq!(s.duplicates(), 2);
        assert!(s.linearization_admissible());
        assert!(!s.vantage_admissible(1));
        assert_eq!(ScaleSchedule::hyperdyadic_within(0.3, 12).unwrap(), s);
        let half = ScaleSchedule::hyperdyadic(0.5, 6).unwrap();
        assert_eq!(half.levels(), &[0, 1, 2, 3, 5, 7, 11]);
    }

    #[test]
    fn vantage_flag() {
        let s = ScaleSchedule::from_levels(vec![0, 1, 4, 8, 13]).unwrap();
        assert!(s.vantage_admissible(0));
        assert!(!s.linearization_admissible());
        assert!(s.clone().with_slack(4).linearization_admissible());
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(ScaleSchedule::from_levels(vec![1, 2]).is_err());
        assert!(ScaleSchedule::from_levels(vec![0, 3, 2]).is_err());
        assert!(ScaleSchedule::hyperdyadic(0.0, 3).is_err());
        assert!(ScaleSchedule::hyperdyadic(0.3, 9).unwrap().check_within(9).is_err());
    }
}
