use serde::Serialize;

use crate::error::{Error, Result};

/// Grid points closer than this are treated as the same time when merging
/// breakpoints into a grid.
pub const MERGE_TOL: f64 = 1e-12;

/// Strictly increasing sample times starting at 0, with a flagged subset of
/// rank-drop times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two time points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "grid must start at 0, found {}",
                times[0]
            )));
        }
        if let Some(w) = times
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::InvalidGrid(format!(
                "times not strictly increasing at {} → {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            times,
            breakpoints: Vec::new(),
        })
    }

    /// `n_points` equally spaced times on `[0, t_max]`.
    pub fn uniform(t_max: f64, n_points: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "t_max = {t_max} must be positive"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid("n_points must be ≥ 2".into()));
        }
        let step = t_max / (n_points - 1) as f64;
        let mut times: Vec<f64> = (0..n_points).map(|k| k as f64 * step).collect();
        times[n_points - 1] = t_max;
        Self::new(times)
    }

    /// Inserts breakpoints into the grid (snapping to existing points within
    /// [`MERGE_TOL`]) and flags them.
    pub fn with_breakpoints(&self, breakpoints: &[f64]) -> Self {
        let mut times = self.times.clone();
        let mut flagged = self.breakpoints.clone();
        for &b in breakpoints {
            let idx = times.partition_point(|&t| t < b);
            let near = [idx.checked_sub(1), Some(idx)]
                .into_iter()
                .flatten()
                .filter(|&i| i < times.len())
                .find(|&i| (times[i] - b).abs() <= MERGE_TOL);
            let at = match near {
                Some(i) => times[i],
                None => {
                    times.insert(idx, b);
                    b
                }
            };
            if !flagged.contains(&at) {
                flagged.push(at);
            }
        }
        flagged.sort_by(f64::total_cmp);
        Self {
            times,
            breakpoints: flagged,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Consecutive pairs `(s, t)` with `s < t`.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::uniform(0.0, 10).is_err());
        let g = TimeGrid::uniform(2.0, 5).unwrap();
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn breakpoints_are_merged_and_flagged() {
        let g = TimeGrid::uniform(2.0, 5)
            .unwrap()
            .with_breakpoints(&[1.0 + 1e-14, 1.25]);
        assert_eq!(g.times(), &[0.0, 0.5, 1.0, 1.25, 1.5, 2.0]);
        assert_eq!(g.breakpoints(), &[1.0, 1.25]);
        assert!(g.breakpoints().iter().all(|b| g.times().contains(b)));
    }
}
