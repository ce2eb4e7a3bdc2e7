//! Finite time grids on [0, T].
//!
//! All price, dividend, rate, and strategy processes in this crate live on a
//! common finite grid. Step-function conventions: a cadlag process takes its
//! value at `times[k]` on `[t_k, t_{k+1})`, a caglad process on `(t_{k-1}, t_k]`.

use crate::error::{Error, Result};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Arc<Vec<f64>>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point must be 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "times not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid {
            times: Arc::new(times),
        })
    }

    /// Uniform grid with `steps` intervals on [0, T].
    pub fn uniform(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("steps must be positive".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidGrid("horizon must be positive".into()));
        }
        let times = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        TimeGrid::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Largest interval length.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the last grid point `<= t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 {
            return None;
        }
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// New grid with `factor - 1` equally spaced points inserted in each interval.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidGrid("refinement factor must be >= 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let mut times = Vec::with_capacity((self.len() - 1) * factor + 1);
        for w in self.times.windows(2) {
            for j in 0..factor {
                times.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
            }
        }
        times.push(self.horizon());
        TimeGrid::new(times)
    }

    pub fn same_grid(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || self.times == other.times
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_and_refine() {
        let g = TimeGrid::uniform(4, 1.0).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.horizon(), 1.0);
        let r = g.refine(2).unwrap();
        assert_eq!(r.len(), 9);
        assert!((r.times()[1] - 0.125).abs() < 1e-15);
        assert_eq!(r.horizon(), 1.0);
    }

    #[test]
    fn index_at_boundaries() {
        let g = TimeGrid::uniform(2, 1.0).unwrap();
        assert_eq!(g.index_at(0.0), Some(0));
        assert_eq!(g.index_at(0.25), Some(0));
        assert_eq!(g.index_at(0.5), Some(1));
        assert_eq!(g.index_at(1.0), Some(2));
        assert_eq!(g.index_at(-0.1), None);
    }
}
