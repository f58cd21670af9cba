use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid 0 = t_0 < t_1 < ... < t_M = T.
///
/// The step is derived as `t_end / steps`, so `time(steps)` reproduces the
/// horizon to the last bit regardless of how `dt` was specified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid over [0, t_end] with the requested step; `t_end / dt` must be an
    /// integer to within 1e-9 relative.
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::validation(
                "horizon",
                format!("must be positive, got {t_end}"),
            ));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::validation(
                "dt",
                format!("must be positive, got {dt}"),
            ));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "dt",
                format!("horizon/dt = {ratio} is not an integer number of steps"),
            ));
        }
        Ok(TimeGrid {
            t_end,
            steps: steps as usize,
        })
    }

    pub fn with_steps(t_end: f64, steps: usize) -> Self {
        assert!(steps > 0 && t_end > 0.0);
        TimeGrid { t_end, steps }
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.time(j))
    }

    /// Same grid in the exact (bitwise) sense; sampled data on equal grids
    /// can be combined index-wise.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && self.t_end.to_bits() == other.t_end.to_bits()
    }

    /// Grid with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        assert!(factor > 0);
        TimeGrid {
            t_end: self.t_end,
            steps: self.steps * factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_end_is_exact() {
        let g = TimeGrid::new(2.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 2000);
        assert_eq!(g.time(2000), 2.0);
    }

    #[test]
    fn rejects_non_integral_step() {
        assert!(TimeGrid::new(1.0, 3e-4).is_err());
        assert!(TimeGrid::new(1.0, -0.1).is_err());
    }

    #[test]
    fn refinement_preserves_horizon() {
        let g = TimeGrid::new(2.0, 1e-2).unwrap();
        let f = g.refined(4);
        assert_eq!(f.steps(), 800);
        assert_eq!(f.t_end(), 2.0);
        assert!(g.same_as(&g) && !g.same_as(&f));
    }
}
