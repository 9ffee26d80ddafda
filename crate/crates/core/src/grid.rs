//! Fixed-step sampling plans shared by the integrators.

/// Subdivision of a sampling grid into fixed steps no longer than `dt`.
///
/// Every interval `[t_k, t_{k+1}]` is split into `ceil((t_{k+1} − t_k)/dt)`
/// equal steps, so the integrators land exactly on each grid time.
#[derive(Debug, Clone)]
pub struct StepPlan {
    intervals: Vec<(usize, f64)>,
}

impl StepPlan {
    /// `None` unless the grid starts at 0 and increases strictly.
    pub fn new(t_grid: &[f64], dt: f64) -> Option<Self> {
        if !is_valid_grid(t_grid) || !(dt > 0.0 && dt.is_finite()) {
            return None;
        }
        let intervals = t_grid
            .windows(2)
            .map(|w| substeps(w[1] - w[0], dt))
            .collect();
        Some(Self { intervals })
    }

    /// `(steps, step_size)` for each grid interval.
    pub fn intervals(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.intervals.iter().copied()
    }
}

/// `(steps, step_size)` splitting `span` into equal steps no longer than `dt`.
pub fn substeps(span: f64, dt: f64) -> (usize, f64) {
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, span / steps as f64)
}

pub fn is_valid_grid(t_grid: &[f64]) -> bool {
    !t_grid.is_empty()
        && t_grid[0] == 0.0
        && t_grid.iter().all(|t| t.is_finite())
        && t_grid.windows(2).all(|w| w[1] > w[0])
}

/// `n + 1` evenly spaced points on `[0, t_end]`.
pub fn uniform(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_cover_each_interval() {
        let plan = StepPlan::new(&[0.0, 0.1, 0.35], 0.1).unwrap();
        let v: Vec<_> = plan.intervals().collect();
        assert_eq!(v[0].0, 1);
        assert_eq!(v[1].0, 3);
        assert!((v[1].1 * 3.0 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(StepPlan::new(&[], 0.1).is_none());
        assert!(StepPlan::new(&[0.1, 0.2], 0.1).is_none());
        assert!(StepPlan::new(&[0.0, 0.2, 0.2], 0.1).is_none());
        assert!(StepPlan::new(&[0.0, 1.0], -1.0).is_none());
        assert!(StepPlan::new(&[0.0], 0.1).is_some());
    }
}
