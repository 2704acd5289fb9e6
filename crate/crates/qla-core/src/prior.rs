//! Prior densities for the quasi-Bayesian estimator.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{QlaError, Result};
use crate::space::ParameterSpace;

/// Continuous prior density ϖ, bounded away from 0 and ∞ on Θ.
#[derive(Clone)]
pub struct Prior {
    density: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    lower_bound: f64,
    upper_bound: f64,
}

impl Prior {
    /// Wraps a density, recording inf/sup observed on a dense grid of Θ̄ and
    /// rejecting densities that are not strictly positive and finite there.
    pub fn new(
        density: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        space: &ParameterSpace,
    ) -> Result<Self> {
        let per_dim = match space.dim() {
            1 => 4097,
            2 => 129,
            _ => 33,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for theta in space.grid(per_dim) {
            let v = density(&theta);
            if !(v.is_finite() && v > 0.0) {
                return Err(QlaError::Precondition(format!(
                    "prior density must be positive and finite, got {v} at {:?}",
                    theta.as_slice()
                )));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(Self {
            density,
            lower_bound: lo,
            upper_bound: hi,
        })
    }

    pub fn uniform(_space: &ParameterSpace) -> Self {
        Self {
            density: Arc::new(|_| 1.0),
            lower_bound: 1.0,
            upper_bound: 1.0,
        }
    }

    /// ϖ(θ) ∝ 1 + slope·θ₁ (1-D linear tilt); must stay positive on Θ.
    pub fn linear(slope: f64, space: &ParameterSpace) -> Result<Self> {
        Self::new(
            Arc::new(move |theta: &DVector<f64>| 1.0 + slope * theta[0]),
            space,
        )
    }

    /// Unnormalized truncated-normal density exp(-(θ-mean)²/2sd²) on Θ.
    pub fn truncated_normal(mean: f64, sd: f64, space: &ParameterSpace) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(QlaError::Precondition(format!(
                "sd must be positive, got {sd}"
            )));
        }
        Self::new(
            Arc::new(move |theta: &DVector<f64>| {
                let mut q = 0.0;
                for i in 0..theta.len() {
                    let z = (theta[i] - mean) / sd;
                    q += z * z;
                }
                (-0.5 * q).exp()
            }),
            space,
        )
    }

    pub fn density(&self, theta: &DVector<f64>) -> f64 {
        (self.density)(theta)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    /// Continuity heuristic: the largest neighbor-to-neighbor oscillation on a
    /// refined grid must not exceed the coarse-grid oscillation.
    pub fn check_continuity(&self, space: &ParameterSpace, per_dim: usize) -> Result<()> {
        let osc = |n: usize| -> f64 {
            let g = space.grid(n);
            g.windows(2)
                .map(|w| (self.density(&w[1]) - self.density(&w[0])).abs())
                .fold(0.0, f64::max)
        };
        let coarse = osc(per_dim);
        let fine = osc(2 * per_dim);
        if fine > coarse * 1.0 + 1e-12 {
            return Err(QlaError::Precondition(format!(
                "prior oscillation grew under refinement: {coarse} -> {fine}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prior_has_unit_bounds() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let p = Prior::uniform(&sp);
        assert_eq!(p.lower_bound(), 1.0);
        assert_eq!(p.upper_bound(), 1.0);
        assert!(p.check_continuity(&sp, 64).is_ok());
    }

    #[test]
    fn linear_prior_bounds_and_positivity() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let p = Prior::linear(0.5, &sp).unwrap();
        assert!((p.lower_bound() - 0.5).abs() < 1e-12);
        assert!((p.upper_bound() - 1.5).abs() < 1e-12);
        // Slope 2 crosses zero inside (-1, 1): rejected.
        assert!(Prior::linear(2.0, &sp).is_err());
    }

    #[test]
    fn truncated_normal_is_positive_on_box() {
        let sp = ParameterSpace::scalar(-1.5, 1.5, 0.0, 0.5).unwrap();
        let p = Prior::truncated_normal(0.3, 0.7, &sp).unwrap();
        assert!(p.lower_bound() > 0.0);
        assert!(p.upper_bound() <= 1.0 + 1e-12);
        assert!(Prior::truncated_normal(0.0, 0.0, &sp).is_err());
    }
}
