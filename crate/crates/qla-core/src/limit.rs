//! The limit pair (Δ, Γ) and the limit random field ℤ.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QlaError, Result};

/// Deterministic Γ (ergodic case) or random Γ (mixed-normal case).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitMode {
    DeterministicGamma,
    RandomGamma,
}

/// Sampler of the symmetric positive-definite limit matrix Γ.
#[derive(Clone)]
pub enum GammaSampler {
    /// Always the same matrix.
    Fixed(DMatrix<f64>),
    /// Scalar Γ = exp(c_γ η), η standard normal (1-D).
    LogNormalScalar {
        c_gamma: f64,
    },
    Custom(Arc<dyn Fn(&mut dyn RngCore) -> DMatrix<f64> + Send + Sync>),
}

/// One draw of the limit pair: Δ = Γ^{1/2} ζ with ζ standard normal
/// independent of Γ. The auxiliary ζ is kept so that tests and probes can
/// condition on variables jointly sampled with Γ.
#[derive(Clone, Debug)]
pub struct LimitDraw {
    pub gamma: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub zeta: DVector<f64>,
}

/// Sampler of the limit pair (Δ, Γ) plus the optional limit field 𝕐 and
/// identifiability constant χ₀ where they are known analytically.
#[derive(Clone)]
pub struct LimitLaw {
    mode: LimitMode,
    dim: usize,
    gamma_sampler: GammaSampler,
    y_limit: Option<Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>>,
    chi0: Option<f64>,
}

impl LimitLaw {
    pub fn deterministic(gamma: DMatrix<f64>) -> Result<Self> {
        if !gamma.is_square() {
            return Err(QlaError::Precondition("gamma must be square".into()));
        }
        if gamma.symmetric_eigenvalues().min() <= 0.0 {
            return Err(QlaError::Precondition(
                "gamma must be positive-definite".into(),
            ));
        }
        Ok(Self {
            mode: LimitMode::DeterministicGamma,
            dim: gamma.nrows(),
            gamma_sampler: GammaSampler::Fixed(gamma),
            y_limit: None,
            chi0: None,
        })
    }

    pub fn random(dim: usize, sampler: GammaSampler) -> Self {
        Self {
            mode: LimitMode::RandomGamma,
            dim,
            gamma_sampler: sampler,
            y_limit: None,
            chi0: None,
        }
    }

    /// Attaches the analytic limit field 𝕐 (must vanish at θ*).
    pub fn with_y_limit(
        mut self,
        y: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        chi0: f64,
    ) -> Self {
        self.y_limit = Some(y);
        self.chi0 = Some(chi0);
        self
    }

    pub fn mode(&self) -> LimitMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chi0(&self) -> Option<f64> {
        self.chi0
    }

    pub fn y_limit(&self, theta: &DVector<f64>) -> Option<f64> {
        self.y_limit.as_ref().map(|f| f(theta))
    }

    pub fn sample_gamma(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        match &self.gamma_sampler {
            GammaSampler::Fixed(g) => g.clone(),
            GammaSampler::LogNormalScalar { c_gamma } => {
                let eta: f64 = StandardNormal.sample(&mut WrapRng(rng));
                DMatrix::from_vec(1, 1, vec![(c_gamma * eta).exp()])
            }
            GammaSampler::Custom(f) => f(rng),
        }
    }

    /// Draws (Γ, ζ, Δ = Γ^{1/2} ζ).
    pub fn draw(&self, rng: &mut dyn RngCore) -> Result<LimitDraw> {
        let gamma = self.sample_gamma(rng);
        if gamma.nrows() != self.dim {
            return Err(QlaError::Precondition(format!(
                "gamma sampler produced dimension {}, expected {}",
                gamma.nrows(),
                self.dim
            )));
        }
        let root = symmetric_sqrt(&gamma)?;
        let mut wrap = WrapRng(rng);
        let zeta = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut wrap));
        let delta = &root * &zeta;
        Ok(LimitDraw { gamma, delta, zeta })
    }

    /// Checks 𝕐(θ*) = 0 and 𝕐(θ) ≤ -χ₀|θ-θ*|² on a grid, when 𝕐 is attached.
    pub fn check_identifiability(
        &self,
        space: &crate::space::ParameterSpace,
        per_dim: usize,
    ) -> Result<()> {
        let (Some(y), Some(chi0)) = (self.y_limit.as_ref(), self.chi0) else {
            return Ok(());
        };
        let star = space.theta_star();
        let y_star = y(star);
        if y_star.abs() > 1e-12 {
            return Err(QlaError::Precondition(format!(
                "y_limit(theta*) = {y_star}, expected 0"
            )));
        }
        for theta in space.grid(per_dim) {
            let gap = (theta.clone() - star).norm_squared();
            if y(&theta) > -chi0 * gap + 1e-12 {
                return Err(QlaError::Precondition(format!(
                    "identifiability bound fails at theta = {:?}",
                    theta.as_slice()
                )));
            }
        }
        Ok(())
    }
}

struct WrapRng<'a>(&'a mut dyn RngCore);

impl rand::RngCore for WrapRng<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Symmetric square root of a positive-definite matrix via its eigensystem.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(QlaError::Precondition(
            "matrix is not positive-definite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// ℤ(u) = exp(Δ[u] - ½ Γ[u⊗²]); its unique maximizer is û = Γ⁻¹Δ.
pub fn limit_z(delta: &DVector<f64>, gamma: &DMatrix<f64>, u: &DVector<f64>) -> Result<f64> {
    if gamma.symmetric_eigenvalues().min() <= 0.0 {
        return Err(QlaError::Precondition(
            "gamma must be positive-definite".into(),
        ));
    }
    Ok((delta.dot(u) - 0.5 * (gamma * u).dot(u)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::child_stream;
    use approx::assert_relative_eq;

    #[test]
    fn limit_z_trivial_values() {
        let delta = DVector::from_vec(vec![0.3]);
        let gamma = DMatrix::from_vec(1, 1, vec![0.5]);
        assert_eq!(limit_z(&delta, &gamma, &DVector::zeros(1)).unwrap(), 1.0);

        let d0 = DVector::zeros(2);
        let id = DMatrix::identity(2, 2);
        let r = 1.3;
        let u = DVector::from_vec(vec![r, 0.0]);
        assert_relative_eq!(
            limit_z(&d0, &id, &u).unwrap(),
            (-r * r / 2.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn limit_z_grid_argmax_is_gamma_inverse_delta() {
        let delta = DVector::from_vec(vec![0.3]);
        let gamma = DMatrix::from_vec(1, 1, vec![0.5]);
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        let mut x = -5.0;
        while x <= 5.0 {
            let z = limit_z(&delta, &gamma, &DVector::from_vec(vec![x])).unwrap();
            if z > best.0 {
                best = (z, x);
            }
            x += 1e-4;
        }
        assert!((best.1 - 0.6).abs() <= 1e-4 + 1e-12);
    }

    #[test]
    fn limit_z_rejects_indefinite_gamma() {
        let delta = DVector::zeros(1);
        let gamma = DMatrix::from_vec(1, 1, vec![-0.5]);
        assert!(matches!(
            limit_z(&delta, &gamma, &DVector::zeros(1)),
            Err(QlaError::Precondition(_))
        ));
    }

    #[test]
    fn deterministic_law_always_returns_same_gamma() {
        let law = LimitLaw::deterministic(DMatrix::from_vec(1, 1, vec![2.0])).unwrap();
        let mut rng = child_stream(5, "limit", 0);
        for _ in 0..5 {
            let d = law.draw(&mut rng).unwrap();
            assert_eq!(d.gamma[(0, 0)], 2.0);
            assert_relative_eq!(d.delta[0], 2.0f64.sqrt() * d.zeta[0], max_relative = 1e-15);
        }
    }

    #[test]
    fn random_law_draws_positive_definite_gammas() {
        let law = LimitLaw::random(1, GammaSampler::LogNormalScalar { c_gamma: 0.5 });
        let mut rng = child_stream(5, "limit", 1);
        for _ in 0..100 {
            let d = law.draw(&mut rng).unwrap();
            assert!(d.gamma[(0, 0)] > 0.0);
        }
    }
}
