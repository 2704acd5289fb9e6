//! Parameter spaces and scaling schedules.

use nalgebra::{DMatrix, DVector};

use crate::error::{QlaError, Result};

/// Bounded open hyperrectangle Θ = ∏ (lowerᵢ, upperᵢ) together with the true
/// parameter θ* and an interior ball radius r₀.
#[derive(Clone, Debug)]
pub struct ParameterSpace {
    lower: DVector<f64>,
    upper: DVector<f64>,
    theta_star: DVector<f64>,
    r0: f64,
}

impl ParameterSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, theta_star: Vec<f64>, r0: f64) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != theta_star.len() {
            return Err(QlaError::InvalidSpace(format!(
                "dimension mismatch: lower {}, upper {}, theta_star {}",
                lower.len(),
                upper.len(),
                theta_star.len()
            )));
        }
        if !(r0 > 0.0) {
            return Err(QlaError::InvalidSpace(format!(
                "r0 must be positive, got {r0}"
            )));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) {
                return Err(QlaError::InvalidSpace(format!(
                    "coordinate {i}: lower {} !< upper {}",
                    lower[i], upper[i]
                )));
            }
            // Closed Euclidean ball of radius r0 around θ* must sit inside the open box.
            if !(theta_star[i] - r0 > lower[i] && theta_star[i] + r0 < upper[i]) {
                return Err(QlaError::InvalidSpace(format!(
                    "ball U(theta_star, r0={r0}) leaves the box at coordinate {i}"
                )));
            }
        }
        Ok(Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
            theta_star: DVector::from_vec(theta_star),
            r0,
        })
    }

    /// 1-D convenience constructor.
    pub fn scalar(lower: f64, upper: f64, theta_star: f64, r0: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper], vec![theta_star], r0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Strict interior membership.
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] < theta[i] && theta[i] < self.upper[i])
    }

    /// Membership in the closure Θ̄.
    pub fn contains_closure(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= theta[i] && theta[i] <= self.upper[i])
    }

    /// Componentwise projection onto the closure.
    pub fn clamp(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            theta[i].clamp(self.lower[i], self.upper[i])
        })
    }

    /// Whether any coordinate of θ lies within `tol` of the boundary.
    pub fn near_boundary(&self, theta: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).any(|i| {
            (theta[i] - self.lower[i]).abs() <= tol || (self.upper[i] - theta[i]).abs() <= tol
        })
    }

    /// Tensor grid over the closure with `per_dim` points along each axis.
    pub fn grid(&self, per_dim: usize) -> Vec<DVector<f64>> {
        assert!(per_dim >= 2, "grid needs at least two points per axis");
        let p = self.dim();
        let mut out = Vec::with_capacity(per_dim.pow(p as u32));
        let mut idx = vec![0usize; p];
        loop {
            let theta = DVector::from_fn(p, |i, _| {
                self.lower[i]
                    + (self.upper[i] - self.lower[i]) * idx[i] as f64 / (per_dim - 1) as f64
            });
            out.push(theta);
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < per_dim {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == p {
                    return out;
                }
            }
        }
    }

    /// Uniform draw from the open box.
    pub fn sample_interior<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let u: f64 = rng.gen();
            self.lower[i] + (self.upper[i] - self.lower[i]) * u
        })
    }
}

/// Finite schedule of scale indices T with the matrix rates a_T = b_T^{-1/2} Q.
///
/// Q is normalized at construction so that λ_min(QᵀQ) = 1; then
/// b_T = 1/λ_min(a_Tᵀ a_T) holds exactly and the eigenvalue sandwich
/// b_T⁻¹ ≤ λ_max(a_Tᵀ a_T) ≤ C₀ b_T⁻¹ holds with the analytic constant
/// C₀ = λ_max(QᵀQ).
#[derive(Clone, Debug)]
pub struct ScalingSchedule {
    times: Vec<f64>,
    b_values: Vec<f64>,
    q: DMatrix<f64>,
    c0: f64,
}

impl ScalingSchedule {
    pub fn new(times: Vec<f64>, b_values: Vec<f64>, q: DMatrix<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != b_values.len() {
            return Err(QlaError::InvalidSchedule(format!(
                "need matching nonempty times/b lists, got {} and {}",
                times.len(),
                b_values.len()
            )));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(QlaError::InvalidSchedule(
                "times must be strictly increasing".into(),
            ));
        }
        if !b_values.iter().all(|&b| b.is_finite() && b > 0.0) {
            return Err(QlaError::InvalidSchedule(
                "b values must be positive and finite".into(),
            ));
        }
        if !b_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(QlaError::InvalidSchedule(
                "b values must be increasing".into(),
            ));
        }
        if !q.is_square() || q.nrows() == 0 {
            return Err(QlaError::InvalidSchedule(
                "Q must be square and nonempty".into(),
            ));
        }
        let gram = q.transpose() * &q;
        let eig = gram.symmetric_eigenvalues();
        let lam_min = eig.min();
        let lam_max = eig.max();
        if !(lam_min > 0.0) {
            return Err(QlaError::InvalidSchedule("Q must be invertible".into()));
        }
        // Rescale so λ_min(QᵀQ) = 1, making b_T = 1/λ_min(a_Tᵀa_T) exact.
        let q = q / lam_min.sqrt();
        let c0 = lam_max / lam_min;
        Ok(Self {
            times,
            b_values,
            q,
            c0,
        })
    }

    /// Schedule with b_T = T and Q = I, the `n^{-1/2} I` convention.
    pub fn isotropic(times: Vec<f64>, dim: usize) -> Result<Self> {
        if !times.iter().all(|&t| t > 0.0) {
            return Err(QlaError::InvalidSchedule(
                "isotropic schedule needs positive times".into(),
            ));
        }
        let b = times.clone();
        Self::new(times, b, DMatrix::identity(dim, dim))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn b_at(&self, idx: usize) -> f64 {
        self.b_values[idx]
    }

    /// The scaling matrix a_T = b_T^{-1/2} Q at schedule position `idx`.
    pub fn a_at(&self, idx: usize) -> DMatrix<f64> {
        &self.q * self.b_values[idx].powf(-0.5)
    }

    /// Look up a_T by the time value itself.
    pub fn a_of(&self, t: f64) -> Result<DMatrix<f64>> {
        let idx = self
            .times
            .iter()
            .position(|&s| s == t)
            .ok_or_else(|| QlaError::InvalidSchedule(format!("time {t} not in schedule")))?;
        Ok(self.a_at(idx))
    }
}
