//! Quasi-log-likelihood field samples and their localized quantities.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{QlaError, Result};
use crate::quad::gauss_legendre_on;
use crate::space::ParameterSpace;

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// One realization of the quasi-log-likelihood ℍ_T with analytic value,
/// gradient and Hessian evaluators on the closure of Θ.
#[derive(Clone)]
pub struct FieldSample {
    value: ValueFn,
    gradient: GradFn,
    hessian: HessFn,
    domain: ParameterSpace,
    index: f64,
}

impl FieldSample {
    pub fn new(
        domain: ParameterSpace,
        index: f64,
        value: ValueFn,
        gradient: GradFn,
        hessian: HessFn,
    ) -> Self {
        Self {
            value,
            gradient,
            hessian,
            domain,
            index,
        }
    }

    pub fn domain(&self) -> &ParameterSpace {
        &self.domain
    }

    /// The scale index T this sample belongs to.
    pub fn index(&self) -> f64 {
        self.index
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        (self.value)(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(theta)
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        (self.hessian)(theta)
    }
}

impl std::fmt::Debug for FieldSample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSample")
            .field("dim", &self.domain.dim())
            .field("index", &self.index)
            .finish()
    }
}

/// Localized view of a field sample at θ*: evaluates Δ_T, Γ_T(θ), 𝕐_T, ℤ_T,
/// the LAQ remainder r_T and the local domain 𝕌_T through the scaling a_T.
#[derive(Clone, Debug)]
pub struct LocalChart {
    sample: FieldSample,
    a: DMatrix<f64>,
    b: f64,
}

impl LocalChart {
    /// Builds the chart, deriving b = 1/λ_min(aᵀa).
    pub fn new(sample: FieldSample, a: DMatrix<f64>) -> Result<Self> {
        let p = sample.domain().dim();
        if a.nrows() != p || a.ncols() != p {
            return Err(QlaError::Precondition(format!(
                "scaling matrix must be {p}x{p}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let gram = a.transpose() * &a;
        let lam_min = gram.symmetric_eigenvalues().min();
        if !(lam_min > 0.0) || !lam_min.is_finite() {
            return Err(QlaError::Singular(
                "scaling matrix a_T is not invertible".into(),
            ));
        }
        Ok(Self {
            sample,
            a,
            b: 1.0 / lam_min,
        })
    }

    pub fn sample(&self) -> &FieldSample {
        &self.sample
    }

    pub fn space(&self) -> &ParameterSpace {
        self.sample.domain()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn theta_of(&self, u: &DVector<f64>) -> DVector<f64> {
        self.space().theta_star() + &self.a * u
    }

    /// Δ_T = ∂_θ ℍ_T(θ*) a_T, as a column vector a_Tᵀ ∇ℍ_T(θ*).
    pub fn delta(&self) -> Result<DVector<f64>> {
        let star = self.space().theta_star();
        let g = self.sample.gradient(star);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(QlaError::Evaluation(format!(
                "gradient of H is not finite at theta* = {:?}",
                star.as_slice()
            )));
        }
        Ok(self.a.transpose() * g)
    }

    /// Γ_T(θ) = -a_Tᵀ ∂²_θ ℍ_T(θ) a_T, symmetrized.
    pub fn gamma_at(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if !self.space().contains_closure(theta) {
            return Err(QlaError::Domain(format!(
                "theta {:?} outside the closure of the parameter box",
                theta.as_slice()
            )));
        }
        let h = self.sample.hessian(theta);
        let m = -(self.a.transpose() * h * &self.a);
        Ok(0.5 * (&m + m.transpose()))
    }

    /// 𝕐_T(θ) = b_T⁻¹ {ℍ_T(θ) - ℍ_T(θ*)}.
    pub fn y_field(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.h_diff(theta)? / self.b)
    }

    /// Membership of u in 𝕌_T = {u : θ* + a_T u ∈ Θ}.
    pub fn u_domain_contains(&self, u: &DVector<f64>) -> bool {
        self.space().contains(&self.theta_of(u))
    }

    /// log ℤ_T(u) = ℍ_T(θ* + a_T u) - ℍ_T(θ*), the shared primitive behind
    /// `z_field` and `y_field` (so the chain identity holds by construction).
    pub fn log_z(&self, u: &DVector<f64>) -> Result<f64> {
        let theta = self.theta_of(u);
        if !self.space().contains(&theta) {
            return Err(QlaError::Domain(format!(
                "u {:?} outside the local domain U_T",
                u.as_slice()
            )));
        }
        self.h_diff(&theta)
    }

    /// ℤ_T(u) = exp(ℍ_T(θ* + a_T u) - ℍ_T(θ*)); exactly 1 at u = 0.
    pub fn z_field(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.log_z(u)?.exp())
    }

    /// LAQ remainder r_T(u) = log ℤ_T(u) - (Δ_T[u] - ½ Γ[u⊗²]) on 𝕌_T and
    /// exactly 1 outside.
    pub fn laq_remainder(&self, u: &DVector<f64>, gamma: &DMatrix<f64>) -> Result<f64> {
        check_symmetric(gamma)?;
        if !self.u_domain_contains(u) {
            return Ok(1.0);
        }
        let d = self.log_z(u)?;
        let delta = self.delta()?;
        let quad = delta.dot(u) - 0.5 * (gamma * u).dot(u);
        Ok(d - quad)
    }

    /// Integral form of the remainder,
    /// r_T(u) = -∫₀¹ (1-s) {Γ_T(θ* + s a_T u) - Γ}[u⊗²] ds,
    /// evaluated by Gauss-Legendre with `quad_nodes` nodes.
    pub fn laq_remainder_integral(
        &self,
        u: &DVector<f64>,
        gamma: &DMatrix<f64>,
        quad_nodes: usize,
    ) -> Result<f64> {
        check_symmetric(gamma)?;
        if quad_nodes < 8 {
            return Err(QlaError::Precondition(format!(
                "quad_nodes must be >= 8, got {quad_nodes}"
            )));
        }
        // The box is convex and θ* is interior, so the whole segment lies in Θ
        // exactly when its endpoint does.
        if !self.u_domain_contains(u) {
            return Err(QlaError::Domain(
                "segment {theta* + s a_T u} exits the parameter box".into(),
            ));
        }
        let (nodes, weights) = gauss_legendre_on(quad_nodes, 0.0, 1.0);
        let star = self.space().theta_star();
        let au = &self.a * u;
        let mut acc = 0.0;
        for (&s, &w) in nodes.iter().zip(&weights) {
            let theta = star + &au * s;
            let g = self.gamma_at(&theta)?;
            let diff = &g - gamma;
            acc += w * (1.0 - s) * (diff * u).dot(u);
        }
        Ok(-acc)
    }

    fn h_diff(&self, theta: &DVector<f64>) -> Result<f64> {
        if !self.space().contains_closure(theta) {
            return Err(QlaError::Domain(format!(
                "theta {:?} outside the closure of the parameter box",
                theta.as_slice()
            )));
        }
        let star = self.space().theta_star();
        let d = self.sample.value(theta) - self.sample.value(star);
        if !d.is_finite() {
            return Err(QlaError::Evaluation(format!(
                "H difference not finite at theta = {:?}",
                theta.as_slice()
            )));
        }
        Ok(d)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(QlaError::Precondition("gamma must be square".into()));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return Err(QlaError::Precondition("gamma must be symmetric".into()));
            }
        }
    }
    Ok(())
}

/// Quadratic field ℍ(θ) = c + gᵀ(θ-θ₀) - ½ (θ-θ₀)ᵀ H (θ-θ₀), handy for
/// synthetic charts and tests.
pub fn quadratic_field(
    domain: ParameterSpace,
    index: f64,
    center: DVector<f64>,
    linear: DVector<f64>,
    curvature: DMatrix<f64>,
) -> FieldSample {
    let c2 = curvature.clone();
    let c3 = curvature.clone();
    let lin2 = linear.clone();
    let center2 = center.clone();
    FieldSample::new(
        domain,
        index,
        Arc::new(move |theta: &DVector<f64>| {
            let v = theta - &center;
            linear.dot(&v) - 0.5 * (&curvature * &v).dot(&v)
        }),
        Arc::new(move |theta: &DVector<f64>| {
            let v = theta - &center2;
            &lin2 - &c2 * v
        }),
        Arc::new(move |_: &DVector<f64>| -&c3),
    )
}
