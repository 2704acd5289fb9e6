//! Bundled simulation models with analytic limit quantities.
//!
//! Three models give the toolkit testable ground truth:
//!
//! * `OuDrift` — drift estimation for dX = -θ X dt + dW observed on a mesh;
//!   the field is exactly quadratic in θ, so the maximizer has the closed
//!   form -S₁/S₂.
//! * `VolContrast` — a Gaussian volatility contrast with iid increments;
//!   non-quadratic in θ, exercising a nonzero LAQ remainder.
//! * `SyntheticLaq` — a directly constructed locally quadratic field with
//!   random curvature Γ_ω = exp(c_γ η) for mixed-normal testing, plus an
//!   optional vanishing sin perturbation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QlaError, Result};
use crate::field::{FieldSample, LocalChart};
use crate::limit::{GammaSampler, LimitLaw};
use crate::space::ParameterSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    OuDrift,
    VolContrast,
    SyntheticLaq,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::OuDrift => "ou-drift",
            ModelKind::VolContrast => "vol-contrast",
            ModelKind::SyntheticLaq => "synthetic-laq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ou-drift" => Ok(ModelKind::OuDrift),
            "vol-contrast" => Ok(ModelKind::VolContrast),
            "synthetic-laq" => Ok(ModelKind::SyntheticLaq),
            other => Err(QlaError::Model(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Extras for the synthetic model.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticExtras {
    /// Scale of log Γ_ω.
    pub c_gamma: f64,
    /// Amplitude of the sin perturbation.
    pub kappa: f64,
    /// Growth exponent of the perturbation; must stay below 1/2.
    pub gamma_exp: f64,
}

impl Default for SyntheticExtras {
    fn default() -> Self {
        Self {
            c_gamma: 0.5,
            kappa: 0.5,
            gamma_exp: 0.25,
        }
    }
}

/// Specification of one bundled model at one scale.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub theta_star: f64,
    /// Time horizon T (ou-drift) or sample count n (vol-contrast,
    /// synthetic-laq).
    pub horizon: f64,
    /// Path mesh δ (ou-drift) or observation step h (vol-contrast); unused by
    /// synthetic-laq.
    pub mesh: f64,
    pub extras: SyntheticExtras,
}

impl ModelSpec {
    pub fn ou_drift(theta_star: f64, horizon: f64, mesh: f64) -> Self {
        Self {
            kind: ModelKind::OuDrift,
            theta_star,
            horizon,
            mesh,
            extras: SyntheticExtras::default(),
        }
    }

    pub fn vol_contrast(theta_star: f64, n: usize, h: f64) -> Self {
        Self {
            kind: ModelKind::VolContrast,
            theta_star,
            horizon: n as f64,
            mesh: h,
            extras: SyntheticExtras::default(),
        }
    }

    pub fn synthetic_laq(theta_star: f64, b: f64, extras: SyntheticExtras) -> Self {
        Self {
            kind: ModelKind::SyntheticLaq,
            theta_star,
            horizon: b,
            mesh: 0.0,
            extras,
        }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        let mut s = self.clone();
        s.horizon = horizon;
        s
    }

    /// Default parameter box for the model, with r₀ = half the distance from
    /// θ* to the boundary.
    pub fn parameter_space(&self) -> Result<ParameterSpace> {
        let (lo, hi) = match self.kind {
            ModelKind::OuDrift => (0.1, 3.0),
            ModelKind::VolContrast => (-1.5, 1.5),
            ModelKind::SyntheticLaq => (-2.0, 2.0),
        };
        let gap = (self.theta_star - lo).min(hi - self.theta_star);
        if !(gap > 0.0) {
            return Err(QlaError::Model(format!(
                "theta_star {} outside the default box ({lo}, {hi})",
                self.theta_star
            )));
        }
        ParameterSpace::scalar(lo, hi, self.theta_star, gap / 2.0)
    }

    /// The model's scaling matrix a = horizon^{-1/2} (1-D).
    pub fn scaling(&self) -> DMatrix<f64> {
        DMatrix::from_vec(1, 1, vec![self.horizon.powf(-0.5)])
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::OuDrift => {
                if !(self.theta_star > 0.0) {
                    return Err(QlaError::Model(format!(
                        "ou-drift needs theta_star > 0 for ergodicity, got {}",
                        self.theta_star
                    )));
                }
                if !(self.horizon >= 10.0) {
                    return Err(QlaError::Model(format!(
                        "ou-drift needs T >= 10, got {}",
                        self.horizon
                    )));
                }
                if !(self.mesh > 0.0 && self.mesh <= 0.05) {
                    return Err(QlaError::Model(format!(
                        "ou-drift needs 0 < mesh <= 0.05, got {}",
                        self.mesh
                    )));
                }
                let steps = self.horizon / self.mesh;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                    return Err(QlaError::Model(format!(
                        "horizon/mesh must be an integer step count, got {steps}"
                    )));
                }
            }
            ModelKind::VolContrast => {
                if self.horizon < 50.0 || self.horizon.fract() != 0.0 {
                    return Err(QlaError::Model(format!(
                        "vol-contrast needs integer n >= 50, got {}",
                        self.horizon
                    )));
                }
                if !(self.mesh > 0.0) {
                    return Err(QlaError::Model(format!(
                        "vol-contrast needs h > 0, got {}",
                        self.mesh
                    )));
                }
            }
            ModelKind::SyntheticLaq => {
                if !(self.extras.gamma_exp < 0.5) {
                    return Err(QlaError::Model(format!(
                        "synthetic-laq needs gamma_exp < 1/2, got {}",
                        self.extras.gamma_exp
                    )));
                }
                if !(self.extras.kappa >= 0.0) {
                    return Err(QlaError::Model(format!(
                        "synthetic-laq needs kappa >= 0, got {}",
                        self.extras.kappa
                    )));
                }
                if !(self.horizon > 0.0) {
                    return Err(QlaError::Model(format!(
                        "synthetic-laq needs b > 0, got {}",
                        self.horizon
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An Ornstein-Uhlenbeck path sampled on a regular mesh.
#[derive(Clone, Debug)]
pub struct OuPath {
    pub x: Vec<f64>,
    pub mesh: f64,
}

impl OuPath {
    /// Itô sum S₁ = Σ Xᵢ (Xᵢ₊₁ - Xᵢ) and quadratic clock S₂ = Σ Xᵢ² δ.
    pub fn sufficient_stats(&self) -> (f64, f64) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for w in self.x.windows(2) {
            s1 += w[0] * (w[1] - w[0]);
            s2 += w[0] * w[0] * self.mesh;
        }
        (s1, s2)
    }
}

/// Simulates dX = -θ* X dt + dW on [0, T] by the exact OU transition at the
/// spec mesh, starting from the stationary law N(0, 1/(2θ*)).
pub fn simulate_ou_path(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<OuPath> {
    if spec.kind != ModelKind::OuDrift {
        return Err(QlaError::Model(
            "simulate_ou_path needs an ou-drift spec".into(),
        ));
    }
    spec.validate()?;
    let theta = spec.theta_star;
    let delta = spec.mesh;
    let n = (spec.horizon / delta).round() as usize;
    let decay = (-theta * delta).exp();
    let step_sd = ((1.0 - decay * decay) / (2.0 * theta)).sqrt();
    let stat_sd = (1.0 / (2.0 * theta)).sqrt();
    let mut wrap = RngWrap(rng);
    let mut x = Vec::with_capacity(n + 1);
    let z0: f64 = StandardNormal.sample(&mut wrap);
    x.push(stat_sd * z0);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut wrap);
        x.push(x[i] * decay + step_sd * z);
    }
    Ok(OuPath { x, mesh: delta })
}

/// Builds the OU quasi-log-likelihood field ℍ_T(θ) = -θ S₁ - θ²/2 S₂ from a
/// simulated path.
pub fn ou_field_from_path(spec: &ModelSpec, path: &OuPath) -> Result<FieldSample> {
    let (s1, s2) = path.sufficient_stats();
    let space = spec.parameter_space()?;
    Ok(FieldSample::new(
        space,
        spec.horizon,
        Arc::new(move |theta: &DVector<f64>| {
            let t = theta[0];
            -t * s1 - t * t / 2.0 * s2
        }),
        Arc::new(move |theta: &DVector<f64>| DVector::from_vec(vec![-s1 - theta[0] * s2])),
        Arc::new(move |_: &DVector<f64>| DMatrix::from_vec(1, 1, vec![-s2])),
    ))
}

pub fn simulate_ou_field(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<FieldSample> {
    let path = simulate_ou_path(spec, rng)?;
    ou_field_from_path(spec, &path)
}

/// Draws the iid increments ΔXᵢ ~ N(0, e^{2θ*} h), i = 1..n.
pub fn simulate_vol_increments(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    if spec.kind != ModelKind::VolContrast {
        return Err(QlaError::Model(
            "simulate_vol_increments needs a vol-contrast spec".into(),
        ));
    }
    spec.validate()?;
    let n = spec.horizon as usize;
    let sd = ((2.0 * spec.theta_star).exp() * spec.mesh).sqrt();
    let mut wrap = RngWrap(rng);
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut wrap);
            sd * z
        })
        .collect())
}

/// Builds ℍ_n(θ) = -Σᵢ [(ΔXᵢ)²/(2 e^{2θ} h) + θ] from increments.
pub fn vol_field_from_increments(spec: &ModelSpec, increments: &[f64]) -> Result<FieldSample> {
    let space = spec.parameter_space()?;
    let n = spec.horizon;
    let h = spec.mesh;
    let a_sum: f64 = increments.iter().map(|dx| dx * dx).sum();
    Ok(FieldSample::new(
        space,
        n,
        Arc::new(move |theta: &DVector<f64>| {
            let t = theta[0];
            -a_sum * (-2.0 * t).exp() / (2.0 * h) - n * t
        }),
        Arc::new(move |theta: &DVector<f64>| {
            let t = theta[0];
            DVector::from_vec(vec![a_sum * (-2.0 * t).exp() / h - n])
        }),
        Arc::new(move |theta: &DVector<f64>| {
            let t = theta[0];
            DMatrix::from_vec(1, 1, vec![-2.0 * a_sum * (-2.0 * t).exp() / h])
        }),
    ))
}

pub fn simulate_vol_field(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<FieldSample> {
    let incr = simulate_vol_increments(spec, rng)?;
    vol_field_from_increments(spec, &incr)
}

/// Directly constructed LAQ field with random curvature:
/// ℍ(θ) = b^{1/2} √Γ_ω ζ (θ-θ*) - ½ b Γ_ω (θ-θ*)² + κ b^γ sin(5(θ-θ*)),
/// Γ_ω = exp(c_γ η), (η, ζ) independent standard normal.
pub fn synth_laq_field(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<FieldSample> {
    if spec.kind != ModelKind::SyntheticLaq {
        return Err(QlaError::Model(
            "synth_laq_field needs a synthetic-laq spec".into(),
        ));
    }
    spec.validate()?;
    let mut wrap = RngWrap(rng);
    let eta: f64 = StandardNormal.sample(&mut wrap);
    let zeta: f64 = StandardNormal.sample(&mut wrap);
    let b = spec.horizon;
    let gamma_omega = (spec.extras.c_gamma * eta).exp();
    let lin = b.sqrt() * gamma_omega.sqrt() * zeta;
    let curv = b * gamma_omega;
    let amp = spec.extras.kappa * b.powf(spec.extras.gamma_exp);
    let star = spec.theta_star;
    let space = spec.parameter_space()?;
    Ok(FieldSample::new(
        space,
        b,
        Arc::new(move |theta: &DVector<f64>| {
            let v = theta[0] - star;
            lin * v - 0.5 * curv * v * v + amp * (5.0 * v).sin()
        }),
        Arc::new(move |theta: &DVector<f64>| {
            let v = theta[0] - star;
            DVector::from_vec(vec![lin - curv * v + 5.0 * amp * (5.0 * v).cos()])
        }),
        Arc::new(move |theta: &DVector<f64>| {
            let v = theta[0] - star;
            DMatrix::from_vec(1, 1, vec![-curv - 25.0 * amp * (5.0 * v).sin()])
        }),
    ))
}

/// Simulates a field of whatever kind the spec requests.
pub fn simulate_field(spec: &ModelSpec, rng: &mut dyn RngCore) -> Result<FieldSample> {
    match spec.kind {
        ModelKind::OuDrift => simulate_ou_field(spec, rng),
        ModelKind::VolContrast => simulate_vol_field(spec, rng),
        ModelKind::SyntheticLaq => synth_laq_field(spec, rng),
    }
}

/// Deterministic limit matrix or a marked-random law.
#[derive(Clone, Debug)]
pub enum GammaLimit {
    Deterministic(DMatrix<f64>),
    /// Γ_ω = exp(c_γ η); the realized value of a sample equals Γ_T(θ*).
    RandomLogNormal {
        c_gamma: f64,
    },
}

/// Analytic limit objects 𝕐, Γ, χ₀ and the asymptotic variance.
#[derive(Clone)]
pub struct AnalyticLimits {
    pub gamma: GammaLimit,
    /// Conditional limit field (θ, Γ) ↦ 𝕐_Γ(θ); in deterministic mode the Γ
    /// argument is the fixed limit matrix.
    y_given: Arc<dyn Fn(&DVector<f64>, &DMatrix<f64>) -> f64 + Send + Sync>,
    chi0_deterministic: Option<f64>,
    pub avar: Option<DMatrix<f64>>,
}

impl AnalyticLimits {
    /// Limits with a fixed Γ and deterministic limit field.
    pub fn deterministic(
        gamma: DMatrix<f64>,
        y: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        chi0: f64,
        avar: Option<DMatrix<f64>>,
    ) -> Self {
        Self {
            gamma: GammaLimit::Deterministic(gamma),
            y_given: Arc::new(move |theta, _| y(theta)),
            chi0_deterministic: Some(chi0),
            avar,
        }
    }

    /// Limits whose field and χ₀ are conditional on a realized Γ.
    pub fn conditional(
        c_gamma: f64,
        y_given: Arc<dyn Fn(&DVector<f64>, &DMatrix<f64>) -> f64 + Send + Sync>,
    ) -> Self {
        Self {
            gamma: GammaLimit::RandomLogNormal { c_gamma },
            y_given,
            chi0_deterministic: None,
            avar: None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.gamma, GammaLimit::Deterministic(_))
    }

    pub fn gamma_deterministic(&self) -> Option<&DMatrix<f64>> {
        match &self.gamma {
            GammaLimit::Deterministic(g) => Some(g),
            GammaLimit::RandomLogNormal { .. } => None,
        }
    }

    /// 𝕐(θ) in deterministic mode.
    pub fn y(&self, theta: &DVector<f64>) -> Result<f64> {
        let g = self.gamma_deterministic().ok_or_else(|| {
            QlaError::MissingLimits(
                "limit field is random; supply a realized gamma via y_given".into(),
            )
        })?;
        Ok((self.y_given)(theta, g))
    }

    /// 𝕐_Γ(θ) conditional on a realized Γ.
    pub fn y_given(&self, theta: &DVector<f64>, gamma: &DMatrix<f64>) -> f64 {
        (self.y_given)(theta, gamma)
    }

    pub fn chi0(&self) -> Result<f64> {
        self.chi0_deterministic.ok_or_else(|| {
            QlaError::MissingLimits("chi0 is conditional on gamma for this model".into())
        })
    }

    /// χ₀ conditional on Γ for the exact-quadratic limit shape.
    pub fn chi0_given(&self, gamma: &DMatrix<f64>) -> f64 {
        gamma.symmetric_eigenvalues().min() / 2.0
    }
}

/// Analytic limits for each bundled model.
pub fn analytic_limits(spec: &ModelSpec) -> Result<AnalyticLimits> {
    spec.validate()?;
    let star = spec.theta_star;
    match spec.kind {
        ModelKind::OuDrift => {
            // Γ = E[X²] = 1/(2θ*), 𝕐(θ) = -(θ-θ*)²/(4θ*), χ₀ = 1/(4θ*).
            let gamma = 1.0 / (2.0 * star);
            let chi0 = 1.0 / (4.0 * star);
            Ok(AnalyticLimits {
                gamma: GammaLimit::Deterministic(DMatrix::from_vec(1, 1, vec![gamma])),
                y_given: Arc::new(move |theta: &DVector<f64>, _: &DMatrix<f64>| {
                    let v = theta[0] - star;
                    -v * v / (4.0 * star)
                }),
                chi0_deterministic: Some(chi0),
                avar: Some(DMatrix::from_vec(1, 1, vec![1.0 / gamma])),
            })
        }
        ModelKind::VolContrast => {
            // Γ = 2, 𝕐(θ) = -(½(e^{2(θ*-θ)} - 1) + (θ-θ*)).
            let y = move |theta: &DVector<f64>| {
                let v = theta[0] - star;
                -(0.5 * ((-2.0 * v).exp() - 1.0) + v)
            };
            let space = spec.parameter_space()?;
            let chi0 = grid_min_ratio(&y, &space, 100_000);
            Ok(AnalyticLimits {
                gamma: GammaLimit::Deterministic(DMatrix::from_vec(1, 1, vec![2.0])),
                y_given: Arc::new(move |theta: &DVector<f64>, _: &DMatrix<f64>| y(theta)),
                chi0_deterministic: Some(chi0),
                avar: Some(DMatrix::from_vec(1, 1, vec![0.5])),
            })
        }
        ModelKind::SyntheticLaq => Ok(AnalyticLimits {
            gamma: GammaLimit::RandomLogNormal {
                c_gamma: spec.extras.c_gamma,
            },
            y_given: Arc::new(move |theta: &DVector<f64>, g: &DMatrix<f64>| {
                let v = theta[0] - star;
                -0.5 * g[(0, 0)] * v * v
            }),
            chi0_deterministic: None,
            avar: None,
        }),
    }
}

/// min over a grid (excluding a tiny ball at θ*) of -𝕐(θ)/|θ-θ*|².
pub fn grid_min_ratio(
    y: &(impl Fn(&DVector<f64>) -> f64 + ?Sized),
    space: &ParameterSpace,
    grid_size: usize,
) -> f64 {
    let star = space.theta_star();
    let mut min = f64::INFINITY;
    for theta in space.grid(grid_size) {
        let gap = (theta.clone() - star).norm_squared();
        if gap <= 1e-12 {
            continue;
        }
        min = min.min(-y(&theta) / gap);
    }
    min
}

/// The limit law of (Δ, Γ) for a bundled model.
pub fn limit_law(spec: &ModelSpec) -> Result<LimitLaw> {
    let limits = analytic_limits(spec)?;
    match &limits.gamma {
        GammaLimit::Deterministic(g) => {
            let law = LimitLaw::deterministic(g.clone())?;
            let lim = limits.clone();
            let chi0 = limits.chi0()?;
            Ok(law.with_y_limit(
                Arc::new(move |theta| lim.y(theta).unwrap_or(f64::NAN)),
                chi0,
            ))
        }
        GammaLimit::RandomLogNormal { c_gamma } => Ok(LimitLaw::random(
            1,
            GammaSampler::LogNormalScalar { c_gamma: *c_gamma },
        )),
    }
}

/// How probes obtain the per-replicate limit matrix Γ.
#[derive(Clone, Debug)]
pub enum GammaMode {
    /// Use the fixed analytic matrix.
    Analytic(DMatrix<f64>),
    /// Use Γ_T(θ*) realized from the sample (random-Γ models, where the
    /// realized curvature at θ* equals Γ_ω exactly).
    RealizedAtThetaStar,
}

type SimulateFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> Result<FieldSample> + Send + Sync>;

/// A model packaged for the Monte Carlo probes: a parameter space, a
/// simulator indexed by the scale T, the per-replicate Γ convention and the
/// analytic limits when they exist.
#[derive(Clone)]
pub struct SimulationModel {
    pub space: ParameterSpace,
    pub simulate: SimulateFn,
    pub gamma_mode: GammaMode,
    pub limits: Option<AnalyticLimits>,
    pub label: String,
}

impl SimulationModel {
    /// Simulates a field at scale `t` and wraps it in a chart with a = a(t).
    pub fn chart(&self, t: f64, a: DMatrix<f64>, rng: &mut dyn RngCore) -> Result<LocalChart> {
        let field = (self.simulate)(t, rng)?;
        LocalChart::new(field, a)
    }

    /// The Γ used for residuals at this chart: analytic, or realized at θ*.
    pub fn gamma_for(&self, chart: &LocalChart) -> Result<DMatrix<f64>> {
        match &self.gamma_mode {
            GammaMode::Analytic(g) => Ok(g.clone()),
            GammaMode::RealizedAtThetaStar => chart.gamma_at(chart.space().theta_star()),
        }
    }
}

/// Packages a bundled model spec for the probes.
pub fn simulation_model(spec: &ModelSpec) -> Result<SimulationModel> {
    spec.validate()?;
    let space = spec.parameter_space()?;
    let limits = analytic_limits(spec)?;
    let gamma_mode = match limits.gamma_deterministic() {
        Some(g) => GammaMode::Analytic(g.clone()),
        None => GammaMode::RealizedAtThetaStar,
    };
    let base = spec.clone();
    Ok(SimulationModel {
        space,
        simulate: Arc::new(move |t: f64, rng: &mut dyn RngCore| {
            simulate_field(&base.with_horizon(t), rng)
        }),
        gamma_mode,
        limits: Some(limits),
        label: spec.kind.name().to_string(),
    })
}

struct RngWrap<'a>(&'a mut dyn RngCore);

impl rand::RngCore for RngWrap<'_> {
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
