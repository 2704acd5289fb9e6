//! Exponent bundles for the large-deviation conditions.

use serde::{Deserialize, Serialize};

use crate::error::{QlaError, Result};

/// Which condition family the probes target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionFamily {
    /// Moment conditions at the orders M₁-M₄ derived from the exponents.
    S,
    /// All-moment variant, probed at p ∈ {2, 4, 8}.
    T,
    /// Deterministic-limit variant (ergodic case).
    U,
}

/// The exponent bundle (α, β₁, β₂, ρ₁, ρ₂, L) with its derived moment orders.
///
/// Construction enforces the defining inequalities:
/// 0 < β₁ < 1/2, 0 < ρ₁ < min{1, α/(1-α), 2β₁/(1-α)}, 0 < 2α < ρ₂,
/// β₂ ≥ 0, 1 - 2β₂ - ρ₂ > 0, and all derived orders positive and finite.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub l: f64,
    pub mode: ConditionFamily,
}

impl ConditionProfile {
    pub fn new(
        alpha: f64,
        beta1: f64,
        beta2: f64,
        rho1: f64,
        rho2: f64,
        l: f64,
        mode: ConditionFamily,
    ) -> Result<Self> {
        let p = Self {
            alpha,
            beta1,
            beta2,
            rho1,
            rho2,
            l,
            mode,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default bundle: α = 0.2, β₁ = 0.3, β₂ = 0.05, ρ₂ = 0.5, L = 2 with ρ₁
    /// chosen by the finder.
    pub fn default_s() -> Self {
        Self::with_auto_rho1(0.2, 0.3, 0.05, 0.5, 2.0, ConditionFamily::S)
            .expect("default profile must be valid")
    }

    /// Picks a ρ₁ making the whole inequality set hold, given the remaining
    /// exponents satisfy their own constraints.
    pub fn find_rho1(alpha: f64, beta1: f64, beta2: f64, rho2: f64) -> Result<f64> {
        check(alpha > 0.0 && alpha < 1.0, || {
            format!("alpha must lie in (0,1), got {alpha}")
        })?;
        check(beta1 > 0.0 && beta1 < 0.5, || {
            format!("0 < beta1 < 1/2 violated: beta1 = {beta1}")
        })?;
        check(2.0 * alpha < rho2, || {
            format!("0 < 2*alpha < rho2 violated: alpha = {alpha}, rho2 = {rho2}")
        })?;
        check(beta2 >= 0.0, || {
            format!("beta2 >= 0 violated: beta2 = {beta2}")
        })?;
        check(1.0 - 2.0 * beta2 - rho2 > 0.0, || {
            format!("1 - 2*beta2 - rho2 > 0 violated: beta2 = {beta2}, rho2 = {rho2}")
        })?;
        let cap = 1.0f64
            .min(alpha / (1.0 - alpha))
            .min(2.0 * beta1 / (1.0 - alpha))
            .min(rho2);
        Ok(0.5 * cap)
    }

    pub fn with_auto_rho1(
        alpha: f64,
        beta1: f64,
        beta2: f64,
        rho2: f64,
        l: f64,
        mode: ConditionFamily,
    ) -> Result<Self> {
        let rho1 = Self::find_rho1(alpha, beta1, beta2, rho2)?;
        Self::new(alpha, beta1, beta2, rho1, rho2, l, mode)
    }

    fn validate(&self) -> Result<()> {
        let Self {
            alpha,
            beta1,
            beta2,
            rho1,
            rho2,
            l,
            ..
        } = *self;
        check(l > 0.0, || format!("L must be positive, got {l}"))?;
        check(alpha > 0.0 && alpha < 1.0, || {
            format!("alpha must lie in (0,1), got {alpha}")
        })?;
        check(beta1 > 0.0 && beta1 < 0.5, || {
            format!("0 < beta1 < 1/2 violated: beta1 = {beta1}")
        })?;
        let cap = 1.0f64
            .min(alpha / (1.0 - alpha))
            .min(2.0 * beta1 / (1.0 - alpha));
        check(rho1 > 0.0 && rho1 < cap, || {
            format!("0 < rho1 < min{{1, alpha/(1-alpha), 2*beta1/(1-alpha)}} violated: rho1 = {rho1}, cap = {cap}")
        })?;
        check(2.0 * alpha < rho2, || {
            format!("0 < 2*alpha < rho2 violated: alpha = {alpha}, rho2 = {rho2}")
        })?;
        check(beta2 >= 0.0, || {
            format!("beta2 >= 0 violated: beta2 = {beta2}")
        })?;
        check(1.0 - 2.0 * beta2 - rho2 > 0.0, || {
            format!("1 - 2*beta2 - rho2 > 0 violated: beta2 = {beta2}, rho2 = {rho2}")
        })?;
        for (name, m) in [
            ("M1", self.m1()),
            ("M2", self.m2()),
            ("M3", self.m3()),
            ("M4", self.m4()),
        ] {
            check(m.is_finite() && m > 0.0, || {
                format!("derived {name} must be positive and finite, got {m}")
            })?;
        }
        Ok(())
    }

    /// β = α/(1-α).
    pub fn beta(&self) -> f64 {
        self.alpha / (1.0 - self.alpha)
    }

    pub fn m1(&self) -> f64 {
        self.l / (1.0 - self.rho1)
    }

    pub fn m2(&self) -> f64 {
        self.l / (1.0 - 2.0 * self.beta2 - self.rho2)
    }

    pub fn m3(&self) -> f64 {
        self.l / (self.beta() - self.rho1)
    }

    pub fn m4(&self) -> f64 {
        self.l / (2.0 * self.beta1 / (1.0 - self.alpha) - self.rho1)
    }

    /// ρ₁ ∨ ρ₂, the exponent in the large-deviation threshold.
    pub fn rho_max(&self) -> f64 {
        self.rho1.max(self.rho2)
    }

    /// The tail exponents (ε₁, ε₂) used by the all-moment family: (½-β₂, β₁).
    pub fn epsilons(&self) -> (f64, f64) {
        (0.5 - self.beta2, self.beta1)
    }
}

fn check(ok: bool, msg: impl Fn() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(QlaError::Profile(msg()))
    }
}
