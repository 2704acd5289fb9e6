//! Quasi-maximum-likelihood and quasi-Bayesian estimators.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QlaError, Result};
use crate::field::{FieldSample, LocalChart};
use crate::prior::Prior;
use crate::quad::gauss_legendre_on;
use crate::space::ParameterSpace;
use crate::stream::child_stream;

/// Settings for the box-constrained maximizer behind the QMLE.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Coarse-grid resolution per axis used to seed Newton starts.
    pub coarse_grid_per_dim: usize,
    /// Number of best grid points promoted to Newton starts.
    pub starts: usize,
    /// Projected-gradient norm below which a start counts as converged.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Backtracking shrink factor in (0, 1).
    pub step_shrink: f64,
    /// Fresh uniform points checked by the maximality audit.
    pub audit_points: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            coarse_grid_per_dim: 64,
            starts: 5,
            grad_tol: 1e-10,
            max_iters: 100,
            step_shrink: 0.5,
            audit_points: 1000,
        }
    }
}

impl OptimizerSettings {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.coarse_grid_per_dim < 8 {
            return Err(QlaError::Precondition(format!(
                "coarse_grid_per_dim must be >= 8, got {}",
                self.coarse_grid_per_dim
            )));
        }
        let grid = self.coarse_grid_per_dim.pow(dim as u32);
        if self.starts == 0 || self.starts > grid {
            return Err(QlaError::Precondition(format!(
                "starts must lie in 1..={grid}, got {}",
                self.starts
            )));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(QlaError::Precondition(format!(
                "step_shrink must lie in (0,1), got {}",
                self.step_shrink
            )));
        }
        Ok(())
    }
}

/// Settings for the tensor-product quadrature behind the QBE.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Gauss-Legendre nodes per axis.
    pub nodes_per_dim: usize,
    /// Recompute with doubled nodes and record the difference.
    pub refine_check: bool,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            nodes_per_dim: 201,
            refine_check: true,
        }
    }
}

/// QBE result: the posterior-mean estimate and the node-doubling self-check
/// error (absent when `refine_check` is off).
#[derive(Clone, Debug)]
pub struct QbeOutcome {
    pub theta: DVector<f64>,
    pub quad_error: Option<f64>,
}

/// One full estimation pass over a chart: both estimators with their
/// localized coordinates and the chart quantities they were checked against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub theta_m: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub u_m: Vec<f64>,
    pub u_b: Vec<f64>,
    pub delta: Vec<f64>,
    /// Γ_T(θ*) stored row-major.
    pub gamma_star: Vec<Vec<f64>>,
    pub at_boundary: bool,
    pub quad_error: Option<f64>,
}

/// Quasi-maximum likelihood estimator: maximizes ℍ over the closure of Θ by
/// coarse-grid seeding plus projected Newton with backtracking.
///
/// Ties within 1e-12 in ℍ are broken by the lexicographically smallest θ, so
/// repeated runs give identical answers. Returns the maximizer and whether it
/// sits within 1e-9 of the boundary.
pub fn qmle(sample: &FieldSample, settings: &OptimizerSettings) -> Result<(DVector<f64>, bool)> {
    let space = sample.domain();
    settings.validate(space.dim())?;

    let grid = space.grid(settings.coarse_grid_per_dim);
    let values: Vec<f64> = grid.iter().map(|th| sample.value(th)).collect();
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(QlaError::Evaluation(format!(
            "H not finite on the coarse grid at {:?}",
            grid[bad].as_slice()
        )));
    }

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let mut candidates: Vec<Candidate> = Vec::with_capacity(settings.starts);
    for &idx in order.iter().take(settings.starts) {
        candidates.push(newton_from(sample, space, grid[idx].clone(), settings));
    }

    let best = pick_best(&candidates).ok_or_else(|| QlaError::Optimizer {
        message: "no Newton start converged".into(),
        diagnostics: diagnostics(&candidates),
    })?;

    // Maximality audit: the returned point must dominate the coarse grid and a
    // fixed batch of fresh uniform points up to 1e-9 slack.
    let h_best = best.value;
    let slack = 1e-9 * (1.0 + h_best.abs());
    if let Some(i) = (0..grid.len()).find(|&i| values[i] > h_best + slack) {
        return Err(QlaError::Optimizer {
            message: format!(
                "maximality audit failed on grid: H({:?}) = {} > {}",
                grid[i].as_slice(),
                values[i],
                h_best
            ),
            diagnostics: diagnostics(&candidates),
        });
    }
    let mut audit_rng = child_stream(0x51a5_7a71, "qmle-audit", 0);
    for _ in 0..settings.audit_points {
        let theta = space.sample_interior(&mut audit_rng);
        if sample.value(&theta) > h_best + slack {
            return Err(QlaError::Optimizer {
                message: format!(
                    "maximality audit failed at fresh point {:?}",
                    theta.as_slice()
                ),
                diagnostics: diagnostics(&candidates),
            });
        }
    }

    let at_boundary = space.near_boundary(&best.theta, 1e-9);
    Ok((best.theta.clone(), at_boundary))
}

#[derive(Clone, Debug)]
struct Candidate {
    theta: DVector<f64>,
    value: f64,
    converged: bool,
    final_pg: f64,
    iters: usize,
}

fn diagnostics(cands: &[Candidate]) -> String {
    cands
        .iter()
        .enumerate()
        .map(|(k, c)| {
            format!(
                "start {k}: theta = {:?}, H = {}, converged = {}, |pg| = {}, iters = {}",
                c.theta.as_slice(),
                c.value,
                c.converged,
                c.final_pg,
                c.iters
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Infinity norm of the projected gradient for maximization over the box.
fn projected_gradient_norm(space: &ParameterSpace, theta: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let at_lower = theta[i] <= space.lower()[i];
        let at_upper = theta[i] >= space.upper()[i];
        let v = if at_lower {
            g[i].max(0.0)
        } else if at_upper {
            (-g[i]).max(0.0)
        } else {
            g[i].abs()
        };
        worst = worst.max(v);
    }
    worst
}

fn newton_from(
    sample: &FieldSample,
    space: &ParameterSpace,
    start: DVector<f64>,
    settings: &OptimizerSettings,
) -> Candidate {
    let mut theta = space.clamp(&start);
    let mut pg = f64::INFINITY;
    let mut iters = 0;
    for it in 0..settings.max_iters {
        iters = it;
        let g = sample.gradient(&theta);
        if !g.iter().all(|v| v.is_finite()) {
            return Candidate {
                theta,
                value: f64::NEG_INFINITY,
                converged: false,
                final_pg: pg,
                iters,
            };
        }
        pg = projected_gradient_norm(space, &theta, &g);
        if pg <= settings.grad_tol {
            break;
        }
        let hess = sample.hessian(&theta);
        // Newton direction when the field is locally concave, otherwise a
        // plain ascent direction.
        let dir = match Cholesky::new(-hess) {
            Some(ch) => ch.solve(&g),
            None => {
                let gn = g.norm();
                if gn == 0.0 {
                    break;
                }
                let diam = (space.upper() - space.lower()).norm();
                &g * (0.1 * diam / gn)
            }
        };
        let h0 = sample.value(&theta);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = space.clamp(&(&theta + &dir * t));
            let step = &cand - &theta;
            if step.norm() == 0.0 {
                break;
            }
            let hv = sample.value(&cand);
            // Armijo on the projected step; near the optimum the true gain can
            // drop below one ulp of H, so a value-equal candidate is accepted
            // and the projected-gradient test decides convergence.
            if hv >= h0 + 1e-4 * g.dot(&step).max(0.0) {
                theta = cand;
                accepted = true;
                break;
            }
            t *= settings.step_shrink;
        }
        if !accepted {
            // No admissible improvement along this direction; settle where we
            // are and let the final projected-gradient test decide.
            break;
        }
    }
    let g = sample.gradient(&theta);
    pg = projected_gradient_norm(space, &theta, &g);
    Candidate {
        value: sample.value(&theta),
        converged: pg <= settings.grad_tol,
        theta,
        final_pg: pg,
        iters,
    }
}

/// Best converged candidate; ties within 1e-12 in ℍ broken by the
/// lexicographically smallest θ.
fn pick_best(cands: &[Candidate]) -> Option<&Candidate> {
    let converged: Vec<&Candidate> = cands.iter().filter(|c| c.converged).collect();
    if converged.is_empty() {
        return None;
    }
    let h_max = converged
        .iter()
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    converged
        .into_iter()
        .filter(|c| c.value >= h_max - 1e-12)
        .min_by(|a, b| lex_cmp(&a.theta, &b.theta))
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for i in 0..a.len() {
        match a[i].total_cmp(&b[i]) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Quasi-Bayesian estimator: the posterior mean
/// θ̂ᴮ = [∫ e^ℍ ϖ dθ]⁻¹ ∫ θ e^ℍ ϖ dθ by tensor Gauss-Legendre quadrature.
///
/// Exponentials are taken relative to the grid maximum of ℍ; the shift
/// cancels exactly in the ratio. With `refine_check` on, the node count is
/// doubled once and the max-norm difference is reported; the refined value is
/// returned.
pub fn qbe(
    sample: &FieldSample,
    prior: &Prior,
    settings: &QuadratureSettings,
) -> Result<QbeOutcome> {
    let space = sample.domain();
    if space.dim() > 3 {
        return Err(QlaError::Precondition(format!(
            "tensor quadrature is capped at dim 3, got {}",
            space.dim()
        )));
    }
    if settings.nodes_per_dim < 33 {
        return Err(QlaError::Precondition(format!(
            "nodes_per_dim must be >= 33, got {}",
            settings.nodes_per_dim
        )));
    }
    let coarse = posterior_mean(sample, prior, settings.nodes_per_dim)?;
    if !settings.refine_check {
        return Ok(QbeOutcome {
            theta: coarse,
            quad_error: None,
        });
    }
    let fine = posterior_mean(sample, prior, 2 * settings.nodes_per_dim)?;
    let err = (&coarse - &fine).amax();
    Ok(QbeOutcome {
        theta: fine,
        quad_error: Some(err),
    })
}

fn posterior_mean(sample: &FieldSample, prior: &Prior, nodes: usize) -> Result<DVector<f64>> {
    let space = sample.domain();
    let p = space.dim();
    let mut axis_nodes = Vec::with_capacity(p);
    let mut axis_weights = Vec::with_capacity(p);
    for i in 0..p {
        let (x, w) = gauss_legendre_on(nodes, space.lower()[i], space.upper()[i]);
        axis_nodes.push(x);
        axis_weights.push(w);
    }

    // First pass: grid maximum of H for the overflow shift.
    let mut m = f64::NEG_INFINITY;
    let mut theta = DVector::zeros(p);
    let mut idx = vec![0usize; p];
    loop {
        for i in 0..p {
            theta[i] = axis_nodes[i][idx[i]];
        }
        let h = sample.value(&theta);
        if !h.is_finite() {
            return Err(QlaError::Evaluation(format!(
                "H not finite at quadrature node {:?}",
                theta.as_slice()
            )));
        }
        m = m.max(h);
        if !advance(&mut idx, nodes) {
            break;
        }
    }

    // Second pass: accumulate the ratio integrals.
    let mut den = 0.0;
    let mut num = DVector::zeros(p);
    idx.iter_mut().for_each(|v| *v = 0);
    loop {
        let mut w = 1.0;
        for i in 0..p {
            theta[i] = axis_nodes[i][idx[i]];
            w *= axis_weights[i][idx[i]];
        }
        let f = (sample.value(&theta) - m).exp() * prior.density(&theta) * w;
        den += f;
        num.axpy(f, &theta, 1.0);
        if !advance(&mut idx, nodes) {
            break;
        }
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(QlaError::Quadrature(format!(
            "posterior normalizer degenerate: {den}"
        )));
    }
    Ok(num / den)
}

fn advance(idx: &mut [usize], per_dim: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < per_dim {
            return true;
        }
        *v = 0;
    }
    false
}

/// Localization map û = a⁻¹(θ̂ - θ*).
pub fn localize(
    theta_hat: &DVector<f64>,
    space: &ParameterSpace,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let rhs = theta_hat - space.theta_star();
    a.clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| QlaError::Singular("scaling matrix a is singular".into()))
}

/// Runs both estimators on a chart and assembles the full record.
pub fn estimate(
    chart: &LocalChart,
    prior: &Prior,
    opt: &OptimizerSettings,
    quad: &QuadratureSettings,
) -> Result<EstimateRecord> {
    let (theta_m, at_boundary) = qmle(chart.sample(), opt)?;
    let qbe_out = qbe(chart.sample(), prior, quad)?;
    let space = chart.space();
    let u_m = localize(&theta_m, space, chart.a())?;
    let u_b = localize(&qbe_out.theta, space, chart.a())?;
    let delta = chart.delta()?;
    let gamma_star = chart.gamma_at(space.theta_star())?;
    Ok(EstimateRecord {
        theta_m: theta_m.as_slice().to_vec(),
        theta_b: qbe_out.theta.as_slice().to_vec(),
        u_m: u_m.as_slice().to_vec(),
        u_b: u_b.as_slice().to_vec(),
        delta: delta.as_slice().to_vec(),
        gamma_star: (0..gamma_star.nrows())
            .map(|i| {
                (0..gamma_star.ncols())
                    .map(|j| gamma_star[(i, j)])
                    .collect()
            })
            .collect(),
        at_boundary,
        quad_error: qbe_out.quad_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::quadratic_field;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn quadratic_sample(space: ParameterSpace, linear: f64, curv: f64) -> FieldSample {
        let star = space.theta_star().clone();
        quadratic_field(
            space,
            1.0,
            star,
            DVector::from_vec(vec![linear]),
            DMatrix::from_vec(1, 1, vec![curv]),
        )
    }

    #[test]
    fn qmle_finds_interior_vertex() {
        let sp = ParameterSpace::scalar(-2.0, 2.0, 0.0, 1.0).unwrap();
        let sample = quadratic_sample(sp, 0.3, 0.5);
        let (theta, boundary) = qmle(&sample, &OptimizerSettings::default()).unwrap();
        assert_relative_eq!(theta[0], 0.6, epsilon = 1e-10);
        assert!(!boundary);
    }

    #[test]
    fn qmle_clamps_to_boundary_and_flags_it() {
        let sp = ParameterSpace::scalar(-0.5, 0.5, 0.0, 0.25).unwrap();
        let sample = quadratic_sample(sp, 0.3, 0.5);
        let (theta, boundary) = qmle(&sample, &OptimizerSettings::default()).unwrap();
        assert_relative_eq!(theta[0], 0.5, epsilon = 1e-12);
        assert!(boundary);
    }

    #[test]
    fn qmle_flat_field_breaks_ties_lexicographically() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let sample = quadratic_sample(sp, 0.0, 0.0);
        let (theta, boundary) = qmle(&sample, &OptimizerSettings::default()).unwrap();
        assert_eq!(theta[0], -1.0);
        assert!(boundary);
    }

    #[test]
    fn qmle_rejects_bad_settings() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let sample = quadratic_sample(sp, 0.0, 1.0);
        let mut s = OptimizerSettings::default();
        s.coarse_grid_per_dim = 4;
        assert!(qmle(&sample, &s).is_err());
        let mut s = OptimizerSettings::default();
        s.starts = 0;
        assert!(qmle(&sample, &s).is_err());
    }

    #[test]
    fn qbe_symmetric_field_returns_center() {
        let sp = ParameterSpace::scalar(-2.0, 2.0, 0.0, 1.0).unwrap();
        let sample = quadratic_sample(sp.clone(), 0.0, 3.0);
        let prior = Prior::uniform(&sp);
        let out = qbe(&sample, &prior, &QuadratureSettings::default()).unwrap();
        assert!(out.theta[0].abs() <= 1e-10, "theta_b = {}", out.theta[0]);
        assert!(out.quad_error.unwrap() <= 1e-10);
    }

    #[test]
    fn qbe_matches_dense_midpoint_oracle() {
        // Sharp quadratic with b = 100: compare against a 10^6-point midpoint rule.
        let b: f64 = 100.0;
        let sp = ParameterSpace::scalar(-2.0, 2.0, 0.0, 1.0).unwrap();
        let sample = quadratic_sample(sp.clone(), 0.3 * b.sqrt(), 0.5 * b);
        let prior = Prior::uniform(&sp);
        let out = qbe(&sample, &prior, &QuadratureSettings::default()).unwrap();

        let n = 1_000_000;
        let (lo, hi) = (-2.0, 2.0);
        let step = (hi - lo) / n as f64;
        let mut m = f64::NEG_INFINITY;
        let eval = |t: f64| sample.value(&DVector::from_vec(vec![t]));
        for i in 0..n {
            m = m.max(eval(lo + (i as f64 + 0.5) * step));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let t = lo + (i as f64 + 0.5) * step;
            let w = (eval(t) - m).exp();
            num += w * t;
            den += w;
        }
        let oracle = num / den;
        assert!(
            (out.theta[0] - oracle).abs() <= 1e-6,
            "qbe {} vs oracle {oracle}",
            out.theta[0]
        );
    }

    #[test]
    fn qbe_with_linear_prior_and_flat_field_is_prior_mean() {
        // ϖ ∝ 1 + 0.5θ on (-1,1), H ≡ 0 → posterior mean 1/6.
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let sample = quadratic_sample(sp.clone(), 0.0, 0.0);
        let prior = Prior::linear(0.5, &sp).unwrap();
        let out = qbe(&sample, &prior, &QuadratureSettings::default()).unwrap();
        assert_relative_eq!(out.theta[0], 1.0 / 6.0, epsilon = 1e-10);
    }

    #[test]
    fn qbe_invariant_under_prior_scaling() {
        let sp = ParameterSpace::scalar(-1.5, 1.5, 0.2, 0.5).unwrap();
        let sample = quadratic_sample(sp.clone(), 1.0, 4.0);
        let p1 = Prior::truncated_normal(0.1, 0.8, &sp).unwrap();
        let scaled = {
            let inner = p1.clone();
            Prior::new(
                Arc::new(move |theta: &DVector<f64>| 37.5 * inner.density(theta)),
                &sp,
            )
            .unwrap()
        };
        let s = QuadratureSettings::default();
        let a = qbe(&sample, &p1, &s).unwrap();
        let b = qbe(&sample, &scaled, &s).unwrap();
        assert!((a.theta[0] - b.theta[0]).abs() <= 1e-12);
    }

    #[test]
    fn qbe_quadratic_exactness_in_u_coordinates() {
        // Wide box, uniform prior: û^B = Γ⁻¹Δ to 1e-6.
        let b: f64 = 400.0;
        let sp = ParameterSpace::scalar(-2.0, 2.0, 0.0, 1.0).unwrap();
        let delta = 0.7;
        let gamma = 1.3;
        let sample = quadratic_sample(sp.clone(), delta * b.sqrt(), gamma * b);
        let prior = Prior::uniform(&sp);
        let out = qbe(&sample, &prior, &QuadratureSettings::default()).unwrap();
        let a = DMatrix::from_vec(1, 1, vec![b.powf(-0.5)]);
        let u_b = localize(&out.theta, &sp, &a).unwrap();
        assert!((u_b[0] - delta / gamma).abs() <= 1e-6, "u_b = {}", u_b[0]);
    }

    #[test]
    fn qbe_node_floor_is_enforced() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let sample = quadratic_sample(sp.clone(), 0.0, 1.0);
        let prior = Prior::uniform(&sp);
        let s = QuadratureSettings {
            nodes_per_dim: 16,
            refine_check: true,
        };
        assert!(qbe(&sample, &prior, &s).is_err());
    }

    #[test]
    fn localize_solves_the_scaling() {
        let sp = ParameterSpace::scalar(-1.0, 1.0, 0.0, 0.5).unwrap();
        let a = DMatrix::from_vec(1, 1, vec![0.1]);
        let u = localize(&DVector::from_vec(vec![0.05]), &sp, &a).unwrap();
        assert_relative_eq!(u[0], 0.5, max_relative = 1e-14);

        let star = localize(sp.theta_star(), &sp, &a).unwrap();
        assert_eq!(star[0], 0.0);

        let sp2 =
            ParameterSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![0.0, 0.0], 0.5).unwrap();
        let a2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.01]));
        let u2 = localize(&DVector::from_vec(vec![0.1, 0.01]), &sp2, &a2).unwrap();
        assert_relative_eq!(u2[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(u2[1], 1.0, max_relative = 1e-12);

        let singular = DMatrix::from_vec(1, 1, vec![0.0]);
        assert!(localize(&DVector::from_vec(vec![0.5]), &sp, &singular).is_err());
    }

    #[test]
    fn estimate_assembles_record() {
        let sp = ParameterSpace::scalar(-2.0, 2.0, 0.0, 1.0).unwrap();
        let sample = quadratic_sample(sp.clone(), 0.3, 0.5);
        let chart = crate::field::LocalChart::new(sample, DMatrix::identity(1, 1)).unwrap();
        let prior = Prior::uniform(&sp);
        let rec = estimate(
            &chart,
            &prior,
            &OptimizerSettings::default(),
            &QuadratureSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(rec.theta_m[0], 0.6, epsilon = 1e-9);
        assert_relative_eq!(rec.u_m[0], 0.6, epsilon = 1e-9);
        assert_relative_eq!(rec.delta[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(rec.gamma_star[0][0], 0.5, epsilon = 1e-12);
        assert!(!rec.at_boundary);
    }

    #[test]
    fn translated_problem_translates_both_estimators() {
        let shift = 0.4;
        let sp0 = ParameterSpace::scalar(-1.5, 1.5, 0.1, 0.5).unwrap();
        let sp1 = ParameterSpace::scalar(-1.5 + shift, 1.5 + shift, 0.1 + shift, 0.5).unwrap();
        let s0 = quadratic_sample(sp0.clone(), 0.8, 2.5);
        let s1 = quadratic_sample(sp1.clone(), 0.8, 2.5);
        let opt = OptimizerSettings::default();
        let quad = QuadratureSettings::default();
        let (m0, _) = qmle(&s0, &opt).unwrap();
        let (m1, _) = qmle(&s1, &opt).unwrap();
        assert_relative_eq!(m1[0] - m0[0], shift, epsilon = 1e-8);
        let b0 = qbe(&s0, &Prior::uniform(&sp0), &quad).unwrap();
        let b1 = qbe(&s1, &Prior::uniform(&sp1), &quad).unwrap();
        assert_relative_eq!(b1.theta[0] - b0.theta[0], shift, epsilon = 1e-8);
    }
}
