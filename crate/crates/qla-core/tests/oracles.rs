//! Independent oracles for the localized field quantities: every value here
//! is recomputed from raw paths or closed forms, never through the chart
//! being checked.

use nalgebra::{DMatrix, DVector};
use qla_core::field::LocalChart;
use qla_core::models::{self, ModelSpec, OuPath, SyntheticExtras};
use qla_core::stream::child_stream;

fn ou_chart(spec: &ModelSpec, seed: u64, rep: u64) -> (LocalChart, OuPath) {
    let path = models::simulate_ou_path(spec, &mut child_stream(seed, "oracle-ou", rep)).unwrap();
    let field = models::ou_field_from_path(spec, &path).unwrap();
    let chart = LocalChart::new(field, spec.scaling()).unwrap();
    (chart, path)
}

#[test]
fn ou_delta_matches_path_summation() {
    // Δ_T = -T^{-1/2} Σ Xᵢ (ΔXᵢ + θ* Xᵢ δ), recomputed directly from the path.
    let spec = ModelSpec::ou_drift(1.0, 100.0, 0.01);
    let (chart, path) = ou_chart(&spec, 42, 0);
    let mut acc = 0.0;
    for w in path.x.windows(2) {
        acc += w[0] * ((w[1] - w[0]) + 1.0 * w[0] * path.mesh);
    }
    let oracle = -acc / 100.0f64.sqrt();
    let delta = chart.delta().unwrap()[0];
    assert!(
        (delta - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()),
        "delta {delta} vs oracle {oracle}"
    );
}

#[test]
fn ou_z_field_matches_path_summation() {
    let spec = ModelSpec::ou_drift(1.0, 100.0, 0.01);
    let (chart, path) = ou_chart(&spec, 42, 1);
    let a = 100.0f64.powf(-0.5);
    let (mut s1, mut s2) = (0.0, 0.0);
    for w in path.x.windows(2) {
        s1 += w[0] * (w[1] - w[0]);
        s2 += w[0] * w[0] * path.mesh;
    }
    let h = |t: f64| -t * s1 - t * t / 2.0 * s2;
    let u = 1.0;
    let oracle = (h(1.0 + a * u) - h(1.0)).exp();
    let z = chart.z_field(&DVector::from_vec(vec![u])).unwrap();
    assert!(
        (z - oracle).abs() <= 1e-12 * oracle,
        "z {z} vs oracle {oracle}"
    );
}

#[test]
fn vol_gamma_matches_increment_summation() {
    // Γ_n(θ*) = 2 n^{-1} Σ (ΔXᵢ)² / h at θ* = 0.
    let spec = ModelSpec::vol_contrast(0.0, 400, 0.01);
    let incr =
        models::simulate_vol_increments(&spec, &mut child_stream(7, "oracle-vol", 0)).unwrap();
    let field = models::vol_field_from_increments(&spec, &incr).unwrap();
    let chart = LocalChart::new(field, spec.scaling()).unwrap();
    let oracle = 2.0 * incr.iter().map(|d| d * d).sum::<f64>() / (400.0 * 0.01);
    let gamma = chart.gamma_at(&DVector::zeros(1)).unwrap()[(0, 0)];
    assert!(
        (gamma - oracle).abs() <= 1e-12 * (1.0 + oracle),
        "gamma {gamma} vs oracle {oracle}"
    );
}

#[test]
fn ou_y_field_approaches_analytic_ergodic_limit() {
    // 𝕐(θ*+0.5) = -(0.5)²/(4θ*) = -0.0625 from E[X²] = 1/(2θ*); the sample
    // y_field at large T is a long-run path average of the same quantity.
    let spec = ModelSpec::ou_drift(1.0, 2000.0, 0.01);
    let theta = DVector::from_vec(vec![1.5]);
    let reps = 40;
    let ys: Vec<f64> = (0..reps)
        .map(|k| {
            let (chart, _) = ou_chart(&spec, 5150, k);
            chart.y_field(&theta).unwrap()
        })
        .collect();
    let mean = ys.iter().sum::<f64>() / reps as f64;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (reps as f64 - 1.0);
    let se = (var / reps as f64).sqrt();
    assert!(
        (mean - (-0.0625)).abs() <= 3.0 * se,
        "mean {mean}, se {se}, expected -0.0625"
    );
}

#[test]
fn laq_remainder_agrees_with_integral_representation() {
    // Non-quadratic models: the direct definition and the Taylor-integral form
    // agree to 1e-8 at 256 nodes, with node-doubling convergence.
    let gamma = DMatrix::from_vec(1, 1, vec![2.0]);
    let spec = ModelSpec::vol_contrast(0.0, 400, 0.01);
    let field = models::simulate_vol_field(&spec, &mut child_stream(7, "laq", 0)).unwrap();
    let chart = LocalChart::new(field, spec.scaling()).unwrap();
    let u = DVector::from_vec(vec![0.8]);
    let direct = chart.laq_remainder(&u, &gamma).unwrap();
    let at = |nodes: usize| chart.laq_remainder_integral(&u, &gamma, nodes).unwrap();
    let errs: Vec<f64> = [8, 32, 128, 256]
        .iter()
        .map(|&n| (at(n) - direct).abs())
        .collect();
    assert!(
        errs[3] <= 1e-8,
        "integral mismatch {} at 256 nodes",
        errs[3]
    );
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] + 1e-13, "errors not shrinking: {errs:?}");
    }

    // Synthetic model with the sin perturbation active.
    let spec = ModelSpec::synthetic_laq(0.0, 100.0, SyntheticExtras::default());
    let field = models::synth_laq_field(&spec, &mut child_stream(7, "laq", 1)).unwrap();
    let chart = LocalChart::new(field, spec.scaling()).unwrap();
    let g = chart.gamma_at(chart.space().theta_star()).unwrap();
    let direct = chart.laq_remainder(&u, &g).unwrap();
    let integral = chart.laq_remainder_integral(&u, &g, 256).unwrap();
    assert!(
        (direct - integral).abs() <= 1e-8,
        "synthetic mismatch: {direct} vs {integral}"
    );
}

#[test]
fn chain_identity_log_z_equals_b_times_y() {
    let specs = [
        ModelSpec::ou_drift(1.0, 50.0, 0.01),
        ModelSpec::vol_contrast(0.2, 100, 0.01),
        ModelSpec::synthetic_laq(-0.3, 400.0, SyntheticExtras::default()),
    ];
    for (si, spec) in specs.iter().enumerate() {
        let field =
            models::simulate_field(spec, &mut child_stream(17, "chain", si as u64)).unwrap();
        let chart = LocalChart::new(field, spec.scaling()).unwrap();
        let mut rng = child_stream(18, "chain-u", si as u64);
        for _ in 0..50 {
            let theta = chart.space().sample_interior(&mut rng);
            let u = qla_core::estimators::localize(&theta, chart.space(), chart.a()).unwrap();
            if !chart.u_domain_contains(&u) {
                continue;
            }
            let lhs = chart.log_z(&u).unwrap();
            let rhs = chart.b()
                * chart
                    .y_field(&(chart.space().theta_star() + chart.a() * &u))
                    .unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()),
                "chain identity broken: {lhs} vs {rhs} (model {si})"
            );
        }
    }
}

#[test]
fn gradients_and_hessians_match_finite_differences() {
    // Central differences with step 1e-5 (1+|θ|) at 100 interior points for
    // each bundled model and 10 seeds.
    let specs = [
        ModelSpec::ou_drift(1.0, 20.0, 0.01),
        ModelSpec::vol_contrast(0.1, 80, 0.01),
        ModelSpec::synthetic_laq(0.2, 500.0, SyntheticExtras::default()),
    ];
    for spec in &specs {
        for seed in 0..10u64 {
            let field = models::simulate_field(spec, &mut child_stream(99, "fd", seed)).unwrap();
            let mut rng = child_stream(100, "fd-points", seed);
            for _ in 0..100 {
                let theta = field.domain().sample_interior(&mut rng);
                let t = theta[0];
                let h = 1e-5 * (1.0 + t.abs());
                let at = |x: f64| field.value(&DVector::from_vec(vec![x]));
                let g_at = |x: f64| field.gradient(&DVector::from_vec(vec![x]))[0];
                let fd_grad = (at(t + h) - at(t - h)) / (2.0 * h);
                let grad = field.gradient(&theta)[0];
                assert!(
                    (fd_grad - grad).abs() <= 1e-5 * (1.0 + grad.abs()),
                    "gradient FD mismatch at {t}: {fd_grad} vs {grad}"
                );
                let fd_hess = (g_at(t + h) - g_at(t - h)) / (2.0 * h);
                let hess = field.hessian(&theta)[(0, 0)];
                assert!(
                    (fd_hess - hess).abs() <= 1e-5 * (1.0 + hess.abs()),
                    "hessian FD mismatch at {t}: {fd_hess} vs {hess}"
                );
            }
        }
    }
}

#[test]
fn hessian_is_symmetric_everywhere_sampled() {
    let spec = ModelSpec::synthetic_laq(0.0, 300.0, SyntheticExtras::default());
    let field = models::simulate_field(&spec, &mut child_stream(4, "sym", 0)).unwrap();
    let mut rng = child_stream(4, "sym-pts", 1);
    for _ in 0..20 {
        let theta = field.domain().sample_interior(&mut rng);
        let h = field.hessian(&theta);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                assert!((h[(i, j)] - h[(j, i)]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn laq_remainder_median_decreases_along_schedule() {
    // r_T(u) →ᵖ 0: Monte Carlo median of |r_T(u)| over 500 replicates is
    // decreasing along a 4-point schedule for the volatility model.
    let u = DVector::from_vec(vec![0.8]);
    let gamma = DMatrix::from_vec(1, 1, vec![2.0]);
    let mut medians = Vec::new();
    for &n in &[100usize, 400, 1600, 6400] {
        let spec = ModelSpec::vol_contrast(0.0, n, 0.01);
        let mut vals: Vec<f64> = (0..500u64)
            .map(|k| {
                let field =
                    models::simulate_vol_field(&spec, &mut child_stream(31, &format!("rt/{n}"), k))
                        .unwrap();
                let chart = LocalChart::new(field, spec.scaling()).unwrap();
                chart.laq_remainder(&u, &gamma).unwrap().abs()
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        medians.push(0.5 * (vals[249] + vals[250]));
    }
    assert!(
        medians.windows(2).all(|w| w[1] < w[0]),
        "medians not decreasing: {medians:?}"
    );
}

#[test]
fn score_is_centered_at_theta_star() {
    // Martingale property of the score: E[∂ℍ(θ*)] = 0 within 3 standard
    // errors. The OU Itô sum carries an O(δ) discretization bias, so a fine
    // mesh is used; the synthetic model is centered only in its martingale
    // part (κ = 0).
    let cases: Vec<(ModelSpec, u64)> = vec![
        (ModelSpec::ou_drift(1.0, 50.0, 0.002), 2000),
        (ModelSpec::vol_contrast(0.0, 400, 0.01), 2000),
        (
            ModelSpec::synthetic_laq(
                0.0,
                1e4,
                SyntheticExtras {
                    kappa: 0.0,
                    ..Default::default()
                },
            ),
            2000,
        ),
    ];
    for (spec, reps) in cases {
        let scores: Vec<f64> = (0..reps)
            .map(|k| {
                let field =
                    models::simulate_field(&spec, &mut child_stream(61, "score", k)).unwrap();
                field.gradient(&DVector::from_vec(vec![spec.theta_star]))[0]
            })
            .collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            mean.abs() <= 3.0 * se,
            "score not centered for {:?}: mean {mean}, se {se}",
            spec.kind
        );
    }
}

#[test]
fn vol_gamma_at_theta_star_concentrates_at_two() {
    let spec = ModelSpec::vol_contrast(0.0, 10_000, 0.01);
    let reps = 500u64;
    let vals: Vec<f64> = (0..reps)
        .map(|k| {
            let field = models::simulate_vol_field(&spec, &mut child_stream(8, "g2", k)).unwrap();
            let chart = LocalChart::new(field, spec.scaling()).unwrap();
            chart.gamma_at(&DVector::zeros(1)).unwrap()[(0, 0)]
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 2.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn ou_qmle_equals_clamped_vertex() {
    // The OU field is an explicit concave quadratic, so the maximizer over
    // the closed box is the clamped vertex -S₁/S₂.
    let spec = ModelSpec::ou_drift(1.0, 50.0, 0.01);
    let settings = qla_core::estimators::OptimizerSettings::default();
    for k in 0..20u64 {
        let path = models::simulate_ou_path(&spec, &mut child_stream(77, "vertex", k)).unwrap();
        let (s1, s2) = path.sufficient_stats();
        let vertex = (-s1 / s2).clamp(0.1, 3.0);
        let field = models::ou_field_from_path(&spec, &path).unwrap();
        let (theta_hat, _) = qla_core::estimators::qmle(&field, &settings).unwrap();
        assert!(
            (theta_hat[0] - vertex).abs() <= 1e-10,
            "qmle {} vs clamped vertex {vertex}",
            theta_hat[0]
        );
    }
}

#[test]
fn gamma_consistency_identity_for_ou() {
    // Γ_T is constant in θ for the OU quadratic, so the uniform deviation over
    // any u-ball equals |S₂/T - Γ| exactly.
    let spec = ModelSpec::ou_drift(1.0, 100.0, 0.01);
    let (chart, path) = ou_chart(&spec, 13, 0);
    let (_, s2) = path.sufficient_stats();
    let gamma = 0.5;
    let scalar = (s2 / 100.0 - gamma).abs();
    for u in [-2.0, -0.7, 0.3, 1.9] {
        let theta = chart.space().theta_star() + chart.a() * DVector::from_vec(vec![u]);
        if !chart.space().contains(&theta) {
            continue;
        }
        let dev = (chart.gamma_at(&theta).unwrap()[(0, 0)] - gamma).abs();
        assert!((dev - scalar).abs() <= 1e-12);
    }
}

#[test]
fn analytic_limit_fields_satisfy_identifiability_on_dense_grid() {
    // y(theta*) = 0 and y(theta) <= -chi0 |theta-theta*|^2 on a 1e4-point grid.
    for spec in [
        ModelSpec::ou_drift(1.0, 100.0, 0.01),
        ModelSpec::vol_contrast(0.0, 400, 0.01),
    ] {
        let law = models::limit_law(&spec).unwrap();
        let space = spec.parameter_space().unwrap();
        law.check_identifiability(&space, 10_000).unwrap();
    }
}

#[test]
fn ou_efficiency_residual_identity() {
    // For the quadratic OU field with interior vertex, the first-order
    // efficiency residual collapses to |Delta| |Gamma_T^{-1} - Gamma^{-1}|.
    let spec = ModelSpec::ou_drift(1.0, 200.0, 0.01);
    let gamma = 0.5;
    let settings = qla_core::estimators::OptimizerSettings::default();
    for k in 0..10u64 {
        let (chart, path) = ou_chart(&spec, 909, k);
        let (s1, s2) = path.sufficient_stats();
        let vertex = -s1 / s2;
        if !(0.1..3.0).contains(&vertex) {
            continue;
        }
        let (theta_hat, boundary) = qla_core::estimators::qmle(chart.sample(), &settings).unwrap();
        assert!(!boundary);
        let u_hat = qla_core::estimators::localize(&theta_hat, chart.space(), chart.a()).unwrap();
        let delta = chart.delta().unwrap()[0];
        let gamma_t = chart.gamma_at(chart.space().theta_star()).unwrap()[(0, 0)];
        let expect = (delta * (1.0 / gamma_t - 1.0 / gamma)).abs();
        let got = (u_hat[0] - delta / gamma).abs();
        assert!(
            (got - expect).abs() <= 1e-8 * (1.0 + expect),
            "residual {got} vs identity {expect}"
        );
    }
}
