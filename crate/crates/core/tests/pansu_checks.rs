//! Differentiability diagnostics: the uniform differential along the ray,
//! the perturbation bound ratio, the lower-estimate sanity check, and the
//! cross-module comparison with the step-two chain solver.

use carnot_kit_core::groups::{GroupDescriptor, StepTwoGroup};
use carnot_kit_core::pansu::{
    first_layer_gap, pansu_residual, pansu_slope, perturbation_bound_ratio, solve_perturbation,
    steptwo_pansu_residual, steptwo_pansu_slope, ResidualOptions, DEFAULT_LAMBDA_GRID,
};

#[test]
fn residual_vanishes_at_the_identity() {
    let g = GroupDescriptor::heisenberg();
    let id: Vec<f64> = g.identity();
    let res = pansu_residual(&g, &[2.0, 0.0], &id, &ResidualOptions::default()).unwrap();
    assert!(res.r_upper.abs() < 1e-13, "r at identity: {}", res.r_upper);
    assert!(res.alpha_norm < 1e-13);
}

#[test]
fn differential_is_uniform_along_the_ray() {
    // The fitted decay at exp(λw·X) stays quadratic with the same linear
    // functional ⟨w/|w|, ·⟩ for every λ > 0.
    let g = GroupDescriptor::heisenberg();
    let x0 = [0.0, 1.0, 1.0];
    for lam in [0.5f64, 1.0, 2.0] {
        let w = [2.0 * lam, 0.0];
        let report =
            pansu_slope(&g, &w, &x0, &DEFAULT_LAMBDA_GRID, &ResidualOptions::default()).unwrap();
        let slope = report.slope_upper.expect("nondegenerate");
        assert!(slope >= 1.9, "slope {slope} at lambda {lam}");
    }
}

#[test]
fn perturbation_bound_ratio_stays_bounded_along_dilations() {
    let g = GroupDescriptor::heisenberg();
    let xi = [1.0, 0.0];
    let x0 = vec![0.0, 1.0, 1.0];
    let mut ratios = Vec::new();
    for k in 1..=4 {
        let lam = 10f64.powi(-k);
        let x = g.dilate(&lam, &x0).unwrap();
        let sol = solve_perturbation(&g, &xi, 2, &x).unwrap();
        assert!(sol.residual < 1e-12);
        assert!(first_layer_gap(&g, &sol) < 1e-12);
        let ratio = perturbation_bound_ratio(&g, &sol, 32, 6, 700 + k as u64).unwrap();
        ratios.push(ratio);
    }
    let max = ratios.iter().cloned().fold(0.0f64, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max.is_finite() && max < 50.0, "ratios {ratios:?}");
    assert!(min > 0.0);
}

#[test]
fn estimate_residual_is_compatible_with_the_lower_bound() {
    // Evidence for the cited lower estimate: the oracle residual never goes
    // meaningfully negative (noise floor aside), at every grid point.
    let g = GroupDescriptor::heisenberg();
    let opts = ResidualOptions { p: None, estimate: Some((48, 8, 17)) };
    let report = pansu_slope(&g, &[2.0, 0.0], &[0.0, 1.0, 1.0], &DEFAULT_LAMBDA_GRID, &opts)
        .unwrap();
    for row in &report.rows {
        let r_est = row.r_est.expect("estimate computed");
        let floor = -(3e-6_f64).max(row.lambda * row.lambda);
        assert!(r_est >= floor, "r_est {} at lambda {}", r_est, row.lambda);
    }
    // And the positive part still decays superlinearly when it is fittable.
    if let Some(slope) = report.slope_est {
        assert!(slope > 1.0, "estimate slope {slope}");
    }
}

#[test]
fn steptwo_chain_cannot_beat_the_min_residual() {
    // The dedicated step-two solver provides a weaker-or-equal upper bound
    // than the min of chain bound and oracle estimate.
    let g2 = StepTwoGroup::heisenberg();
    let g = GroupDescriptor::StepTwo(g2.clone());
    let w = [2.0, 0.0];
    let z = [0.02, -0.01];
    let t = [0.015];
    let x = vec![z[0], z[1], t[0]];
    let steptwo = steptwo_pansu_residual(&g2, &w, &z, &t).unwrap();
    let opts = ResidualOptions { p: None, estimate: Some((48, 8, 29)) };
    let pansu = pansu_residual(&g, &w, &x, &opts).unwrap();
    assert!(steptwo.r >= pansu.r_min() - 1e-9, "{} vs {}", steptwo.r, pansu.r_min());
}

#[test]
fn steptwo_slope_on_more_directions() {
    // Quadratic decay at random non-abnormal directions too.
    let g = StepTwoGroup::heisenberg();
    for (w, z, t) in [
        ([1.0, 1.0], [0.2, -0.4], [0.3]),
        ([0.0, 2.0], [-0.1, 0.3], [-0.2]),
    ] {
        let report = steptwo_pansu_slope(&g, &w, &z, &t, &DEFAULT_LAMBDA_GRID).unwrap();
        let slope = report.slope_upper.expect("positive residuals");
        assert!(slope >= 1.9, "slope {slope} at w {w:?}");
    }
}

#[test]
fn degenerate_grid_rows_are_clamped_not_fitted() {
    // Collinear x₀: every residual sits at the noise floor and the slope is
    // reported as degenerate rather than fitted from noise.
    let g = GroupDescriptor::heisenberg();
    let x0 = g.exp_horizontal(&[1.0, 0.0].to_vec()).unwrap();
    let report =
        pansu_slope(&g, &[2.0, 0.0], &x0, &DEFAULT_LAMBDA_GRID, &ResidualOptions::default())
            .unwrap();
    assert!(report.degenerate);
    assert_eq!(report.clamped, report.rows.len());
}
