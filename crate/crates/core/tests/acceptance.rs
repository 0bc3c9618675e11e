//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Every tolerance is pinned here in code.

use carnot_kit_core::convexity::{
    check_line, cone_probe, derivative_sign_check, free32_axis_check, hconvex_scan,
    ConeProbeOptions, ImplicitSet, Membership,
};
use carnot_kit_core::distance::{distance_from_origin, DistanceStatus};
use carnot_kit_core::groups::{metivier_check, GroupDescriptor, MetivierVerdict, StepTwoGroup};
use carnot_kit_core::multiexp::{filiform_m, submersion_test};
use carnot_kit_core::pansu::{
    pansu_slope, solve_perturbation, steptwo_pansu_slope, ResidualOptions, DEFAULT_LAMBDA_GRID,
};
use carnot_kit_core::scalar::{parse_rat, rand_rat, rat, rat_i, rat_to_f64, Rat};
use carnot_kit_core::steptwo_solver::solve_full;
use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn rand_point(g: &GroupDescriptor, rng: &mut ChaCha8Rng) -> Vec<Rat> {
    (0..g.n()).map(|_| rand_rat(rng, 3, 3)).collect()
}

fn step_two_instances() -> Vec<GroupDescriptor> {
    // Five random descriptors with m <= 4, l <= 3.
    [(2, 1, 101u64), (3, 1, 102), (3, 2, 103), (4, 2, 104), (4, 3, 105)]
        .into_iter()
        .map(|(m, l, seed)| GroupDescriptor::StepTwo(StepTwoGroup::random(m, l, seed)))
        .collect()
}

#[test]
fn criterion_1_algebra_suite_exact() {
    let start = Instant::now();
    let mut instances = step_two_instances();
    for p in 1..=5 {
        instances.push(GroupDescriptor::filiform(p).unwrap());
    }
    instances.push(GroupDescriptor::free32());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cases = 0usize;
    for g in &instances {
        let id: Vec<Rat> = g.identity();
        for _ in 0..1000 {
            let a = rand_point(g, &mut rng);
            let b = rand_point(g, &mut rng);
            let c = rand_point(g, &mut rng);
            // associativity
            let left = g.multiply(&g.multiply(&a, &b).unwrap(), &c).unwrap();
            let right = g.multiply(&a, &g.multiply(&b, &c).unwrap()).unwrap();
            assert_eq!(left, right);
            // identity
            assert_eq!(g.multiply(&a, &id).unwrap(), a);
            assert_eq!(g.multiply(&id, &a).unwrap(), a);
            // inverse
            let inv = g.inverse(&a).unwrap();
            assert!(g.multiply(&a, &inv).unwrap().iter().all(Zero::is_zero));
            assert!(g.multiply(&inv, &a).unwrap().iter().all(Zero::is_zero));
            // dilation automorphism at a random rational lambda > 0
            let lam = {
                let mut l = rand_rat(&mut rng, 3, 3);
                if !Signed::is_positive(&l) {
                    l = rat(1, 2) - l;
                }
                l
            };
            let dilated_product = g.dilate(&lam, &g.multiply(&a, &b).unwrap()).unwrap();
            let product_of_dilated = g
                .multiply(&g.dilate(&lam, &a).unwrap(), &g.dilate(&lam, &b).unwrap())
                .unwrap();
            assert_eq!(dilated_product, product_of_dilated);
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "algebra suite took {elapsed:?}");
    println!(
        "PASS criterion 1: exact algebra suite, {} instances x 1000 cases ({} total) in {:.2?}",
        instances.len(),
        cases,
        elapsed
    );
}

#[test]
fn criterion_2_matrix_representation_homomorphism() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in 1..=5usize {
        let g = GroupDescriptor::filiform(p).unwrap();
        let GroupDescriptor::Filiform(f) = &g else { unreachable!() };
        for _ in 0..500 {
            let a = rand_point(&g, &mut rng);
            let b = rand_point(&g, &mut rng);
            let product_rep = f.matrix_rep(&g.multiply(&a, &b).unwrap());
            let rep_product =
                carnot_kit_core::linalg::mat_mul(&f.matrix_rep(&a), &f.matrix_rep(&b));
            assert_eq!(product_rep, rep_product, "homomorphism at p={p}");
        }
    }
    println!("PASS criterion 2: matrix representation is a homomorphism, 500 pairs x p in 1..=5");
}

#[test]
fn criterion_3_filiform_submersion_reproduction() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Nonzero xi: rank p+2 at chain length p+1.
    for p in 1..=6usize {
        let g = GroupDescriptor::filiform(p).unwrap();
        for _ in 0..20 {
            let mut xi = rand_rat(&mut rng, 3, 3);
            if Zero::is_zero(&xi) {
                xi = rat_i(1);
            }
            let eta = rand_rat(&mut rng, 3, 3);
            let report = submersion_test(&g, &[xi.clone(), eta.clone()], p + 1).unwrap();
            assert_eq!(report.rank, p + 2, "rank at p={p}, zeta=({xi},{eta})");
            assert!(report.submersion);
        }
    }
    // Reduced Vandermonde determinant nonzero, exactly, up to p = 8.
    for p in 1..=8usize {
        let m = filiform_m(p, &[rat_i(1), rat(2, 3)]).unwrap();
        assert!(!Zero::is_zero(&m.reduced_det), "det M-hat at p={p}");
        assert!(!Zero::is_zero(&m.det), "det M at p={p}");
    }
    // Singular direction (0, eta): never a submersion for p >= 2 (the
    // vertical line is a singular extremal only from step three on; at
    // p = 1 the group is Heisenberg and every nonzero direction works).
    for p in 2..=6usize {
        let g = GroupDescriptor::filiform(p).unwrap();
        for q in 1..=8usize {
            let report = submersion_test(&g, &[rat_i(0), rat_i(1)], q).unwrap();
            assert!(report.rank < p + 2, "rank {} at p={p}, q={q}", report.rank);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 3 took {elapsed:?}");
    println!("PASS criterion 3: filiform submersion ranks, Vandermonde dets, singular directions in {elapsed:.2?}");
}

#[test]
fn criterion_4_metivier_dichotomy() {
    let heisenberg = StepTwoGroup::heisenberg();
    let report = metivier_check(&heisenberg, 10_000, 4).unwrap();
    assert!(
        matches!(report.verdict, MetivierVerdict::MetivierEvidence),
        "Heisenberg must report no counterexample: {report:?}"
    );
    assert_eq!(report.trials, 10_000);

    let r3 = StepTwoGroup::non_metivier_r3();
    let report = metivier_check(&r3, 10_000, 4).unwrap();
    match report.verdict {
        MetivierVerdict::Counterexample { x, rank } => {
            assert_eq!(rank, 0, "Q(x,.) = 0 for all y");
            assert_eq!(x, vec![0.0, 0.0, 1.0]);
        }
        other => panic!("expected counterexample, got {other:?}"),
    }
    println!("PASS criterion 4: Metivier dichotomy (10^4 trials evidence; R^3 x R witness rank 0)");
}

#[test]
fn criterion_5_proposition_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max_ratio = 0.0f64;
    let mut instances = 0usize;
    for g in step_two_instances() {
        let GroupDescriptor::StepTwo(s2) = &g else { unreachable!() };
        for _ in 0..40 {
            let xi_a: Vec<Rat> = (0..s2.m()).map(|_| rand_rat(&mut rng, 3, 3)).collect();
            let xi_b: Vec<Rat> = (0..s2.m()).map(|_| rand_rat(&mut rng, 2, 5)).collect();
            let z: Vec<Rat> = (0..s2.m()).map(|_| rand_rat(&mut rng, 3, 3)).collect();
            let t: Vec<Rat> = (0..s2.l()).map(|_| rand_rat(&mut rng, 3, 3)).collect();

            // Exact reconstruction is verified inside solve_full; an error
            // here is a criterion failure.
            let full = solve_full(s2, &xi_a, &z, &t).unwrap();

            // Bitwise xi-independence of the correction chain.
            let full_b = solve_full(s2, &xi_b, &z, &t).unwrap();
            assert_eq!(full.correction.u, full_b.correction.u);
            assert_eq!(
                full.correction.sum_norm.to_bits(),
                full_b.correction.sum_norm.to_bits()
            );

            // Ratio bounded and stable under the anisotropic rescaling.
            if let Some(ratio) = full.correction.bound_ratio() {
                assert!(ratio.is_finite());
                max_ratio = max_ratio.max(ratio);
                for lam in [rat_i(2), rat(1, 3)] {
                    let z_s: Vec<Rat> = z.iter().map(|c| c * &lam).collect();
                    let t_s: Vec<Rat> = t.iter().map(|c| c * &lam * &lam).collect();
                    let scaled = solve_full(s2, &xi_a, &z_s, &t_s).unwrap();
                    let r_s = scaled.correction.bound_ratio().unwrap();
                    assert!(
                        (r_s / ratio - 1.0).abs() < 0.01,
                        "ratio drifted: {r_s} vs {ratio} at lambda {lam}"
                    );
                }
            }
            instances += 1;
        }
    }
    assert_eq!(instances, 200);
    println!(
        "PASS criterion 5: 200 exact reconstructions over 5 descriptors, xi-independent bitwise; max ratio {max_ratio:.3}"
    );
}

#[test]
fn criterion_6_pansu_slopes() {
    let start = Instant::now();
    // Heisenberg at w = (2, 0).
    let h = GroupDescriptor::heisenberg();
    let report = pansu_slope(
        &h,
        &[2.0, 0.0],
        &[0.0, 1.0, 1.0],
        &DEFAULT_LAMBDA_GRID,
        &ResidualOptions::default(),
    )
    .unwrap();
    let slope_h = report.slope_upper.expect("nondegenerate");
    assert!(slope_h >= 1.9, "Heisenberg slope {slope_h}");

    // Engel (filiform p = 2) at w = (1, 0), generic x0.
    let e = GroupDescriptor::filiform(2).unwrap();
    let report_e = pansu_slope(
        &e,
        &[1.0, 0.0],
        &[0.1, 1.0, 0.7, 0.5],
        &DEFAULT_LAMBDA_GRID,
        &ResidualOptions::default(),
    )
    .unwrap();
    let slope_e = report_e.slope_upper.expect("nondegenerate");
    assert!(slope_e >= 1.9, "Engel slope {slope_e}");

    // First-layer identity to 1e-12 along both grids.
    for (g, w, x0) in [
        (&h, [2.0, 0.0], vec![0.0, 1.0, 1.0]),
        (&e, [1.0, 0.0], vec![0.1, 1.0, 0.7, 0.5]),
    ] {
        let p = carnot_kit_core::pansu::auto_chain_length(g, &w).unwrap();
        let xi: Vec<f64> = w.iter().map(|c| c / p as f64).collect();
        for lam in DEFAULT_LAMBDA_GRID {
            let x = g.dilate(&lam, &x0).unwrap();
            let sol = solve_perturbation(g, &xi, p, &x).unwrap();
            let gap = carnot_kit_core::pansu::first_layer_gap(g, &sol);
            assert!(gap <= 1e-12, "first-layer gap {gap} at lambda {lam}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "criterion 6 took {elapsed:?}");
    println!(
        "PASS criterion 6: chain-bound residual slopes {slope_h:.3} (Heisenberg), {slope_e:.3} (Engel) >= 1.9; first layer exact to 1e-12; {elapsed:.2?}"
    );
}

#[test]
fn criterion_7_steptwo_abnormal_direction() {
    let g = StepTwoGroup::non_metivier_r3();
    let report = steptwo_pansu_slope(
        &g,
        &[0.0, 0.0, 1.0],
        &[0.3, -0.2, 0.5],
        &[0.7],
        &DEFAULT_LAMBDA_GRID,
    )
    .unwrap();
    let slope = report.slope_upper.expect("positive residuals");
    assert!(slope >= 1.9, "slope {slope}");
    println!("PASS criterion 7: abnormal-direction residual slope {slope:.3} >= 1.9 under (lambda z, lambda^2 t)");
}

#[test]
fn criterion_8_counterexample_suite() {
    let start = Instant::now();

    // (a) filiform-even(2): exact derivative signs, clean scan over 1e4 lines.
    let even = ImplicitSet::filiform_even(2).unwrap();
    let signs = derivative_sign_check(&even, 1000, 8).unwrap();
    assert!(signs.zero_field_ok, "XF = 0 must hold exactly");
    assert_eq!(signs.monotone_field_ok, Some(true), "YF >= 0 must hold");
    let scan = hconvex_scan(&even, 10_000, 17, 8).unwrap();
    assert!(scan.witness.is_none(), "unexpected witness: {:?}", scan.witness);
    let part_a = start.elapsed();

    // (b) cone probe at vertex 0, V = Y: a doubly certified violation for
    // each aperture.
    let vertex = vec![rat_i(0); 4];
    let y_dir = vec![rat_i(0), rat_i(1)];
    let opts = ConeProbeOptions { max_violations: 1, ..Default::default() };
    for eps in [rat(1, 2), rat(1, 10)] {
        let report = cone_probe(
            &even,
            &vertex,
            &y_dir,
            &eps,
            &carnot_kit_core::convexity::default_cone_s_grid(),
            4,
            88,
            &opts,
        )
        .unwrap();
        assert!(
            !report.violations.is_empty(),
            "no violation at eps {eps}: {} candidates, {} oracle calls",
            report.candidates_checked,
            report.oracle_calls
        );
        let v = &report.violations[0];
        assert!(v.distance_upper < v.radius, "ball certificate");
        assert!(
            Signed::is_negative(&parse_rat(&v.f_value).unwrap()),
            "exact exterior certificate"
        );
    }

    // (c) odd case: in/out/in along exp(s(-X+Y)) at exact rational s.
    let odd = ImplicitSet::filiform_odd(3).unwrap();
    let pattern = check_line(
        &odd,
        &vec![rat_i(0); 5],
        &[rat_i(-1), rat_i(1)],
        &[rat_i(0), rat(1, 48), rat(1, 24)],
    )
    .unwrap();
    assert_eq!(pattern.memberships[0], Membership::Boundary);
    assert_eq!(pattern.memberships[1], Membership::Exterior);
    assert_eq!(pattern.memberships[2], Membership::Boundary);
    let violation = pattern.violation.expect("in/out/in witness");
    assert!(violation.against_set);

    // (d) free32 axis: exact sign change of -c eps^3 s^3 + s^4 at s = c eps^3.
    let xi = [rat(3, 5), rat(4, 5)];
    let eps = rat(1, 2);
    let c = rat(1, 4);
    let flip = &c * eps.pow(3);
    let grid = vec![&flip * rat(1, 2), flip.clone(), &flip * rat_i(2)];
    let axis = free32_axis_check(&xi, &eps, &c, &grid).unwrap();
    assert!(axis.all_agree);
    assert!(!axis.rows[0].in_set && axis.rows[2].in_set);
    for row in &axis.rows {
        let s = parse_rat(&row.s).unwrap();
        let expected = s.pow(4) - &c * eps.pow(3) * s.pow(3);
        assert_eq!(parse_rat(&row.f_value).unwrap(), expected, "exact F value at s={}", row.s);
    }

    // (e) engel-remark42: the probe finds a violation at the direction X2.
    let engel = ImplicitSet::engel_remark42();
    let report = cone_probe(
        &engel,
        &vertex,
        &y_dir,
        &rat(1, 2),
        &carnot_kit_core::convexity::default_cone_s_grid(),
        4,
        99,
        &opts,
    )
    .unwrap();
    assert!(!report.violations.is_empty(), "engel probe found nothing");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "criterion 8 took {elapsed:?}");
    println!(
        "PASS criterion 8: counterexample suite (scan {part_a:.2?}, total {elapsed:.2?}): signs exact, 10^4-line scan clean, certified cone violations at eps 1/2 and 1/10, odd in/out/in, free32 sign flip exact, Engel violation"
    );
}

#[test]
fn criterion_9_distance_oracle_sanity() {
    let g = GroupDescriptor::heisenberg();

    // Horizontal targets: estimate within 1e-6 of |w|.
    for w in [[0.6, 0.8], [2.0, 0.0], [-0.3, 0.4]] {
        let norm = f64::sqrt(w[0] * w[0] + w[1] * w[1]);
        let target = g.exp_horizontal(&w.to_vec()).unwrap();
        let est = distance_from_origin(&g, &target, 64, 8, 900).unwrap();
        assert_eq!(est.status, DistanceStatus::UpperBound);
        assert!(
            (est.value - norm).abs() < 1e-6,
            "horizontal value {} vs |w| {norm}",
            est.value
        );
    }

    // Dilation scaling within 1e-3 relative.
    let x = [0.4, -0.3, 0.8];
    let base = distance_from_origin(&g, &x, 64, 8, 901).unwrap().value;
    for lam in [0.5f64, 2.0] {
        let scaled = g.dilate(&lam, &x.to_vec()).unwrap();
        let v = distance_from_origin(&g, &scaled, 64, 8, 901).unwrap().value;
        assert!(
            (v - lam * base).abs() / (lam * base) < 1e-3,
            "scaling {v} vs {}",
            lam * base
        );
    }

    // Symmetry within 1e-6.
    let a = [0.2, 0.5, -0.3];
    let b = [-0.4, 0.1, 0.6];
    let ab = carnot_kit_core::distance::distance_estimate(&g, &a, &b, 64, 8, 902).unwrap().value;
    let ba = carnot_kit_core::distance::distance_estimate(&g, &b, &a, 64, 8, 902).unwrap().value;
    assert!((ab - ba).abs() / ab.max(ba) < 1e-6, "symmetry {ab} vs {ba}");

    // Self-convergence N = 64 vs N = 512 on 20 targets.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let target: Vec<f64> =
            (0..3).map(|_| rat_to_f64(&rand_rat(&mut rng, 2, 2))).collect();
        if target.iter().all(|c| *c == 0.0) {
            continue;
        }
        let coarse = distance_from_origin(&g, &target, 64, 8, 910 + i).unwrap().value;
        let fine = distance_from_origin(&g, &target, 512, 8, 910 + i).unwrap().value;
        let rel = (coarse - fine).abs() / fine;
        worst = worst.max(rel);
        assert!(rel < 1e-3, "self-convergence {rel} at target {target:?}");
    }
    println!("PASS criterion 9: distance oracle sanity (horizontal 1e-6, scaling 1e-3, symmetry 1e-6, self-convergence worst {worst:.2e})");
}
