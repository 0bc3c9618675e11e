//! Cross-validation of the closed-form group machinery against independent
//! routes: a Runge-Kutta integrator for the horizontal flows, the matrix
//! representation for the filiform law, and a symbolic bracket computation
//! for the filiform field tower.

use carnot_kit_core::groups::GroupDescriptor;
use carnot_kit_core::linalg::mat_mul;
use carnot_kit_core::multiexp::endpoint_map;
use carnot_kit_core::scalar::{rand_rat, rat, rat_i, rat_to_f64, Rat};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<GroupDescriptor> {
    vec![
        GroupDescriptor::heisenberg(),
        GroupDescriptor::filiform(1).unwrap(),
        GroupDescriptor::filiform(3).unwrap(),
        GroupDescriptor::free32(),
    ]
}

/// RK4 on the driven horizontal ODE γ' = Σ u_j(t) X_j(γ). The control is
/// sampled once per step (at the step midpoint), so step boundaries must
/// align with control discontinuities.
fn rk4(g: &GroupDescriptor, control: &dyn Fn(f64) -> Vec<f64>, x0: &[f64], steps: usize) -> Vec<f64> {
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    for i in 0..steps {
        let u = control((i as f64 + 0.5) * h);
        let f = |y: &[f64]| -> Vec<f64> { g.horizontal_combination(&u, y).expect("valid dims") };
        let k1 = f(&x);
        let y2: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k2 = f(&y2);
        let y3: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
        let k3 = f(&y3);
        let y4: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
        let k4 = f(&y4);
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    x
}

#[test]
fn flow_matches_ode_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in families() {
        for _ in 0..5 {
            let x0: Vec<f64> =
                (0..g.n()).map(|_| rat_to_f64(&rand_rat(&mut rng, 2, 2))).collect();
            let w: Vec<f64> = (0..g.m()).map(|_| rat_to_f64(&rand_rat(&mut rng, 2, 2))).collect();
            let flowed = g.flow(&w, &x0).unwrap();
            let integrated = rk4(&g, &|_| w.clone(), &x0, 400);
            for (a, b) in flowed.iter().zip(&integrated) {
                assert!((a - b).abs() < 1e-9, "flow {flowed:?} vs rk4 {integrated:?}");
            }
        }
    }
}

#[test]
fn endpoint_matches_piecewise_ode_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for g in families() {
        let nseg = 5usize;
        let controls: Vec<Vec<f64>> = (0..nseg)
            .map(|_| (0..g.m()).map(|_| rat_to_f64(&rand_rat(&mut rng, 2, 2))).collect())
            .collect();
        let end = endpoint_map(&g, &controls).unwrap();
        let ctrl = controls.clone();
        let piecewise = move |t: f64| -> Vec<f64> {
            let idx = ((t * nseg as f64).floor() as usize).min(nseg - 1);
            ctrl[idx].clone()
        };
        let integrated = rk4(&g, &piecewise, &g.identity(), 2000);
        for (a, b) in end.iter().zip(&integrated) {
            assert!((a - b).abs() < 1e-8, "endpoint {end:?} vs rk4 {integrated:?}");
        }
    }
}

#[test]
fn filiform_matrix_representation_is_isomorphic_route() {
    // Multiply 50 random pairs through the matrix representation and
    // compare with the direct law, exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in [1usize, 2, 4] {
        let g = GroupDescriptor::filiform(p).unwrap();
        let GroupDescriptor::Filiform(f) = &g else { unreachable!() };
        for _ in 0..50 {
            let a: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            let b: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            let direct = g.multiply(&a, &b).unwrap();
            let via_matrix = f
                .matrix_rep_inverse(&mat_mul(&f.matrix_rep(&a), &f.matrix_rep(&b)))
                .unwrap();
            assert_eq!(direct, via_matrix);
        }
    }
}

/// Univariate polynomial over ℚ, dense coefficients, for the bracket tower.
#[derive(Clone, Debug, PartialEq)]
struct Poly(Vec<Rat>);

impl Poly {
    fn zero() -> Self {
        Poly(Vec::new())
    }

    fn monomial(coeff: Rat, degree: usize) -> Self {
        let mut c = vec![rat_i(0); degree + 1];
        c[degree] = coeff;
        Poly(c)
    }

    fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * rat_i(i as i64 + 1))
                .collect(),
        )
    }

    fn normalized(mut self) -> Self {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }
}

#[test]
fn filiform_bracket_tower() {
    // The fields have coefficients depending on x only, and X = ∂_x, so
    // ad_X acts by differentiating each coefficient:
    // ad^j_X Y = ∂_{t_j} + Σ_{k=j+1}^p x^{k−j}/(k−j)! ∂_{t_k} for j = 1…p.
    // In particular ad^p_X Y = ∂_{t_p} — the top slot is t_p, there is no
    // coordinate t_{p+1}.
    for p in 1..=6usize {
        let n = p + 2;
        // Y = ∂_y + Σ_k x^k/k! ∂_{t_k}
        let mut fact = rat_i(1);
        let mut field: Vec<Poly> = (0..n).map(|_| Poly::zero()).collect();
        field[1] = Poly::monomial(rat_i(1), 0);
        for k in 1..=p {
            fact = fact * rat_i(k as i64);
            field[k + 1] = Poly::monomial(rat_i(1) / fact.clone(), k);
        }
        for j in 1..=p {
            // ad_X differentiates coefficients.
            field = field.into_iter().map(|c| c.derivative().normalized()).collect();
            let mut expected: Vec<Poly> = (0..n).map(|_| Poly::zero()).collect();
            expected[j + 1] = Poly::monomial(rat_i(1), 0);
            let mut f = rat_i(1);
            for k in j + 1..=p {
                f = f * rat_i((k - j) as i64);
                expected[k + 1] = Poly::monomial(rat_i(1) / f.clone(), k - j);
            }
            let normalized: Vec<Poly> = field.clone();
            assert_eq!(normalized, expected, "ad^{j} at p = {p}");
        }
        // After p brackets the tower has terminated at ∂_{t_p}; one more
        // bracket kills it (step p+1 nilpotency).
        field = field.into_iter().map(|c| c.derivative().normalized()).collect();
        assert!(field.iter().all(|c| c.0.is_empty()), "ad^{}_X Y must vanish", p + 1);
    }
}

#[test]
fn steptwo_alternating_property() {
    // Q(z, z) = 0 exactly on random z, for random descriptors.
    use carnot_kit_core::groups::StepTwoGroup;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..3u64 {
        let g = StepTwoGroup::random(4, 3, 300 + seed);
        for _ in 0..200 {
            let z: Vec<Rat> = (0..4).map(|_| rand_rat(&mut rng, 5, 3)).collect();
            let q = g.q_bilinear(&z, &z);
            assert!(q.iter().all(Zero::is_zero), "Q(z,z) != 0 at {z:?}");
        }
    }
}

#[test]
fn horizontal_field_is_the_translation_derivative() {
    // X_j(x) must equal d/ds|_0 of x . exp(s e_j): the hardcoded field
    // formulas against a jet differentiation of the law.
    use carnot_kit_core::scalar::Jet;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for g in families() {
        for _ in 0..20 {
            let x: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            for j in 0..g.m() {
                let field = g.horizontal_field(j, &x).unwrap();
                // exp(s e_j) with s an infinitesimal jet direction.
                let mut w: Vec<Jet<Rat>> = vec![Jet::constant(rat_i(0)); g.m()];
                w[j] = Jet::variable(rat_i(0), 0, 1);
                let x_jets: Vec<Jet<Rat>> = x.iter().cloned().map(Jet::constant).collect();
                let translated = g
                    .multiply(&x_jets, &g.exp_horizontal(&w).unwrap())
                    .unwrap();
                let derivative: Vec<Rat> =
                    translated.into_iter().map(|jet| jet.derivative(0)).collect();
                assert_eq!(derivative, field, "field {j} at {x:?}");
            }
        }
    }
}

#[test]
fn engel_field_y_closed_form() {
    // Y at x-coordinate 2: (0, 1, x, x^2/2) = (0, 1, 2, 2).
    let g = GroupDescriptor::filiform(2).unwrap();
    let x = vec![rat_i(2), rat_i(7), rat_i(-1), rat_i(3)];
    let y = g.horizontal_field(1, &x).unwrap();
    assert_eq!(y, vec![rat_i(0), rat_i(1), rat_i(2), rat_i(2)]);
}

#[test]
fn exact_mode_identities_spot_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for g in families() {
        let id: Vec<Rat> = g.identity();
        for _ in 0..30 {
            let a: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            assert_eq!(g.multiply(&a, &id).unwrap(), a);
            assert_eq!(g.multiply(&id, &a).unwrap(), a);
            let inv = g.inverse(&a).unwrap();
            assert!(g.multiply(&a, &inv).unwrap().iter().all(Zero::is_zero));
        }
        // Step-two alternating property Q(z, z) = 0 via exp/flow agreement
        // is already forced; check the square of a point lands on the
        // doubled dilation for horizontal points.
        let w: Vec<Rat> = (0..g.m()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
        let e = g.exp_horizontal(&w).unwrap();
        let squared = g.multiply(&e, &e).unwrap();
        assert_eq!(squared, g.dilate(&rat(2, 1), &e).unwrap());
    }
}
