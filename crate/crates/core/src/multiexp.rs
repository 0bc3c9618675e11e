//! Multiexponential maps Γ^(p)(u₁,…,u_p) = exp(u₁·X)⋯exp(u_p·X), their
//! differentials, submersion tests, the filiform Jacobian matrix with its
//! Vandermonde reduction, a local-openness probe, and the end-point map on
//! piecewise-constant controls.

use crate::error::{CarnotError, Result};
use crate::groups::GroupDescriptor;
use crate::linalg::{
    det_exact, mat_mul, numeric_rank, rank_exact, rat_mat_to_f64, singular_values, to_dmatrix,
};
use crate::scalar::{rat, rat_i, rat_to_f64, Jet, Rat, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Relative singular-value cutoff: σ below σ_max · RANK_REL_TOL · max(n, mp)
/// counts as zero in float mode.
pub const RANK_REL_TOL: f64 = 1e-9;

fn check_chain<S>(g: &GroupDescriptor, chain: &[Vec<S>]) -> Result<()> {
    if chain.is_empty() {
        return Err(CarnotError::InvalidArgument("empty chain".into()));
    }
    for u in chain {
        if u.len() != g.m() {
            return Err(CarnotError::DimensionMismatch {
                expected: g.m(),
                got: u.len(),
            });
        }
    }
    Ok(())
}

/// Γ^(p): left-to-right product of horizontal exponentials.
pub fn gamma<S: Scalar>(g: &GroupDescriptor, chain: &[Vec<S>]) -> Result<Vec<S>> {
    check_chain(g, chain)?;
    let mut point = g.exp_horizontal(&chain[0])?;
    for u in &chain[1..] {
        point = g.multiply(&point, &g.exp_horizontal(u)?)?;
    }
    Ok(point)
}

/// dΓ^(p) as an n × (m·p) matrix, computed by propagating first-order
/// perturbations (jets) through the polynomial group law. Exact over ℚ.
pub fn gamma_jacobian<S: Scalar>(g: &GroupDescriptor, chain: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    check_chain(g, chain)?;
    let m = g.m();
    let dim = m * chain.len();
    let jet_chain: Vec<Vec<Jet<S>>> = chain
        .iter()
        .enumerate()
        .map(|(j, u)| {
            u.iter()
                .enumerate()
                .map(|(k, c)| Jet::variable(c.clone(), j * m + k, dim))
                .collect()
        })
        .collect();
    let out = gamma(g, &jet_chain)?;
    Ok(out
        .into_iter()
        .map(|jet| (0..dim).map(|d| jet.derivative(d)).collect())
        .collect())
}

/// Rank report for dΓ^(p). `rank` is the authoritative value: exact when the
/// chain was rational, numeric (SVD with the stated tolerance) otherwise.
#[derive(Clone, Debug, Serialize)]
pub struct JacobianReport {
    pub rank: usize,
    pub n: usize,
    pub singular_values: Vec<f64>,
    pub submersion: bool,
    pub tolerance: f64,
    #[serde(skip)]
    pub exact_rank: Option<usize>,
    #[serde(skip)]
    pub matrix: Vec<Vec<f64>>,
    /// Base chain the differential was taken at (float view).
    #[serde(skip)]
    pub chain: Vec<Vec<f64>>,
}

fn report_from_f64(
    n: usize,
    matrix: Vec<Vec<f64>>,
    exact_rank: Option<usize>,
    chain: Vec<Vec<f64>>,
    rel_tol: f64,
) -> JacobianReport {
    let sv = singular_values(&matrix);
    let cols = matrix.first().map_or(0, Vec::len);
    let tolerance = rel_tol * n.max(cols) as f64;
    let numeric = numeric_rank(&sv, tolerance);
    let rank = exact_rank.unwrap_or(numeric);
    JacobianReport {
        rank,
        n,
        singular_values: sv,
        submersion: rank == n,
        tolerance: if exact_rank.is_some() { 0.0 } else { tolerance },
        exact_rank,
        matrix,
        chain,
    }
}

/// Exact-mode report: rank over ℚ (authoritative), singular values of the
/// float view attached for reference.
pub fn gamma_jacobian_report(g: &GroupDescriptor, chain: &[Vec<Rat>]) -> Result<JacobianReport> {
    let jac = gamma_jacobian(g, chain)?;
    let exact = rank_exact(&jac);
    Ok(report_from_f64(
        g.n(),
        rat_mat_to_f64(&jac),
        Some(exact),
        rat_chain_to_f64(chain),
        RANK_REL_TOL,
    ))
}

/// Float-mode report: numeric rank from singular values.
pub fn gamma_jacobian_report_f64(g: &GroupDescriptor, chain: &[Vec<f64>]) -> Result<JacobianReport> {
    gamma_jacobian_report_f64_tol(g, chain, RANK_REL_TOL)
}

/// Float-mode report with a caller-chosen relative singular-value cutoff.
pub fn gamma_jacobian_report_f64_tol(
    g: &GroupDescriptor,
    chain: &[Vec<f64>],
    rel_tol: f64,
) -> Result<JacobianReport> {
    let jac = gamma_jacobian(g, chain)?;
    Ok(report_from_f64(g.n(), jac, None, chain.to_vec(), rel_tol))
}

pub fn constant_chain<S: Clone>(xi: &[S], p: usize) -> Vec<Vec<S>> {
    vec![xi.to_vec(); p]
}

/// Submersion test at the constant chain (ξ, …, ξ), exact mode.
pub fn submersion_test(g: &GroupDescriptor, xi: &[Rat], p: usize) -> Result<JacobianReport> {
    if p == 0 {
        return Err(CarnotError::InvalidArgument("chain length p must be >= 1".into()));
    }
    gamma_jacobian_report(g, &constant_chain(xi, p))
}

/// Submersion test at the constant chain (ξ, …, ξ), float mode with the
/// default tolerance rule.
pub fn submersion_test_f64(g: &GroupDescriptor, xi: &[f64], p: usize) -> Result<JacobianReport> {
    submersion_test_f64_tol(g, xi, p, RANK_REL_TOL)
}

pub fn submersion_test_f64_tol(
    g: &GroupDescriptor,
    xi: &[f64],
    p: usize,
    rel_tol: f64,
) -> Result<JacobianReport> {
    if p == 0 {
        return Err(CarnotError::InvalidArgument("chain length p must be >= 1".into()));
    }
    gamma_jacobian_report_f64_tol(g, &constant_chain(xi, p), rel_tol)
}

/// The selected-columns Jacobian M(ζ) of the (p+1)-fold multiexponential of
/// the filiform group at the constant chain, built from the closed-form
/// column integrals ∫₀¹(k+s)^j/j! ds = ((k+1)^{j+1} − k^{j+1})/(j+1)!,
/// together with the reduced matrix M̂ whose determinant is Vandermonde.
#[derive(Clone, Debug)]
pub struct FiliformM {
    /// (p+2)×(p+2): columns ∂u₁, ∂v₁, …, ∂v_{p+1}.
    pub matrix: Vec<Vec<Rat>>,
    pub det: Rat,
    /// (p+1)×(p+1): entry (r, c) = (c+1)^{r+1} − c^{r+1}.
    pub reduced: Vec<Vec<Rat>>,
    pub reduced_det: Rat,
}

pub fn filiform_m(p: usize, zeta: &[Rat; 2]) -> Result<FiliformM> {
    if p == 0 {
        return Err(CarnotError::InvalidArgument("filiform parameter p must be >= 1".into()));
    }
    let (xi, eta) = (&zeta[0], &zeta[1]);
    let n = p + 2;
    // factorials up to (p+1)!
    let mut fact = vec![rat_i(1); p + 2];
    for k in 1..=p + 1 {
        fact[k] = &fact[k - 1] * rat_i(k as i64);
    }
    let ipow = |base: i64, e: u32| -> Rat { rat_i(base.pow(e)) };
    let mut xpow = vec![rat_i(1); p + 1];
    for k in 1..=p {
        xpow[k] = &xpow[k - 1] * xi;
    }

    let mut m = vec![vec![rat_i(0); n]; n];
    m[0][0] = rat_i(1);
    for col in 1..n {
        m[1][col] = rat_i(1);
    }
    for i in 1..=p {
        // ∂t_i/∂u₁ = η ξ^{i−1} [ i/(i+1)! + ((p+1)^i − 1)/i! ]
        let bracket =
            rat_i(i as i64) / &fact[i + 1] + (ipow(p as i64 + 1, i as u32) - rat_i(1)) / &fact[i];
        m[i + 1][0] = eta * &xpow[i - 1] * bracket;
        // ∂t_i/∂v_j = ξ^i (j^{i+1} − (j−1)^{i+1}) / (i+1)!
        for j in 1..=p + 1 {
            let diff = ipow(j as i64, i as u32 + 1) - ipow(j as i64 - 1, i as u32 + 1);
            m[i + 1][j] = &xpow[i] * diff / &fact[i + 1];
        }
    }
    let det = det_exact(&m);

    let reduced: Vec<Vec<Rat>> = (0..=p)
        .map(|r| {
            (0..=p)
                .map(|c| ipow(c as i64 + 1, r as u32 + 1) - ipow(c as i64, r as u32 + 1))
                .collect()
        })
        .collect();
    let reduced_det = det_exact(&reduced);
    Ok(FiliformM { matrix: m, det, reduced, reduced_det })
}

/// End-point map of the piecewise-constant control grid: N segments of
/// length 1/N, so the endpoint is Γ^(N)(u₁/N, …, u_N/N).
pub fn endpoint_map<S: Scalar>(g: &GroupDescriptor, controls: &[Vec<S>]) -> Result<Vec<S>> {
    check_chain(g, controls)?;
    let invn = rat(1, controls.len() as i64);
    let scaled: Vec<Vec<S>> = controls
        .iter()
        .map(|u| u.iter().map(|c| c.scale(&invn)).collect())
        .collect();
    gamma(g, &scaled)
}

/// n × (m·N) differential of the end-point map, by reverse accumulation of
/// the per-segment step Jacobians.
pub fn endpoint_jacobian<S: Scalar>(g: &GroupDescriptor, controls: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    check_chain(g, controls)?;
    let n = g.n();
    let m = g.m();
    let nseg = controls.len();
    let invn = rat(1, nseg as i64);

    // Forward sweep: states and per-step Jacobians A_k (w.r.t. state) and
    // B_k (w.r.t. the segment control).
    let mut state: Vec<S> = g.identity();
    let mut step_a: Vec<Vec<Vec<S>>> = Vec::with_capacity(nseg);
    let mut step_b: Vec<Vec<Vec<S>>> = Vec::with_capacity(nseg);
    for u in controls {
        let dim = n + m;
        let x_jets: Vec<Jet<S>> = state
            .iter()
            .enumerate()
            .map(|(i, c)| Jet::variable(c.clone(), i, dim))
            .collect();
        let w_jets: Vec<Jet<S>> = u
            .iter()
            .enumerate()
            .map(|(k, c)| Jet::variable(c.scale(&invn), n + k, dim))
            .collect();
        let next = g.multiply(&x_jets, &g.exp_horizontal(&w_jets)?)?;
        let mut a = vec![vec![S::zero(); n]; n];
        let mut b = vec![vec![S::zero(); m]; n];
        for (i, jet) in next.iter().enumerate() {
            for j in 0..n {
                a[i][j] = jet.derivative(j);
            }
            for k in 0..m {
                // The seeded direction was u_k/N, so scale by 1/N.
                b[i][k] = jet.derivative(n + k).scale(&invn);
            }
        }
        state = next.into_iter().map(|jet| jet.val).collect();
        step_a.push(a);
        step_b.push(b);
    }

    // Backward sweep: J_k = A_N ⋯ A_{k+1} B_k.
    let mut jac = vec![vec![S::zero(); m * nseg]; n];
    let mut tail = crate::linalg::identity_mat::<S>(n);
    for k in (0..nseg).rev() {
        let block = mat_mul(&tail, &step_b[k]);
        for i in 0..n {
            for c in 0..m {
                jac[i][k * m + c] = block[i][c].clone();
            }
        }
        if k > 0 {
            tail = mat_mul(&tail, &step_a[k]);
        }
    }
    Ok(jac)
}

/// Outcome of one damped Gauss–Newton solve of Γ^(p)(u) = y.
#[derive(Clone, Debug)]
pub struct ChainSolve {
    pub chain: Vec<Vec<f64>>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

const GN_MAX_HALVINGS: usize = 30;

/// Damped least-squares iteration with a pseudo-inverse step; when `ball`
/// is given, iterates are projected back onto the Euclidean ε-ball around
/// the given center chain.
pub fn solve_chain_to_target(
    g: &GroupDescriptor,
    init: &[Vec<f64>],
    target: &[f64],
    ball: Option<(&[Vec<f64>], f64)>,
    max_iters: usize,
    tol: f64,
) -> Result<ChainSolve> {
    check_chain(g, init)?;
    let m = g.m();
    let flatten = |c: &[Vec<f64>]| -> Vec<f64> { c.iter().flatten().copied().collect() };
    let unflatten = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(m).map(<[f64]>::to_vec).collect() };
    let project = |v: &mut Vec<f64>| {
        if let Some((center, eps)) = ball {
            let c = flatten(center);
            let dist2: f64 = v.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let dist = dist2.sqrt();
            if dist > eps {
                for (vi, ci) in v.iter_mut().zip(&c) {
                    *vi = ci + (*vi - *ci) * eps / dist;
                }
            }
        }
    };
    let residual_of = |v: &[f64]| -> Result<Vec<f64>> {
        let val = gamma(g, &unflatten(v))?;
        Ok(val.iter().zip(target).map(|(a, b)| a - b).collect())
    };
    let norm = |r: &[f64]| -> f64 { r.iter().map(|x| x * x).sum::<f64>().sqrt() };

    let mut u = flatten(init);
    project(&mut u);
    let mut r = residual_of(&u)?;
    let mut rnorm = norm(&r);
    let mut iterations = 0;
    for _ in 0..max_iters {
        if rnorm < tol {
            break;
        }
        iterations += 1;
        let jac = gamma_jacobian(g, &unflatten(&u))?;
        let jmat = to_dmatrix(&jac);
        let svd = jmat.svd(true, true);
        let rhs = nalgebra::DVector::from_column_slice(&r);
        let Ok(step) = svd.solve(&rhs, 1e-13) else {
            break;
        };
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..GN_MAX_HALVINGS {
            let mut cand: Vec<f64> =
                u.iter().zip(step.iter()).map(|(ui, si)| ui - scale * si).collect();
            project(&mut cand);
            let cand_r = residual_of(&cand)?;
            let cand_norm = norm(&cand_r);
            if cand_norm < rnorm {
                u = cand;
                r = cand_r;
                rnorm = cand_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(ChainSolve {
        chain: unflatten(&u),
        residual: rnorm,
        converged: rnorm < tol,
        iterations,
    })
}

pub const OPENNESS_MULTISTARTS: usize = 20;
pub const OPENNESS_MAX_ITERS: usize = 200;
pub const OPENNESS_LEVELS: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct OpennessWitness {
    pub sigma: f64,
    pub target: Vec<f64>,
    pub best_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OpennessReport {
    pub radii: Vec<f64>,
    pub coverage: Vec<f64>,
    /// Largest sampled radius at which every target was reached from inside
    /// the ε-ball. Evidence, not a proof of openness.
    pub max_covered_sigma: Option<f64>,
    pub witnesses: Vec<OpennessWitness>,
}

/// Probe the local-openness condition: sample targets on Euclidean spheres
/// of shrinking radius σ around Γ^(p)(ξ,…,ξ) and try to hit each one from
/// chains inside the ε-ball around the constant chain.
pub fn openness_probe(
    g: &GroupDescriptor,
    xi: &[f64],
    p: usize,
    eps: f64,
    n_targets: usize,
    seed: u64,
) -> Result<OpennessReport> {
    if eps <= 0.0 {
        return Err(CarnotError::InvalidArgument("eps must be positive".into()));
    }
    if n_targets == 0 {
        return Err(CarnotError::InvalidArgument("n_targets must be positive".into()));
    }
    if p == 0 {
        return Err(CarnotError::InvalidArgument("chain length p must be >= 1".into()));
    }
    let center = constant_chain(xi, p);
    let base_point = gamma(g, &center)?;
    let n = g.n();
    let radii: Vec<f64> = (0..OPENNESS_LEVELS).map(|k| eps * 0.5f64.powi(k as i32)).collect();

    let tasks: Vec<(usize, usize)> = (0..radii.len())
        .flat_map(|lvl| (0..n_targets).map(move |t| (lvl, t)))
        .collect();
    let outcomes: Vec<(usize, bool, Vec<f64>, f64)> = tasks
        .par_iter()
        .map(|&(lvl, t)| {
            let sigma = radii[lvl];
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (lvl as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ ((t as u64) << 32),
            );
            // Random unit direction in ℝⁿ.
            let mut dir: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|x| *x /= dn);
            let target: Vec<f64> =
                base_point.iter().zip(&dir).map(|(b, d)| b + sigma * d).collect();
            let tol = 1e-10 * (1.0 + target.iter().map(|x| x * x).sum::<f64>().sqrt());

            let mut best = f64::INFINITY;
            let mut hit = false;
            for start in 0..OPENNESS_MULTISTARTS {
                let init = if start == 0 {
                    center.clone()
                } else {
                    perturb_in_ball(&center, eps, &mut rng)
                };
                let solve = solve_chain_to_target(
                    g,
                    &init,
                    &target,
                    Some((&center, eps)),
                    OPENNESS_MAX_ITERS,
                    tol,
                )
                .expect("dimensions already checked");
                best = best.min(solve.residual);
                if solve.converged {
                    hit = true;
                    break;
                }
            }
            (lvl, hit, target, best)
        })
        .collect();

    let mut hits = vec![0usize; radii.len()];
    let mut witnesses = Vec::new();
    for (lvl, hit, target, best) in outcomes {
        if hit {
            hits[lvl] += 1;
        } else {
            witnesses.push(OpennessWitness { sigma: radii[lvl], target, best_residual: best });
        }
    }
    let coverage: Vec<f64> = hits.iter().map(|&h| h as f64 / n_targets as f64).collect();
    let max_covered_sigma = radii
        .iter()
        .zip(&coverage)
        .filter(|(_, &c)| c == 1.0)
        .map(|(&r, _)| r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a: f64| a.max(r))));
    Ok(OpennessReport { radii, coverage, max_covered_sigma, witnesses })
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn perturb_in_ball(center: &[Vec<f64>], eps: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let dim: usize = center.iter().map(Vec::len).sum();
    let mut dir: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let radius = eps * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.iter_mut().for_each(|x| *x *= radius / n);
    let mut out = center.to_vec();
    let mut idx = 0;
    for u in &mut out {
        for c in u.iter_mut() {
            *c += dir[idx];
            idx += 1;
        }
    }
    out
}

pub fn rat_point_to_f64(p: &[Rat]) -> Vec<f64> {
    p.iter().map(rat_to_f64).collect()
}

pub fn rat_chain_to_f64(c: &[Vec<Rat>]) -> Vec<Vec<f64>> {
    c.iter().map(|u| rat_point_to_f64(u)).collect()
}
