//! Numerical sub-Riemannian distance machinery: an optimization-based
//! distance oracle over piecewise-constant controls, homogeneous norms, and
//! ball-membership certification.
//!
//! The oracle minimizes control energy subject to the end-point constraint
//! with an augmented-Lagrangian outer loop and damped Gauss–Newton inner
//! solves, then reports the length of the minimizing control. Instances are
//! first reduced to the origin by left translation and to unit homogeneous
//! norm by dilation, so all solver thresholds live at unit scale. Every
//! value is an upper bound on the distance (a feasible path of that length
//! exists up to the endpoint residual); nothing here certifies lower bounds.

use crate::error::{CarnotError, Result};
use crate::groups::GroupDescriptor;
use crate::multiexp::{endpoint_jacobian, endpoint_map, solve_chain_to_target};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_SEGMENTS: usize = 64;
pub const DEFAULT_RESTARTS: usize = 16;
const AL_MU0: f64 = 10.0;
const AL_MU_GROWTH: f64 = 10.0;
const AL_OUTER_ITERS: usize = 8;
const INNER_GRAD_TOL: f64 = 1e-12;
const INNER_MAX_ITERS: usize = 200;
const LINESEARCH_HALVINGS: usize = 30;
/// Endpoint residual below which a control grid counts as feasible, at unit
/// homogeneous norm.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceStatus {
    /// Feasible path found; `value` is its length (an upper bound on d).
    UpperBound,
    /// No feasible path within the iteration budget; for bracket-generating
    /// descriptors this signals a solver bug, not geometry.
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub status: DistanceStatus,
    /// Endpoint residual against the requested target, Euclidean.
    pub residual: f64,
    pub segments: usize,
    /// Realizing piecewise-constant control grid (one m-vector per segment).
    pub controls: Vec<Vec<f64>>,
}

fn frexp(x: f64) -> (f64, i32) {
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    if exp_bits == 0 {
        // subnormal: renormalize first
        let (m, e) = frexp(x * 2f64.powi(54));
        return (m, e - 54);
    }
    let e = exp_bits - 1023;
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (m, e)
}

/// k-th root with exact behavior under scaling by 2^k: the exponent is
/// split off with frexp so multiplying the argument by 2^k multiplies the
/// result by exactly 2.
fn root_k(a: f64, k: usize) -> f64 {
    debug_assert!(a >= 0.0);
    if a == 0.0 || k == 1 {
        return a;
    }
    let (m, e) = frexp(a);
    let q = e.div_euclid(k as i32);
    let r = e.rem_euclid(k as i32);
    let core = m * 2f64.powi(r);
    let root = if k == 2 { core.sqrt() } else { core.powf(1.0 / k as f64) };
    root * 2f64.powi(q)
}

/// Homogeneous norm N(x) = max_k |x^(k)|^{1/k}; satisfies N(δ_λ x) = λ N(x),
/// exactly for λ a power of two.
pub fn homogeneous_norm(g: &GroupDescriptor, x: &[f64]) -> Result<f64> {
    if x.len() != g.n() {
        return Err(CarnotError::DimensionMismatch { expected: g.n(), got: x.len() });
    }
    let mut best: f64 = 0.0;
    let mut offset = 0;
    for (layer, dim) in g.layer_dims().into_iter().enumerate() {
        let block = &x[offset..offset + dim];
        let norm = block.iter().map(|c| c * c).sum::<f64>().sqrt();
        best = best.max(root_k(norm, layer + 1));
        offset += dim;
    }
    Ok(best)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct StartOutcome {
    controls: Vec<Vec<f64>>,
    length: f64,
    feasibility: f64,
}

/// Length of a piecewise-constant control grid: (1/N) Σ_j |u_j|.
pub fn control_length(controls: &[Vec<f64>]) -> f64 {
    let n = controls.len().max(1);
    controls.iter().map(|u| norm2(u)).sum::<f64>() / n as f64
}

/// One augmented-Lagrangian run from the given start.
fn al_run(g: &GroupDescriptor, target: &[f64], start: Vec<Vec<f64>>) -> StartOutcome {
    let nseg = start.len();
    let m = g.m();
    let nvars = nseg * m;
    let n = g.n();
    let unflatten = |v: &DVector<f64>| -> Vec<Vec<f64>> {
        v.as_slice().chunks(m).map(<[f64]>::to_vec).collect()
    };
    let constraint = |v: &DVector<f64>| -> Vec<f64> {
        let end = endpoint_map(g, &unflatten(v)).expect("checked dims");
        end.iter().zip(target).map(|(a, b)| a - b).collect()
    };

    let mut u = DVector::from_vec(start.into_iter().flatten().collect::<Vec<f64>>());
    let mut lambda = vec![0.0f64; n];
    let mut mu = AL_MU0;
    // Precondition the objective by the start's energy: the constrained
    // minimizer is invariant under positive scaling of the energy term, but
    // without it a long feasible start trades all its feasibility against
    // the weak initial penalty and collapses onto the zero-control saddle,
    // where the higher-layer constraint gradients vanish.
    let e0 = u.norm_squared() / nseg as f64;
    let gamma = 1.0 / e0.max(1.0);
    let energy_scale = 2.0 * gamma / nseg as f64;

    for outer in 0..AL_OUTER_ITERS {
        let mut damping = 1e-8;
        let mut c = constraint(&u);
        let mut iters_used = 0usize;
        let mut grad_norm = f64::INFINITY;
        // Inexact inner solves: loose gradient tolerance while the penalty
        // is weak, the stated 1e-12 once mu has grown.
        let inner_tol = INNER_GRAD_TOL.max(1e-3 * 1e-2f64.powi(outer as i32));
        let inner_budget = INNER_MAX_ITERS.min(30 * (outer + 1));
        for _inner in 0..inner_budget {
            iters_used += 1;
            let jac = endpoint_jacobian(g, &unflatten(&u)).expect("checked dims");
            let jmat = DMatrix::from_fn(n, nvars, |i, j| jac[i][j]);
            // ∇Φ = (2/N) u + Jᵀ(λ + μ c)
            let lam_mu: DVector<f64> =
                DVector::from_iterator(n, lambda.iter().zip(&c).map(|(l, ci)| l + mu * ci));
            let grad = &u * energy_scale + jmat.transpose() * &lam_mu;
            grad_norm = grad.norm();
            if grad_norm < inner_tol {
                break;
            }
            // Solve (αI + μ JᵀJ) s = ∇Φ by the Woodbury identity:
            // s = (b − μ Jᵀ K⁻¹ J b)/α with K = α I_n + μ J Jᵀ.
            let alpha = energy_scale + damping;
            let jjt = &jmat * jmat.transpose();
            let k = DMatrix::identity(n, n) * alpha + &jjt * mu;
            let Some(chol) = k.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let jb = &jmat * &grad;
            let core = chol.solve(&jb);
            let step = (&grad - jmat.transpose() * core * mu) / alpha;

            let phi = |v: &DVector<f64>, cv: &[f64]| -> f64 {
                let e = gamma * v.norm_squared() / nseg as f64;
                let lam_c: f64 = lambda.iter().zip(cv).map(|(l, ci)| l * ci).sum();
                let pen: f64 = cv.iter().map(|ci| ci * ci).sum::<f64>();
                e + lam_c + 0.5 * mu * pen
            };
            let phi0 = phi(&u, &c);
            let mut scale = 1.0;
            let mut accepted = false;
            let mut achieved = phi0;
            for _ in 0..LINESEARCH_HALVINGS {
                let cand = &u - &step * scale;
                let cand_c = constraint(&cand);
                let cand_phi = phi(&cand, &cand_c);
                if cand_phi < phi0 {
                    u = cand;
                    c = cand_c;
                    achieved = cand_phi;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if accepted {
                damping = (damping * 0.3).max(1e-12);
                // Progress stall: further iterations cannot move the value.
                if phi0 - achieved < 1e-15 * (1.0 + phi0.abs()) {
                    break;
                }
            } else {
                damping *= 100.0;
                if damping > 1e8 {
                    break;
                }
            }
        }
        if std::env::var("CARNOT_AL_TRACE").is_ok() {
            eprintln!("outer mu={mu:.1e} inner_iters={iters_used} |c|={:.2e}", norm2(&c));
        }
        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l += mu * ci;
        }
        mu *= AL_MU_GROWTH;
        // KKT reached: feasible to roundoff with a converged inner solve.
        if norm2(&c) < 1e-12 && grad_norm < INNER_GRAD_TOL {
            break;
        }
    }

    let c = constraint(&u);
    let controls = unflatten(&u);
    StartOutcome { length: control_length(&controls), feasibility: norm2(&c), controls }
}

/// Multistart controls at unit target scale. Start 0 is the pure constant
/// control driven by the first layer of the target; even starts are seeded
/// from a feasible chain (a Gauss-Newton solve of Γ^(p)(u) = target turned
/// into a block-constant grid), the rest add Gaussian noise to the constant
/// control. The feasible starts matter for targets deep in the higher
/// layers, where the endpoint gradient of pure noise controls is too small
/// to escape the zero-control saddle.
fn make_start(
    g: &GroupDescriptor,
    target: &[f64],
    nseg: usize,
    start_idx: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let m = g.m();
    let base: Vec<f64> = target[..m].to_vec();
    if start_idx == 0 {
        return vec![base; nseg];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((start_idx as u64) << 17));
    if start_idx % 2 == 0 {
        if let Some(start) = chain_feasible_start(g, target, nseg, &mut rng) {
            return start;
        }
    }
    (0..nseg)
        .map(|_| base.iter().map(|b| b + standard_normal(&mut rng)).collect())
        .collect()
}

/// Solve Γ^(p)(u₁,…,u_p) = target (p = n) by damped least squares from a
/// random chain and spread the solution over the control grid: block j of
/// k_j segments carries the constant control u_j·(N/k_j), so the endpoint
/// of the grid is exactly Γ^(p)(u).
fn chain_feasible_start(
    g: &GroupDescriptor,
    target: &[f64],
    nseg: usize,
    rng: &mut impl Rng,
) -> Option<Vec<Vec<f64>>> {
    let p = g.n().min(nseg);
    let m = g.m();
    let init: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..m).map(|_| standard_normal(rng)).collect())
        .collect();
    let tol = 1e-10 * (1.0 + norm2(target));
    let solve = solve_chain_to_target(g, &init, target, None, 150, tol).ok()?;
    if !solve.converged {
        return None;
    }
    let blocks = split_even(nseg, p);
    let mut controls = Vec::with_capacity(nseg);
    for (j, &k) in blocks.iter().enumerate() {
        let scale = nseg as f64 / k as f64;
        for _ in 0..k {
            controls.push(solve.chain[j].iter().map(|c| c * scale).collect());
        }
    }
    Some(controls)
}

/// Split n segments into p contiguous nonempty blocks, as evenly as possible.
fn split_even(n: usize, p: usize) -> Vec<usize> {
    let q = n / p;
    let r = n % p;
    (0..p).map(|j| q + usize::from(j < r)).collect()
}

/// Distance estimate from the origin to x, at unit scale internally.
pub fn distance_from_origin(
    g: &GroupDescriptor,
    x: &[f64],
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    if segments < 4 {
        return Err(CarnotError::InvalidArgument("need at least 4 segments".into()));
    }
    if restarts == 0 {
        return Err(CarnotError::InvalidArgument("need at least one start".into()));
    }
    let nu = homogeneous_norm(g, x)?;
    if nu == 0.0 {
        return Ok(DistanceEstimate {
            value: 0.0,
            status: DistanceStatus::UpperBound,
            residual: 0.0,
            segments,
            controls: vec![vec![0.0; g.m()]; segments],
        });
    }
    let unit = g.dilate(&(1.0 / nu), x)?;

    let outcomes: Vec<StartOutcome> = (0..restarts)
        .into_par_iter()
        .map(|s| al_run(g, &unit, make_start(g, &unit, segments, s, seed)))
        .collect();
    let best = outcomes
        .into_iter()
        .map(|o| {
            let feasible = o.feasibility < FEASIBILITY_TOL;
            (o, feasible)
        })
        .min_by(|(a, fa), (b, fb)| {
            // Feasible outcomes first, then by length, then by feasibility.
            (!fa, if *fa { a.length } else { a.feasibility })
                .partial_cmp(&(!fb, if *fb { b.length } else { b.feasibility }))
                .unwrap()
        })
        .expect("restarts >= 1");
    let (outcome, feasible) = best;

    // Scale back: controls scale linearly under dilation of the target.
    let controls: Vec<Vec<f64>> = outcome
        .controls
        .iter()
        .map(|u| u.iter().map(|c| c * nu).collect())
        .collect();
    let end = endpoint_map(g, &controls)?;
    let residual = norm2(&end.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(DistanceEstimate {
        value: outcome.length * nu,
        status: if feasible { DistanceStatus::UpperBound } else { DistanceStatus::Failed },
        residual,
        segments,
        controls,
    })
}

/// Distance estimate between two points; left invariance reduces to the
/// origin: d(a, b) = d(0, a⁻¹·b).
pub fn distance_estimate(
    g: &GroupDescriptor,
    a: &[f64],
    b: &[f64],
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let x = g.multiply(&g.inverse(a)?, b)?;
    distance_from_origin(g, &x, segments, restarts, seed)
}

/// Empirical two-sided comparison constants between the homogeneous norm and
/// the distance estimate on the unit N-sphere. Reported, not asserted.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub c_low: f64,
    pub c_high: f64,
    pub samples: usize,
}

pub fn norm_distance_equivalence(
    g: &GroupDescriptor,
    samples: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if samples < 10 {
        return Err(CarnotError::InvalidArgument("need at least 10 samples".into()));
    }
    let n = g.n();
    let ratios: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64) << 13));
            let mut x: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let nu = homogeneous_norm(g, &x).expect("dims");
            if nu == 0.0 {
                return 1.0;
            }
            x = g.dilate(&(1.0 / nu), &x).expect("dims");
            let est = distance_from_origin(g, &x, 32, 8, seed ^ 0xd15ea5e ^ i as u64)
                .expect("dims");
            let norm = homogeneous_norm(g, &x).expect("dims");
            est.value / norm
        })
        .collect();
    let c_low = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c_high = ratios.iter().copied().fold(0.0f64, f64::max);
    Ok(EquivalenceReport { c_low, c_high, samples })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReachVerdict {
    /// Upper-bound estimate below the radius certifies membership.
    InsideCertified,
    /// Could not certify; says nothing about being outside.
    Unresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReachReport {
    pub verdict: ReachVerdict,
    pub radius: f64,
    pub estimate: f64,
    pub residual: f64,
}

/// Certify membership of `target` in the sub-Riemannian ball B(center, r):
/// sound in one direction only (never certifies "outside").
pub fn ball_reach(
    g: &GroupDescriptor,
    center: &[f64],
    r: f64,
    target: &[f64],
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<ReachReport> {
    if r <= 0.0 {
        return Err(CarnotError::InvalidArgument("radius must be positive".into()));
    }
    let est = distance_estimate(g, center, target, segments, restarts, seed)?;
    let certified = est.status == DistanceStatus::UpperBound && est.value < r;
    Ok(ReachReport {
        verdict: if certified { ReachVerdict::InsideCertified } else { ReachVerdict::Unresolved },
        radius: r,
        estimate: est.value,
        residual: est.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_norm_examples() {
        let g = GroupDescriptor::filiform(2).unwrap();
        assert_eq!(homogeneous_norm(&g, &[0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        // weight-3 coordinate: |1|^{1/3} = 1
        assert_eq!(homogeneous_norm(&g, &[0.0, 0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(homogeneous_norm(&g, &[3.0, 4.0, 0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn homogeneous_norm_dilation_exact_for_doubling() {
        let g = GroupDescriptor::free32();
        let pts = [
            vec![0.3, -1.7, 0.9, 0.01, -2.5],
            vec![1e-6, 2e3, -0.4, 7.7, 0.0],
        ];
        for x in &pts {
            let doubled = g.dilate(&2.0, x).unwrap();
            let lhs = homogeneous_norm(&g, &doubled).unwrap();
            let rhs = 2.0 * homogeneous_norm(&g, x).unwrap();
            assert_eq!(lhs.to_bits(), rhs.to_bits(), "exact doubling for {x:?}");
        }
    }

    #[test]
    fn distance_to_self_is_zero() {
        let g = GroupDescriptor::heisenberg();
        let a = [0.3, -0.2, 0.9];
        let est = distance_estimate(&g, &a, &a, 8, 2, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.residual, 0.0);
    }

    #[test]
    fn horizontal_targets_cost_their_norm() {
        let g = GroupDescriptor::heisenberg();
        let w = [0.8, -0.6];
        let target = g.exp_horizontal(&w.to_vec()).unwrap();
        let est = distance_from_origin(&g, &target, 16, 4, 3).unwrap();
        assert_eq!(est.status, DistanceStatus::UpperBound);
        assert!((est.value - 1.0).abs() < 1e-6, "value {}", est.value);
        assert!(est.residual < FEASIBILITY_TOL);
    }

    #[test]
    fn ball_reach_certifies_horizontal_points() {
        let g = GroupDescriptor::heisenberg();
        let center = [0.5, 0.5, 0.2];
        let w = vec![0.3, 0.0];
        let target = g.multiply(&center.to_vec(), &g.exp_horizontal(&w).unwrap()).unwrap();
        let report = ball_reach(&g, &center, 0.35, &target, 16, 4, 5).unwrap();
        assert!(matches!(report.verdict, ReachVerdict::InsideCertified));
        let report = ball_reach(&g, &center, 0.25, &target, 16, 4, 5).unwrap();
        assert!(matches!(report.verdict, ReachVerdict::Unresolved));
    }
}
