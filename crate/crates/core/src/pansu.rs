//! Numerical verification of the first-order expansion of the distance at
//! horizontal points: solve the perturbed multiexponential system on an
//! n-dimensional slice, form the residual
//! r(x) = d_upper(exp(w·X)·x) − |w| − ⟨w/|w|, x¹⟩, and fit its decay order
//! along dilations δ_λ.

use crate::distance::{distance_from_origin, DistanceStatus};
use crate::error::{CarnotError, Result};
use crate::groups::{GroupDescriptor, StepTwoGroup};
use crate::linalg::{condition_number, numeric_rank, pivoted_columns, singular_values};
use crate::multiexp::{constant_chain, gamma, gamma_jacobian};
use crate::scalar::f64_to_rat;
use crate::steptwo_solver;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Default λ-grid for decay-order fits.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 30;
/// Smallest dilation tried when hunting for the Newton convergence basin.
const BASIN_MIN_LAMBDA: f64 = 1e-9;

/// Coordinate slice V ⊂ (ℝ^m)^p on which the restricted differential is
/// invertible.
#[derive(Clone, Debug, Serialize)]
pub struct Slice {
    pub p: usize,
    /// Selected columns of dΓ^(p), indices into the m·p chain coordinates.
    pub columns: Vec<usize>,
    /// Condition number of the restricted n×n differential.
    pub condition: f64,
}

/// Pick n coordinate directions by column-pivoted orthogonalization of
/// dΓ^(p)(ξ,…,ξ). Errors when the differential is not onto.
pub fn select_slice(g: &GroupDescriptor, xi: &[f64], p: usize) -> Result<Slice> {
    let jac = gamma_jacobian(g, &constant_chain(xi, p))?;
    let n = g.n();
    let sv = singular_values(&jac);
    let cols = jac.first().map_or(0, Vec::len);
    let rank = numeric_rank(&sv, crate::multiexp::RANK_REL_TOL * n.max(cols) as f64);
    if rank < n {
        return Err(CarnotError::NotSubmersion { rank, n });
    }
    let mut columns = pivoted_columns(&jac, n);
    columns.sort_unstable();
    let restricted: Vec<Vec<f64>> =
        jac.iter().map(|row| columns.iter().map(|&c| row[c]).collect()).collect();
    Ok(Slice { p, columns, condition: condition_number(&restricted) })
}

/// Smallest chain length p (up to n+3) making Γ^(p) a submersion at the
/// direction of w. Scale invariance makes the answer independent of |w|.
pub fn auto_chain_length(g: &GroupDescriptor, w: &[f64]) -> Result<usize> {
    for p in 1..=g.n() + 3 {
        let xi: Vec<f64> = w.iter().map(|c| c / p as f64).collect();
        if select_slice(g, &xi, p).is_ok() {
            return Ok(p);
        }
    }
    Err(CarnotError::NotSubmersion { rank: 0, n: g.n() })
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationSolution {
    pub xi: Vec<f64>,
    pub p: usize,
    pub slice: Slice,
    /// Corrections ᾱ₁, …, ᾱ_p supported on the slice columns.
    pub alphas: Vec<Vec<f64>>,
    pub target_x: Vec<f64>,
    /// Reconstruction residual |Γ(ξ+ᾱ) − exp(w·X)·x|.
    pub residual: f64,
    /// Σ_j |ξ+ᾱ_j|.
    pub chain_bound: f64,
    /// Euclidean norm of (ᾱ₁, …, ᾱ_p).
    pub alpha_norm: f64,
}

fn embed_slice(y: &DVector<f64>, columns: &[usize], p: usize, m: usize) -> Vec<Vec<f64>> {
    let mut alphas = vec![vec![0.0; m]; p];
    for (slot, &col) in columns.iter().enumerate() {
        alphas[col / m][col % m] = y[slot];
    }
    alphas
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton for Γ^(p)(ξ+α(y)) = rhs on the slice; returns the slice
/// coordinates on success.
fn newton_on_slice(
    g: &GroupDescriptor,
    xi: &[f64],
    slice: &Slice,
    rhs: &[f64],
    y0: DVector<f64>,
) -> Option<DVector<f64>> {
    let m = g.m();
    let n = g.n();
    let chain_of = |y: &DVector<f64>| -> Vec<Vec<f64>> {
        embed_slice(y, &slice.columns, slice.p, m)
            .into_iter()
            .map(|alpha| alpha.iter().zip(xi).map(|(a, x)| a + x).collect())
            .collect()
    };
    let residual_of = |y: &DVector<f64>| -> Vec<f64> {
        let val = gamma(g, &chain_of(y)).expect("checked dims");
        val.iter().zip(rhs).map(|(a, b)| a - b).collect()
    };

    let mut y = y0;
    let mut r = residual_of(&y);
    let mut rnorm = norm2(&r);
    for _ in 0..NEWTON_MAX_ITERS {
        if rnorm < NEWTON_TOL {
            return Some(y);
        }
        let jac = gamma_jacobian(g, &chain_of(&y)).expect("checked dims");
        let restricted = DMatrix::from_fn(n, n, |i, j| jac[i][slice.columns[j]]);
        let rhs_vec = DVector::from_column_slice(&r);
        let step = restricted.lu().solve(&rhs_vec)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let cand = &y - &step * scale;
            let cand_r = residual_of(&cand);
            let cand_norm = norm2(&cand_r);
            if cand_norm < rnorm {
                y = cand;
                r = cand_r;
                rnorm = cand_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    (rnorm < NEWTON_TOL).then_some(y)
}

/// Solve exp((ξ+α₁)·X)⋯exp((ξ+α_p)·X) = exp(w·X)·x for α in the slice,
/// with w = pξ. When the plain Newton iteration diverges, the convergence
/// basin is found by halving x through δ_λ and walking λ back up with warm
/// starts.
pub fn solve_perturbation(
    g: &GroupDescriptor,
    xi: &[f64],
    p: usize,
    x: &[f64],
) -> Result<PerturbationSolution> {
    if x.len() != g.n() {
        return Err(CarnotError::DimensionMismatch { expected: g.n(), got: x.len() });
    }
    let slice = select_slice(g, xi, p)?;
    let n = g.n();
    let m = g.m();
    let w: Vec<f64> = xi.iter().map(|c| c * p as f64).collect();
    let exp_w = g.exp_horizontal(&w)?;
    let rhs_for = |lam: f64| -> Result<Vec<f64>> {
        let scaled = g.dilate(&lam, x)?;
        g.multiply(&exp_w, &scaled)
    };

    // Direct attempt, then continuation in λ from inside the basin.
    let mut solution = newton_on_slice(g, xi, &slice, &rhs_for(1.0)?, DVector::zeros(n));
    if solution.is_none() {
        let mut lam = 0.5;
        let mut basin: Option<(f64, DVector<f64>)> = None;
        while lam > BASIN_MIN_LAMBDA {
            if let Some(y) = newton_on_slice(g, xi, &slice, &rhs_for(lam)?, DVector::zeros(n)) {
                basin = Some((lam, y));
                break;
            }
            lam *= 0.5;
        }
        let (mut lam, mut warm) = basin.ok_or_else(|| {
            CarnotError::SolverFailure(format!(
                "Newton diverged for every dilation down to {BASIN_MIN_LAMBDA:e}"
            ))
        })?;
        while lam < 1.0 {
            lam = (lam * 2.0).min(1.0);
            warm = newton_on_slice(g, xi, &slice, &rhs_for(lam)?, warm).ok_or_else(|| {
                CarnotError::SolverFailure(format!(
                    "Newton continuation stalled at dilation {lam:e}"
                ))
            })?;
        }
        solution = Some(warm);
    }
    let y = solution.expect("set above");

    let alphas = embed_slice(&y, &slice.columns, p, m);
    let chain: Vec<Vec<f64>> = alphas
        .iter()
        .map(|alpha| alpha.iter().zip(xi).map(|(a, c)| a + c).collect())
        .collect();
    let got = gamma(g, &chain)?;
    let rhs = rhs_for(1.0)?;
    let residual = norm2(&got.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
    let chain_bound = chain.iter().map(|row| norm2(row)).sum();
    let alpha_norm = norm2(&alphas.iter().flatten().copied().collect::<Vec<_>>());
    Ok(PerturbationSolution {
        xi: xi.to_vec(),
        p,
        slice,
        alphas,
        target_x: x.to_vec(),
        residual,
        chain_bound,
        alpha_norm,
    })
}

/// |ᾱ| / d_est(x): the constant of the perturbation bound, with the
/// distance oracle standing in for d.
pub fn perturbation_bound_ratio(
    g: &GroupDescriptor,
    sol: &PerturbationSolution,
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    let est = distance_from_origin(g, &sol.target_x, segments, restarts, seed)?;
    if est.value == 0.0 {
        return Err(CarnotError::InvalidArgument("target is the identity".into()));
    }
    Ok(sol.alpha_norm / est.value)
}

/// Residual of the first-order expansion at exp(w·X), against the chain
/// upper bound and (optionally) the distance-oracle estimate.
#[derive(Clone, Debug, Serialize)]
pub struct PansuResidual {
    pub r_upper: f64,
    pub r_est: Option<f64>,
    pub chain_bound: f64,
    pub alpha_norm: f64,
    pub w_norm: f64,
    pub linear_term: f64,
}

impl PansuResidual {
    /// The sharper of the available upper-bound residuals.
    pub fn r_min(&self) -> f64 {
        self.r_est.map_or(self.r_upper, |re| re.min(self.r_upper))
    }
}

#[derive(Default)]
pub struct ResidualOptions {
    /// Chain length; `None` selects the smallest submersion length.
    pub p: Option<usize>,
    /// Compute the distance-oracle residual too (segments, restarts, seed).
    pub estimate: Option<(usize, usize, u64)>,
}

pub fn pansu_residual(
    g: &GroupDescriptor,
    w: &[f64],
    x: &[f64],
    opts: &ResidualOptions,
) -> Result<PansuResidual> {
    let w_norm = norm2(w);
    if w_norm == 0.0 {
        return Err(CarnotError::InvalidArgument("w must be nonzero".into()));
    }
    let p = match opts.p {
        Some(p) => p,
        None => auto_chain_length(g, w)?,
    };
    let xi: Vec<f64> = w.iter().map(|c| c / p as f64).collect();
    let sol = solve_perturbation(g, &xi, p, x)?;
    let linear_term: f64 =
        w.iter().zip(&x[..g.m()]).map(|(wi, xi1)| wi / w_norm * xi1).sum();
    let r_upper = sol.chain_bound - w_norm - linear_term;
    let r_est = match opts.estimate {
        None => None,
        Some((segments, restarts, seed)) => {
            let exp_w = g.exp_horizontal(w)?;
            let point = g.multiply(&exp_w, x)?;
            let est = distance_from_origin(g, &point, segments, restarts, seed)?;
            (est.status == DistanceStatus::UpperBound)
                .then(|| est.value - w_norm - linear_term)
        }
    };
    Ok(PansuResidual {
        r_upper,
        r_est,
        chain_bound: sol.chain_bound,
        alpha_norm: sol.alpha_norm,
        w_norm,
        linear_term,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeRow {
    pub lambda: f64,
    pub r_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_est: Option<f64>,
    pub chain_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
    /// Fitted log-log slope of the chain-bound residual.
    pub slope_upper: Option<f64>,
    /// Fitted slope of the positive part of the estimate residual.
    pub slope_est: Option<f64>,
    /// Decay order of the negative part of the estimate residual (evidence
    /// for the cited lower bound; > 1 expected).
    pub slope_est_negative: Option<f64>,
    /// All chain residuals at noise level: collinear/degenerate case.
    pub degenerate: bool,
    /// Number of non-positive upper residuals clamped out of the fit.
    pub clamped: usize,
}

/// Least-squares slope of log y against log x.
fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    (denom.abs() > 1e-12).then(|| (n * sxy - sx * sy) / denom)
}

/// Evaluate the residual along δ_λ x₀ over the grid and fit decay orders.
pub fn pansu_slope(
    g: &GroupDescriptor,
    w: &[f64],
    x0: &[f64],
    lambda_grid: &[f64],
    opts: &ResidualOptions,
) -> Result<SlopeReport> {
    if lambda_grid.len() < 4 {
        return Err(CarnotError::InvalidArgument(
            "lambda grid needs at least 4 points".into(),
        ));
    }
    let p = match opts.p {
        Some(p) => p,
        None => auto_chain_length(g, w)?,
    };
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for (idx, &lam) in lambda_grid.iter().enumerate() {
        if lam <= 0.0 {
            return Err(CarnotError::InvalidArgument("lambda must be positive".into()));
        }
        let x = g.dilate(&lam, x0)?;
        let per_lambda = ResidualOptions {
            p: Some(p),
            estimate: opts.estimate.map(|(s, r, seed)| (s, r, seed ^ (idx as u64) << 7)),
        };
        let res = pansu_residual(g, w, &x, &per_lambda)?;
        rows.push(SlopeRow {
            lambda: lam,
            r_upper: res.r_upper,
            r_est: res.r_est,
            chain_norm: res.alpha_norm,
        });
    }
    let w_norm = norm2(w);
    let noise = 1e-13 * (1.0 + w_norm);
    let degenerate = rows.iter().all(|r| r.r_upper.abs() < noise);
    let positives: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.r_upper > noise)
        .map(|r| (r.lambda, r.r_upper))
        .collect();
    let clamped = rows.len() - positives.len();
    let slope_upper = if degenerate { None } else { loglog_slope(&positives) };
    let est_pos: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.r_est.filter(|&v| v > noise).map(|v| (r.lambda, v)))
        .collect();
    let est_neg: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.r_est.filter(|&v| v < -noise).map(|v| (r.lambda, -v)))
        .collect();
    Ok(SlopeReport {
        rows,
        slope_upper,
        slope_est: loglog_slope(&est_pos),
        slope_est_negative: loglog_slope(&est_neg),
        degenerate,
        clamped,
    })
}

/// Residual at a step-two point via the constructive chain solver; works at
/// abnormal directions too, with no submersion requirement.
#[derive(Clone, Debug, Serialize)]
pub struct StepTwoResidual {
    pub r: f64,
    pub chain_bound: f64,
    pub p: usize,
}

pub fn steptwo_pansu_residual(
    g: &StepTwoGroup,
    w: &[f64],
    z: &[f64],
    t: &[f64],
) -> Result<StepTwoResidual> {
    let w_norm = norm2(w);
    if w_norm == 0.0 {
        return Err(CarnotError::InvalidArgument("w must be nonzero".into()));
    }
    let bound = steptwo_solver::chain_upper_bound(g, w, z, t)?;
    let linear: f64 = w.iter().zip(z).map(|(wi, zi)| wi / w_norm * zi).sum();
    Ok(StepTwoResidual {
        r: bound - w_norm - linear,
        chain_bound: bound,
        p: steptwo_solver::choose_p(g),
    })
}

/// Decay of the step-two residual under the anisotropic scaling
/// (z, t) → (λz, λ²t).
pub fn steptwo_pansu_slope(
    g: &StepTwoGroup,
    w: &[f64],
    z0: &[f64],
    t0: &[f64],
    lambda_grid: &[f64],
) -> Result<SlopeReport> {
    if lambda_grid.len() < 4 {
        return Err(CarnotError::InvalidArgument(
            "lambda grid needs at least 4 points".into(),
        ));
    }
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for &lam in lambda_grid {
        let z: Vec<f64> = z0.iter().map(|c| c * lam).collect();
        let t: Vec<f64> = t0.iter().map(|c| c * lam * lam).collect();
        let res = steptwo_pansu_residual(g, w, &z, &t)?;
        rows.push(SlopeRow {
            lambda: lam,
            r_upper: res.r,
            r_est: None,
            chain_norm: res.chain_bound,
        });
    }
    let noise = 1e-13 * (1.0 + norm2(w));
    let degenerate = rows.iter().all(|r| r.r_upper.abs() < noise);
    let positives: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.r_upper > noise).map(|r| (r.lambda, r.r_upper)).collect();
    let clamped = rows.len() - positives.len();
    let slope_upper = if degenerate { None } else { loglog_slope(&positives) };
    Ok(SlopeReport {
        rows,
        slope_upper,
        slope_est: None,
        slope_est_negative: None,
        degenerate,
        clamped,
    })
}

/// First-layer identity: the first m equations of the perturbation system
/// are linear, so Σᾱ_j must equal x¹ to solver precision.
pub fn first_layer_gap(g: &GroupDescriptor, sol: &PerturbationSolution) -> f64 {
    let m = g.m();
    let mut sums = vec![0.0; m];
    for alpha in &sol.alphas {
        for (s, a) in sums.iter_mut().zip(alpha) {
            *s += a;
        }
    }
    let diff: Vec<f64> =
        sums.iter().zip(&sol.target_x[..m]).map(|(s, x)| s - x).collect();
    norm2(&diff)
}

/// Exact rational λ-dilation helper for tests: δ_λ on coordinates.
pub fn dilate_rational(g: &GroupDescriptor, lam_num: i64, lam_den: i64, x: &[f64]) -> Result<Vec<f64>> {
    let lam = crate::scalar::rat(lam_num, lam_den);
    let xr: Vec<crate::scalar::Rat> = x.iter().map(|&c| f64_to_rat(c)).collect();
    let out = g.dilate(&lam, &xr)?;
    Ok(out.iter().map(crate::scalar::rat_to_f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_slice_is_three_dimensional() {
        let g = GroupDescriptor::heisenberg();
        let slice = select_slice(&g, &[1.0, 0.0], 2).unwrap();
        assert_eq!(slice.columns.len(), 3);
        assert!(slice.condition.is_finite());
    }

    #[test]
    fn engel_slice_matches_column_pattern() {
        // ζ = (1, 0), chain length 3: the v-columns (odd indices) carry the
        // vertical directions, plus one u-column.
        let g = GroupDescriptor::filiform(2).unwrap();
        let slice = select_slice(&g, &[1.0, 0.0], 3).unwrap();
        assert_eq!(slice.columns.len(), 4);
        let v_columns: Vec<usize> = slice.columns.iter().copied().filter(|c| c % 2 == 1).collect();
        assert_eq!(v_columns, vec![1, 3, 5], "all three v-columns selected");
    }

    #[test]
    fn singular_direction_is_rejected() {
        let g = GroupDescriptor::filiform(2).unwrap();
        for p in 1..=6 {
            assert!(matches!(
                select_slice(&g, &[0.0, 1.0], p),
                Err(CarnotError::NotSubmersion { .. })
            ));
        }
    }

    #[test]
    fn auto_chain_length_examples() {
        let h = GroupDescriptor::heisenberg();
        assert_eq!(auto_chain_length(&h, &[2.0, 0.0]).unwrap(), 2);
        let e = GroupDescriptor::filiform(2).unwrap();
        assert_eq!(auto_chain_length(&e, &[1.0, 0.0]).unwrap(), 3);
        assert!(auto_chain_length(&e, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn identity_target_gives_zero_alphas() {
        let g = GroupDescriptor::heisenberg();
        let id: Vec<f64> = g.identity();
        let sol = solve_perturbation(&g, &[1.0, 0.0], 2, &id).unwrap();
        assert!(sol.alpha_norm < 1e-14);
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn perturbation_solves_and_first_layer_holds() {
        let g = GroupDescriptor::heisenberg();
        let x = dilate_rational(&g, 1, 100, &[0.0, 1.0, 1.0]).unwrap();
        let sol = solve_perturbation(&g, &[1.0, 0.0], 2, &x).unwrap();
        assert!(sol.residual < 1e-12, "residual {}", sol.residual);
        assert!(first_layer_gap(&g, &sol) < 1e-12);
    }

    #[test]
    fn heisenberg_residual_decays_quadratically() {
        let g = GroupDescriptor::heisenberg();
        let report = pansu_slope(
            &g,
            &[2.0, 0.0],
            &[0.0, 1.0, 1.0],
            &DEFAULT_LAMBDA_GRID,
            &ResidualOptions::default(),
        )
        .unwrap();
        let slope = report.slope_upper.expect("positive residuals");
        assert!(slope >= 1.9, "slope {slope}");
        assert!(report.rows.iter().all(|r| r.r_upper > 0.0));
    }

    #[test]
    fn collinear_case_is_degenerate() {
        let g = GroupDescriptor::heisenberg();
        let w = [2.0, 0.0];
        let x0 = g.exp_horizontal(&[0.5, 0.0].to_vec()).unwrap();
        let report =
            pansu_slope(&g, &w, &x0, &DEFAULT_LAMBDA_GRID, &ResidualOptions::default()).unwrap();
        assert!(report.degenerate);
        assert!(report.slope_upper.is_none());
    }

    #[test]
    fn steptwo_residual_scales_quadratically_at_abnormal_direction() {
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
    }
}
