//! Horizontally convex set harness: membership for the named example sets,
//! sampling-based horizontal-convexity scans, the inner-cone probe, and the
//! explicit cone-property counterexamples.
//!
//! "Outside the set" is always decided by the exact sign of the membership
//! function; ball membership is certified by the distance oracle's upper
//! bound. Violations therefore carry two sound certificates.

use crate::distance::{ball_reach, ReachVerdict};
use crate::error::{CarnotError, Result};
use crate::expr::{parse_expr, Expr};
use crate::groups::GroupDescriptor;
use crate::scalar::{rand_rat, rat, rat_i, rat_to_f64, rat_to_string, Jet, Rat};

use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Interior,
    Exterior,
    Boundary,
}

/// Implicitly defined candidate set {F > 0} (open) or {F ≥ 0} (closed),
/// with exact membership on rational points.
#[derive(Clone, Debug)]
pub struct ImplicitSet {
    pub descriptor: GroupDescriptor,
    pub expr: Expr,
    pub name: String,
    /// Closed sets include their boundary.
    pub closed: bool,
}

impl ImplicitSet {
    /// The set {t_p + y^{p+2} 1_{[0,∞)}(y) ≥ 0} in the filiform group;
    /// horizontally convex (with convex complement) for even p.
    pub fn filiform_even(p: usize) -> Result<Self> {
        if p < 2 || p % 2 != 0 {
            return Err(CarnotError::InvalidArgument("filiform-even needs even p >= 2".into()));
        }
        Self::filiform_indicator_set(p, format!("filiform-even({p})"))
    }

    /// The same membership function read at odd p, where horizontal
    /// convexity fails along exp(s(−X+Y)).
    pub fn filiform_odd(p: usize) -> Result<Self> {
        if p < 3 || p % 2 == 0 {
            return Err(CarnotError::InvalidArgument("filiform-odd needs odd p >= 3".into()));
        }
        Self::filiform_indicator_set(p, format!("filiform-odd({p})"))
    }

    fn filiform_indicator_set(p: usize, name: String) -> Result<Self> {
        let descriptor = GroupDescriptor::filiform(p)?;
        let y = Expr::var(1);
        let tp = Expr::var(p + 1);
        let expr = tp.add(y.clone().pow(p as u32 + 2).mul(y.step()));
        Ok(ImplicitSet { descriptor, expr, name, closed: true })
    }

    /// Engel-group set {x₄ + x₂⁴ 1_{[0,∞)}(x₂) > 0}: constant horizontal
    /// normal, no inner cone at the direction X₂.
    pub fn engel_remark42() -> Self {
        let descriptor = GroupDescriptor::filiform(2).expect("p = 2 valid");
        let x2 = Expr::var(1);
        let x4 = Expr::var(3);
        let expr = x4.add(x2.clone().pow(4).mul(x2.step()));
        ImplicitSet { descriptor, expr, name: "engel-remark42".into(), closed: false }
    }

    /// Free step-3 rank-2 set
    /// {ξ₂x₄ − ξ₁x₅ − ⟨ξ,x⟩³/6 + ⟨ξ,x⟩⁴ 1_{[0,∞)}(⟨ξ,x⟩) > 0} for a unit ξ.
    pub fn free32_psi4(xi: [Rat; 2]) -> Result<Self> {
        let unit = &xi[0] * &xi[0] + &xi[1] * &xi[1];
        let exactly_unit = unit == rat_i(1);
        if !exactly_unit && (rat_to_f64(&unit) - 1.0).abs() > 1e-12 {
            return Err(CarnotError::InvalidArgument(
                "xi must be a unit vector (use an exact Pythagorean pair for exact mode)".into(),
            ));
        }
        let descriptor = GroupDescriptor::free32();
        let inner = Expr::constant(xi[0].clone())
            .mul(Expr::var(0))
            .add(Expr::constant(xi[1].clone()).mul(Expr::var(1)));
        let expr = Expr::constant(xi[1].clone())
            .mul(Expr::var(3))
            .sub(Expr::constant(xi[0].clone()).mul(Expr::var(4)))
            .sub(inner.clone().pow(3).mul(Expr::constant(rat(1, 6))))
            .add(inner.clone().pow(4).mul(inner.step()));
        Ok(ImplicitSet {
            descriptor,
            expr,
            name: format!("free32-psi4({},{})", rat_to_string(&xi[0]), rat_to_string(&xi[1])),
            closed: false,
        })
    }

    /// User-supplied expression over the group coordinates.
    pub fn from_expr(g: &GroupDescriptor, source: &str, closed: bool) -> Result<Self> {
        let expr = parse_expr(g, source)?;
        Ok(ImplicitSet {
            descriptor: g.clone(),
            expr,
            name: format!("expr({source})"),
            closed,
        })
    }

    /// Named tags for the CLI: filiform-even:p, filiform-odd:p,
    /// engel-remark42, free32-psi4:a,b.
    pub fn from_tag(tag: &str) -> Result<Self> {
        if let Some(p) = tag.strip_prefix("filiform-even:") {
            let p = p.parse().map_err(|e| CarnotError::Parse(format!("bad p: {e}")))?;
            return Self::filiform_even(p);
        }
        if let Some(p) = tag.strip_prefix("filiform-odd:") {
            let p = p.parse().map_err(|e| CarnotError::Parse(format!("bad p: {e}")))?;
            return Self::filiform_odd(p);
        }
        if tag == "engel-remark42" {
            return Ok(Self::engel_remark42());
        }
        if let Some(rest) = tag.strip_prefix("free32-psi4:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(CarnotError::Parse("free32-psi4 needs xi as a,b".into()));
            }
            let a = crate::scalar::parse_rat(parts[0]).map_err(CarnotError::Parse)?;
            let b = crate::scalar::parse_rat(parts[1]).map_err(CarnotError::Parse)?;
            return Self::free32_psi4([a, b]);
        }
        Err(CarnotError::Parse(format!(
            "unknown set tag {tag:?}; expected filiform-even:p, filiform-odd:p, engel-remark42 or free32-psi4:a,b"
        )))
    }

    /// Sign of F at a rational point, exact.
    pub fn membership_exact(&self, x: &[Rat]) -> Result<Membership> {
        let value = self.expr.eval(x)?;
        Ok(if Signed::is_positive(&value) {
            Membership::Interior
        } else if Signed::is_negative(&value) {
            Membership::Exterior
        } else {
            Membership::Boundary
        })
    }

    /// Sign of F in float mode; |F| within the kink band (or an indicator
    /// kink on the way) reports Boundary.
    pub fn membership_f64(&self, x: &[f64]) -> Membership {
        match self.expr.eval(x) {
            Err(_) => Membership::Boundary,
            Ok(v) if v > crate::expr::KINK_BAND => Membership::Interior,
            Ok(v) if v < -crate::expr::KINK_BAND => Membership::Exterior,
            Ok(_) => Membership::Boundary,
        }
    }

    /// Whether the point belongs to the set (boundary counts for closed
    /// sets), exact.
    pub fn contains_exact(&self, x: &[Rat]) -> Result<bool> {
        Ok(match self.membership_exact(x)? {
            Membership::Interior => true,
            Membership::Boundary => self.closed,
            Membership::Exterior => false,
        })
    }

    /// Directional derivative (VF)(x) along the horizontal combination
    /// w·X at a rational point, exact away from indicator kinks.
    pub fn horizontal_derivative(&self, w: &[Rat], x: &[Rat]) -> Result<Rat> {
        let tangent = self.descriptor.horizontal_combination(w, x)?;
        let coords: Vec<Jet<Rat>> = x
            .iter()
            .zip(&tangent)
            .map(|(xi, ti)| Jet { val: xi.clone(), grad: smallvec::smallvec![ti.clone()] })
            .collect();
        Ok(self.expr.eval(&coords)?.derivative(0))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeSignReport {
    pub set: String,
    pub samples: usize,
    pub skipped_kink: usize,
    /// The annihilating field (X, or −ξ₂X₁+ξ₁X₂) gives exactly zero
    /// everywhere it was checked.
    pub zero_field_ok: bool,
    /// The monotone field (Y, or ξ₁X₁+ξ₂X₂) is nonnegative where asserted.
    pub monotone_field_ok: Option<bool>,
    /// Smallest observed monotone-field value.
    pub monotone_min: Option<f64>,
    /// Closed-form identity for the monotone derivative (free32 sets).
    pub formula_ok: Option<bool>,
}

/// Which fields annihilate / monotonically increase the named set's F.
fn field_pair(set: &ImplicitSet) -> Result<(Vec<Rat>, Vec<Rat>, bool)> {
    match set.descriptor {
        GroupDescriptor::Filiform(_) => {
            // XF = 0 identically; YF ≥ 0 exactly when p is even.
            let even = set.name.starts_with("filiform-even") || set.name == "engel-remark42";
            Ok((vec![rat_i(1), rat_i(0)], vec![rat_i(0), rat_i(1)], even))
        }
        GroupDescriptor::Free32 => {
            let xi = free32_xi(set)?;
            let zero_field = vec![-xi[1].clone(), xi[0].clone()];
            let monotone = vec![xi[0].clone(), xi[1].clone()];
            Ok((zero_field, monotone, true))
        }
        _ => Err(CarnotError::InvalidArgument(
            "derivative sign check needs a named filiform or free32 set".into(),
        )),
    }
}

fn free32_xi(set: &ImplicitSet) -> Result<[Rat; 2]> {
    let inner = set
        .name
        .strip_prefix("free32-psi4(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| CarnotError::InvalidArgument("not a free32-psi4 set".into()))?;
    let parts: Vec<&str> = inner.split(',').collect();
    let a = crate::scalar::parse_rat(parts[0]).map_err(CarnotError::Parse)?;
    let b = crate::scalar::parse_rat(parts[1]).map_err(CarnotError::Parse)?;
    Ok([a, b])
}

/// Evaluate the two horizontal derivatives of F at random rational points
/// away from the indicator kink: the annihilating identity must hold
/// exactly, the monotone one must be nonnegative (where the theory asserts
/// it), and for free32 sets the closed-form value of the monotone
/// derivative is checked exactly as well.
pub fn derivative_sign_check(
    set: &ImplicitSet,
    samples: usize,
    seed: u64,
) -> Result<DerivativeSignReport> {
    let g = &set.descriptor;
    let (zero_field, monotone_field, assert_monotone) = field_pair(set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut zero_ok = true;
    let mut monotone_ok = true;
    let mut monotone_min = f64::INFINITY;
    let mut formula_ok = true;
    let free_xi = matches!(g, GroupDescriptor::Free32).then(|| free32_xi(set)).transpose()?;

    while checked < samples {
        let x: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 4, 3)).collect();
        let zero_d = set.horizontal_derivative(&zero_field, &x);
        let mono_d = set.horizontal_derivative(&monotone_field, &x);
        let (zd, md) = match (zero_d, mono_d) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                skipped += 1;
                continue;
            }
        };
        checked += 1;
        if !Zero::is_zero(&zd) {
            zero_ok = false;
        }
        if Signed::is_negative(&md) {
            monotone_ok = false;
        }
        monotone_min = monotone_min.min(rat_to_f64(&md));
        if let Some(xi) = &free_xi {
            // ½(x₁²+x₂²−⟨x,ξ⟩²) + 4⟨x,ξ⟩³ 1_{[0,∞)}(⟨x,ξ⟩), for |ξ| = 1.
            let inner = &xi[0] * &x[0] + &xi[1] * &x[1];
            let quad = (&x[0] * &x[0] + &x[1] * &x[1] - &inner * &inner) * rat(1, 2);
            let psi_term = if Signed::is_negative(&inner) {
                rat_i(0)
            } else {
                rat_i(4) * &inner * &inner * &inner
            };
            if md != quad + psi_term {
                formula_ok = false;
            }
        }
    }
    Ok(DerivativeSignReport {
        set: set.name.clone(),
        samples: checked,
        skipped_kink: skipped,
        zero_field_ok: zero_ok,
        monotone_field_ok: assert_monotone.then_some(monotone_ok),
        monotone_min: (checked > 0).then_some(monotone_min),
        formula_ok: free_xi.is_some().then_some(formula_ok),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LineViolation {
    /// Grid indices realizing the non-interval pattern s₁ < s₂ < s₃.
    pub indices: (usize, usize, usize),
    /// true: in/out/in against the set; false: against its complement.
    pub against_set: bool,
}

#[derive(Clone, Debug)]
pub struct LinePattern {
    pub memberships: Vec<Membership>,
    pub violation: Option<LineViolation>,
}

/// Membership pattern of the set along the horizontal line
/// γ(s) = base · exp(s·dir), at exact rational grid points. Both the set
/// and its complement must trace intervals; any in/out/in (or out/in/out)
/// triple is a horizontal-convexity violation.
pub fn check_line(
    set: &ImplicitSet,
    base: &[Rat],
    dir: &[Rat],
    s_values: &[Rat],
) -> Result<LinePattern> {
    let g = &set.descriptor;
    let mut memberships = Vec::with_capacity(s_values.len());
    let mut in_set = Vec::with_capacity(s_values.len());
    for s in s_values {
        let w: Vec<Rat> = dir.iter().map(|d| d * s).collect();
        let point = g.multiply(base, &g.exp_horizontal(&w)?)?;
        memberships.push(set.membership_exact(&point)?);
        in_set.push(set.contains_exact(&point)?);
    }
    let violation = find_non_interval(&in_set, true)
        .or_else(|| find_non_interval(&in_set.iter().map(|b| !b).collect::<Vec<_>>(), false));
    Ok(LinePattern { memberships, violation })
}

fn find_non_interval(flags: &[bool], against_set: bool) -> Option<LineViolation> {
    let first_in = flags.iter().position(|&b| b)?;
    let first_out_after = (first_in + 1..flags.len()).find(|&i| !flags[i])?;
    let second_in = (first_out_after + 1..flags.len()).find(|&i| flags[i])?;
    Some(LineViolation { indices: (first_in, first_out_after, second_in), against_set })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanWitness {
    pub line_index: usize,
    pub base: Vec<String>,
    pub direction: Vec<String>,
    pub s_values: Vec<String>,
    pub violation: LineViolation,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub set: String,
    pub lines: usize,
    pub grid: usize,
    /// First violating line (lowest index), when any.
    pub witness: Option<ScanWitness>,
}

/// Sample random horizontal lines and flag any non-interval membership
/// pattern for the set or its complement. Exact at every grid point.
pub fn hconvex_scan(
    set: &ImplicitSet,
    lines: usize,
    grid: usize,
    seed: u64,
) -> Result<ScanReport> {
    if grid < 16 {
        return Err(CarnotError::InvalidArgument("need at least 16 grid points per line".into()));
    }
    let g = &set.descriptor;
    let denom = (grid - 1) as i64;
    let s_values: Vec<Rat> = (0..grid).map(|i| rat(2 * i as i64 - denom, denom)).collect();

    let witnesses: Vec<Option<ScanWitness>> = (0..lines)
        .into_par_iter()
        .map(|line| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((line as u64) << 8));
            let base: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            let mut dir: Vec<Rat> = (0..g.m()).map(|_| rand_rat(&mut rng, 3, 2)).collect();
            if dir.iter().all(Zero::is_zero) {
                dir[0] = rat_i(1);
            }
            let pattern = check_line(set, &base, &dir, &s_values).expect("valid dims");
            pattern.violation.map(|violation| ScanWitness {
                line_index: line,
                base: base.iter().map(rat_to_string).collect(),
                direction: dir.iter().map(rat_to_string).collect(),
                s_values: s_values.iter().map(rat_to_string).collect(),
                violation,
            })
        })
        .collect();
    let witness = witnesses.into_iter().flatten().min_by_key(|w| w.line_index);
    Ok(ScanReport { set: set.name.clone(), lines, grid, witness })
}

/// One doubly certified cone violation: a point reachable from the axis
/// point within εs (distance-oracle upper bound) whose membership value is
/// exactly negative.
#[derive(Clone, Debug, Serialize)]
pub struct ConeViolation {
    pub s: String,
    pub point: Vec<String>,
    pub point_f64: Vec<f64>,
    /// Exact F value (negative).
    pub f_value: String,
    /// Distance-oracle upper bound from the axis point (below eps·s).
    pub distance_upper: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeVerdict {
    /// At least one doubly certified violation was found.
    ViolationsFound,
    /// No violation surfaced within the sampling and oracle budget; this is
    /// absence of evidence, not a certificate of the cone property.
    NoViolationFound,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub set: String,
    pub vertex: Vec<String>,
    pub direction: Vec<String>,
    pub eps: String,
    pub s_values: Vec<String>,
    pub candidates_checked: usize,
    pub exterior_candidates: usize,
    pub oracle_calls: usize,
    pub violations: Vec<ConeViolation>,
    pub verdict: ConeVerdict,
}

pub struct ConeProbeOptions {
    pub segments: usize,
    pub restarts: usize,
    pub max_violations: usize,
    pub max_oracle_calls: usize,
}

impl Default for ConeProbeOptions {
    fn default() -> Self {
        ConeProbeOptions { segments: 32, restarts: 8, max_violations: 2, max_oracle_calls: 64 }
    }
}

/// Default geometric s-grid 2⁻¹, …, 2⁻²⁰ for the cone probe.
pub fn default_cone_s_grid() -> Vec<Rat> {
    (1..=20).map(|k| rat(1, 1 << k)).collect()
}

/// Probe the inner-cone inclusion B(vertex·exp(sV), εs) ⊂ set along the
/// s-grid. Candidate points mix dilation-scaled random displacements with
/// single-coordinate displacements of magnitude c(sε)^w (w the coordinate
/// weight), which is where the ball-box geometry puts the extremal points.
/// Every reported violation carries the exact exterior certificate and the
/// ball certificate.
pub fn cone_probe(
    set: &ImplicitSet,
    vertex: &[Rat],
    direction: &[Rat],
    eps: &Rat,
    s_grid: &[Rat],
    samples: usize,
    seed: u64,
    opts: &ConeProbeOptions,
) -> Result<ConeReport> {
    if !Signed::is_positive(eps) {
        return Err(CarnotError::InvalidArgument("eps must be positive".into()));
    }
    let g = &set.descriptor;
    if vertex.len() != g.n() {
        return Err(CarnotError::DimensionMismatch { expected: g.n(), got: vertex.len() });
    }
    let weights = g.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConeReport {
        set: set.name.clone(),
        vertex: vertex.iter().map(rat_to_string).collect(),
        direction: direction.iter().map(rat_to_string).collect(),
        eps: rat_to_string(eps),
        s_values: s_grid.iter().map(rat_to_string).collect(),
        candidates_checked: 0,
        exterior_candidates: 0,
        oracle_calls: 0,
        violations: Vec::new(),
        verdict: ConeVerdict::NoViolationFound,
    };

    // Violations of the cone inclusion concentrate arbitrarily close to the
    // vertex, so the probe walks the grid from the smallest s outward and
    // spends its oracle budget there first.
    let mut ordered: Vec<&Rat> = s_grid.iter().collect();
    ordered.sort();
    'outer: for s in ordered {
        if !Signed::is_positive(s) {
            return Err(CarnotError::InvalidArgument("s values must be positive".into()));
        }
        let w: Vec<Rat> = direction.iter().map(|d| d * s).collect();
        let axis = g.multiply(vertex, &g.exp_horizontal(&w)?)?;
        let axis_f64: Vec<f64> = axis.iter().map(rat_to_f64).collect();
        let radius = s * eps;
        let radius_f64 = rat_to_f64(&radius);

        let mut candidates: Vec<Vec<Rat>> = Vec::new();
        // Structured displacements along single higher-layer coordinates.
        for (i, &wt) in weights.iter().enumerate() {
            if wt < 2 {
                continue;
            }
            let scale = radius.pow(wt as i32);
            for k in 0..16 {
                let magnitude = &scale * rat(1, 1 << k);
                for sign in [-1i64, 1] {
                    let mut disp = vec![rat_i(0); g.n()];
                    disp[i] = &magnitude * rat_i(sign);
                    candidates.push(g.multiply(&axis, &disp)?);
                }
            }
        }
        // Dilation-scaled random displacements.
        for _ in 0..samples {
            let y: Vec<Rat> = (0..g.n()).map(|_| rand_rat(&mut rng, 2, 2)).collect();
            let scaled = g.dilate(&radius, &y)?;
            candidates.push(g.multiply(&axis, &scaled)?);
        }

        for cand in candidates {
            report.candidates_checked += 1;
            if set.membership_exact(&cand)? != Membership::Exterior {
                continue;
            }
            report.exterior_candidates += 1;
            if report.oracle_calls >= opts.max_oracle_calls {
                break 'outer;
            }
            report.oracle_calls += 1;
            let cand_f64: Vec<f64> = cand.iter().map(rat_to_f64).collect();
            let reach = ball_reach(
                g,
                &axis_f64,
                radius_f64,
                &cand_f64,
                opts.segments,
                opts.restarts,
                seed ^ report.oracle_calls as u64,
            )?;
            if matches!(reach.verdict, ReachVerdict::InsideCertified) {
                let f_value = set.expr.eval(&cand)?;
                report.violations.push(ConeViolation {
                    s: rat_to_string(s),
                    point: cand.iter().map(rat_to_string).collect(),
                    point_f64: cand_f64,
                    f_value: rat_to_string(&f_value),
                    distance_upper: reach.estimate,
                    radius: radius_f64,
                });
                if report.violations.len() >= opts.max_violations {
                    break 'outer;
                }
            }
        }
    }
    if !report.violations.is_empty() {
        report.verdict = ConeVerdict::ViolationsFound;
    }
    Ok(report)
}

/// Certified failure point P_s = (0, s, 0, …, −c(sε)^{p+1}) for the
/// filiform indicator set: inside the sub-Riemannian ball B(exp(sY), εs)
/// by the distance oracle, outside the set exactly.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub p: usize,
    pub eps: String,
    /// Final s (possibly shrunk from the requested one so that the exact
    /// exterior certificate holds).
    pub s: String,
    pub shrank_s: bool,
    pub c: f64,
    pub point: Vec<String>,
    pub point_f64: Vec<f64>,
    pub f_value: String,
    pub distance_upper: f64,
    pub radius: f64,
    pub certified: bool,
}

const WITNESS_BISECTION_STEPS: usize = 16;
const WITNESS_BRACKET: (f64, f64) = (1e-6, 1.0);

fn filiform_axis_point(p: usize, s: &Rat) -> Vec<Rat> {
    let mut axis = vec![rat_i(0); p + 2];
    axis[1] = s.clone();
    axis
}

fn filiform_witness_point(p: usize, s: &Rat, eps: &Rat, c: f64) -> Vec<Rat> {
    let mut point = filiform_axis_point(p, s);
    let se = s * eps;
    point[p + 1] = -crate::scalar::f64_to_rat(c) * se.pow(p as i32 + 1);
    point
}

/// Search, by bisection on c with the distance oracle, for a certified
/// witness against the inner-cone property of the filiform indicator set
/// at the direction Y. The requested s is halved as needed until the
/// exterior condition c(ε)^{p+1} > s holds.
pub fn filiform_witness(
    p: usize,
    eps: &Rat,
    s0: &Rat,
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<WitnessReport> {
    if p < 2 || p % 2 != 0 {
        return Err(CarnotError::InvalidArgument("witness needs even p >= 2".into()));
    }
    if !Signed::is_positive(eps) || eps > &rat_i(1) {
        return Err(CarnotError::InvalidArgument("need 0 < eps <= 1".into()));
    }
    if !Signed::is_positive(s0) {
        return Err(CarnotError::InvalidArgument("need s > 0".into()));
    }
    let set = ImplicitSet::filiform_even(p)?;
    let g = set.descriptor.clone();

    let certify = |c: f64, s: &Rat| -> Result<Option<(f64, f64)>> {
        let axis: Vec<f64> = filiform_axis_point(p, s).iter().map(rat_to_f64).collect();
        let point: Vec<f64> =
            filiform_witness_point(p, s, eps, c).iter().map(rat_to_f64).collect();
        let radius = rat_to_f64(&(s * eps));
        let reach = ball_reach(&g, &axis, radius, &point, segments, restarts, seed)?;
        Ok(matches!(reach.verdict, ReachVerdict::InsideCertified)
            .then_some((reach.estimate, radius)))
    };

    // Bisect for the largest certified c in the bracket.
    let (mut lo, mut hi) = WITNESS_BRACKET;
    if certify(lo, s0)?.is_none() {
        return Err(CarnotError::SolverFailure(
            "bisection failed to certify any c: distance oracle too weak here".into(),
        ));
    }
    if certify(hi, s0)?.is_some() {
        lo = hi;
    } else {
        for _ in 0..WITNESS_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if certify(mid, s0)?.is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    // Back off into the interior of the certified bracket: at the bisected
    // endpoint the ball certificate holds with almost no margin, and the
    // final certification below runs at a different s.
    let c = 0.75 * lo;

    // Exterior condition F(P_s) < 0 needs s < c·ε^{p+1}; halve s until it
    // holds, then certify the ball at the final (c, s).
    let mut s = s0.clone();
    let mut shrank = false;
    loop {
        let point = filiform_witness_point(p, &s, eps, c);
        if set.membership_exact(&point)? == Membership::Exterior {
            break;
        }
        s = &s * rat(1, 2);
        shrank = true;
        if rat_to_f64(&s) < 1e-12 {
            return Err(CarnotError::SolverFailure(
                "could not reach the exterior region while shrinking s".into(),
            ));
        }
    }
    let best = certify(c, &s)?.ok_or_else(|| {
        CarnotError::SolverFailure("final certification failed at the backed-off c".into())
    })?;
    let point = filiform_witness_point(p, &s, eps, c);
    let f_value = set.expr.eval(&point)?;
    Ok(WitnessReport {
        p,
        eps: rat_to_string(eps),
        s: rat_to_string(&s),
        shrank_s: shrank,
        c,
        point_f64: point.iter().map(rat_to_f64).collect(),
        point: point.iter().map(rat_to_string).collect(),
        f_value: rat_to_string(&f_value),
        distance_upper: best.0,
        radius: best.1,
        certified: true,
    })
}

/// Sign table for the free32 axis curve
/// γ(s) = (sξ₁, sξ₂, 0, ξ₂s³(1/6−cε³), −ξ₁s³(1/6−cε³)): membership in the
/// free32-psi4 set flips exactly at s = cε³ (the sign of −cε³s³ + s⁴).
#[derive(Clone, Debug, Serialize)]
pub struct AxisRow {
    pub s: String,
    pub f_value: String,
    pub in_set: bool,
    pub predicted_in_set: bool,
    pub agrees: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxisCheckReport {
    pub set: String,
    pub c: String,
    pub eps: String,
    pub rows: Vec<AxisRow>,
    pub all_agree: bool,
}

pub fn free32_axis_check(
    xi: &[Rat; 2],
    eps: &Rat,
    c: &Rat,
    s_grid: &[Rat],
) -> Result<AxisCheckReport> {
    let set = ImplicitSet::free32_psi4(xi.clone())?;
    let factor_base = rat(1, 6) - c * eps.pow(3);
    let mut rows = Vec::with_capacity(s_grid.len());
    let mut all_agree = true;
    for s in s_grid {
        if !Signed::is_positive(s) {
            return Err(CarnotError::InvalidArgument("s values must be positive".into()));
        }
        let s3 = s.pow(3);
        let factor = &s3 * &factor_base;
        let point = vec![
            s * &xi[0],
            s * &xi[1],
            rat_i(0),
            &xi[1] * &factor,
            -(&xi[0] * &factor),
        ];
        let f_value = set.expr.eval(&point)?;
        let in_set = set.contains_exact(&point)?;
        // −cε³s³ + s⁴ > 0 ⟺ s > cε³.
        let predicted = Signed::is_positive(&(s.pow(4) - c * eps.pow(3) * &s3));
        if in_set != predicted {
            all_agree = false;
        }
        rows.push(AxisRow {
            s: rat_to_string(s),
            f_value: rat_to_string(&f_value),
            in_set,
            predicted_in_set: predicted,
            agrees: in_set == predicted,
        });
    }
    Ok(AxisCheckReport {
        set: set.name,
        c: rat_to_string(c),
        eps: rat_to_string(eps),
        rows,
        all_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filiform_even_membership_examples() {
        let set = ImplicitSet::filiform_even(2).unwrap();
        let zero = vec![rat_i(0); 4];
        assert_eq!(set.membership_exact(&zero).unwrap(), Membership::Boundary);
        // exp(Y) = (0, 1, 0, 0) is interior with F = 1.
        let q = vec![rat_i(0), rat_i(1), rat_i(0), rat_i(0)];
        assert_eq!(set.membership_exact(&q).unwrap(), Membership::Interior);
        assert_eq!(set.expr.eval(&q).unwrap(), rat_i(1));
        // exp(sY) for s < 0 stays on the boundary.
        for s in [-1i64, -2, -5] {
            let p = vec![rat_i(0), rat_i(s), rat_i(0), rat_i(0)];
            assert_eq!(set.membership_exact(&p).unwrap(), Membership::Boundary);
        }
    }

    #[test]
    fn derivative_signs_for_filiform_even() {
        let set = ImplicitSet::filiform_even(2).unwrap();
        let report = derivative_sign_check(&set, 300, 11).unwrap();
        assert!(report.zero_field_ok);
        assert_eq!(report.monotone_field_ok, Some(true));
    }

    #[test]
    fn derivative_signs_for_free32() {
        for xi in [[rat_i(1), rat_i(0)], [rat(3, 5), rat(4, 5)]] {
            let set = ImplicitSet::free32_psi4(xi).unwrap();
            let report = derivative_sign_check(&set, 200, 13).unwrap();
            assert!(report.zero_field_ok, "rotated field must annihilate F");
            assert_eq!(report.monotone_field_ok, Some(true));
            assert_eq!(report.formula_ok, Some(true));
        }
    }

    #[test]
    fn odd_filiform_has_in_out_in_witness() {
        // γ(s) = exp(s(−X+Y)) with γ(0) ∈ E, γ(1/48) ∉ E, γ(1/24) ∈ E.
        let set = ImplicitSet::filiform_odd(3).unwrap();
        let base = vec![rat_i(0); 5];
        let dir = vec![rat_i(-1), rat_i(1)];
        let s_values = vec![rat_i(0), rat(1, 48), rat(1, 24)];
        let pattern = check_line(&set, &base, &dir, &s_values).unwrap();
        assert_eq!(pattern.memberships[0], Membership::Boundary);
        assert_eq!(pattern.memberships[1], Membership::Exterior);
        assert_eq!(pattern.memberships[2], Membership::Boundary);
        let v = pattern.violation.expect("non-interval pattern");
        assert_eq!(v.indices, (0, 1, 2));
        assert!(v.against_set);
    }

    #[test]
    fn even_filiform_scan_is_clean() {
        let set = ImplicitSet::filiform_even(2).unwrap();
        let report = hconvex_scan(&set, 500, 17, 23).unwrap();
        assert!(report.witness.is_none(), "witness: {:?}", report.witness);
    }

    #[test]
    fn full_space_scan_is_clean() {
        let g = GroupDescriptor::heisenberg();
        let set = ImplicitSet::from_expr(&g, "1", false).unwrap();
        let report = hconvex_scan(&set, 100, 16, 5).unwrap();
        assert!(report.witness.is_none());
    }

    #[test]
    fn axis_check_sign_flip() {
        // s = cε³/2 leaves the set, s = 2cε³ re-enters.
        let xi = [rat(3, 5), rat(4, 5)];
        let eps = rat(1, 2);
        let c = rat(1, 4);
        let flip = &c * eps.pow(3); // 1/32
        let grid = vec![&flip * rat(1, 2), flip.clone(), &flip * rat_i(2)];
        let report = free32_axis_check(&xi, &eps, &c, &grid).unwrap();
        assert!(report.all_agree);
        assert!(!report.rows[0].in_set);
        assert!(!report.rows[1].in_set, "boundary at the flip is not interior");
        assert!(report.rows[2].in_set);
    }

    #[test]
    fn from_tag_roundtrip() {
        assert!(ImplicitSet::from_tag("filiform-even:2").is_ok());
        assert!(ImplicitSet::from_tag("filiform-even:3").is_err());
        assert!(ImplicitSet::from_tag("filiform-odd:3").is_ok());
        assert!(ImplicitSet::from_tag("engel-remark42").is_ok());
        assert!(ImplicitSet::from_tag("free32-psi4:3/5,4/5").is_ok());
        assert!(ImplicitSet::from_tag("free32-psi4:1,1").is_err());
        assert!(ImplicitSet::from_tag("nonsense").is_err());
    }
}
