//! Step-two Carnot groups (ℝ^m × ℝ^ℓ, Q) with the law
//! (x,t)·(ξ,τ) = (x+ξ, t+τ+Q(x,ξ)) for a bilinear skew-symmetric Q.

use crate::error::{CarnotError, Result};
use crate::linalg::{kernel_exact, rank_exact};
use crate::scalar::{rand_rat, rat_i, Rat, Scalar};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct StepTwoGroup {
    m: usize,
    l: usize,
    /// q[alpha][j][k] = Q^alpha(e_j, e_k), skew-symmetric in (j, k).
    q: Vec<Vec<Vec<Rat>>>,
}

impl StepTwoGroup {
    pub fn new(m: usize, l: usize, q: Vec<Vec<Vec<Rat>>>) -> Result<Self> {
        if m < 2 {
            return Err(CarnotError::InvalidDescriptor(
                "step-two group needs horizontal dimension m >= 2".into(),
            ));
        }
        if l == 0 {
            return Err(CarnotError::InvalidDescriptor(
                "step-two group needs vertical dimension l >= 1".into(),
            ));
        }
        if q.len() != l {
            return Err(CarnotError::InvalidDescriptor(format!(
                "expected {l} coefficient matrices, got {}",
                q.len()
            )));
        }
        for (alpha, qa) in q.iter().enumerate() {
            if qa.len() != m || qa.iter().any(|row| row.len() != m) {
                return Err(CarnotError::InvalidDescriptor(format!(
                    "Q^{alpha} is not {m}x{m}"
                )));
            }
            for j in 0..m {
                for k in 0..m {
                    if qa[j][k] != -qa[k][j].clone() {
                        return Err(CarnotError::InvalidDescriptor(format!(
                            "Q^{alpha} is not skew-symmetric at ({j},{k})"
                        )));
                    }
                }
            }
        }
        let group = StepTwoGroup { m, l, q };
        // Hörmander span condition (2.1): the Q(e_j, e_k) must span ℝ^ℓ.
        if rank_exact(&group.pair_image_matrix()) != l {
            return Err(CarnotError::NotBracketGenerating);
        }
        Ok(group)
    }

    /// Heisenberg group: m = 2, ℓ = 1, Q(x, ξ) = x₁ξ₂ − x₂ξ₁.
    pub fn heisenberg() -> Self {
        let q = vec![vec![
            vec![rat_i(0), rat_i(1)],
            vec![rat_i(-1), rat_i(0)],
        ]];
        StepTwoGroup::new(2, 1, q).expect("valid descriptor")
    }

    /// The non-Métivier example ℝ³ × ℝ with Q(x, y) = x₁y₂ − x₂y₁:
    /// Q((0,0,1), y) = 0 for all y.
    pub fn non_metivier_r3() -> Self {
        let mut q1 = vec![vec![rat_i(0); 3]; 3];
        q1[0][1] = rat_i(1);
        q1[1][0] = rat_i(-1);
        StepTwoGroup::new(3, 1, vec![q1]).expect("valid descriptor")
    }

    /// Random valid descriptor with small integer Q entries, for test sweeps.
    pub fn random(m: usize, l: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let q: Vec<Vec<Vec<Rat>>> = (0..l)
                .map(|_| {
                    let mut qa = vec![vec![rat_i(0); m]; m];
                    for j in 0..m {
                        for k in j + 1..m {
                            let v = rand_rat(&mut rng, 2, 1);
                            qa[j][k] = v.clone();
                            qa[k][j] = -v;
                        }
                    }
                    qa
                })
                .collect();
            if let Ok(g) = StepTwoGroup::new(m, l, q) {
                return g;
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.m + self.l
    }

    pub fn q_coeff(&self, alpha: usize, j: usize, k: usize) -> &Rat {
        &self.q[alpha][j][k]
    }

    /// Q(e_j, e_k) as a vector in ℝ^ℓ.
    pub fn q_pair(&self, j: usize, k: usize) -> Vec<Rat> {
        (0..self.l).map(|alpha| self.q[alpha][j][k].clone()).collect()
    }

    /// ℓ × m(m−1)/2 matrix whose columns are Q(e_j, e_k), j < k in
    /// lexicographic order.
    pub fn pair_image_matrix(&self) -> Vec<Vec<Rat>> {
        let pairs = self.lex_pairs();
        (0..self.l)
            .map(|alpha| pairs.iter().map(|&(j, k)| self.q[alpha][j][k].clone()).collect())
            .collect()
    }

    pub fn lex_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for j in 0..self.m {
            for k in j + 1..self.m {
                pairs.push((j, k));
            }
        }
        pairs
    }

    /// Q(x, y) ∈ S^ℓ for horizontal vectors x, y.
    pub fn q_bilinear<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        (0..self.l)
            .map(|alpha| {
                let mut acc = S::zero();
                for j in 0..self.m {
                    if x[j].is_zero() {
                        continue;
                    }
                    for k in 0..self.m {
                        let c = &self.q[alpha][j][k];
                        if Zero::is_zero(c) || y[k].is_zero() {
                            continue;
                        }
                        acc = acc.add(&x[j].mul(&y[k]).scale(c));
                    }
                }
                acc
            })
            .collect()
    }

    /// Matrix of the linear map y ↦ Q(x, y) (ℓ rows, m columns), exact.
    pub fn q_linear_matrix(&self, x: &[Rat]) -> Vec<Vec<Rat>> {
        (0..self.l)
            .map(|alpha| {
                (0..self.m)
                    .map(|k| {
                        let mut acc = <Rat as num_traits::Zero>::zero();
                        for j in 0..self.m {
                            acc += &x[j] * &self.q[alpha][j][k];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    pub fn multiply<S: Scalar>(&self, a: &[S], b: &[S]) -> Vec<S> {
        let m = self.m;
        let q = self.q_bilinear(&a[..m], &b[..m]);
        let mut out = Vec::with_capacity(self.n());
        for j in 0..m {
            out.push(a[j].add(&b[j]));
        }
        for alpha in 0..self.l {
            out.push(a[m + alpha].add(&b[m + alpha]).add(&q[alpha]));
        }
        out
    }

    /// (z, t)⁻¹ = (−z, −t) since Q(z, z) = 0.
    pub fn inverse<S: Scalar>(&self, a: &[S]) -> Vec<S> {
        a.iter().map(|c| c.neg()).collect()
    }

    /// exp(w·X) = (w, 0).
    pub fn exp_horizontal<S: Scalar>(&self, w: &[S]) -> Vec<S> {
        let mut out = w.to_vec();
        out.extend((0..self.l).map(|_| S::zero()));
        out
    }

    /// Integral of the horizontal ODE from x: the vertical drift Q(x+sw, w)
    /// is constant in s because Q(w, w) = 0.
    pub fn flow<S: Scalar>(&self, w: &[S], x: &[S]) -> Vec<S> {
        let m = self.m;
        let q = self.q_bilinear(&x[..m], w);
        let mut out = Vec::with_capacity(self.n());
        for j in 0..m {
            out.push(x[j].add(&w[j]));
        }
        for alpha in 0..self.l {
            out.push(x[m + alpha].add(&q[alpha]));
        }
        out
    }

    /// X_k(x) = ∂_{x_k} + Σ_{j,α} Q^α(e_j, e_k) x_j ∂_{t_α}.
    pub fn horizontal_field<S: Scalar>(&self, k: usize, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n()];
        out[k] = S::one();
        for alpha in 0..self.l {
            let mut acc = S::zero();
            for j in 0..self.m {
                let c = &self.q[alpha][j][k];
                if !Zero::is_zero(c) {
                    acc = acc.add(&x[j].scale(c));
                }
            }
            out[self.m + alpha] = acc;
        }
        out
    }
}

/// Outcome of the Métivier probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum MetivierVerdict {
    /// No rank-deficient x found.
    MetivierEvidence,
    /// Witness x ≠ 0 with rank Q(x, ·) < ℓ.
    Counterexample { x: Vec<f64>, rank: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetivierReport {
    #[serde(flatten)]
    pub verdict: MetivierVerdict,
    /// True when the verdict is exact rather than sampled. For ℓ = 1 the
    /// failure locus is precisely the kernel of the coefficient matrix, so
    /// both directions certify.
    pub certified: bool,
    pub trials: usize,
    /// Exact witness coordinates when a counterexample exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_exact: Option<Vec<String>>,
}

/// Search for x ≠ 0 with y ↦ Q(x, y) of deficient rank. For ℓ = 1 the
/// kernel of the single coefficient matrix decides the question exactly;
/// otherwise the report is randomized evidence over `trials` exact rank
/// tests plus a structured sweep of basis vectors and their pairwise sums
/// and differences.
pub fn metivier_check(g: &StepTwoGroup, trials: usize, seed: u64) -> Result<MetivierReport> {
    if trials == 0 {
        return Err(CarnotError::InvalidArgument("trials must be positive".into()));
    }
    let counterexample = |x: Vec<Rat>, g: &StepTwoGroup, certified: bool, trials: usize| {
        let rank = rank_exact(&g.q_linear_matrix(&x));
        MetivierReport {
            verdict: MetivierVerdict::Counterexample {
                x: x.iter().map(crate::scalar::rat_to_f64).collect(),
                rank,
            },
            certified,
            trials,
            witness_exact: Some(x.iter().map(crate::scalar::rat_to_string).collect()),
        }
    };

    let certified = g.l() == 1;
    if certified {
        // Q(x, ·) = 0 exactly on ker(Q¹); rank < 1 cannot happen elsewhere.
        let kernel = kernel_exact(&g.q[0]);
        if let Some(v) = kernel.into_iter().next() {
            return Ok(counterexample(v, g, true, 0));
        }
    }

    // Structured candidates: basis vectors and pairwise combinations.
    let mut candidates: Vec<Vec<Rat>> = Vec::new();
    for j in 0..g.m() {
        let mut e = vec![rat_i(0); g.m()];
        e[j] = rat_i(1);
        candidates.push(e);
    }
    for j in 0..g.m() {
        for k in j + 1..g.m() {
            for sign in [1i64, -1] {
                let mut v = vec![rat_i(0); g.m()];
                v[j] = rat_i(1);
                v[k] = rat_i(sign);
                candidates.push(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x: Vec<Rat> = (0..g.m()).map(|_| rand_rat(&mut rng, 5, 3)).collect();
        if x.iter().all(Zero::is_zero) {
            continue;
        }
        candidates.push(x);
    }
    for x in candidates {
        if rank_exact(&g.q_linear_matrix(&x)) < g.l() {
            return Ok(counterexample(x, g, certified, trials));
        }
    }
    Ok(MetivierReport {
        verdict: MetivierVerdict::MetivierEvidence,
        certified,
        trials,
        witness_exact: None,
    })
}
