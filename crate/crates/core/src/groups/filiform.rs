//! Filiform Carnot groups of the first type: coordinates (x, y, t₁, …, t_p)
//! on ℝ^{p+2}, step p+1, generated by X = ∂_x and
//! Y = ∂_y + Σ_k (x^k/k!) ∂_{t_k}. Coordinates are the matrix-entry
//! coordinates of the lower-triangular representation, so the group law is
//! the matrix product.

use crate::error::{CarnotError, Result};
use crate::scalar::{rat_i, Rat, Scalar};
use num_traits::{One, Zero};

#[derive(Clone, Debug, PartialEq)]
pub struct FiliformGroup {
    p: usize,
    /// inv_fact[k] = 1/k!
    inv_fact: Vec<Rat>,
}

impl FiliformGroup {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(CarnotError::InvalidDescriptor(
                "filiform parameter p must be >= 1".into(),
            ));
        }
        let mut inv_fact = Vec::with_capacity(p + 2);
        let mut fact = rat_i(1);
        inv_fact.push(rat_i(1));
        for k in 1..=p + 1 {
            fact *= rat_i(k as i64);
            inv_fact.push(rat_i(1) / fact.clone());
        }
        Ok(FiliformGroup { p, inv_fact })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.p + 2
    }

    fn inv_fact(&self, k: usize) -> &Rat {
        &self.inv_fact[k]
    }

    fn powers<S: Scalar>(&self, x: &S, up_to: usize) -> Vec<S> {
        let mut pow = Vec::with_capacity(up_to + 1);
        pow.push(S::one());
        for _ in 0..up_to {
            pow.push(pow.last().unwrap().mul(x));
        }
        pow
    }

    /// Group law: t′_k = t_k + τ_k + (x^k/k!) η + Σ_{j<k} (x^{k−j}/(k−j)!) τ_j.
    pub fn multiply<S: Scalar>(&self, a: &[S], b: &[S]) -> Vec<S> {
        let p = self.p;
        let xpow = self.powers(&a[0], p);
        let mut out = Vec::with_capacity(p + 2);
        out.push(a[0].add(&b[0]));
        out.push(a[1].add(&b[1]));
        for k in 1..=p {
            let mut t = a[k + 1].add(&b[k + 1]);
            t = t.add(&xpow[k].mul(&b[1]).scale(self.inv_fact(k)));
            for j in 1..k {
                t = t.add(&xpow[k - j].mul(&b[j + 1]).scale(self.inv_fact(k - j)));
            }
            out.push(t);
        }
        out
    }

    pub fn inverse<S: Scalar>(&self, a: &[S]) -> Vec<S> {
        let p = self.p;
        let xpow = self.powers(&a[0], p);
        let mut out = Vec::with_capacity(p + 2);
        out.push(a[0].neg());
        out.push(a[1].neg());
        for k in 1..=p {
            let mut tau = a[k + 1].neg().add(&xpow[k].mul(&a[1]).scale(self.inv_fact(k)));
            for j in 1..k {
                let prev: &S = &out[j + 1];
                tau = tau.sub(&xpow[k - j].mul(prev).scale(self.inv_fact(k - j)));
            }
            out.push(tau);
        }
        out
    }

    /// exp(ξX + ηY) = (ξ, η, ηξ/2, ηξ²/3!, …, ηξ^p/(p+1)!).
    pub fn exp_horizontal<S: Scalar>(&self, w: &[S]) -> Vec<S> {
        let (xi, eta) = (&w[0], &w[1]);
        let xpow = self.powers(xi, self.p);
        let mut out = Vec::with_capacity(self.p + 2);
        out.push(xi.clone());
        out.push(eta.clone());
        for k in 1..=self.p {
            out.push(eta.mul(&xpow[k]).scale(self.inv_fact(k + 1)));
        }
        out
    }

    /// Time-one flow of uX + vY from (x, y, t):
    /// t_k ← t_k + v ∫₀¹ (x + su)^k / k! ds, expanded binomially so the
    /// formula is polynomial (valid at u = 0).
    pub fn flow<S: Scalar>(&self, w: &[S], point: &[S]) -> Vec<S> {
        let (u, v) = (&w[0], &w[1]);
        let xpow = self.powers(&point[0], self.p);
        let upow = self.powers(u, self.p);
        let mut out = Vec::with_capacity(self.p + 2);
        out.push(point[0].add(u));
        out.push(point[1].add(v));
        for k in 1..=self.p {
            // ∫₀¹ (x+su)^k/k! ds = Σ_i x^{k−i} u^i / ((k−i)!·(i+1)!)
            let mut integral = S::zero();
            for i in 0..=k {
                let coeff = self.inv_fact(k - i) * self.inv_fact(i + 1);
                integral = integral.add(&xpow[k - i].mul(&upow[i]).scale(&coeff));
            }
            out.push(point[k + 1].add(&v.mul(&integral)));
        }
        out
    }

    /// j = 0 gives X = ∂_x, j = 1 gives Y = ∂_y + Σ_k (x^k/k!) ∂_{t_k}.
    pub fn horizontal_field<S: Scalar>(&self, j: usize, point: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n()];
        if j == 0 {
            out[0] = S::one();
        } else {
            out[1] = S::one();
            let xpow = self.powers(&point[0], self.p);
            for k in 1..=self.p {
                out[k + 1] = xpow[k].scale(self.inv_fact(k));
            }
        }
        out
    }

    /// Lower-triangular (p+2)×(p+2) matrix of the representation. The group
    /// law is the matrix product under this identification.
    pub fn matrix_rep<S: Scalar>(&self, a: &[S]) -> Vec<Vec<S>> {
        let p = self.p;
        let n = p + 2;
        let xpow = self.powers(&a[0], p);
        let mut m = vec![vec![S::zero(); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = S::one();
        }
        m[1][0] = a[1].clone();
        for k in 1..=p {
            m[k + 1][0] = a[k + 1].clone();
            for j in 1..=k {
                m[k + 1][j] = xpow[k - j + 1].scale(self.inv_fact(k - j + 1));
            }
        }
        m
    }

    /// Recover coordinates from a representation matrix, rejecting anything
    /// that does not match the template (unit diagonal, zero upper triangle,
    /// Pascal-like x-power columns).
    pub fn matrix_rep_inverse(&self, m: &[Vec<Rat>]) -> Result<Vec<Rat>> {
        let p = self.p;
        let n = p + 2;
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            return Err(CarnotError::MatrixTemplate(format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if !<Rat as One>::is_one(&m[i][i]) {
                return Err(CarnotError::MatrixTemplate(format!("diagonal entry ({i},{i}) is not 1")));
            }
            for j in i + 1..n {
                if !Zero::is_zero(&m[i][j]) {
                    return Err(CarnotError::MatrixTemplate(format!(
                        "upper-triangular entry ({i},{j}) is not 0"
                    )));
                }
            }
        }
        let x = m[2][1].clone();
        let y = m[1][0].clone();
        let mut coords = vec![x.clone(), y];
        for k in 1..=p {
            coords.push(m[k + 1][0].clone());
        }
        let expected = self.matrix_rep(&coords);
        for i in 0..n {
            for j in 0..n {
                if expected[i][j] != m[i][j] {
                    return Err(CarnotError::MatrixTemplate(format!(
                        "entry ({i},{j}) does not match the x-power template"
                    )));
                }
            }
        }
        Ok(coords)
    }
}
