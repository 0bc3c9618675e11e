//! Free Carnot group of step three and rank two on ℝ⁵, with horizontal
//! fields X₁ = ∂₁ − (x₂/2)∂₃ − ((x₁²+x₂²)/2)∂₅ and
//! X₂ = ∂₂ + (x₁/2)∂₃ + ((x₁²+x₂²)/2)∂₄.

use crate::scalar::{rat, Scalar};

pub const N: usize = 5;
pub const M: usize = 2;

fn half<S: Scalar>() -> S {
    S::from_rat(&rat(1, 2))
}

/// x·y = (x₁+y₁, x₂+y₂, x₃+y₃+½(x₁y₂−x₂y₁),
///        x₄+y₄+(y₂/2)(x₁²+x₂²+x₁y₁+x₂y₂) + x₁y₃,
///        x₅+y₅−(y₁/2)(x₁²+x₂²+x₁y₁+x₂y₂) + x₂y₃).
pub fn multiply<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    let h: S = half();
    let c1 = x[0].add(&y[0]);
    let c2 = x[1].add(&y[1]);
    let area = x[0].mul(&y[1]).sub(&x[1].mul(&y[0])).mul(&h);
    let c3 = x[2].add(&y[2]).add(&area);
    // x₁² + x₂² + x₁y₁ + x₂y₂
    let s = x[0]
        .mul(&x[0])
        .add(&x[1].mul(&x[1]))
        .add(&x[0].mul(&y[0]))
        .add(&x[1].mul(&y[1]));
    let c4 = x[3]
        .add(&y[3])
        .add(&y[1].mul(&h).mul(&s))
        .add(&x[0].mul(&y[2]));
    let c5 = x[4]
        .add(&y[4])
        .sub(&y[0].mul(&h).mul(&s))
        .add(&x[1].mul(&y[2]));
    vec![c1, c2, c3, c4, c5]
}

/// x⁻¹ = (−x₁, −x₂, −x₃, −x₄+x₁x₃, −x₅+x₂x₃).
pub fn inverse<S: Scalar>(x: &[S]) -> Vec<S> {
    vec![
        x[0].neg(),
        x[1].neg(),
        x[2].neg(),
        x[3].neg().add(&x[0].mul(&x[2])),
        x[4].neg().add(&x[1].mul(&x[2])),
    ]
}

/// exp(ξ₁X₁+ξ₂X₂) = (ξ₁, ξ₂, 0, (ξ₂/6)(ξ₁²+ξ₂²), −(ξ₁/6)(ξ₁²+ξ₂²)).
pub fn exp_horizontal<S: Scalar>(w: &[S]) -> Vec<S> {
    let sixth = S::from_rat(&rat(1, 6));
    let norm2 = w[0].mul(&w[0]).add(&w[1].mul(&w[1]));
    vec![
        w[0].clone(),
        w[1].clone(),
        S::zero(),
        w[1].mul(&norm2).mul(&sixth),
        w[0].mul(&norm2).mul(&sixth).neg(),
    ]
}

/// Time-one flow of ξ₁X₁+ξ₂X₂ from x, by direct integration of the driven
/// ODE (the ∂₃ drift is constant in s, the ∂₄/∂₅ drifts are quadratic).
pub fn flow<S: Scalar>(w: &[S], x: &[S]) -> Vec<S> {
    let h: S = half();
    let third = S::from_rat(&rat(1, 3));
    let c1 = x[0].add(&w[0]);
    let c2 = x[1].add(&w[1]);
    let area = w[1].mul(&x[0]).sub(&w[0].mul(&x[1])).mul(&h);
    let c3 = x[2].add(&area);
    // ∫₀¹ (x₁+sξ₁)² + (x₂+sξ₂)² ds
    let radial = x[0]
        .mul(&x[0])
        .add(&x[1].mul(&x[1]))
        .add(&x[0].mul(&w[0]).add(&x[1].mul(&w[1])))
        .add(&w[0].mul(&w[0]).add(&w[1].mul(&w[1])).mul(&third));
    let c4 = x[3].add(&w[1].mul(&h).mul(&radial));
    let c5 = x[4].sub(&w[0].mul(&h).mul(&radial));
    vec![c1, c2, c3, c4, c5]
}

pub fn horizontal_field<S: Scalar>(j: usize, x: &[S]) -> Vec<S> {
    let h: S = half();
    let radial = x[0].mul(&x[0]).add(&x[1].mul(&x[1])).mul(&h);
    if j == 0 {
        vec![
            S::one(),
            S::zero(),
            x[1].mul(&h).neg(),
            S::zero(),
            radial.neg(),
        ]
    } else {
        vec![S::zero(), S::one(), x[0].mul(&h), radial, S::zero()]
    }
}
