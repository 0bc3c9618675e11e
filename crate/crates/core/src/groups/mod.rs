//! The three Carnot group families and the operations shared across them.
//!
//! Points are flat coordinate vectors of length `n`, logically partitioned
//! by layer; horizontal vectors have length `m`. All operations are generic
//! over the scalar, so the same law runs exactly over ℚ, over `f64`, and
//! over jets when differentials are needed.

pub mod filiform;
pub mod free32;
pub mod steptwo;

use crate::error::{CarnotError, Result};
use crate::scalar::{parse_rat, rat_to_f64, rat_to_string, Rat, Scalar};
use serde::{Deserialize, Serialize};

pub use filiform::FiliformGroup;
pub use steptwo::{metivier_check, MetivierReport, MetivierVerdict, StepTwoGroup};

#[derive(Clone, Debug, PartialEq)]
pub enum GroupDescriptor {
    StepTwo(StepTwoGroup),
    Filiform(FiliformGroup),
    Free32,
}

impl GroupDescriptor {
    pub fn heisenberg() -> Self {
        GroupDescriptor::StepTwo(StepTwoGroup::heisenberg())
    }

    pub fn filiform(p: usize) -> Result<Self> {
        Ok(GroupDescriptor::Filiform(FiliformGroup::new(p)?))
    }

    pub fn free32() -> Self {
        GroupDescriptor::Free32
    }

    /// Horizontal dimension m.
    pub fn m(&self) -> usize {
        match self {
            GroupDescriptor::StepTwo(g) => g.m(),
            GroupDescriptor::Filiform(_) => 2,
            GroupDescriptor::Free32 => free32::M,
        }
    }

    /// Ambient dimension n.
    pub fn n(&self) -> usize {
        match self {
            GroupDescriptor::StepTwo(g) => g.n(),
            GroupDescriptor::Filiform(g) => g.n(),
            GroupDescriptor::Free32 => free32::N,
        }
    }

    /// Nilpotency step s.
    pub fn step(&self) -> usize {
        match self {
            GroupDescriptor::StepTwo(_) => 2,
            GroupDescriptor::Filiform(g) => g.p() + 1,
            GroupDescriptor::Free32 => 3,
        }
    }

    /// Dimensions of the layers V₁, …, V_s.
    pub fn layer_dims(&self) -> Vec<usize> {
        match self {
            GroupDescriptor::StepTwo(g) => vec![g.m(), g.l()],
            GroupDescriptor::Filiform(g) => {
                let mut dims = vec![2];
                dims.extend(std::iter::repeat(1).take(g.p()));
                dims
            }
            GroupDescriptor::Free32 => vec![2, 1, 2],
        }
    }

    /// Homogeneous weight of every coordinate (layer index, 1-based).
    pub fn weights(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.n());
        for (layer, dim) in self.layer_dims().into_iter().enumerate() {
            w.extend(std::iter::repeat(layer + 1).take(dim));
        }
        w
    }

    pub fn identity<S: Scalar>(&self) -> Vec<S> {
        vec![S::zero(); self.n()]
    }

    fn check_point<S>(&self, a: &[S]) -> Result<()> {
        if a.len() != self.n() {
            return Err(CarnotError::DimensionMismatch {
                expected: self.n(),
                got: a.len(),
            });
        }
        Ok(())
    }

    fn check_horizontal<S>(&self, w: &[S]) -> Result<()> {
        if w.len() != self.m() {
            return Err(CarnotError::DimensionMismatch {
                expected: self.m(),
                got: w.len(),
            });
        }
        Ok(())
    }

    pub fn multiply<S: Scalar>(&self, a: &[S], b: &[S]) -> Result<Vec<S>> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(match self {
            GroupDescriptor::StepTwo(g) => g.multiply(a, b),
            GroupDescriptor::Filiform(g) => g.multiply(a, b),
            GroupDescriptor::Free32 => free32::multiply(a, b),
        })
    }

    pub fn inverse<S: Scalar>(&self, a: &[S]) -> Result<Vec<S>> {
        self.check_point(a)?;
        Ok(match self {
            GroupDescriptor::StepTwo(g) => g.inverse(a),
            GroupDescriptor::Filiform(g) => g.inverse(a),
            GroupDescriptor::Free32 => free32::inverse(a),
        })
    }

    /// δ_λ scales layer k by λ^k and is a group automorphism.
    pub fn dilate<S: Scalar>(&self, lambda: &S, a: &[S]) -> Result<Vec<S>> {
        self.check_point(a)?;
        if lambda.positivity() == Some(false) {
            return Err(CarnotError::NonPositiveDilation);
        }
        let weights = self.weights();
        let mut factor = vec![S::one(); self.step() + 1];
        for k in 1..factor.len() {
            factor[k] = factor[k - 1].mul(lambda);
        }
        Ok(a.iter()
            .zip(weights)
            .map(|(c, w)| c.mul(&factor[w]))
            .collect())
    }

    /// exp(w·X) via the family's closed form.
    pub fn exp_horizontal<S: Scalar>(&self, w: &[S]) -> Result<Vec<S>> {
        self.check_horizontal(w)?;
        Ok(match self {
            GroupDescriptor::StepTwo(g) => g.exp_horizontal(w),
            GroupDescriptor::Filiform(g) => g.exp_horizontal(w),
            GroupDescriptor::Free32 => free32::exp_horizontal(w),
        })
    }

    /// Time-one flow e^{w·X}(x), integrated per family; equals
    /// multiply(x, exp_horizontal(w)) by left invariance.
    pub fn flow<S: Scalar>(&self, w: &[S], x: &[S]) -> Result<Vec<S>> {
        self.check_horizontal(w)?;
        self.check_point(x)?;
        Ok(match self {
            GroupDescriptor::StepTwo(g) => g.flow(w, x),
            GroupDescriptor::Filiform(g) => g.flow(w, x),
            GroupDescriptor::Free32 => free32::flow(w, x),
        })
    }

    /// Value of the left-invariant field X_j at x (0-based j).
    pub fn horizontal_field<S: Scalar>(&self, j: usize, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x)?;
        if j >= self.m() {
            return Err(CarnotError::IndexOutOfRange { index: j, m: self.m() });
        }
        Ok(match self {
            GroupDescriptor::StepTwo(g) => g.horizontal_field(j, x),
            GroupDescriptor::Filiform(g) => g.horizontal_field(j, x),
            GroupDescriptor::Free32 => free32::horizontal_field(j, x),
        })
    }

    /// Combination Σ_j w_j X_j(x) of the horizontal fields.
    pub fn horizontal_combination<S: Scalar>(&self, w: &[S], x: &[S]) -> Result<Vec<S>> {
        self.check_horizontal(w)?;
        let mut out = vec![S::zero(); self.n()];
        for (j, wj) in w.iter().enumerate() {
            if wj.is_zero() {
                continue;
            }
            let field = self.horizontal_field(j, x)?;
            for (o, f) in out.iter_mut().zip(field) {
                *o = o.add(&wj.mul(&f));
            }
        }
        Ok(out)
    }
}

/// Serialized point with a numeric-mode tag; exact rationals appear as
/// "num/den" strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PointJson {
    Exact { coords: Vec<String> },
    Float { coords: Vec<f64> },
}

impl PointJson {
    pub fn from_exact(coords: &[Rat]) -> Self {
        PointJson::Exact {
            coords: coords.iter().map(rat_to_string).collect(),
        }
    }

    pub fn from_float(coords: &[f64]) -> Self {
        PointJson::Float { coords: coords.to_vec() }
    }

    pub fn to_exact(&self) -> Result<Vec<Rat>> {
        match self {
            PointJson::Exact { coords } => coords
                .iter()
                .map(|s| parse_rat(s).map_err(CarnotError::Parse))
                .collect(),
            PointJson::Float { coords } => {
                Ok(coords.iter().map(|&x| crate::scalar::f64_to_rat(x)).collect())
            }
        }
    }

    pub fn to_float(&self) -> Result<Vec<f64>> {
        match self {
            PointJson::Exact { coords } => coords
                .iter()
                .map(|s| parse_rat(s).map(|q| rat_to_f64(&q)).map_err(CarnotError::Parse))
                .collect(),
            PointJson::Float { coords } => Ok(coords.clone()),
        }
    }
}

/// Q entry in descriptor files: integer, float, or "num/den" string.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QEntry {
    Int(i64),
    Float(f64),
    Str(String),
}

impl QEntry {
    fn to_rat(&self) -> Result<Rat> {
        match self {
            QEntry::Int(n) => Ok(crate::scalar::rat_i(*n)),
            QEntry::Float(x) => Ok(crate::scalar::f64_to_rat(*x)),
            QEntry::Str(s) => parse_rat(s).map_err(CarnotError::Parse),
        }
    }

    fn from_rat(q: &Rat) -> Self {
        use num_traits::ToPrimitive;
        if q.is_integer() {
            if let Some(n) = q.numer().to_i64() {
                return QEntry::Int(n);
            }
        }
        QEntry::Str(rat_to_string(q))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family")]
enum DescriptorJson {
    #[serde(rename = "step-two")]
    StepTwo {
        m: usize,
        l: usize,
        #[serde(rename = "Q")]
        q: Vec<Vec<Vec<QEntry>>>,
    },
    #[serde(rename = "filiform")]
    Filiform { p: usize },
    #[serde(rename = "free-3-2")]
    Free32,
}

impl Serialize for GroupDescriptor {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let json = match self {
            GroupDescriptor::StepTwo(g) => DescriptorJson::StepTwo {
                m: g.m(),
                l: g.l(),
                q: (0..g.l())
                    .map(|alpha| {
                        (0..g.m())
                            .map(|j| {
                                (0..g.m())
                                    .map(|k| QEntry::from_rat(g.q_coeff(alpha, j, k)))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            },
            GroupDescriptor::Filiform(g) => DescriptorJson::Filiform { p: g.p() },
            GroupDescriptor::Free32 => DescriptorJson::Free32,
        };
        json.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GroupDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let json = DescriptorJson::deserialize(deserializer)?;
        match json {
            DescriptorJson::StepTwo { m, l, q } => {
                let q: Result<Vec<Vec<Vec<Rat>>>> = q
                    .iter()
                    .map(|qa| {
                        qa.iter()
                            .map(|row| row.iter().map(QEntry::to_rat).collect())
                            .collect()
                    })
                    .collect();
                let g = StepTwoGroup::new(m, l, q.map_err(D::Error::custom)?)
                    .map_err(D::Error::custom)?;
                Ok(GroupDescriptor::StepTwo(g))
            }
            DescriptorJson::Filiform { p } => {
                Ok(GroupDescriptor::Filiform(FiliformGroup::new(p).map_err(D::Error::custom)?))
            }
            DescriptorJson::Free32 => Ok(GroupDescriptor::Free32),
        }
    }
}

/// Parse the CLI shorthand: `heisenberg`, `filiform:p`, `free32`, or
/// `step2:@file.json`.
pub fn parse_group_shorthand(s: &str) -> Result<GroupDescriptor> {
    match s {
        "heisenberg" => Ok(GroupDescriptor::heisenberg()),
        "free32" | "free-3-2" => Ok(GroupDescriptor::Free32),
        _ => {
            if let Some(p) = s.strip_prefix("filiform:") {
                let p: usize = p
                    .parse()
                    .map_err(|e| CarnotError::Parse(format!("bad filiform parameter: {e}")))?;
                return GroupDescriptor::filiform(p);
            }
            if let Some(path) = s.strip_prefix("step2:@") {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CarnotError::Parse(format!("cannot read {path}: {e}")))?;
                let g: GroupDescriptor = serde_json::from_str(&text)
                    .map_err(|e| CarnotError::Parse(format!("bad descriptor in {path}: {e}")))?;
                return Ok(g);
            }
            if let Some(path) = s.strip_prefix('@') {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CarnotError::Parse(format!("cannot read {path}: {e}")))?;
                return serde_json::from_str(&text)
                    .map_err(|e| CarnotError::Parse(format!("bad descriptor in {path}: {e}")));
            }
            Err(CarnotError::Parse(format!(
                "unknown group {s:?}; expected heisenberg, filiform:p, free32 or step2:@file.json"
            )))
        }
    }
}
