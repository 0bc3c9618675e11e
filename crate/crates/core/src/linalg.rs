//! Small dense linear algebra: exact routines over the rationals and a few
//! float helpers on top of nalgebra.

use crate::scalar::{rat_to_f64, Rat, Scalar};
use nalgebra::DMatrix;

/// Row-major matrix over an arbitrary scalar.
pub fn mat_mul<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Vec<Vec<S>> {
    let rows = a.len();
    let inner = if rows > 0 { a[0].len() } else { 0 };
    let cols = if b.is_empty() { 0 } else { b[0].len() };
    debug_assert_eq!(inner, b.len());
    let mut out = vec![vec![S::zero(); cols]; rows];
    for i in 0..rows {
        for k in 0..inner {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..cols {
                out[i][j] = out[i][j].add(&a[i][k].mul(&b[k][j]));
            }
        }
    }
    out
}

pub fn identity_mat<S: Scalar>(n: usize) -> Vec<Vec<S>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { S::one() } else { S::zero() })
                .collect()
        })
        .collect()
}

/// Exact rank via Gaussian elimination over ℚ.
pub fn rank_exact(matrix: &[Vec<Rat>]) -> usize {
    let mut m: Vec<Vec<Rat>> = matrix.to_vec();
    let rows = m.len();
    let cols = if rows > 0 { m[0].len() } else { 0 };
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = m[rank][col].clone();
        for r in rank + 1..rows {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &inv;
            for c in col..cols {
                let delta = &factor * &m[rank][c];
                m[r][c] = &m[r][c] - &delta;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Exact determinant of a square rational matrix.
pub fn det_exact(matrix: &[Vec<Rat>]) -> Rat {
    let n = matrix.len();
    assert!(matrix.iter().all(|r| r.len() == n), "square matrix required");
    let mut m: Vec<Vec<Rat>> = matrix.to_vec();
    let mut det = Rat::from_integer(1.into());
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return Rat::zero();
        };
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det *= m[col][col].clone();
        let inv = m[col][col].clone();
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &inv;
            for c in col..n {
                let delta = &factor * &m[col][c];
                m[r][c] = &m[r][c] - &delta;
            }
        }
    }
    det
}

/// Solve `A x = b` exactly. Returns `None` when `A` is singular.
pub fn solve_exact(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    assert!(a.iter().all(|r| r.len() == n) && b.len() == n);
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let inv = m[col][col].clone();
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &inv;
            for c in col..=n {
                let delta = &factor * &m[col][c];
                m[r][c] = &m[r][c] - &delta;
            }
        }
    }
    Some((0..n).map(|i| &m[i][n] / &m[i][i]).collect())
}

/// Exact inverse of a square rational matrix.
pub fn inverse_exact(a: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = a.len();
    let cols: Vec<Vec<Rat>> = (0..n)
        .map(|j| {
            let e: Vec<Rat> = (0..n)
                .map(|i| if i == j { Rat::from_integer(1.into()) } else { Rat::zero() })
                .collect();
            solve_exact(a, &e)
        })
        .collect::<Option<Vec<_>>>()?;
    // `cols[j]` is the j-th column of the inverse.
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

/// Basis of the kernel of a rational matrix (rows × cols acting on ℝ^cols).
pub fn kernel_exact(matrix: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    let rows = matrix.len();
    let cols = if rows > 0 { matrix[0].len() } else { 0 };
    let mut m: Vec<Vec<Rat>> = matrix.to_vec();
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = m[rank][col].clone();
        for c in 0..cols {
            m[rank][c] = &m[rank][c] / &inv;
        }
        for r in 0..rows {
            if r == rank || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone();
            for c in 0..cols {
                let delta = &factor * &m[rank][c];
                m[r][c] = &m[r][c] - &delta;
            }
        }
        pivot_cols.push(col);
        rank += 1;
        if rank == rows {
            break;
        }
    }
    let free_cols: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
    free_cols
        .into_iter()
        .map(|fc| {
            let mut v = vec![Rat::zero(); cols];
            v[fc] = Rat::from_integer(1.into());
            for (r, &pc) in pivot_cols.iter().enumerate() {
                v[pc] = -m[r][fc].clone();
            }
            v
        })
        .collect()
}

pub fn rat_mat_to_f64(m: &[Vec<Rat>]) -> Vec<Vec<f64>> {
    m.iter().map(|row| row.iter().map(rat_to_f64).collect()).collect()
}

pub fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = m.len();
    let cols = if rows > 0 { m[0].len() } else { 0 };
    DMatrix::from_fn(rows, cols, |i, j| m[i][j])
}

/// Singular values in descending order.
pub fn singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    if m.is_empty() || m[0].is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = to_dmatrix(m).singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Numeric rank: singular values below `sigma_max * rel_tol` count as zero.
pub fn numeric_rank(singular: &[f64], rel_tol: f64) -> usize {
    let sigma_max = singular.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return 0;
    }
    singular.iter().filter(|&&s| s > sigma_max * rel_tol).count()
}

/// Deterministic column-pivoted Gram–Schmidt: returns up to `max_rank`
/// column indices in selection order, preferring the largest residual norm
/// and breaking ties by lowest index.
pub fn pivoted_columns(m: &[Vec<f64>], max_rank: usize) -> Vec<usize> {
    let rows = m.len();
    let cols = if rows > 0 { m[0].len() } else { 0 };
    let mut residual: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect();
    let mut selected = Vec::new();
    for _ in 0..max_rank.min(cols) {
        let (best, best_norm) = residual
            .iter()
            .enumerate()
            .filter(|(j, _)| !selected.contains(j))
            .map(|(j, col)| (j, col.iter().map(|x| x * x).sum::<f64>()))
            .fold((usize::MAX, -1.0), |acc, (j, n)| if n > acc.1 { (j, n) } else { acc });
        if best == usize::MAX || best_norm <= 1e-300 {
            break;
        }
        selected.push(best);
        let q: Vec<f64> = residual[best].iter().map(|x| x / best_norm.sqrt()).collect();
        for j in 0..cols {
            if selected.contains(&j) {
                continue;
            }
            let dot: f64 = q.iter().zip(&residual[j]).map(|(a, b)| a * b).sum();
            for (r, qi) in residual[j].iter_mut().zip(&q) {
                *r -= dot * qi;
            }
        }
    }
    selected
}

/// Condition number (ratio of extreme singular values) of a float matrix.
pub fn condition_number(m: &[Vec<f64>]) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}
