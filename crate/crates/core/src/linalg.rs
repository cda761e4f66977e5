//! Small dense linear algebra: the systems here are at most a few dozen
//! rows, so plain row-major storage and textbook elimination suffice.

use std::ops::{Index, IndexMut};

/// Relative pivot threshold: pivots below this times the matrix max-abs
/// entry are treated as zero.
pub const PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[&[f64]]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Matrix::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "ragged columns");
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Row echelon form from complete (row and column) pivoting.
struct Echelon {
    reduced: Matrix,
    /// `col_perm[k]` is the original column sitting at position `k`.
    col_perm: Vec<usize>,
    rank: usize,
}

fn echelon(a: &Matrix) -> Echelon {
    let mut m = a.clone();
    let mut col_perm: Vec<usize> = (0..m.cols).collect();
    let threshold = PIVOT_RTOL * a.max_abs();
    let mut rank = 0;
    let steps = m.rows.min(m.cols);
    for k in 0..steps {
        let mut best = (k, k, 0.0f64);
        for i in k..m.rows {
            for j in k..m.cols {
                let v = m[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= threshold || best.2 == 0.0 {
            break;
        }
        m.swap_rows(k, best.0);
        m.swap_cols(k, best.1);
        col_perm.swap(k, best.1);
        let pivot = m[(k, k)];
        for i in k + 1..m.rows {
            let factor = m[(i, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[(i, k)] = 0.0;
            for j in k + 1..m.cols {
                let delta = factor * m[(k, j)];
                m[(i, j)] -= delta;
            }
        }
        rank += 1;
    }
    Echelon {
        reduced: m,
        col_perm,
        rank,
    }
}

/// Numerical rank using complete pivoting with [`PIVOT_RTOL`].
pub fn rank(a: &Matrix) -> usize {
    echelon(a).rank
}

/// A nonzero `x` with `a x ≈ 0`, or `None` when `a` has full column rank.
///
/// The first free column (in pivot order) gets coefficient 1; the result is
/// scaled so its largest entry has magnitude 1.
pub fn null_vector(a: &Matrix) -> Option<Vec<f64>> {
    let Echelon {
        reduced,
        col_perm,
        rank,
    } = echelon(a);
    if rank >= a.cols {
        return None;
    }
    let mut y = vec![0.0; a.cols];
    y[rank] = 1.0;
    for k in (0..rank).rev() {
        let mut s = 0.0;
        for j in k + 1..=rank {
            s += reduced[(k, j)] * y[j];
        }
        y[k] = -s / reduced[(k, k)];
    }
    let mut x = vec![0.0; a.cols];
    for (pos, &orig) in col_perm.iter().enumerate() {
        x[orig] = y[pos];
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= scale);
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is numerically singular (pivot {pivot:e} at step {step})")]
pub struct Singular {
    pub step: usize,
    pub pivot: f64,
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    norm1: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu, Singular> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let threshold = PIVOT_RTOL * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pv <= threshold || pv == 0.0 {
                return Err(Singular { step: k, pivot: pv });
            }
            lu.swap_rows(k, p);
            perm.swap(k, p);
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let delta = factor * lu[(k, j)];
                    lu[(i, j)] -= delta;
                }
            }
        }
        Ok(Lu { lu, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    /// 1-norm condition number, computed from the explicit inverse.
    pub fn condition(&self) -> f64 {
        let n = self.dim();
        let mut inv_norm1 = 0.0f64;
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv_norm1 = inv_norm1.max(col.iter().map(|v| v.abs()).sum());
        }
        self.norm1 * inv_norm1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_affine_dependence() {
        // Points -1, 0, 1 with a row of ones: dependence (1, -2, 1).
        let a = Matrix::from_columns(&[&[-1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let x = null_vector(&a).unwrap();
        let r = a.mul_vec(&x);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        assert!((x[0] - x[2]).abs() < 1e-15);
        assert!((x[1] + 2.0 * x[0]).abs() < 1e-15);
    }

    #[test]
    fn full_rank_has_no_null_vector() {
        let a = Matrix::from_columns(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(null_vector(&a).is_none());
        assert_eq!(rank(&a), 2);
    }

    #[test]
    fn rank_detects_collinear_columns() {
        let a = Matrix::from_columns(&[&[1.0, 2.0], &[2.0, 4.0], &[-3.0, -6.0]]);
        assert_eq!(rank(&a), 1);
        let x = null_vector(&a).unwrap();
        assert!(a.mul_vec(&x).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn lu_solves_and_estimates_condition() {
        let a = Matrix::from_columns(&[&[4.0, 2.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 5.0]]);
        let lu = Lu::factor(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = lu.solve(&b);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(b) {
            assert!((ri - bi).abs() < 1e-14);
        }
        let c = lu.condition();
        assert!((1.0..10.0).contains(&c));
        let id = Matrix::from_columns(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(Lu::factor(&id).unwrap().condition(), 1.0);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Matrix::from_columns(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(Lu::factor(&a).is_err());
    }
}
