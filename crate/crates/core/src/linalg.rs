//! Thin helpers over `nalgebra` for the small dense systems used here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major design matrix.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DesignMatrix {
    pub fn with_capacity(rows: usize, cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::with_capacity(rows * cols),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::with_capacity(rows.len(), cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension("ragged design rows".into()));
            }
            m.push_row(r);
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `Σ w_i x_i x_iᵀ`.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let c = self.cols;
        let mut g = DMatrix::<f64>::zeros(c, c);
        for (row, &wi) in self.iter_rows().zip(w) {
            if wi == 0.0 {
                continue;
            }
            for a in 0..c {
                let va = wi * row[a];
                for b in 0..=a {
                    g[(a, b)] += va * row[b];
                }
            }
        }
        for a in 0..c {
            for b in 0..a {
                g[(b, a)] = g[(a, b)];
            }
        }
        g
    }

    /// `Σ w_i v_i x_i`.
    pub fn weighted_sum(&self, w: &[f64], v: &[f64]) -> DVector<f64> {
        let mut s = DVector::<f64>::zeros(self.cols);
        for ((row, &wi), &vi) in self.iter_rows().zip(w).zip(v) {
            let f = wi * vi;
            if f == 0.0 {
                continue;
            }
            for (a, x) in row.iter().enumerate() {
                s[a] += f * x;
            }
        }
        s
    }
}

/// Solves `A z = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    check_conditioning(a, what)?;
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what}: matrix is not positive definite")))?;
    Ok(chol.solve(b))
}

pub fn inverse_spd(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    check_conditioning(a, what)?;
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what}: matrix is not positive definite")))?;
    Ok(chol.inverse())
}

// Cholesky alone accepts numerically rank-deficient Gram matrices; reject
// reciprocal condition estimates below ~1e-13 of the largest eigenvalue.
fn check_conditioning(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 {
        return Err(Error::Singular(format!("{what}: empty system")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what}: non-finite entries")));
    }
    // scale to unit diagonal so the check is invariant to column units
    let d: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&v| v <= 0.0) {
        return Err(Error::Singular(format!("{what}: zero column in design")));
    }
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > max * 1e-13) {
        return Err(Error::Singular(format!("{what}: design is rank deficient")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let z = solve_spd(&a, &b, "t").unwrap();
        assert!((a * z - b).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let g = x.weighted_gram(&[1.0; 3]);
        assert!(matches!(
            solve_spd(&g, &DVector::zeros(2), "t"),
            Err(Error::Singular(_))
        ));
    }
}
