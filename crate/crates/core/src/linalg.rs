//! Dense LU solve with partial pivoting and one round of iterative
//! refinement — enough for the truncated-generator null-vector systems,
//! which are a few hundred unknowns at most.

use crate::{Error, Result};

/// Row-major dense matrix.
pub(crate) struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// LU factors of a permuted matrix.
pub(crate) struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

pub(crate) fn lu_factor(a: &DenseMatrix) -> Result<LuFactors> {
    let n = a.n;
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[col * n + col].abs();
        for row in (col + 1)..n {
            let v = lu[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val == 0.0 {
            return Err(Error::Numerical(format!(
                "singular matrix at pivot column {col}"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot_row * n + j);
            }
            perm.swap(col, pivot_row);
        }
        let pivot = lu[col * n + col];
        for row in (col + 1)..n {
            let factor = lu[row * n + col] / pivot;
            lu[row * n + col] = factor;
            if factor != 0.0 {
                for j in (col + 1)..n {
                    lu[row * n + j] -= factor * lu[col * n + j];
                }
            }
        }
    }
    Ok(LuFactors { n, lu, perm })
}

impl LuFactors {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        for i in 1..n {
            let row = &self.lu[i * n..i * n + i];
            let mut acc = x[i];
            for (l, xj) in row.iter().zip(&x) {
                acc -= l * xj;
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for (l, xj) in self.lu[i * n + i + 1..(i + 1) * n].iter().zip(&x[i + 1..]) {
                acc -= l * xj;
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = rhs` with one iterative refinement pass.
pub(crate) fn solve_refined(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let factors = lu_factor(a)?;
    let mut x = factors.solve(rhs);
    let ax = a.mul_vec(&x);
    let residual: Vec<f64> = ax.iter().zip(rhs).map(|(axi, ri)| axi - ri).collect();
    let correction = factors.solve(&residual);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi -= ci;
    }
    Ok(x)
}
