//! Small dense matrices over exact rationals.
//!
//! Dimensions here are the rank of the potential (a handful), so simple
//! dense algorithms are the right tool. The nullspace uses fraction-free
//! (Bareiss) forward elimination on denominator-cleared integer rows, which
//! keeps intermediate entries from exploding.

use crate::rational::{int, Rational};
use num::bigint::BigInt;
use num::{Integer, One, Zero};
use std::fmt;

#[derive(Clone, PartialEq, Eq)]
pub struct QMat {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = QMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        QMat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn diag(entries: &[Rational]) -> Self {
        let mut m = QMat::zeros(entries.len(), entries.len());
        for (i, e) in entries.iter().enumerate() {
            m[(i, i)] = e.clone();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &QMat) -> QMat {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> QMat {
        self.scale(&int(-1))
    }

    pub fn scale(&self, c: &Rational) -> QMat {
        QMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn mul(&self, other: &QMat) -> QMat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = QMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let t = a * &other[(k, j)];
                    out[(i, j)] += t;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Rational::zero(), |acc, (a, x)| acc + a * x)
            })
            .collect()
    }

    pub fn transpose(&self) -> QMat {
        let mut out = QMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// x y^T
    pub fn outer(x: &[Rational], y: &[Rational]) -> QMat {
        let mut out = QMat::zeros(x.len(), y.len());
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                out[(i, j)] = a * b;
            }
        }
        out
    }

    /// Columns assembled from vectors.
    pub fn from_cols(cols: &[Vec<Rational>]) -> QMat {
        let c = cols.len();
        let r = cols.first().map_or(0, |v| v.len());
        let mut out = QMat::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), r, "ragged columns");
            for (i, v) in col.iter().enumerate() {
                out[(i, j)] = v.clone();
            }
        }
        out
    }

    pub fn col(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.is_zero())
    }

    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self[(i, j)] != self[(j, i)] {
                    return false;
                }
            }
        }
        true
    }

    /// Exact inverse by Gauss-Jordan elimination, or `None` if singular.
    pub fn inverse(&self) -> Option<QMat> {
        assert!(self.is_square(), "inverse needs a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = QMat::identity(n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| !a[(r, col)].is_zero())?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = a[(col, col)].clone();
            for j in 0..n {
                a[(col, j)] /= &p;
                inv[(col, j)] /= &p;
            }
            for r in 0..n {
                if r == col || a[(r, col)].is_zero() {
                    continue;
                }
                let factor = a[(r, col)].clone();
                for j in 0..n {
                    let t = &factor * &a[(col, j)];
                    a[(r, j)] -= t;
                    let t = &factor * &inv[(col, j)];
                    inv[(r, j)] -= t;
                }
            }
        }
        Some(inv)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    /// Exact basis of the nullspace.
    ///
    /// Forward elimination is fraction-free (Bareiss) on integer rows
    /// obtained by clearing denominators; back-substitution then produces
    /// one rational basis vector per free column.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let (rows, cols) = (self.rows, self.cols);
        // clear denominators row by row
        let mut a: Vec<Vec<BigInt>> = (0..rows)
            .map(|i| {
                let lcm = self
                    .row(i)
                    .iter()
                    .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
                self.row(i)
                    .iter()
                    .map(|x| x.numer() * (&lcm / x.denom()))
                    .collect()
            })
            .collect();

        let mut pivot_cols: Vec<usize> = vec![];
        let mut prev = BigInt::one();
        let mut rank = 0usize;
        for col in 0..cols {
            let Some(p) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
                continue;
            };
            a.swap(rank, p);
            for r in (rank + 1)..rows {
                for c in (col + 1)..cols {
                    let num = &a[rank][col] * &a[r][c] - &a[r][col] * &a[rank][c];
                    a[r][c] = num / &prev; // exact by Bareiss
                }
                a[r][col] = BigInt::zero();
            }
            prev = a[rank][col].clone();
            pivot_cols.push(col);
            rank += 1;
            if rank == rows {
                break;
            }
        }

        let free_cols: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
        let mut basis = Vec::with_capacity(free_cols.len());
        for &fc in &free_cols {
            let mut x = vec![Rational::zero(); cols];
            x[fc] = Rational::one();
            // back-substitute through pivot rows in reverse
            for (r, &pc) in pivot_cols.iter().enumerate().rev() {
                let mut s = Rational::zero();
                for c in (pc + 1)..cols {
                    if !a[r][c].is_zero() {
                        s += Rational::from_integer(a[r][c].clone()) * &x[c];
                    }
                }
                x[pc] = -s / Rational::from_integer(a[r][pc].clone());
            }
            basis.push(x);
        }
        basis
    }
}

impl std::ops::Index<(usize, usize)> for QMat {
    type Output = Rational;
    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for QMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}
