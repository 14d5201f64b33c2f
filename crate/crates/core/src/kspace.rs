//! The auxiliary Hilbert space K carrying the factored potential.
//!
//! For a finite-rank potential with terms gamma_i |phi_i><phi_i| the engine
//! works in scaled coordinates in which every quantity stays rational: the
//! coordinate vector of v f has entries |gamma_i| <phi_i, f>, and the inner
//! product on K becomes <x, y> = x^T Omega y with the diagonal Gram matrix
//! Omega = diag(1/|gamma_i|). Operators symmetric on K are then exactly
//! Omega-symmetric matrices. Subspace descents during the Laurent inversion
//! produce dense induced Gram matrices, so the Gram is kept general here.

use crate::matrix::QMat;
use crate::rational::Rational;
use num::{Signed, Zero};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KSpace {
    gram: QMat,
}

impl KSpace {
    /// Standard inner product (Gram = identity).
    pub fn standard(n: usize) -> Self {
        KSpace {
            gram: QMat::identity(n),
        }
    }

    /// Diagonal Gram matrix; weights must be positive.
    pub fn from_weights(weights: &[Rational]) -> Self {
        assert!(
            weights.iter().all(|w| w.is_positive()),
            "Gram weights must be positive"
        );
        KSpace {
            gram: QMat::diag(weights),
        }
    }

    /// General symmetric positive-definite Gram (checked for symmetry only;
    /// definiteness is guaranteed by construction at call sites).
    pub fn from_gram(gram: QMat) -> Self {
        assert!(gram.is_symmetric(), "Gram matrix must be symmetric");
        KSpace { gram }
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &QMat {
        &self.gram
    }

    pub fn inner(&self, x: &[Rational], y: &[Rational]) -> Rational {
        let gy = self.gram.mul_vec(y);
        x.iter()
            .zip(&gy)
            .fold(Rational::zero(), |acc, (a, b)| acc + a * b)
    }

    pub fn norm2(&self, x: &[Rational]) -> Rational {
        self.inner(x, x)
    }

    /// Whether the matrix represents a symmetric operator on this space:
    /// Omega A = A^T Omega.
    pub fn is_operator_symmetric(&self, a: &QMat) -> bool {
        self.gram.mul(a) == a.transpose().mul(&self.gram)
    }

    /// Rank-one operator |x><y|: z -> x <y, z>.
    pub fn rank_one(&self, x: &[Rational], y: &[Rational]) -> QMat {
        QMat::outer(x, &self.gram.mul_vec(y))
    }

    /// Gram-Schmidt in input order; returns orthogonal (unnormalized)
    /// vectors with their squared norms. Dependent inputs are dropped.
    pub fn gram_schmidt(&self, basis: &[Vec<Rational>]) -> Vec<(Vec<Rational>, Rational)> {
        let mut out: Vec<(Vec<Rational>, Rational)> = vec![];
        for v in basis {
            let mut w = v.clone();
            for (u, n2) in &out {
                let c = self.inner(u, &w) / n2;
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= &c * ui;
                }
            }
            let n2 = self.norm2(&w);
            if !n2.is_zero() {
                out.push((w, n2));
            }
        }
        out
    }

    /// Orthogonal projection onto the span of `basis`:
    /// P = B (B^T Omega B)^-1 B^T Omega.
    pub fn projection_onto_span(&self, basis: &[Vec<Rational>]) -> QMat {
        if basis.is_empty() {
            return QMat::zeros(self.dim(), self.dim());
        }
        let b = QMat::from_cols(basis);
        let bt_om = b.transpose().mul(&self.gram);
        let small = bt_om.mul(&b);
        let inv = small
            .inverse()
            .expect("projection basis must be linearly independent");
        b.mul(&inv).mul(&bt_om)
    }

    /// Coordinates of the orthogonal projection onto span(basis):
    /// returns (C, induced) where C y = (B^T Omega B)^-1 B^T Omega y are the
    /// subspace coordinates and `induced` is K restricted to the span with
    /// Gram B^T Omega B.
    pub fn restriction(&self, basis: &[Vec<Rational>]) -> (QMat, KSpace) {
        let b = QMat::from_cols(basis);
        let bt_om = b.transpose().mul(&self.gram);
        let small = bt_om.mul(&b);
        let inv = small
            .inverse()
            .expect("restriction basis must be linearly independent");
        (inv.mul(&bt_om), KSpace::from_gram(small))
    }
}
