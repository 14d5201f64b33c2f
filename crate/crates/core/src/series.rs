//! Truncated power series and Laurent series with exact matrix coefficients.
//!
//! A [`MatrixSeries`] is M(kappa) = M_0 + kappa M_1 + ... + kappa^q M_q,
//! exact through its stored order. A [`LaurentMatrixSeries`] additionally
//! allows negative lowest power (never below -2 in this crate; the
//! inversion enforces that) and tracks through which power its
//! coefficients are trustworthy, so that chained products propagate
//! truncation validity instead of silently degrading.

use crate::kspace::KSpace;
use crate::matrix::QMat;
use crate::rational::Rational;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("leading coefficient is singular; Neumann inversion does not apply")]
    SingularLeading,
    #[error("series order {have} is insufficient: need at least order {need}")]
    InsufficientOrder { have: usize, need: usize },
}

/// Power series in kappa with exact matrix coefficients, truncated at and
/// exact through `order() = coeffs.len() - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSeries {
    coeffs: Vec<QMat>,
    space: KSpace,
}

impl MatrixSeries {
    /// Public constructor: coefficients must be square, of the space's
    /// dimension, and symmetric with respect to the space's inner product.
    pub fn new(coeffs: Vec<QMat>, space: KSpace) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least one coefficient");
        for c in &coeffs {
            assert!(
                c.nrows() == space.dim() && c.ncols() == space.dim(),
                "coefficient dimension mismatch"
            );
            assert!(
                space.is_operator_symmetric(c),
                "series coefficients must be symmetric on K"
            );
        }
        MatrixSeries { coeffs, space }
    }

    /// Internal constructor for intermediate (not necessarily symmetric)
    /// series arising inside products.
    fn from_raw(coeffs: Vec<QMat>, space: KSpace) -> Self {
        MatrixSeries { coeffs, space }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &KSpace {
        &self.space
    }

    pub fn coeff(&self, j: usize) -> QMat {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(|| QMat::zeros(self.dim(), self.dim()))
    }

    pub fn coeffs(&self) -> &[QMat] {
        &self.coeffs
    }

    pub fn truncate(&self, order: usize) -> MatrixSeries {
        let mut coeffs = self.coeffs.clone();
        coeffs.truncate(order + 1);
        MatrixSeries::from_raw(coeffs, self.space.clone())
    }

    pub fn add(&self, other: &MatrixSeries) -> MatrixSeries {
        let n = self.coeffs.len().min(other.coeffs.len());
        let coeffs = (0..n)
            .map(|j| self.coeffs[j].add(&other.coeffs[j]))
            .collect();
        MatrixSeries::from_raw(coeffs, self.space.clone())
    }

    pub fn add_constant(&self, c: &QMat) -> MatrixSeries {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = coeffs[0].add(c);
        MatrixSeries::from_raw(coeffs, self.space.clone())
    }

    pub fn neg(&self) -> MatrixSeries {
        let coeffs = self.coeffs.iter().map(|c| c.neg()).collect();
        MatrixSeries::from_raw(coeffs, self.space.clone())
    }

    /// Truncated product, exact through the smaller of the two orders.
    pub fn mul(&self, other: &MatrixSeries) -> MatrixSeries {
        let order = self.order().min(other.order());
        let dim = self.dim();
        let mut coeffs = vec![QMat::zeros(dim, dim); order + 1];
        for t in 0..=order {
            for a in 0..=t {
                let (ca, cb) = (&self.coeffs[a], &other.coeffs[t - a]);
                if ca.is_zero() || cb.is_zero() {
                    continue;
                }
                coeffs[t] = coeffs[t].add(&ca.mul(cb));
            }
        }
        MatrixSeries::from_raw(coeffs, self.space.clone())
    }

    /// S * M_j * S for every coefficient.
    pub fn sandwich(&self, s: &QMat) -> MatrixSeries {
        MatrixSeries::from_raw(
            self.coeffs.iter().map(|c| s.mul(c).mul(s)).collect(),
            self.space.clone(),
        )
    }

    /// L * M_j * R for every coefficient, landing in `space`.
    pub fn conjugate(&self, left: &QMat, right: &QMat, space: KSpace) -> MatrixSeries {
        MatrixSeries::from_raw(
            self.coeffs.iter().map(|c| left.mul(c).mul(right)).collect(),
            space,
        )
    }

    /// Drops the constant term (which must be exactly zero) and shifts all
    /// powers down by one. The result has one order less.
    pub fn shift_down(&self) -> Result<MatrixSeries, SeriesError> {
        assert!(
            self.coeffs[0].is_zero(),
            "shift_down requires a vanishing constant term"
        );
        if self.coeffs.len() < 2 {
            return Err(SeriesError::InsufficientOrder {
                have: self.order(),
                need: self.order() + 1,
            });
        }
        Ok(MatrixSeries::from_raw(
            self.coeffs[1..].to_vec(),
            self.space.clone(),
        ))
    }

    /// Truncated inverse when the leading coefficient is invertible:
    /// B_0 = A_0^-1, B_t = -A_0^-1 sum_{s=1..t} A_s B_{t-s}.
    pub fn neumann_inverse(&self) -> Result<MatrixSeries, SeriesError> {
        let a0_inv = self.coeffs[0].inverse().ok_or(SeriesError::SingularLeading)?;
        let mut out: Vec<QMat> = vec![a0_inv.clone()];
        for t in 1..=self.order() {
            let dim = self.dim();
            let mut acc = QMat::zeros(dim, dim);
            for s in 1..=t {
                if self.coeffs[s].is_zero() {
                    continue;
                }
                acc = acc.add(&self.coeffs[s].mul(&out[t - s]));
            }
            out.push(a0_inv.mul(&acc).neg());
        }
        Ok(MatrixSeries::from_raw(out, self.space.clone()))
    }
}

/// Laurent series sum_{j >= ell} kappa^j C_j with exact coefficients stored
/// for j in [ell, valid_through]. `exact_tail` marks series that are known
/// to have exactly zero coefficients beyond the stored range (constants and
/// their finite combinations), as opposed to truncations of unknown tails.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentMatrixSeries {
    ell: i32,
    coeffs: Vec<QMat>,
    exact_tail: bool,
    space: KSpace,
}

/// Sentinel for "exact at every order".
const EXACT: i32 = i32::MAX / 4;

impl LaurentMatrixSeries {
    pub fn from_power_series(s: &MatrixSeries) -> Self {
        LaurentMatrixSeries {
            ell: 0,
            coeffs: s.coeffs().to_vec(),
            exact_tail: false,
            space: s.space().clone(),
        }
    }

    pub fn from_constant(c: QMat, space: KSpace) -> Self {
        LaurentMatrixSeries {
            ell: 0,
            coeffs: vec![c],
            exact_tail: true,
            space,
        }
    }

    pub fn lowest_power(&self) -> i32 {
        self.ell
    }

    /// Highest power through which coefficients are exact.
    pub fn valid_through(&self) -> i32 {
        if self.exact_tail {
            EXACT
        } else {
            self.ell + self.coeffs.len() as i32 - 1
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &KSpace {
        &self.space
    }

    /// Coefficient of kappa^j. Zero below the lowest power or beyond an
    /// exact tail; panics when asked beyond the validity of a truncated
    /// series.
    pub fn coeff(&self, j: i32) -> QMat {
        if j < self.ell {
            return QMat::zeros(self.dim(), self.dim());
        }
        let idx = (j - self.ell) as usize;
        if idx < self.coeffs.len() {
            return self.coeffs[idx].clone();
        }
        assert!(
            self.exact_tail,
            "coefficient kappa^{j} requested beyond validity {}",
            self.valid_through()
        );
        QMat::zeros(self.dim(), self.dim())
    }

    /// Multiplies every power by kappa^k.
    pub fn shift(&self, k: i32) -> LaurentMatrixSeries {
        let mut out = self.clone();
        out.ell += k;
        out
    }

    pub fn map_coeffs(
        &self,
        space: KSpace,
        f: impl Fn(&QMat) -> QMat,
    ) -> LaurentMatrixSeries {
        LaurentMatrixSeries {
            ell: self.ell,
            coeffs: self.coeffs.iter().map(f).collect(),
            exact_tail: self.exact_tail,
            space,
        }
    }

    /// Drops leading stored coefficients that are exactly zero.
    fn trimmed(mut self) -> LaurentMatrixSeries {
        while self.coeffs.len() > 1 && self.coeffs[0].is_zero() {
            self.coeffs.remove(0);
            self.ell += 1;
        }
        self
    }

    pub fn add(&self, other: &LaurentMatrixSeries) -> LaurentMatrixSeries {
        let ell = self.ell.min(other.ell);
        let top = if self.exact_tail && other.exact_tail {
            (self.ell + self.coeffs.len() as i32 - 1).max(other.ell + other.coeffs.len() as i32 - 1)
        } else {
            self.valid_through().min(other.valid_through())
        };
        let coeffs = (ell..=top)
            .map(|j| self.coeff(j).add(&other.coeff(j)))
            .collect();
        LaurentMatrixSeries {
            ell,
            coeffs,
            exact_tail: self.exact_tail && other.exact_tail,
            space: self.space.clone(),
        }
        .trimmed()
    }

    pub fn mul(&self, other: &LaurentMatrixSeries) -> LaurentMatrixSeries {
        let ell = self.ell + other.ell;
        // coefficient t needs self through t - other.ell and other through
        // t - self.ell
        let top = if self.exact_tail && other.exact_tail {
            (self.ell + self.coeffs.len() as i32 - 1) + (other.ell + other.coeffs.len() as i32 - 1)
        } else {
            (self.valid_through().saturating_add(other.ell))
                .min(other.valid_through().saturating_add(self.ell))
        };
        let dim = self.dim();
        let mut coeffs: Vec<QMat> = vec![QMat::zeros(dim, dim); (top - ell + 1).max(0) as usize];
        for (ia, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let pa = self.ell + ia as i32;
            for (ib, b) in other.coeffs.iter().enumerate() {
                let pb = other.ell + ib as i32;
                let t = pa + pb;
                if t > top {
                    break;
                }
                if b.is_zero() {
                    continue;
                }
                let idx = (t - ell) as usize;
                coeffs[idx] = coeffs[idx].add(&a.mul(b));
            }
        }
        LaurentMatrixSeries {
            ell,
            coeffs,
            exact_tail: self.exact_tail && other.exact_tail,
            space: self.space.clone(),
        }
        .trimmed()
    }

    /// Applies the series as a bilinear form between coordinate vectors,
    /// producing scalar Laurent coefficients <x, C_j y> for stored j.
    pub fn bilinear(&self, x: &[Rational], y: &[Rational]) -> Vec<(i32, Rational)> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    self.ell + i as i32,
                    self.space.inner(x, &c.mul_vec(y)),
                )
            })
            .collect()
    }
}

/// Highest power t such that M(kappa) * inv(kappa) equals the identity
/// through kappa^t exactly (delta at power 0, zero elsewhere).
pub fn inverse_defect_order(m: &MatrixSeries, inv: &LaurentMatrixSeries) -> i32 {
    let ml = LaurentMatrixSeries::from_power_series(m);
    let prod = ml.mul(inv);
    let id = QMat::identity(m.dim());
    let mut t = prod.lowest_power();
    let mut best = t - 1;
    while t <= prod.valid_through().min(m.order() as i32) {
        let expect_id = t == 0;
        let c = prod.coeff(t);
        let ok = if expect_id { c == id } else { c.is_zero() };
        if !ok {
            break;
        }
        best = t;
        t += 1;
    }
    best
}
