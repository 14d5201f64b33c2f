//! Classification of the zero-energy threshold and construction of the
//! associated zero-eigenfunctions and canonical resonance function.
//!
//! The threshold type is decided by ker M_0 together with the moment
//! pairing <vr, f>: an empty kernel is a regular point; a kernel vector
//! with nonvanishing moment pairing carries a zero resonance; kernel
//! vectors with vanishing pairing carry genuine zero eigenfunctions.
//! All tests here are exact, so no tolerances appear.

use crate::kspace::KSpace;
use crate::matrix::QMat;
use crate::potential::FiniteRankPotential;
use crate::ppoly::{apply_gjd, PiecewisePoly, PpolyError};
use crate::rational::Rational;
use num::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("operation {op} requires a {need} threshold, found {found}")]
    WrongKind {
        op: &'static str,
        need: &'static str,
        found: String,
    },
    #[error("moment pairing <vr,f> must vanish exactly, got {0}")]
    MomentPairing(String),
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
    #[error(transparent)]
    Ppoly(#[from] PpolyError),
}

/// The four mutually exclusive threshold types. Multiplicities count zero
/// eigenfunctions: a second-kind point with dim ker M_0 = m carries m of
/// them; a third-kind point additionally carries one resonance, so its
/// eigenvalue multiplicity is dim ker M_0 - 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ThresholdKind {
    Regular,
    FirstKind,
    SecondKind(usize),
    ThirdKind(usize),
}

impl std::fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdKind::Regular => write!(f, "regular point"),
            ThresholdKind::FirstKind => write!(f, "exceptional point of the first kind"),
            ThresholdKind::SecondKind(m) => {
                write!(f, "exceptional point of the second kind (multiplicity {m})")
            }
            ThresholdKind::ThirdKind(m) => write!(
                f,
                "exceptional point of the third kind (eigenvalue multiplicity {m})"
            ),
        }
    }
}

/// Result of [`classify`].
///
/// `ker_basis` is an orthogonal basis of ker M_0 in the scaled coordinates
/// of [`FiniteRankPotential::kspace`], with exact squared norms. It is
/// rotated so that every vector except possibly the last is orthogonal to
/// the moment vector; when a resonance is present the last vector is the
/// distinguished one and is repeated in `resonance_vector`.
#[derive(Clone, Debug)]
pub struct ThresholdClassification {
    pub kind: ThresholdKind,
    pub ker_basis: Vec<(Vec<Rational>, Rational)>,
    pub resonance_vector: Option<Vec<Rational>>,
}

/// Zero-eigenspace data: orthogonalized unnormalized eigenfunctions with
/// exact squared L^2 norms, the eigenprojection in rank-decomposed form,
/// and the canonical resonance function when one exists.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub eigenfunctions: Vec<(PiecewisePoly, Rational)>,
    pub p0: P0Projection,
    pub psi_c: Option<(PiecewisePoly, Rational)>,
}

/// P_0 = sum |g_i><g_i| / ||g_i||^2 over orthogonal eigenfunctions.
#[derive(Clone, Debug)]
pub struct P0Projection {
    terms: Vec<(PiecewisePoly, Rational)>,
}

impl P0Projection {
    pub fn new(terms: Vec<(PiecewisePoly, Rational)>) -> Self {
        P0Projection { terms }
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(PiecewisePoly, Rational)] {
        &self.terms
    }

    pub fn apply(&self, f: &PiecewisePoly) -> PiecewisePoly {
        let mut out = PiecewisePoly::zero();
        for (g, n2) in &self.terms {
            let c = g.inner(f).expect("eigenfunctions are compactly supported") / n2.clone();
            out = out.add(&g.scale(&c));
        }
        out
    }
}

/// Moment vector in scaled coordinates: components |gamma_i| m_i with
/// m_i the first moment of phi_i. Pairings against kernel vectors through
/// the K inner product reproduce <vr, f> exactly.
pub fn moment_vector(v: &FiniteRankPotential) -> Vec<Rational> {
    v.moment_hat()
}

/// Exact basis of the nullspace of `m0`, orthogonalized in `space` with
/// squared norms kept rational.
pub fn kernel_basis(m0: &QMat, space: &KSpace) -> Vec<(Vec<Rational>, Rational)> {
    space.gram_schmidt(&m0.nullspace())
}

/// Classifies the threshold for H = -d^2/dr^2 + V with Dirichlet boundary.
pub fn classify(v: &FiniteRankPotential) -> ThresholdClassification {
    let space = v.kspace();
    let m0 = v.hat_m(0);
    let raw = kernel_basis(&m0, &space);
    if raw.is_empty() {
        return ThresholdClassification {
            kind: ThresholdKind::Regular,
            ker_basis: vec![],
            resonance_vector: None,
        };
    }
    let vr = moment_vector(v);
    let pairings: Vec<Rational> = raw.iter().map(|(f, _)| space.inner(&vr, f)).collect();
    let pivot = pairings.iter().position(|p| !p.is_zero());
    let Some(pivot) = pivot else {
        let m = raw.len();
        return ThresholdClassification {
            kind: ThresholdKind::SecondKind(m),
            ker_basis: raw,
            resonance_vector: None,
        };
    };
    // rotate the remaining vectors into the moment-free subspace, keeping
    // the pivot as the distinguished resonance direction (placed last)
    let fp = raw[pivot].0.clone();
    let pp = pairings[pivot].clone();
    let mut ordered: Vec<Vec<Rational>> = vec![];
    for (i, (f, _)) in raw.iter().enumerate() {
        if i == pivot {
            continue;
        }
        let t = pairings[i].clone() / pp.clone();
        let adjusted: Vec<Rational> = f
            .iter()
            .zip(&fp)
            .map(|(a, b)| a.clone() - t.clone() * b.clone())
            .collect();
        ordered.push(adjusted);
    }
    ordered.push(fp);
    let basis = space.gram_schmidt(&ordered);
    assert_eq!(basis.len(), raw.len(), "rotation preserves dimension");
    let resonance = Some(basis.last().unwrap().0.clone());
    let kind = if basis.len() == 1 {
        ThresholdKind::FirstKind
    } else {
        ThresholdKind::ThirdKind(basis.len() - 1)
    };
    ThresholdClassification {
        kind,
        ker_basis: basis,
        resonance_vector: resonance,
    }
}

/// Kernel vectors whose moment pairing vanishes: these produce genuine
/// eigenfunctions. With the rotation done in [`classify`] this is every
/// basis vector except the resonance one.
fn moment_free_vectors<'a>(cls: &'a ThresholdClassification) -> &'a [(Vec<Rational>, Rational)] {
    match cls.kind {
        ThresholdKind::SecondKind(_) => &cls.ker_basis,
        ThresholdKind::ThirdKind(_) => &cls.ker_basis[..cls.ker_basis.len() - 1],
        _ => &[],
    }
}

fn eigenfunctions_raw(
    v: &FiniteRankPotential,
    cls: &ThresholdClassification,
) -> Result<Vec<(PiecewisePoly, Rational)>, ThresholdError> {
    let mut out: Vec<(PiecewisePoly, Rational)> = vec![];
    for (f, _) in moment_free_vectors(cls) {
        let g = apply_gjd(0, &v.vstar_hat(f))?.neg();
        if !g.is_compact() {
            return Err(ThresholdError::Inconsistency(format!(
                "eigenfunction candidate has nonzero tail {:?} despite vanishing moment pairing",
                g.tail()
            )));
        }
        // L^2 Gram-Schmidt against the ones already accepted
        let mut h = g;
        for (prev, n2) in &out {
            let c = prev.inner(&h).expect("compact") / n2.clone();
            h = h.sub(&prev.scale(&c));
        }
        let n2 = h.norm2().expect("compact");
        if n2.is_zero() {
            return Err(ThresholdError::Inconsistency(
                "dependent eigenfunctions from independent kernel vectors".into(),
            ));
        }
        out.push((h, n2));
    }
    Ok(out)
}

/// Builds the zero-eigenfunctions g = -G_0^D v* f for the moment-free
/// kernel vectors, verifies exactly that each is compactly supported,
/// orthogonalizes them, and assembles P_0. For a third-kind point the
/// canonical resonance function is attached as well.
pub fn zero_eigenfunctions(
    v: &FiniteRankPotential,
    cls: &ThresholdClassification,
) -> Result<EigenData, ThresholdError> {
    match cls.kind {
        ThresholdKind::SecondKind(_) | ThresholdKind::ThirdKind(_) => {}
        _ => {
            return Err(ThresholdError::WrongKind {
                op: "zero_eigenfunctions",
                need: "second- or third-kind",
                found: cls.kind.to_string(),
            })
        }
    }
    let eigenfunctions = eigenfunctions_raw(v, cls)?;
    let p0 = P0Projection::new(eigenfunctions.clone());
    let psi_c = match cls.kind {
        ThresholdKind::ThirdKind(_) => Some(canonical_resonance(v, cls)?),
        _ => None,
    };
    Ok(EigenData {
        eigenfunctions,
        p0,
        psi_c,
    })
}

/// The canonical zero resonance function. First kind:
/// Psi_c = (<f,vr>/|<f,vr>|^2) G_0^D v* f. Third kind:
/// Psi_c = (1/||Svr||^2)(G_0^D v* Svr - P_0 V G_2^D v* Svr).
/// Either way the tail is the constant 1, which fixes the scale; the
/// returned squared normalization is therefore 1.
pub fn canonical_resonance(
    v: &FiniteRankPotential,
    cls: &ThresholdClassification,
) -> Result<(PiecewisePoly, Rational), ThresholdError> {
    let space = v.kspace();
    let vr = moment_vector(v);
    let psi = match cls.kind {
        ThresholdKind::FirstKind => {
            let f = cls.resonance_vector.as_ref().expect("first kind has one");
            let p = space.inner(f, &vr);
            assert!(!p.is_zero(), "resonance vector pairs with vr");
            apply_gjd(0, &v.vstar_hat(f))?.scale(&(Rational::one() / p))
        }
        ThresholdKind::ThirdKind(_) => {
            let proj = space.projection_onto_span(
                &cls.ker_basis.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>(),
            );
            let svr = proj.mul_vec(&vr);
            let alpha = space.inner(&svr, &svr);
            assert!(!alpha.is_zero(), "third kind forces Svr != 0");
            let head = apply_gjd(0, &v.vstar_hat(&svr))?;
            let g2 = apply_gjd(2, &v.vstar_hat(&svr))?;
            let p0 = P0Projection::new(eigenfunctions_raw(v, cls)?);
            let corr = p0.apply(&v.apply(&g2)?);
            head.sub(&corr).scale(&(Rational::one() / alpha))
        }
        _ => {
            return Err(ThresholdError::WrongKind {
                op: "canonical_resonance",
                need: "first- or third-kind",
                found: cls.kind.to_string(),
            })
        }
    };
    debug_assert_eq!(psi.tail(), &crate::poly::Poly::one());
    Ok((psi, Rational::one()))
}

/// Checks the exact identity <f1, vG_2^D v* f2> = -<G_0^D v* f1, G_0^D v* f2>
/// for kernel vectors satisfying the moment condition.
pub fn lemma_pairing_check(
    v: &FiniteRankPotential,
    f1: &[Rational],
    f2: &[Rational],
) -> Result<bool, ThresholdError> {
    let space = v.kspace();
    let vr = moment_vector(v);
    for f in [f1, f2] {
        let p = space.inner(&vr, f);
        if !p.is_zero() {
            return Err(ThresholdError::MomentPairing(format!("{p}")));
        }
    }
    let m2 = v.hat_m(2);
    let lhs = space.inner(f1, &m2.mul_vec(f2));
    let g1 = apply_gjd(0, &v.vstar_hat(f1))?;
    let g2 = apply_gjd(0, &v.vstar_hat(f2))?;
    let rhs = -g1.inner(&g2).expect("moment-free images are compact");
    Ok(lhs == rhs)
}
