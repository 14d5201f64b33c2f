//! Potentials in factored form V = v*Uv.
//!
//! Finite-rank potentials V = sum_i gamma_i |phi_i><phi_i| factor through
//! K = C^N with (v f)_i = |gamma_i|^(1/2) <phi_i, f> and U = diag(sign
//! gamma_i). Matrix entries of v G_j^D v* then carry |gamma_i gamma_k|^(1/2)
//! factors, which are irrational unless they pair up. Two representations
//! are therefore kept:
//!
//! * the symmetric-coordinate assembly [`FiniteRankPotential::assemble_mj`]
//!   accepts only configurations whose entries collapse to rationals and
//!   rejects the rest, naming the offending pair;
//! * the internal scaled coordinates (see [`crate::kspace`]) in which every
//!   pipeline quantity is rational for every finite-rank potential. All
//!   expansion machinery runs there.
//!
//! Local potentials (multiplication by a compactly supported function) have
//! an infinite-dimensional K and are handled exactly only through
//! [`FactoredPotential::apply`]; their classification is numerical (module
//! [`crate::oracle`]).

use crate::kspace::KSpace;
use crate::matrix::QMat;
use crate::poly::Poly;
use crate::ppoly::{apply_gjd, PiecewisePoly, PpolyError};
use crate::rational::{fmt_rational, int, parse_rational, rat, Rational};
use num::{Signed, Zero};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("coupling gamma must be nonzero (term {index})")]
    ZeroGamma { index: usize },
    #[error("form factor must be compactly supported (term {index})")]
    NonCompactTerm { index: usize },
    #[error("form factor must not be identically zero (term {index})")]
    ZeroTerm { index: usize },
    #[error(
        "matrix entry ({i},{k}) is irrational: |gamma_{i} gamma_{k}| = {surd} \
         is not a perfect square and the pairing does not vanish"
    )]
    IrrationalEntry { i: usize, k: usize, surd: String },
    #[error("local potential must be compactly supported")]
    NonCompactLocal,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Ppoly(#[from] PpolyError),
}

/// V = sum_i gamma_i |phi_i><phi_i| with compact, nonzero phi_i.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRankPotential {
    terms: Vec<(Rational, PiecewisePoly)>,
}

impl FiniteRankPotential {
    pub fn new(terms: Vec<(Rational, PiecewisePoly)>) -> Result<Self, PotentialError> {
        for (idx, (gamma, phi)) in terms.iter().enumerate() {
            let index = idx + 1;
            if gamma.is_zero() {
                return Err(PotentialError::ZeroGamma { index });
            }
            if !phi.is_compact() {
                return Err(PotentialError::NonCompactTerm { index });
            }
            if phi.is_zero() {
                return Err(PotentialError::ZeroTerm { index });
            }
        }
        Ok(FiniteRankPotential { terms })
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(Rational, PiecewisePoly)] {
        &self.terms
    }

    pub fn gammas(&self) -> Vec<Rational> {
        self.terms.iter().map(|(g, _)| g.clone()).collect()
    }

    pub fn phis(&self) -> Vec<PiecewisePoly> {
        self.terms.iter().map(|(_, p)| p.clone()).collect()
    }

    /// Exact V f = sum_i gamma_i <phi_i, f> phi_i.
    pub fn apply(&self, f: &PiecewisePoly) -> Result<PiecewisePoly, PpolyError> {
        let mut out = PiecewisePoly::zero();
        for (gamma, phi) in &self.terms {
            let c = gamma * phi.inner(f)?;
            out = out.add(&phi.scale(&c));
        }
        Ok(out)
    }

    /// U = diag(sign gamma_i).
    pub fn u_matrix(&self) -> QMat {
        QMat::diag(
            &self
                .terms
                .iter()
                .map(|(g, _)| if g.is_positive() { int(1) } else { int(-1) })
                .collect::<Vec<_>>(),
        )
    }

    /// K with the scaled-coordinate Gram diag(1/|gamma_i|).
    pub fn kspace(&self) -> KSpace {
        KSpace::from_weights(
            &self
                .terms
                .iter()
                .map(|(g, _)| g.abs().recip())
                .collect::<Vec<_>>(),
        )
    }

    /// Gram-type matrix W_j with entries <phi_i, G_j^D phi_k>.
    pub fn gram_w(&self, j: u32) -> QMat {
        let n = self.rank();
        let applied: Vec<PiecewisePoly> = self
            .terms
            .iter()
            .map(|(_, phi)| apply_gjd(j, phi).expect("form factors are compact"))
            .collect();
        let mut w = QMat::zeros(n, n);
        for i in 0..n {
            for k in i..n {
                let e = self.terms[i]
                    .1
                    .inner(&applied[k])
                    .expect("one factor compact");
                w[(i, k)] = e.clone();
                w[(k, i)] = e;
            }
        }
        w
    }

    /// Scaled-coordinate matrix of M_j: U + D^2 W_0 for j = 0, D^2 W_j for
    /// j >= 1, where D^2 = diag(|gamma_i|). Always rational.
    pub fn hat_m(&self, j: u32) -> QMat {
        let mut m = self.gram_w(j);
        let n = self.rank();
        for i in 0..n {
            let gi = self.terms[i].0.abs();
            for k in 0..n {
                m[(i, k)] *= &gi;
            }
        }
        if j == 0 {
            m = self.u_matrix().add(&m);
        }
        m
    }

    /// Symmetric-coordinate M_j with entries |gamma_i gamma_k|^(1/2)
    /// <phi_i, G_j^D phi_k> (plus U on the diagonal for j = 0). Entries that
    /// do not collapse to rationals are rejected.
    pub fn assemble_mj(&self, j: u32) -> Result<QMat, PotentialError> {
        let w = self.gram_w(j);
        let n = self.rank();
        let mut m = QMat::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                if w[(i, k)].is_zero() {
                    continue;
                }
                let surd = (self.terms[i].0.abs() * self.terms[k].0.abs()).abs();
                match crate::rational::sqrt_exact(&surd) {
                    Some(root) => m[(i, k)] = &root * &w[(i, k)],
                    None => {
                        return Err(PotentialError::IrrationalEntry {
                            i: i + 1,
                            k: k + 1,
                            surd: fmt_rational(&surd),
                        })
                    }
                }
            }
        }
        if j == 0 {
            m = self.u_matrix().add(&m);
        }
        Ok(m)
    }

    /// Scaled coordinates of v f: entries |gamma_i| <phi_i, f>.
    pub fn v_hat(&self, f: &PiecewisePoly) -> Result<Vec<Rational>, PpolyError> {
        self.terms
            .iter()
            .map(|(g, phi)| Ok(g.abs() * phi.inner(f)?))
            .collect()
    }

    /// v* x for scaled coordinates x: sum_i x_i phi_i.
    pub fn vstar_hat(&self, x: &[Rational]) -> PiecewisePoly {
        assert_eq!(x.len(), self.rank());
        let mut out = PiecewisePoly::zero();
        for (xi, (_, phi)) in x.iter().zip(&self.terms) {
            out = out.add(&phi.scale(xi));
        }
        out
    }

    /// Scaled coordinates of the moment vector vr: entries
    /// |gamma_i| * integral r phi_i(r) dr.
    pub fn moment_hat(&self) -> Vec<Rational> {
        self.terms
            .iter()
            .map(|(g, phi)| g.abs() * phi.integrate(1).expect("form factors are compact"))
            .collect()
    }
}

/// Multiplication by a compactly supported piecewise polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPotential {
    vfun: PiecewisePoly,
}

impl LocalPotential {
    pub fn new(vfun: PiecewisePoly) -> Result<Self, PotentialError> {
        if !vfun.is_compact() {
            return Err(PotentialError::NonCompactLocal);
        }
        Ok(LocalPotential { vfun })
    }

    pub fn vfun(&self) -> &PiecewisePoly {
        &self.vfun
    }

    pub fn apply(&self, f: &PiecewisePoly) -> PiecewisePoly {
        self.vfun.mul(f)
    }
}

/// A potential assembled from finite-rank and local parts. Sums flatten:
/// the K spaces stack, U stays block-diagonal, v stacks the rows.
#[derive(Clone, Debug, PartialEq)]
pub enum FactoredPotential {
    FiniteRank(FiniteRankPotential),
    Local(LocalPotential),
    Sum(Vec<FactoredPotential>),
}

impl FactoredPotential {
    pub fn apply(&self, f: &PiecewisePoly) -> Result<PiecewisePoly, PpolyError> {
        match self {
            FactoredPotential::FiniteRank(v) => v.apply(f),
            FactoredPotential::Local(v) => Ok(v.apply(f)),
            FactoredPotential::Sum(parts) => {
                let mut out = PiecewisePoly::zero();
                for p in parts {
                    out = out.add(&p.apply(f)?);
                }
                Ok(out)
            }
        }
    }

    fn collect(
        &self,
        rank_terms: &mut Vec<(Rational, PiecewisePoly)>,
        local_sum: &mut PiecewisePoly,
    ) {
        match self {
            FactoredPotential::FiniteRank(v) => rank_terms.extend(v.terms.iter().cloned()),
            FactoredPotential::Local(v) => *local_sum = local_sum.add(&v.vfun),
            FactoredPotential::Sum(parts) => {
                for p in parts {
                    p.collect(rank_terms, local_sum);
                }
            }
        }
    }

    /// Flattened view: all rank-one terms stacked, all local parts summed.
    pub fn flatten(&self) -> (FiniteRankPotential, Option<LocalPotential>) {
        let mut rank_terms = vec![];
        let mut local_sum = PiecewisePoly::zero();
        self.collect(&mut rank_terms, &mut local_sum);
        let fr = FiniteRankPotential::new(rank_terms)
            .expect("parts were validated at construction");
        let local = if local_sum.is_zero() {
            None
        } else {
            Some(LocalPotential::new(local_sum).expect("parts were compact"))
        };
        (fr, local)
    }

    /// The purely finite-rank content, or `None` if a local part is present.
    pub fn as_finite_rank(&self) -> Option<FiniteRankPotential> {
        let (fr, local) = self.flatten();
        local.is_none().then_some(fr)
    }

    pub fn is_zero(&self) -> bool {
        let (fr, local) = self.flatten();
        fr.rank() == 0 && local.is_none()
    }

    /// Potential description in the file format understood by
    /// [`parse_potential`].
    pub fn to_text(&self) -> String {
        let (fr, local) = self.flatten();
        let mut out = String::new();
        for (gamma, phi) in fr.terms() {
            let _ = writeln!(out, "[rank1]");
            let _ = writeln!(out, "gamma: {}", fmt_rational(gamma));
            out.push_str(&phi.to_text());
            out.push('\n');
        }
        if let Some(l) = local {
            let _ = writeln!(out, "[local]");
            out.push_str(&l.vfun().to_text());
            out.push('\n');
        }
        out
    }
}

/// Parses the potential description format:
///
/// ```text
/// # rank-one term gamma |phi><phi|
/// [rank1]
/// gamma: -3/10
/// breakpoints: 0, 3, 4
/// piece: 0
/// piece: 1
/// tail: 0
///
/// # local multiplication term
/// [local]
/// breakpoints: 0, 1, 2
/// piece: 0
/// piece: 1
/// tail: 0
/// ```
///
/// Sections repeat; all numbers are exact fractions. An empty file is the
/// zero potential.
pub fn parse_potential(text: &str) -> Result<FactoredPotential, PotentialError> {
    enum Section {
        Rank1 { gamma: Option<Rational>, line: usize },
        Local { line: usize },
    }
    struct Builder {
        section: Section,
        cuts: Option<(usize, Vec<Rational>)>,
        pieces: Vec<Poly>,
        tail: Option<Poly>,
    }

    let err = |line: usize, msg: String| PotentialError::Parse { line, msg };
    let parse_list = |line: usize, s: &str| -> Result<Vec<Rational>, PotentialError> {
        s.split(',')
            .map(|tok| parse_rational(tok).map_err(|e| err(line, e)))
            .collect()
    };

    let mut parts: Vec<FactoredPotential> = vec![];
    let mut current: Option<Builder> = None;

    let mut finish = |b: Builder| -> Result<(), PotentialError> {
        let (section_line, is_rank) = match &b.section {
            Section::Rank1 { line, .. } => (*line, true),
            Section::Local { line } => (*line, false),
        };
        let (cuts_line, cuts) = b
            .cuts
            .ok_or_else(|| err(section_line, "section has no breakpoints line".into()))?;
        let tail = b
            .tail
            .ok_or_else(|| err(section_line, "section has no tail line".into()))?;
        let phi = PiecewisePoly::new(cuts, b.pieces, tail)
            .map_err(|e| err(cuts_line, e.to_string()))?;
        if is_rank {
            let Section::Rank1 { gamma, line } = b.section else {
                unreachable!()
            };
            let gamma = gamma.ok_or_else(|| err(line, "rank1 section has no gamma line".into()))?;
            let term = FiniteRankPotential::new(vec![(gamma, phi)])
                .map_err(|e| err(section_line, e.to_string()))?;
            parts.push(FactoredPotential::FiniteRank(term));
        } else {
            let local =
                LocalPotential::new(phi).map_err(|e| err(section_line, e.to_string()))?;
            parts.push(FactoredPotential::Local(local));
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[rank1]" || line == "[local]" {
            if let Some(b) = current.take() {
                finish(b)?;
            }
            let section = if line == "[rank1]" {
                Section::Rank1 {
                    gamma: None,
                    line: lineno,
                }
            } else {
                Section::Local { line: lineno }
            };
            current = Some(Builder {
                section,
                cuts: None,
                pieces: vec![],
                tail: None,
            });
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(err(lineno, format!("expected `key: values`, got `{line}`")));
        };
        let Some(b) = current.as_mut() else {
            return Err(err(
                lineno,
                "data line outside of a [rank1] or [local] section".into(),
            ));
        };
        match key.trim() {
            "gamma" => match &mut b.section {
                Section::Rank1 { gamma, .. } => {
                    if gamma.is_some() {
                        return Err(err(lineno, "duplicate gamma line".into()));
                    }
                    *gamma = Some(parse_rational(value).map_err(|e| err(lineno, e))?);
                }
                Section::Local { .. } => {
                    return Err(err(lineno, "gamma is not valid in a [local] section".into()));
                }
            },
            "breakpoints" => {
                if b.cuts.is_some() {
                    return Err(err(lineno, "duplicate breakpoints line".into()));
                }
                b.cuts = Some((lineno, parse_list(lineno, value)?));
            }
            "piece" => {
                if b.tail.is_some() {
                    return Err(err(lineno, "piece after tail".into()));
                }
                b.pieces.push(Poly::new(parse_list(lineno, value)?));
            }
            "tail" => {
                if b.tail.is_some() {
                    return Err(err(lineno, "duplicate tail line".into()));
                }
                b.tail = Some(Poly::new(parse_list(lineno, value)?));
            }
            other => return Err(err(lineno, format!("unknown key `{other}`"))),
        }
    }
    if let Some(b) = current.take() {
        finish(b)?;
    }
    Ok(match parts.len() {
        1 => parts.pop().unwrap(),
        _ => FactoredPotential::Sum(parts),
    })
}

/// Built-in examples used by the CLI demos, the validation suites and the
/// test batteries.
pub mod examples {
    use super::*;

    /// First form factor of the rank-2 demo: indicator of (3,4).
    pub fn phi1() -> PiecewisePoly {
        PiecewisePoly::indicator(int(3), int(4))
    }

    /// Second form factor of the rank-2 demo: 1 on (1,2), -3/5 on (2,3).
    /// Both weighted moments <r, phi2> vanish in a way that makes the
    /// threshold exceptional.
    pub fn phi2() -> PiecewisePoly {
        PiecewisePoly::new(
            vec![int(0), int(1), int(2), int(3)],
            vec![Poly::zero(), Poly::one(), Poly::constant(rat(-3, 5))],
            Poly::zero(),
        )
        .unwrap()
    }

    /// The rank-2 demo potential V = -(3/10)|phi1><phi1| - (75/28)|phi2><phi2|
    /// whose threshold is an exceptional point of the third kind.
    pub fn rank_two_demo() -> FiniteRankPotential {
        FiniteRankPotential::new(vec![(rat(-3, 10), phi1()), (rat(-75, 28), phi2())]).unwrap()
    }

    /// Rank-one potential -|phi><phi| with phi = indicator[0,1): the
    /// threshold is regular (M_0 = -2/3 is invertible).
    pub fn regular_rank_one() -> FiniteRankPotential {
        FiniteRankPotential::new(vec![(int(-1), PiecewisePoly::indicator(int(0), int(1)))])
            .unwrap()
    }

    /// Rank-one potential -3|phi><phi| with phi = indicator[0,1): gamma is
    /// tuned so that M_0 = 0 while the moment integral r phi stays nonzero,
    /// giving an exceptional point of the first kind.
    pub fn first_kind_rank_one() -> FiniteRankPotential {
        FiniteRankPotential::new(vec![(int(-3), PiecewisePoly::indicator(int(0), int(1)))])
            .unwrap()
    }

    /// Rank-one potential -(75/28)|phi2><phi2|: gamma tuned so M_0 = 0 and
    /// the moment vanishes, giving an exceptional point of the second kind.
    pub fn second_kind_rank_one() -> FiniteRankPotential {
        FiniteRankPotential::new(vec![(rat(-75, 28), phi2())]).unwrap()
    }
}
