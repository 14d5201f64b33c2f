//! Fermi-golden-rule quantities for the perturbed family H(eps) = H + eps W
//! when zero is a simple eigenvalue of H: the coupling b = <Psi0, W Psi0>,
//! the order nu and coefficient g_nu, the leading-order resonance width
//! Gamma(eps) and position x0(eps), and the predicted survival amplitude.

use crate::expansion::{resolvent_expansion, ExpansionError, ResolventExpansion};
use crate::potential::{FactoredPotential, FiniteRankPotential};
use crate::ppoly::{PiecewisePoly, PpolyError};
use crate::rational::{to_f64, Rational};
use crate::threshold::{classify, zero_eigenfunctions, EigenData, ThresholdError, ThresholdKind};
use num::{Signed, Zero};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FgrError {
    #[error("undetermined at depth {0}")]
    Undetermined(i32),
    #[error("b = {0} is not positive: outside stated hypotheses (b = <Psi0, W Psi0> > 0)")]
    NonPositiveCoupling(String),
    #[error("zero must be a simple eigenvalue; the eigenprojection has rank {0}")]
    NotSimple(usize),
    #[error("threshold is a {0}, which carries no zero eigenvalue")]
    NoEigenvalue(String),
    #[error(transparent)]
    Ppoly(#[from] PpolyError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
}

/// Everything the golden-rule pipeline consumes: the unperturbed
/// expansion and eigen-data, the perturbation, and the couplings to
/// evaluate.
#[derive(Debug)]
pub struct FGRInput {
    pub expansion: ResolventExpansion,
    pub eigen: EigenData,
    pub w: FactoredPotential,
    pub epsilons: Vec<f64>,
}

impl FGRInput {
    /// Classifies and expands the unperturbed potential; rejects
    /// thresholds without a zero eigenvalue and non-simple eigenvalues.
    pub fn prepare(
        v: &FiniteRankPotential,
        w: FactoredPotential,
        epsilons: Vec<f64>,
        depth: i32,
    ) -> Result<FGRInput, FgrError> {
        let cls = classify(v);
        match cls.kind {
            ThresholdKind::SecondKind(_) | ThresholdKind::ThirdKind(_) => {}
            ref other => return Err(FgrError::NoEigenvalue(other.to_string())),
        }
        let eigen = zero_eigenfunctions(v, &cls)?;
        if eigen.p0.rank() != 1 {
            return Err(FgrError::NotSimple(eigen.p0.rank()));
        }
        let expansion = resolvent_expansion(v, depth)?;
        Ok(FGRInput {
            expansion,
            eigen,
            w,
            epsilons,
        })
    }

    fn psi0(&self) -> &(PiecewisePoly, Rational) {
        &self.eigen.eigenfunctions[0]
    }
}

/// Exact b = <Psi0, W Psi0> with the squared normalization folded in:
/// Psi0 is passed in unnormalized form (g, ||g||^2).
pub fn compute_b(
    psi0: &(PiecewisePoly, Rational),
    w: &FactoredPotential,
) -> Result<Rational, FgrError> {
    let (g, n2) = psi0;
    Ok(g.inner(&w.apply(g)?)? / n2.clone())
}

/// Smallest odd nu >= -1 with g_nu = <Psi0, W G_nu W Psi0> != 0, searched
/// through the expansion depth. Vanishing sandwiches at lower odd orders
/// are skipped; exhausting the depth reports the undetermined case.
pub fn determine_nu(
    expansion: &ResolventExpansion,
    psi0: &(PiecewisePoly, Rational),
    w: &FactoredPotential,
) -> Result<(i32, Rational), FgrError> {
    let (g, n2) = psi0;
    let wg = w.apply(g)?;
    let mut j = -1;
    while j <= expansion.depth() {
        let val = expansion.sandwich(j, &wg, &wg)? / n2.clone();
        if !val.is_zero() {
            return Ok((j, val));
        }
        j += 2;
    }
    Err(FgrError::Undetermined(expansion.depth()))
}

/// Error exponent p(nu) = min{2, (2+nu)/2} of the survival-amplitude
/// remainder.
pub fn p_nu(nu: i32) -> f64 {
    (2.0f64).min((2 + nu) as f64 / 2.0)
}

/// Leading-order resonance width and position for one coupling value:
/// Gamma(eps) = -i^{nu-1} g_nu b^{nu/2} eps^{2+nu/2} (the sign collapses
/// to (-1)^{(nu+1)/2} for odd nu) and x0(eps) = b eps.
pub fn resonance_parameters(
    b: &Rational,
    nu: i32,
    g_nu: &Rational,
    eps: f64,
) -> Result<(f64, f64), FgrError> {
    if !b.is_positive() {
        return Err(FgrError::NonPositiveCoupling(
            crate::rational::fmt_rational(b),
        ));
    }
    assert!(nu >= -1 && nu % 2 != 0, "nu must be odd and >= -1");
    assert!(eps >= 0.0, "coupling must be nonnegative");
    let sign = if (nu + 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
    let bf = to_f64(b);
    let gamma = sign * to_f64(g_nu) * bf.powf(nu as f64 / 2.0) * eps.powf(2.0 + nu as f64 / 2.0);
    Ok((gamma, bf * eps))
}

/// Predicted survival amplitude e^{-it lambda} with
/// lambda = x0 - i Gamma: modulus e^{-Gamma t}, phase -x0 t.
pub fn survival_prediction(gamma: f64, x0: f64, t: f64) -> Complex64 {
    assert!(t >= 0.0, "prediction is stated for t >= 0");
    Complex64::new(-gamma * t, -x0 * t).exp()
}

/// One coupling row of the report.
#[derive(Clone, Debug)]
pub struct EpsilonRow {
    pub eps: f64,
    pub gamma: f64,
    pub x0: f64,
}

/// Golden-rule output: exact b and g_nu, the detected order, the error
/// exponent, and per-coupling leading-order parameters.
#[derive(Clone, Debug)]
pub struct FGRResult {
    pub b: Rational,
    pub nu: i32,
    pub g_nu: Rational,
    pub p_nu: f64,
    /// Gamma > 0 for every requested coupling. For nu = 1 this encodes
    /// the sign condition g_1 < 0, which is checked, not assumed.
    pub width_positive: bool,
    pub rows: Vec<EpsilonRow>,
}

impl FGRResult {
    pub fn gamma(&self, eps: f64) -> f64 {
        resonance_parameters(&self.b, self.nu, &self.g_nu, eps)
            .expect("b was validated when the result was built")
            .0
    }

    pub fn x0(&self, eps: f64) -> f64 {
        to_f64(&self.b) * eps
    }
}

pub fn fgr_report(input: &FGRInput) -> Result<FGRResult, FgrError> {
    if input.eigen.p0.rank() != 1 {
        return Err(FgrError::NotSimple(input.eigen.p0.rank()));
    }
    let psi0 = input.psi0();
    let b = compute_b(psi0, &input.w)?;
    let (nu, g_nu) = determine_nu(&input.expansion, psi0, &input.w)?;
    let mut rows = Vec::with_capacity(input.epsilons.len());
    let mut width_positive = true;
    for &eps in &input.epsilons {
        let (gamma, x0) = resonance_parameters(&b, nu, &g_nu, eps)?;
        width_positive &= gamma > 0.0;
        rows.push(EpsilonRow { eps, gamma, x0 });
    }
    Ok(FGRResult {
        b,
        nu,
        g_nu,
        p_nu: p_nu(nu),
        width_positive,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::examples;
    use crate::potential::LocalPotential;
    use crate::rational::{int, rat};
    use crate::threshold::classify;

    fn demo_eigen() -> (FiniteRankPotential, EigenData) {
        let v = examples::rank_two_demo();
        let cls = classify(&v);
        let eigen = zero_eigenfunctions(&v, &cls).unwrap();
        (v, eigen)
    }

    fn indicator_w(a: i64, bnd: i64) -> FactoredPotential {
        FactoredPotential::Local(
            LocalPotential::new(PiecewisePoly::indicator(int(a), int(bnd))).unwrap(),
        )
    }

    #[test]
    fn coupling_vanishes_for_disjoint_supports() {
        let (_, eigen) = demo_eigen();
        // rank-one perturbation living on [3,4], beyond Psi0's support
        let w = FactoredPotential::FiniteRank(
            FiniteRankPotential::new(vec![(int(1), examples::phi1())]).unwrap(),
        );
        let b = compute_b(&eigen.eigenfunctions[0], &w).unwrap();
        assert!(b.is_zero());
        let zero = FactoredPotential::FiniteRank(FiniteRankPotential::new(vec![]).unwrap());
        assert!(compute_b(&eigen.eigenfunctions[0], &zero).unwrap().is_zero());
    }

    #[test]
    fn coupling_for_window_perturbation_is_exact() {
        let (_, eigen) = demo_eigen();
        let b = compute_b(&eigen.eigenfunctions[0], &indicator_w(1, 2)).unwrap();
        assert_eq!(b, rat(285, 392));
    }

    #[test]
    fn window_perturbation_gives_simple_pole_order() {
        let (v, eigen) = demo_eigen();
        let w = indicator_w(1, 2);
        let exp = resolvent_expansion(&v, 1).unwrap();
        let (nu, g) = determine_nu(&exp, &eigen.eigenfunctions[0], &w).unwrap();
        assert_eq!(nu, -1);
        assert_eq!(g, rat(315005, 138355224));
        // g_{-1} = |<Psi0, W Psi_c>|^2, recomputed from the pieces
        let (psi_c, _) = eigen.psi_c.clone().unwrap();
        let (g0, n2) = &eigen.eigenfunctions[0];
        let pairing = g0.inner(&w.apply(&psi_c).unwrap()).unwrap();
        assert_eq!(g, pairing.clone() * pairing / n2.clone());
    }

    #[test]
    fn tuned_perturbation_rejects_leading_order() {
        // mixture of two windows with the [1,2] and [2,3] weights chosen
        // so <Psi0, W Psi_c> = 0: the nu = -1 candidate must be skipped
        let (v, eigen) = demo_eigen();
        let (g0, _) = &eigen.eigenfunctions[0];
        let (psi_c, _) = eigen.psi_c.clone().unwrap();
        let m1 = g0
            .inner(&PiecewisePoly::indicator(int(1), int(2)).mul(&psi_c))
            .unwrap();
        let m2 = g0
            .inner(&PiecewisePoly::indicator(int(2), int(3)).mul(&psi_c))
            .unwrap();
        assert!(!m1.is_zero() && !m2.is_zero());
        let s = -m1 / m2;
        let wfun = PiecewisePoly::indicator(int(1), int(2)).add(
            &PiecewisePoly::indicator(int(2), int(3)).scale(&s),
        );
        let w = FactoredPotential::Local(LocalPotential::new(wfun).unwrap());
        let exp = resolvent_expansion(&v, 1).unwrap();
        let pairing = g0.inner(&w.apply(&psi_c).unwrap()).unwrap();
        assert!(pairing.is_zero());
        match determine_nu(&exp, &eigen.eigenfunctions[0], &w) {
            Ok((nu, g)) => {
                assert!(nu >= 1, "nu = -1 must be rejected");
                assert!(!g.is_zero());
            }
            Err(FgrError::Undetermined(depth)) => assert_eq!(depth, 1),
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn second_kind_order_is_one() {
        let v = examples::second_kind_rank_one();
        let cls = classify(&v);
        let eigen = zero_eigenfunctions(&v, &cls).unwrap();
        let exp = resolvent_expansion(&v, 1).unwrap();
        let (nu, g) = determine_nu(&exp, &eigen.eigenfunctions[0], &indicator_w(1, 2)).unwrap();
        assert_eq!(nu, 1);
        assert!(!g.is_zero());
    }

    #[test]
    fn width_sign_and_scaling() {
        let b = rat(285, 392);
        let g = rat(315005, 138355224);
        let (gamma, x0) = resonance_parameters(&b, -1, &g, 0.04).unwrap();
        // nu = -1: Gamma = g b^{-1/2} eps^{3/2} > 0
        let expect = to_f64(&g) / to_f64(&b).sqrt() * 0.04f64.powf(1.5);
        assert!((gamma - expect).abs() < 1e-18);
        assert!((x0 - to_f64(&b) * 0.04).abs() < 1e-18);
        // scaling law Gamma(c eps) = c^{2 + nu/2} Gamma(eps)
        let (gamma2, _) = resonance_parameters(&b, -1, &g, 0.08).unwrap();
        assert!((gamma2 / gamma - 2.0f64.powf(1.5)).abs() < 1e-12);
        // nu = 1 flips the sign: negative g_1 gives positive width
        let (gamma_neg, _) = resonance_parameters(&b, 1, &rat(-1, 3), 0.1).unwrap();
        assert!(gamma_neg > 0.0);
        let (gamma_pos, _) = resonance_parameters(&b, 1, &rat(1, 3), 0.1).unwrap();
        assert!(gamma_pos < 0.0);
        // eps = 0 collapses both parameters
        let (g0, x00) = resonance_parameters(&b, -1, &g, 0.0).unwrap();
        assert_eq!(g0, 0.0);
        assert_eq!(x00, 0.0);
        // b <= 0 is outside the stated hypotheses
        assert!(resonance_parameters(&rat(-1, 2), -1, &g, 0.1).is_err());
    }

    #[test]
    fn survival_amplitude_shape() {
        let amp0 = survival_prediction(0.3, 2.0, 0.0);
        assert!((amp0 - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let t = 7.5;
        let amp = survival_prediction(0.3, 2.0, t);
        assert!((amp.norm() - (-0.3 * t).exp()).abs() < 1e-12);
        let direct = ((-0.3 * t).exp()) * Complex64::new((2.0 * t).cos(), -(2.0 * t).sin());
        assert!((amp - direct).norm() < 1e-12);
    }

    #[test]
    fn error_exponent_table() {
        assert_eq!(p_nu(-1), 0.5);
        assert_eq!(p_nu(1), 1.5);
        assert_eq!(p_nu(3), 2.0);
        assert_eq!(p_nu(5), 2.0);
    }

    #[test]
    fn report_pipeline_on_demo() {
        let v = examples::rank_two_demo();
        let input = FGRInput::prepare(
            &v,
            indicator_w(1, 2),
            vec![0.02, 0.04, 0.08],
            1,
        )
        .unwrap();
        let out = fgr_report(&input).unwrap();
        assert_eq!(out.b, rat(285, 392));
        assert_eq!(out.nu, -1);
        assert_eq!(out.p_nu, 0.5);
        assert!(out.width_positive);
        assert_eq!(out.rows.len(), 3);
        // frozen leading-order widths for the acceptance comparison
        assert!((2.0 * out.rows[0].gamma - 1.51049e-5).abs() < 1e-9);
        assert!((2.0 * out.rows[1].gamma - 4.27231e-5).abs() < 1e-9);
        assert!((2.0 * out.rows[2].gamma - 1.20839e-4).abs() < 1e-8);
    }

    #[test]
    fn scaling_of_inputs_under_w_rescaling() {
        let (v, eigen) = demo_eigen();
        let w1 = indicator_w(1, 2);
        let w3 = FactoredPotential::Local(
            LocalPotential::new(
                PiecewisePoly::indicator(int(1), int(2)).scale(&int(3)),
            )
            .unwrap(),
        );
        let exp = resolvent_expansion(&v, 1).unwrap();
        let b1 = compute_b(&eigen.eigenfunctions[0], &w1).unwrap();
        let b3 = compute_b(&eigen.eigenfunctions[0], &w3).unwrap();
        assert_eq!(b3, b1 * int(3));
        let (nu1, g1) = determine_nu(&exp, &eigen.eigenfunctions[0], &w1).unwrap();
        let (nu3, g3) = determine_nu(&exp, &eigen.eigenfunctions[0], &w3).unwrap();
        assert_eq!(nu1, nu3);
        assert_eq!(g3, g1 * int(9));
    }

    #[test]
    fn regular_point_is_rejected() {
        let v = examples::regular_rank_one();
        let err = FGRInput::prepare(&v, indicator_w(1, 2), vec![0.1], 1).unwrap_err();
        assert!(matches!(err, FgrError::NoEigenvalue(_)));
    }
}
