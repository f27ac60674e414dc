//! Closed-form constants of the mean-square convergence bound.
//!
//! Everything here is a pure function of the instance numbers `(m, M,
//! alpha)`, the dual minimizer anchors, and two second moments; nothing is
//! estimated. With local weak order `3/2` and strong order `1` the final
//! bias term is `c_mla * sqrt(2h)` and the admissible step ceiling is the
//! minimum of five explicit expressions.

use nalgebra::DVector;
use serde::Serialize;

use crate::engine::InitLaw;
use crate::error::{MllError, Result};
use crate::maps::{MapKind, MirrorMap};
use crate::potentials::{DualTarget, Potential};

/// Dual minimizer and the factor/drift magnitudes evaluated there.
#[derive(Debug, Clone)]
pub struct InstanceAnchors {
    pub y_star: DVector<f64>,
    pub a_star_hs: f64,
    pub g_star_norm: f64,
}

/// Anchor quantities of a map/potential instance.
///
/// The one boundary case: the 1-d GBM geometry with drift `g(y) = lambda y`
/// has its root at `y = 0`, the edge of the dual region. The factor
/// `sqrt(alpha) y` and the drift both vanish there, so the continuous
/// extension `(0, 0, 0)` is used.
pub fn instance_anchors(map: &MirrorMap, pot: &Potential) -> Result<InstanceAnchors> {
    if let (MapKind::Gbm1d, Potential::RelativeAffine { shift, .. }) = (map.kind(), pot) {
        if shift[0] == 0.0 {
            return Ok(InstanceAnchors {
                y_star: DVector::zeros(1),
                a_star_hs: 0.0,
                g_star_norm: 0.0,
            });
        }
    }
    let y_star = pot.minimizer_dual(map)?;
    let a = map.dual_inv_sqrt_factor(&y_star)?;
    let g = pot.dual_drift(map, &y_star)?;
    Ok(InstanceAnchors { y_star, a_star_hs: a.norm(), g_star_norm: g.norm() })
}

/// Inputs of the constants calculator; all plain numbers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstantsInput {
    pub rel_m: f64,
    pub rel_big_m: f64,
    pub alpha: f64,
    pub dim: usize,
    pub y_star_norm: f64,
    pub a_star_hs: f64,
    pub g_star_norm: f64,
    pub e_y0_sq: f64,
    pub e_target_sq: f64,
}

/// The assembled constants. Same inputs give bit-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingConstants {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub alpha: f64,
    /// Contraction rate `m - alpha`.
    pub beta: f64,
    /// Short-time deviation constant `4M`.
    pub c0: f64,
    /// Local weak error: `|E[Y_h - Y1]| <= (c1 + d1 sqrt(E|Y0|^2)) h^{3/2}`.
    pub c1: f64,
    pub d1: f64,
    /// Local strong error: `E|Y_h - Y1|^2 <= (c2^2 + d2^2 E|Y0|^2) h^2`.
    pub c2: f64,
    pub d2: f64,
    /// Validity ceilings of the two local error bounds, `1/(M^2 + 4 alpha)`.
    pub h1: f64,
    pub h2: f64,
    /// Admissible step ceiling for the global bound.
    pub h_max: f64,
    /// Same ceiling with `(1+8 alpha)` in place of `(1+4 alpha)` in the last
    /// term; reported alongside for cross-checking, the primary value is the
    /// one assembled from the local-error coefficients above.
    pub h_max_coeff_8a: f64,
    /// `sqrt(4 E|Y0|^2 + 6 E_target|Y|^2)`.
    pub u: f64,
    /// `|y*| + |A(y*)|_HS + |g(y*)|/M`.
    pub v: f64,
    /// Bias constant: the asymptotic sampling error is `c_mla sqrt(2h)`.
    pub c_mla: f64,
    /// Upper bound `sqrt(2 (E|Y0|^2 + E_target|Y|^2))` on the initial
    /// transport distance, used by the default mixing-time evaluation.
    pub w0_bound: f64,
    pub dim: usize,
}

impl MixingConstants {
    /// Iterations to reach accuracy `eps` from an initial distance `w0`,
    /// with the step chosen as `eps^2 / (4 c_mla^2)`.
    pub fn mixing_time_from(&self, w0: f64, eps: f64) -> f64 {
        let h = eps * eps / (4.0 * self.c_mla * self.c_mla);
        (1.0 / (self.beta * h)) * (2.0 * 2.0f64.sqrt() * w0 / eps).ln()
    }

    /// Mixing time using the stored initial-distance upper bound.
    pub fn mixing_time(&self, eps: f64) -> f64 {
        self.mixing_time_from(self.w0_bound, eps)
    }

    /// Asymptotic bias term at step size `h`.
    pub fn bias_bound(&self, h: f64) -> f64 {
        self.c_mla * (2.0 * h).sqrt()
    }
}

/// Assemble all constants from instance numbers.
pub fn mixing_constants(inp: &ConstantsInput) -> Result<MixingConstants> {
    let ConstantsInput { rel_m: m, rel_big_m: big_m, alpha, .. } = *inp;
    if !(m > 0.0) || !(big_m >= m) || alpha < 0.0 {
        return Err(MllError::ConfigInvalid(format!(
            "need 0 < m <= M and alpha >= 0, got m={m}, M={big_m}, alpha={alpha}"
        )));
    }
    if alpha >= m {
        return Err(MllError::NotContractive(format!(
            "factor Lipschitz constant alpha={alpha} is not below the monotonicity constant m={m}"
        )));
    }
    let beta = m - alpha;
    let one4a = 1.0 + 4.0 * alpha;
    let v = inp.y_star_norm + inp.a_star_hs + inp.g_star_norm / big_m;
    let c0 = 4.0 * big_m;
    let c1 = 3.0 * big_m * one4a.sqrt() * v;
    let d1 = 2.0 * big_m * one4a.sqrt();
    let c2 = 7.0 * one4a * v;
    let d2 = 5.0 * one4a;
    let h1 = 1.0 / (big_m * big_m + 4.0 * alpha);
    let h2 = h1;
    // Strong order 1 puts the exponent 1/(p2 - 1/2) at 2.
    let term_a = (beta.sqrt() / (4.0 * 2.0f64.sqrt() * d2)).powi(2);
    let term_b = (beta / (8.0 * 2.0f64.sqrt() * (d1 + c0 * d2))).powi(2);
    let h_max = h1.min(h2).min(1.0 / (4.0 * beta)).min(term_a).min(term_b);
    let alt_last = beta * beta
        / (128.0
            * (2.0 * big_m * one4a.sqrt() + 20.0 * big_m * (1.0 + 8.0 * alpha)).powi(2));
    let h_max_coeff_8a = h1.min(1.0 / (4.0 * beta)).min(term_a).min(alt_last);
    let u = (4.0 * inp.e_y0_sq + 6.0 * inp.e_target_sq).sqrt();
    let c_mla = (2.0 / beta) * (c1 + c0 * c2 + 2.0f64.sqrt() * u * (d1 + c0 * d2))
        + (2.0 / beta.sqrt()) * (c2 + 2.0f64.sqrt() * d2 * u);
    let w0_bound = (2.0 * (inp.e_y0_sq + inp.e_target_sq)).sqrt();
    Ok(MixingConstants {
        m,
        big_m,
        alpha,
        beta,
        c0,
        c1,
        d1,
        c2,
        d2,
        h1,
        h2,
        h_max,
        h_max_coeff_8a,
        u,
        v,
        c_mla,
        w0_bound,
        dim: inp.dim,
    })
}

/// Gather the inputs for a concrete instance and assemble the constants.
///
/// The target second moment comes from the closed-form description of the
/// dual target, so the result stays a pure function of the instance.
pub fn constants_for_instance(
    map: &MirrorMap,
    pot: &Potential,
    init: &InitLaw,
) -> Result<MixingConstants> {
    let (m, big_m) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    let anchors = instance_anchors(map, pot)?;
    let target = DualTarget::new(map.clone(), pot.clone())?;
    let e_target_sq = target.dual_second_moment()?;
    mixing_constants(&ConstantsInput {
        rel_m: m,
        rel_big_m: big_m,
        alpha,
        dim: map.primal_dim(),
        y_star_norm: anchors.y_star.norm(),
        a_star_hs: anchors.a_star_hs,
        g_star_norm: anchors.g_star_norm,
        e_y0_sq: init.second_moment(),
        e_target_sq,
    })
}

/// Local weak error ceiling `(c1 + d1 sqrt(E|Y0|^2)) h^{3/2}`.
pub fn weak_error_envelope(big_m: f64, alpha: f64, v: f64, e_y0_sq: f64, h: f64) -> f64 {
    let one4a = 1.0 + 4.0 * alpha;
    let c1 = 3.0 * big_m * one4a.sqrt() * v;
    let d1 = 2.0 * big_m * one4a.sqrt();
    (c1 + d1 * e_y0_sq.sqrt()) * h.powf(1.5)
}

/// Local strong error ceiling `sqrt(c2^2 + d2^2 E|Y0|^2) h` on the
/// root-mean-square scale.
pub fn strong_error_envelope(alpha: f64, v: f64, e_y0_sq: f64, h: f64) -> f64 {
    let one4a = 1.0 + 4.0 * alpha;
    let c2 = 7.0 * one4a * v;
    let d2 = 5.0 * one4a;
    (c2 * c2 + d2 * d2 * e_y0_sq).sqrt() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn orthant_input() -> ConstantsInput {
        // 1-d orthant instance with lambda = 2, b = 1: m = M = 2, alpha = 1,
        // y* = -1/2, A(y*) = 1/2, g(y*) = 0.
        ConstantsInput {
            rel_m: 2.0,
            rel_big_m: 2.0,
            alpha: 1.0,
            dim: 1,
            y_star_norm: 0.5,
            a_star_hs: 0.5,
            g_star_norm: 0.0,
            e_y0_sq: 0.26,
            e_target_sq: 0.5,
        }
    }

    #[test]
    fn orthant_instance_constants() {
        let c = mixing_constants(&orthant_input()).unwrap();
        assert_relative_eq!(c.beta, 1.0);
        assert_relative_eq!(c.c0, 8.0);
        assert_relative_eq!(c.d1, 4.0 * 5.0f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.d2, 25.0);
        // The last term dominates: (beta / (8 sqrt(2) (d1 + c0 d2)))^2.
        let expected = (1.0 / (8.0 * 2.0f64.sqrt() * (4.0 * 5.0f64.sqrt() + 200.0))).powi(2);
        assert_relative_eq!(c.h_max, expected, max_relative = 1e-12);
        assert!((c.h_max - 1.79e-7).abs() < 2e-9, "h_max = {:.4e}", c.h_max);
        assert!(c.h_max_coeff_8a <= c.h_max + 1e-15);
    }

    #[test]
    fn zero_alpha_reduces_to_euclidean_scalings() {
        let mut inp = orthant_input();
        inp.alpha = 0.0;
        inp.rel_m = 1.0;
        inp.rel_big_m = 1.0;
        let c = mixing_constants(&inp).unwrap();
        assert_relative_eq!(c.beta, 1.0);
        assert_relative_eq!(c.d1, 2.0);
        assert_relative_eq!(c.d2, 5.0);
        assert_relative_eq!(c.c2, 7.0 * c.v);
    }

    #[test]
    fn rejects_non_contractive_inputs() {
        let mut inp = orthant_input();
        inp.alpha = 2.0;
        assert!(matches!(mixing_constants(&inp), Err(MllError::NotContractive(_))));
        inp.alpha = 2.5;
        assert!(matches!(mixing_constants(&inp), Err(MllError::NotContractive(_))));
    }

    #[test]
    fn mixing_time_quadruples_when_eps_halves() {
        let c = mixing_constants(&orthant_input()).unwrap();
        let eps = 1e-6;
        let ratio = c.mixing_time(eps / 2.0) / c.mixing_time(eps);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        // Without the log factor the ratio is exactly 4.
        let no_log = |e: f64| 4.0 * c.c_mla * c.c_mla / (c.beta * e * e);
        assert_relative_eq!(no_log(eps / 2.0) / no_log(eps), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn outputs_are_bit_stable() {
        let a = mixing_constants(&orthant_input()).unwrap();
        let b = mixing_constants(&orthant_input()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn instance_gathering_matches_manual_input() {
        let map = MirrorMap::orthant(1).unwrap();
        let pot = Potential::relative_affine(2.0, DVector::from_element(1, 1.0)).unwrap();
        let law = InitLaw::Gaussian { mean: DVector::from_element(1, -0.5), std: 0.1 };
        let c = constants_for_instance(&map, &pot, &law).unwrap();
        let manual = mixing_constants(&orthant_input()).unwrap();
        assert_relative_eq!(c.c_mla, manual.c_mla, max_relative = 1e-12);
        assert_relative_eq!(c.h_max, manual.h_max, max_relative = 1e-12);
    }

    #[test]
    fn gbm_boundary_anchors_extend_continuously() {
        let map = MirrorMap::gbm1d(0.25).unwrap();
        let pot = Potential::RelativeAffine { lambda: 1.0, shift: DVector::zeros(1) };
        let a = instance_anchors(&map, &pot).unwrap();
        assert_eq!(a.y_star[0], 0.0);
        assert_eq!(a.a_star_hs, 0.0);
        assert_eq!(a.g_star_norm, 0.0);
    }
}
