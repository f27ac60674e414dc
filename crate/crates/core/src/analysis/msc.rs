//! Modified self-concordance of the pinned barrier factor.
//!
//! The quantity of interest is the pairwise ratio
//! `|C(x') - C(x)|_HS^2 / |grad(x') - grad(x)|^2`; its supremum over the
//! domain is the squared Lipschitz constant of the dual-side factor. For
//! the polytope log-barrier the ratio reduces to a Rayleigh quotient of the
//! constraint Gram matrix, which caps it at `1/sigma_min^2` and makes the
//! supremum attainable along the bottom singular direction.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::rng::{stream, STREAM_PROBE};

/// Factor-difference to gradient-difference ratio for one pair of interior
/// points.
pub fn msc_pair_ratio(map: &MirrorMap, x: &DVector<f64>, x2: &DVector<f64>) -> Result<f64> {
    let c1 = map.hessian_sqrt_factor(x)?;
    let c2 = map.hessian_sqrt_factor(x2)?;
    let g1 = map.grad(x)?;
    let g2 = map.grad(x2)?;
    let den = (&g2 - &g1).norm_squared();
    let scale = (1.0 + g1.norm()) * 1e-12;
    if den <= scale * scale {
        return Err(MllError::DegeneratePair(
            "dual images coincide; the ratio is undefined".into(),
        ));
    }
    Ok((&c2 - &c1).norm_squared() / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct MscReport {
    pub factor_name: String,
    /// `1/sigma_min^2` where the Gram-matrix bound applies.
    pub analytic_upper: Option<f64>,
    /// Largest ratio found over the probe pairs (a lower bound on the true
    /// supremum).
    pub empirical_sup: f64,
    /// Probe pair achieving `empirical_sup`.
    pub witness_pair: (Vec<f64>, Vec<f64>),
    /// Singular values of the constraint matrix, descending.
    pub singular_values: Vec<f64>,
    pub probe_pairs: usize,
    /// `empirical_sup <= analytic_upper + 1e-9` whenever the bound applies.
    pub within_bound: bool,
}

/// Two-halfspace cone family in the plane: normals `(1, 0)` and
/// `(sqrt(1-eps^2), eps)`, both through the origin.
pub fn epsilon_family_map(eps: f64) -> Result<MirrorMap> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(MllError::ConfigInvalid(format!("eps must be in (0,1), got {eps}")));
    }
    let s = (1.0 - eps * eps).sqrt();
    MirrorMap::polytope(&[vec![1.0, 0.0], vec![s, eps]], &[0.0, 0.0], None)
}

/// The analytic worst pair of the epsilon family: the second point is
/// placed so the slack-weighted direction aligns with the bottom singular
/// vector of the constraint Gram matrix, where the ratio attains
/// `1/(1 - sqrt(1 - eps^2))`.
pub fn epsilon_family_witness(eps: f64) -> (DVector<f64>, DVector<f64>) {
    let s = (1.0 - eps * eps).sqrt();
    let x = DVector::from_column_slice(&[1.0, 0.0]);
    let x2 = DVector::from_column_slice(&[2.0, -2.0 * s * (s + 1.0) / (eps * (s + 2.0))]);
    (x, x2)
}

/// Probe a polytope barrier with random interior pairs (plus the analytic
/// witness family when the map matches the planar cone pattern) and report
/// the empirical supremum against the Gram-matrix bound.
pub fn msc_report_polytope(map: &MirrorMap, probe_pairs: usize, seed: u64) -> Result<MscReport> {
    let barrier = match map {
        MirrorMap::PolytopeLogBarrier(p) => p,
        _ => {
            return Err(MllError::Unsupported(
                "self-concordance report applies to polytope barriers".into(),
            ))
        }
    };
    let sigma = barrier.singular_values().to_vec();
    let smallest = *sigma.last().unwrap();
    if smallest == 0.0 {
        return Err(MllError::SingularConstraints("zero smallest singular value".into()));
    }
    let analytic = 1.0 / (smallest * smallest);

    let mut best = 0.0f64;
    let mut witness: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut rng = stream(seed, &[STREAM_PROBE]);
    let mut evaluated = 0;
    while evaluated < probe_pairs {
        let x = map.sample_interior(&mut rng);
        let x2 = map.sample_interior(&mut rng);
        match msc_pair_ratio(map, &x, &x2) {
            Ok(r) => {
                evaluated += 1;
                if r > best {
                    best = r;
                    witness = Some((x, x2));
                }
            }
            Err(MllError::DegeneratePair(_)) => continue,
            Err(e) => return Err(e),
        }
    }

    // Planar cone pattern: include the analytic witness family.
    let normals = barrier.normals();
    if normals.nrows() == 2
        && normals.ncols() == 2
        && barrier.offsets().iter().all(|&b| b == 0.0)
        && (normals[(0, 0)] - 1.0).abs() < 1e-12
        && normals[(1, 0)].abs() < 1e-12
        && normals[(1, 1)] > 0.0
    {
        let eps = normals[(1, 1)];
        for scale in [0.5, 1.0, 2.0] {
            let (mut x, mut x2) = epsilon_family_witness(eps);
            x *= scale;
            x2 *= scale;
            if let Ok(r) = msc_pair_ratio(map, &x, &x2) {
                if r > best {
                    best = r;
                    witness = Some((x, x2));
                }
            }
        }
    }

    let (wx, wx2) = witness.ok_or_else(|| {
        MllError::DegeneratePair("no valid probe pair produced a ratio".into())
    })?;
    Ok(MscReport {
        factor_name: map.factor_name().to_string(),
        analytic_upper: Some(analytic),
        empirical_sup: best,
        witness_pair: (wx.iter().copied().collect(), wx2.iter().copied().collect()),
        singular_values: sigma,
        probe_pairs: evaluated,
        within_bound: best <= analytic + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn quadratic_factor_is_constant() {
        let map = MirrorMap::quadratic(2).unwrap();
        let r = msc_pair_ratio(&map, &vec2(0.3, -1.0), &vec2(2.0, 0.5)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn orthant_ratio_in_one_dimension() {
        let map = MirrorMap::orthant(1).unwrap();
        let r = msc_pair_ratio(
            &map,
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 2.0),
        )
        .unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gbm_ratio_is_alpha_everywhere() {
        let map = MirrorMap::gbm1d(0.25).unwrap();
        let mut rng = stream(3, &[1]);
        for _ in 0..200 {
            let x = map.sample_interior(&mut rng);
            let x2 = map.sample_interior(&mut rng);
            if let Ok(r) = msc_pair_ratio(&map, &x, &x2) {
                assert_relative_eq!(r, 0.25, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let map = MirrorMap::orthant(2).unwrap();
        let x = vec2(1.0, 2.0);
        assert!(matches!(
            msc_pair_ratio(&map, &x, &x),
            Err(MllError::DegeneratePair(_))
        ));
    }

    #[test]
    fn identity_constraints_have_unit_bound() {
        let map = MirrorMap::polytope(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 0.0], None).unwrap();
        let rep = msc_report_polytope(&map, 2000, 5).unwrap();
        assert_relative_eq!(rep.analytic_upper.unwrap(), 1.0, max_relative = 1e-12);
        assert!(rep.empirical_sup <= 1.0 + 1e-9);
        assert!(rep.within_bound);
    }

    #[test]
    fn epsilon_family_witness_attains_the_bound() {
        for eps in [0.4, 0.2, 0.1] {
            let map = epsilon_family_map(eps).unwrap();
            let (x, x2) = epsilon_family_witness(eps);
            let r = msc_pair_ratio(&map, &x, &x2).unwrap();
            let bound = 1.0 / (1.0 - (1.0 - eps * eps).sqrt());
            assert_relative_eq!(r, bound, max_relative = 1e-6);
        }
        // eps = 0.2 evaluates to 1/(1 - sqrt(0.96)).
        let bound = 1.0 / (1.0 - 0.96f64.sqrt());
        assert!((bound - 49.4949).abs() < 1e-3);
    }

    #[test]
    fn probe_sup_never_exceeds_the_bound() {
        let map = epsilon_family_map(0.2).unwrap();
        let rep = msc_report_polytope(&map, 5000, 11).unwrap();
        assert!(rep.within_bound);
        // The witness family is included, so the sup is essentially tight.
        let bound = rep.analytic_upper.unwrap();
        assert!(rep.empirical_sup > 0.99 * bound);
    }
}
