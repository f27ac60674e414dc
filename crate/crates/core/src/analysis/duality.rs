//! Whole-map consistency suite: inverse-map roundtrip, factor reproduction,
//! finite-difference agreement, factor consistency across sides, and
//! primal/dual step equivalence, each reported as a worst case over random
//! interior points.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::engine::{mla_step_dual, mla_step_primal};
use crate::error::Result;
use crate::maps::MirrorMap;
use crate::potentials::Potential;
use crate::rng::{stream, STREAM_PROBE};

#[derive(Debug, Clone, Serialize)]
pub struct MapSuiteResult {
    pub map_name: String,
    pub points: usize,
    /// `|dual_grad(grad(x)) - x| / (1 + |x|)`, tolerance 1e-8.
    pub max_roundtrip: f64,
    /// `|C C' - hessian| / |hessian|`, tolerance 1e-10.
    pub max_factor_residual: f64,
    /// Central-difference check of the barrier gradient, tolerance 1e-4.
    pub max_grad_fd: f64,
    /// Central-difference check of the Hessian, tolerance 1e-3.
    pub max_hessian_fd: f64,
    /// `|A(grad(x)) - C(x)|`, tolerance 1e-9 (scaled).
    pub max_factor_consistency: f64,
    /// Primal step vs dual step pushed back, tolerance 1e-8 (scaled).
    pub max_step_discrepancy: f64,
    pub steps_checked: usize,
    pub passed: bool,
}

/// Run the suite on each `(map, potential)` case with `points` random
/// interior points.
pub fn duality_suite(
    cases: &[(MirrorMap, Potential)],
    points: usize,
    seed: u64,
) -> Result<Vec<MapSuiteResult>> {
    let h = 1e-3;
    cases
        .iter()
        .enumerate()
        .map(|(ci, (map, pot))| -> Result<MapSuiteResult> {
            let mut rng = stream(seed, &[STREAM_PROBE, ci as u64]);
            let d = map.primal_dim();
            let mut max_roundtrip = 0.0f64;
            let mut max_factor = 0.0f64;
            let mut max_grad_fd = 0.0f64;
            let mut max_hess_fd = 0.0f64;
            let mut max_consistency = 0.0f64;
            let mut max_step = 0.0f64;
            let mut steps_checked = 0;
            for _ in 0..points {
                let x = map.sample_interior(&mut rng);
                let y = map.grad(&x)?;
                let back = map.dual_grad(&y)?;
                max_roundtrip = max_roundtrip.max((&back - &x).norm() / (1.0 + x.norm()));

                let c = map.hessian_sqrt_factor(&x)?;
                let hess = map.hessian(&x)?;
                max_factor = max_factor.max((&c * c.transpose() - &hess).norm() / hess.norm());

                let a = map.dual_inv_sqrt_factor(&y)?;
                max_consistency = max_consistency.max((&a - &c).norm() / (1.0 + c.norm()));

                let step = 1e-6 * (1.0 + x.norm());
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += step;
                    xm[i] -= step;
                    let fd = (map.phi(&xp)? - map.phi(&xm)?) / (2.0 * step);
                    max_grad_fd = max_grad_fd.max((fd - y[i]).abs() / (1.0 + y[i].abs()));
                    let gp = map.grad(&xp)?;
                    let gm = map.grad(&xm)?;
                    for j in 0..d {
                        let fd2 = (gp[j] - gm[j]) / (2.0 * step);
                        max_hess_fd =
                            max_hess_fd.max((fd2 - hess[(j, i)]).abs() / (1.0 + hess[(j, i)].abs()));
                    }
                }

                // Primal/dual step equivalence with a shared draw; skip the
                // rare draw that exits the domain (both forms exit together).
                let z = DVector::from_fn(map.noise_dim(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                if let Ok(y_next) = mla_step_dual(map, pot, &y, h, &z) {
                    let x_next = mla_step_primal(map, pot, &x, h, &z)?;
                    let via_dual = map.dual_grad(&y_next)?;
                    max_step = max_step
                        .max((&x_next - &via_dual).norm() / (1.0 + via_dual.norm()));
                    steps_checked += 1;
                }
            }
            let passed = max_roundtrip <= 1e-8
                && max_factor <= 1e-10
                && max_grad_fd <= 1e-4
                && max_hess_fd <= 1e-3
                && max_consistency <= 1e-9
                && max_step <= 1e-8
                && steps_checked * 100 >= points * 95;
            Ok(MapSuiteResult {
                map_name: map.kind().name().to_string(),
                points,
                max_roundtrip,
                max_factor_residual: max_factor,
                max_grad_fd,
                max_hessian_fd: max_hess_fd,
                max_factor_consistency: max_consistency,
                max_step_discrepancy: max_step,
                steps_checked,
                passed,
            })
        })
        .collect()
}

/// The four canonical map/potential cases the verification suite exercises.
pub fn canonical_suite_cases() -> Result<Vec<(MirrorMap, Potential)>> {
    let s = (1.0f64 - 0.04).sqrt();
    Ok(vec![
        (
            MirrorMap::quadratic(3)?,
            Potential::quadratic_gaussian(1.0)?,
        ),
        (
            MirrorMap::orthant(2)?,
            Potential::relative_affine(2.0, DVector::from_column_slice(&[1.0, 1.0]))?,
        ),
        (
            MirrorMap::polytope(&[vec![1.0, 0.0], vec![s, 0.2]], &[0.0, 0.0], None)?,
            Potential::relative_affine(1.5, DVector::from_column_slice(&[0.5, 0.5]))?,
        ),
        (
            MirrorMap::gbm1d(0.25)?,
            Potential::relative_affine(1.0, DVector::from_element(1, 0.2))?,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_suite_passes() {
        let cases = canonical_suite_cases().unwrap();
        let results = duality_suite(&cases, 200, 3).unwrap();
        assert_eq!(results.len(), 4);
        for r in &results {
            assert!(r.passed, "{} failed: {r:?}", r.map_name);
        }
    }
}
