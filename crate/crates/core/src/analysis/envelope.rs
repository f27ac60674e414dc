//! Short-time deviation and growth envelopes of the continuous dynamics,
//! measured with the fine reference integrator.
//!
//! Deviation: synchronously coupled solutions started `offset` apart satisfy
//! `E[|(Y'_t - Y'_0) - (Y_t - Y_0)|^2] <= 4M E[|Y'_0 - Y_0|^2] t` for all t.
//!
//! Growth: for `0 < t <= 1/(M^2 + 4 alpha)`,
//! `E[|Y_t - Y_0|^2] <= gamma t` with
//! `gamma = 8(1+4a) E|Y_0|^2 + 8(1+4a) |y*|^2 + 16 |A(y*)|_HS^2 + (4/M^2) |g(y*)|^2`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{em_fine_pair_record, em_fine_record, BrownianPath, InitLaw};
use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::Potential;
use crate::rng::{derive_seed, stream, STREAM_INIT, STREAM_PATH};

use super::constants::instance_anchors;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopePoint {
    pub t: f64,
    /// Measured left-hand side (a mean squared displacement).
    pub lhs: f64,
    /// 95% Monte Carlo half-width of `lhs`.
    pub half_width: f64,
    /// Envelope value at this time.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub points: Vec<EnvelopePoint>,
    /// Largest measured `lhs / (reference * t)` over the grid, where the
    /// reference is `E|offset|^2` for deviation and `gamma` for growth.
    pub max_ratio: f64,
    /// The envelope constant: `4M` for deviation, `gamma` for growth.
    pub bound_constant: f64,
    /// Every grid point satisfies `lhs <= bound + 3 MC standard errors`.
    pub passed: bool,
    pub discarded: usize,
}

fn snapped_grid(t_grid: &[f64], fine_per_interval: usize) -> Result<(usize, Vec<usize>, Vec<f64>)> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MllError::ConfigInvalid("time grid must be positive and strictly increasing".into()));
    }
    let t_max = *t_grid.last().unwrap();
    let total = fine_per_interval * t_grid.len();
    let dt = t_max / total as f64;
    let mut js = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let j = ((t / t_max) * total as f64).round() as usize;
        let j = j.clamp(1, total);
        if js.last() == Some(&j) {
            return Err(MllError::ConfigInvalid("time grid too dense for the fine resolution".into()));
        }
        js.push(j);
    }
    let snapped: Vec<f64> = js.iter().map(|&j| j as f64 * dt).collect();
    Ok((total, js, snapped))
}

/// Measure the synchronous-coupling deviation ratio on a time grid.
pub fn deviation_check(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    offset: &DVector<f64>,
    t_grid: &[f64],
    replicas: usize,
    fine_per_interval: usize,
    seed: u64,
) -> Result<EnvelopeReport> {
    let (m, big_m) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    if alpha >= m {
        return Err(MllError::NotContractive(format!(
            "deviation envelope assumes alpha < m (alpha={alpha}, m={m})"
        )));
    }
    let (total, js, snapped) = snapped_grid(t_grid, fine_per_interval)?;
    let t_max = *snapped.last().unwrap();
    let offset_sq = offset.norm_squared();
    if offset_sq == 0.0 {
        return Err(MllError::ConfigInvalid("offset must be nonzero".into()));
    }

    let rows: Vec<Option<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Option<Vec<f64>>> {
            let mut init_rng = stream(seed, &[STREAM_INIT, r as u64]);
            let mut start = None;
            for _ in 0..100 {
                let y0 = law.sample(&mut init_rng);
                let y0b = &y0 + offset;
                if map.dual_in_domain(&y0) && map.dual_in_domain(&y0b) {
                    start = Some((y0, y0b));
                    break;
                }
            }
            let (y0, y0b) = start.ok_or_else(|| {
                MllError::DomainViolation("initial pair not placeable in the dual region".into())
            })?;
            let path_seed = derive_seed(seed, &[STREAM_PATH, r as u64]);
            let path = BrownianPath::from_seed(path_seed, t_max, total, map.noise_dim());
            match em_fine_pair_record(map, pot, &y0, &y0b, &path, &js) {
                Ok(states) => {
                    let vals = states
                        .iter()
                        .map(|(a, b)| ((b - &y0b) - (a - &y0)).norm_squared())
                        .collect();
                    Ok(Some(vals))
                }
                Err(MllError::DomainViolation(_)) | Err(MllError::NoConvergence(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let report = summarize(rows, &snapped, replicas, |t| 4.0 * big_m * offset_sq * t, offset_sq)?;
    Ok(report)
}

/// Exact growth-envelope constant `gamma` for an instance and initial law.
pub fn growth_gamma(map: &MirrorMap, pot: &Potential, law: &InitLaw) -> Result<f64> {
    let (_, big_m) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    let anchors = instance_anchors(map, pot)?;
    let one4a = 1.0 + 4.0 * alpha;
    Ok(8.0 * one4a * law.second_moment()
        + 8.0 * one4a * anchors.y_star.norm_squared()
        + 16.0 * anchors.a_star_hs * anchors.a_star_hs
        + 4.0 / (big_m * big_m) * anchors.g_star_norm * anchors.g_star_norm)
}

/// Measure `E[|Y_t - Y_0|^2]` against `gamma t` on a grid inside the
/// validity window `(0, 1/(M^2 + 4 alpha)]`.
pub fn growth_check(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    t_grid: &[f64],
    replicas: usize,
    fine_per_interval: usize,
    seed: u64,
) -> Result<EnvelopeReport> {
    let (_, big_m) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    let window = 1.0 / (big_m * big_m + 4.0 * alpha);
    if *t_grid.last().unwrap_or(&f64::INFINITY) > window + 1e-12 {
        return Err(MllError::ConfigInvalid(format!(
            "growth grid exceeds the validity window {window:.6}"
        )));
    }
    let gamma = growth_gamma(map, pot, law)?;
    let (total, js, snapped) = snapped_grid(t_grid, fine_per_interval)?;
    let t_max = *snapped.last().unwrap();

    let rows: Vec<Option<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Option<Vec<f64>>> {
            let y0 = law.sample_indexed(seed, r, Some(map))?;
            let path_seed = derive_seed(seed, &[STREAM_PATH, r as u64]);
            let path = BrownianPath::from_seed(path_seed, t_max, total, map.noise_dim());
            match em_fine_record(map, pot, &y0, &path, &js) {
                Ok(states) => Ok(Some(states.iter().map(|s| (s - &y0).norm_squared()).collect())),
                Err(MllError::DomainViolation(_)) | Err(MllError::NoConvergence(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    summarize(rows, &snapped, replicas, |t| gamma * t, gamma)
}

fn summarize(
    rows: Vec<Option<Vec<f64>>>,
    snapped: &[f64],
    replicas: usize,
    bound_at: impl Fn(f64) -> f64,
    reference: f64,
) -> Result<EnvelopeReport> {
    let kept: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let discarded = replicas - kept.len();
    if (discarded as f64) > 0.05 * replicas as f64 {
        return Err(MllError::ExecutionFailed(format!(
            "{discarded} of {replicas} fine-scale replicas hit domain violations"
        )));
    }
    let n = kept.len() as f64;
    let mut points = Vec::with_capacity(snapped.len());
    let mut max_ratio: f64 = 0.0;
    let mut passed = true;
    for (j, &t) in snapped.iter().enumerate() {
        let mean = kept.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = kept.iter().map(|v| (v[j] - mean) * (v[j] - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let bound = bound_at(t);
        if mean > bound + 3.0 * se {
            passed = false;
        }
        max_ratio = max_ratio.max(mean / (reference * t));
        points.push(EnvelopePoint { t, lhs: mean, half_width: 1.96 * se, bound });
    }
    // The constant in `bound_at` is linear in t: recover it from t = 1.
    Ok(EnvelopeReport { points, max_ratio, bound_constant: bound_at(1.0), passed, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn orthant_instance() -> (MirrorMap, Potential, InitLaw) {
        (
            MirrorMap::orthant(1).unwrap(),
            Potential::relative_affine(2.0, vec1(1.0)).unwrap(),
            InitLaw::Gaussian { mean: vec1(-0.5), std: 0.1 },
        )
    }

    #[test]
    fn gamma_formula_orthant() {
        let (map, pot, law) = orthant_instance();
        // alpha = 1, E|Y0|^2 = 0.26, y* = -1/2, A(y*) = 1/2, g(y*) = 0:
        // gamma = 40 * 0.26 + 40 * 0.25 + 16 * 0.25 = 24.4.
        let gamma = growth_gamma(&map, &pot, &law).unwrap();
        approx::assert_relative_eq!(gamma, 24.4, max_relative = 1e-12);
    }

    #[test]
    fn deviation_envelope_holds_on_orthant() {
        let (map, pot, law) = orthant_instance();
        let grid = [0.02, 0.04, 0.06, 0.08, 0.10, 0.12];
        let rep = deviation_check(&map, &pot, &law, &vec1(-0.3), &grid, 4000, 128, 3).unwrap();
        assert!(rep.passed, "max ratio {}", rep.max_ratio);
        // 4M = 8 for this instance.
        assert!(rep.max_ratio <= 8.0 + 1.0, "ratio {}", rep.max_ratio);
        assert_eq!(rep.points.len(), 6);
    }

    #[test]
    fn growth_envelope_holds_on_orthant() {
        let (map, pot, law) = orthant_instance();
        let grid = [0.02, 0.04, 0.06, 0.08, 0.10, 0.125];
        let rep = growth_check(&map, &pot, &law, &grid, 4000, 128, 5).unwrap();
        assert!(rep.passed);
        assert!(rep.max_ratio < 1.0, "growth should sit well inside gamma t, got {}", rep.max_ratio);
    }

    #[test]
    fn growth_grid_outside_window_is_rejected() {
        let (map, pot, law) = orthant_instance();
        // Window is 1/8 = 0.125 for this instance.
        assert!(matches!(
            growth_check(&map, &pot, &law, &[0.05, 0.2], 100, 64, 1),
            Err(MllError::ConfigInvalid(_))
        ));
    }

    #[test]
    fn euclidean_deviation_ratio_is_bounded_by_2m() {
        // Additive noise drops the coupling noise term entirely; the exact
        // deviation for the linear drift is (e^{-t} - 1)^2 |offset|^2 <= t^2,
        // far inside 4M t.
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let law = InitLaw::Point(vec1(0.3));
        let grid = [0.05, 0.1, 0.15, 0.2, 0.25];
        let rep = deviation_check(&map, &pot, &law, &vec1(1.0), &grid, 500, 64, 9).unwrap();
        assert!(rep.passed);
        // Exact ratio at t: (1 - e^{-t})^2 / t <= t; bound constant is 4.
        assert!(rep.max_ratio <= 2.0);
    }
}
