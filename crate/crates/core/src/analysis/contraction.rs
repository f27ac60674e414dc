//! Contraction-rate estimation from synchronously coupled chain pairs.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{coupled_pair_series, InitLaw};
use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::Potential;
use crate::rng::{stream, STREAM_CHAIN, STREAM_INIT};

use super::order::fit_order;

/// Fitted exponential decay of the mean squared coupled distance.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Decay rate per unit time of `sqrt(E[dist^2])`.
    pub rate: f64,
    pub rate_ci: (f64, f64),
    /// Raised when the fitted distances grow instead of decaying.
    pub non_contracting: bool,
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub aborted_pairs: usize,
}

/// Run `pairs` synchronously coupled chains from `y0 ~ law` and
/// `y0 + offset`, record mean squared distances on an iteration grid, and
/// fit `log E[dist^2] = a - 2 rate t`.
pub fn contraction_rate(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    offset: &DVector<f64>,
    pairs: usize,
    h: f64,
    steps: usize,
    grid_points: usize,
    seed: u64,
) -> Result<RateFit> {
    if pairs < 8 || grid_points < 4 || steps < grid_points {
        return Err(MllError::ConfigInvalid(
            "need >= 8 pairs and a grid of >= 4 points within the step count".into(),
        ));
    }
    if offset.len() != map.primal_dim() {
        return Err(MllError::SizeMismatch("offset dimension does not match the map".into()));
    }
    let mut record_ks: Vec<usize> =
        (1..=grid_points).map(|j| j * steps / grid_points).collect();
    record_ks.dedup();

    let series: Vec<Option<Vec<f64>>> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<Option<Vec<f64>>> {
            let mut init_rng = stream(seed, &[STREAM_INIT, p as u64]);
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
                MllError::DomainViolation("could not place a coupled pair in the dual region".into())
            })?;
            let mut rng = stream(seed, &[STREAM_CHAIN, p as u64]);
            match coupled_pair_series(map, pot, &y0, &y0b, h, &record_ks, &mut rng) {
                Ok(v) => Ok(Some(v)),
                Err(MllError::DomainViolation(_)) | Err(MllError::NoConvergence(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let kept: Vec<&Vec<f64>> = series.iter().flatten().collect();
    let aborted = pairs - kept.len();
    if aborted as f64 > 0.01 * pairs as f64 {
        return Err(MllError::ExecutionFailed(format!(
            "{aborted} of {pairs} coupled pairs aborted on domain violations (> 1%)"
        )));
    }
    let n = kept.len() as f64;
    let mut mean_sq = vec![0.0; record_ks.len()];
    for s in &kept {
        for (j, v) in s.iter().enumerate() {
            mean_sq[j] += v;
        }
    }
    for v in &mut mean_sq {
        *v /= n;
    }
    let mut half_widths = vec![0.0; record_ks.len()];
    for j in 0..record_ks.len() {
        let var = kept
            .iter()
            .map(|s| (s[j] - mean_sq[j]) * (s[j] - mean_sq[j]))
            .sum::<f64>()
            / (n - 1.0);
        half_widths[j] = 1.96 * (var / n).sqrt();
    }
    let times: Vec<f64> = record_ks.iter().map(|&k| k as f64 * h).collect();

    // Reuse the power-law fitter on (e^{-t}, mean_sq): a grid in x = e^{-t}
    // is strictly decreasing, ln x = -t, so the fitted slope s in
    // "mean_sq ~ x^s" means mean_sq ~ e^{-s t}, i.e. rate = s / 2.
    let xs: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
    let fit = fit_order(&xs, &mean_sq, &half_widths)?;
    let rate = fit.slope / 2.0;
    let rate_ci = (fit.slope_ci.0 / 2.0, fit.slope_ci.1 / 2.0);
    Ok(RateFit {
        rate,
        rate_ci,
        non_contracting: rate <= 0.0,
        times,
        mean_sq,
        half_widths,
        aborted_pairs: aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn euclidean_rate_matches_discrete_recursion() {
        // Synchronous noise cancels; the gap shrinks by (1-h) each step, so
        // the fitted rate is -log(1-h)/h, which tends to the unit rate.
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let law = InitLaw::Point(vec1(0.0));
        let h = 0.01;
        let fit = contraction_rate(&map, &pot, &law, &vec1(1.0), 16, h, 200, 8, 3).unwrap();
        let expected = -(1.0f64 - h).ln() / h;
        assert!((fit.rate - expected).abs() <= 1e-6, "{} vs {expected}", fit.rate);
        assert!(!fit.non_contracting);
    }

    #[test]
    fn orthant_instance_contracts_at_unit_rate() {
        let map = MirrorMap::orthant(1).unwrap();
        let pot = Potential::relative_affine(2.0, vec1(1.0)).unwrap();
        let law = InitLaw::Gaussian { mean: vec1(-0.5), std: 0.05 };
        let fit = contraction_rate(&map, &pot, &law, &vec1(-0.4), 30_000, 1e-3, 500, 8, 7).unwrap();
        assert!(
            (fit.rate - 1.0).abs() <= 0.2,
            "rate {} should be within 20% of 1",
            fit.rate
        );
    }

    #[test]
    fn gbm_rate_flips_sign_across_the_threshold() {
        let law = InitLaw::Point(vec1(1.0));
        let pot = Potential::RelativeAffine { lambda: 1.0, shift: DVector::zeros(1) };
        let below = contraction_rate(
            &MirrorMap::gbm1d(0.8).unwrap(),
            &pot,
            &law,
            &vec1(0.5),
            30_000,
            1e-3,
            200,
            8,
            11,
        )
        .unwrap();
        assert!(below.rate > 0.0 && !below.non_contracting, "rate {}", below.rate);
        let above = contraction_rate(
            &MirrorMap::gbm1d(1.25).unwrap(),
            &pot,
            &law,
            &vec1(0.5),
            30_000,
            1e-3,
            200,
            8,
            11,
        )
        .unwrap();
        assert!(above.non_contracting, "rate {}", above.rate);
    }
}
