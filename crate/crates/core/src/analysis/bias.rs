//! Asymptotic sampling bias as a function of step size.
//!
//! For each step size the chains are run long past their mixing time
//! (`exp(-beta h k) < 1e-3`), then the empirical transport distance between
//! the chain law and an equal-size exact target sample is averaged over a
//! thinned set of late-iterate snapshots. The fitted log-log slope against
//! `h` is the observed bias order.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run_chains_with_snapshots, ChainOptions, InitLaw, ViolationPolicy};
use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::{DualTarget, Potential};
use crate::rng::{derive_seed, STREAM_SLICE};
use crate::transport::{bootstrap_half_width_1d, w2_1d, w2_assignment, BOOTSTRAP_RESAMPLES};

use super::order::{fit_order, OrderFit};

#[derive(Debug, Clone, Serialize)]
pub struct BiasPoint {
    pub h: f64,
    /// Mean late-iterate transport distance to the exact target sample.
    pub w2: f64,
    pub half_width: f64,
    pub burn_in: usize,
    pub total_iterations: usize,
    pub slices: usize,
    pub violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasScan {
    pub points: Vec<BiasPoint>,
    pub fit: OrderFit,
    /// Per-slice distances for each step size, for trace output.
    pub traces: Vec<Vec<(usize, f64)>>,
}

/// Asymptotic bias over a decreasing step grid.
pub fn bias_scan(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    h_grid: &[f64],
    chains: usize,
    slices: usize,
    policy: ViolationPolicy,
    seed: u64,
) -> Result<BiasScan> {
    let target = DualTarget::new(map.clone(), pot.clone())?;
    if !target.exact_sampler_available() {
        return Err(MllError::Unsupported(
            "bias scan needs an exact sampler for the dual target".into(),
        ));
    }
    let (m, _) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    if alpha >= m {
        return Err(MllError::NotContractive(format!(
            "bias scan assumes contraction (alpha={alpha}, m={m})"
        )));
    }
    let beta = m - alpha;
    if slices < 2 {
        return Err(MllError::ConfigInvalid("need at least two snapshot slices".into()));
    }
    if map.primal_dim() > 1 && chains > crate::transport::ASSIGNMENT_MAX_N {
        return Err(MllError::Unsupported(
            "multi-dimensional bias scans are limited to assignment-size chain counts".into(),
        ));
    }

    let mut points = Vec::with_capacity(h_grid.len());
    let mut traces = Vec::with_capacity(h_grid.len());
    for (hi, &h) in h_grid.iter().enumerate() {
        let burn = ((1000.0f64).ln() / (beta * h)).ceil() as usize;
        let total = burn + (burn / 3).max(slices);
        let gap = (total - burn) / slices;
        let snapshot_ks: Vec<usize> = (1..=slices).map(|s| burn + s * gap).collect();

        let seed_h = derive_seed(seed, &[0xB1A5, hi as u64]);
        let init = law.draw_set(chains, seed_h, Some(map))?;
        let opts = ChainOptions { h, iterations: *snapshot_ks.last().unwrap(), policy, h_cap: None };
        let (snaps, stats) = run_chains_with_snapshots(map, pot, &init, &opts, &snapshot_ks, seed_h)?;

        let slice_w2: Vec<f64> = snaps
            .par_iter()
            .enumerate()
            .map(|(s, set)| -> Result<f64> {
                let exact_seed = derive_seed(seed_h, &[STREAM_SLICE, s as u64]);
                let exact = target.exact_dual_samples(chains, exact_seed)?;
                if map.primal_dim() == 1 {
                    Ok(w2_1d(&set.as_1d()?, &exact.as_1d()?)?.value)
                } else {
                    Ok(w2_assignment(set.data(), exact.data())?.value)
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let s = slice_w2.len() as f64;
        let mean = slice_w2.iter().sum::<f64>() / s;
        let scatter_var =
            slice_w2.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s - 1.0);
        let scatter_se = (scatter_var / s).sqrt();

        // Late-iterate flatness: halves must agree within combined noise.
        let half = slice_w2.len() / 2;
        let m1 = slice_w2[..half].iter().sum::<f64>() / half as f64;
        let m2 = slice_w2[half..].iter().sum::<f64>() / (slice_w2.len() - half) as f64;
        let half_se = (scatter_var / half as f64).sqrt();
        let tol = 3.0 * (2.0f64).sqrt() * half_se + 0.02 * mean;
        if (m1 - m2).abs() > tol {
            return Err(MllError::InsufficientBurnIn(format!(
                "late-iterate distance trend not flat at h={h}: {m1:.4e} vs {m2:.4e} (tol {tol:.4e})"
            )));
        }

        // Bootstrap the last slice for the estimator's own noise. Slices are
        // partially correlated through the chains, so the average is only
        // credited with half the slices; the slice scatter covers the rest.
        let boot = if map.primal_dim() == 1 {
            let last = snaps.last().unwrap().as_1d()?;
            let exact_seed = derive_seed(seed_h, &[STREAM_SLICE, (slice_w2.len() - 1) as u64]);
            let exact = target.exact_dual_samples(chains, exact_seed)?.as_1d()?;
            bootstrap_half_width_1d(&last, &exact, BOOTSTRAP_RESAMPLES, seed_h)?
        } else {
            0.0
        };
        let half_width = (boot / (s / 2.0).sqrt()).max(1.96 * scatter_se);

        points.push(BiasPoint {
            h,
            w2: mean,
            half_width,
            burn_in: burn,
            total_iterations: opts.iterations,
            slices: slice_w2.len(),
            violations: stats.violations,
        });
        traces.push(snapshot_ks.iter().copied().zip(slice_w2).collect());
    }

    let errors: Vec<f64> = points.iter().map(|p| p.w2).collect();
    let hws: Vec<f64> = points.iter().map(|p| p.half_width).collect();
    let fit = fit_order(h_grid, &errors, &hws)?;
    Ok(BiasScan { points, fit, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn euclidean_bias_matches_stationary_variance_gap() {
        // Chain variance at step h is 1/(1 - h/2); the distance to the unit
        // Gaussian is |sqrt(v) - 1| = 0.02598 at h = 0.1.
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let law = InitLaw::Gaussian { mean: vec1(0.0), std: 0.1 };
        let scan = bias_scan(
            &map,
            &pot,
            &law,
            &[0.3, 0.2, 0.1, 0.07],
            40_000,
            8,
            ViolationPolicy::Fail,
            17,
        )
        .unwrap();
        let p = &scan.points[2];
        assert!((p.h - 0.1).abs() < 1e-12);
        let expected = 1.0 / (1.0 - 0.05f64).sqrt() - 1.0;
        assert!(
            (p.w2 - expected).abs() <= p.half_width + 0.15 * expected,
            "bias {} vs {expected} (hw {})",
            p.w2,
            p.half_width
        );
        // Additive noise: bias is first order in h.
        assert!(scan.fit.slope > 0.7 && scan.fit.slope < 1.3, "slope {}", scan.fit.slope);
    }
}
