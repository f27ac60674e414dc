//! One-step weak and strong error of the sampler against a coupled
//! fine-resolution reference.
//!
//! For each replica a fine Gaussian increment table over `[0, h]` drives
//! both a fine-step reference solution and the single coarse step that
//! consumes the aggregated increment, so the two see the same Brownian
//! path. Antithetic path pairs cancel the odd-order noise in the weak
//! estimate at no extra simulation cost.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::engine::{em_fine_reference, BrownianPath, InitLaw};
use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::Potential;
use crate::rng::{derive_seed, STREAM_PATH};

#[derive(Debug, Clone, Copy)]
pub struct ErrorEstimate {
    pub value: f64,
    /// 95% Monte Carlo half-width.
    pub half_width: f64,
    pub replicas: usize,
    pub discarded: usize,
}

impl ErrorEstimate {
    /// Estimates whose half-width exceeds 30% of the value are too noisy to
    /// enter an order fit.
    pub fn noisy(&self) -> bool {
        self.half_width > 0.3 * self.value
    }

    pub fn std_error(&self) -> f64 {
        self.half_width / 1.96
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalErrors {
    pub weak: ErrorEstimate,
    pub strong: ErrorEstimate,
}

/// Coupled weak and strong one-step errors at step size `h`.
///
/// `replicas` counts path evaluations; they are run as antithetic pairs.
/// The step must respect the local-error validity ceiling
/// `h <= 1/(M^2 + 4 alpha)`.
pub fn local_errors(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    h: f64,
    replicas: usize,
    fine_per_step: usize,
    seed: u64,
) -> Result<LocalErrors> {
    let (_, big_m) = pot.rel_constants(map)?;
    let alpha = map.factor_lipschitz_sq();
    let h_cap = 1.0 / (big_m * big_m + 4.0 * alpha);
    if h > h_cap + 1e-12 {
        return Err(MllError::ConfigInvalid(format!(
            "step {h} exceeds the local-error validity ceiling {h_cap:.6}"
        )));
    }
    if replicas < 16 {
        return Err(MllError::ConfigInvalid("need at least 16 replicas".into()));
    }
    if fine_per_step < 2 {
        return Err(MllError::ConfigInvalid("fine resolution must exceed one substep".into()));
    }
    let pairs = replicas / 2;
    let d = map.primal_dim();
    let sqrt_h = h.sqrt();
    let sqrt_2h = (2.0 * h).sqrt();

    struct PairSample {
        weak: DVector<f64>,
        strong: f64,
    }

    let outcomes: Vec<Option<PairSample>> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<Option<PairSample>> {
            let y0 = law.sample_indexed(seed, p, Some(map))?;
            let g0 = pot.dual_drift(map, &y0)?;
            let a0 = map.dual_inv_sqrt_factor(&y0)?;
            let path_seed = derive_seed(seed, &[STREAM_PATH, p as u64]);
            let path = BrownianPath::from_seed(path_seed, h, fine_per_step, map.noise_dim());
            let mut weak = DVector::zeros(d);
            let mut strong = 0.0;
            for pth in [&path, &path.negated()] {
                let fine = match em_fine_reference(map, pot, &y0, pth) {
                    Ok(v) => v,
                    Err(MllError::DomainViolation(_)) | Err(MllError::NoConvergence(_)) => {
                        return Ok(None)
                    }
                    Err(e) => return Err(e),
                };
                // The coarse step consumes the aggregated increment; its
                // output is compared as a plain vector, wherever it lands.
                let z = pth.aggregate(0, pth.fine_steps()) / sqrt_h;
                let coarse = &y0 - &g0 * h + &a0 * z * sqrt_2h;
                let diff = fine - coarse;
                strong += 0.5 * diff.norm_squared();
                weak += diff * 0.5;
            }
            Ok(Some(PairSample { weak, strong }))
        })
        .collect::<Result<Vec<_>>>()?;

    let kept: Vec<&PairSample> = outcomes.iter().flatten().collect();
    let discarded = pairs - kept.len();
    if kept.len() < pairs / 2 {
        return Err(MllError::ExecutionFailed(format!(
            "{discarded} of {pairs} replica pairs hit domain violations at fine scale"
        )));
    }
    let n = kept.len() as f64;

    // Weak error: norm of the mean coupled difference.
    let mut mean = DVector::zeros(d);
    for s in &kept {
        mean += &s.weak;
    }
    mean /= n;
    let mut var_sum = 0.0;
    for s in &kept {
        var_sum += (&s.weak - &mean).norm_squared();
    }
    let weak_se = (var_sum / (n - 1.0) / n).sqrt();
    let weak = ErrorEstimate {
        value: mean.norm(),
        half_width: 1.96 * weak_se,
        replicas: 2 * kept.len(),
        discarded,
    };

    // Strong error: sqrt of the mean squared coupled difference.
    let m2 = kept.iter().map(|s| s.strong).sum::<f64>() / n;
    let m2_var = kept.iter().map(|s| (s.strong - m2) * (s.strong - m2)).sum::<f64>() / (n - 1.0);
    let m2_se = (m2_var / n).sqrt();
    let strong = ErrorEstimate {
        value: m2.sqrt(),
        half_width: if m2 > 0.0 { 1.96 * m2_se / (2.0 * m2.sqrt()) } else { 0.0 },
        replicas: 2 * kept.len(),
        discarded,
    };
    Ok(LocalErrors { weak, strong })
}

/// Weak error only; see [`local_errors`].
pub fn local_weak_error(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    h: f64,
    replicas: usize,
    fine_per_step: usize,
    seed: u64,
) -> Result<ErrorEstimate> {
    Ok(local_errors(map, pot, law, h, replicas, fine_per_step, seed)?.weak)
}

/// Strong error only; see [`local_errors`].
pub fn local_strong_error(
    map: &MirrorMap,
    pot: &Potential,
    law: &InitLaw,
    h: f64,
    replicas: usize,
    fine_per_step: usize,
    seed: u64,
) -> Result<ErrorEstimate> {
    Ok(local_errors(map, pot, law, h, replicas, fine_per_step, seed)?.strong)
}
