//! Target potentials and their dual-space drift.
//!
//! The canonical family couples the potential to the barrier itself,
//! `f = lambda * phi + <b, .>`, which makes the dual drift exactly affine,
//! `g(y) = lambda * y + b`, so the relative smoothness and monotonicity
//! constants are both `lambda` with no estimation involved. On the positive
//! orthant with strictly positive `b` the target is a product of Gamma laws,
//! which gives the harness an exact ground-truth sampler. A plain Gaussian
//! potential `f = (c/2) ||x||^2` covers the Euclidean (identity-map) case.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{MllError, Result};
use crate::maps::{MapKind, MirrorMap};
use crate::rng::{stream, STREAM_EXACT};
use crate::samples::{Provenance, SampleSet, SpaceTag};

#[derive(Debug, Clone)]
pub enum Potential {
    /// `f = lambda * phi + <shift, .>` for whichever map it is paired with.
    RelativeAffine { lambda: f64, shift: DVector<f64> },
    /// `f = (curvature / 2) * ||x||^2`.
    QuadraticGaussian { curvature: f64 },
}

impl Potential {
    pub fn relative_affine(lambda: f64, shift: DVector<f64>) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(MllError::ConfigInvalid(format!(
                "relative_affine lambda must be positive, got {lambda}"
            )));
        }
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(MllError::ConfigInvalid("relative_affine shift must be finite".into()));
        }
        Ok(Potential::RelativeAffine { lambda, shift })
    }

    pub fn quadratic_gaussian(curvature: f64) -> Result<Self> {
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(MllError::ConfigInvalid(format!(
                "quadratic_gaussian curvature must be positive, got {curvature}"
            )));
        }
        Ok(Potential::QuadraticGaussian { curvature })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::RelativeAffine { .. } => "relative_affine",
            Potential::QuadraticGaussian { .. } => "quadratic_gaussian",
        }
    }

    /// Relative strong-convexity and smoothness constants `(m, M)` of the
    /// dual drift, exact for the supported pairings.
    pub fn rel_constants(&self, map: &MirrorMap) -> Result<(f64, f64)> {
        match self {
            Potential::RelativeAffine { lambda, .. } => Ok((*lambda, *lambda)),
            Potential::QuadraticGaussian { curvature } => match map.kind() {
                MapKind::Quadratic => Ok((*curvature, *curvature)),
                other => Err(MllError::Unsupported(format!(
                    "quadratic_gaussian has exact relative constants only on the quadratic map, not {}",
                    other.name()
                ))),
            },
        }
    }

    /// Potential value `f(x)`.
    pub fn value(&self, map: &MirrorMap, x: &DVector<f64>) -> Result<f64> {
        match self {
            Potential::RelativeAffine { lambda, shift } => {
                Ok(lambda * map.phi(x)? + shift.dot(x))
            }
            Potential::QuadraticGaussian { curvature } => {
                if !map.primal_in_domain(x) {
                    return Err(MllError::DomainViolation("point outside primal domain".into()));
                }
                Ok(0.5 * curvature * x.norm_squared())
            }
        }
    }

    /// Analytic gradient of `f`.
    pub fn grad_f(&self, map: &MirrorMap, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Potential::RelativeAffine { lambda, shift } => Ok(map.grad(x)? * *lambda + shift),
            Potential::QuadraticGaussian { curvature } => {
                if !map.primal_in_domain(x) {
                    return Err(MllError::DomainViolation("point outside primal domain".into()));
                }
                Ok(x * *curvature)
            }
        }
    }

    /// Dual drift `g(y) = grad f(dual_grad(y))`.
    pub fn dual_drift(&self, map: &MirrorMap, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Potential::RelativeAffine { lambda, shift } => {
                if !map.dual_in_domain(y) {
                    return Err(MllError::DomainViolation("point outside dual region".into()));
                }
                Ok(y * *lambda + shift)
            }
            Potential::QuadraticGaussian { curvature } => {
                Ok(map.dual_grad(y)? * *curvature)
            }
        }
    }

    /// Drift evaluated through an already-known primal preimage `x` of `y`;
    /// lets the chain loop avoid re-inverting the mirror map.
    pub(crate) fn drift_given_primal(
        &self,
        y: &DVector<f64>,
        x: &DVector<f64>,
    ) -> DVector<f64> {
        match self {
            Potential::RelativeAffine { lambda, shift } => y * *lambda + shift,
            Potential::QuadraticGaussian { curvature } => x * *curvature,
        }
    }

    /// Dual-space minimizer `y*`, the root of `g`.
    pub fn minimizer_dual(&self, map: &MirrorMap) -> Result<DVector<f64>> {
        let y_star = match self {
            Potential::RelativeAffine { lambda, shift } => -shift / *lambda,
            Potential::QuadraticGaussian { .. } => {
                // grad f vanishes at the origin; its dual image exists only
                // when the origin is interior.
                let zero = DVector::zeros(map.primal_dim());
                if !map.primal_in_domain(&zero) {
                    return Err(MllError::DomainViolation(
                        "potential minimizer lies outside the primal domain".into(),
                    ));
                }
                map.grad(&zero)?
            }
        };
        if !map.dual_in_domain(&y_star) {
            return Err(MllError::DomainViolation(
                "dual minimizer lies outside the dual region".into(),
            ));
        }
        Ok(y_star)
    }
}

/// Pairing validation: on the positive orthant the affine shift must be
/// strictly positive for the target to be normalizable.
pub fn validate_pair(map: &MirrorMap, potential: &Potential) -> Result<()> {
    if let Potential::RelativeAffine { shift, .. } = potential {
        if shift.len() != map.primal_dim() {
            return Err(MllError::ConfigInvalid(format!(
                "shift has dimension {}, map has {}",
                shift.len(),
                map.primal_dim()
            )));
        }
        if map.kind() == MapKind::OrthantLogBarrier && shift.iter().any(|&b| b <= 0.0) {
            return Err(MllError::ConfigInvalid(
                "orthant targets need strictly positive shift entries".into(),
            ));
        }
    }
    Ok(())
}

/// A map/potential pair seen as a distribution on the dual side.
#[derive(Debug, Clone)]
pub struct DualTarget {
    map: MirrorMap,
    potential: Potential,
}

impl DualTarget {
    pub fn new(map: MirrorMap, potential: Potential) -> Result<Self> {
        validate_pair(&map, &potential)?;
        Ok(DualTarget { map, potential })
    }

    pub fn map(&self) -> &MirrorMap {
        &self.map
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn exact_sampler_available(&self) -> bool {
        matches!(
            (self.map.kind(), &self.potential),
            (MapKind::OrthantLogBarrier, Potential::RelativeAffine { .. })
                | (MapKind::Quadratic, Potential::QuadraticGaussian { .. })
                | (MapKind::Quadratic, Potential::RelativeAffine { .. })
        )
    }

    /// Unnormalized dual log-density `-f~(y)` with
    /// `f~(y) = f(dual_grad(y)) - log det dual_hessian(y)`.
    pub fn dual_log_density(&self, y: &DVector<f64>) -> Result<f64> {
        let x = self.map.dual_grad(y)?;
        let f = self.potential.value(&self.map, &x)?;
        let dual_h = self.map.dual_hessian(y)?;
        let log_det = log_det_spd(&dual_h)?;
        Ok(-(f - log_det))
    }

    /// Second moment of the dual target, in closed form where the target has
    /// an exact description.
    pub fn dual_second_moment(&self) -> Result<f64> {
        match (self.map.kind(), &self.potential) {
            (MapKind::Quadratic, Potential::QuadraticGaussian { curvature }) => {
                Ok(self.map.primal_dim() as f64 / curvature)
            }
            (MapKind::Quadratic, Potential::RelativeAffine { lambda, shift }) => {
                Ok(shift.iter().map(|b| 1.0 / lambda + (b / lambda).powi(2)).sum())
            }
            (MapKind::OrthantLogBarrier, Potential::RelativeAffine { lambda, shift }) => {
                // y_i = -1/x_i with x_i ~ Gamma(lambda + 1, rate b_i), so
                // E[y_i^2] = b_i^2 / (lambda (lambda - 1)) for lambda > 1.
                if *lambda <= 1.0 {
                    return Err(MllError::Unsupported(
                        "dual second moment needs lambda > 1 on the orthant".into(),
                    ));
                }
                Ok(shift.iter().map(|b| b * b / (lambda * (lambda - 1.0))).sum())
            }
            _ => Err(MllError::Unsupported(
                "no closed-form dual second moment for this pair".into(),
            )),
        }
    }

    /// `n` independent exact draws from the dual target, reproducible from
    /// the seed regardless of evaluation order.
    pub fn exact_dual_samples(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(MllError::SizeMismatch("requested zero samples".into()));
        }
        let d = self.map.primal_dim();
        let mut data = DMatrix::zeros(n, d);
        match (self.map.kind(), &self.potential) {
            (MapKind::OrthantLogBarrier, Potential::RelativeAffine { lambda, shift }) => {
                let gammas: Vec<Gamma<f64>> = shift
                    .iter()
                    .map(|&b| {
                        Gamma::new(lambda + 1.0, 1.0 / b).map_err(|e| {
                            MllError::ConfigInvalid(format!("gamma target: {e}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                for i in 0..n {
                    let mut rng = stream(seed, &[STREAM_EXACT, i as u64]);
                    for j in 0..d {
                        let x: f64 = gammas[j].sample(&mut rng);
                        data[(i, j)] = -1.0 / x;
                    }
                }
            }
            (MapKind::Quadratic, Potential::QuadraticGaussian { curvature }) => {
                let normal = Normal::new(0.0, (1.0 / curvature).sqrt()).unwrap();
                for i in 0..n {
                    let mut rng = stream(seed, &[STREAM_EXACT, i as u64]);
                    for j in 0..d {
                        data[(i, j)] = normal.sample(&mut rng);
                    }
                }
            }
            (MapKind::Quadratic, Potential::RelativeAffine { lambda, shift }) => {
                let sd = (1.0 / lambda).sqrt();
                for i in 0..n {
                    let mut rng = stream(seed, &[STREAM_EXACT, i as u64]);
                    for j in 0..d {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        data[(i, j)] = -shift[j] / lambda + sd * z;
                    }
                }
            }
            _ => {
                return Err(MllError::Unsupported(
                    "no closed-form sampler for this map/potential pair".into(),
                ))
            }
        }
        Ok(SampleSet::with_provenance(
            data,
            SpaceTag::Dual,
            Provenance { seed, h: 0.0, iterations: 0, chains: n },
        ))
    }
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| MllError::NoConvergence("matrix not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}
