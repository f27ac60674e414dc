//! JSON experiment configuration.
//!
//! A config names one experiment kind plus the instance and budget fields
//! that kind needs; unknown top-level keys are rejected and the seed is
//! mandatory. See `mll schema` for the field-by-field description.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::{InitLaw, ViolationPolicy};
use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::{validate_pair, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Duality,
    Sample,
    BiasScan,
    LocalError,
    Contraction,
    Deviation,
    Growth,
    Constants,
    Msc,
    GbmCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Duality => "duality",
            ExperimentKind::Sample => "sample",
            ExperimentKind::BiasScan => "bias_scan",
            ExperimentKind::LocalError => "local_error",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Deviation => "deviation",
            ExperimentKind::Growth => "growth",
            ExperimentKind::Constants => "constants",
            ExperimentKind::Msc => "msc",
            ExperimentKind::GbmCheck => "gbm_check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Quadratic { dim: usize },
    OrthantLogBarrier { dim: usize },
    PolytopeLogBarrier {
        /// Constraint normals, one row per halfspace `a_i' x >= b_i`.
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interior_point: Option<Vec<f64>>,
    },
    Gbm1d { alpha: f64 },
}

impl MapSpec {
    pub fn build(&self) -> Result<MirrorMap> {
        match self {
            MapSpec::Quadratic { dim } => MirrorMap::quadratic(*dim),
            MapSpec::OrthantLogBarrier { dim } => MirrorMap::orthant(*dim),
            MapSpec::PolytopeLogBarrier { a, b, interior_point } => {
                MirrorMap::polytope(a, b, interior_point.as_deref())
            }
            MapSpec::Gbm1d { alpha } => MirrorMap::gbm1d(*alpha),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    RelativeAffine { lambda: f64, b: Vec<f64> },
    QuadraticGaussian { c: f64 },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        match self {
            PotentialSpec::RelativeAffine { lambda, b } => {
                Potential::relative_affine(*lambda, DVector::from_column_slice(b))
            }
            PotentialSpec::QuadraticGaussian { c } => Potential::quadratic_gaussian(*c),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Gaussian around the dual minimizer of the instance.
    AroundMinimizer {
        #[serde(default = "default_init_std")]
        std: f64,
    },
    Point { y: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
}

fn default_init_std() -> f64 {
    0.1
}

impl InitSpec {
    pub fn build(&self, map: &MirrorMap, pot: &Potential) -> Result<InitLaw> {
        Ok(match self {
            InitSpec::AroundMinimizer { std } => InitLaw::Gaussian {
                mean: pot.minimizer_dual(map)?,
                std: *std,
            },
            InitSpec::Point { y } => InitLaw::Point(DVector::from_column_slice(y)),
            InitSpec::Gaussian { mean, std } => InitLaw::Gaussian {
                mean: DVector::from_column_slice(mean),
                std: *std,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmCheckSpec {
    pub moment_alpha: f64,
    pub moment_t: f64,
    pub moment_replicas: usize,
    pub rate_alphas: Vec<f64>,
    pub rate_pairs: usize,
    pub rate_h: f64,
    pub rate_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MscSpec {
    /// Half-space angles of the planar cone family to probe.
    pub eps_list: Vec<f64>,
    pub probe_pairs: usize,
    #[serde(default = "default_witness_tol")]
    pub witness_rel_tol: f64,
    /// Window for the ratio of consecutive analytic bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_ratio_window: Option<(f64, f64)>,
}

fn default_witness_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    /// Map list for the duality suite; defaults to the four canonical kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<MapSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_per_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_per_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_policy: Option<ViolationPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_cap: Option<f64>,
    /// Oracle value for the `sample` experiment's transport-bias check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_tolerance_frac: Option<f64>,
    /// Pass window for the fitted bias or strong-error slope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_slope_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbm: Option<GbmCheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msc: Option<MscSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| MllError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build the configured map/potential pair (validated together).
    pub fn instance(&self) -> Result<(MirrorMap, Potential)> {
        let map = self
            .map
            .as_ref()
            .ok_or_else(|| MllError::ConfigInvalid("experiment needs a map".into()))?
            .build()?;
        let pot = self
            .potential
            .as_ref()
            .ok_or_else(|| MllError::ConfigInvalid("experiment needs a potential".into()))?
            .build()?;
        validate_pair(&map, &pot)?;
        Ok((map, pot))
    }

    pub fn init_law(&self, map: &MirrorMap, pot: &Potential) -> Result<InitLaw> {
        self.init
            .clone()
            .unwrap_or(InitSpec::AroundMinimizer { std: default_init_std() })
            .build(map, pot)
    }

    pub fn policy(&self) -> ViolationPolicy {
        self.violation_policy.unwrap_or_default()
    }

    fn require(&self, ok: bool, what: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(MllError::ConfigInvalid(format!(
                "{} experiment requires {what}",
                self.experiment.name()
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            ExperimentKind::Duality => Ok(()),
            ExperimentKind::Sample => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.h.is_some(), "h")?;
                self.require(self.iterations.is_some(), "iterations")?;
                self.require(self.chains.is_some(), "chains")
            }
            ExperimentKind::BiasScan => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.h_grid.is_some(), "h_grid")?;
                self.require(self.chains.is_some(), "chains")
            }
            ExperimentKind::LocalError => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.h_grid.is_some(), "h_grid")
            }
            ExperimentKind::Contraction => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.h.is_some(), "h")?;
                self.require(self.iterations.is_some(), "iterations")?;
                self.require(self.pairs.is_some(), "pairs")?;
                self.require(self.offset.is_some(), "offset")
            }
            ExperimentKind::Deviation => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.t_grid.is_some(), "t_grid")?;
                self.require(self.replicas.is_some(), "replicas")?;
                self.require(self.offset.is_some(), "offset")
            }
            ExperimentKind::Growth => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")?;
                self.require(self.t_grid.is_some(), "t_grid")?;
                self.require(self.replicas.is_some(), "replicas")
            }
            ExperimentKind::Constants => {
                self.require(self.map.is_some() && self.potential.is_some(), "map and potential")
            }
            ExperimentKind::Msc => self.require(self.msc.is_some(), "msc block"),
            ExperimentKind::GbmCheck => self.require(self.gbm.is_some(), "gbm block"),
        }
    }
}

/// Human-readable JSON schema, printed by `mll schema`.
pub const SCHEMA_DOC: &str = r#"{
  "experiment": "duality | sample | bias_scan | local_error | contraction | deviation | growth | constants | msc | gbm_check",
  "seed": "u64 (required)",
  "map": {
    "kind": "quadratic | orthant_log_barrier | polytope_log_barrier | gbm1d",
    "dim": "usize (quadratic, orthant_log_barrier)",
    "a": "[[f64; d]; m] constraint normals, one row per halfspace a_i'x >= b_i (polytope_log_barrier)",
    "b": "[f64; m] offsets (polytope_log_barrier)",
    "interior_point": "[f64; d] optional strictly feasible point (polytope_log_barrier)",
    "alpha": "f64 > 0 factor-Lipschitz parameter (gbm1d)"
  },
  "maps": "[map, ...] map list for the duality suite (default: the four canonical kinds)",
  "potential": {
    "kind": "relative_affine | quadratic_gaussian",
    "lambda": "f64 > 0 (relative_affine: f = lambda*phi + <b, .>)",
    "b": "[f64; d] (relative_affine; strictly positive on the orthant)",
    "c": "f64 > 0 (quadratic_gaussian: f = c/2 |x|^2)"
  },
  "init": {
    "kind": "around_minimizer | point | gaussian",
    "std": "f64 (around_minimizer, default 0.1; gaussian)",
    "y": "[f64; d] (point)",
    "mean": "[f64; d] (gaussian)"
  },
  "h": "f64 step size (sample, contraction)",
  "h_grid": "[f64] strictly decreasing step grid (bias_scan, local_error)",
  "t_grid": "[f64] strictly increasing time grid (deviation, growth)",
  "iterations": "usize chain steps (sample, contraction)",
  "chains": "usize (sample, bias_scan)",
  "replicas": "usize (local_error, deviation, growth)",
  "pairs": "usize coupled pairs (contraction)",
  "points": "usize random interior points (duality)",
  "slices": "usize late-iterate snapshots (bias_scan, default 8)",
  "fine_per_step": "usize fine substeps per coarse step (local_error, default 1024)",
  "fine_per_interval": "usize fine substeps per grid interval (deviation/growth, default 512)",
  "offset": "[f64; d] pair separation (contraction, deviation)",
  "violation_policy": "fail | reject_resample | clamp_epsilon (default fail)",
  "h_cap": "f64 advisory step ceiling",
  "expected_bias": "f64 oracle for the sample experiment's transport check",
  "bias_tolerance_frac": "f64 fractional tolerance added to the bootstrap half-width (default 0.1)",
  "slope_window": "[lo, hi] pass window for the bias or strong-error slope",
  "weak_slope_min": "f64 lower bound on the weak-error slope",
  "rate_window": "[lo, hi] pass window for the contraction rate",
  "gbm": {
    "moment_alpha": "f64", "moment_t": "f64", "moment_replicas": "usize",
    "rate_alphas": "[f64]", "rate_pairs": "usize", "rate_h": "f64", "rate_steps": "usize"
  },
  "msc": {
    "eps_list": "[f64] planar cone angles",
    "probe_pairs": "usize random probe pairs per angle",
    "witness_rel_tol": "f64 (default 1e-6)",
    "bound_ratio_window": "[lo, hi] (default [3.6, 4.4])"
  },
  "out_dir": "string output directory (overridden by --out)"
}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_map_specs_from_json() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "experiment": "sample",
                "seed": 1,
                "map": {"kind": "orthant_log_barrier", "dim": 2},
                "potential": {"kind": "relative_affine", "lambda": 2.0, "b": [1.0, 1.0]},
                "h": 0.01, "iterations": 10, "chains": 4
            }"#,
        )
        .unwrap();
        let (map, pot) = cfg.instance().unwrap();
        assert_eq!(map.primal_dim(), 2);
        assert_eq!(pot.name(), "relative_affine");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"experiment": "duality", "seed": 1, "bogus": 3}"#,
        );
        assert!(matches!(err, Err(MllError::ConfigInvalid(_))));
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "duality"}"#);
        assert!(matches!(err, Err(MllError::ConfigInvalid(_))));
    }

    #[test]
    fn missing_required_fields_are_reported() {
        let err = ExperimentConfig::from_json(
            r#"{"experiment": "bias_scan", "seed": 1,
                "map": {"kind": "quadratic", "dim": 1},
                "potential": {"kind": "quadratic_gaussian", "c": 1.0}}"#,
        );
        assert!(matches!(err, Err(MllError::ConfigInvalid(_))));
    }

    #[test]
    fn polytope_spec_builds() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "experiment": "constants", "seed": 3,
                "map": {"kind": "polytope_log_barrier", "a": [[1.0, 0.0], [0.0, 1.0]], "b": [0.0, 0.0]},
                "potential": {"kind": "relative_affine", "lambda": 2.0, "b": [1.0, 1.0]}
            }"#,
        )
        .unwrap();
        let (map, _) = cfg.instance().unwrap();
        assert_eq!(map.noise_dim(), 2);
    }
}
