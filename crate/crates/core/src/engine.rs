//! Chain execution: the sampling step in primal and dual form, Brownian path
//! tables for coupled coarse/fine integration, synchronous coupling, a
//! fine-resolution reference integrator, and the exact geometric Brownian
//! motion solution.
//!
//! One dual-space step from `y` with step size `h` and standard normal draw
//! `z` is
//!
//! ```text
//! y' = y - h g(y) + sqrt(2h) A(y) z,       g(y) = grad f(dual_grad(y)),
//! ```
//!
//! where `A` is the map's pinned dual factor. The primal form applies the
//! same update through the mirror map and the two are the same algorithm.
//! Chains carry the primal preimage alongside the dual state so rectangular
//! barriers pay one Newton solve per step instead of two.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::potentials::Potential;
use crate::rng::{stream, STREAM_CHAIN, STREAM_INIT, STREAM_PATH};
use crate::samples::{Provenance, SampleSet, SpaceTag};

/// Clamp distance used by the `clamp_epsilon` violation policy.
pub const CLAMP_EPS: f64 = 1e-12;
/// Redraw budget of the `reject_resample` policy.
pub const MAX_REDRAWS: usize = 100;
/// Default fine substeps per coarse step for the reference integrator.
pub const DEFAULT_FINE_PER_STEP: usize = 1 << 10;

/// What to do when a step lands outside the dual region.
///
/// `Fail` is the default: resampling and clamping both bias the chain, so
/// they are opt-in and every event is counted either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    #[default]
    Fail,
    RejectResample,
    ClampEpsilon,
}

/// Fine-resolution Gaussian increment table over `[0, horizon]`.
///
/// The table is a deterministic function of `(seed, horizon, fine_steps,
/// noise_dim)`; block sums via [`BrownianPath::aggregate`] hand a coarse
/// integrator exactly the randomness its fine counterpart consumes, which is
/// what couples the two resolutions.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    seed: u64,
    horizon: f64,
    increments: DMatrix<f64>,
}

impl BrownianPath {
    pub fn from_seed(seed: u64, horizon: f64, fine_steps: usize, noise_dim: usize) -> Self {
        assert!(horizon > 0.0 && fine_steps > 0 && noise_dim > 0);
        let sd = (horizon / fine_steps as f64).sqrt();
        let mut rng = stream(seed, &[STREAM_PATH]);
        let increments = DMatrix::from_fn(fine_steps, noise_dim, |_, _| {
            sd * rng.sample::<f64, _>(StandardNormal)
        });
        BrownianPath { seed, horizon, increments }
    }

    /// All-zero path, handy for deterministic-drift checks.
    pub fn zeros(horizon: f64, fine_steps: usize, noise_dim: usize) -> Self {
        BrownianPath { seed: 0, horizon, increments: DMatrix::zeros(fine_steps, noise_dim) }
    }

    /// Antithetic twin: the same path with all increments negated.
    pub fn negated(&self) -> Self {
        BrownianPath { seed: self.seed, horizon: self.horizon, increments: -&self.increments }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn fine_steps(&self) -> usize {
        self.increments.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.increments.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.fine_steps() as f64
    }

    pub fn increment(&self, j: usize) -> DVector<f64> {
        self.increments.row(j).transpose()
    }

    #[inline]
    pub(crate) fn increment_scalar(&self, j: usize) -> f64 {
        self.increments[(j, 0)]
    }

    /// Sum of increments over the fine-step range `[j0, j1)`.
    pub fn aggregate(&self, j0: usize, j1: usize) -> DVector<f64> {
        assert!(j0 <= j1 && j1 <= self.fine_steps());
        let mut acc = DVector::zeros(self.noise_dim());
        for j in j0..j1 {
            for c in 0..self.noise_dim() {
                acc[c] += self.increments[(j, c)];
            }
        }
        acc
    }
}

/// Initial law for dual-space chains.
#[derive(Debug, Clone)]
pub enum InitLaw {
    Point(DVector<f64>),
    Gaussian { mean: DVector<f64>, std: f64 },
}

impl InitLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitLaw::Point(p) => p.len(),
            InitLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Exact `E[||Y_0||^2]`.
    pub fn second_moment(&self) -> f64 {
        match self {
            InitLaw::Point(p) => p.norm_squared(),
            InitLaw::Gaussian { mean, std } => mean.norm_squared() + mean.len() as f64 * std * std,
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            InitLaw::Point(p) => p.clone(),
            InitLaw::Gaussian { mean, .. } => mean.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            InitLaw::Point(p) => p.clone(),
            InitLaw::Gaussian { mean, std } => {
                mean + DVector::from_fn(mean.len(), |_, _| {
                    std * rng.sample::<f64, _>(StandardNormal)
                })
            }
        }
    }

    /// Draw a point from per-index streams, redrawing (up to 100 times) until
    /// it lies in the dual region of `map` when one is given.
    pub fn sample_indexed(&self, seed: u64, index: usize, map: Option<&MirrorMap>) -> Result<DVector<f64>> {
        let mut rng = stream(seed, &[STREAM_INIT, index as u64]);
        for _ in 0..100 {
            let y = self.sample(&mut rng);
            match map {
                Some(m) if !m.dual_in_domain(&y) => continue,
                _ => return Ok(y),
            }
        }
        Err(MllError::DomainViolation(
            "initial law places essentially no mass in the dual region".into(),
        ))
    }

    /// A full initial sample set, one independent stream per point.
    pub fn draw_set(&self, n: usize, seed: u64, map: Option<&MirrorMap>) -> Result<SampleSet> {
        let d = self.dim();
        let mut data = DMatrix::zeros(n, d);
        for i in 0..n {
            let y = self.sample_indexed(seed, i, map)?;
            for j in 0..d {
                data[(i, j)] = y[j];
            }
        }
        Ok(SampleSet::with_provenance(
            data,
            SpaceTag::Dual,
            Provenance { seed, h: 0.0, iterations: 0, chains: n },
        ))
    }
}

/// One dual-space step; the output must stay in the dual region.
pub fn mla_step_dual(
    map: &MirrorMap,
    pot: &Potential,
    y: &DVector<f64>,
    h: f64,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(MllError::ConfigInvalid(format!("step size must be positive, got {h}")));
    }
    if z.len() != map.noise_dim() {
        return Err(MllError::SizeMismatch(format!(
            "noise has length {}, map expects {}",
            z.len(),
            map.noise_dim()
        )));
    }
    if !map.dual_in_domain(y) {
        return Err(MllError::DomainViolation("state is outside the dual region".into()));
    }
    let g = pot.dual_drift(map, y)?;
    let a = map.dual_inv_sqrt_factor(y)?;
    let y_next = y - g * h + a * z * (2.0 * h).sqrt();
    if !map.dual_in_domain(&y_next) {
        return Err(MllError::DomainViolation("step exited the dual region".into()));
    }
    Ok(y_next)
}

/// One primal-space step; identical to the dual step through the mirror map.
pub fn mla_step_primal(
    map: &MirrorMap,
    pot: &Potential,
    x: &DVector<f64>,
    h: f64,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(MllError::ConfigInvalid(format!("step size must be positive, got {h}")));
    }
    if z.len() != map.noise_dim() {
        return Err(MllError::SizeMismatch(format!(
            "noise has length {}, map expects {}",
            z.len(),
            map.noise_dim()
        )));
    }
    let y = map.grad(x)?;
    let g = pot.grad_f(map, x)?;
    let c = map.hessian_sqrt_factor(x)?;
    let y_next = y - g * h + c * z * (2.0 * h).sqrt();
    map.dual_grad_from(&y_next, Some(x))
}

/// Exact solution of `dY = -Y dt + sqrt(2 alpha) Y dW` from `y0 > 0`:
/// `Y_t = y0 exp(-(1 + alpha) t + sqrt(2 alpha) W_t)`.
pub fn gbm_exact(y0: f64, alpha: f64, t: f64, w_t: f64) -> f64 {
    debug_assert!(y0 > 0.0 && alpha > 0.0 && t >= 0.0);
    y0 * (-(1.0 + alpha) * t + (2.0 * alpha).sqrt() * w_t).exp()
}

// ---------------------------------------------------------------------------
// Scalar fast path
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Map1dKind {
    Quadratic,
    Orthant,
    Gbm { sqrt_alpha: f64 },
}

/// One-dimensional map with affine dual drift; covers every heavy Monte
/// Carlo instance and avoids per-step vector allocation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineDualChain1d {
    slope: f64,
    shift: f64,
    kind: Map1dKind,
}

impl AffineDualChain1d {
    pub(crate) fn try_new(map: &MirrorMap, pot: &Potential) -> Option<Self> {
        if map.primal_dim() != 1 {
            return None;
        }
        let kind = match map {
            MirrorMap::Quadratic { .. } => Map1dKind::Quadratic,
            MirrorMap::OrthantLogBarrier { .. } => Map1dKind::Orthant,
            MirrorMap::Gbm1d { alpha } => Map1dKind::Gbm { sqrt_alpha: alpha.sqrt() },
            MirrorMap::PolytopeLogBarrier(_) => return None,
        };
        let (slope, shift) = match pot {
            Potential::RelativeAffine { lambda, shift } => {
                if shift.len() != 1 {
                    return None;
                }
                (*lambda, shift[0])
            }
            Potential::QuadraticGaussian { curvature } => match kind {
                Map1dKind::Quadratic => (*curvature, 0.0),
                _ => return None,
            },
        };
        Some(AffineDualChain1d { slope, shift, kind })
    }

    #[inline]
    pub(crate) fn drift(&self, y: f64) -> f64 {
        self.slope * y + self.shift
    }

    #[inline]
    pub(crate) fn factor(&self, y: f64) -> f64 {
        match self.kind {
            Map1dKind::Quadratic => 1.0,
            Map1dKind::Orthant => -y,
            Map1dKind::Gbm { sqrt_alpha } => sqrt_alpha * y,
        }
    }

    #[inline]
    pub(crate) fn in_domain(&self, y: f64) -> bool {
        y.is_finite()
            && match self.kind {
                Map1dKind::Quadratic => true,
                Map1dKind::Orthant => y < 0.0,
                Map1dKind::Gbm { .. } => y > 0.0,
            }
    }

    #[inline]
    pub(crate) fn step(&self, y: f64, h: f64, sqrt2h: f64, z: f64) -> f64 {
        y - h * self.drift(y) + sqrt2h * self.factor(y) * z
    }

    #[inline]
    fn clamp(&self, y: f64, eps: f64) -> f64 {
        match self.kind {
            Map1dKind::Quadratic => y,
            Map1dKind::Orthant => y.min(-eps),
            Map1dKind::Gbm { .. } => y.max(eps),
        }
    }
}

// ---------------------------------------------------------------------------
// Chain execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub h: f64,
    pub iterations: usize,
    pub policy: ViolationPolicy,
    /// Advisory cap; exceeding it sets a flag in the run stats.
    pub h_cap: Option<f64>,
}

impl ChainOptions {
    pub fn new(h: f64, iterations: usize) -> Self {
        ChainOptions { h, iterations, policy: ViolationPolicy::Fail, h_cap: None }
    }
}

/// Aggregated domain-event counts for a chain run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub violations: u64,
    pub aborted_chains: u64,
    pub resample_draws: u64,
    pub clamp_events: u64,
    pub step_cap_exceeded: bool,
}

struct ChainOutcome {
    snaps: Vec<Vec<f64>>,
    violations: u64,
    aborted: bool,
    resample_draws: u64,
    clamp_events: u64,
}

/// Advance every chain of `init` by `opts.iterations` steps, recording the
/// state at each index in `snapshot_ks` (sorted, may include 0).
///
/// Chain `i` draws from the stream `(seed, chain, i)`, so the result is a
/// pure function of `(config, seed)` no matter how many threads run.
pub fn run_chains_with_snapshots(
    map: &MirrorMap,
    pot: &Potential,
    init: &SampleSet,
    opts: &ChainOptions,
    snapshot_ks: &[usize],
    seed: u64,
) -> Result<(Vec<SampleSet>, RunStats)> {
    if init.space() != SpaceTag::Dual {
        return Err(MllError::ConfigInvalid("chains start from dual-space points".into()));
    }
    if init.dim() != map.primal_dim() {
        return Err(MllError::SizeMismatch(format!(
            "init dimension {} vs map dimension {}",
            init.dim(),
            map.primal_dim()
        )));
    }
    if !(opts.h > 0.0) {
        return Err(MllError::ConfigInvalid("step size must be positive".into()));
    }
    if snapshot_ks.is_empty() || snapshot_ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MllError::ConfigInvalid("snapshot indices must be strictly increasing".into()));
    }
    if *snapshot_ks.last().unwrap() > opts.iterations {
        return Err(MllError::ConfigInvalid("snapshot index beyond iteration count".into()));
    }
    let n = init.len();
    let fast = AffineDualChain1d::try_new(map, pot);

    let outcomes: Vec<ChainOutcome> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<ChainOutcome> {
            let mut rng = stream(seed, &[STREAM_CHAIN, i as u64]);
            let y0 = init.point(i);
            if !map.dual_in_domain(&y0) {
                return Err(MllError::DomainViolation(format!(
                    "initial point of chain {i} is outside the dual region"
                )));
            }
            match &fast {
                Some(f) => Ok(evolve_chain_1d(f, y0[0], opts, snapshot_ks, &mut rng)),
                None => evolve_chain_generic(map, pot, y0, opts, snapshot_ks, &mut rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = RunStats::default();
    if let Some(cap) = opts.h_cap {
        stats.step_cap_exceeded = opts.h > cap;
    }
    for o in &outcomes {
        stats.violations += o.violations;
        stats.aborted_chains += u64::from(o.aborted);
        stats.resample_draws += o.resample_draws;
        stats.clamp_events += o.clamp_events;
    }
    if stats.aborted_chains as f64 > 0.01 * n as f64 {
        return Err(MllError::ExecutionFailed(format!(
            "{} of {} chains aborted on domain violations (> 1%)",
            stats.aborted_chains, n
        )));
    }

    let d = init.dim();
    let mut sets = Vec::with_capacity(snapshot_ks.len());
    for (si, &k) in snapshot_ks.iter().enumerate() {
        let mut data = DMatrix::zeros(n, d);
        for (i, o) in outcomes.iter().enumerate() {
            for j in 0..d {
                data[(i, j)] = o.snaps[si][j];
            }
        }
        sets.push(SampleSet::with_provenance(
            data,
            SpaceTag::Dual,
            Provenance { seed, h: opts.h, iterations: k, chains: n },
        ));
    }
    Ok((sets, stats))
}

/// Final iterate of every chain.
pub fn run_chains(
    map: &MirrorMap,
    pot: &Potential,
    init: &SampleSet,
    opts: &ChainOptions,
    seed: u64,
) -> Result<(SampleSet, RunStats)> {
    if opts.iterations == 0 {
        // Zero steps: the initial set unchanged.
        return Ok((init.clone(), RunStats::default()));
    }
    let (mut sets, stats) =
        run_chains_with_snapshots(map, pot, init, opts, &[opts.iterations], seed)?;
    Ok((sets.pop().unwrap(), stats))
}

fn evolve_chain_1d(
    fast: &AffineDualChain1d,
    y0: f64,
    opts: &ChainOptions,
    snapshot_ks: &[usize],
    rng: &mut impl Rng,
) -> ChainOutcome {
    let sqrt2h = (2.0 * opts.h).sqrt();
    let mut snaps = Vec::with_capacity(snapshot_ks.len());
    let mut si = 0;
    if snapshot_ks[si..].first() == Some(&0) {
        snaps.push(vec![y0]);
        si += 1;
    }
    let mut y = y0;
    let mut violations = 0;
    let mut resample_draws = 0;
    let mut clamp_events = 0;
    let mut aborted = false;
    'outer: for k in 1..=opts.iterations {
        let mut advanced = false;
        for attempt in 0..=MAX_REDRAWS {
            let z: f64 = rng.sample(StandardNormal);
            let cand = fast.step(y, opts.h, sqrt2h, z);
            if fast.in_domain(cand) {
                y = cand;
                advanced = true;
                break;
            }
            violations += 1;
            match opts.policy {
                ViolationPolicy::Fail => break,
                ViolationPolicy::RejectResample => {
                    if attempt == MAX_REDRAWS {
                        break;
                    }
                    resample_draws += 1;
                }
                ViolationPolicy::ClampEpsilon => {
                    let clamped = fast.clamp(cand, CLAMP_EPS);
                    if fast.in_domain(clamped) {
                        y = clamped;
                        clamp_events += 1;
                        advanced = true;
                    }
                    break;
                }
            }
        }
        if !advanced {
            aborted = true;
            break 'outer;
        }
        if si < snapshot_ks.len() && snapshot_ks[si] == k {
            snaps.push(vec![y]);
            si += 1;
        }
    }
    // An aborted chain reports its last valid state at remaining snapshots.
    while snaps.len() < snapshot_ks.len() {
        snaps.push(vec![y]);
    }
    ChainOutcome { snaps, violations, aborted, resample_draws, clamp_events }
}

fn evolve_chain_generic(
    map: &MirrorMap,
    pot: &Potential,
    y0: DVector<f64>,
    opts: &ChainOptions,
    snapshot_ks: &[usize],
    rng: &mut impl Rng,
) -> Result<ChainOutcome> {
    let sqrt2h = (2.0 * opts.h).sqrt();
    let noise_dim = map.noise_dim();
    let mut snaps = Vec::with_capacity(snapshot_ks.len());
    let mut si = 0;
    if snapshot_ks[si..].first() == Some(&0) {
        snaps.push(y0.iter().copied().collect());
        si += 1;
    }
    let mut y = y0;
    let mut x = map.dual_grad(&y)?;
    let mut violations = 0;
    let mut resample_draws = 0;
    let mut clamp_events = 0;
    let mut aborted = false;
    'outer: for k in 1..=opts.iterations {
        let mut advanced = false;
        for attempt in 0..=MAX_REDRAWS {
            let z = DVector::from_fn(noise_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = pot.drift_given_primal(&y, &x);
            let c = map.hessian_sqrt_factor(&x)?;
            let cand = &y - g * opts.h + c * z * sqrt2h;
            match map.dual_grad_from(&cand, Some(&x)) {
                Ok(x_next) => {
                    y = cand;
                    x = x_next;
                    advanced = true;
                    break;
                }
                Err(_) => {
                    violations += 1;
                    match opts.policy {
                        ViolationPolicy::Fail => break,
                        ViolationPolicy::RejectResample => {
                            if attempt == MAX_REDRAWS {
                                break;
                            }
                            resample_draws += 1;
                        }
                        ViolationPolicy::ClampEpsilon => {
                            if let Some(clamped) = map.clamp_into_dual(&cand, CLAMP_EPS) {
                                if let Ok(x_next) = map.dual_grad_from(&clamped, Some(&x)) {
                                    y = clamped;
                                    x = x_next;
                                    clamp_events += 1;
                                    advanced = true;
                                }
                            }
                            break;
                        }
                    }
                }
            }
        }
        if !advanced {
            aborted = true;
            break 'outer;
        }
        if si < snapshot_ks.len() && snapshot_ks[si] == k {
            snaps.push(y.iter().copied().collect());
            si += 1;
        }
    }
    while snaps.len() < snapshot_ks.len() {
        snaps.push(y.iter().copied().collect());
    }
    Ok(ChainOutcome { snaps, violations, aborted, resample_draws, clamp_events })
}

// ---------------------------------------------------------------------------
// Coupled evolution
// ---------------------------------------------------------------------------

/// Two chains driven by identical draws; squared distance at the requested
/// iteration indices. Any domain violation aborts the pair.
pub fn coupled_pair_series(
    map: &MirrorMap,
    pot: &Potential,
    y0: &DVector<f64>,
    y0b: &DVector<f64>,
    h: f64,
    record_ks: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if record_ks.is_empty() || record_ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MllError::ConfigInvalid("record indices must be strictly increasing".into()));
    }
    let sqrt2h = (2.0 * h).sqrt();
    let mut out = Vec::with_capacity(record_ks.len());
    if let Some(fast) = AffineDualChain1d::try_new(map, pot) {
        let (mut a, mut b) = (y0[0], y0b[0]);
        if !fast.in_domain(a) || !fast.in_domain(b) {
            return Err(MllError::DomainViolation("pair start outside dual region".into()));
        }
        let mut si = 0;
        if record_ks[0] == 0 {
            out.push((a - b) * (a - b));
            si += 1;
        }
        for k in 1..=*record_ks.last().unwrap() {
            let z: f64 = rng.sample(StandardNormal);
            a = fast.step(a, h, sqrt2h, z);
            b = fast.step(b, h, sqrt2h, z);
            if !fast.in_domain(a) || !fast.in_domain(b) {
                return Err(MllError::DomainViolation("synchronous pair exited the dual region".into()));
            }
            if si < record_ks.len() && record_ks[si] == k {
                out.push((a - b) * (a - b));
                si += 1;
            }
        }
        return Ok(out);
    }

    let noise_dim = map.noise_dim();
    let mut ya = y0.clone();
    let mut yb = y0b.clone();
    let mut xa = map.dual_grad(&ya)?;
    let mut xb = map.dual_grad(&yb)?;
    let mut si = 0;
    if record_ks[0] == 0 {
        out.push((&ya - &yb).norm_squared());
        si += 1;
    }
    for k in 1..=*record_ks.last().unwrap() {
        let z = DVector::from_fn(noise_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ga = pot.drift_given_primal(&ya, &xa);
        let ca = map.hessian_sqrt_factor(&xa)?;
        let cand_a = &ya - ga * h + ca * &z * sqrt2h;
        let gb = pot.drift_given_primal(&yb, &xb);
        let cb = map.hessian_sqrt_factor(&xb)?;
        let cand_b = &yb - gb * h + cb * &z * sqrt2h;
        xa = map.dual_grad_from(&cand_a, Some(&xa))?;
        xb = map.dual_grad_from(&cand_b, Some(&xb))?;
        ya = cand_a;
        yb = cand_b;
        if si < record_ks.len() && record_ks[si] == k {
            out.push((&ya - &yb).norm_squared());
            si += 1;
        }
    }
    Ok(out)
}

/// Per-iteration squared distances of one synchronously coupled pair.
pub fn synchronous_pair(
    map: &MirrorMap,
    pot: &Potential,
    y0: &DVector<f64>,
    y0b: &DVector<f64>,
    h: f64,
    iterations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let ks: Vec<usize> = (0..=iterations).collect();
    let mut rng = stream(seed, &[STREAM_CHAIN, 0]);
    coupled_pair_series(map, pot, y0, y0b, h, &ks, &mut rng)
}

// ---------------------------------------------------------------------------
// Fine-resolution reference integrator
// ---------------------------------------------------------------------------

/// Integrate the dual dynamics along `path` at its fine resolution and
/// record the state after each index in `record_js` (fine-step counts).
///
/// This is the coupled stand-in for the exact flow in local-error
/// measurements; a domain violation at fine scale is an error so the caller
/// can discard and count the run.
pub fn em_fine_record(
    map: &MirrorMap,
    pot: &Potential,
    y0: &DVector<f64>,
    path: &BrownianPath,
    record_js: &[usize],
) -> Result<Vec<DVector<f64>>> {
    if record_js.is_empty()
        || record_js.windows(2).any(|w| w[0] >= w[1])
        || *record_js.last().unwrap() > path.fine_steps()
    {
        return Err(MllError::ConfigInvalid("record indices must be increasing and within the path".into()));
    }
    if path.noise_dim() != map.noise_dim() {
        return Err(MllError::SizeMismatch("path noise dimension does not match the map".into()));
    }
    let dt = path.dt();
    let sqrt2 = 2.0f64.sqrt();
    let mut out = Vec::with_capacity(record_js.len());
    if let Some(fast) = AffineDualChain1d::try_new(map, pot) {
        let mut y = y0[0];
        if !fast.in_domain(y) {
            return Err(MllError::DomainViolation("start outside dual region".into()));
        }
        let mut si = 0;
        if record_js[0] == 0 {
            out.push(DVector::from_element(1, y));
            si += 1;
        }
        for j in 0..path.fine_steps() {
            let dw = path.increment_scalar(j);
            y = y - dt * fast.drift(y) + sqrt2 * fast.factor(y) * dw;
            if !fast.in_domain(y) {
                return Err(MllError::DomainViolation(
                    "fine reference exited the dual region".into(),
                ));
            }
            if si < record_js.len() && record_js[si] == j + 1 {
                out.push(DVector::from_element(1, y));
                si += 1;
            }
        }
        return Ok(out);
    }

    let mut y = y0.clone();
    let mut x = map.dual_grad(&y)?;
    let mut si = 0;
    if record_js[0] == 0 {
        out.push(y.clone());
        si += 1;
    }
    for j in 0..path.fine_steps() {
        let g = pot.drift_given_primal(&y, &x);
        let c = map.hessian_sqrt_factor(&x)?;
        let dw = path.increment(j);
        let cand = &y - g * dt + c * dw * sqrt2;
        x = map.dual_grad_from(&cand, Some(&x))?;
        y = cand;
        if si < record_js.len() && record_js[si] == j + 1 {
            out.push(y.clone());
            si += 1;
        }
    }
    Ok(out)
}

/// State at the path horizon under the fine reference integrator.
pub fn em_fine_reference(
    map: &MirrorMap,
    pot: &Potential,
    y0: &DVector<f64>,
    path: &BrownianPath,
) -> Result<DVector<f64>> {
    Ok(em_fine_record(map, pot, y0, path, &[path.fine_steps()])?.pop().unwrap())
}

/// Two starts, one path: fine-resolution synchronous coupling. Records both
/// states at the requested fine indices.
pub fn em_fine_pair_record(
    map: &MirrorMap,
    pot: &Potential,
    y0: &DVector<f64>,
    y0b: &DVector<f64>,
    path: &BrownianPath,
    record_js: &[usize],
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    if record_js.is_empty()
        || record_js.windows(2).any(|w| w[0] >= w[1])
        || *record_js.last().unwrap() > path.fine_steps()
    {
        return Err(MllError::ConfigInvalid("record indices must be increasing and within the path".into()));
    }
    let dt = path.dt();
    let sqrt2 = 2.0f64.sqrt();
    let mut out = Vec::with_capacity(record_js.len());
    if let Some(fast) = AffineDualChain1d::try_new(map, pot) {
        let (mut a, mut b) = (y0[0], y0b[0]);
        if !fast.in_domain(a) || !fast.in_domain(b) {
            return Err(MllError::DomainViolation("pair start outside dual region".into()));
        }
        let mut si = 0;
        if record_js[0] == 0 {
            out.push((DVector::from_element(1, a), DVector::from_element(1, b)));
            si += 1;
        }
        for j in 0..path.fine_steps() {
            let dw = path.increment_scalar(j);
            a = a - dt * fast.drift(a) + sqrt2 * fast.factor(a) * dw;
            b = b - dt * fast.drift(b) + sqrt2 * fast.factor(b) * dw;
            if !fast.in_domain(a) || !fast.in_domain(b) {
                return Err(MllError::DomainViolation(
                    "fine coupled pair exited the dual region".into(),
                ));
            }
            if si < record_js.len() && record_js[si] == j + 1 {
                out.push((DVector::from_element(1, a), DVector::from_element(1, b)));
                si += 1;
            }
        }
        return Ok(out);
    }

    let mut ya = y0.clone();
    let mut yb = y0b.clone();
    let mut xa = map.dual_grad(&ya)?;
    let mut xb = map.dual_grad(&yb)?;
    let mut si = 0;
    if record_js[0] == 0 {
        out.push((ya.clone(), yb.clone()));
        si += 1;
    }
    for j in 0..path.fine_steps() {
        let dw = path.increment(j);
        let ga = pot.drift_given_primal(&ya, &xa);
        let ca = map.hessian_sqrt_factor(&xa)?;
        let cand_a = &ya - ga * dt + ca * &dw * sqrt2;
        let gb = pot.drift_given_primal(&yb, &xb);
        let cb = map.hessian_sqrt_factor(&xb)?;
        let cand_b = &yb - gb * dt + cb * &dw * sqrt2;
        xa = map.dual_grad_from(&cand_a, Some(&xa))?;
        xb = map.dual_grad_from(&cand_b, Some(&xb))?;
        ya = cand_a;
        yb = cand_b;
        if si < record_js.len() && record_js[si] == j + 1 {
            out.push((ya.clone(), yb.clone()));
            si += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MirrorMap;
    use crate::potentials::Potential;
    use approx::assert_relative_eq;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn orthant_instance() -> (MirrorMap, Potential) {
        (
            MirrorMap::orthant(1).unwrap(),
            Potential::relative_affine(2.0, vec1(1.0)).unwrap(),
        )
    }

    #[test]
    fn deterministic_step_examples() {
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let y = mla_step_dual(&map, &pot, &vec1(1.0), 0.1, &vec1(0.0)).unwrap();
        assert_relative_eq!(y[0], 0.9, max_relative = 1e-15);

        // With noise the update is exactly the Euclidean Langevin step.
        let z = 0.7;
        let y = mla_step_dual(&map, &pot, &vec1(1.0), 0.1, &vec1(z)).unwrap();
        assert_relative_eq!(y[0], 0.9 + (0.2f64).sqrt() * z, max_relative = 1e-15);

        let (map, pot) = orthant_instance();
        let y = mla_step_dual(&map, &pot, &vec1(-1.0), 0.01, &vec1(0.0)).unwrap();
        assert_relative_eq!(y[0], -0.99, max_relative = 1e-15);
    }

    #[test]
    fn primal_step_composes_the_dual_step() {
        let (map, pot) = orthant_instance();
        let x = mla_step_primal(&map, &pot, &vec1(1.0), 0.01, &vec1(0.0)).unwrap();
        assert_relative_eq!(x[0], 1.0 / 0.99, max_relative = 1e-12);
    }

    #[test]
    fn primal_dual_agreement_all_maps() {
        let s = (1.0f64 - 0.04).sqrt();
        let cases: Vec<(MirrorMap, Potential)> = vec![
            (
                MirrorMap::quadratic(2).unwrap(),
                Potential::quadratic_gaussian(1.0).unwrap(),
            ),
            (
                MirrorMap::orthant(2).unwrap(),
                Potential::relative_affine(2.0, DVector::from_column_slice(&[1.0, 1.0])).unwrap(),
            ),
            (
                MirrorMap::gbm1d(0.25).unwrap(),
                Potential::relative_affine(1.0, vec1(0.2)).unwrap(),
            ),
            (
                MirrorMap::polytope(&[vec![1.0, 0.0], vec![s, 0.2]], &[0.0, 0.0], None).unwrap(),
                Potential::relative_affine(1.5, DVector::from_column_slice(&[0.5, 0.5])).unwrap(),
            ),
        ];
        let h = 1e-3;
        for (map, pot) in &cases {
            let mut rng = stream(77, &[10]);
            let mut checked = 0;
            let mut attempts = 0;
            while checked < 1000 && attempts < 4000 {
                attempts += 1;
                let x = map.sample_interior(&mut rng);
                let z = DVector::from_fn(map.noise_dim(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let y = map.grad(&x).unwrap();
                let dual_next = match mla_step_dual(map, pot, &y, h, &z) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let primal_next = mla_step_primal(map, pot, &x, h, &z).unwrap();
                let via_dual = map.dual_grad(&dual_next).unwrap();
                let disc = (&primal_next - &via_dual).norm();
                assert!(
                    disc <= 1e-8 * (1.0 + via_dual.norm()),
                    "primal/dual discrepancy {disc:.2e} on {}",
                    map.kind().name()
                );
                checked += 1;
            }
            assert!(checked >= 990, "too many rejected steps on {}", map.kind().name());
        }
    }

    #[test]
    fn run_chains_zero_iterations_returns_init() {
        let (map, pot) = orthant_instance();
        let law = InitLaw::Gaussian { mean: vec1(-0.5), std: 0.1 };
        let init = law.draw_set(64, 5, Some(&map)).unwrap();
        let opts = ChainOptions::new(1e-2, 0);
        let (out, stats) = run_chains(&map, &pot, &init, &opts, 5).unwrap();
        assert_eq!(out.data(), init.data());
        assert_eq!(stats.violations, 0);
    }

    #[test]
    fn run_chains_is_deterministic() {
        let (map, pot) = orthant_instance();
        let law = InitLaw::Gaussian { mean: vec1(-0.5), std: 0.1 };
        let init = law.draw_set(128, 9, Some(&map)).unwrap();
        let opts = ChainOptions::new(5e-3, 200);
        let (a, _) = run_chains(&map, &pot, &init, &opts, 42).unwrap();
        let (b, _) = run_chains(&map, &pot, &init, &opts, 42).unwrap();
        assert_eq!(a.data(), b.data());
        let (c, _) = run_chains(&map, &pot, &init, &opts, 43).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn stationary_variance_matches_closed_form() {
        // Euclidean chain: y' = (1-h) y + sqrt(2h) z has stationary variance
        // 2h / (1 - (1-h)^2) = 1 / (1 - h/2).
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let h = 0.1;
        let n = 40_000;
        let law = InitLaw::Gaussian { mean: vec1(0.0), std: 0.1 };
        let init = law.draw_set(n, 3, None).unwrap();
        let opts = ChainOptions::new(h, 500);
        let (out, _) = run_chains(&map, &pot, &init, &opts, 12).unwrap();
        let xs = out.as_1d().unwrap();
        let mean: f64 = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let expected = 1.0 / (1.0 - h / 2.0);
        let se = expected * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (var - expected).abs() <= 3.0 * se,
            "variance {var:.5} vs {expected:.5} +- {:.5}",
            3.0 * se
        );
    }

    #[test]
    fn fast_and_generic_paths_agree() {
        let (map, pot) = orthant_instance();
        let law = InitLaw::Gaussian { mean: vec1(-0.5), std: 0.05 };
        let init = law.draw_set(16, 21, Some(&map)).unwrap();
        let opts = ChainOptions::new(1e-3, 50);
        // Generic path, forced by a non-1d-affine wrapper: use the
        // polytope encoding of the same orthant barrier.
        let poly = MirrorMap::polytope(&[vec![1.0]], &[0.0], Some(&[1.0])).unwrap();
        let (fast_out, _) = run_chains(&map, &pot, &init, &opts, 33).unwrap();
        let (gen_out, _) = run_chains(&poly, &pot, &init, &opts, 33).unwrap();
        for i in 0..16 {
            assert_relative_eq!(
                fast_out.data()[(i, 0)],
                gen_out.data()[(i, 0)],
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn synchronous_pair_basics() {
        let (map, pot) = orthant_instance();
        // Identical starts stay identical.
        let d = synchronous_pair(&map, &pot, &vec1(-1.0), &vec1(-1.0), 1e-2, 50, 7).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        // Euclidean case: noise cancels, the gap contracts deterministically.
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let h = 0.1;
        let d = synchronous_pair(&map, &pot, &vec1(0.0), &vec1(1.0), h, 30, 7).unwrap();
        for (k, &v) in d.iter().enumerate() {
            let expected = (1.0 - h).powi(2 * k as i32);
            assert_relative_eq!(v, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_noise_fine_reference_tracks_the_ode() {
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let h = 0.1;
        let path = BrownianPath::zeros(h, 1 << 10, 1);
        let y = em_fine_reference(&map, &pot, &vec1(1.0), &path).unwrap();
        assert!((y[0] - (-h).exp()).abs() <= 1e-5);
    }

    #[test]
    fn single_fine_step_is_one_mla_step() {
        let (map, pot) = orthant_instance();
        let path = BrownianPath::from_seed(4, 0.05, 1, 1);
        let y0 = vec1(-0.8);
        let fine = em_fine_reference(&map, &pot, &y0, &path).unwrap();
        let z = path.aggregate(0, 1) / 0.05f64.sqrt();
        let coarse = mla_step_dual(&map, &pot, &y0, 0.05, &z).unwrap();
        assert_relative_eq!(fine[0], coarse[0], max_relative = 1e-12);
    }

    #[test]
    fn aggregated_increments_reproduce_constant_coefficient_steps() {
        // With frozen drift and unit diffusion the fine chain's block endpoint
        // equals the coarse step that consumes the aggregated increment.
        let path = BrownianPath::from_seed(11, 0.2, 64, 1);
        let g0 = 0.37;
        let y0 = 1.3;
        let dt = path.dt();
        let mut fine = y0;
        for j in 0..64 {
            fine += -dt * g0 + 2.0f64.sqrt() * path.increment_scalar(j);
        }
        let agg = path.aggregate(0, 64)[0];
        let coarse = y0 - 0.2 * g0 + (2.0 * 0.2f64).sqrt() * (agg / 0.2f64.sqrt());
        assert_relative_eq!(fine, coarse, max_relative = 1e-12);
    }

    #[test]
    fn fine_em_strong_error_to_exact_gbm_shrinks_with_resolution() {
        let alpha = 0.4;
        let map = MirrorMap::gbm1d(alpha).unwrap();
        let pot = Potential::RelativeAffine { lambda: 1.0, shift: DVector::zeros(1) };
        let t = 0.5;
        let mut rms = Vec::new();
        for &nf in &[64usize, 1024] {
            let mut acc = 0.0;
            let reps = 2000;
            for r in 0..reps {
                let path = BrownianPath::from_seed(1000 + r, t, nf, 1);
                let w = path.aggregate(0, nf)[0];
                let exact = gbm_exact(2.0, alpha, t, w);
                let em = em_fine_reference(&map, &pot, &vec1(2.0), &path).unwrap()[0];
                acc += (em - exact) * (em - exact);
            }
            rms.push((acc / reps as f64).sqrt());
        }
        // Strong order 1/2: 16x more steps shrinks the error about 4x.
        let ratio = rms[0] / rms[1];
        assert!(ratio > 2.0 && ratio < 8.0, "rms ratio {ratio}");
    }

    #[test]
    fn gbm_exact_values() {
        assert_eq!(gbm_exact(2.0, 0.5, 0.0, 0.0), 2.0);
        assert_relative_eq!(gbm_exact(1.0, 0.5, 1.0, 0.0), (-1.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn gbm_second_moment_decay() {
        // E[Y_t^2] / Y_0^2 = exp(-2 (1 - alpha) t).
        let alpha = 0.5;
        let t: f64 = 1.0;
        let n = 200_000;
        let mut rng = stream(6, &[1]);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let w = t.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let v = gbm_exact(1.0, alpha, t, w);
            acc += v * v;
            acc2 += v * v * v * v;
        }
        let mean = acc / n as f64;
        let var = acc2 / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let expected = (-2.0 * (1.0 - alpha) * t).exp();
        assert!((mean - expected).abs() <= 4.0 * se, "{mean} vs {expected} +- {se}");
    }

    #[test]
    fn violation_policies_count_events() {
        // A coarse step on the orthant from near the boundary violates often.
        let (map, pot) = orthant_instance();
        let law = InitLaw::Point(vec1(-0.05));
        let init = law.draw_set(200, 2, Some(&map)).unwrap();
        let mut opts = ChainOptions::new(0.05, 40);
        opts.policy = ViolationPolicy::RejectResample;
        let (_, stats) = run_chains(&map, &pot, &init, &opts, 8).unwrap();
        assert!(stats.violations > 0);
        assert!(stats.resample_draws > 0);
        assert_eq!(stats.aborted_chains, 0);

        opts.policy = ViolationPolicy::ClampEpsilon;
        let (out, stats) = run_chains(&map, &pot, &init, &opts, 8).unwrap();
        assert!(stats.clamp_events > 0);
        assert!(out.as_1d().unwrap().iter().all(|&y| y < 0.0));
    }

    #[test]
    fn fail_policy_enforces_abort_budget() {
        let (map, pot) = orthant_instance();
        let law = InitLaw::Point(vec1(-0.02));
        let init = law.draw_set(100, 2, Some(&map)).unwrap();
        let opts = ChainOptions::new(0.05, 50);
        match run_chains(&map, &pot, &init, &opts, 8) {
            Err(MllError::ExecutionFailed(_)) => {}
            other => panic!("expected abort-budget failure, got {other:?}"),
        }
    }

    #[test]
    fn step_cap_advisory_flag() {
        let map = MirrorMap::quadratic(1).unwrap();
        let pot = Potential::quadratic_gaussian(1.0).unwrap();
        let init = InitLaw::Point(vec1(0.0)).draw_set(4, 1, None).unwrap();
        let mut opts = ChainOptions::new(0.5, 3);
        opts.h_cap = Some(0.1);
        let (_, stats) = run_chains(&map, &pot, &init, &opts, 1).unwrap();
        assert!(stats.step_cap_exceeded);
    }
}
