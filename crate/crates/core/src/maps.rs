//! Legendre mirror maps: barrier value, gradient, dual gradient, Hessian and
//! its pinned square-root factor, on both the primal and dual side.
//!
//! A mirror map is the gradient of a strictly convex barrier `phi` on an open
//! convex primal domain. It sends the domain bijectively onto a dual region;
//! sampling runs in those dual coordinates. Four concrete maps are provided:
//!
//! * `Quadratic` — `phi(x) = ||x||^2 / 2` on all of `R^d` (identity map).
//! * `OrthantLogBarrier` — `phi(x) = -sum log x_i` on the positive orthant;
//!   the dual region is the negative orthant.
//! * `PolytopeLogBarrier` — `phi(x) = -sum log(a_i'x - b_i)` with unit-norm
//!   constraint normals `a_i`; the Hessian square-root is the rectangular
//!   factor `A S_x^{-1}` with one column per constraint.
//! * `Gbm1d` — the scalar barrier `phi(x) = -(1/alpha) log(-x)` on `(-inf,0)`,
//!   whose dual-side diffusion factor is `sqrt(alpha) * y` on `(0,inf)`; this
//!   is the geometric-Brownian-motion geometry with factor-Lipschitz
//!   parameter `alpha`.
//!
//! Each map pins one canonical square-root factor (diagonal, rectangular
//! `A S_x^{-1}`, or scalar); the factor-Lipschitz constant quoted by the
//! analysis layer refers to that pinned choice, and the dual-side factor
//! always agrees with the primal one: `A(grad(x)) == hessian_sqrt_factor(x)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{MllError, Result};

/// Newton tolerance for dual-gradient inversion, scaled by `max(1, ||y||)`.
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Quadratic,
    OrthantLogBarrier,
    PolytopeLogBarrier,
    Gbm1d,
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            MapKind::Quadratic => "quadratic",
            MapKind::OrthantLogBarrier => "orthant_log_barrier",
            MapKind::PolytopeLogBarrier => "polytope_log_barrier",
            MapKind::Gbm1d => "gbm1d",
        }
    }
}

/// Log-barrier on `{x : a_i'x >= b_i}` with unit-norm columns `a_i`.
#[derive(Debug, Clone)]
pub struct PolytopeBarrier {
    /// d x m matrix whose columns are the unit-norm constraint normals.
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    /// Norms of the raw constraint rows, recorded at normalization.
    scale: DVector<f64>,
    /// Strictly feasible reference point used to start Newton solves.
    interior: DVector<f64>,
    /// Singular values of the normal matrix, descending.
    singular_values: Vec<f64>,
}

impl PolytopeBarrier {
    pub fn constraint_count(&self) -> usize {
        self.normals.ncols()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        self.normals.transpose() * x - &self.offsets
    }
}

#[derive(Debug, Clone)]
pub enum MirrorMap {
    Quadratic { dim: usize },
    OrthantLogBarrier { dim: usize },
    PolytopeLogBarrier(PolytopeBarrier),
    Gbm1d { alpha: f64 },
}

impl MirrorMap {
    pub fn quadratic(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MllError::ConfigInvalid("dimension must be positive".into()));
        }
        Ok(MirrorMap::Quadratic { dim })
    }

    pub fn orthant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MllError::ConfigInvalid("dimension must be positive".into()));
        }
        Ok(MirrorMap::OrthantLogBarrier { dim })
    }

    pub fn gbm1d(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MllError::ConfigInvalid(format!(
                "gbm1d alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(MirrorMap::Gbm1d { alpha })
    }

    /// Build a polytope log-barrier from raw constraint rows `a_i' x >= b_i`.
    ///
    /// Rows are normalized to unit length (offsets rescaled accordingly, the
    /// scaling recorded). An optional strictly feasible point can be supplied;
    /// otherwise one is derived by aiming for unit slacks.
    pub fn polytope(rows: &[Vec<f64>], offsets: &[f64], interior: Option<&[f64]>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(MllError::ConfigInvalid("polytope needs at least one constraint".into()));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(MllError::ConfigInvalid("constraint rows must share a positive dimension".into()));
        }
        if offsets.len() != m {
            return Err(MllError::ConfigInvalid(format!(
                "expected {m} offsets, got {}",
                offsets.len()
            )));
        }
        if m < d {
            return Err(MllError::SingularConstraints(format!(
                "{m} constraints cannot span dimension {d}"
            )));
        }
        let mut normals = DMatrix::zeros(d, m);
        let mut scale = DVector::zeros(m);
        let mut b = DVector::zeros(m);
        for (i, row) in rows.iter().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(MllError::ConfigInvalid(format!("constraint {i} has zero or non-finite norm")));
            }
            scale[i] = norm;
            b[i] = offsets[i] / norm;
            for j in 0..d {
                normals[(j, i)] = row[j] / norm;
            }
        }

        let svd = normals.clone().svd(false, false);
        let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let smallest = *sigma.last().unwrap();
        if smallest <= 1e-12 * sigma[0] {
            return Err(MllError::SingularConstraints(format!(
                "constraint matrix is rank deficient (smallest singular value {smallest:.3e})"
            )));
        }

        let interior = match interior {
            Some(p) => {
                if p.len() != d {
                    return Err(MllError::ConfigInvalid("interior point has wrong dimension".into()));
                }
                DVector::from_column_slice(p)
            }
            None => derive_interior_point(&normals, &b)?,
        };
        let barrier = PolytopeBarrier {
            normals,
            offsets: b,
            scale,
            interior,
            singular_values: sigma,
        };
        let s = barrier.slacks(&barrier.interior);
        if s.iter().any(|&v| v <= 0.0) {
            return Err(MllError::ConfigInvalid(
                "reference interior point is not strictly feasible".into(),
            ));
        }
        Ok(MirrorMap::PolytopeLogBarrier(barrier))
    }

    pub fn kind(&self) -> MapKind {
        match self {
            MirrorMap::Quadratic { .. } => MapKind::Quadratic,
            MirrorMap::OrthantLogBarrier { .. } => MapKind::OrthantLogBarrier,
            MirrorMap::PolytopeLogBarrier(_) => MapKind::PolytopeLogBarrier,
            MirrorMap::Gbm1d { .. } => MapKind::Gbm1d,
        }
    }

    pub fn primal_dim(&self) -> usize {
        match self {
            MirrorMap::Quadratic { dim } | MirrorMap::OrthantLogBarrier { dim } => *dim,
            MirrorMap::PolytopeLogBarrier(p) => p.normals.nrows(),
            MirrorMap::Gbm1d { .. } => 1,
        }
    }

    /// Column count of the pinned Hessian square-root factor.
    pub fn noise_dim(&self) -> usize {
        match self {
            MirrorMap::PolytopeLogBarrier(p) => p.constraint_count(),
            _ => self.primal_dim(),
        }
    }

    /// Name of the pinned square-root factor, for reports.
    pub fn factor_name(&self) -> &'static str {
        match self {
            MirrorMap::Quadratic { .. } => "identity",
            MirrorMap::OrthantLogBarrier { .. } => "diag(1/x_i)",
            MirrorMap::PolytopeLogBarrier(_) => "A S_x^{-1}",
            MirrorMap::Gbm1d { .. } => "sqrt(phi'')",
        }
    }

    /// Lipschitz constant (squared) of the pinned dual factor, where known.
    ///
    /// For the polytope barrier this is the `1/sigma_min^2` upper bound; the
    /// other maps have exact constants.
    pub fn factor_lipschitz_sq(&self) -> f64 {
        match self {
            MirrorMap::Quadratic { .. } => 0.0,
            MirrorMap::OrthantLogBarrier { .. } => 1.0,
            MirrorMap::PolytopeLogBarrier(p) => {
                let s = *p.singular_values.last().unwrap();
                1.0 / (s * s)
            }
            MirrorMap::Gbm1d { alpha } => *alpha,
        }
    }

    pub fn primal_in_domain(&self, x: &DVector<f64>) -> bool {
        if x.len() != self.primal_dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            MirrorMap::Quadratic { .. } => true,
            MirrorMap::OrthantLogBarrier { .. } => x.iter().all(|&v| v > 0.0),
            MirrorMap::PolytopeLogBarrier(p) => p.slacks(x).iter().all(|&s| s > 0.0),
            MirrorMap::Gbm1d { .. } => x[0] < 0.0,
        }
    }

    /// Membership test for the dual region `grad(domain)`.
    ///
    /// Exact for the closed-form maps and for square polytope systems
    /// (`m == d`); for over-determined polytopes membership is resolved by
    /// attempting the Newton inversion.
    pub fn dual_in_domain(&self, y: &DVector<f64>) -> bool {
        if y.len() != self.primal_dim() || y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            MirrorMap::Quadratic { .. } => true,
            MirrorMap::OrthantLogBarrier { .. } => y.iter().all(|&v| v < 0.0),
            MirrorMap::Gbm1d { .. } => y[0] > 0.0,
            MirrorMap::PolytopeLogBarrier(p) => {
                let d = p.normals.nrows();
                if p.constraint_count() == d {
                    // y = -A w with w > 0; solve the square system exactly.
                    match p.normals.clone().lu().solve(&(-y)) {
                        Some(w) => w.iter().all(|&v| v > 0.0),
                        None => false,
                    }
                } else {
                    self.dual_grad_from(y, None).is_ok()
                }
            }
        }
    }

    /// Barrier value `phi(x)`.
    pub fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_primal(x)?;
        Ok(match self {
            MirrorMap::Quadratic { .. } => 0.5 * x.norm_squared(),
            MirrorMap::OrthantLogBarrier { .. } => -x.iter().map(|v| v.ln()).sum::<f64>(),
            MirrorMap::PolytopeLogBarrier(p) => -p.slacks(x).iter().map(|s| s.ln()).sum::<f64>(),
            MirrorMap::Gbm1d { alpha } => -(-x[0]).ln() / alpha,
        })
    }

    /// Mirror map `y = grad phi(x)`.
    pub fn grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_primal(x)?;
        Ok(match self {
            MirrorMap::Quadratic { .. } => x.clone(),
            MirrorMap::OrthantLogBarrier { .. } => x.map(|v| -1.0 / v),
            MirrorMap::PolytopeLogBarrier(p) => {
                let s = p.slacks(x);
                let inv = s.map(|v| 1.0 / v);
                -(&p.normals * inv)
            }
            MirrorMap::Gbm1d { alpha } => DVector::from_element(1, -1.0 / (alpha * x[0])),
        })
    }

    /// Inverse mirror map `x = (grad phi)^{-1}(y)`.
    pub fn dual_grad(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.dual_grad_from(y, None)
    }

    /// Inverse mirror map with an optional warm-start for the Newton solve.
    pub fn dual_grad_from(&self, y: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        if y.len() != self.primal_dim() || y.iter().any(|v| !v.is_finite()) {
            return Err(MllError::DomainViolation("dual point has wrong shape or non-finite entries".into()));
        }
        match self {
            MirrorMap::Quadratic { .. } => Ok(y.clone()),
            MirrorMap::OrthantLogBarrier { .. } => {
                if y.iter().any(|&v| v >= 0.0) {
                    return Err(MllError::DomainViolation(
                        "orthant barrier duals lie in the strictly negative orthant".into(),
                    ));
                }
                Ok(y.map(|v| -1.0 / v))
            }
            MirrorMap::Gbm1d { alpha } => {
                if y[0] <= 0.0 {
                    return Err(MllError::DomainViolation("gbm1d duals are strictly positive".into()));
                }
                Ok(DVector::from_element(1, -1.0 / (alpha * y[0])))
            }
            MirrorMap::PolytopeLogBarrier(p) => newton_invert(self, p, y, warm),
        }
    }

    /// Hessian `grad^2 phi(x)`.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_primal(x)?;
        Ok(match self {
            MirrorMap::Quadratic { dim } => DMatrix::identity(*dim, *dim),
            MirrorMap::OrthantLogBarrier { .. } => {
                DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * v)))
            }
            MirrorMap::PolytopeLogBarrier(_) => {
                let c = self.hessian_sqrt_factor(x)?;
                &c * c.transpose()
            }
            MirrorMap::Gbm1d { alpha } => {
                DMatrix::from_element(1, 1, 1.0 / (alpha * x[0] * x[0]))
            }
        })
    }

    /// Pinned factor `C(x)` with `C(x) C(x)' = grad^2 phi(x)`, size
    /// `primal_dim x noise_dim`.
    pub fn hessian_sqrt_factor(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_primal(x)?;
        Ok(match self {
            MirrorMap::Quadratic { dim } => DMatrix::identity(*dim, *dim),
            MirrorMap::OrthantLogBarrier { .. } => DMatrix::from_diagonal(&x.map(|v| 1.0 / v)),
            MirrorMap::PolytopeLogBarrier(p) => {
                let s = p.slacks(x);
                let mut c = p.normals.clone();
                for i in 0..c.ncols() {
                    let inv = 1.0 / s[i];
                    for j in 0..c.nrows() {
                        c[(j, i)] *= inv;
                    }
                }
                c
            }
            MirrorMap::Gbm1d { alpha } => {
                DMatrix::from_element(1, 1, 1.0 / (alpha.sqrt() * (-x[0])))
            }
        })
    }

    /// Dual Hessian `grad^2 phi*(y) = grad^2 phi(x)^{-1}` at `x = dual_grad(y)`.
    pub fn dual_hessian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            MirrorMap::Quadratic { dim } => {
                self.check_dual(y)?;
                Ok(DMatrix::identity(*dim, *dim))
            }
            MirrorMap::OrthantLogBarrier { .. } => {
                self.check_dual(y)?;
                Ok(DMatrix::from_diagonal(&y.map(|v| 1.0 / (v * v))))
            }
            MirrorMap::Gbm1d { alpha } => {
                self.check_dual(y)?;
                Ok(DMatrix::from_element(1, 1, 1.0 / (alpha * y[0] * y[0])))
            }
            MirrorMap::PolytopeLogBarrier(_) => {
                let x = self.dual_grad(y)?;
                let h = self.hessian(&x)?;
                h.clone().cholesky()
                    .map(|ch| ch.inverse())
                    .ok_or_else(|| MllError::NoConvergence("hessian not positive definite".into()))
            }
        }
    }

    /// Dual-side diffusion factor `A(y)` with `A A' = grad^2 phi*(y)^{-1}`.
    ///
    /// By construction this is the primal factor evaluated at the preimage:
    /// `A(grad(x)) == hessian_sqrt_factor(x)`.
    pub fn dual_inv_sqrt_factor(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            MirrorMap::Quadratic { dim } => {
                self.check_dual(y)?;
                Ok(DMatrix::identity(*dim, *dim))
            }
            MirrorMap::OrthantLogBarrier { .. } => {
                self.check_dual(y)?;
                Ok(DMatrix::from_diagonal(&y.map(|v| -v)))
            }
            MirrorMap::Gbm1d { alpha } => {
                self.check_dual(y)?;
                Ok(DMatrix::from_element(1, 1, alpha.sqrt() * y[0]))
            }
            MirrorMap::PolytopeLogBarrier(_) => {
                let x = self.dual_grad(y)?;
                self.hessian_sqrt_factor(&x)
            }
        }
    }

    /// Bregman divergence `D_phi(x, x2) = phi(x) - phi(x2) - <grad phi(x2), x - x2>`.
    pub fn bregman(&self, x: &DVector<f64>, x2: &DVector<f64>) -> Result<f64> {
        let g = self.grad(x2)?;
        Ok(self.phi(x)? - self.phi(x2)? - g.dot(&(x - x2)))
    }

    /// Project a point slightly inside the dual region, where the region has
    /// a componentwise description. Used by the clamp violation policy.
    pub fn clamp_into_dual(&self, y: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
        match self {
            MirrorMap::Quadratic { .. } => Some(y.clone()),
            MirrorMap::OrthantLogBarrier { .. } => Some(y.map(|v| v.min(-eps))),
            MirrorMap::Gbm1d { .. } => Some(y.map(|v| v.max(eps))),
            MirrorMap::PolytopeLogBarrier(_) => None,
        }
    }

    /// Draw a well-spread strictly interior primal point; used by invariant
    /// suites and self-concordance probes.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            MirrorMap::Quadratic { dim } => {
                DVector::from_fn(*dim, |_, _| {
                    2.0 * rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
            }
            MirrorMap::OrthantLogBarrier { dim } => {
                DVector::from_fn(*dim, |_, _| rng.random_range(-1.5..1.5f64).exp())
            }
            MirrorMap::Gbm1d { .. } => {
                DVector::from_element(1, -rng.random_range(-1.5..1.5f64).exp())
            }
            MirrorMap::PolytopeLogBarrier(p) => {
                let d = p.normals.nrows();
                if p.constraint_count() == d {
                    // Choose slacks, then solve the square system for x.
                    let s = DVector::from_fn(d, |_, _| rng.random_range(-1.5..1.5f64).exp());
                    let rhs = &s + &p.offsets;
                    if let Some(x) = p.normals.transpose().lu().solve(&rhs) {
                        return x;
                    }
                }
                // Rejection walk around the reference interior point.
                let mut radius = 0.5;
                for _ in 0..200 {
                    let step = DVector::from_fn(d, |_, _| {
                        radius * rng.sample::<f64, _>(rand_distr::StandardNormal)
                    });
                    let x = &p.interior + step;
                    if p.slacks(&x).iter().all(|&v| v > 1e-6) {
                        return x;
                    }
                    radius *= 0.8;
                }
                p.interior.clone()
            }
        }
    }

    fn check_primal(&self, x: &DVector<f64>) -> Result<()> {
        if !self.primal_in_domain(x) {
            return Err(MllError::DomainViolation(format!(
                "point is outside the {} primal domain",
                self.kind().name()
            )));
        }
        Ok(())
    }

    fn check_dual(&self, y: &DVector<f64>) -> Result<()> {
        if !self.dual_in_domain(y) {
            return Err(MllError::DomainViolation(format!(
                "point is outside the {} dual region",
                self.kind().name()
            )));
        }
        Ok(())
    }
}

/// Aim for unit slacks: solve `A' x = b + 1` exactly when square, by least
/// squares otherwise, falling back to a few slack targets.
fn derive_interior_point(normals: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let at = normals.transpose();
    for target in [1.0, 0.1, 10.0] {
        let rhs = b + DVector::from_element(b.len(), target);
        let sol = if normals.nrows() == normals.ncols() {
            at.clone().lu().solve(&rhs)
        } else {
            Some(at.clone().svd(true, true).solve(&rhs, 1e-12).map_err(|e| {
                MllError::SingularConstraints(e.to_string())
            })?)
        };
        if let Some(x) = sol {
            let slacks = &at * &x - b;
            if slacks.iter().all(|&s| s > 1e-9) {
                return Ok(x);
            }
        }
    }
    Err(MllError::ConfigInvalid(
        "could not derive a strictly interior point; supply one in the map config".into(),
    ))
}

/// Damped Newton solve of `max_x <x,y> - phi(x)` for the polytope barrier.
///
/// The objective is smooth and strictly concave on the interior, so Newton
/// with an Armijo backtracking line search (capped at 99% of the distance to
/// the boundary) converges from any interior start whenever `y` lies in the
/// dual region. Unbounded ascent signals a dual point outside the region.
fn newton_invert(
    map: &MirrorMap,
    p: &PolytopeBarrier,
    y: &DVector<f64>,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let mut x = match warm {
        Some(w) if map.primal_in_domain(w) => w.clone(),
        _ => p.interior.clone(),
    };
    let tol = NEWTON_TOL * y.norm().max(1.0);
    let escape_norm = 1e9 * (1.0 + x.norm() + y.norm());
    let objective = |x: &DVector<f64>| -> f64 {
        x.dot(y) + p.slacks(x).iter().map(|s| s.ln()).sum::<f64>()
    };
    let mut obj = objective(&x);
    for _ in 0..NEWTON_MAX_ITERS {
        let r = y - map.grad(&x)?;
        if r.norm() <= tol {
            return Ok(x);
        }
        let h = map.hessian(&x)?;
        let delta = h
            .cholesky()
            .ok_or_else(|| MllError::NoConvergence("barrier hessian lost positive definiteness".into()))?
            .solve(&r);
        let slope = r.dot(&delta);
        // Fraction-to-boundary cap on the slacks.
        let s = p.slacks(&x);
        let ds = p.normals.transpose() * &delta;
        let mut t = 1.0f64;
        for i in 0..s.len() {
            if ds[i] < 0.0 {
                t = t.min(-0.99 * s[i] / ds[i]);
            }
        }
        if slope <= 1e-8 {
            // Quadratic-convergence region: objective deltas drop below
            // floating-point resolution, so take the capped Newton step
            // without a line search.
            let cand = &x + &delta * t;
            if p.slacks(&cand).iter().all(|&v| v > 0.0) {
                x = cand;
                continue;
            }
            return Err(MllError::NoConvergence(
                "pure newton step left the domain near the optimum".into(),
            ));
        }
        // Armijo backtracking on the concave objective.
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &delta * t;
            if p.slacks(&cand).iter().all(|&v| v > 0.0) {
                let cand_obj = objective(&cand);
                if cand_obj >= obj + 0.25 * t * slope {
                    x = cand;
                    obj = cand_obj;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(MllError::NoConvergence(
                "line search stalled while inverting the mirror map".into(),
            ));
        }
        if x.norm() > escape_norm {
            return Err(MllError::DomainViolation(
                "dual point lies outside the range of the mirror map (unbounded inversion)".into(),
            ));
        }
    }
    Err(MllError::NoConvergence(format!(
        "newton inversion did not reach tolerance {tol:.1e} in {NEWTON_MAX_ITERS} iterations"
    )))
}
