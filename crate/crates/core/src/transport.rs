//! Empirical Wasserstein-2 distances between equal-size sample sets.
//!
//! Three estimators: exact sorted pairing in one dimension, exact optimal
//! assignment (shortest augmenting path) for small multi-dimensional sets,
//! and a sliced surrogate for diagnostics only. The mirror-modified distance
//! pushes primal samples through the mirror map first, which by construction
//! turns it into the plain Euclidean distance between the dual images.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MllError, Result};
use crate::maps::MirrorMap;
use crate::rng::{stream, STREAM_BOOTSTRAP, STREAM_PROBE};
use crate::samples::SampleSet;

/// Exact assignment is an `O(n^3)` solve; cap the input size.
pub const ASSIGNMENT_MAX_N: usize = 512;
/// Resamples used for bootstrap confidence half-widths.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Method {
    Exact1d,
    Assignment,
    /// Lower-bound-style surrogate; never used for acceptance checks.
    Sliced,
}

#[derive(Debug, Clone, Serialize)]
pub struct W2Estimate {
    pub value: f64,
    pub method: W2Method,
    pub n: usize,
    pub half_width: Option<f64>,
}

/// Exact empirical W2 between two 1-d samples of equal size: sorted pairing.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<W2Estimate> {
    if a.len() != b.len() {
        return Err(MllError::SizeMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(MllError::SizeMismatch("empty samples".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mean_sq = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / xs.len() as f64;
    Ok(W2Estimate { value: mean_sq.sqrt(), method: W2Method::Exact1d, n: a.len(), half_width: None })
}

/// Exact empirical W2 via optimal assignment on squared distances.
pub fn w2_assignment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<W2Estimate> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(MllError::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Err(MllError::SizeMismatch("empty samples".into()));
    }
    if n > ASSIGNMENT_MAX_N {
        return Err(MllError::TooLarge(format!(
            "assignment estimator capped at {ASSIGNMENT_MAX_N} points, got {n}"
        )));
    }
    let mut cost = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for c in 0..a.ncols() {
                let d = a[(i, c)] - b[(j, c)];
                acc += d * d;
            }
            cost[(i, j)] = acc;
        }
    }
    let total = assignment_min_cost(&cost);
    Ok(W2Estimate {
        value: (total / n as f64).sqrt(),
        method: W2Method::Assignment,
        n,
        half_width: None,
    })
}

/// Sliced W2: root mean of squared 1-d distances over random directions.
pub fn w2_sliced(a: &DMatrix<f64>, b: &DMatrix<f64>, n_slices: usize, seed: u64) -> Result<W2Estimate> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(MllError::SizeMismatch("sample shapes differ".into()));
    }
    if n_slices < 32 {
        return Err(MllError::ConfigInvalid("sliced estimator needs at least 32 slices".into()));
    }
    let d = a.ncols();
    let mut acc = 0.0;
    for s in 0..n_slices {
        let mut rng = stream(seed, &[STREAM_PROBE, s as u64]);
        let mut dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        dir /= norm;
        let pa: Vec<f64> = (0..a.nrows()).map(|i| a.row(i).transpose().dot(&dir)).collect();
        let pb: Vec<f64> = (0..b.nrows()).map(|i| b.row(i).transpose().dot(&dir)).collect();
        let w = w2_1d(&pa, &pb)?;
        acc += w.value * w.value;
    }
    Ok(W2Estimate {
        value: (acc / n_slices as f64).sqrt(),
        method: W2Method::Sliced,
        n: a.nrows(),
        half_width: None,
    })
}

/// Mirror-modified W2 between primal sample sets: push both sets through the
/// map's gradient and measure the Euclidean distance between the images.
pub fn w2_phi(map: &MirrorMap, a: &SampleSet, b: &SampleSet) -> Result<W2Estimate> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(MllError::SizeMismatch("sample shapes differ".into()));
    }
    let push = |set: &SampleSet| -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(set.len(), set.dim());
        for i in 0..set.len() {
            let y = map.grad(&set.point(i))?;
            for j in 0..set.dim() {
                out[(i, j)] = y[j];
            }
        }
        Ok(out)
    };
    let ya = push(a)?;
    let yb = push(b)?;
    if a.dim() == 1 {
        let xs: Vec<f64> = ya.column(0).iter().copied().collect();
        let ys: Vec<f64> = yb.column(0).iter().copied().collect();
        w2_1d(&xs, &ys)
    } else if a.len() <= ASSIGNMENT_MAX_N {
        w2_assignment(&ya, &yb)
    } else {
        w2_sliced(&ya, &yb, 64, 0)
    }
}

/// Bootstrap half-width (1.96 sigma over resamples) of the 1-d estimator.
pub fn bootstrap_half_width_1d(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MllError::SizeMismatch("bootstrap needs equal nonempty samples".into()));
    }
    let n = a.len();
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[STREAM_BOOTSTRAP, r as u64]);
            let ra: Vec<f64> = (0..n).map(|_| a[rng.random_range(0..n)]).collect();
            let rb: Vec<f64> = (0..n).map(|_| b[rng.random_range(0..n)]).collect();
            w2_1d(&ra, &rb).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() as f64 - 1.0);
    Ok(1.96 * var.sqrt())
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting path with potentials). Returns the total cost.
fn assignment_min_cost(cost: &DMatrix<f64>) -> f64 {
    let n = cost.nrows();
    // 1-indexed arrays; column 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost[(matched_row[j] - 1, j - 1)];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap().value, 0.0);
        assert_eq!(w2_1d(&[0.0], &[1.0]).unwrap().value, 1.0);
        assert_relative_eq!(w2_1d(&[0.0, 2.0], &[1.0, 3.0]).unwrap().value, 1.0);
        assert!(w2_1d(&[0.0], &[1.0, 2.0]).is_err());
    }

    fn brute_force_w2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for slot in 0..n {
                    let mut q: Vec<usize> = p.iter().map(|&v| if v >= slot { v + 1 } else { v }).collect();
                    q.push(slot);
                    out.push(q);
                }
            }
            out
        }
        let n = a.nrows();
        let mut best = f64::INFINITY;
        for perm in permutations(n) {
            let mut total = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                let mut acc = 0.0;
                for c in 0..a.ncols() {
                    let d = a[(i, c)] - b[(j, c)];
                    acc += d * d;
                }
                total += acc;
            }
            best = best.min(total);
        }
        (best / n as f64).sqrt()
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = crate::rng::stream(3, &[1]);
        for n in 2..=6 {
            for _ in 0..20 {
                let a = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let b = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let exact = w2_assignment(&a, &b).unwrap().value;
                let brute = brute_force_w2(&a, &b);
                assert_relative_eq!(exact, brute, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn assignment_examples() {
        // Identical sets in permuted order.
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 0.5]);
        let b = DMatrix::from_row_slice(3, 2, &[2.0, 0.5, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(w2_assignment(&a, &b).unwrap().value, 0.0);

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert_relative_eq!(w2_assignment(&a, &b).unwrap().value, 1.0, max_relative = 1e-12);

        let big = DMatrix::zeros(513, 1);
        assert!(matches!(w2_assignment(&big, &big), Err(MllError::TooLarge(_))));
    }

    #[test]
    fn assignment_agrees_with_sorted_pairing_in_1d() {
        let mut rng = crate::rng::stream(9, &[2]);
        for _ in 0..100 {
            let n = rng.random_range(2..40);
            let a = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let xs: Vec<f64> = a.column(0).iter().copied().collect();
            let ys: Vec<f64> = b.column(0).iter().copied().collect();
            assert_relative_eq!(
                w2_assignment(&a, &b).unwrap().value,
                w2_1d(&xs, &ys).unwrap().value,
                max_relative = 1e-12,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn sliced_basics() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(w2_sliced(&a, &a, 64, 5).unwrap().value, 0.0);
        assert!(w2_sliced(&a, &a, 8, 5).is_err());

        // 1-d slices equal the exact 1-d value regardless of direction sign.
        let a = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 1, &[0.5, 2.0, 3.0]);
        let s = w2_sliced(&a, &b, 64, 5).unwrap().value;
        let e = w2_1d(&[0.0, 1.0, 4.0], &[0.5, 2.0, 3.0]).unwrap().value;
        assert_relative_eq!(s, e, max_relative = 1e-12);
    }

    #[test]
    fn sliced_shift_catches_dimension_factor() {
        // Point masses separated by v: E[(u'v)^2] = ||v||^2 / d, so the
        // sliced value approaches ||v|| / sqrt(d) for many slices.
        let d = 4;
        let v = 2.0;
        let a = DMatrix::zeros(1, d);
        let mut b = DMatrix::zeros(1, d);
        b[(0, 0)] = v;
        let s = w2_sliced(&a, &b, 20_000, 11).unwrap().value;
        let expected = v / (d as f64).sqrt();
        assert!((s - expected).abs() < 0.05 * expected, "{s} vs {expected}");
    }

    #[test]
    fn w2_phi_examples() {
        use crate::samples::{SampleSet, SpaceTag};
        let quad = MirrorMap::quadratic(2).unwrap();
        let a = SampleSet::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]), SpaceTag::Primal);
        let b = SampleSet::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]), SpaceTag::Primal);
        assert_relative_eq!(w2_phi(&quad, &a, &b).unwrap().value, 1.0, max_relative = 1e-12);
        assert_eq!(w2_phi(&quad, &a, &a).unwrap().value, 0.0);

        let orthant = MirrorMap::orthant(1).unwrap();
        let a = SampleSet::new(DMatrix::from_row_slice(1, 1, &[1.0]), SpaceTag::Primal);
        let b = SampleSet::new(DMatrix::from_row_slice(1, 1, &[2.0]), SpaceTag::Primal);
        assert_relative_eq!(w2_phi(&orthant, &a, &b).unwrap().value, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn bootstrap_half_width_is_reasonable() {
        let mut rng = crate::rng::stream(13, &[3]);
        let a: Vec<f64> = (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..2000).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
        let hw = bootstrap_half_width_1d(&a, &b, BOOTSTRAP_RESAMPLES, 1).unwrap();
        assert!(hw > 0.0 && hw < 0.25, "half width {hw}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn triangle_inequality_on_empirical_measures(seed in 0u64..1000) {
            let mut rng = crate::rng::stream(seed, &[4]);
            let n = 12;
            let gen = |rng: &mut rand_chacha::ChaCha8Rng| {
                DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal))
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let c = gen(&mut rng);
            let ab = w2_assignment(&a, &b).unwrap().value;
            let bc = w2_assignment(&b, &c).unwrap().value;
            let ac = w2_assignment(&a, &c).unwrap().value;
            prop_assert!(ac <= ab + bc + 1e-10);
        }

        #[test]
        fn scale_equivariance(seed in 0u64..1000, s in 0.1f64..10.0) {
            let mut rng = crate::rng::stream(seed, &[5]);
            let n = 10;
            let a = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let base = w2_assignment(&a, &b).unwrap().value;
            let scaled = w2_assignment(&(&a * s), &(&b * s)).unwrap().value;
            prop_assert!((scaled - s * base).abs() <= 1e-9 * (1.0 + s * base));
        }
    }
}
