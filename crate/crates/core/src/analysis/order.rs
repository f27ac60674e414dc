//! Log-log order fitting for error-vs-step-size grids.

use serde::Serialize;

use crate::error::{MllError, Result};

/// A fitted power law `error ~ exp(intercept) * h^slope` over a decreasing
/// step-size grid, with a 95% confidence interval on the slope.
#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    pub h_grid: Vec<f64>,
    pub errors: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub intercept: f64,
}

/// Weighted least squares on `(ln h, ln error)`.
///
/// MC half-widths (95%, i.e. `1.96 sigma`) turn into log-scale standard
/// deviations by the delta method and become inverse-variance weights. A
/// grid where any half-width exceeds 30% of its point estimate is refused:
/// the slope would be dominated by noise.
pub fn fit_order(h_grid: &[f64], errors: &[f64], half_widths: &[f64]) -> Result<OrderFit> {
    let n = h_grid.len();
    if n < 4 {
        return Err(MllError::DegenerateGrid(format!("need at least 4 grid points, got {n}")));
    }
    if errors.len() != n || half_widths.len() != n {
        return Err(MllError::DegenerateGrid("grid, errors and half-widths must align".into()));
    }
    if h_grid.iter().any(|&h| !(h > 0.0)) || h_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(MllError::DegenerateGrid("step grid must be positive and strictly decreasing".into()));
    }
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(MllError::DegenerateGrid("errors must be positive and finite".into()));
    }
    if half_widths.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(MllError::DegenerateGrid("half-widths must be nonnegative and finite".into()));
    }
    for (e, w) in errors.iter().zip(half_widths) {
        if *w > 0.3 * e {
            return Err(MllError::DegenerateGrid(format!(
                "half-width {w:.3e} exceeds 30% of the estimate {e:.3e}; refusing to fit"
            )));
        }
    }

    let xs: Vec<f64> = h_grid.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let have_hw = half_widths.iter().any(|&w| w > 0.0);

    let weights: Vec<f64> = if have_hw {
        errors
            .iter()
            .zip(half_widths)
            .map(|(e, w)| {
                let sigma_log = ((w / 1.96) / e).max(1e-9);
                1.0 / (sigma_log * sigma_log)
            })
            .collect()
    } else {
        vec![1.0; n]
    };

    let wsum: f64 = weights.iter().sum();
    let xbar: f64 = weights.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / wsum;
    let ybar: f64 = weights.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / wsum;
    let sxx: f64 = weights.iter().zip(&xs).map(|(w, x)| w * (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = weights
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    if sxx <= 0.0 {
        return Err(MllError::DegenerateGrid("grid has no spread in log h".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let slope_var = if have_hw {
        // Weights are inverse variances, so this is the exact GLS variance.
        1.0 / sxx
    } else {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        rss / (n as f64 - 2.0) / sxx
    };
    let half = 1.96 * slope_var.sqrt();
    Ok(OrderFit {
        h_grid: h_grid.to_vec(),
        errors: errors.to_vec(),
        half_widths: half_widths.to_vec(),
        slope,
        slope_ci: (slope - half, slope + half),
        intercept,
    })
}
