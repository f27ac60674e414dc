//! Experiment execution: one function per experiment kind, each producing
//! an [`ExperimentReport`] with pass/fail metrics and CSV series.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{
    bias_scan, constants_for_instance, contraction_rate, deviation_check, duality_suite,
    epsilon_family_map, epsilon_family_witness, growth_check, instance_anchors, local_errors,
    msc_pair_ratio, msc_report_polytope, fit_order,
};
use crate::config::{ExperimentConfig, ExperimentKind, MapSpec};
use crate::engine::{gbm_exact, run_chains, ChainOptions, InitLaw};
use crate::error::{MllError, Result};
use crate::maps::{MapKind, MirrorMap};
use crate::potentials::{DualTarget, Potential};
use crate::report::{CsvSeries, ExperimentReport, MetricResult};
use crate::rng::{derive_seed, stream, STREAM_PATH};
use crate::transport::{bootstrap_half_width_1d, w2_1d, BOOTSTRAP_RESAMPLES};

const DEFAULT_POINTS: usize = 1000;
const DEFAULT_SLICES: usize = 8;
const DEFAULT_FINE_PER_STEP: usize = 1 << 10;
const DEFAULT_FINE_PER_INTERVAL: usize = 512;
const DEFAULT_REPLICAS: usize = 100_000;
const DEFAULT_GRID_POINTS: usize = 8;

/// Run the configured experiment and assemble its report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut report = match cfg.experiment {
        ExperimentKind::Duality => run_duality(cfg),
        ExperimentKind::Sample => run_sample(cfg),
        ExperimentKind::BiasScan => run_bias_scan(cfg),
        ExperimentKind::LocalError => run_local_error(cfg),
        ExperimentKind::Contraction => run_contraction(cfg),
        ExperimentKind::Deviation => run_deviation(cfg),
        ExperimentKind::Growth => run_growth(cfg),
        ExperimentKind::Constants => run_constants(cfg),
        ExperimentKind::Msc => run_msc(cfg),
        ExperimentKind::GbmCheck => run_gbm_check(cfg),
    }?;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

fn base_report(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(ExperimentReport::new(cfg.experiment.name(), serde_json::to_value(cfg)?))
}

fn default_potential_for(map: &MirrorMap) -> Result<Potential> {
    match map.kind() {
        MapKind::Quadratic => Potential::quadratic_gaussian(1.0),
        MapKind::OrthantLogBarrier => {
            Potential::relative_affine(2.0, DVector::from_element(map.primal_dim(), 1.0))
        }
        MapKind::PolytopeLogBarrier => {
            Potential::relative_affine(1.5, DVector::from_element(map.primal_dim(), 0.5))
        }
        MapKind::Gbm1d => Potential::relative_affine(1.0, DVector::from_element(1, 0.2)),
    }
}

fn run_duality(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let cases: Vec<(MirrorMap, Potential)> = match &cfg.maps {
        Some(specs) => specs
            .iter()
            .map(|s: &MapSpec| -> Result<(MirrorMap, Potential)> {
                let map = s.build()?;
                let pot = default_potential_for(&map)?;
                Ok((map, pot))
            })
            .collect::<Result<_>>()?,
        None => crate::analysis::canonical_suite_cases()?,
    };
    let points = cfg.points.unwrap_or(DEFAULT_POINTS);
    let results = duality_suite(&cases, points, cfg.seed)?;
    let mut series = CsvSeries::new(
        "duality",
        &[
            "map_index",
            "roundtrip",
            "factor_residual",
            "grad_fd",
            "hessian_fd",
            "factor_consistency",
            "step_discrepancy",
        ],
    );
    for (i, r) in results.iter().enumerate() {
        report.add_metric(MetricResult::at_most(
            format!("{}/roundtrip", r.map_name),
            r.max_roundtrip,
            1e-8,
        ));
        report.add_metric(MetricResult::at_most(
            format!("{}/factor_residual", r.map_name),
            r.max_factor_residual,
            1e-10,
        ));
        report.add_metric(MetricResult::at_most(
            format!("{}/grad_fd", r.map_name),
            r.max_grad_fd,
            1e-4,
        ));
        report.add_metric(MetricResult::at_most(
            format!("{}/hessian_fd", r.map_name),
            r.max_hessian_fd,
            1e-3,
        ));
        report.add_metric(MetricResult::at_most(
            format!("{}/factor_consistency", r.map_name),
            r.max_factor_consistency,
            1e-9,
        ));
        report.add_metric(MetricResult::at_most(
            format!("{}/step_discrepancy", r.map_name),
            r.max_step_discrepancy,
            1e-8,
        ));
        series.push(vec![
            i as f64,
            r.max_roundtrip,
            r.max_factor_residual,
            r.max_grad_fd,
            r.max_hessian_fd,
            r.max_factor_consistency,
            r.max_step_discrepancy,
        ]);
    }
    report.series.push(series);
    Ok(report)
}

fn run_sample(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let chains = cfg.chains.unwrap();
    let opts = ChainOptions {
        h: cfg.h.unwrap(),
        iterations: cfg.iterations.unwrap(),
        policy: cfg.policy(),
        h_cap: cfg.h_cap,
    };
    let init = law.draw_set(chains, cfg.seed, Some(&map))?;
    let (out, stats) = run_chains(&map, &pot, &init, &opts, cfg.seed)?;
    report.merge_stats(&stats);

    if let Some(expected) = cfg.expected_bias {
        let target = DualTarget::new(map.clone(), pot.clone())?;
        let exact = target.exact_dual_samples(chains, derive_seed(cfg.seed, &[0xE7AC]))?;
        if map.primal_dim() != 1 {
            return Err(MllError::Unsupported(
                "transport-bias check in the sample experiment is one-dimensional".into(),
            ));
        }
        let xs = out.as_1d()?;
        let ys = exact.as_1d()?;
        let w2 = w2_1d(&xs, &ys)?.value;
        let hw = bootstrap_half_width_1d(&xs, &ys, BOOTSTRAP_RESAMPLES, cfg.seed)?;
        let frac = cfg.bias_tolerance_frac.unwrap_or(0.1);
        report.add_metric(
            MetricResult::checked("w2_bias", w2, expected, hw + frac * expected)
                .with_half_width(hw),
        );
        let mut series = CsvSeries::new("sample_w2", &["n", "w2", "half_width", "expected"]);
        series.push(vec![chains as f64, w2, hw, expected]);
        report.series.push(series);
    }

    // First and second moments per coordinate, as informational output.
    let mut series = CsvSeries::new("sample_moments", &["coordinate", "mean", "variance"]);
    let data = out.data();
    for j in 0..out.dim() {
        let mean = data.column(j).iter().sum::<f64>() / chains as f64;
        let var = data.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (chains as f64 - 1.0);
        series.push(vec![j as f64, mean, var]);
    }
    report.series.push(series);
    Ok(report)
}

fn run_bias_scan(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let scan = bias_scan(
        &map,
        &pot,
        &law,
        cfg.h_grid.as_ref().unwrap(),
        cfg.chains.unwrap(),
        cfg.slices.unwrap_or(DEFAULT_SLICES),
        cfg.policy(),
        cfg.seed,
    )?;
    let mut series = CsvSeries::new("bias", &["h", "error", "half_width"]);
    for p in &scan.points {
        series.push(vec![p.h, p.w2, p.half_width]);
        report.violations.violations += p.violations;
    }
    report.series.push(series);
    for (i, trace) in scan.traces.iter().enumerate() {
        let mut ts = CsvSeries::new(format!("trace_h{i}"), &["k", "w2"]);
        for &(k, w2) in trace {
            ts.push(vec![k as f64, w2]);
        }
        report.series.push(ts);
    }
    report.add_metric(MetricResult::value("slope_ci_low", scan.fit.slope_ci.0));
    report.add_metric(MetricResult::value("slope_ci_high", scan.fit.slope_ci.1));
    match cfg.slope_window {
        Some(w) => report.add_metric(MetricResult::windowed("bias_slope", scan.fit.slope, w)),
        None => report.add_metric(MetricResult::value("bias_slope", scan.fit.slope)),
    }
    Ok(report)
}

fn run_local_error(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let h_grid = cfg.h_grid.as_ref().unwrap();
    let replicas = cfg.replicas.unwrap_or(DEFAULT_REPLICAS);
    let fine = cfg.fine_per_step.unwrap_or(DEFAULT_FINE_PER_STEP);

    let (_, big_m) = pot.rel_constants(&map)?;
    let alpha = map.factor_lipschitz_sq();
    let anchors = instance_anchors(&map, &pot)?;
    let v = anchors.y_star.norm() + anchors.a_star_hs + anchors.g_star_norm / big_m;
    let e_y0 = law.second_moment();

    let mut weak_vals = Vec::new();
    let mut weak_hws = Vec::new();
    let mut strong_vals = Vec::new();
    let mut strong_hws = Vec::new();
    let mut weak_series = CsvSeries::new("weak", &["h", "error", "half_width", "envelope"]);
    let mut strong_series = CsvSeries::new("strong", &["h", "error", "half_width", "envelope"]);
    let mut envelopes_ok = true;
    for (hi, &h) in h_grid.iter().enumerate() {
        let seed_h = derive_seed(cfg.seed, &[0x10CA1, hi as u64]);
        let est = local_errors(&map, &pot, &law, h, replicas, fine, seed_h)?;
        let weak_env = crate::analysis::weak_error_envelope(big_m, alpha, v, e_y0, h);
        let strong_env = crate::analysis::strong_error_envelope(alpha, v, e_y0, h);
        envelopes_ok &= est.weak.value <= weak_env + 3.0 * est.weak.std_error();
        envelopes_ok &= est.strong.value <= strong_env + 3.0 * est.strong.std_error();
        weak_series.push(vec![h, est.weak.value, est.weak.half_width, weak_env]);
        strong_series.push(vec![h, est.strong.value, est.strong.half_width, strong_env]);
        weak_vals.push(est.weak.value);
        weak_hws.push(est.weak.half_width);
        strong_vals.push(est.strong.value);
        strong_hws.push(est.strong.half_width);
        report.violations.violations += 2 * est.weak.discarded as u64;
    }
    report.series.push(weak_series);
    report.series.push(strong_series);

    let weak_fit = fit_order(h_grid, &weak_vals, &weak_hws)?;
    let strong_fit = fit_order(h_grid, &strong_vals, &strong_hws)?;
    match cfg.weak_slope_min {
        Some(min) => report.add_metric(MetricResult::at_least("weak_slope", weak_fit.slope, min)),
        None => report.add_metric(MetricResult::value("weak_slope", weak_fit.slope)),
    }
    match cfg.slope_window {
        Some(w) => report.add_metric(MetricResult::windowed("strong_slope", strong_fit.slope, w)),
        None => report.add_metric(MetricResult::value("strong_slope", strong_fit.slope)),
    }
    report.add_metric(MetricResult::value("weak_slope_ci_low", weak_fit.slope_ci.0));
    report.add_metric(MetricResult::value("weak_slope_ci_high", weak_fit.slope_ci.1));
    report.add_metric(MetricResult::value("strong_slope_ci_low", strong_fit.slope_ci.0));
    report.add_metric(MetricResult::value("strong_slope_ci_high", strong_fit.slope_ci.1));
    report.add_metric(MetricResult::flag("local_error_envelopes", envelopes_ok));
    Ok(report)
}

fn run_contraction(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let offset = DVector::from_column_slice(cfg.offset.as_ref().unwrap());
    let fit = contraction_rate(
        &map,
        &pot,
        &law,
        &offset,
        cfg.pairs.unwrap(),
        cfg.h.unwrap(),
        cfg.iterations.unwrap(),
        DEFAULT_GRID_POINTS,
        cfg.seed,
    )?;
    let mut series = CsvSeries::new("distance", &["t", "mean_sq", "half_width"]);
    for i in 0..fit.times.len() {
        series.push(vec![fit.times[i], fit.mean_sq[i], fit.half_widths[i]]);
    }
    report.series.push(series);
    report.add_metric(MetricResult::value("rate_ci_low", fit.rate_ci.0));
    report.add_metric(MetricResult::value("rate_ci_high", fit.rate_ci.1));
    report.add_metric(MetricResult::flag("contracting", !fit.non_contracting));
    match cfg.rate_window {
        Some(w) => report.add_metric(MetricResult::windowed("rate", fit.rate, w)),
        None => report.add_metric(MetricResult::value("rate", fit.rate)),
    }
    Ok(report)
}

fn run_deviation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let offset = DVector::from_column_slice(cfg.offset.as_ref().unwrap());
    let rep = deviation_check(
        &map,
        &pot,
        &law,
        &offset,
        cfg.t_grid.as_ref().unwrap(),
        cfg.replicas.unwrap(),
        cfg.fine_per_interval.unwrap_or(DEFAULT_FINE_PER_INTERVAL),
        cfg.seed,
    )?;
    let mut series = CsvSeries::new("deviation", &["t", "lhs", "half_width", "bound"]);
    for p in &rep.points {
        series.push(vec![p.t, p.lhs, p.half_width, p.bound]);
    }
    report.series.push(series);
    report.add_metric(MetricResult::value("max_ratio", rep.max_ratio));
    report.add_metric(MetricResult::value("bound_constant", rep.bound_constant));
    report.add_metric(MetricResult::flag("deviation_envelope", rep.passed));
    report.violations.violations += rep.discarded as u64;
    Ok(report)
}

fn run_growth(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let rep = growth_check(
        &map,
        &pot,
        &law,
        cfg.t_grid.as_ref().unwrap(),
        cfg.replicas.unwrap(),
        cfg.fine_per_interval.unwrap_or(DEFAULT_FINE_PER_INTERVAL),
        cfg.seed,
    )?;
    let mut series = CsvSeries::new("growth", &["t", "lhs", "half_width", "bound"]);
    for p in &rep.points {
        series.push(vec![p.t, p.lhs, p.half_width, p.bound]);
    }
    report.series.push(series);
    report.add_metric(MetricResult::value("max_ratio", rep.max_ratio));
    report.add_metric(MetricResult::value("gamma", rep.bound_constant));
    report.add_metric(MetricResult::flag("growth_envelope", rep.passed));
    report.violations.violations += rep.discarded as u64;
    Ok(report)
}

fn run_constants(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let (map, pot) = cfg.instance()?;
    let law = cfg.init_law(&map, &pot)?;
    let c = constants_for_instance(&map, &pot, &law)?;
    // Pure arithmetic: a second evaluation must be byte-identical.
    let again = constants_for_instance(&map, &pot, &law)?;
    let bit_stable = serde_json::to_string(&c)? == serde_json::to_string(&again)? && c == again;

    let eps = c.w0_bound * 1e-6;
    let tau_ratio = c.mixing_time(eps / 2.0) / c.mixing_time(eps);

    for (name, value) in [
        ("m", c.m),
        ("M", c.big_m),
        ("alpha", c.alpha),
        ("beta", c.beta),
        ("c0", c.c0),
        ("c1", c.c1),
        ("d1", c.d1),
        ("c2", c.c2),
        ("d2", c.d2),
        ("h1", c.h1),
        ("h2", c.h2),
        ("h_max", c.h_max),
        ("h_max_coeff_8a", c.h_max_coeff_8a),
        ("u", c.u),
        ("v", c.v),
        ("c_mla", c.c_mla),
        ("w0_bound", c.w0_bound),
    ] {
        report.add_metric(MetricResult::value(name, value));
    }
    report.add_metric(MetricResult::flag("bit_stable", bit_stable));
    report.add_metric(MetricResult::windowed("tau_ratio", tau_ratio, (3.5, 4.5)));

    let mut series = CsvSeries::new(
        "constants",
        &["m", "M", "alpha", "beta", "c0", "c1", "d1", "c2", "d2", "h_max", "u", "v", "c_mla"],
    );
    series.push(vec![
        c.m, c.big_m, c.alpha, c.beta, c.c0, c.c1, c.d1, c.c2, c.d2, c.h_max, c.u, c.v, c.c_mla,
    ]);
    report.series.push(series);
    Ok(report)
}

fn run_msc(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let spec = cfg.msc.as_ref().unwrap();
    if spec.eps_list.is_empty() {
        return Err(MllError::ConfigInvalid("msc needs a nonempty eps list".into()));
    }
    let mut series = CsvSeries::new(
        "msc",
        &["eps", "sigma_min_sq", "bound", "witness_ratio", "empirical_sup"],
    );
    let mut bounds = Vec::new();
    for (i, &eps) in spec.eps_list.iter().enumerate() {
        let map = epsilon_family_map(eps)?;
        let (wx, wx2) = epsilon_family_witness(eps);
        let witness_ratio = msc_pair_ratio(&map, &wx, &wx2)?;
        let bound = 1.0 / (1.0 - (1.0 - eps * eps).sqrt());
        let rep = msc_report_polytope(&map, spec.probe_pairs, derive_seed(cfg.seed, &[i as u64]))?;
        let sigma_min = *rep.singular_values.last().unwrap();
        report.add_metric(MetricResult::checked(
            format!("eps_{eps}/witness_ratio"),
            witness_ratio,
            bound,
            spec.witness_rel_tol * bound,
        ));
        report.add_metric(MetricResult::at_most(
            format!("eps_{eps}/empirical_sup"),
            rep.empirical_sup,
            bound + 1e-9,
        ));
        series.push(vec![eps, sigma_min * sigma_min, bound, witness_ratio, rep.empirical_sup]);
        bounds.push(bound);
    }
    let window = spec.bound_ratio_window.unwrap_or((3.6, 4.4));
    for i in 1..bounds.len() {
        report.add_metric(MetricResult::windowed(
            format!("bound_ratio_{}", i - 1),
            bounds[i] / bounds[i - 1],
            window,
        ));
    }
    report.series.push(series);
    Ok(report)
}

fn run_gbm_check(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = base_report(cfg)?;
    let spec = cfg.gbm.as_ref().unwrap();

    // Second-moment decay of the exact solution: E[Y_t^2]/Y_0^2 over
    // sampled endpoints against exp(-2 (1 - alpha) t).
    let n = spec.moment_replicas;
    let alpha = spec.moment_alpha;
    let t = spec.moment_t;
    let sums: (f64, f64) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, &[STREAM_PATH, i as u64]);
            let w = t.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let y = gbm_exact(1.0, alpha, t, w);
            let sq = y * y;
            (sq, sq * sq)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sums.0 / n as f64;
    let var = (sums.1 / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    let expected = (-2.0 * (1.0 - alpha) * t).exp();
    report.add_metric(
        MetricResult::checked("moment_ratio", mean, expected, 3.0 * se).with_half_width(1.96 * se),
    );
    let mut moment_series = CsvSeries::new(
        "gbm_moment",
        &["alpha", "t", "moment_ratio", "std_error", "expected"],
    );
    moment_series.push(vec![alpha, t, mean, se, expected]);
    report.series.push(moment_series);

    // Synchronous-pair rate across the contraction threshold.
    let mut rate_series = CsvSeries::new(
        "gbm_rates",
        &["alpha", "rate", "rate_ci_low", "rate_ci_high", "non_contracting"],
    );
    let law = InitLaw::Point(DVector::from_element(1, 1.0));
    let offset = DVector::from_element(1, 0.5);
    for (i, &a) in spec.rate_alphas.iter().enumerate() {
        let map = MirrorMap::gbm1d(a)?;
        let pot = Potential::RelativeAffine { lambda: 1.0, shift: DVector::zeros(1) };
        let fit = contraction_rate(
            &map,
            &pot,
            &law,
            &offset,
            spec.rate_pairs,
            spec.rate_h,
            spec.rate_steps,
            DEFAULT_GRID_POINTS,
            derive_seed(cfg.seed, &[0x6B, i as u64]),
        )?;
        // Below the unit threshold the pair contracts, above it the flag
        // must trip.
        let ok = if a < 1.0 {
            fit.rate > 0.0 && !fit.non_contracting
        } else {
            fit.non_contracting
        };
        report.add_metric(MetricResult::flag(format!("alpha_{a}/threshold_side"), ok));
        report.add_metric(MetricResult::value(format!("alpha_{a}/rate"), fit.rate));
        rate_series.push(vec![
            a,
            fit.rate,
            fit.rate_ci.0,
            fit.rate_ci.1,
            if fit.non_contracting { 1.0 } else { 0.0 },
        ]);
    }
    report.series.push(rate_series);
    Ok(report)
}
