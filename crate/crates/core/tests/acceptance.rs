//! Acceptance suite: every verification target runs here at its stated
//! tolerance, one test per criterion, each printing a PASS/FAIL line.
//! The configurations are the bundled recipes, so `mll run <name>` and this
//! suite exercise exactly the same checks.

use mll_core::analysis::{mixing_constants, ConstantsInput};
use mll_core::config::ExperimentConfig;
use mll_core::experiments::run_experiment;
use mll_core::recipes::get_recipe;
use mll_core::report::ExperimentReport;
use mll_core::MllError;

fn run_recipe(name: &str) -> mll_core::Result<ExperimentReport> {
    let recipe = get_recipe(name).unwrap_or_else(|| panic!("missing recipe {name}"));
    let cfg = ExperimentConfig::from_json(recipe.json)?;
    run_experiment(&cfg)
}

fn report_line(criterion: &str, passed: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn metric(report: &ExperimentReport, name: &str) -> f64 {
    report
        .metrics
        .iter()
        .find(|m| m.name == name)
        .unwrap_or_else(|| panic!("metric {name} missing"))
        .value
}

#[test]
fn acceptance_1_legendre_duality_suite() {
    let report = run_recipe("duality_all_maps").expect("duality suite failed to run");
    let detail = format!(
        "{} checks over 4 map kinds, 1000 points each",
        report.metrics.len()
    );
    report_line("1 (legendre/duality suite)", report.passed, &detail);
    assert!(report.passed, "duality residuals out of tolerance: {:?}", report.metrics);
}

#[test]
fn acceptance_2_euclidean_bias_oracle() {
    let report = run_recipe("ula_bias_quadratic").expect("sample experiment failed to run");
    let w2 = metric(&report, "w2_bias");
    report_line(
        "2 (euclidean closed-form bias)",
        report.passed,
        &format!("w2 = {w2:.5} vs 0.02598"),
    );
    assert!(report.passed, "bias {w2} outside half-width + 10% of 0.025978");
}

#[test]
fn acceptance_3_gbm_thresholds() {
    let report = run_recipe("gbm_threshold").expect("gbm check failed to run");
    let ratio = metric(&report, "moment_ratio");
    let low = metric(&report, "alpha_0.9/rate");
    let high = metric(&report, "alpha_1.1/rate");
    report_line(
        "3 (gbm thresholds)",
        report.passed,
        &format!("moment {ratio:.5} vs {:.5}; rates {low:.4} / {high:.4}", (-1.0f64).exp()),
    );
    assert!(report.passed, "gbm threshold checks failed: {:?}", report.metrics);
}

#[test]
fn acceptance_4_contraction_rate() {
    let report = run_recipe("contraction_orthant").expect("contraction failed to run");
    let rate = metric(&report, "rate");
    report_line(
        "4 (contraction rate)",
        report.passed,
        &format!("fitted rate {rate:.4}, target 1 within 20%"),
    );
    assert!(report.passed, "rate {rate} outside [0.8, 1.2]");
}

#[test]
fn acceptance_5_deviation_and_growth_envelopes() {
    let dev = run_recipe("deviation_orthant").expect("deviation failed to run");
    let grow = run_recipe("growth_orthant").expect("growth failed to run");
    let passed = dev.passed && grow.passed;
    report_line(
        "5 (deviation/growth envelopes)",
        passed,
        &format!(
            "deviation max ratio {:.3} (bound {:.1}); growth max ratio {:.3} of gamma t",
            metric(&dev, "max_ratio"),
            metric(&dev, "bound_constant"),
            metric(&grow, "max_ratio")
        ),
    );
    assert!(dev.passed, "deviation envelope violated");
    assert!(grow.passed, "growth envelope violated");
}

#[test]
fn acceptance_6_local_error_orders() {
    let mut all = true;
    let mut details = Vec::new();
    for name in ["local_error_quadratic", "local_error_orthant", "local_error_gbm"] {
        let report = run_recipe(name).unwrap_or_else(|e| panic!("{name} failed to run: {e}"));
        details.push(format!(
            "{name}: weak {:.3}, strong {:.3}",
            metric(&report, "weak_slope"),
            metric(&report, "strong_slope")
        ));
        all &= report.passed;
    }
    report_line("6 (local error orders)", all, &details.join("; "));
    assert!(all, "local error orders/envelopes failed: {details:?}");
}

/// Expected to fail; see the verification notes in the README. The dual
/// target of this instance has tail index 3, so the exact empirical
/// transport estimator carries an n^(-1/6) noise floor (~0.05 at any
/// desk-scale sample count) that sits above the sqrt-h bias signal
/// (~0.01 on the admissible step grid). The check is kept at its stated
/// tolerance rather than loosened.
#[test]
fn acceptance_7_bias_scaling() {
    match run_recipe("bias_scan_orthant") {
        Ok(report) => {
            let slope = metric(&report, "bias_slope");
            report_line("7 (bias scaling)", report.passed, &format!("slope {slope:.3}"));
            assert!(
                report.passed,
                "bias slope {slope} outside [0.4, 0.75]: estimator floor dominates the signal"
            );
        }
        Err(e @ MllError::DegenerateGrid(_)) => {
            report_line(
                "7 (bias scaling)",
                false,
                &format!("estimator refused the fit: {e}"),
            );
            panic!(
                "bias scan cannot resolve the sqrt-h signal: {e}. The empirical transport \
                 floor of the heavy-tailed dual target (~0.4 n^-1/6) exceeds the bias \
                 (~0.065 sqrt(h)) for every feasible n."
            );
        }
        Err(e) => panic!("bias scan failed to run: {e}"),
    }
}

#[test]
fn acceptance_8_constants_calculator() {
    let report = run_recipe("constants_orthant").expect("constants failed to run");
    let tau_ratio = metric(&report, "tau_ratio");
    let h_max = metric(&report, "h_max");
    // The orthant instance's step ceiling lands at 1.79e-7, dominated by the
    // last admissibility term.
    let h_max_ok = (h_max - 1.789e-7).abs() < 2e-9;
    // Doubling accuracy quadruples the iteration count (up to the log term).
    let ratio_ok = (3.5..=4.5).contains(&tau_ratio);
    // Instances without contraction must be rejected.
    let rejected = matches!(
        mixing_constants(&ConstantsInput {
            rel_m: 1.0,
            rel_big_m: 1.0,
            alpha: 1.5,
            dim: 1,
            y_star_norm: 0.0,
            a_star_hs: 0.0,
            g_star_norm: 0.0,
            e_y0_sq: 1.0,
            e_target_sq: 1.0,
        }),
        Err(MllError::NotContractive(_))
    );
    let passed = report.passed && h_max_ok && ratio_ok && rejected;
    report_line(
        "8 (constants calculator)",
        passed,
        &format!("h_max {h_max:.4e}, tau ratio {tau_ratio:.3}, non-contractive rejected {rejected}"),
    );
    assert!(report.passed, "constants report failed: {:?}", report.metrics);
    assert!(h_max_ok, "h_max {h_max} != 1.789e-7");
    assert!(ratio_ok, "tau ratio {tau_ratio} outside [3.5, 4.5]");
    assert!(rejected, "alpha >= m must raise the non-contractive error");
}

#[test]
fn acceptance_9_modified_self_concordance() {
    let report = run_recipe("msc_2d_epsilon").expect("msc failed to run");
    let witness = metric(&report, "eps_0.2/witness_ratio");
    let bound = 1.0 / (1.0 - 0.96f64.sqrt());
    report_line(
        "9 (modified self-concordance)",
        report.passed,
        &format!("witness at eps 0.2: {witness:.4} vs bound {bound:.4}"),
    );
    assert!(report.passed, "msc checks failed: {:?}", report.metrics);
    assert!((witness - bound).abs() <= 1e-6 * bound);
}
