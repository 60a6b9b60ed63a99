//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runs the full-size experiments, so expect minutes.

use std::process::ExitCode;
use std::time::Instant;

use coevo_core::dynamics::{AdditionMode, RemovalBudget, RemovalMode};
use coevo_core::equilibrium::{compute_metrics, dense_pd_oracle, solve_expressed, DEFAULT_TOL};
use coevo_core::experiment::{
    run_experiment, stage_summary, BoundAudit, ExperimentConfig, ExperimentResult, GraphSource,
};
use coevo_core::io::write_outputs;
use coevo_core::rng::{stream_rng, streams};
use coevo_core::synthesis::{gen_ba, gen_er, gen_opinions, gen_sbm, OpinionKind};
use coevo_core::theory::{certify, CertifyConfig, TheoryReport};
use coevo_core::{presets, Graph};
use rand::Rng;

const N: usize = 1000;
const DEGREE: f64 = 25.0;
const ITERATIONS: usize = 500;
const TRIALS: usize = 5;

const FORMULA_TOL: f64 = 1e-8;
const MIN_SWAPS: usize = 10_000;
const POLARIZATION_T150: f64 = 0.25;
const POLARIZATION_T500: f64 = 0.28;
const CONTROL_MAX: f64 = 0.10;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_INSTANCES: usize = 100;
const ORACLE_MAX_N: usize = 200;

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn er_config(name: &str, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        name,
        GraphSource::Er {
            n: N,
            p: None,
            degree: Some(DEGREE),
        },
    );
    cfg.trials = TRIALS;
    cfg.dynamics.iterations = ITERATIONS;
    cfg.dynamics.base_seed = seed;
    cfg.dynamics.removal_budget = RemovalBudget::Fraction(0.10);
    cfg
}

fn run(cfg: &ExperimentConfig) -> ExperimentResult {
    let start = Instant::now();
    let res = run_experiment(cfg, None).unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
    eprintln!(
        "  ran {} in {:.1}s",
        cfg.name,
        start.elapsed().as_secs_f64()
    );
    res
}

fn final_polarization(res: &ExperimentResult) -> f64 {
    res.series.final_row().polarization_per_node.mean
}

fn polarization_at(res: &ExperimentResult, t: usize) -> f64 {
    res.series
        .row(t)
        .expect("row in range")
        .polarization_per_node
        .mean
}

fn certification() -> (TheoryReport, f64) {
    let cfg = CertifyConfig {
        n: 50,
        p: 0.2,
        instances: 100,
        swaps: MIN_SWAPS,
        formula_tol: FORMULA_TOL,
        seed: 2024,
        ..CertifyConfig::default()
    };
    let start = Instant::now();
    let report = certify(&cfg).expect("certification runs");
    (report, start.elapsed().as_secs_f64())
}

fn oracle_instance(i: u64) -> (Graph, coevo_core::synthesis::OpinionVector) {
    let mut rng = stream_rng(9000 + i, streams::GRAPH);
    let n = rng.random_range(10..=ORACLE_MAX_N);
    let g = match i % 3 {
        0 => gen_er(n, rng.random_range(0.02..0.3), &mut rng).unwrap(),
        1 => gen_ba(n, rng.random_range(1..=5.min(n - 1)), &mut rng).unwrap(),
        _ => {
            gen_sbm(n, 2 + (i as usize % 3), 0.3, 0.02, &mut rng)
                .unwrap()
                .0
        }
    };
    let mut orng = stream_rng(9000 + i, streams::OPINIONS);
    let s = gen_opinions(n, OpinionKind::Uniform, None, &mut orng).unwrap();
    (g, s)
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn oracle_equivalence() -> (usize, f64) {
    let mut failures = 0;
    let mut worst = 0.0f64;
    for i in 0..ORACLE_INSTANCES as u64 {
        let (g, s) = oracle_instance(i);
        let z = solve_expressed(&g, &s, DEFAULT_TOL, None).unwrap();
        let m = compute_metrics(&g, &s, &z).unwrap();
        let d = dense_pd_oracle(&g, &s).unwrap();
        let dev = rel(m.polarization_raw, d.polarization)
            .max(rel(m.disagreement_raw, d.disagreement))
            .max(rel(m.pd_raw, d.pd));
        worst = worst.max(dev);
        if dev > ORACLE_TOL {
            failures += 1;
        }
    }
    (failures, worst)
}

/// Runs every preset grid point twice in a reduced form, and the
/// `fig8_ba_fixed` preset at full size twice, comparing manifests.
fn determinism() -> (bool, String) {
    let root = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for preset in presets::PRESETS {
        let plan = preset.plan().unwrap();
        for (j, planned) in plan.runs().unwrap().into_iter().enumerate() {
            let full = preset.name == "fig8_ba_fixed";
            let mut cfg = planned.config;
            if !full {
                cfg.trials = 2;
                cfg.dynamics.iterations = 10;
                cfg.snapshot_times.retain(|&t| t <= 10);
            }
            let a = write_outputs(
                &run_quiet(&cfg),
                root.path().join(format!("{}_{j}_a", preset.name)),
            )
            .unwrap();
            let b = write_outputs(
                &run_quiet(&cfg),
                root.path().join(format!("{}_{j}_b", preset.name)),
            )
            .unwrap();
            compared += 1;
            if a != b || a.files.is_empty() {
                mismatched.push(cfg.name.clone());
            }
        }
    }
    let detail = format!(
        "{compared} preset runs compared (fig8_ba_fixed at full size), {} mismatched{}",
        mismatched.len(),
        if mismatched.is_empty() {
            String::new()
        } else {
            format!(": {}", mismatched.join(", "))
        }
    );
    (mismatched.is_empty(), detail)
}

fn run_quiet(cfg: &ExperimentConfig) -> ExperimentResult {
    run_experiment(cfg, None).unwrap_or_else(|e| panic!("{}: {e}", cfg.name))
}

fn main() -> ExitCode {
    let mut out = Vec::new();
    let mut push = |id, title, pass, detail: String| {
        out.push(Outcome {
            id,
            title,
            pass,
            detail,
        })
    };

    let (report, secs) = certification();
    push(
        1,
        "single-edge update formulas match dense recomputation",
        report.formula_failures == 0
            && report.monotonicity_violations == 0
            && report.single_edge_bound_violations == 0
            && report.resistance_range_violations == 0
            && report.max_formula_deviation() <= FORMULA_TOL
            && secs < 60.0,
        format!(
            "{} instances, {} additions + {} deletions, max rel dev {:.2e} (tol {FORMULA_TOL:.0e}), {secs:.1}s",
            report.instances,
            report.add_checks,
            report.delete_checks,
            report.max_formula_deviation()
        ),
    );
    push(
        2,
        "swap lower bound and alpha bound hold",
        report.swap_checks >= MIN_SWAPS
            && report.swap_bound_violations == 0
            && report.alpha_bound_violations == 0,
        format!(
            "{} swaps, {} bound violations (max excess {:.2e}), {} alpha violations",
            report.swap_checks,
            report.swap_bound_violations,
            report.max_swap_bound_excess,
            report.alpha_bound_violations
        ),
    );
    push(
        3,
        "swap predicate implies PD increase",
        report.swap_checks >= MIN_SWAPS && report.predicate_counterexamples == 0,
        format!(
            "{} of {} swaps satisfy the predicate, {} counterexamples",
            report.predicate_true, report.swap_checks, report.predicate_counterexamples
        ),
    );

    eprintln!("running experiments");
    let biased = run(&er_config("er_biased", 11));
    let mut cfg = er_config("er_random_additions", 11);
    cfg.dynamics.addition_mode = AdditionMode::UniformRandom;
    let random_add = run(&cfg);
    let mut cfg = er_config("er_random_removals", 11);
    cfg.dynamics.removal_mode = RemovalMode::UniformRandom;
    let random_rm = run(&cfg);
    let mut cfg = er_config("er_sparse", 12);
    cfg.graph = GraphSource::Er {
        n: N,
        p: Some(0.01),
        degree: None,
    };
    let sparse = run(&cfg);
    let mut cfg = er_config("er_dense", 12);
    cfg.graph = GraphSource::Er {
        n: N,
        p: Some(0.10),
        degree: None,
    };
    let dense = run(&cfg);
    let mut cfg = er_config("er_fixed", 11);
    cfg.dynamics.fixed_fraction = 0.10;
    let fixed = run(&cfg);

    let runs = [&biased, &random_add, &random_rm, &sparse, &dense, &fixed];
    let mut audit = BoundAudit::default();
    for r in runs {
        let a = r.audit;
        audit.variance_bound_checks += a.variance_bound_checks;
        audit.variance_bound_violations += a.variance_bound_violations;
        audit.max_variance_ratio = audit.max_variance_ratio.max(a.max_variance_ratio);
        audit.fixed_bound_checks += a.fixed_bound_checks;
        audit.fixed_bound_violations += a.fixed_bound_violations;
        audit.max_fixed_ratio = audit.max_fixed_ratio.max(a.max_fixed_ratio);
    }
    push(
        4,
        "polarization within variance and fixed-graph bounds",
        audit.variance_bound_violations == 0
            && audit.fixed_bound_violations == 0
            && audit.variance_bound_checks > 0
            && audit.fixed_bound_checks > 0,
        format!(
            "{} variance checks (max P/|s|^2 {:.3}), {} fixed-graph checks (max P/PD_F {:.3}), {} violations",
            audit.variance_bound_checks,
            audit.max_variance_ratio,
            audit.fixed_bound_checks,
            audit.max_fixed_ratio,
            audit.variance_bound_violations + audit.fixed_bound_violations
        ),
    );

    let (p150, p500) = (polarization_at(&biased, 150), final_polarization(&biased));
    push(
        5,
        "biased ER(1000, deg 25) polarization approaches 1/3",
        p150 >= POLARIZATION_T150 && p500 >= POLARIZATION_T500,
        format!("P/n = {p150:.4} at t=150 (need {POLARIZATION_T150}), {p500:.4} at t=500 (need {POLARIZATION_T500})"),
    );

    let (ca, cr) = (
        final_polarization(&random_add),
        final_polarization(&random_rm),
    );
    push(
        6,
        "controls stay unpolarized",
        ca < CONTROL_MAX && cr < CONTROL_MAX,
        format!("final P/n = {ca:.4} (random additions), {cr:.4} (random removals), need < {CONTROL_MAX}"),
    );

    let (ps, pd) = (final_polarization(&sparse), final_polarization(&dense));
    push(
        7,
        "dense ER polarizes far less than sparse ER",
        pd < 0.5 * ps,
        format!(
            "final P/n = {pd:.4} at p=0.10 vs {ps:.4} at p=0.01 (ratio {:.3}, need < 0.5)",
            pd / ps
        ),
    );

    let (pf, df) = (
        final_polarization(&fixed),
        fixed.series.final_row().disagreement_per_edge.mean,
    );
    let d0 = biased.series.final_row().disagreement_per_edge.mean;
    push(
        8,
        "fixed edges cap polarization and sustain disagreement",
        pf <= 0.5 * p500 && df > d0,
        format!(
            "final P/n = {pf:.4} vs {p500:.4} unfixed (ratio {:.3}); D/e = {df:.3e} vs {d0:.3e}",
            pf / p500
        ),
    );

    let stage = stage_summary(&biased.series);
    push(
        9,
        "disagreement peaks in the interior and MSE collapses",
        stage.peak_t > 0
            && stage.peak_t < ITERATIONS
            && stage.final_over_peak < 0.5
            && stage.mse_final_over_initial < 0.2,
        format!(
            "peak D/e at t={} ({:.3e}), final/peak {:.3}, MSE final/initial {:.3}",
            stage.peak_t,
            stage.peak_disagreement,
            stage.final_over_peak,
            stage.mse_final_over_initial
        ),
    );

    let (failures, worst) = oracle_equivalence();
    push(
        10,
        "iterative metrics agree with the dense oracle",
        failures == 0,
        format!("{ORACLE_INSTANCES} instances (n <= {ORACLE_MAX_N}), max rel dev {worst:.2e} (tol {ORACLE_TOL:.0e})"),
    );

    eprintln!("checking preset determinism");
    let (ok, detail) = determinism();
    push(11, "same seed gives identical output manifests", ok, detail);

    println!();
    for o in &out {
        println!(
            "criterion {:>2} {}: {} ({})",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.detail
        );
    }
    let failed = out.iter().filter(|o| !o.pass).count();
    println!("\n{} of {} criteria passed", out.len() - failed, out.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
