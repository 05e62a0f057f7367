mod support;

use impact_core::dynamics::{
    default_models, equilibrium_flow, init_dynamic_state, run_scenario, simulate, RunOptions,
    Simulator, StabilityClass, Thresholds,
};
use impact_core::powerflow::{solve_newton, SolveOptions};
use impact_core::raim::{
    cascade_confirm, cross_check, pipeline_run, re_evaluate, switched_branches, DynamicOutcome,
    NonCriticalSample, PermutationPlan, PipelineConfig, ReEvalContext, Resolution, Rung, Strategy,
    DEFAULT_PERMUTATION_CAP,
};
use impact_core::screening::{OutageCombination, Reason, ScreeningConfig, ScreeningResult, Screener, Verdict};
use impact_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn initial(case: &impact_core::grid::GridCase) -> Simulator {
    let pf = solve_newton(case, &equilibrium_flow()).unwrap();
    init_dynamic_state(case, &pf, &default_models(case)).unwrap()
}

fn synthetic(sub: u32, verdict: Verdict) -> ScreeningResult {
    // Distinct combinations: singletons up to 500, pairs above.
    let ids = if sub <= 500 { vec![sub] } else { vec![sub - 500, sub + 1000] };
    ScreeningResult {
        combination: OutageCombination::new(ids.into_iter().map(impact_core::grid::SubstationId).collect()),
        verdict,
        reason: if verdict == Verdict::Critical {
            Reason::DeadSystem
        } else {
            Reason::Clean
        },
        violations: vec![],
        islands: 1,
        unserved_mw: 0.0,
        removed_branches: vec![],
        contained_in: None,
    }
}

fn outcome(critical: bool) -> DynamicOutcome {
    DynamicOutcome {
        class: if critical {
            StabilityClass::TransientUnstable
        } else {
            StabilityClass::Stable
        },
        critical,
        fraction_unstable: if critical { 1.0 } else { 0.0 },
    }
}

#[test]
fn all_stable_verification_puts_all_mass_on_stable() {
    let screened: Vec<_> = (1..=20)
        .map(|s| synthetic(s, if s % 3 == 0 { Verdict::Critical } else { Verdict::NonCritical }))
        .collect();
    let dynamic: Vec<_> = screened
        .iter()
        .map(|r| (r.combination.clone(), outcome(false)))
        .collect();
    let m = cross_check(&screened, &dynamic).unwrap();
    assert_eq!(m.overall.given_critical, Some((0.0, 1.0)));
    assert_eq!(m.overall.given_noncritical, Some((0.0, 1.0)));
    assert_eq!(m.disagreements().count(), 6);
}

#[test]
fn matrix_matches_a_hand_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let screened: Vec<_> = (1..=1000u32)
        .map(|s| synthetic(s, if rng.gen_bool(0.3) { Verdict::Critical } else { Verdict::NonCritical }))
        .collect();
    let mut dynamic = Vec::new();
    // [steady critical?][dynamic critical?]
    let mut tally = [[0usize; 2]; 2];
    for r in &screened {
        if rng.gen_bool(0.6) {
            let d = rng.gen_bool(0.4);
            tally[usize::from(r.is_critical())][usize::from(d)] += 1;
            dynamic.push((r.combination.clone(), outcome(d)));
        }
    }
    let crit = screened.iter().filter(|r| r.is_critical()).count();
    let m = cross_check(&screened, &dynamic).unwrap();
    let f = m.overall;
    assert_eq!(f.total, 1000);
    assert_eq!(f.steady_critical, crit);
    assert_eq!(f.p_critical_steady, crit as f64 / 1000.0);
    let row = |t: [usize; 2]| {
        let n = (t[0] + t[1]) as f64;
        (t[1] as f64 / n, t[0] as f64 / n)
    };
    let (gc, gn) = (f.given_critical.unwrap(), f.given_noncritical.unwrap());
    let (ec, en) = (row(tally[1]), row(tally[0]));
    assert!((gc.0 - ec.0).abs() < 1e-15 && (gc.1 - ec.1).abs() < 1e-15);
    assert!((gn.0 - en.0).abs() < 1e-15 && (gn.1 - en.1).abs() < 1e-15);
    let levels: usize = m.by_level.values().map(|l| l.total).sum();
    assert_eq!(levels, 1000);
    assert_eq!(m.by_level.len(), 2);
}

#[test]
fn unknown_dynamic_combination_is_rejected() {
    let screened = vec![synthetic(1, Verdict::NonCritical)];
    let stray = vec![(OutageCombination::from([2]), outcome(true))];
    assert!(matches!(cross_check(&screened, &stray), Err(Error::Unmatched(_))));
}

#[test]
fn exhaustive_fraction_equals_direct_count() {
    let case = support::ieee118();
    let branches = vec![(15, 17), (14, 15), (13, 15)];
    let plan = PermutationPlan::new(
        OutageCombination::from([15]),
        branches,
        DEFAULT_PERMUTATION_CAP,
        10,
        1,
    );
    assert_eq!(plan.strategy, Strategy::Exhaustive);
    let options = RunOptions {
        thresholds: Thresholds {
            angle_separation_deg: 45.0,
            ..Thresholds::default()
        },
        ..RunOptions::default()
    };
    let summary = cascade_confirm(&initial(&case), &plan, &options).unwrap();
    assert_eq!(summary.runs.len(), 6);
    let models = default_models(&case);
    let mut direct = 0;
    for order in plan.permutations() {
        let (_, v) = run_scenario(&case, &plan.schedule(&order).unwrap(), &models, &options).unwrap();
        direct += usize::from(v.is_critical());
    }
    assert_eq!(summary.unstable, direct);
    assert_eq!(summary.fraction_unstable, direct as f64 / 6.0);
}

#[test]
fn single_canonical_matches_a_direct_run() {
    let case = support::ieee118();
    let combo = OutageCombination::from([100]);
    let plan = PermutationPlan::canonical(combo.clone(), switched_branches(&case, &combo).unwrap());
    let summary = cascade_confirm(&initial(&case), &plan, &RunOptions::default()).unwrap();
    assert_eq!(summary.runs.len(), 1);
    let (trace, verdict) = run_scenario(
        &case,
        &plan.schedule(&plan.permutations()[0]).unwrap(),
        &default_models(&case),
        &RunOptions::default(),
    )
    .unwrap();
    let run = &summary.runs[0];
    assert_eq!(run.outcome.as_ref().unwrap(), &verdict);
    assert_eq!(run.trace.as_ref().unwrap().island_frequency(1), trace.island_frequency(1));
}

#[test]
fn one_branch_means_one_order() {
    let plan = PermutationPlan::new(OutageCombination::from([1]), vec![(1, 2)], 1, 24, 3);
    assert_eq!(plan.permutations(), vec![vec![0]]);
}

#[test]
fn agreeing_pair_is_not_re_evaluated() {
    let case = support::ieee118();
    let screener = Screener::new(&case, ScreeningConfig::default()).unwrap();
    let combo = OutageCombination::from([54]);
    let steady = screener.screen(&combo).unwrap();
    let sim = initial(&case);
    let plan = PermutationPlan::canonical(combo.clone(), switched_branches(&case, &combo).unwrap());
    let options = RunOptions::default();
    let cascade = cascade_confirm(&sim, &plan, &options).unwrap();
    assert!(!steady.is_critical() && cascade.unstable == 0);
    let ctx = ReEvalContext {
        screener: &screener,
        initial: &sim,
        options: &options,
    };
    assert!(matches!(re_evaluate(&ctx, &steady, &cascade), Err(Error::NoDisagreement)));
}

/// A steady verdict from an iteration-starved solver and an angle threshold
/// that only the finer step resolves: halving dt is what brings agreement.
#[test]
fn halved_step_reconciles_a_step_sensitive_pair() {
    let case = support::ieee118();
    let combo = OutageCombination::from([80]);
    let starved = ScreeningConfig {
        solve: SolveOptions {
            max_iterations: 2,
            ..SolveOptions::default()
        },
        ..ScreeningConfig::default()
    };
    let screener = Screener::new(&case, starved).unwrap();
    let steady = screener.screen(&combo).unwrap();
    assert!(steady.is_critical());

    let sim = initial(&case);
    let plan = PermutationPlan::canonical(combo.clone(), switched_branches(&case, &combo).unwrap());
    let schedule = plan.schedule(&plan.permutations()[0]).unwrap();
    let peak = |dt: f64| {
        let o = RunOptions {
            dt,
            sample_interval: dt,
            ..RunOptions::default()
        };
        let (trace, _) = simulate(sim.clone(), &schedule, &o);
        trace
            .islands
            .iter()
            .flatten()
            .map(|s| s.spread_deg)
            .fold(0.0f64, f64::max)
    };
    let (coarse, fine) = (peak(0.01), peak(0.005));
    assert!(fine > coarse, "finer step should resolve a higher peak");

    let options = RunOptions {
        thresholds: Thresholds {
            angle_separation_deg: 0.5 * (coarse + fine),
            ..Thresholds::default()
        },
        ..RunOptions::default()
    };
    let cascade = cascade_confirm(&sim, &plan, &options).unwrap();
    assert_eq!(cascade.unstable, 0);
    let ctx = ReEvalContext {
        screener: &screener,
        initial: &sim,
        options: &options,
    };
    let rec = re_evaluate(&ctx, &steady, &cascade).unwrap();
    assert_eq!(rec.resolution, Resolution::Reconciled(Rung::HalvedStep));
    assert_eq!(rec.adjustments.len(), 2);
    assert!(!rec.adjustments[0].agrees);
}

fn cheap_config(noncritical: NonCriticalSample, verify_critical: bool) -> PipelineConfig {
    PipelineConfig {
        seed: 11,
        verify_critical,
        noncritical,
        permutation_cap: 1,
        permutation_samples: 1,
        reevaluate: false,
        ..PipelineConfig::default()
    }
}

#[test]
fn level_one_pipeline_has_a_row_per_substation() {
    let case = support::ieee118();
    let report = pipeline_run(&case, &cheap_config(NonCriticalSample::Count(10), true)).unwrap();
    assert_eq!(report.matrix.records.len(), 118);
    let f = report.matrix.overall;
    assert_eq!(f.verified_noncritical, 10);
    assert_eq!(f.verified_critical, f.steady_critical);
    assert!(report.verifications.iter().all(|v| v.summary.runs.len() == 1));
}

#[test]
fn empty_verification_policy_gives_marginals_only() {
    let case = support::ieee118();
    let report = pipeline_run(&case, &cheap_config(NonCriticalSample::None, false)).unwrap();
    let f = report.matrix.overall;
    assert!(report.verifications.is_empty());
    assert_eq!(f.given_critical, None);
    assert_eq!(f.given_noncritical, None);
    assert_eq!(f.p_critical_steady + f.p_noncritical_steady, 1.0);
}
