//! Screening followed by dynamic verification of selected combinations,
//! cross-checking of the two verdicts and re-evaluation of disagreements.

mod cascade;
mod matrix;
mod reeval;

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cascade::{
    cascade_confirm, CascadeSummary, PermutationPlan, PermutationRun, Strategy,
    DEFAULT_PERMUTATION_CAP,
};
pub use matrix::{cross_check, CrossCheckMatrix, CrossCheckRecord, DynamicOutcome, Fractions};
pub use reeval::{
    re_evaluate, Adjustment, Disagreement, ReEvalContext, ReEvaluationRecord, Resolution, Rung,
    LONG_INTERVAL,
};

use crate::dynamics::{
    default_models, init_dynamic_state, trace_csv, MachineModel, RunOptions, DEFAULT_INTERVAL,
};
use crate::error::{Error, Result};
use crate::grid::{BusId, GridCase};
use crate::powerflow::solve_newton;
use crate::screening::{
    screening_csv, OutageCombination, Screener, ScreeningConfig, ScreeningReport,
    ScreeningResult,
};
use crate::topology::{apply_substation_outage, RemovedBranch};

/// Which non-critical combinations also get dynamic verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonCriticalSample {
    None,
    Fraction(f64),
    Count(usize),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub k_max: usize,
    pub seed: u64,
    pub screening: ScreeningConfig,
    pub verify_critical: bool,
    pub noncritical: NonCriticalSample,
    /// Orders are enumerated exhaustively while `m!` stays within this cap.
    pub permutation_cap: u128,
    pub permutation_samples: usize,
    pub interval: f64,
    pub run: RunOptions,
    pub reevaluate: bool,
    /// Defaults to [`default_models`] of the case.
    pub models: Option<Vec<MachineModel>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_max: 1,
            seed: 0,
            screening: ScreeningConfig::default(),
            verify_critical: true,
            noncritical: NonCriticalSample::Fraction(0.05),
            permutation_cap: 120,
            permutation_samples: 24,
            interval: DEFAULT_INTERVAL,
            run: RunOptions::default(),
            reevaluate: true,
            models: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub combination: OutageCombination,
    pub summary: CascadeSummary,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub screening: ScreeningReport,
    pub verifications: Vec<Verification>,
    pub matrix: CrossCheckMatrix,
    pub reevaluations: Vec<ReEvaluationRecord>,
    pub seed: u64,
}

/// Distinct branch endpoints switched by a substation outage, sorted.
pub fn switched_branches(case: &GridCase, combination: &OutageCombination) -> Result<Vec<(BusId, BusId)>> {
    let outage = apply_substation_outage(case, combination.substations())?;
    let mut pairs: Vec<(BusId, BusId)> = outage
        .removed_branches
        .iter()
        .map(|&RemovedBranch { from, to, .. }| (from, to))
        .collect();
    pairs.dedup();
    Ok(pairs)
}

fn combination_seed(seed: u64, combination: &OutageCombination) -> u64 {
    combination
        .substations()
        .iter()
        .fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, s| {
            (h ^ u64::from(s.0)).wrapping_mul(0x0000_0100_0000_01b3)
        })
}

fn select_targets(results: &[&ScreeningResult], config: &PipelineConfig) -> Vec<OutageCombination> {
    let mut targets: Vec<OutageCombination> = Vec::new();
    if config.verify_critical {
        targets.extend(
            results
                .iter()
                .filter(|r| r.is_critical())
                .map(|r| r.combination.clone()),
        );
    }
    let mut calm: Vec<&OutageCombination> = results
        .iter()
        .filter(|r| !r.is_critical())
        .map(|r| &r.combination)
        .collect();
    calm.sort();
    let count = match config.noncritical {
        NonCriticalSample::None => 0,
        NonCriticalSample::Fraction(f) => (f * calm.len() as f64).round() as usize,
        NonCriticalSample::Count(n) => n,
    }
    .min(calm.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = rand::seq::index::sample(&mut rng, calm.len(), count).into_vec();
    picked.sort_unstable();
    targets.extend(picked.into_iter().map(|i| calm[i].clone()));
    targets.sort();
    targets
}

/// Runs the full chain on `case`. Deterministic for a fixed configuration.
pub fn pipeline_run(case: &GridCase, config: &PipelineConfig) -> Result<PipelineReport> {
    let screener = Screener::new(case, config.screening.clone())?;
    let screening = screener.run(config.k_max)?;
    let results: Vec<&ScreeningResult> = screening.results().collect();
    info!(
        "screened {} combinations, {} critical",
        results.len(),
        results.iter().filter(|r| r.is_critical()).count()
    );

    let models = config.models.clone().unwrap_or_else(|| default_models(case));
    let pf = solve_newton(case, &config.run.power_flow)?;
    let initial = init_dynamic_state(case, &pf, &models)?;

    let mut verifications = Vec::new();
    for combination in select_targets(&results, config) {
        let branches = switched_branches(case, &combination)?;
        if branches.is_empty() {
            continue;
        }
        let mut plan = PermutationPlan::new(
            combination.clone(),
            branches,
            config.permutation_cap,
            config.permutation_samples,
            combination_seed(config.seed, &combination),
        );
        plan.interval = config.interval;
        let summary = cascade_confirm(&initial, &plan, &config.run)?;
        info!(
            "{}: {} orders, {} unstable",
            combination,
            summary.runs.len(),
            summary.unstable
        );
        verifications.push(Verification {
            combination,
            summary,
        });
    }

    let owned: Vec<ScreeningResult> = results.iter().map(|r| (*r).clone()).collect();
    let outcomes: Vec<(OutageCombination, DynamicOutcome)> = verifications
        .iter()
        .map(|v| (v.combination.clone(), v.summary.outcome()))
        .collect();
    let matrix = cross_check(&owned, &outcomes)?;

    let mut reevaluations = Vec::new();
    if config.reevaluate {
        let ctx = ReEvalContext {
            screener: &screener,
            initial: &initial,
            options: &config.run,
        };
        for v in &verifications {
            let steady = owned
                .iter()
                .find(|r| r.combination == v.combination)
                .ok_or_else(|| Error::Unmatched(v.combination.to_string()))?;
            match re_evaluate(&ctx, steady, &v.summary) {
                Ok(rec) => reevaluations.push(rec),
                Err(Error::NoDisagreement) => {}
                Err(e) => return Err(e),
            }
        }
    }

    Ok(PipelineReport {
        screening,
        verifications,
        matrix,
        reevaluations,
        seed: config.seed,
    })
}

fn opt(p: Option<(f64, f64)>) -> (String, String) {
    match p {
        Some((a, b)) => (format!("{a:.6}"), format!("{b:.6}")),
        None => ("-".into(), "-".into()),
    }
}

/// `level,substations,steady,dynamic,dynamic_class,fraction_unstable`.
pub fn matrix_csv(matrix: &CrossCheckMatrix) -> String {
    let mut out = String::from("level,substations,steady,dynamic,dynamic_class,fraction_unstable\n");
    for r in &matrix.records {
        let (d, class, frac) = match &r.dynamic {
            Some(d) => (
                if d.critical { "critical" } else { "non_critical" },
                d.class.as_str(),
                format!("{:.6}", d.fraction_unstable),
            ),
            None => ("-", "-", "-".to_string()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.level,
            r.combination.label(),
            r.steady.as_str(),
            d,
            class,
            frac
        );
    }
    out
}

/// `substations,kind,adjustments,resolution`.
pub fn reeval_csv(records: &[ReEvaluationRecord]) -> String {
    let mut out = String::from("substations,kind,adjustments,resolution\n");
    for r in records {
        let adj: Vec<String> = r
            .adjustments
            .iter()
            .map(|a| {
                format!(
                    "{}:{}/{}",
                    a.rung.as_str(),
                    if a.steady_critical { "C" } else { "N" },
                    if a.dynamic_critical { "C" } else { "N" }
                )
            })
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.combination.label(),
            r.kind.as_str(),
            adj.join(" "),
            r.resolution.as_str()
        );
    }
    out
}

pub fn summary_text(report: &PipelineReport) -> String {
    let mut out = String::new();
    let s = &report.screening;
    let _ = writeln!(out, "seed: {}", report.seed);
    let _ = writeln!(
        out,
        "screening: {} results, {} power flows, coverage {:.6}{}",
        s.results().count(),
        s.evaluations,
        s.coverage,
        if s.budget_exhausted { " (budget exhausted)" } else { "" }
    );
    let mut rows: Vec<(String, &Fractions)> = report
        .matrix
        .by_level
        .iter()
        .map(|(k, f)| (format!("level {k}"), f))
        .collect();
    rows.push(("all".into(), &report.matrix.overall));
    for (name, f) in rows {
        let (c1, c2) = opt(f.given_critical);
        let (n1, n2) = opt(f.given_noncritical);
        let _ = writeln!(
            out,
            "{name}: n={} P(critical)={:.6} P(non_critical)={:.6} | verified {} critical: P(dyn critical)={c1} P(dyn stable)={c2} | verified {} non_critical: P(dyn critical)={n1} P(dyn stable)={n2}",
            f.total, f.p_critical_steady, f.p_noncritical_steady, f.verified_critical, f.verified_noncritical
        );
    }
    for v in &report.verifications {
        let _ = writeln!(
            out,
            "verified {}: {} orders ({:?}), {} unstable, {} failed, worst {}, order-invariant {}",
            v.combination,
            v.summary.runs.len(),
            v.summary.plan.strategy,
            v.summary.unstable,
            v.summary.failed,
            v.summary.worst.as_str(),
            v.summary.permutation_invariant
        );
    }
    for r in &report.reevaluations {
        let _ = writeln!(
            out,
            "re-evaluated {}: {} -> {}",
            r.combination,
            r.kind.as_str(),
            r.resolution.as_str()
        );
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `screening.csv`, `traces/*.csv`, `matrix.csv`, `reeval.csv` and
/// `summary.txt` under `dir`.
pub fn write_run_dir(report: &PipelineReport, dir: &Path) -> Result<()> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|source| Error::Io {
        path: traces.clone(),
        source,
    })?;
    write(&dir.join("screening.csv"), &screening_csv(&report.screening))?;
    write(&dir.join("matrix.csv"), &matrix_csv(&report.matrix))?;
    write(&dir.join("reeval.csv"), &reeval_csv(&report.reevaluations))?;
    write(&dir.join("summary.txt"), &summary_text(report))?;
    for v in &report.verifications {
        if let Some(trace) = v.summary.runs.first().and_then(|r| r.trace.as_ref()) {
            let name = format!("sub_{}.csv", v.combination.label().replace(';', "_"));
            write(&traces.join(name), &trace_csv(trace))?;
        }
    }
    Ok(())
}
