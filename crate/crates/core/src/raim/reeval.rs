use crate::dynamics::{RunOptions, Simulator};
use crate::error::{Error, Result};
use crate::powerflow::SolveOptions;
use crate::screening::{OutageCombination, Screener, ScreeningResult, Verdict};

use super::cascade::{cascade_confirm, CascadeSummary, PermutationPlan, Strategy};

/// Upper end of the switching interval range explored on re-evaluation, s.
pub const LONG_INTERVAL: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disagreement {
    SteadyNonCriticalDynamicUnstable,
    SteadyCriticalDynamicStable,
}

impl Disagreement {
    pub fn as_str(self) -> &'static str {
        match self {
            Disagreement::SteadyNonCriticalDynamicUnstable => "steady_noncritical/dynamic_unstable",
            Disagreement::SteadyCriticalDynamicStable => "steady_critical/dynamic_stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rung {
    /// Power flow from a flat start at tolerance 1e-8.
    FlatStart,
    HalvedStep,
    LongInterval,
}

impl Rung {
    pub fn as_str(self) -> &'static str {
        match self {
            Rung::FlatStart => "flat_start_pf",
            Rung::HalvedStep => "halved_dt",
            Rung::LongInterval => "interval_15s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub rung: Rung,
    pub steady_critical: bool,
    pub dynamic_critical: bool,
    pub agrees: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Reconciled(Rung),
    Persistent,
}

impl Resolution {
    pub fn as_str(&self) -> String {
        match self {
            Resolution::Reconciled(r) => format!("reconciled@{}", r.as_str()),
            Resolution::Persistent => "persistent".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReEvaluationRecord {
    pub combination: OutageCombination,
    pub kind: Disagreement,
    pub adjustments: Vec<Adjustment>,
    pub resolution: Resolution,
}

/// What re-evaluation reruns against.
pub struct ReEvalContext<'a> {
    pub screener: &'a Screener,
    pub initial: &'a Simulator,
    pub options: &'a RunOptions,
}

/// Walks the adjustment ladder for one disagreeing pair, stopping at the
/// first rung that brings the two verdicts into agreement.
///
/// Dynamic rungs rerun only the orders behind the dynamic verdict: the
/// critical ones when it was critical, otherwise the first order.
pub fn re_evaluate(
    ctx: &ReEvalContext<'_>,
    steady: &ScreeningResult,
    cascade: &CascadeSummary,
) -> Result<ReEvaluationRecord> {
    let steady_critical = steady.verdict == Verdict::Critical;
    let dynamic_critical = cascade.unstable > 0;
    if steady.combination != cascade.plan.combination {
        return Err(Error::Unmatched(cascade.plan.combination.to_string()));
    }
    if steady_critical == dynamic_critical {
        return Err(Error::NoDisagreement);
    }
    let kind = if steady_critical {
        Disagreement::SteadyCriticalDynamicStable
    } else {
        Disagreement::SteadyNonCriticalDynamicUnstable
    };

    let orders: Vec<Vec<usize>> = cascade
        .runs
        .iter()
        .filter(|r| {
            !dynamic_critical || r.outcome.as_ref().is_ok_and(|v| v.is_critical())
        })
        .map(|r| r.order.clone())
        .take(if dynamic_critical { usize::MAX } else { 1 })
        .collect();

    let rerun = |interval: f64, options: &RunOptions| -> Result<bool> {
        let mut critical = false;
        for order in &orders {
            let mut plan = PermutationPlan::canonical(
                cascade.plan.combination.clone(),
                order.iter().map(|&i| cascade.plan.branches[i]).collect(),
            );
            plan.interval = interval;
            debug_assert_eq!(plan.strategy, Strategy::SingleCanonical);
            let s = cascade_confirm(ctx.initial, &plan, options)?;
            critical |= s.unstable > 0;
        }
        Ok(critical)
    };

    let mut adjustments = Vec::new();
    let mut resolution = Resolution::Persistent;

    for rung in [Rung::FlatStart, Rung::HalvedStep, Rung::LongInterval] {
        let (s, d) = match rung {
            Rung::FlatStart => {
                let flat = SolveOptions {
                    flat_start: true,
                    tolerance: 1e-8,
                    warm_start: None,
                    ..ctx.screener.config().solve.clone()
                };
                let s = ctx.screener.screen_with(&steady.combination, &flat)?;
                (s.is_critical(), dynamic_critical)
            }
            Rung::HalvedStep => {
                let halved = RunOptions {
                    dt: ctx.options.dt / 2.0,
                    ..ctx.options.clone()
                };
                (steady_critical, rerun(cascade.plan.interval, &halved)?)
            }
            Rung::LongInterval => (steady_critical, rerun(LONG_INTERVAL, ctx.options)?),
        };
        let agrees = s == d;
        adjustments.push(Adjustment {
            rung,
            steady_critical: s,
            dynamic_critical: d,
            agrees,
        });
        if agrees {
            resolution = Resolution::Reconciled(rung);
            break;
        }
    }
    Ok(ReEvaluationRecord {
        combination: steady.combination.clone(),
        kind,
        adjustments,
        resolution,
    })
}
