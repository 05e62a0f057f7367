use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{
    simulate, DynamicTrace, RunOptions, Simulator, StabilityClass, StabilityVerdict,
    SwitchingSchedule, DEFAULT_INTERVAL,
};
use crate::error::{Error, Result};
use crate::grid::BusId;
use crate::screening::OutageCombination;
use crate::topology::OutageAction;

use super::matrix::DynamicOutcome;

pub const DEFAULT_PERMUTATION_CAP: u128 = 5040;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Exhaustive,
    Sampled(usize),
    SingleCanonical,
}

/// Which switching orders of a combination's branches get simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationPlan {
    pub combination: OutageCombination,
    /// Branches in canonical order.
    pub branches: Vec<(BusId, BusId)>,
    pub strategy: Strategy,
    pub interval: f64,
    pub seed: u64,
}

fn factorial(m: usize) -> Option<u128> {
    (1..=m as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

impl PermutationPlan {
    /// Exhaustive when `m! <= cap`, otherwise `samples` uniform draws.
    pub fn new(
        combination: OutageCombination,
        branches: Vec<(BusId, BusId)>,
        cap: u128,
        samples: usize,
        seed: u64,
    ) -> Self {
        let strategy = match factorial(branches.len()) {
            Some(n) if n <= cap => Strategy::Exhaustive,
            _ => Strategy::Sampled(samples.max(1)),
        };
        PermutationPlan {
            combination,
            branches,
            strategy,
            interval: DEFAULT_INTERVAL,
            seed,
        }
    }

    pub fn canonical(combination: OutageCombination, branches: Vec<(BusId, BusId)>) -> Self {
        PermutationPlan {
            combination,
            branches,
            strategy: Strategy::SingleCanonical,
            interval: DEFAULT_INTERVAL,
            seed: 0,
        }
    }

    /// Orders as index lists into `branches`; deterministic for a given seed.
    pub fn permutations(&self) -> Vec<Vec<usize>> {
        let m = self.branches.len();
        let identity: Vec<usize> = (0..m).collect();
        match self.strategy {
            Strategy::SingleCanonical => vec![identity],
            Strategy::Exhaustive => {
                let mut out = vec![identity.clone()];
                let mut p = identity;
                while next_permutation(&mut p) {
                    out.push(p.clone());
                }
                out
            }
            Strategy::Sampled(n) => {
                let total = factorial(m).unwrap_or(u128::MAX);
                let n = (n as u128).min(total) as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut seen = HashSet::new();
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    let mut p = identity.clone();
                    p.shuffle(&mut rng);
                    if seen.insert(p.clone()) {
                        out.push(p);
                    }
                }
                out
            }
        }
    }

    pub fn schedule(&self, order: &[usize]) -> Result<SwitchingSchedule> {
        SwitchingSchedule::evenly_spaced(
            order
                .iter()
                .map(|&i| {
                    let (from, to) = self.branches[i];
                    OutageAction::OpenBranch { from, to }
                })
                .collect(),
            0.0,
            self.interval,
        )
    }
}

/// Lexicographic successor in place; false once `p` is the last order.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Debug, Clone)]
pub struct PermutationRun {
    pub order: Vec<usize>,
    pub outcome: std::result::Result<StabilityVerdict, String>,
    /// Kept only for the first order of the plan.
    pub trace: Option<DynamicTrace>,
}

#[derive(Debug, Clone)]
pub struct CascadeSummary {
    pub plan: PermutationPlan,
    pub runs: Vec<PermutationRun>,
    pub unstable: usize,
    pub failed: usize,
    pub fraction_unstable: f64,
    /// All successful runs reached the same criticality.
    pub permutation_invariant: bool,
    pub worst: StabilityClass,
}

impl CascadeSummary {
    pub fn outcome(&self) -> DynamicOutcome {
        DynamicOutcome {
            class: self.worst,
            critical: self.unstable > 0,
            fraction_unstable: self.fraction_unstable,
        }
    }
}

fn severity(c: StabilityClass) -> u8 {
    match c {
        StabilityClass::Stable => 0,
        StabilityClass::IslandedMixed => 1,
        StabilityClass::FrequencyUnstable => 2,
        StabilityClass::TransientUnstable => 3,
        StabilityClass::Collapsed => 4,
    }
}

/// Simulates every order selected by `plan` from the same initial state.
/// A failing order is recorded and does not affect its siblings.
pub fn cascade_confirm(
    initial: &Simulator,
    plan: &PermutationPlan,
    options: &RunOptions,
) -> Result<CascadeSummary> {
    if plan.branches.is_empty() {
        return Err(Error::Schedule(format!(
            "combination {} switches no branches",
            plan.combination
        )));
    }
    let orders = plan.permutations();
    let runs: Vec<PermutationRun> = orders
        .into_par_iter()
        .enumerate()
        .map(|(k, order)| {
            let outcome = plan
                .schedule(&order)
                .map(|s| simulate(initial.clone(), &s, options))
                .map_err(|e| e.to_string());
            let (outcome, trace) = match outcome {
                Ok((trace, verdict)) => (Ok(verdict), (k == 0).then_some(trace)),
                Err(e) => (Err(e), None),
            };
            PermutationRun {
                order,
                outcome,
                trace,
            }
        })
        .collect();
    Ok(summarize(plan.clone(), runs))
}

fn summarize(plan: PermutationPlan, runs: Vec<PermutationRun>) -> CascadeSummary {
    let ok: Vec<&StabilityVerdict> = runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let unstable = ok.iter().filter(|v| v.is_critical()).count();
    let worst = ok
        .iter()
        .map(|v| v.overall)
        .max_by_key(|c| severity(*c))
        .unwrap_or(StabilityClass::Stable);
    CascadeSummary {
        failed: runs.len() - ok.len(),
        fraction_unstable: if ok.is_empty() {
            0.0
        } else {
            unstable as f64 / ok.len() as f64
        },
        permutation_invariant: unstable == 0 || unstable == ok.len(),
        unstable,
        worst,
        plan,
        runs,
    }
}
