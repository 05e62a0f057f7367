//! Steady-state enumeration of substation outage combinations.
//!
//! Each combination is applied to the case, the remaining network is split
//! into islands, and every island with generation is solved. A combination
//! is critical when the power flow fails or nothing survives; limit
//! violations alone leave it non-critical.

mod combinations;

use std::collections::HashSet;
use std::fmt::Write as _;

use log::debug;
use rayon::prelude::*;

pub use combinations::{count_combinations, enumerate_combinations, Combinations, OutageCombination};

use crate::error::Result;
use crate::grid::{BusId, GridCase, SubstationId};
use crate::powerflow::{
    assign_emergency_ratings, solve_newton, DivergenceCause, Limits, PowerFlowSolution,
    SolveOptions, Violation, ViolationKind,
};
use crate::topology::{
    apply_substation_outage_with, classify_islands, find_islands, OutageMode, RemovedBranch,
    Viability,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Critical,
    NonCritical,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Critical => "critical",
            Verdict::NonCritical => "non_critical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    PowerFlow(DivergenceCause),
    /// An island's reference generator would have to produce more than the
    /// island's total generating capacity.
    GenerationDeficit { slack: BusId, shortfall_mw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reason {
    Diverged(Divergence),
    DeadSystem,
    IslandedUnservedLoad(f64),
    ViolationsOnly,
    Clean,
}

impl Reason {
    pub fn is_critical(&self) -> bool {
        matches!(self, Reason::Diverged(_) | Reason::DeadSystem)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Reason::Diverged(_) => "diverged",
            Reason::DeadSystem => "dead_system",
            Reason::IslandedUnservedLoad(_) => "islanded_unserved_load",
            Reason::ViolationsOnly => "violations_only",
            Reason::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningResult {
    pub combination: OutageCombination,
    pub verdict: Verdict,
    pub reason: Reason,
    pub violations: Vec<Violation>,
    pub islands: usize,
    /// Load left in islands without generation, MW.
    pub unserved_mw: f64,
    pub removed_branches: Vec<RemovedBranch>,
    /// Set when the verdict was inherited from a critical subset instead of
    /// being solved.
    pub contained_in: Option<OutageCombination>,
}

impl ScreeningResult {
    pub fn is_critical(&self) -> bool {
        self.verdict == Verdict::Critical
    }

    pub fn undervoltage_buses(&self) -> Vec<BusId> {
        self.violations
            .iter()
            .filter(|v| v.kind == ViolationKind::Undervoltage)
            .filter_map(|v| match v.entity {
                crate::powerflow::Entity::Bus(b) => Some(b),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScreeningConfig {
    pub solve: SolveOptions,
    pub limits: Limits,
    pub mode: OutageMode,
    /// Multiplier on base-case flow used as the rating of unrated branches.
    pub emergency_factor: f64,
    /// Record supersets of critical combinations without solving them.
    pub prune: bool,
    /// Upper bound on power-flow evaluations across all levels.
    pub budget: Option<usize>,
    /// Restricts the enumeration universe.
    pub filter: Option<Vec<SubstationId>>,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            solve: SolveOptions::default(),
            limits: Limits::default(),
            mode: OutageMode::RemoveBuses,
            emergency_factor: 1.2,
            prune: true,
            budget: None,
            filter: None,
        }
    }
}

/// A case prepared for screening: unrated branches carry emergency limits
/// derived from the intact solution.
#[derive(Debug, Clone)]
pub struct Screener {
    case: GridCase,
    config: ScreeningConfig,
}

impl Screener {
    pub fn new(case: &GridCase, config: ScreeningConfig) -> Result<Self> {
        let base = solve_newton(case, &config.solve)?;
        let case = if base.converged {
            assign_emergency_ratings(case, &base, config.emergency_factor)
        } else {
            case.clone()
        };
        Ok(Screener { case, config })
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn config(&self) -> &ScreeningConfig {
        &self.config
    }

    pub fn screen(&self, combination: &OutageCombination) -> Result<ScreeningResult> {
        self.screen_with(combination, &self.config.solve)
    }

    /// Screens with alternative solver options (used by re-evaluation).
    pub fn screen_with(
        &self,
        combination: &OutageCombination,
        solve: &SolveOptions,
    ) -> Result<ScreeningResult> {
        let outage =
            apply_substation_outage_with(&self.case, combination.substations(), self.config.mode)?;
        let reduced = &outage.case;
        let partition = find_islands(reduced);
        let classes = classify_islands(&partition, reduced);
        let unserved_mw: f64 = classes
            .iter()
            .filter(|c| c.viability == Viability::Dead)
            .map(|c| c.load_mw)
            .sum();

        let mut result = ScreeningResult {
            combination: combination.clone(),
            verdict: Verdict::NonCritical,
            reason: Reason::Clean,
            violations: Vec::new(),
            islands: partition.len(),
            unserved_mw,
            removed_branches: outage.removed_branches.clone(),
            contained_in: None,
        };

        if !classes.iter().any(|c| c.viability == Viability::Servable) {
            result.reason = Reason::DeadSystem;
            result.verdict = Verdict::Critical;
            return Ok(result);
        }

        let solution = solve_newton(reduced, solve)?;
        result.reason = if !solution.converged {
            Reason::Diverged(Divergence::PowerFlow(
                solution.cause.unwrap_or(DivergenceCause::IterationLimit),
            ))
        } else if let Some(deficit) = generation_deficit(reduced, &solution) {
            Reason::Diverged(deficit)
        } else {
            result.violations = crate::powerflow::check_violations(&solution, &self.config.limits)?;
            if unserved_mw > 0.0 {
                Reason::IslandedUnservedLoad(unserved_mw)
            } else if !result.violations.is_empty() {
                Reason::ViolationsOnly
            } else {
                Reason::Clean
            }
        };
        if result.reason.is_critical() {
            result.verdict = Verdict::Critical;
        }
        debug!("{} -> {:?}", combination, result.reason);
        Ok(result)
    }
}

/// Finds an island whose solved dispatch exceeds its generating capacity.
fn generation_deficit(case: &GridCase, solution: &PowerFlowSolution) -> Option<Divergence> {
    let partition = find_islands(case);
    for &slack in &solution.slack_buses {
        let island = &partition.islands[partition.island_of(slack)?];
        let members: HashSet<BusId> = island.buses.iter().copied().collect();
        let (dispatch, capacity) = solution
            .generators
            .iter()
            .filter(|g| members.contains(&g.bus))
            .map(|g| (g, &case.generators()[g.index]))
            .filter(|(_, unit)| !unit.is_condenser)
            .fold((0.0, 0.0), |(d, c), (g, unit)| (d + g.p, c + unit.p_max));
        if dispatch > capacity + 1e-6 {
            return Some(Divergence::GenerationDeficit {
                slack,
                shortfall_mw: dispatch - capacity,
            });
        }
    }
    None
}

/// Screens one combination against `case` with default settings.
pub fn screen_combination(
    case: &GridCase,
    combination: &OutageCombination,
) -> Result<ScreeningResult> {
    Screener::new(case, ScreeningConfig::default())?.screen(combination)
}

/// Results of one level ordered critical first, then by unserved load.
#[derive(Debug, Clone)]
pub struct PriorityList {
    pub level: usize,
    pub results: Vec<ScreeningResult>,
}

impl PriorityList {
    pub fn new(level: usize, mut results: Vec<ScreeningResult>) -> Self {
        results.sort_by(|a, b| {
            b.is_critical()
                .cmp(&a.is_critical())
                .then(b.unserved_mw.total_cmp(&a.unserved_mw))
                .then_with(|| a.combination.cmp(&b.combination))
        });
        PriorityList { level, results }
    }

    pub fn critical_fraction(&self) -> f64 {
        if self.results.is_empty() {
            return 0.0;
        }
        self.results.iter().filter(|r| r.is_critical()).count() as f64 / self.results.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct ScreeningReport {
    pub levels: Vec<PriorityList>,
    /// Power flows actually solved.
    pub evaluations: usize,
    pub budget_exhausted: bool,
    /// Fraction of enumerated combinations that received a verdict.
    pub coverage: f64,
}

impl ScreeningReport {
    pub fn results(&self) -> impl Iterator<Item = &ScreeningResult> {
        self.levels.iter().flat_map(|l| l.results.iter())
    }

    pub fn critical_set(&self) -> HashSet<OutageCombination> {
        self.results()
            .filter(|r| r.is_critical())
            .map(|r| r.combination.clone())
            .collect()
    }
}

const CHUNK: usize = 2048;

impl Screener {
    /// Level-wise screening from k = 1 to `k_max`.
    pub fn run(&self, k_max: usize) -> Result<ScreeningReport> {
        let universe = match &self.config.filter {
            Some(ids) => ids.clone(),
            None => self.case.substation_ids(),
        };
        let mut total = 0u128;
        for k in 1..=k_max.min(universe.len()) {
            total += count_combinations(universe.len() as u64, k as u64)?;
        }

        let mut critical: Vec<OutageCombination> = Vec::new();
        let mut evaluations = 0usize;
        let mut budget_exhausted = false;
        let mut levels = Vec::new();
        let mut covered = 0u128;

        'levels: for k in 1..=k_max {
            let mut results = Vec::new();
            let mut stream = Combinations::new(universe.clone(), k).peekable();
            while stream.peek().is_some() {
                let chunk: Vec<OutageCombination> = stream.by_ref().take(CHUNK).collect();
                let mut jobs: Vec<(OutageCombination, Option<OutageCombination>)> =
                    Vec::with_capacity(chunk.len());
                let mut stop = false;
                for combo in chunk {
                    let container = if self.config.prune {
                        critical.iter().find(|c| combo.is_superset_of(c)).cloned()
                    } else {
                        None
                    };
                    if container.is_none() {
                        if self.config.budget.is_some_and(|b| evaluations >= b) {
                            stop = true;
                            break;
                        }
                        evaluations += 1;
                    }
                    jobs.push((combo, container));
                }
                let solved: Vec<Result<ScreeningResult>> = jobs
                    .par_iter()
                    .map(|(combo, container)| match container {
                        Some(parent) => Ok(self.contained_result(combo, parent, &levels)),
                        None => self.screen(combo),
                    })
                    .collect();
                for r in solved {
                    results.push(r?);
                }
                covered += jobs.len() as u128;
                if stop {
                    budget_exhausted = true;
                    levels.push(PriorityList::new(k, results));
                    break 'levels;
                }
            }
            critical.extend(
                results
                    .iter()
                    .filter(|r| r.is_critical() && r.contained_in.is_none())
                    .map(|r| r.combination.clone()),
            );
            levels.push(PriorityList::new(k, results));
        }

        Ok(ScreeningReport {
            levels,
            evaluations,
            budget_exhausted,
            coverage: if total == 0 {
                1.0
            } else {
                covered as f64 / total as f64
            },
        })
    }

    fn contained_result(
        &self,
        combo: &OutageCombination,
        parent: &OutageCombination,
        levels: &[PriorityList],
    ) -> ScreeningResult {
        let reason = levels
            .iter()
            .flat_map(|l| l.results.iter())
            .find(|r| &r.combination == parent)
            .map_or(Reason::DeadSystem, |r| r.reason);
        ScreeningResult {
            combination: combo.clone(),
            verdict: Verdict::Critical,
            reason,
            violations: Vec::new(),
            islands: 0,
            unserved_mw: 0.0,
            removed_branches: Vec::new(),
            contained_in: Some(parent.clone()),
        }
    }
}

/// Screens levels 1..=`k_max` with default settings and an optional budget.
pub fn run_screening(
    case: &GridCase,
    k_max: usize,
    budget: Option<usize>,
) -> Result<ScreeningReport> {
    let config = ScreeningConfig {
        budget,
        ..ScreeningConfig::default()
    };
    Screener::new(case, config)?.run(k_max)
}

/// `level,substations,verdict,reason,islands,unserved_mw,violations`.
pub fn screening_csv(report: &ScreeningReport) -> String {
    let mut out = String::from("level,substations,verdict,reason,islands,unserved_mw,violations\n");
    for list in &report.levels {
        for r in &list.results {
            let reason = match &r.contained_in {
                Some(parent) => format!("{}/contained:{}", r.reason.as_str(), parent.label()),
                None => r.reason.as_str().to_string(),
            };
            let violations: Vec<String> = r
                .violations
                .iter()
                .map(|v| {
                    let tag = match v.kind {
                        ViolationKind::Undervoltage => "uv",
                        ViolationKind::Overvoltage => "ov",
                        ViolationKind::BranchOverload => "ol",
                    };
                    match v.entity {
                        crate::powerflow::Entity::Bus(b) => format!("{tag}{b}"),
                        crate::powerflow::Entity::Branch { from, to, .. } => {
                            format!("{tag}{from}-{to}")
                        }
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},{}",
                list.level,
                r.combination.label(),
                r.verdict.as_str(),
                reason,
                r.islands,
                r.unserved_mw,
                violations.join(" ")
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::*;
    use crate::grid::{BusKind, Generator};

    /// Ring 1-2-3-4-1 with a radial load bus 5 hanging off bus 4.
    fn ring() -> GridCase {
        GridCase::new(
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pq, 30.0, 10.0),
                bus(3, BusKind::Pv, 20.0, 5.0),
                bus(4, BusKind::Pq, 25.0, 8.0),
                bus(5, BusKind::Pq, 12.0, 3.0),
            ],
            vec![
                line(1, 2, 0.01, 0.08),
                line(2, 3, 0.01, 0.08),
                line(3, 4, 0.01, 0.08),
                line(4, 1, 0.01, 0.08),
                line(4, 5, 0.01, 0.08),
            ],
            vec![
                generator(1, 50.0),
                Generator {
                    p_max: 40.0,
                    ..generator(3, 40.0)
                },
            ],
            vec![],
        )
    }

    #[test]
    fn intact_neighbor_outage_is_clean_or_violating() {
        let r = screen_combination(&ring(), &OutageCombination::from([2])).unwrap();
        assert_eq!(r.verdict, Verdict::NonCritical);
        assert_eq!(r.islands, 1);
        assert_eq!(r.removed_branches.len(), 2);
    }

    #[test]
    fn stranded_load_is_unserved_not_critical() {
        let r = screen_combination(&ring(), &OutageCombination::from([4])).unwrap();
        assert_eq!(r.verdict, Verdict::NonCritical);
        assert_eq!(r.reason, Reason::IslandedUnservedLoad(12.0));
        assert_eq!(r.unserved_mw, 12.0);
    }

    #[test]
    fn losing_all_generation_is_dead_system() {
        let r = screen_combination(&ring(), &OutageCombination::from([1, 3])).unwrap();
        assert_eq!(r.reason, Reason::DeadSystem);
        assert!(r.is_critical());
    }

    #[test]
    fn island_beyond_capacity_is_a_deficit() {
        // Bus 3 alone must carry 2 + 3 + 4 after the slack goes: 87 MW > 40 MW.
        let r = screen_combination(&ring(), &OutageCombination::from([1])).unwrap();
        assert!(matches!(
            r.reason,
            Reason::Diverged(Divergence::GenerationDeficit { slack: 3, .. })
        ));
        assert!(r.is_critical());
    }

    #[test]
    fn pruning_marks_supersets() {
        let report = run_screening(&ring(), 2, None).unwrap();
        assert_eq!(report.levels[0].results.len(), 5);
        assert_eq!(report.levels[1].results.len(), 10);
        let contained: Vec<_> = report.levels[1]
            .results
            .iter()
            .filter(|r| r.contained_in.is_some())
            .collect();
        assert!(!contained.is_empty());
        for r in contained {
            assert!(r.is_critical());
            assert!(r.combination.substations().contains(&SubstationId(1)));
        }
        assert_eq!(report.coverage, 1.0);
        assert_eq!(report.evaluations, 5 + 6);
    }

    #[test]
    fn budget_stops_early_with_partial_coverage() {
        let config = ScreeningConfig {
            budget: Some(3),
            ..ScreeningConfig::default()
        };
        let report = Screener::new(&ring(), config).unwrap().run(2).unwrap();
        assert!(report.budget_exhausted);
        assert_eq!(report.evaluations, 3);
        assert!((report.coverage - 3.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn priority_order_is_critical_then_unserved() {
        let report = run_screening(&ring(), 1, None).unwrap();
        let list = &report.levels[0].results;
        let first_noncritical = list.iter().position(|r| !r.is_critical()).unwrap();
        assert!(list[..first_noncritical].iter().all(|r| r.is_critical()));
        assert!(list[first_noncritical..].iter().all(|r| !r.is_critical()));
        assert_eq!(list[first_noncritical].combination, OutageCombination::from([4]));
        let f = report.levels[0].critical_fraction();
        assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn csv_has_one_row_per_result() {
        let report = run_screening(&ring(), 1, None).unwrap();
        let csv = screening_csv(&report);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("level,substations,verdict,reason,islands,unserved_mw,violations"));
    }
}
