use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{BusKind, GridCase};

/// One broken case invariant, naming the offending entity and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: Rule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    DuplicateBusId,
    NonPositiveVoltage,
    SlackCount,
    PvWithoutGenerator,
    DanglingEndpoint,
    ZeroImpedance,
    NegativeRating,
    NonPositiveTap,
    GeneratorBusMissing,
    ReactiveLimitsInverted,
    CondenserWithActivePower,
    NoGenerators,
    EmptySubstation,
    SubstationOverlap,
    SubstationBusMissing,
    BusWithoutSubstation,
}

impl Rule {
    pub fn describe(self) -> &'static str {
        match self {
            Rule::DuplicateBusId => "bus ids must be unique",
            Rule::NonPositiveVoltage => "initial voltage magnitude must be positive",
            Rule::SlackCount => "exactly one slack bus required",
            Rule::PvWithoutGenerator => "PV bus has no generator",
            Rule::DanglingEndpoint => "branch endpoint does not exist",
            Rule::ZeroImpedance => "resistance and reactance both zero",
            Rule::NegativeRating => "rating must be non-negative",
            Rule::NonPositiveTap => "tap ratio must be positive",
            Rule::GeneratorBusMissing => "generator bus does not exist",
            Rule::ReactiveLimitsInverted => "q_min exceeds q_max",
            Rule::CondenserWithActivePower => "condenser must have zero active output",
            Rule::NoGenerators => "case has no generators",
            Rule::EmptySubstation => "substation has no member buses",
            Rule::SubstationOverlap => "bus belongs to more than one substation",
            Rule::SubstationBusMissing => "substation member bus does not exist",
            Rule::BusWithoutSubstation => "bus belongs to no substation",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule.describe())
    }
}

/// Checks every case invariant; an empty result means the case is valid.
pub fn validate(case: &GridCase) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: Rule| out.push(Violation { entity, rule });

    let mut seen = HashSet::new();
    for b in case.buses() {
        if !seen.insert(b.id) {
            push(format!("bus {}", b.id), Rule::DuplicateBusId);
        }
        if !(b.vm > 0.0) {
            push(format!("bus {}", b.id), Rule::NonPositiveVoltage);
        }
    }
    let slacks = case
        .buses()
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .count();
    if slacks != 1 {
        push(format!("case ({slacks} slack buses)"), Rule::SlackCount);
    }
    let gen_buses: HashSet<_> = case.generators().iter().map(|g| g.bus).collect();
    for b in case.buses() {
        if b.kind == BusKind::Pv && !gen_buses.contains(&b.id) {
            push(format!("bus {}", b.id), Rule::PvWithoutGenerator);
        }
    }

    for (i, br) in case.branches().iter().enumerate() {
        let name = format!("branch #{i} {}-{}", br.from, br.to);
        if case.bus_index(br.from).is_none() || case.bus_index(br.to).is_none() {
            push(name.clone(), Rule::DanglingEndpoint);
        }
        if br.r == 0.0 && br.x == 0.0 {
            push(name.clone(), Rule::ZeroImpedance);
        }
        if br.rating < 0.0 {
            push(name.clone(), Rule::NegativeRating);
        }
        if !(br.tap > 0.0) {
            push(name, Rule::NonPositiveTap);
        }
    }

    if case.generators().is_empty() {
        push("case".into(), Rule::NoGenerators);
    }
    for (i, g) in case.generators().iter().enumerate() {
        let name = format!("generator #{i} at bus {}", g.bus);
        if case.bus_index(g.bus).is_none() {
            push(name.clone(), Rule::GeneratorBusMissing);
        }
        if g.q_min > g.q_max {
            push(name.clone(), Rule::ReactiveLimitsInverted);
        }
        if g.is_condenser && g.p != 0.0 {
            push(name, Rule::CondenserWithActivePower);
        }
    }

    let mut owner: HashMap<_, _> = HashMap::new();
    for s in case.substations() {
        let name = format!("substation {}", s.id);
        if s.buses.is_empty() {
            push(name.clone(), Rule::EmptySubstation);
        }
        for &bus in &s.buses {
            if case.bus_index(bus).is_none() {
                push(format!("{name} bus {bus}"), Rule::SubstationBusMissing);
            }
            if owner.insert(bus, s.id).is_some() {
                push(format!("bus {bus}"), Rule::SubstationOverlap);
            }
        }
    }
    for b in case.buses() {
        if !owner.contains_key(&b.id) {
            push(format!("bus {}", b.id), Rule::BusWithoutSubstation);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{Substation, SubstationId};
    use super::*;

    fn rules(case: &GridCase) -> Vec<Rule> {
        validate(case).into_iter().map(|v| v.rule).collect()
    }

    fn rebuild(
        base: &GridCase,
        edit: impl FnOnce(
            &mut Vec<super::super::Bus>,
            &mut Vec<super::super::Branch>,
            &mut Vec<super::super::Generator>,
            &mut Vec<Substation>,
        ),
    ) -> GridCase {
        let mut buses = base.buses().to_vec();
        let mut branches = base.branches().to_vec();
        let mut gens = base.generators().to_vec();
        let mut subs = base.substations().to_vec();
        edit(&mut buses, &mut branches, &mut gens, &mut subs);
        GridCase::new(base.base_mva(), buses, branches, gens, subs)
    }

    #[test]
    fn valid_two_bus_has_no_violations() {
        assert!(validate(&two_bus(10.0, 1.0)).is_empty());
    }

    #[test]
    fn dangling_branch_reports_one_violation() {
        let case = rebuild(&two_bus(0.0, 0.0), |_, br, _, _| br.push(line(2, 999, 0.0, 0.1)));
        assert_eq!(rules(&case), vec![Rule::DanglingEndpoint]);
    }

    #[test]
    fn two_slack_buses_report_one_violation() {
        let case = rebuild(&two_bus(0.0, 0.0), |b, _, g, _| {
            b[1].kind = BusKind::Slack;
            g.push(generator(2, 0.0));
        });
        assert_eq!(rules(&case), vec![Rule::SlackCount]);
    }

    #[test]
    fn every_rule_has_a_failing_fixture() {
        let base = two_bus(10.0, 0.0);
        let cases: Vec<(Rule, GridCase)> = vec![
            (
                Rule::DuplicateBusId,
                rebuild(&base, |b, _, _, s| {
                    b.push(bus(2, BusKind::Pq, 0.0, 0.0));
                    s.clear();
                }),
            ),
            (
                Rule::NonPositiveVoltage,
                rebuild(&base, |b, _, _, _| b[1].vm = 0.0),
            ),
            (
                Rule::SlackCount,
                rebuild(&base, |b, _, _, _| b[0].kind = BusKind::Pv),
            ),
            (
                Rule::PvWithoutGenerator,
                rebuild(&base, |b, _, _, _| b[1].kind = BusKind::Pv),
            ),
            (
                Rule::DanglingEndpoint,
                rebuild(&base, |_, br, _, _| br[0].to = 5),
            ),
            (
                Rule::ZeroImpedance,
                rebuild(&base, |_, br, _, _| {
                    br[0].r = 0.0;
                    br[0].x = 0.0;
                }),
            ),
            (
                Rule::NegativeRating,
                rebuild(&base, |_, br, _, _| br[0].rating = -1.0),
            ),
            (
                Rule::NonPositiveTap,
                rebuild(&base, |_, br, _, _| br[0].tap = 0.0),
            ),
            (
                Rule::GeneratorBusMissing,
                rebuild(&base, |_, _, g, _| g.push(generator(42, 5.0))),
            ),
            (
                Rule::ReactiveLimitsInverted,
                rebuild(&base, |_, _, g, _| g[0].q_min = 1000.0),
            ),
            (
                Rule::CondenserWithActivePower,
                rebuild(&base, |_, _, g, _| g[0].is_condenser = true),
            ),
            (
                Rule::NoGenerators,
                rebuild(&base, |b, _, g, _| {
                    g.clear();
                    b[0].kind = BusKind::Slack;
                }),
            ),
            (
                Rule::EmptySubstation,
                rebuild(&base, |_, _, _, s| {
                    s.push(Substation {
                        id: SubstationId(9),
                        buses: vec![],
                    })
                }),
            ),
            (
                Rule::SubstationOverlap,
                rebuild(&base, |_, _, _, s| {
                    s.push(Substation {
                        id: SubstationId(9),
                        buses: vec![1],
                    })
                }),
            ),
            (
                Rule::SubstationBusMissing,
                rebuild(&base, |_, _, _, s| {
                    s.push(Substation {
                        id: SubstationId(9),
                        buses: vec![77],
                    })
                }),
            ),
            (
                Rule::BusWithoutSubstation,
                rebuild(&base, |_, _, _, s| s.retain(|s| s.id != SubstationId(2))),
            ),
        ];
        for (rule, case) in cases {
            let found = rules(&case);
            assert!(found.contains(&rule), "{rule:?} not reported, got {found:?}");
        }
    }
}
