//! Outage application and island detection.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{BusId, GridCase, SubstationId};

/// A single switching or outage action against a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutageAction {
    /// Opens every in-service circuit between the two buses.
    OpenBranch { from: BusId, to: BusId },
    RemoveSubstation(SubstationId),
}

impl fmt::Display for OutageAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutageAction::OpenBranch { from, to } => write!(f, "open_branch {from} {to}"),
            OutageAction::RemoveSubstation(id) => write!(f, "remove_substation {id}"),
        }
    }
}

/// How a substation outage is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutageMode {
    /// Member buses disappear together with their loads and generators.
    #[default]
    RemoveBuses,
    /// Only the incident branches open; buses, loads and machines stay.
    BranchesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RemovedBranch {
    pub from: BusId,
    pub to: BusId,
    /// Position in the branch list of the case the outage was applied to.
    pub index: usize,
}

impl fmt::Display for RemovedBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone)]
pub struct SubstationOutage {
    pub case: GridCase,
    /// Previously in-service branches taken out, sorted by endpoints.
    pub removed_branches: Vec<RemovedBranch>,
    pub removed_buses: Vec<BusId>,
}

pub fn apply_substation_outage(
    case: &GridCase,
    targets: &[SubstationId],
) -> Result<SubstationOutage> {
    apply_substation_outage_with(case, targets, OutageMode::default())
}

/// Takes the target substations out of service.
///
/// Targets that an earlier outage already removed are accepted and have no
/// further effect, so applying the same set twice is a no-op the second time.
pub fn apply_substation_outage_with(
    case: &GridCase,
    targets: &[SubstationId],
    mode: OutageMode,
) -> Result<SubstationOutage> {
    if targets.is_empty() {
        return Err(Error::EmptyOutage);
    }
    let mut members = BTreeSet::new();
    for &id in targets {
        match case.substation(id) {
            Some(s) => members.extend(s.buses.iter().copied()),
            None if case.removed_substations().contains(&id) => {}
            None => return Err(Error::UnknownSubstation(id)),
        }
    }

    let mut removed_branches: Vec<RemovedBranch> = case
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, br)| br.in_service && (members.contains(&br.from) || members.contains(&br.to)))
        .map(|(index, br)| {
            let (from, to) = br.key();
            RemovedBranch { from, to, index }
        })
        .collect();
    removed_branches.sort_unstable();
    removed_branches.dedup();

    let reduced = match mode {
        OutageMode::RemoveBuses => {
            let target_set: HashSet<_> = targets.iter().copied().collect();
            case.without_buses(&members, &target_set)
        }
        OutageMode::BranchesOnly => {
            let mut branches = case.branches().to_vec();
            for r in &removed_branches {
                branches[r.index].in_service = false;
            }
            case.with_branches(branches)
        }
    };
    Ok(SubstationOutage {
        case: reduced,
        removed_branches,
        removed_buses: members.into_iter().collect(),
    })
}

/// Opens every in-service circuit between `from` and `to`.
pub fn open_branch(case: &GridCase, from: BusId, to: BusId) -> Result<GridCase> {
    let mut branches = case.branches().to_vec();
    let mut hit = false;
    for br in branches.iter_mut().filter(|b| b.in_service && b.connects(from, to)) {
        br.in_service = false;
        hit = true;
    }
    if !hit {
        return Err(Error::UnknownBranch(from, to));
    }
    Ok(case.with_branches(branches))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    /// Member buses, ascending.
    pub buses: Vec<BusId>,
    /// At least one non-condenser generator.
    pub has_generation: bool,
    pub has_load: bool,
    /// Set when the case's own slack bus lies in this island.
    pub slack: Option<BusId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandPartition {
    /// Ordered by smallest member bus id.
    pub islands: Vec<Island>,
}

impl IslandPartition {
    pub fn len(&self) -> usize {
        self.islands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.islands.is_empty()
    }

    pub fn island_of(&self, bus: BusId) -> Option<usize> {
        self.islands
            .iter()
            .position(|isl| isl.buses.binary_search(&bus).is_ok())
    }

    pub fn bus_count(&self) -> usize {
        self.islands.iter().map(|i| i.buses.len()).sum()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the in-service network.
pub fn find_islands(case: &GridCase) -> IslandPartition {
    let buses = case.buses();
    let mut sets = DisjointSets::new(buses.len());
    for br in case.branches().iter().filter(|b| b.in_service) {
        if let (Some(i), Some(j)) = (case.bus_index(br.from), case.bus_index(br.to)) {
            sets.union(i, j);
        }
    }

    let generating: HashSet<BusId> = case
        .generators()
        .iter()
        .filter(|g| !g.is_condenser)
        .map(|g| g.bus)
        .collect();
    let slack = case.slack_bus();

    let mut groups: Vec<Vec<BusId>> = Vec::new();
    let mut root_slot = vec![usize::MAX; buses.len()];
    for (i, bus) in buses.iter().enumerate() {
        let root = sets.find(i);
        if root_slot[root] == usize::MAX {
            root_slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[root]].push(bus.id);
    }

    let mut islands: Vec<Island> = groups
        .into_iter()
        .map(|mut members| {
            members.sort_unstable();
            let has_generation = members.iter().any(|b| generating.contains(b));
            let has_load = members
                .iter()
                .any(|&b| case.bus(b).is_some_and(|bus| bus.has_load()));
            let slack = slack.filter(|s| members.binary_search(s).is_ok());
            Island {
                buses: members,
                has_generation,
                has_load,
                slack,
            }
        })
        .collect();
    islands.sort_by_key(|isl| isl.buses[0]);
    IslandPartition { islands }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viability {
    /// Has generation and can be solved on its own.
    Servable,
    /// No generation but load: the load is unserved.
    Dead,
    /// Neither generation nor load.
    LoadFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandClass {
    pub viability: Viability,
    /// Reference bus for the island's power flow; `None` unless servable.
    pub slack: Option<BusId>,
    /// Non-condenser generators inside the island.
    pub generators: usize,
    pub load_mw: f64,
}

/// Labels each island and designates its slack bus.
///
/// Islands without the case slack take the in-island generator with the
/// largest scheduled output, ties going to the lowest bus id.
pub fn classify_islands(partition: &IslandPartition, case: &GridCase) -> Vec<IslandClass> {
    partition
        .islands
        .iter()
        .map(|isl| {
            let in_island = |b: BusId| isl.buses.binary_search(&b).is_ok();
            let gens: Vec<_> = case
                .generators()
                .iter()
                .filter(|g| !g.is_condenser && in_island(g.bus))
                .collect();
            let load_mw = isl
                .buses
                .iter()
                .filter_map(|&b| case.bus(b))
                .map(|b| b.load_p)
                .sum();
            let viability = if !gens.is_empty() {
                Viability::Servable
            } else if isl.has_load {
                Viability::Dead
            } else {
                Viability::LoadFree
            };
            let slack = match viability {
                Viability::Servable => isl.slack.or_else(|| {
                    gens.iter()
                        .max_by(|a, b| a.p.total_cmp(&b.p).then(b.bus.cmp(&a.bus)))
                        .map(|g| g.bus)
                }),
                _ => None,
            };
            IslandClass {
                viability,
                slack,
                generators: gens.len(),
                load_mw,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::*;
    use crate::grid::{BusKind, GridCase};

    /// 1(slack,gen) - 2 - 3(gen 30MW), 4(load) isolated.
    fn four_bus() -> GridCase {
        GridCase::new(
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pq, 20.0, 5.0),
                bus(3, BusKind::Pv, 10.0, 0.0),
                bus(4, BusKind::Pq, 7.0, 1.0),
            ],
            vec![line(1, 2, 0.01, 0.1), line(2, 3, 0.01, 0.1), line(3, 4, 0.01, 0.1)],
            vec![generator(1, 10.0), generator(3, 30.0)],
            vec![],
        )
    }

    #[test]
    fn empty_targets_rejected() {
        assert!(matches!(
            apply_substation_outage(&four_bus(), &[]),
            Err(Error::EmptyOutage)
        ));
        assert!(matches!(
            apply_substation_outage(&four_bus(), &[SubstationId(99)]),
            Err(Error::UnknownSubstation(_))
        ));
    }

    #[test]
    fn outage_removes_buses_and_incident_branches() {
        let out = apply_substation_outage(&four_bus(), &[SubstationId(3)]).unwrap();
        assert_eq!(out.removed_buses, vec![3]);
        let keys: Vec<_> = out.removed_branches.iter().map(|r| (r.from, r.to)).collect();
        assert_eq!(keys, vec![(2, 3), (3, 4)]);
        assert_eq!(out.case.buses().len(), 3);
        assert_eq!(out.case.generators().len(), 1);
        let p = find_islands(&out.case);
        assert_eq!(p.len(), 2);
        let classes = classify_islands(&p, &out.case);
        assert_eq!(classes[0].viability, Viability::Servable);
        assert_eq!(classes[0].slack, Some(1));
        assert_eq!(classes[1].viability, Viability::Dead);
        assert_eq!(classes[1].load_mw, 7.0);
    }

    #[test]
    fn outage_is_idempotent() {
        let case = four_bus();
        let targets = [SubstationId(2), SubstationId(3)];
        let once = apply_substation_outage(&case, &targets).unwrap();
        let twice = apply_substation_outage(&once.case, &targets).unwrap();
        assert_eq!(once.case, twice.case);
        assert!(twice.removed_branches.is_empty());

        let once = apply_substation_outage_with(&case, &targets, OutageMode::BranchesOnly).unwrap();
        let twice =
            apply_substation_outage_with(&once.case, &targets, OutageMode::BranchesOnly).unwrap();
        assert_eq!(once.case, twice.case);
    }

    #[test]
    fn branches_only_mode_keeps_buses() {
        let out =
            apply_substation_outage_with(&four_bus(), &[SubstationId(2)], OutageMode::BranchesOnly)
                .unwrap();
        assert_eq!(out.case.buses().len(), 4);
        assert_eq!(find_islands(&out.case).len(), 3);
    }

    #[test]
    fn no_branches_gives_singletons() {
        let case = four_bus();
        let branches = case
            .branches()
            .iter()
            .cloned()
            .map(|mut b| {
                b.in_service = false;
                b
            })
            .collect();
        let p = find_islands(&case.with_branches(branches));
        assert_eq!(p.len(), 4);
        assert!(p.islands.iter().all(|i| i.buses.len() == 1));
    }

    #[test]
    fn slack_selection_prefers_largest_output_then_lowest_id() {
        let case = GridCase::new(
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(5, BusKind::Pv, 0.0, 0.0),
                bus(6, BusKind::Pv, 0.0, 0.0),
                bus(7, BusKind::Pv, 0.0, 0.0),
            ],
            vec![line(5, 6, 0.0, 0.1), line(6, 7, 0.0, 0.1)],
            vec![
                generator(1, 5.0),
                generator(5, 40.0),
                generator(6, 80.0),
                generator(7, 80.0),
            ],
            vec![],
        );
        let p = find_islands(&case);
        let c = classify_islands(&p, &case);
        assert_eq!(c[0].slack, Some(1));
        assert_eq!(c[1].slack, Some(6));
        assert_eq!(c[1].generators, 3);
    }

    #[test]
    fn open_branch_requires_in_service_circuit() {
        let case = four_bus();
        let opened = open_branch(&case, 2, 1).unwrap();
        assert_eq!(find_islands(&opened).len(), 2);
        assert!(matches!(
            open_branch(&opened, 1, 2),
            Err(Error::UnknownBranch(1, 2))
        ));
    }
}
