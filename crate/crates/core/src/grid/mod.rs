//! Bus-branch network model.
//!
//! A [`GridCase`] is built once (usually through [`load_case`]) and never
//! mutated afterwards; outage studies derive new cases from it.

mod io;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use io::{load_case, parse_case, save_case, write_case};
pub use validate::{validate, Violation as CaseViolation};

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubstationId(pub u32);

impl fmt::Display for SubstationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "SLACK",
            BusKind::Pv => "PV",
            BusKind::Pq => "PQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Initial voltage magnitude, p.u.
    pub vm: f64,
    /// Initial voltage angle, radians.
    pub va: f64,
    pub base_kv: f64,
    /// Active load, MW.
    pub load_p: f64,
    /// Reactive load, MVAr.
    pub load_q: f64,
    /// Shunt conductance, MW consumed at 1.0 p.u.
    pub shunt_g: f64,
    /// Shunt susceptance, MVAr injected at 1.0 p.u.
    pub shunt_b: f64,
}

impl Bus {
    pub fn has_load(&self) -> bool {
        self.load_p != 0.0 || self.load_q != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// Thermal rating in MVA; 0 means unrated.
    pub rating: f64,
    /// Off-nominal turns ratio on the from side; 1.0 for lines.
    pub tap: f64,
    pub is_transformer: bool,
    pub in_service: bool,
}

impl Branch {
    pub fn connects(&self, a: BusId, b: BusId) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }

    pub fn touches(&self, bus: BusId) -> bool {
        self.from == bus || self.to == bus
    }

    /// Endpoints ordered low-high, used for stable sorting and display.
    pub fn key(&self) -> (BusId, BusId) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    /// Scheduled active output, MW.
    pub p: f64,
    /// Reactive output, MVAr.
    pub q: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage set point, p.u.
    pub v_set: f64,
    pub mva_base: f64,
    pub is_condenser: bool,
    /// Active capacity, MW.
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Substation {
    pub id: SubstationId,
    /// Member buses, sorted ascending.
    pub buses: Vec<BusId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSummary {
    pub buses: usize,
    pub branches: usize,
    pub lines: usize,
    pub transformers: usize,
    pub generators: usize,
    pub condensers: usize,
    pub loads: usize,
    pub substations: usize,
}

/// Immutable network case.
#[derive(Debug, Clone)]
pub struct GridCase {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    substations: Vec<Substation>,
    bus_index: HashMap<BusId, usize>,
    /// Substations taken out by earlier outages of the case this one derives from.
    removed_substations: Vec<SubstationId>,
}

impl PartialEq for GridCase {
    fn eq(&self, other: &Self) -> bool {
        self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
            && self.substations == other.substations
    }
}

impl GridCase {
    /// Assembles a case. An empty `substations` list yields the default
    /// mapping of one substation per bus, numbered by bus id.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        substations: Vec<Substation>,
    ) -> Self {
        let substations = if substations.is_empty() {
            default_substations(&buses)
        } else {
            substations
                .into_iter()
                .map(|mut s| {
                    s.buses.sort_unstable();
                    s
                })
                .collect()
        };
        let bus_index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        GridCase {
            base_mva,
            buses,
            branches,
            generators,
            substations,
            bus_index,
            removed_substations: Vec::new(),
        }
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn substations(&self) -> &[Substation] {
        &self.substations
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn substation(&self, id: SubstationId) -> Option<&Substation> {
        self.substations.iter().find(|s| s.id == id)
    }

    pub fn substation_ids(&self) -> Vec<SubstationId> {
        let mut ids: Vec<_> = self.substations.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn slack_bus(&self) -> Option<BusId> {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
    }

    /// True when the substation mapping is the implicit one-per-bus mapping.
    pub fn has_default_substations(&self) -> bool {
        self.substations == default_substations(&self.buses)
    }

    pub fn removed_substations(&self) -> &[SubstationId] {
        &self.removed_substations
    }

    /// Drops the given buses with their loads, generators and incident
    /// branches, and forgets the listed substations.
    pub(crate) fn without_buses(
        &self,
        buses: &std::collections::BTreeSet<BusId>,
        substations: &std::collections::HashSet<SubstationId>,
    ) -> GridCase {
        let keep_bus = |b: &BusId| !buses.contains(b);
        let mut reduced = GridCase::new(
            self.base_mva,
            self.buses.iter().filter(|b| keep_bus(&b.id)).cloned().collect(),
            self.branches
                .iter()
                .filter(|br| keep_bus(&br.from) && keep_bus(&br.to))
                .cloned()
                .collect(),
            self.generators
                .iter()
                .filter(|g| keep_bus(&g.bus))
                .cloned()
                .collect(),
            self.substations
                .iter()
                .filter(|s| !substations.contains(&s.id))
                .map(|s| Substation {
                    id: s.id,
                    buses: s.buses.iter().copied().filter(keep_bus).collect(),
                })
                .filter(|s| !s.buses.is_empty())
                .collect(),
        );
        let mut removed = self.removed_substations.clone();
        removed.extend(substations.iter().copied().filter(|id| self.substation(*id).is_some()));
        removed.sort_unstable();
        removed.dedup();
        reduced.removed_substations = removed;
        reduced
    }

    /// Returns a copy with the given branches replaced, keeping everything else.
    pub fn with_branches(&self, branches: Vec<Branch>) -> GridCase {
        GridCase {
            branches,
            ..self.clone()
        }
    }

    pub fn summarize(&self) -> CaseSummary {
        let transformers = self.branches.iter().filter(|b| b.is_transformer).count();
        let condensers = self.generators.iter().filter(|g| g.is_condenser).count();
        CaseSummary {
            buses: self.buses.len(),
            branches: self.branches.len(),
            lines: self.branches.len() - transformers,
            transformers,
            generators: self.generators.len() - condensers,
            condensers,
            loads: self.buses.iter().filter(|b| b.has_load()).count(),
            substations: self.substations.len(),
        }
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p).sum()
    }
}

fn default_substations(buses: &[Bus]) -> Vec<Substation> {
    let mut subs: Vec<_> = buses
        .iter()
        .map(|b| Substation {
            id: SubstationId(b.id),
            buses: vec![b.id],
        })
        .collect();
    subs.sort_by_key(|s| s.id);
    subs
}

/// Counts of the case's collections.
pub fn summarize(case: &GridCase) -> CaseSummary {
    case.summarize()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn bus(id: BusId, kind: BusKind, load_p: f64, load_q: f64) -> Bus {
        Bus {
            id,
            kind,
            vm: 1.0,
            va: 0.0,
            base_kv: 138.0,
            load_p,
            load_q,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn line(from: BusId, to: BusId, r: f64, x: f64) -> Branch {
        Branch {
            from,
            to,
            r,
            x,
            b: 0.0,
            rating: 0.0,
            tap: 1.0,
            is_transformer: false,
            in_service: true,
        }
    }

    pub fn generator(bus: BusId, p: f64) -> Generator {
        Generator {
            bus,
            p,
            q: 0.0,
            q_min: -999.0,
            q_max: 999.0,
            v_set: 1.0,
            mva_base: 100.0,
            is_condenser: false,
            p_max: p.max(100.0),
        }
    }

    /// Slack bus 1 feeding a PQ load at bus 2.
    pub fn two_bus(load_p: f64, load_q: f64) -> GridCase {
        GridCase::new(
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pq, load_p, load_q),
            ],
            vec![line(1, 2, 0.01, 0.1)],
            vec![generator(1, load_p)],
            vec![],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn two_bus_summary() {
        let s = two_bus(10.0, 2.0).summarize();
        assert_eq!(s.buses, 2);
        assert_eq!(s.branches, 1);
        assert_eq!(s.loads, 1);
        assert_eq!(s.generators, 1);
    }

    #[test]
    fn empty_substation_section_maps_one_per_bus() {
        let case = two_bus(0.0, 0.0);
        assert_eq!(case.summarize().substations, 2);
        assert!(case.has_default_substations());
        assert_eq!(case.substation(SubstationId(2)).unwrap().buses, vec![2]);
    }
}
