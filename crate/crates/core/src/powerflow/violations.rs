use std::fmt;

use super::newton::PowerFlowSolution;
use crate::error::{Error, Result};
use crate::grid::BusId;

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub v_min: f64,
    pub v_max: f64,
    /// Allowed loading as a fraction of the branch rating.
    pub loading: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_min: 0.94,
            v_max: 1.06,
            loading: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Undervoltage,
    Overvoltage,
    BranchOverload,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Undervoltage => "undervoltage",
            ViolationKind::Overvoltage => "overvoltage",
            ViolationKind::BranchOverload => "overload",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    Bus(BusId),
    Branch { from: BusId, to: BusId, index: usize },
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Bus(id) => write!(f, "bus {id}"),
            Entity::Branch { from, to, .. } => write!(f, "branch {from}-{to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub entity: Entity,
    /// p.u. for voltages, MVA for branches.
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.4} (limit {:.4})",
            self.kind.as_str(),
            self.entity,
            self.value,
            self.limit
        )
    }
}

/// Scans energized buses and rated in-service branches.
///
/// Bus violations come first ordered by bus id, then branch violations
/// ordered by endpoints.
pub fn check_violations(solution: &PowerFlowSolution, limits: &Limits) -> Result<Vec<Violation>> {
    if !solution.converged {
        return Err(Error::NotConverged);
    }
    Ok(check_violations_unchecked(solution, limits))
}

pub(crate) fn check_violations_unchecked(
    solution: &PowerFlowSolution,
    limits: &Limits,
) -> Vec<Violation> {
    let mut buses: Vec<Violation> = solution
        .buses
        .iter()
        .filter(|b| b.energized())
        .filter_map(|b| {
            let kind = if b.vm < limits.v_min {
                (ViolationKind::Undervoltage, limits.v_min)
            } else if b.vm > limits.v_max {
                (ViolationKind::Overvoltage, limits.v_max)
            } else {
                return None;
            };
            Some(Violation {
                kind: kind.0,
                entity: Entity::Bus(b.id),
                value: b.vm,
                limit: kind.1,
            })
        })
        .collect();
    buses.sort_by_key(|v| match v.entity {
        Entity::Bus(id) => id,
        Entity::Branch { .. } => unreachable!(),
    });

    let mut branches: Vec<Violation> = solution
        .branches
        .iter()
        .filter(|b| b.in_service && b.rating > 0.0)
        .filter_map(|b| {
            let limit = b.rating * limits.loading;
            let value = b.max_mva();
            (value > limit).then(|| Violation {
                kind: ViolationKind::BranchOverload,
                entity: Entity::Branch {
                    from: b.from.min(b.to),
                    to: b.from.max(b.to),
                    index: b.index,
                },
                value,
                limit,
            })
        })
        .collect();
    branches.sort_by_key(|v| match v.entity {
        Entity::Branch { from, to, index } => (from, to, index),
        Entity::Bus(_) => unreachable!(),
    });
    buses.extend(branches);
    buses
}
