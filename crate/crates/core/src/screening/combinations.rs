use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{GridCase, SubstationId};

/// A sorted set of substations hypothesized out together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutageCombination {
    substations: Vec<SubstationId>,
}

impl OutageCombination {
    pub fn new(mut substations: Vec<SubstationId>) -> Self {
        substations.sort_unstable();
        substations.dedup();
        OutageCombination { substations }
    }

    pub fn substations(&self) -> &[SubstationId] {
        &self.substations
    }

    pub fn level(&self) -> usize {
        self.substations.len()
    }

    pub fn is_superset_of(&self, other: &OutageCombination) -> bool {
        other
            .substations
            .iter()
            .all(|s| self.substations.binary_search(s).is_ok())
    }

    /// `13;14;17`, the form used in reports.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.substations.iter().map(ToString::to_string).collect();
        parts.join(";")
    }
}

impl fmt::Display for OutageCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.label().replace(';', ","))
    }
}

impl<const N: usize> From<[u32; N]> for OutageCombination {
    fn from(ids: [u32; N]) -> Self {
        OutageCombination::new(ids.iter().map(|&i| SubstationId(i)).collect())
    }
}

/// Number of `k`-subsets of an `n`-set.
///
/// The multiplicative form keeps every intermediate value an exact integer.
pub fn count_combinations(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Err(Error::LevelTooLarge {
            n: n as usize,
            k: k as usize,
        });
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    Ok(acc)
}

/// Lexicographic stream of `k`-subsets over a sorted universe.
#[derive(Debug, Clone)]
pub struct Combinations {
    universe: Vec<SubstationId>,
    indices: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(mut universe: Vec<SubstationId>, k: usize) -> Self {
        universe.sort_unstable();
        universe.dedup();
        let done = k == 0 || k > universe.len();
        Combinations {
            indices: (0..k).collect(),
            universe,
            done,
        }
    }
}

impl Iterator for Combinations {
    type Item = OutageCombination;

    fn next(&mut self) -> Option<OutageCombination> {
        if self.done {
            return None;
        }
        let item = OutageCombination {
            substations: self.indices.iter().map(|&i| self.universe[i]).collect(),
        };
        let n = self.universe.len();
        let k = self.indices.len();
        match (0..k).rev().find(|&i| self.indices[i] < n - k + i) {
            Some(i) => {
                self.indices[i] += 1;
                for j in i + 1..k {
                    self.indices[j] = self.indices[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(item)
    }
}

/// Streams every `k`-combination of the case's substations, or of `filter`
/// when given, in lexicographic order.
pub fn enumerate_combinations(
    case: &GridCase,
    k: usize,
    filter: Option<&[SubstationId]>,
) -> Combinations {
    let universe = match filter {
        Some(ids) => ids.to_vec(),
        None => case.substation_ids(),
    };
    Combinations::new(universe, k)
}
