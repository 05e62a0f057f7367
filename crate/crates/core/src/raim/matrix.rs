use std::collections::{BTreeMap, HashMap};

use crate::dynamics::StabilityClass;
use crate::error::{Error, Result};
use crate::screening::{OutageCombination, ScreeningResult, Verdict};

/// Dynamic verdict for one combination, summarised over its switching orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicOutcome {
    /// Worst class observed across the orders that were run.
    pub class: StabilityClass,
    pub critical: bool,
    /// Share of runs that were critical.
    pub fraction_unstable: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheckRecord {
    pub combination: OutageCombination,
    pub level: usize,
    pub steady: Verdict,
    pub dynamic: Option<DynamicOutcome>,
}

impl CrossCheckRecord {
    pub fn disagrees(&self) -> bool {
        self.dynamic
            .is_some_and(|d| d.critical != (self.steady == Verdict::Critical))
    }
}

/// Empirical fractions over one group of records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fractions {
    pub total: usize,
    pub steady_critical: usize,
    pub p_critical_steady: f64,
    pub p_noncritical_steady: f64,
    /// `(P(dynamic critical | steady critical), P(dynamic stable | steady critical))`,
    /// absent when no steady-critical combination was verified.
    pub given_critical: Option<(f64, f64)>,
    pub given_noncritical: Option<(f64, f64)>,
    pub verified_critical: usize,
    pub verified_noncritical: usize,
}

impl Fractions {
    fn tally<'a>(records: impl Iterator<Item = &'a CrossCheckRecord>) -> Self {
        let (mut n, mut crit) = (0usize, 0usize);
        let mut ver = [0usize; 2];
        let mut dyn_crit = [0usize; 2];
        for r in records {
            n += 1;
            let row = usize::from(r.steady != Verdict::Critical);
            if row == 0 {
                crit += 1;
            }
            if let Some(d) = r.dynamic {
                ver[row] += 1;
                if d.critical {
                    dyn_crit[row] += 1;
                }
            }
        }
        let cond = |row: usize| {
            (ver[row] > 0).then(|| {
                let p = dyn_crit[row] as f64 / ver[row] as f64;
                (p, (ver[row] - dyn_crit[row]) as f64 / ver[row] as f64)
            })
        };
        let (pc, pn) = if n == 0 {
            (0.0, 0.0)
        } else {
            (crit as f64 / n as f64, (n - crit) as f64 / n as f64)
        };
        Fractions {
            total: n,
            steady_critical: crit,
            p_critical_steady: pc,
            p_noncritical_steady: pn,
            given_critical: cond(0),
            given_noncritical: cond(1),
            verified_critical: ver[0],
            verified_noncritical: ver[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheckMatrix {
    pub records: Vec<CrossCheckRecord>,
    pub overall: Fractions,
    pub by_level: BTreeMap<usize, Fractions>,
}

impl CrossCheckMatrix {
    pub fn disagreements(&self) -> impl Iterator<Item = &CrossCheckRecord> {
        self.records.iter().filter(|r| r.disagrees())
    }
}

/// Joins screening results with dynamic outcomes. Every dynamic outcome must
/// belong to a screened combination.
pub fn cross_check(
    screened: &[ScreeningResult],
    dynamic: &[(OutageCombination, DynamicOutcome)],
) -> Result<CrossCheckMatrix> {
    let index: HashMap<&OutageCombination, usize> = screened
        .iter()
        .enumerate()
        .map(|(i, r)| (&r.combination, i))
        .collect();
    let mut outcome: Vec<Option<DynamicOutcome>> = vec![None; screened.len()];
    for (combo, d) in dynamic {
        let &i = index
            .get(combo)
            .ok_or_else(|| Error::Unmatched(combo.to_string()))?;
        outcome[i] = Some(*d);
    }
    let records: Vec<CrossCheckRecord> = screened
        .iter()
        .zip(outcome)
        .map(|(r, d)| CrossCheckRecord {
            combination: r.combination.clone(),
            level: r.combination.level(),
            steady: r.verdict,
            dynamic: d,
        })
        .collect();
    let mut levels: BTreeMap<usize, Vec<&CrossCheckRecord>> = BTreeMap::new();
    for r in &records {
        levels.entry(r.level).or_default().push(r);
    }
    let by_level = levels
        .into_iter()
        .map(|(k, rs)| (k, Fractions::tally(rs.into_iter())))
        .collect();
    Ok(CrossCheckMatrix {
        overall: Fractions::tally(records.iter()),
        records,
        by_level,
    })
}
