use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};
use super::violations::{check_violations_unchecked, Limits, Violation};
use crate::error::Result;
use crate::grid::{BusId, BusKind, GridCase};
use crate::topology::{classify_islands, find_islands, Viability};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Largest acceptable power mismatch, p.u.
    pub tolerance: f64,
    /// Newton iteration cap for each solve (Q-limit re-solves get their own).
    pub max_iterations: usize,
    /// Start from 1.0 p.u. / 0 rad (set points at voltage-controlled buses).
    pub flat_start: bool,
    /// Switch PV buses to PQ when reactive limits bind. Off by default: with
    /// limits enforced, heavily stressed outage cases lose their solution
    /// and the low-voltage screening signal with it.
    pub enforce_q_limits: bool,
    /// Initial `(vm, va)` per bus in case order; ignored on flat start.
    pub warm_start: Option<Vec<(f64, f64)>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-6,
            max_iterations: 20,
            flat_start: false,
            enforce_q_limits: false,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceCause {
    IterationLimit,
    SingularJacobian,
    NumericalBlowup,
}

impl DivergenceCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceCause::IterationLimit => "iteration_limit",
            DivergenceCause::SingularJacobian => "singular_jacobian",
            DivergenceCause::NumericalBlowup => "numerical_blowup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvedKind {
    Slack,
    Pv,
    Pq,
    /// In an island without generation; not part of the solve.
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusState {
    pub id: BusId,
    pub vm: f64,
    pub va: f64,
    pub kind: SolvedKind,
}

impl BusState {
    pub fn energized(&self) -> bool {
        self.kind != SolvedKind::Dead
    }
}

/// Flows at both terminals of a branch, MW and MVAr.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlow {
    pub index: usize,
    pub from: BusId,
    pub to: BusId,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub rating: f64,
    pub in_service: bool,
}

impl BranchFlow {
    pub fn max_mva(&self) -> f64 {
        self.p_from.hypot(self.q_from).max(self.p_to.hypot(self.q_to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDispatch {
    pub index: usize,
    pub bus: BusId,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
    pub cause: Option<DivergenceCause>,
    pub buses: Vec<BusState>,
    pub branches: Vec<BranchFlow>,
    pub generators: Vec<GenDispatch>,
    pub slack_buses: Vec<BusId>,
    /// PV buses converted to PQ by reactive limits.
    pub q_limited: Vec<BusId>,
    /// Violations against the default limits; empty when not converged.
    pub violations: Vec<Violation>,
}

impl PowerFlowSolution {
    pub fn bus(&self, id: BusId) -> Option<&BusState> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn total_generation_mw(&self) -> f64 {
        self.generators.iter().map(|g| g.p).sum()
    }

    pub fn losses_mw(&self) -> f64 {
        self.branches.iter().map(|b| b.p_from + b.p_to).sum()
    }
}

/// The reduced Newton system over energized buses.
pub(crate) struct NewtonSystem {
    pub(crate) ybus: AdmittanceMatrix,
    /// Case bus positions that take part in the solve.
    pub(crate) active: Vec<usize>,
    pub(crate) kinds: Vec<SolvedKind>,
    /// Specified complex injection per case bus, p.u.
    pub(crate) scheduled: Vec<Complex64>,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
}

impl NewtonSystem {
    fn index_unknowns(&mut self) {
        self.pvpq = self
            .active
            .iter()
            .copied()
            .filter(|&i| matches!(self.kinds[i], SolvedKind::Pv | SolvedKind::Pq))
            .collect();
        self.pq = self
            .active
            .iter()
            .copied()
            .filter(|&i| self.kinds[i] == SolvedKind::Pq)
            .collect();
    }

    fn voltages(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
        vm.iter()
            .zip(va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub(crate) fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        let i = self.ybus.mul_vec(v);
        v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
    }

    /// Stacked `[dP(pv,pq); dQ(pq)]` mismatch.
    pub(crate) fn mismatch(&self, vm: &[f64], va: &[f64]) -> Vec<f64> {
        let s = self.injections(&Self::voltages(vm, va));
        self.pvpq
            .iter()
            .map(|&i| (s[i] - self.scheduled[i]).re)
            .chain(self.pq.iter().map(|&i| (s[i] - self.scheduled[i]).im))
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn unknowns(&self) -> (usize, usize) {
        (self.pvpq.len(), self.pq.len())
    }

    pub(crate) fn jacobian(&self, vm: &[f64], va: &[f64]) -> DMatrix<f64> {
        let v = Self::voltages(vm, va);
        let ibus = self.ybus.mul_vec(&v);
        let n = self.ybus.dim();
        let mut col_va = vec![usize::MAX; n];
        let mut col_vm = vec![usize::MAX; n];
        let mut row_q = vec![usize::MAX; n];
        for (k, &i) in self.pvpq.iter().enumerate() {
            col_va[i] = k;
        }
        for (k, &i) in self.pq.iter().enumerate() {
            col_vm[i] = self.pvpq.len() + k;
            row_q[i] = self.pvpq.len() + k;
        }
        let dim = self.pvpq.len() + self.pq.len();
        let mut jac = DMatrix::zeros(dim, dim);
        let j = Complex64::i();
        for &i in &self.pvpq {
            let row_p = col_va[i];
            let vi = v[i];
            for &(k, y) in self.ybus.row(i) {
                let vk = v[k];
                let vnk = vk / vk.norm();
                let mut ds_dva = j * vi * (-(y * vk)).conj();
                let mut ds_dvm = vi * (y * vnk).conj();
                if k == i {
                    ds_dva += j * vi * ibus[i].conj();
                    ds_dvm += ibus[i].conj() * vnk;
                }
                if col_va[k] != usize::MAX {
                    jac[(row_p, col_va[k])] = ds_dva.re;
                    if row_q[i] != usize::MAX {
                        jac[(row_q[i], col_va[k])] = ds_dva.im;
                    }
                }
                if col_vm[k] != usize::MAX {
                    jac[(row_p, col_vm[k])] = ds_dvm.re;
                    if row_q[i] != usize::MAX {
                        jac[(row_q[i], col_vm[k])] = ds_dvm.im;
                    }
                }
            }
        }
        jac
    }

    fn apply_step(&self, vm: &mut [f64], va: &mut [f64], dx: &DVector<f64>) {
        for (k, &i) in self.pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        let off = self.pvpq.len();
        for (k, &i) in self.pq.iter().enumerate() {
            vm[i] += dx[off + k];
        }
    }
}

struct InnerOutcome {
    converged: bool,
    iterations: usize,
    max_mismatch: f64,
    cause: Option<DivergenceCause>,
}

fn newton_iterate(
    sys: &NewtonSystem,
    vm: &mut [f64],
    va: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> InnerOutcome {
    let norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut f = sys.mismatch(vm, va);
    let mut max_mismatch = norm(&f);
    let mut iterations = 0;
    while max_mismatch > tolerance {
        if !max_mismatch.is_finite() || max_mismatch > 1e10 {
            return InnerOutcome {
                converged: false,
                iterations,
                max_mismatch,
                cause: Some(DivergenceCause::NumericalBlowup),
            };
        }
        if iterations >= max_iterations {
            return InnerOutcome {
                converged: false,
                iterations,
                max_mismatch,
                cause: Some(DivergenceCause::IterationLimit),
            };
        }
        let jac = sys.jacobian(vm, va);
        let rhs = -DVector::from_vec(f);
        let Some(dx) = jac.lu().solve(&rhs).filter(|dx| dx.iter().all(|x| x.is_finite())) else {
            return InnerOutcome {
                converged: false,
                iterations,
                max_mismatch,
                cause: Some(DivergenceCause::SingularJacobian),
            };
        };
        sys.apply_step(vm, va, &dx);
        iterations += 1;
        f = sys.mismatch(vm, va);
        max_mismatch = norm(&f);
    }
    InnerOutcome {
        converged: true,
        iterations,
        max_mismatch,
        cause: None,
    }
}

/// Newton-Raphson AC power flow.
///
/// Islands without generation are left out of the solve and reported with
/// [`SolvedKind::Dead`]. Every other island gets its own reference bus.
/// Non-convergence is returned as data, never as an error; errors are
/// reserved for malformed cases.
pub fn solve_newton(case: &GridCase, options: &SolveOptions) -> Result<PowerFlowSolution> {
    let ybus = build_admittance(case)?;
    let n = case.buses().len();
    let base = case.base_mva();

    let partition = find_islands(case);
    let classes = classify_islands(&partition, case);

    let mut gens_at: HashMap<BusId, Vec<usize>> = HashMap::new();
    for (gi, g) in case.generators().iter().enumerate() {
        gens_at.entry(g.bus).or_default().push(gi);
    }

    let mut kinds = vec![SolvedKind::Dead; n];
    let mut slack_buses = Vec::new();
    for (island, class) in partition.islands.iter().zip(&classes) {
        if class.viability != Viability::Servable {
            continue;
        }
        let slack = class.slack.expect("servable island has a slack");
        slack_buses.push(slack);
        for &bus_id in &island.buses {
            let i = case.bus_index(bus_id).expect("island bus exists");
            let regulated = matches!(case.buses()[i].kind, BusKind::Pv | BusKind::Slack)
                && gens_at.contains_key(&bus_id);
            kinds[i] = if bus_id == slack {
                SolvedKind::Slack
            } else if regulated {
                SolvedKind::Pv
            } else {
                SolvedKind::Pq
            };
        }
    }
    let active: Vec<usize> = (0..n).filter(|&i| kinds[i] != SolvedKind::Dead).collect();

    let v_set = |i: usize| -> Option<f64> {
        gens_at
            .get(&case.buses()[i].id)
            .map(|g| case.generators()[g[0]].v_set)
    };
    let mut vm = vec![0.0; n];
    let mut va = vec![0.0; n];
    for &i in &active {
        let bus = &case.buses()[i];
        let (m, a) = if options.flat_start {
            (1.0, 0.0)
        } else if let Some(ws) = &options.warm_start {
            ws[i]
        } else {
            (bus.vm, bus.va)
        };
        vm[i] = match kinds[i] {
            SolvedKind::Slack | SolvedKind::Pv => v_set(i).unwrap_or(m),
            _ => m,
        };
        va[i] = a;
    }

    let mut q_fixed: HashMap<usize, f64> = HashMap::new();
    let scheduled_of = |i: usize, q_fixed: &HashMap<usize, f64>| -> Complex64 {
        let bus = &case.buses()[i];
        let (pg, qg) = gens_at.get(&bus.id).map_or((0.0, 0.0), |gs| {
            gs.iter().fold((0.0, 0.0), |(p, q), &g| {
                let gen = &case.generators()[g];
                (p + gen.p, q + gen.q)
            })
        });
        let qg = q_fixed.get(&i).copied().unwrap_or(qg);
        Complex64::new(pg - bus.load_p, qg - bus.load_q) / base
    };

    let mut sys = NewtonSystem {
        ybus,
        active: active.clone(),
        kinds,
        scheduled: (0..n).map(|i| scheduled_of(i, &q_fixed)).collect(),
        pvpq: Vec::new(),
        pq: Vec::new(),
    };
    sys.index_unknowns();

    let mut iterations = 0;
    let mut q_limited = Vec::new();
    let outcome = loop {
        let mut out = newton_iterate(
            &sys,
            &mut vm,
            &mut va,
            options.tolerance,
            options.max_iterations,
        );
        iterations += out.iterations;
        out.iterations = iterations;
        if !out.converged || !options.enforce_q_limits {
            break out;
        }
        let s = sys.injections(&NewtonSystem::voltages(&vm, &va));
        let mut switched = false;
        for &i in &active {
            if sys.kinds[i] != SolvedKind::Pv {
                continue;
            }
            let bus = &case.buses()[i];
            let gs = &gens_at[&bus.id];
            let q_max: f64 = gs.iter().map(|&g| case.generators()[g].q_max).sum();
            let q_min: f64 = gs.iter().map(|&g| case.generators()[g].q_min).sum();
            let qg = s[i].im * base + bus.load_q;
            let bound = if qg > q_max + 1e-6 {
                Some(q_max)
            } else if qg < q_min - 1e-6 {
                Some(q_min)
            } else {
                None
            };
            if let Some(limit) = bound {
                sys.kinds[i] = SolvedKind::Pq;
                q_fixed.insert(i, limit);
                sys.scheduled[i] = scheduled_of(i, &q_fixed);
                q_limited.push(bus.id);
                switched = true;
            }
        }
        if !switched {
            break out;
        }
        sys.index_unknowns();
    };
    q_limited.sort_unstable();

    let v = NewtonSystem::voltages(&vm, &va);
    let s = sys.injections(&v);

    let buses = case
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| BusState {
            id: b.id,
            vm: vm[i],
            va: va[i],
            kind: sys.kinds[i],
        })
        .collect();

    let mut generators: Vec<GenDispatch> = case
        .generators()
        .iter()
        .enumerate()
        .map(|(index, g)| GenDispatch {
            index,
            bus: g.bus,
            p: 0.0,
            q: 0.0,
        })
        .collect();
    for (&bus_id, gs) in &gens_at {
        let Some(i) = case.bus_index(bus_id) else {
            continue;
        };
        let bus = &case.buses()[i];
        let kind = sys.kinds[i];
        if kind == SolvedKind::Dead {
            continue;
        }
        let p_total = if kind == SolvedKind::Slack {
            s[i].re * base + bus.load_p
        } else {
            gs.iter().map(|&g| case.generators()[g].p).sum()
        };
        let q_total = match (kind, q_fixed.get(&i)) {
            (_, Some(&q)) => q,
            (SolvedKind::Pq, None) => gs.iter().map(|&g| case.generators()[g].q).sum(),
            _ => s[i].im * base + bus.load_q,
        };
        let p_sched: f64 = gs.iter().map(|&g| case.generators()[g].p).sum();
        let ranges: Vec<f64> = gs
            .iter()
            .map(|&g| {
                let gen = &case.generators()[g];
                (gen.q_max - gen.q_min).max(0.0)
            })
            .collect();
        let range_sum: f64 = ranges.iter().sum();
        for (k, &g) in gs.iter().enumerate() {
            let share_q = if range_sum > 0.0 {
                ranges[k] / range_sum
            } else {
                1.0 / gs.len() as f64
            };
            let share_p = if p_sched != 0.0 {
                case.generators()[g].p / p_sched
            } else {
                1.0 / gs.len() as f64
            };
            generators[g].p = p_total * share_p;
            generators[g].q = q_total * share_q;
        }
    }

    let branches = case
        .branches()
        .iter()
        .enumerate()
        .map(|(index, br)| {
            let mut flow = BranchFlow {
                index,
                from: br.from,
                to: br.to,
                p_from: 0.0,
                q_from: 0.0,
                p_to: 0.0,
                q_to: 0.0,
                rating: br.rating,
                in_service: br.in_service,
            };
            if let (Some(f), Some(t)) = (case.bus_index(br.from), case.bus_index(br.to)) {
                if br.in_service && sys.kinds[f] != SolvedKind::Dead {
                    let y = BranchAdmittance::of(br).expect("checked by admittance build");
                    let i_f = y.ff * v[f] + y.ft * v[t];
                    let i_t = y.tf * v[f] + y.tt * v[t];
                    let s_f = v[f] * i_f.conj() * base;
                    let s_t = v[t] * i_t.conj() * base;
                    flow.p_from = s_f.re;
                    flow.q_from = s_f.im;
                    flow.p_to = s_t.re;
                    flow.q_to = s_t.im;
                }
            }
            flow
        })
        .collect();

    let mut solution = PowerFlowSolution {
        converged: outcome.converged,
        iterations: outcome.iterations,
        max_mismatch: outcome.max_mismatch,
        cause: outcome.cause,
        buses,
        branches,
        generators,
        slack_buses,
        q_limited,
        violations: Vec::new(),
    };
    if solution.converged {
        solution.violations = check_violations_unchecked(&solution, &Limits::default());
    }
    Ok(solution)
}

/// Fills in missing branch ratings as `factor` times the base-case flow.
pub fn assign_emergency_ratings(
    case: &GridCase,
    base: &PowerFlowSolution,
    factor: f64,
) -> GridCase {
    let branches = case
        .branches()
        .iter()
        .zip(&base.branches)
        .map(|(br, flow)| {
            let mut br = br.clone();
            if br.rating == 0.0 && br.in_service {
                br.rating = factor * flow.max_mva();
            }
            br
        })
        .collect();
    case.with_branches(branches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::*;
    use crate::grid::GridCase;
    use proptest::prelude::*;

    fn system_for(case: &GridCase) -> (NewtonSystem, Vec<f64>, Vec<f64>) {
        let n = case.buses().len();
        let mut kinds = vec![SolvedKind::Pq; n];
        kinds[0] = SolvedKind::Slack;
        if n > 2 {
            kinds[1] = SolvedKind::Pv;
        }
        let mut sys = NewtonSystem {
            ybus: build_admittance(case).unwrap(),
            active: (0..n).collect(),
            kinds,
            scheduled: vec![Complex64::new(0.1, -0.05); n],
            pvpq: vec![],
            pq: vec![],
        };
        sys.index_unknowns();
        (sys, vec![1.0; n], vec![0.0; n])
    }

    #[test]
    fn no_load_two_bus_needs_no_correction() {
        let sol = solve_newton(&two_bus(0.0, 0.0), &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        let b2 = sol.bus(2).unwrap();
        assert!((b2.vm - 1.0).abs() < 1e-12 && b2.va.abs() < 1e-12);
    }

    #[test]
    fn loaded_two_bus_converges_and_balances() {
        let sol = solve_newton(&two_bus(50.0, 20.0), &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.max_mismatch <= 1e-6);
        let gen = sol.total_generation_mw();
        assert!((gen - 50.0 - sol.losses_mw()).abs() < 1e-3);
        assert!(sol.bus(2).unwrap().vm < 1.0);
    }

    #[test]
    fn impossible_load_diverges_without_error() {
        let sol = solve_newton(&two_bus(2000.0, 1000.0), &SolveOptions::default()).unwrap();
        assert!(!sol.converged);
        assert!(sol.cause.is_some());
        assert!(sol.violations.is_empty());
    }

    #[test]
    fn dead_islands_are_excluded() {
        let mut case = two_bus(10.0, 0.0);
        let mut branches = case.branches().to_vec();
        branches[0].in_service = false;
        case = case.with_branches(branches);
        let sol = solve_newton(&case, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.bus(2).unwrap().kind, SolvedKind::Dead);
        assert_eq!(sol.slack_buses, vec![1]);
    }

    #[test]
    fn reactive_limit_switches_pv_to_pq() {
        let mut b2 = bus(2, BusKind::Pv, 0.0, 0.0);
        b2.vm = 1.0;
        let mut g2 = generator(2, 0.0);
        g2.q_max = 5.0;
        g2.q_min = -5.0;
        g2.v_set = 1.05;
        let case = GridCase::new(
            100.0,
            vec![bus(1, BusKind::Slack, 0.0, 0.0), b2, bus(3, BusKind::Pq, 40.0, 30.0)],
            vec![line(1, 2, 0.01, 0.1), line(2, 3, 0.01, 0.1)],
            vec![generator(1, 40.0), g2],
            vec![],
        );
        let limited = SolveOptions {
            enforce_q_limits: true,
            ..SolveOptions::default()
        };
        let sol = solve_newton(&case, &limited).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.q_limited, vec![2]);
        assert!((sol.generators[1].q - 5.0).abs() < 1e-9);
        assert!(sol.bus(2).unwrap().vm < 1.05);

        let sol = solve_newton(&case, &SolveOptions::default()).unwrap();
        assert!((sol.bus(2).unwrap().vm - 1.05).abs() < 1e-12);
        assert!(sol.generators[1].q > 5.0);
    }

    fn random_case(n: usize, seed: u64) -> GridCase {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut buses = vec![bus(1, BusKind::Slack, 0.0, 0.0)];
        for id in 2..=n as u32 {
            let mut b = bus(id, BusKind::Pq, rng.gen_range(0.0..40.0), rng.gen_range(-5.0..15.0));
            b.shunt_b = rng.gen_range(0.0..5.0);
            buses.push(b);
        }
        let mut branches = Vec::new();
        for id in 2..=n as u32 {
            let to = rng.gen_range(1..id);
            let mut br = line(to, id, rng.gen_range(0.0..0.03), rng.gen_range(0.05..0.2));
            br.b = rng.gen_range(0.0..0.05);
            if rng.gen_bool(0.3) {
                br.tap = rng.gen_range(0.9..1.1);
                br.is_transformer = true;
            }
            branches.push(br);
        }
        for _ in 0..n / 2 {
            let a = rng.gen_range(1..=n as u32);
            let b = rng.gen_range(1..=n as u32);
            if a != b {
                branches.push(line(a, b, 0.01, rng.gen_range(0.05..0.3)));
            }
        }
        GridCase::new(100.0, buses, branches, vec![generator(1, 0.0)], vec![])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn jacobian_matches_central_differences(seed in 0u64..10_000, n in 3usize..8) {
            let case = random_case(n, seed);
            let (sys, mut vm, mut va) = system_for(&case);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for i in 0..n {
                vm[i] = rng.gen_range(0.9..1.1);
                va[i] = rng.gen_range(-0.3..0.3);
            }
            let jac = sys.jacobian(&vm, &va);
            let (npvpq, npq) = sys.unknowns();
            let h = 1e-6;
            for col in 0..npvpq + npq {
                let mut plus_m = vm.clone();
                let mut plus_a = va.clone();
                let mut minus_m = vm.clone();
                let mut minus_a = va.clone();
                if col < npvpq {
                    let bus = sys.pvpq[col];
                    plus_a[bus] += h;
                    minus_a[bus] -= h;
                } else {
                    let bus = sys.pq[col - npvpq];
                    plus_m[bus] += h;
                    minus_m[bus] -= h;
                }
                let fp = sys.mismatch(&plus_m, &plus_a);
                let fm = sys.mismatch(&minus_m, &minus_a);
                for row in 0..npvpq + npq {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let an = jac[(row, col)];
                    let scale = an.abs().max(1.0);
                    prop_assert!((fd - an).abs() / scale < 1e-6,
                        "J[{row},{col}] analytic {an} fd {fd}");
                }
            }
        }
    }
}
