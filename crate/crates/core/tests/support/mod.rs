//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use impact_core::grid::{load_case, BusId, BusKind, GridCase};
use num_complex::Complex64;

pub fn ieee118() -> GridCase {
    load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee118.case")).expect("fixture loads")
}

/// Plain Gauss-Seidel power flow for a single connected island.
///
/// Builds its own admittance matrix from the raw branch data and returns
/// `(vm, va)` per bus id.
pub fn gauss_seidel(case: &GridCase, tol: f64, max_iter: usize) -> BTreeMap<BusId, (f64, f64)> {
    let n = case.buses().len();
    let idx: BTreeMap<BusId, usize> = case.buses().iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let base = case.base_mva();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (i, b) in case.buses().iter().enumerate() {
        y[i][i] += Complex64::new(b.shunt_g, b.shunt_b) / base;
    }
    for br in case.branches().iter().filter(|b| b.in_service) {
        let (f, t) = (idx[&br.from], idx[&br.to]);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half = Complex64::new(0.0, br.b / 2.0);
        let a = br.tap;
        y[f][f] += (ys + half) / (a * a);
        y[t][t] += ys + half;
        y[f][t] -= ys / a;
        y[t][f] -= ys / a;
    }

    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut setpoint: Vec<Option<f64>> = vec![None; n];
    for (i, b) in case.buses().iter().enumerate() {
        p[i] = -b.load_p / base;
        q[i] = -b.load_q / base;
    }
    for g in case.generators() {
        let i = idx[&g.bus];
        p[i] += g.p / base;
        q[i] += g.q / base;
        if setpoint[i].is_none() {
            setpoint[i] = Some(g.v_set);
        }
    }
    let kinds: Vec<BusKind> = case.buses().iter().map(|b| b.kind).collect();
    let is_pv = |i: usize| kinds[i] == BusKind::Pv && setpoint[i].is_some();

    let mut v: Vec<Complex64> = case
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| match kinds[i] {
            BusKind::Slack => Complex64::from_polar(setpoint[i].unwrap_or(b.vm), b.va),
            _ if is_pv(i) => Complex64::from_polar(setpoint[i].unwrap(), 0.0),
            _ => Complex64::new(1.0, 0.0),
        })
        .collect();

    let accel = 1.6;
    for _ in 0..max_iter {
        let mut worst = 0.0f64;
        for i in 0..n {
            if kinds[i] == BusKind::Slack {
                continue;
            }
            let others: Complex64 = (0..n).filter(|&j| j != i).map(|j| y[i][j] * v[j]).sum();
            let qi = if is_pv(i) {
                -(v[i].conj() * (others + y[i][i] * v[i])).im
            } else {
                q[i]
            };
            let s = Complex64::new(p[i], -qi);
            let mut vi = (s / v[i].conj() - others) / y[i][i];
            if is_pv(i) {
                vi = Complex64::from_polar(setpoint[i].unwrap(), vi.arg());
            } else {
                vi = v[i] + (vi - v[i]) * accel;
            }
            worst = worst.max((vi - v[i]).norm());
            v[i] = vi;
        }
        if worst < tol {
            break;
        }
    }
    case.buses()
        .iter()
        .zip(&v)
        .map(|(b, vi)| (b.id, (vi.norm(), vi.arg())))
        .collect()
}

/// Connected components by breadth-first search over in-service branches.
pub fn reachability_components(case: &GridCase) -> Vec<Vec<BusId>> {
    let mut adj: BTreeMap<BusId, Vec<BusId>> = case.buses().iter().map(|b| (b.id, Vec::new())).collect();
    for br in case.branches().iter().filter(|b| b.in_service) {
        adj.get_mut(&br.from).unwrap().push(br.to);
        adj.get_mut(&br.to).unwrap().push(br.from);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[&u] {
                if seen.insert(w) {
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}

use impact_core::grid::{Branch, Bus, Generator};
use rand::Rng;

pub fn plain_bus(id: BusId, kind: BusKind) -> Bus {
    Bus {
        id,
        kind,
        vm: 1.0,
        va: 0.0,
        base_kv: 138.0,
        load_p: 0.0,
        load_q: 0.0,
        shunt_g: 0.0,
        shunt_b: 0.0,
    }
}

pub fn plain_line(from: BusId, to: BusId, in_service: bool) -> Branch {
    Branch {
        from,
        to,
        r: 0.01,
        x: 0.1,
        b: 0.0,
        rating: 0.0,
        tap: 1.0,
        is_transformer: false,
        in_service,
    }
}

pub fn plain_generator(bus: BusId, p: f64) -> Generator {
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

/// Random multigraph on up to `max_buses` buses with random branch states.
pub fn random_network(rng: &mut impl Rng, max_buses: u32) -> GridCase {
    let n = rng.gen_range(1..=max_buses);
    let buses = (1..=n)
        .map(|id| plain_bus(id, if id == 1 { BusKind::Slack } else { BusKind::Pq }))
        .collect();
    let m = rng.gen_range(0..=2 * n);
    let branches = (0..m)
        .filter_map(|_| {
            let a = rng.gen_range(1..=n);
            let b = rng.gen_range(1..=n);
            (a != b).then(|| plain_line(a, b, rng.gen_bool(0.8)))
        })
        .collect();
    GridCase::new(100.0, buses, branches, vec![plain_generator(1, 10.0)], vec![])
}
