use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::model::MachineModel;
use crate::error::{Error, Result};
use crate::grid::{BusId, GridCase};
use crate::powerflow::{build_admittance, PowerFlowSolution};
use crate::topology::{apply_substation_outage_with, find_islands, open_branch, OutageAction, OutageMode};

pub const NOMINAL_HZ: f64 = 60.0;
pub(crate) const OMEGA_S: f64 = 2.0 * PI * NOMINAL_HZ;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Differential states of one machine.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineState {
    /// Rotor angle, rad.
    pub delta: f64,
    /// Speed deviation, per unit.
    pub omega: f64,
    /// Transient q-axis voltage, per unit on the machine rating.
    pub eq: f64,
    pub efd: f64,
    /// Mechanical power, per unit on the machine rating.
    pub pm: f64,
}

impl MachineState {
    fn axpy(&self, h: f64, d: &MachineState) -> MachineState {
        MachineState {
            delta: self.delta + h * d.delta,
            omega: self.omega + h * d.omega,
            eq: self.eq + h * d.eq,
            efd: self.efd + h * d.efd,
            pm: self.pm + h * d.pm,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.delta, self.omega, self.eq, self.efd, self.pm]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub time: f64,
    pub machines: Vec<MachineState>,
    pub tripped: Vec<bool>,
    /// Bus voltage phasors in case bus order, zero on de-energized buses;
    /// refreshed by [`Simulator::sync_voltages`], not by every step.
    pub voltages: Vec<Complex64>,
}

/// Fixed quantities computed at initialization.
#[derive(Debug, Clone, Copy)]
struct Setpoint {
    vref: f64,
    pref: f64,
    pm_min: f64,
    pm_max: f64,
    efd_min: f64,
    efd_max: f64,
    /// Norton admittance on the system base.
    y: Complex64,
    /// System-to-machine per-unit current conversion.
    to_machine: f64,
}

/// An energized island with at least one running machine.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveIsland {
    pub buses: Vec<BusId>,
    pub machines: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Network {
    /// Case index of each live bus.
    live_buses: Vec<usize>,
    islands: Vec<LiveIsland>,
    machine_island: Vec<Option<usize>>,
    machine_col: Vec<Option<usize>>,
    /// Live-bus voltages per unit Norton current at each machine column.
    z: DMatrix<Complex64>,
    /// Rows of `z` at the machine buses themselves, in column order.
    zm: DMatrix<Complex64>,
}

/// Network solve failed: the interface matrix is singular or non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collapse;

fn build_network(
    case: &GridCase,
    load_y: &[Complex64],
    setpoints: &[Setpoint],
    machine_bus: &[usize],
    tripped: &mut [bool],
) -> Result<Network, Collapse> {
    let n = case.buses().len();
    let mut degree = vec![0usize; n];
    for br in case.branches().iter().filter(|b| b.in_service) {
        for end in [br.from, br.to] {
            if let Some(i) = case.bus_index(end) {
                degree[i] += 1;
            }
        }
    }
    // A bus with no closed branch left is an isolated substation: its units trip.
    for (m, &b) in machine_bus.iter().enumerate() {
        if degree[b] == 0 {
            tripped[m] = true;
        }
    }

    let partition = find_islands(case);
    let mut live_of_bus = vec![None; n];
    let mut live_buses = Vec::new();
    let mut islands = Vec::new();
    let mut machine_island = vec![None; machine_bus.len()];
    for island in &partition.islands {
        let machines: Vec<usize> = (0..machine_bus.len())
            .filter(|&m| !tripped[m] && island.buses.binary_search(&case.buses()[machine_bus[m]].id).is_ok())
            .collect();
        if machines.is_empty() {
            continue;
        }
        for &id in &island.buses {
            let i = case.bus_index(id).expect("island bus exists");
            live_of_bus[i] = Some(live_buses.len());
            live_buses.push(i);
        }
        for &m in &machines {
            machine_island[m] = Some(islands.len());
        }
        islands.push(LiveIsland {
            buses: island.buses.clone(),
            machines,
        });
    }
    for (m, island) in machine_island.iter().enumerate() {
        if island.is_none() {
            tripped[m] = true;
        }
    }

    let ybus = build_admittance(case).map_err(|_| Collapse)?;
    let nl = live_buses.len();
    let mut y = DMatrix::<Complex64>::zeros(nl, nl);
    for (li, &i) in live_buses.iter().enumerate() {
        for &(j, v) in ybus.row(i) {
            if let Some(lj) = live_of_bus[j] {
                y[(li, lj)] += v;
            }
        }
        y[(li, li)] += load_y[i];
    }
    let mut machine_col = vec![None; machine_bus.len()];
    let mut col_bus: Vec<usize> = Vec::new();
    for m in 0..machine_bus.len() {
        if tripped[m] {
            continue;
        }
        let lb = live_of_bus[machine_bus[m]].expect("running machine on live bus");
        y[(lb, lb)] += setpoints[m].y;
        let col = match col_bus.iter().position(|&c| c == lb) {
            Some(c) => c,
            None => {
                col_bus.push(lb);
                col_bus.len() - 1
            }
        };
        machine_col[m] = Some(col);
    }
    let mut rhs = DMatrix::<Complex64>::zeros(nl, col_bus.len());
    for (c, &lb) in col_bus.iter().enumerate() {
        rhs[(lb, c)] = Complex64::new(1.0, 0.0);
    }
    let z = if nl == 0 {
        rhs
    } else {
        y.lu().solve(&rhs).ok_or(Collapse)?
    };
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Collapse);
    }
    let zm = DMatrix::from_fn(col_bus.len(), col_bus.len(), |r, c| z[(col_bus[r], c)]);
    Ok(Network {
        live_buses,
        islands,
        machine_island,
        machine_col,
        z,
        zm,
    })
}

/// Result of applying one switching action.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Done,
    /// Nothing left to switch (circuit already open).
    NoOp(String),
    Collapsed,
}

/// Machine-network system integrated with fixed-step RK4.
#[derive(Debug, Clone)]
pub struct Simulator {
    case: GridCase,
    models: Vec<MachineModel>,
    machine_bus: Vec<usize>,
    setpoints: Vec<Setpoint>,
    load_y: Vec<Complex64>,
    network: Network,
    state: DynamicState,
}

/// Builds the equilibrium state matching a converged power flow.
pub fn init_dynamic_state(
    case: &GridCase,
    pf: &PowerFlowSolution,
    models: &[MachineModel],
) -> Result<Simulator> {
    if !pf.converged {
        return Err(Error::NotConverged);
    }
    let problems: Vec<String> = models.iter().filter_map(|m| m.validate().err()).collect();
    if !problems.is_empty() {
        return Err(Error::Invalid(problems));
    }
    let mut by_gen: Vec<Option<&MachineModel>> = vec![None; case.generators().len()];
    for m in models {
        if let Some(slot) = by_gen.get_mut(m.generator) {
            *slot = Some(m);
        }
    }
    let mut ordered = Vec::with_capacity(by_gen.len());
    for (g, slot) in by_gen.into_iter().enumerate() {
        match slot {
            Some(m) => ordered.push(m.clone()),
            None => return Err(Error::MissingMachine(g, case.generators()[g].bus)),
        }
    }

    let base = case.base_mva();
    let mut load_y = vec![Complex64::default(); case.buses().len()];
    for (i, bus) in case.buses().iter().enumerate() {
        let Some(st) = pf.bus(bus.id).filter(|s| s.energized()) else {
            continue;
        };
        load_y[i] = Complex64::new(bus.load_p, -bus.load_q) / base / (st.vm * st.vm);
    }

    let n = ordered.len();
    let mut machine_bus = Vec::with_capacity(n);
    let mut setpoints = Vec::with_capacity(n);
    let mut machines = Vec::with_capacity(n);
    let mut tripped = vec![false; n];
    for (k, model) in ordered.iter().enumerate() {
        let bi = case.bus_index(model.bus).ok_or(Error::UnknownBus(model.bus))?;
        machine_bus.push(bi);
        let to_machine = base / model.rating_mva;
        let xd_sys = model.xd_prime * to_machine;
        let y = (J * xd_sys).inv();
        let st = pf.bus(model.bus).filter(|s| s.energized());
        let dispatch = &pf.generators[model.generator];
        let (state, vt) = match st {
            Some(st) => {
                let v = Complex64::from_polar(st.vm, st.va);
                let s = Complex64::new(dispatch.p, dispatch.q) / base;
                let i = (s / v).conj();
                let e = v + J * xd_sys * i;
                let delta = e.arg();
                let i_m = i * to_machine;
                let id = (J * Complex64::from_polar(1.0, -delta) * i_m).re;
                let eq = e.norm();
                let efd = eq + (model.xd - model.xd_prime) * id;
                let pe = (e * i_m.conj()).re;
                (
                    MachineState {
                        delta,
                        omega: 0.0,
                        eq,
                        efd,
                        pm: pe,
                    },
                    st.vm,
                )
            }
            None => {
                tripped[k] = true;
                (MachineState::default(), 0.0)
            }
        };
        let ex = &model.exciter;
        let (mut efd_min, mut efd_max) = (ex.efd_min, ex.efd_max);
        if state.efd > efd_max || state.efd < efd_min {
            warn!(
                "machine at bus {}: initial field voltage {:.3} outside limits, widening",
                model.bus, state.efd
            );
            efd_max = efd_max.max(state.efd);
            efd_min = efd_min.min(state.efd);
        }
        let (pm_min, pm_max) = match &model.governor {
            Some(g) => {
                let cap = g.p_max / model.rating_mva;
                if state.pm > cap + 1e-9 {
                    warn!(
                        "machine at bus {}: dispatch {:.1} MW above turbine limit {:.1} MW",
                        model.bus,
                        state.pm * model.rating_mva,
                        g.p_max
                    );
                }
                (state.pm.min(0.0), cap.max(state.pm))
            }
            None => (state.pm, state.pm),
        };
        setpoints.push(Setpoint {
            vref: vt + state.efd / ex.gain,
            pref: state.pm,
            pm_min,
            pm_max,
            efd_min,
            efd_max,
            y,
            to_machine,
        });
        machines.push(state);
    }

    let network = build_network(case, &load_y, &setpoints, &machine_bus, &mut tripped)
        .map_err(|_| Error::Invalid(vec!["initial network is singular".into()]))?;
    let mut sim = Simulator {
        case: case.clone(),
        models: ordered,
        machine_bus,
        setpoints,
        load_y,
        network,
        state: DynamicState {
            time: 0.0,
            machines,
            tripped,
            voltages: Vec::new(),
        },
    };
    sim.state.voltages = sim.bus_voltages(&sim.state.machines);
    Ok(sim)
}

impl Simulator {
    pub fn state(&self) -> &DynamicState {
        &self.state
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    /// Overwrites the machine states, e.g. to start from a disturbed point.
    pub fn set_machines(&mut self, machines: Vec<MachineState>) {
        assert_eq!(machines.len(), self.state.machines.len());
        self.state.machines = machines;
        self.state.voltages = self.bus_voltages(&self.state.machines);
    }

    pub fn models(&self) -> &[MachineModel] {
        &self.models
    }

    pub fn islands(&self) -> &[LiveIsland] {
        &self.network.islands
    }

    pub fn machine_island(&self, m: usize) -> Option<usize> {
        self.network.machine_island[m]
    }

    fn inject(&self, x: &[MachineState]) -> DVector<Complex64> {
        let mut cur = DVector::<Complex64>::zeros(self.network.z.ncols());
        for (m, st) in x.iter().enumerate() {
            if let Some(c) = self.network.machine_col[m] {
                cur[c] += Complex64::from_polar(st.eq, st.delta) * self.setpoints[m].y;
            }
        }
        cur
    }

    /// Terminal voltage at each machine column.
    fn terminal_voltages(&self, x: &[MachineState]) -> DVector<Complex64> {
        &self.network.zm * self.inject(x)
    }

    fn bus_voltages(&self, x: &[MachineState]) -> Vec<Complex64> {
        let live = &self.network.z * self.inject(x);
        let mut v = vec![Complex64::default(); self.case.buses().len()];
        for (li, &i) in self.network.live_buses.iter().enumerate() {
            v[i] = live[li];
        }
        v
    }

    fn weight(&self, m: usize) -> f64 {
        self.models[m].inertia_h * self.models[m].rating_mva
    }

    /// Inertia-weighted mean speed deviation of each live island.
    pub fn island_speeds(&self, x: &[MachineState]) -> Vec<f64> {
        self.network
            .islands
            .iter()
            .map(|isl| {
                let (num, den) = isl.machines.iter().fold((0.0, 0.0), |(n, d), &m| {
                    let w = self.weight(m);
                    (n + w * x[m].omega, d + w)
                });
                num / den
            })
            .collect()
    }

    /// Inertia-weighted mean rotor angle of each live island, rad.
    pub fn island_angles(&self, x: &[MachineState]) -> Vec<f64> {
        self.network
            .islands
            .iter()
            .map(|isl| {
                let (num, den) = isl.machines.iter().fold((0.0, 0.0), |(n, d), &m| {
                    let w = self.weight(m);
                    (n + w * x[m].delta, d + w)
                });
                num / den
            })
            .collect()
    }

    /// Electrical power per machine on its rating, and terminal voltage magnitude.
    pub fn electrical(&self, x: &[MachineState]) -> Vec<(f64, f64)> {
        let v = self.terminal_voltages(x);
        x.iter()
            .enumerate()
            .map(|(m, st)| {
                let Some(c) = self.network.machine_col[m] else {
                    return (0.0, 0.0);
                };
                let sp = &self.setpoints[m];
                let e = Complex64::from_polar(st.eq, st.delta);
                let i_m = (e - v[c]) * sp.y * sp.to_machine;
                ((e * i_m.conj()).re, v[c].norm())
            })
            .collect()
    }

    /// Time derivatives of every machine state at `x`.
    pub fn derivatives(&self, x: &[MachineState]) -> Vec<MachineState> {
        let v = self.terminal_voltages(x);
        let coi = self.island_speeds(x);
        x.iter()
            .enumerate()
            .map(|(m, st)| {
                let Some(c) = self.network.machine_col[m] else {
                    return MachineState::default();
                };
                let model = &self.models[m];
                let sp = &self.setpoints[m];
                let vt = v[c];
                let e = Complex64::from_polar(st.eq, st.delta);
                let i_m = (e - vt) * sp.y * sp.to_machine;
                let pe = (e * i_m.conj()).re;
                let id = (J * Complex64::from_polar(1.0, -st.delta) * i_m).re;
                let w_coi = self.network.machine_island[m].map_or(0.0, |k| coi[k]);

                let d_omega =
                    (st.pm - pe - model.damping_d * (st.omega - w_coi)) / (2.0 * model.inertia_h);
                let d_eq = (st.efd - st.eq - (model.xd - model.xd_prime) * id) / model.td0_prime;
                let ex = &model.exciter;
                let d_efd = limited(
                    (ex.gain * (sp.vref - vt.norm()) - st.efd) / ex.time_constant,
                    st.efd,
                    sp.efd_min,
                    sp.efd_max,
                );
                let d_pm = match &model.governor {
                    Some(g) => limited(
                        (sp.pref - st.omega / g.droop - st.pm) / g.time_constant,
                        st.pm,
                        sp.pm_min,
                        sp.pm_max,
                    ),
                    None => 0.0,
                };
                MachineState {
                    delta: OMEGA_S * st.omega,
                    omega: d_omega,
                    eq: d_eq,
                    efd: d_efd,
                    pm: d_pm,
                }
            })
            .collect()
    }

    /// One classical RK4 step of length `h`.
    pub fn step(&mut self, h: f64) {
        let x0 = self.state.machines.clone();
        let k1 = self.derivatives(&x0);
        let x1: Vec<_> = x0.iter().zip(&k1).map(|(x, d)| x.axpy(h / 2.0, d)).collect();
        let k2 = self.derivatives(&x1);
        let x2: Vec<_> = x0.iter().zip(&k2).map(|(x, d)| x.axpy(h / 2.0, d)).collect();
        let k3 = self.derivatives(&x2);
        let x3: Vec<_> = x0.iter().zip(&k3).map(|(x, d)| x.axpy(h, d)).collect();
        let k4 = self.derivatives(&x3);
        let mut next: Vec<MachineState> = (0..x0.len())
            .map(|m| {
                let d = |f: fn(&MachineState) -> f64| {
                    (f(&k1[m]) + 2.0 * f(&k2[m]) + 2.0 * f(&k3[m]) + f(&k4[m])) / 6.0
                };
                MachineState {
                    delta: x0[m].delta + h * d(|s| s.delta),
                    omega: x0[m].omega + h * d(|s| s.omega),
                    eq: x0[m].eq + h * d(|s| s.eq),
                    efd: x0[m].efd + h * d(|s| s.efd),
                    pm: x0[m].pm + h * d(|s| s.pm),
                }
            })
            .collect();
        for (m, st) in next.iter_mut().enumerate() {
            let sp = &self.setpoints[m];
            st.efd = st.efd.clamp(sp.efd_min, sp.efd_max);
            st.pm = st.pm.clamp(sp.pm_min, sp.pm_max);
        }
        self.state.machines = next;
        self.state.time += h;
    }

    pub fn sync_voltages(&mut self) {
        self.state.voltages = self.bus_voltages(&self.state.machines);
    }

    /// Applies a switching action and refactors the network.
    pub fn apply(&mut self, action: &OutageAction) -> Result<Applied> {
        let next = match action {
            OutageAction::OpenBranch { from, to } => match open_branch(&self.case, *from, *to) {
                Ok(c) => c,
                Err(Error::UnknownBranch(..)) => {
                    return Ok(Applied::NoOp(format!("no closed circuit {from}-{to}")))
                }
                Err(e) => return Err(e),
            },
            OutageAction::RemoveSubstation(id) => {
                apply_substation_outage_with(&self.case, &[*id], OutageMode::BranchesOnly)?.case
            }
        };
        self.case = next;
        match build_network(
            &self.case,
            &self.load_y,
            &self.setpoints,
            &self.machine_bus,
            &mut self.state.tripped,
        ) {
            Ok(net) => {
                self.network = net;
                for m in 0..self.state.machines.len() {
                    if self.state.tripped[m] {
                        self.state.machines[m].omega = 0.0;
                    }
                }
                self.state.voltages = self.bus_voltages(&self.state.machines);
                Ok(Applied::Done)
            }
            Err(Collapse) => Ok(Applied::Collapsed),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.state
            .machines
            .iter()
            .all(|s| s.as_array().iter().all(|v| v.is_finite()))
    }
}

/// Zeroes a derivative that would push a state further past its limit.
fn limited(d: f64, x: f64, lo: f64, hi: f64) -> f64 {
    if (x >= hi && d > 0.0) || (x <= lo && d < 0.0) {
        0.0
    } else {
        d
    }
}

/// Inertia-weighted mean angle over the machines of `island`.
pub fn compute_coi(sim: &Simulator, island: &[BusId]) -> Result<f64> {
    let (num, den) = sim
        .models
        .iter()
        .enumerate()
        .filter(|(m, model)| !sim.state.tripped[*m] && island.contains(&model.bus))
        .fold((0.0, 0.0), |(n, d), (m, _)| {
            let w = sim.weight(m);
            (n + w * sim.state.machines[m].delta, d + w)
        });
    if den == 0.0 {
        return Err(Error::NoMachines(island.first().copied().unwrap_or_default()));
    }
    Ok(num / den)
}

/// Weighted mean of `angles` with weights `h`: the centre-of-inertia angle.
pub fn coi_angle(inertia: &[f64], angles: &[f64]) -> f64 {
    let den: f64 = inertia.iter().sum();
    inertia.iter().zip(angles).map(|(h, a)| h * a).sum::<f64>() / den
}
