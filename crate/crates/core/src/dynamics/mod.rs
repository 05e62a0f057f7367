//! Time-domain simulation of switching sequences.
//!
//! Machines are flux-decay models behind transient reactance with a
//! first-order exciter and droop governor; loads are constant impedance
//! taken from the power flow. The network is re-solved algebraically at
//! every integrator stage.

mod model;
mod monitor;
mod schedule;
mod sim;

use std::fmt::Write as _;

pub use model::{default_models, ExciterModel, GovernorModel, MachineModel};
pub use monitor::{Detection, IslandObservation, Monitor, Thresholds};
pub use schedule::{
    load_scenario, parse_scenario, write_scenario, ScheduledEvent, SwitchingSchedule,
    DEFAULT_INTERVAL,
};
pub use sim::{
    coi_angle, compute_coi, init_dynamic_state, Applied, DynamicState, LiveIsland, MachineState,
    Simulator, NOMINAL_HZ,
};

use crate::error::{Error, Result};
use crate::grid::{BusId, GridCase};
use crate::powerflow::{solve_newton, SolveOptions};
use crate::topology::OutageAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    TransientUnstable,
    FrequencyUnstable,
    /// Some islands unstable in frequency, others stable.
    IslandedMixed,
    /// The network equations could not be solved.
    Collapsed,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::TransientUnstable => "transient_unstable",
            StabilityClass::FrequencyUnstable => "frequency_unstable",
            StabilityClass::IslandedMixed => "islanded_mixed",
            StabilityClass::Collapsed => "collapsed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandVerdict {
    pub buses: Vec<BusId>,
    pub machines: usize,
    /// Machines with a governor, i.e. not condensers.
    pub generators: usize,
    pub class: StabilityClass,
    pub first_violation: Option<f64>,
    pub final_frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub overall: StabilityClass,
    /// Islands alive at the end of the run, ordered by smallest bus.
    pub islands: Vec<IslandVerdict>,
    pub first_violation: Option<f64>,
    pub growing_oscillation: bool,
}

impl StabilityVerdict {
    pub fn is_critical(&self) -> bool {
        matches!(
            self.overall,
            StabilityClass::TransientUnstable
                | StabilityClass::FrequencyUnstable
                | StabilityClass::Collapsed
        )
    }

    pub fn island_of(&self, bus: BusId) -> Option<&IslandVerdict> {
        self.islands.iter().find(|i| i.buses.binary_search(&bus).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventStatus {
    /// Applied; `islands` live islands afterwards.
    Executed { islands: usize },
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub action: OutageAction,
    pub status: EventStatus,
}

impl EventRecord {
    pub fn executed(&self) -> bool {
        matches!(self.status, EventStatus::Executed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IslandSample {
    /// Index into [`DynamicTrace::island_sets`].
    pub set: usize,
    pub freq_hz: f64,
    pub spread_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynamicTrace {
    pub machine_buses: Vec<BusId>,
    /// `H * rating` per machine, the centre-of-inertia weight.
    pub machine_weights: Vec<f64>,
    pub bus_ids: Vec<BusId>,
    pub times: Vec<f64>,
    /// Per sample, per machine, angle relative to its island's inertia centre.
    /// NaN once the machine has tripped.
    pub angles_deg: Vec<Vec<f64>>,
    /// Per sample, per machine, frequency of the island it belongs to.
    pub machine_freq_hz: Vec<Vec<f64>>,
    /// Per sample, per machine, index of its island set (`usize::MAX` if tripped).
    pub machine_island: Vec<Vec<usize>>,
    pub islands: Vec<Vec<IslandSample>>,
    pub island_sets: Vec<Vec<BusId>>,
    pub voltages: Vec<Vec<f64>>,
    pub events: Vec<EventRecord>,
}

impl DynamicTrace {
    /// Frequency of the island containing `bus` at each sample (NaN where absent).
    pub fn island_frequency(&self, bus: BusId) -> Vec<f64> {
        self.islands
            .iter()
            .map(|samples| {
                samples
                    .iter()
                    .find(|s| self.island_sets[s.set].binary_search(&bus).is_ok())
                    .map_or(f64::NAN, |s| s.freq_hz)
            })
            .collect()
    }

    pub fn island_count(&self, sample: usize) -> usize {
        self.islands[sample].len()
    }

    fn set_id(&mut self, buses: &[BusId]) -> usize {
        match self.island_sets.iter().position(|s| s == buses) {
            Some(i) => i,
            None => {
                self.island_sets.push(buses.to_vec());
                self.island_sets.len() - 1
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub dt: f64,
    /// Defaults to ten seconds past the last event.
    pub t_end: Option<f64>,
    /// Trace sample spacing, s; rounded to a whole number of steps.
    pub sample_interval: f64,
    pub thresholds: Thresholds,
    pub power_flow: SolveOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: 0.01,
            t_end: None,
            sample_interval: 0.1,
            thresholds: Thresholds::default(),
            power_flow: equilibrium_flow(),
        }
    }
}

/// Power-flow settings tight enough that the initial state is a true equilibrium.
pub fn equilibrium_flow() -> SolveOptions {
    SolveOptions {
        tolerance: 1e-10,
        ..SolveOptions::default()
    }
}

pub const DEFAULT_TAIL: f64 = 10.0;

fn check_schedule(case: &GridCase, schedule: &SwitchingSchedule) -> Result<()> {
    for ev in schedule.events() {
        match &ev.action {
            OutageAction::OpenBranch { from, to } => {
                if !case.branches().iter().any(|b| b.connects(*from, *to)) {
                    return Err(Error::Schedule(format!("no branch {from}-{to} in case")));
                }
            }
            OutageAction::RemoveSubstation(id) => {
                if case.substation(*id).is_none() {
                    return Err(Error::UnknownSubstation(*id));
                }
            }
        }
    }
    Ok(())
}

/// Solves the power flow, initializes and runs `schedule`.
pub fn run_scenario(
    case: &GridCase,
    schedule: &SwitchingSchedule,
    models: &[MachineModel],
    options: &RunOptions,
) -> Result<(DynamicTrace, StabilityVerdict)> {
    check_schedule(case, schedule)?;
    if !(options.dt > 0.0) {
        return Err(Error::Schedule(format!("time step {} must be positive", options.dt)));
    }
    let pf = solve_newton(case, &options.power_flow)?;
    let sim = init_dynamic_state(case, &pf, models)?;
    Ok(simulate(sim, schedule, options))
}

struct Runner {
    sim: Simulator,
    monitor: Monitor,
    trace: DynamicTrace,
    collapsed_at: Option<f64>,
}

impl Runner {
    fn observe(&mut self) {
        let x = &self.sim.state().machines;
        let speeds = self.sim.island_speeds(x);
        let t = self.sim.state().time;
        let obs: Vec<IslandObservation<'_>> = self
            .sim
            .islands()
            .iter()
            .zip(&speeds)
            .map(|(isl, w)| {
                let (lo, hi) = isl.machines.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &m| {
                    (lo.min(x[m].delta), hi.max(x[m].delta))
                });
                IslandObservation {
                    buses: &isl.buses,
                    spread_deg: (hi - lo).to_degrees(),
                    freq_hz: NOMINAL_HZ * (1.0 + w),
                }
            })
            .collect();
        self.monitor.observe(t, &obs);
    }

    fn sample(&mut self) {
        self.sim.sync_voltages();
        let x = self.sim.state().machines.clone();
        let speeds = self.sim.island_speeds(&x);
        let centres = self.sim.island_angles(&x);
        let mut ids = Vec::new();
        let mut samples = Vec::new();
        for (k, isl) in self.sim.islands().iter().enumerate() {
            let set = self.trace.set_id(&isl.buses);
            ids.push(set);
            let (lo, hi) = isl.machines.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &m| {
                (lo.min(x[m].delta), hi.max(x[m].delta))
            });
            samples.push(IslandSample {
                set,
                freq_hz: NOMINAL_HZ * (1.0 + speeds[k]),
                spread_deg: (hi - lo).to_degrees(),
            });
        }
        let n = x.len();
        let mut angles = vec![f64::NAN; n];
        let mut freqs = vec![f64::NAN; n];
        let mut membership = vec![usize::MAX; n];
        for m in 0..n {
            if let Some(k) = self.sim.machine_island(m) {
                angles[m] = (x[m].delta - centres[k]).to_degrees();
                freqs[m] = NOMINAL_HZ * (1.0 + speeds[k]);
                membership[m] = ids[k];
            }
        }
        self.trace.times.push(self.sim.state().time);
        self.trace.angles_deg.push(angles);
        self.trace.machine_freq_hz.push(freqs);
        self.trace.machine_island.push(membership);
        self.trace.islands.push(samples);
        self.trace
            .voltages
            .push(self.sim.state().voltages.iter().map(|v| v.norm()).collect());
    }

    fn apply(&mut self, time: f64, action: &OutageAction) {
        let status = match self.sim.apply(action) {
            Ok(Applied::Done) => EventStatus::Executed {
                islands: self.sim.islands().len(),
            },
            Ok(Applied::NoOp(why)) => EventStatus::Skipped(why),
            Ok(Applied::Collapsed) => {
                self.collapsed_at = Some(time);
                EventStatus::Executed { islands: 0 }
            }
            Err(e) => EventStatus::Skipped(e.to_string()),
        };
        self.trace.events.push(EventRecord {
            time,
            action: action.clone(),
            status,
        });
    }

    fn halted(&self) -> bool {
        self.collapsed_at.is_some() || self.monitor.transient.is_some()
    }

    fn advance(&mut self, h: f64) {
        self.sim.step(h);
        if !self.sim.is_finite() {
            self.collapsed_at = Some(self.sim.state().time);
        }
    }
}

/// Runs an initialized simulator through `schedule`.
pub fn simulate(
    sim: Simulator,
    schedule: &SwitchingSchedule,
    options: &RunOptions,
) -> (DynamicTrace, StabilityVerdict) {
    let dt = options.dt;
    let decimation = ((options.sample_interval / dt).round() as usize).max(1);
    let t_end = options
        .t_end
        .unwrap_or_else(|| schedule.last_time().unwrap_or(0.0) + DEFAULT_TAIL);
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let eps = dt * 1e-6;

    let trace = DynamicTrace {
        machine_buses: sim.models().iter().map(|m| m.bus).collect(),
        machine_weights: sim.models().iter().map(|m| m.inertia_h * m.rating_mva).collect(),
        bus_ids: sim.case().buses().iter().map(|b| b.id).collect(),
        ..DynamicTrace::default()
    };
    let mut run = Runner {
        sim,
        monitor: Monitor::new(options.thresholds),
        trace,
        collapsed_at: None,
    };
    let events = schedule.events();
    let mut next = 0usize;

    run.sample();
    let mut k = 0usize;
    loop {
        while next < events.len() && events[next].time <= run.sim.state().time + eps && !run.halted() {
            let ev = &events[next];
            run.apply(ev.time, &ev.action);
            next += 1;
        }
        run.observe();
        if run.halted() || k >= steps {
            break;
        }
        let target = ((k + 1) as f64 * dt).min(t_end);
        // Land exactly on event times inside the step.
        while next < events.len()
            && events[next].time < target - eps
            && events[next].time > run.sim.state().time + eps
        {
            let h = events[next].time - run.sim.state().time;
            run.advance(h);
            if run.halted() {
                break;
            }
            while next < events.len() && events[next].time <= run.sim.state().time + eps {
                let ev = &events[next];
                run.apply(ev.time, &ev.action);
                next += 1;
            }
            run.observe();
            if run.halted() {
                break;
            }
        }
        if run.halted() {
            break;
        }
        let h = target - run.sim.state().time;
        run.advance(h);
        k += 1;
        if k % decimation == 0 {
            run.sample();
        }
    }
    if run.trace.times.last() != Some(&run.sim.state().time) {
        run.sample();
    }

    let halt_cause = match (&run.collapsed_at, &run.monitor.transient) {
        (Some(t), _) => Some(format!("network collapse at {t:.2} s")),
        (None, Some((t, _))) => Some(format!("halted: transient instability at {t:.2} s")),
        _ => None,
    };
    for ev in &events[next..] {
        run.trace.events.push(EventRecord {
            time: ev.time,
            action: ev.action.clone(),
            status: EventStatus::Skipped(
                halt_cause
                    .clone()
                    .unwrap_or_else(|| format!("after end time {t_end} s")),
            ),
        });
    }

    let verdict = assemble_verdict(&run);
    (run.trace, verdict)
}

fn assemble_verdict(run: &Runner) -> StabilityVerdict {
    let x = &run.sim.state().machines;
    let speeds = run.sim.island_speeds(x);
    let transient = run.monitor.transient.as_ref();
    let islands: Vec<IslandVerdict> = run
        .sim
        .islands()
        .iter()
        .zip(&speeds)
        .map(|(isl, w)| {
            let in_transient = transient
                .is_some_and(|(_, set)| isl.buses.iter().any(|b| set.binary_search(b).is_ok()));
            let freq = run.monitor.is_frequency_flagged(&isl.buses);
            let (class, first) = match (in_transient, freq) {
                (true, _) => (StabilityClass::TransientUnstable, transient.map(|t| t.0)),
                (false, Some(t)) => (StabilityClass::FrequencyUnstable, Some(t)),
                _ => (StabilityClass::Stable, None),
            };
            IslandVerdict {
                buses: isl.buses.clone(),
                machines: isl.machines.len(),
                generators: isl
                    .machines
                    .iter()
                    .filter(|&&m| run.sim.models()[m].governor.is_some())
                    .count(),
                class,
                first_violation: first,
                final_frequency_hz: NOMINAL_HZ * (1.0 + w),
            }
        })
        .collect();

    let freq_first = run.monitor.frequency.iter().map(|f| f.1).reduce(f64::min);
    let (overall, first) = if let Some(t) = run.collapsed_at {
        (StabilityClass::Collapsed, Some(t))
    } else if let Some((t, _)) = transient {
        (StabilityClass::TransientUnstable, Some(*t))
    } else if let Some(t) = freq_first {
        let any_stable = islands.iter().any(|i| i.class == StabilityClass::Stable);
        if any_stable {
            (StabilityClass::IslandedMixed, Some(t))
        } else {
            (StabilityClass::FrequencyUnstable, Some(t))
        }
    } else {
        (StabilityClass::Stable, None)
    };
    StabilityVerdict {
        overall,
        islands,
        first_violation: first,
        growing_oscillation: run.monitor.growing_oscillation,
    }
}

/// Replays a recorded trace through a fresh monitor.
pub fn detect_instability(trace: &DynamicTrace, thresholds: Thresholds) -> Vec<Detection> {
    let mut monitor = Monitor::new(thresholds);
    let mut out = Vec::new();
    for (t, samples) in trace.times.iter().zip(&trace.islands) {
        let obs: Vec<IslandObservation<'_>> = samples
            .iter()
            .map(|s| IslandObservation {
                buses: &trace.island_sets[s.set],
                spread_deg: s.spread_deg,
                freq_hz: s.freq_hz,
            })
            .collect();
        out.extend(monitor.observe(*t, &obs));
    }
    out
}

fn machine_labels(buses: &[BusId]) -> Vec<String> {
    buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if buses.iter().filter(|&&o| o == *b).count() > 1 {
                format!("{b}_{i}")
            } else {
                b.to_string()
            }
        })
        .collect()
}

/// One row per sample: time, COI-relative angles, island frequencies per
/// machine, bus voltage magnitudes.
pub fn trace_csv(trace: &DynamicTrace) -> String {
    let labels = machine_labels(&trace.machine_buses);
    let mut out = String::from("time");
    for l in &labels {
        let _ = write!(out, ",angle_{l}");
    }
    for l in &labels {
        let _ = write!(out, ",freq_{l}");
    }
    for b in &trace.bus_ids {
        let _ = write!(out, ",v_{b}");
    }
    out.push('\n');
    for (s, t) in trace.times.iter().enumerate() {
        let _ = write!(out, "{t:.4}");
        for v in trace.angles_deg[s].iter().chain(&trace.machine_freq_hz[s]) {
            let _ = write!(out, ",{v:.6}");
        }
        for v in &trace.voltages[s] {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// `time,action,status`.
pub fn events_csv(trace: &DynamicTrace) -> String {
    let mut out = String::from("time,action,status\n");
    for ev in &trace.events {
        let status = match &ev.status {
            EventStatus::Executed { islands } => format!("executed ({islands} islands)"),
            EventStatus::Skipped(why) => format!("skipped: {why}"),
        };
        let _ = writeln!(out, "{},{},{}", ev.time, ev.action, status);
    }
    out
}
