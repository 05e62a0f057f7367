use crate::grid::{BusId, GridCase};

/// First-order DC-type exciter: `TA dEfd/dt = KA (Vref - Vt) - Efd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExciterModel {
    pub gain: f64,
    pub time_constant: f64,
    pub efd_min: f64,
    pub efd_max: f64,
}

impl Default for ExciterModel {
    fn default() -> Self {
        ExciterModel {
            gain: 50.0,
            time_constant: 0.05,
            efd_min: -5.0,
            efd_max: 5.0,
        }
    }
}

/// First-order droop governor and turbine lumped together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorModel {
    /// Per unit speed change for a full per unit power change.
    pub droop: f64,
    pub time_constant: f64,
    /// Mechanical power ceiling, MW.
    pub p_max: f64,
}

/// Flux-decay machine with the transient voltage behind `x'd` (`x'q = x'd`).
///
/// Reactances, damping and inertia are on the machine's own MVA rating.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    /// Index into the case generator list.
    pub generator: usize,
    pub bus: BusId,
    pub rating_mva: f64,
    pub inertia_h: f64,
    /// Damper torque per unit of speed relative to the island's inertia centre.
    pub damping_d: f64,
    pub xd: f64,
    pub xd_prime: f64,
    pub td0_prime: f64,
    pub exciter: ExciterModel,
    pub governor: Option<GovernorModel>,
}

impl MachineModel {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if self.inertia_h <= 0.0 {
            bad.push("inertia must be positive");
        }
        if self.rating_mva <= 0.0 {
            bad.push("rating must be positive");
        }
        if self.xd_prime <= 0.0 || self.xd < self.xd_prime {
            bad.push("need 0 < x'd <= xd");
        }
        if self.td0_prime <= 0.0 || self.exciter.time_constant <= 0.0 {
            bad.push("time constants must be positive");
        }
        if let Some(g) = &self.governor {
            if g.droop <= 0.0 || g.time_constant <= 0.0 {
                bad.push("governor droop and time constant must be positive");
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(format!("machine at bus {}: {}", self.bus, bad.join(", ")))
        }
    }
}

/// Default models, one per case generator. Condensers get the exciter only.
pub fn default_models(case: &GridCase) -> Vec<MachineModel> {
    case.generators()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let rating = g.mva_base.max(g.p_max).max(1.0);
            MachineModel {
                generator: i,
                bus: g.bus,
                rating_mva: rating,
                inertia_h: 5.0,
                damping_d: 2.0,
                xd: 1.8,
                xd_prime: 0.3,
                td0_prime: 6.0,
                exciter: ExciterModel::default(),
                governor: (!g.is_condenser).then_some(GovernorModel {
                    droop: 0.05,
                    time_constant: 0.5,
                    p_max: g.p_max,
                }),
            }
        })
        .collect()
}
