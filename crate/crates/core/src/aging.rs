//! Transformer insulation aging under overload, and switching-operation wear.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dynamics::DynamicTrace;
use crate::error::{Error, Result};
use crate::topology::OutageAction;

/// Hot-spot temperature at which insulation ages at the normal rate, °C.
pub const REFERENCE_HOTSPOT_C: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerRating {
    pub rated_mva: f64,
    pub normal_life_hours: f64,
    pub reference_hotspot_c: f64,
    pub ambient_c: f64,
}

impl TransformerRating {
    pub fn new(rated_mva: f64) -> Self {
        TransformerRating {
            rated_mva,
            normal_life_hours: 180_000.0,
            reference_hotspot_c: REFERENCE_HOTSPOT_C,
            ambient_c: 30.0,
        }
    }
}

/// Aging acceleration factor relative to operation at 110 °C hot spot.
pub fn aging_acceleration(hotspot_c: f64) -> f64 {
    (15000.0 / 383.0 - 15000.0 / (hotspot_c + 273.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverloadClass {
    Normal,
    LongTermEmergency,
    ShortTermEmergency,
    OutOfStandard,
}

impl OverloadClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OverloadClass::Normal => "normal",
            OverloadClass::LongTermEmergency => "long_term_emergency",
            OverloadClass::ShortTermEmergency => "short_term_emergency",
            OverloadClass::OutOfStandard => "out_of_standard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverloadEpisode {
    /// Load over rating; 1.6 is 160 %.
    pub loading: f64,
    pub hotspot_c: f64,
    pub duration_h: f64,
}

impl OverloadEpisode {
    pub fn class(&self) -> OverloadClass {
        classify_overload(self)
    }
}

pub fn classify_overload(ep: &OverloadEpisode) -> OverloadClass {
    if ep.loading <= 1.0 && ep.hotspot_c <= REFERENCE_HOTSPOT_C {
        OverloadClass::Normal
    } else if ep.loading <= 2.0 && ep.duration_h <= 0.5 && ep.hotspot_c <= 180.0 {
        OverloadClass::ShortTermEmergency
    } else if (120.0..=140.0).contains(&ep.hotspot_c) {
        OverloadClass::LongTermEmergency
    } else {
        OverloadClass::OutOfStandard
    }
}

/// Insulation life consumed by `ep`, percent of normal life.
pub fn loss_of_life(ep: &OverloadEpisode, rating: &TransformerRating) -> f64 {
    100.0 * aging_acceleration(ep.hotspot_c) * ep.duration_h / rating.normal_life_hours
}

/// Loading fraction of each unit when `total_mva` is shared by the units not
/// listed in `out_of_service`, in proportion to their ratings (equal shares
/// for identical units). Tripped units carry 0.
pub fn parallel_overload(
    total_mva: f64,
    ratings_mva: &[f64],
    out_of_service: &[usize],
) -> Result<Vec<f64>> {
    let in_service = |i: usize| !out_of_service.contains(&i);
    let capacity: f64 = (0..ratings_mva.len())
        .filter(|&i| in_service(i))
        .map(|i| ratings_mva[i])
        .sum();
    if capacity <= 0.0 {
        return Err(Error::AllUnitsOut);
    }
    let loading = total_mva / capacity;
    Ok((0..ratings_mva.len())
        .map(|i| if in_service(i) { loading } else { 0.0 })
        .collect())
}

/// Piecewise-linear map from loading fraction to hot-spot temperature,
/// extrapolated beyond the end points.
#[derive(Debug, Clone, PartialEq)]
pub struct HotspotLookup {
    points: Vec<(f64, f64)>,
}

impl Default for HotspotLookup {
    fn default() -> Self {
        HotspotLookup {
            points: vec![(1.0, REFERENCE_HOTSPOT_C), (1.6, 160.0)],
        }
    }
}

impl HotspotLookup {
    /// At least two points with distinct loadings.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|a, b| a.0 == b.0);
        if points.len() < 2 {
            return Err(Error::Invalid(vec![
                "hot-spot lookup needs two distinct loading points".into(),
            ]));
        }
        Ok(HotspotLookup { points })
    }

    pub fn hotspot(&self, loading: f64) -> f64 {
        let p = &self.points;
        let k = p
            .windows(2)
            .position(|w| loading <= w[1].0)
            .unwrap_or(p.len() - 2);
        let ((x0, y0), (x1, y1)) = (p[k], p[k + 1]);
        y0 + (y1 - y0) * (loading - x0) / (x1 - x0)
    }

    pub fn episode(&self, loading: f64, duration_h: f64) -> OverloadEpisode {
        OverloadEpisode {
            loading,
            hotspot_c: self.hotspot(loading),
            duration_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceCount {
    pub operations: u64,
    pub threshold: u64,
    pub flagged: bool,
}

/// Operation counts of breakers and isolators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwitchStressLedger {
    devices: BTreeMap<String, DeviceCount>,
}

impl SwitchStressLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, device: impl Into<String>, threshold: u64) {
        self.devices.entry(device.into()).or_insert(DeviceCount {
            operations: 0,
            threshold,
            flagged: false,
        });
    }

    pub fn get(&self, device: &str) -> Option<&DeviceCount> {
        self.devices.get(device)
    }

    pub fn devices(&self) -> impl Iterator<Item = (&str, &DeviceCount)> {
        self.devices.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn flagged(&self) -> Vec<&str> {
        self.devices()
            .filter(|(_, d)| d.flagged)
            .map(|(k, _)| k)
            .collect()
    }

    /// Adds `count` operations; returns whether the device is now flagged.
    pub fn record_switch_operation(&mut self, device: &str, count: u64) -> Result<bool> {
        let d = self
            .devices
            .get_mut(device)
            .ok_or_else(|| Error::UnknownDevice(device.to_string()))?;
        d.operations = d.operations.saturating_add(count);
        d.flagged = d.operations > d.threshold;
        Ok(d.flagged)
    }

    /// Counts every executed switching event of a simulation run, registering
    /// unseen devices with `threshold`.
    pub fn record_trace(&mut self, trace: &DynamicTrace, threshold: u64) {
        for ev in trace.events.iter().filter(|e| e.executed()) {
            let name = device_name(&ev.action);
            self.register(name.clone(), threshold);
            self.record_switch_operation(&name, 1)
                .expect("device registered above");
        }
    }
}

/// Ledger key for the equipment an action operates.
pub fn device_name(action: &OutageAction) -> String {
    match action {
        OutageAction::OpenBranch { from, to } => {
            format!("branch {}-{}", from.min(to), from.max(to))
        }
        OutageAction::RemoveSubstation(id) => format!("substation {id}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgingRow {
    pub device: String,
    pub episode: OverloadEpisode,
    pub rating: TransformerRating,
}

/// `device,class,f_aa,percent_loss`.
pub fn aging_csv(rows: &[AgingRow]) -> String {
    let mut out = String::from("device,class,f_aa,percent_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.6}",
            r.device,
            r.episode.class().as_str(),
            aging_acceleration(r.episode.hotspot_c),
            loss_of_life(&r.episode, &r.rating)
        );
    }
    out
}
