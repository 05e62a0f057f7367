use std::collections::HashMap;

use crate::grid::BusId;

use super::sim::NOMINAL_HZ;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Largest tolerated rotor-angle spread within one island, degrees.
    pub angle_separation_deg: f64,
    /// Half-width of the tolerated band around nominal frequency, Hz.
    pub freq_band_hz: f64,
    /// How long a frequency excursion must last to count, s.
    pub dwell_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            angle_separation_deg: 360.0,
            freq_band_hz: 2.5,
            dwell_s: 1.0,
        }
    }
}

/// What a monitor observes of one island at one instant.
#[derive(Debug, Clone, Copy)]
pub struct IslandObservation<'a> {
    pub buses: &'a [BusId],
    pub spread_deg: f64,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detection {
    Transient { time: f64, island: Vec<BusId> },
    Frequency { time: f64, island: Vec<BusId> },
}

/// Streaming instability detector.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    thresholds: Thresholds,
    out_since: HashMap<Vec<BusId>, f64>,
    pub transient: Option<(f64, Vec<BusId>)>,
    /// Islands whose frequency left the band for at least the dwell time.
    pub frequency: Vec<(Vec<BusId>, f64)>,
    recent: [f64; 2],
    seen: usize,
    peaks: Vec<f64>,
    pub growing_oscillation: bool,
}

const PEAK_MARGIN_DEG: f64 = 1e-3;

impl Monitor {
    pub fn new(thresholds: Thresholds) -> Self {
        Monitor {
            thresholds,
            ..Monitor::default()
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn is_frequency_flagged(&self, island: &[BusId]) -> Option<f64> {
        self.frequency
            .iter()
            .find(|(set, _)| island.iter().all(|b| set.binary_search(b).is_ok()))
            .map(|&(_, t)| t)
    }

    /// Feeds one instant; returns detections that fired now.
    pub fn observe(&mut self, time: f64, islands: &[IslandObservation<'_>]) -> Vec<Detection> {
        let mut fired = Vec::new();
        self.out_since
            .retain(|set, _| islands.iter().any(|o| o.buses == set.as_slice()));
        for obs in islands {
            if self.transient.is_none() && obs.spread_deg > self.thresholds.angle_separation_deg {
                self.transient = Some((time, obs.buses.to_vec()));
                fired.push(Detection::Transient {
                    time,
                    island: obs.buses.to_vec(),
                });
            }
            let outside = (obs.freq_hz - NOMINAL_HZ).abs() > self.thresholds.freq_band_hz
                || !obs.freq_hz.is_finite();
            if !outside {
                self.out_since.remove(obs.buses);
                continue;
            }
            let since = *self.out_since.entry(obs.buses.to_vec()).or_insert(time);
            if time - since >= self.thresholds.dwell_s - 1e-9
                && self.is_frequency_flagged(obs.buses).is_none()
            {
                self.frequency.push((obs.buses.to_vec(), time));
                fired.push(Detection::Frequency {
                    time,
                    island: obs.buses.to_vec(),
                });
            }
        }
        let spread = islands.iter().map(|o| o.spread_deg).fold(0.0, f64::max);
        self.track_peaks(spread);
        fired
    }

    fn track_peaks(&mut self, x: f64) {
        let [a, b] = self.recent;
        if self.seen >= 2 && b > a && b >= x {
            if self.peaks.last().is_some_and(|&p| b <= p + PEAK_MARGIN_DEG) {
                self.peaks.clear();
            }
            self.peaks.push(b);
            // Three successive increases.
            if self.peaks.len() >= 4 {
                self.growing_oscillation = true;
            }
        }
        self.recent = [b, x];
        self.seen += 1;
    }
}
