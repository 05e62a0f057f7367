use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::SubstationId;
use crate::topology::OutageAction;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledEvent {
    pub time: f64,
    pub action: OutageAction,
}

/// Switching actions in strictly increasing time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SwitchingSchedule {
    events: Vec<ScheduledEvent>,
}

pub const DEFAULT_INTERVAL: f64 = 5.0;

impl SwitchingSchedule {
    pub fn new(events: Vec<ScheduledEvent>) -> Result<Self> {
        if let Some(first) = events.first() {
            if !(first.time >= 0.0) {
                return Err(Error::Schedule(format!(
                    "first event at {} s is before t = 0",
                    first.time
                )));
            }
        }
        for pair in events.windows(2) {
            if !(pair[1].time > pair[0].time) {
                return Err(Error::Schedule(format!(
                    "event times must increase strictly: {} then {}",
                    pair[0].time, pair[1].time
                )));
            }
        }
        Ok(SwitchingSchedule { events })
    }

    /// Places `actions` at `start`, `start + interval`, ...
    pub fn evenly_spaced(actions: Vec<OutageAction>, start: f64, interval: f64) -> Result<Self> {
        if !(interval > 0.0) {
            return Err(Error::Schedule(format!("interval {interval} must be positive")));
        }
        Self::new(
            actions
                .into_iter()
                .enumerate()
                .map(|(k, action)| ScheduledEvent {
                    time: start + k as f64 * interval,
                    action,
                })
                .collect(),
        )
    }

    pub fn events(&self) -> &[ScheduledEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Same actions, respaced at `interval` from the original first time.
    pub fn respaced(&self, interval: f64) -> Result<Self> {
        let start = self.events.first().map_or(0.0, |e| e.time);
        Self::evenly_spaced(
            self.events.iter().map(|e| e.action.clone()).collect(),
            start,
            interval,
        )
    }
}

/// Parses `t_sec open_branch FROM TO` / `t_sec remove_substation ID` lines.
pub fn parse_scenario(text: &str) -> Result<SwitchingSchedule> {
    let mut events = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: n + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let time: f64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad time `{}`", fields[0])))?;
        let num = |s: &str| -> Result<u32> { s.parse().map_err(|_| err(format!("bad id `{s}`"))) };
        let action = match (fields.get(1).copied(), fields.len()) {
            (Some("open_branch"), 4) => OutageAction::OpenBranch {
                from: num(fields[2])?,
                to: num(fields[3])?,
            },
            (Some("remove_substation"), 3) => OutageAction::RemoveSubstation(SubstationId(num(fields[2])?)),
            _ => return Err(err(format!("unrecognised event `{line}`"))),
        };
        events.push(ScheduledEvent { time, action });
    }
    SwitchingSchedule::new(events)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<SwitchingSchedule> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn write_scenario(schedule: &SwitchingSchedule) -> String {
    schedule
        .events
        .iter()
        .map(|e| format!("{} {}\n", e.time, e.action))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_event_kinds() {
        let s = parse_scenario("# attack\n0 open_branch 100 106\n5 remove_substation 7\n\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events()[0].action, OutageAction::OpenBranch { from: 100, to: 106 });
        assert_eq!(s.events()[1].action, OutageAction::RemoveSubstation(SubstationId(7)));
        assert_eq!(parse_scenario(&write_scenario(&s)).unwrap(), s);
    }

    #[test]
    fn rejects_disorder_and_garbage() {
        assert!(matches!(
            parse_scenario("5 open_branch 1 2\n5 open_branch 2 3"),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(parse_scenario("-1 open_branch 1 2"), Err(Error::Schedule(_))));
        assert!(matches!(
            parse_scenario("0 open_branch 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_scenario("0 close 1 2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn even_spacing() {
        let s = SwitchingSchedule::evenly_spaced(
            vec![
                OutageAction::OpenBranch { from: 1, to: 2 },
                OutageAction::OpenBranch { from: 2, to: 3 },
            ],
            0.0,
            DEFAULT_INTERVAL,
        )
        .unwrap();
        assert_eq!(s.last_time(), Some(5.0));
        assert_eq!(s.respaced(15.0).unwrap().last_time(), Some(15.0));
    }
}
