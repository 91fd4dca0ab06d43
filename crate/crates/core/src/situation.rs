//! Scenario-level classification: what the user is doing and what the plant
//! needs.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::event::{Activity, Label};
use crate::pomodoro::PomodoroState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserMode {
    Working,
    Break,
    Away,
}

impl UserMode {
    pub fn name(self) -> &'static str {
        match self {
            UserMode::Working => "Working",
            UserMode::Break => "Break",
            UserMode::Away => "Away",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlantAlert {
    NeedsWater,
    NeedsLight,
}

impl PlantAlert {
    pub fn state_name(self) -> &'static str {
        match self {
            PlantAlert::NeedsWater => "NeedsWater",
            PlantAlert::NeedsLight => "NeedsLight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SituationSet {
    pub zone: Label,
    pub user_mode: UserMode,
    pub plant_alerts: BTreeSet<PlantAlert>,
}

impl fmt::Display for SituationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.user_mode.name())?;
        for a in &self.plant_alerts {
            write!(f, "+{}", a.state_name())?;
        }
        Ok(())
    }
}

/// Latest known values for one zone. `None` means nothing was observed yet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZoneObservations {
    pub presence: Option<bool>,
    pub activity: Option<Activity>,
    /// Current states of the zone's agents.
    pub agent_states: Vec<String>,
}

/// Away without presence; otherwise Break when the timer is not in a running
/// Work phase or the user is not working; otherwise Working. Plant alerts
/// come from agent states and are independent of the user mode.
pub fn classify_situation(zone: &Label, obs: &ZoneObservations, pomodoro: &PomodoroState) -> SituationSet {
    let presence = obs.presence.unwrap_or(false);
    let activity = obs.activity.unwrap_or(Activity::Away);
    let user_mode = if !presence {
        UserMode::Away
    } else if !pomodoro.is_working() || activity != Activity::Working {
        UserMode::Break
    } else {
        UserMode::Working
    };
    let plant_alerts = [PlantAlert::NeedsWater, PlantAlert::NeedsLight]
        .into_iter()
        .filter(|a| obs.agent_states.iter().any(|s| s == a.state_name()))
        .collect();
    SituationSet {
        zone: zone.clone(),
        user_mode,
        plant_alerts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomodoro::Phase;

    fn zone() -> Label {
        Label::new("desk1").unwrap()
    }

    fn obs(presence: bool, activity: Activity, plant: &str) -> ZoneObservations {
        ZoneObservations {
            presence: Some(presence),
            activity: Some(activity),
            agent_states: vec![plant.to_owned(), "Focus".to_owned()],
        }
    }

    const WORK: PomodoroState = PomodoroState::Running { phase: Phase::Work, started_ms: 0 };
    const BREAK: PomodoroState = PomodoroState::Running { phase: Phase::Break, started_ms: 0 };

    #[test]
    fn working() {
        let s = classify_situation(&zone(), &obs(true, Activity::Working, "Thriving"), &WORK);
        assert_eq!(s.user_mode, UserMode::Working);
        assert!(s.plant_alerts.is_empty());
    }

    #[test]
    fn away_with_water_alert() {
        let s = classify_situation(&zone(), &obs(false, Activity::Working, "NeedsWater"), &WORK);
        assert_eq!(s.user_mode, UserMode::Away);
        assert_eq!(s.plant_alerts, [PlantAlert::NeedsWater].into());
        assert_eq!(s.to_string(), "Away+NeedsWater");
    }

    #[test]
    fn pomodoro_break_outranks_activity() {
        let s = classify_situation(&zone(), &obs(true, Activity::Working, "Thriving"), &BREAK);
        assert_eq!(s.user_mode, UserMode::Break);
    }

    #[test]
    fn all_missing_defaults() {
        let s = classify_situation(&zone(), &ZoneObservations::default(), &WORK);
        assert_eq!(s.user_mode, UserMode::Away);
        assert!(s.plant_alerts.is_empty());
    }

    #[test]
    fn paused_counts_as_break() {
        let paused = PomodoroState::PausedAtBoundary { finished: Phase::Work, since_ms: 0 };
        let s = classify_situation(&zone(), &obs(true, Activity::Working, "Healthy"), &paused);
        assert_eq!(s.user_mode, UserMode::Break);
    }
}
