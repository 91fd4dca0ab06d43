//! Work/break timebox cycle on the logical clock.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PomodoroConfig {
    pub work_duration_ms: u64,
    pub break_duration_ms: u64,
    pub auto_advance: bool,
}

impl Default for PomodoroConfig {
    fn default() -> Self {
        Self {
            work_duration_ms: 25 * 60 * 1000,
            break_duration_ms: 5 * 60 * 1000,
            auto_advance: true,
        }
    }
}

impl PomodoroConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.work_duration_ms == 0 {
            return Err("work_duration_ms must be > 0");
        }
        if self.break_duration_ms == 0 {
            return Err("break_duration_ms must be > 0");
        }
        Ok(())
    }

    pub fn duration(&self, phase: Phase) -> u64 {
        match phase {
            Phase::Work => self.work_duration_ms,
            Phase::Break => self.break_duration_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Work,
    Break,
}

impl Phase {
    pub fn next(self) -> Phase {
        match self {
            Phase::Work => Phase::Break,
            Phase::Break => Phase::Work,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PomodoroState {
    Running { phase: Phase, started_ms: u64 },
    /// Stopped at the end of `finished`; waits for a resume command.
    PausedAtBoundary { finished: Phase, since_ms: u64 },
}

impl PomodoroState {
    pub fn start(now: u64) -> Self {
        PomodoroState::Running {
            phase: Phase::Work,
            started_ms: now,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PomodoroState::Running { phase: Phase::Work, .. } => "Work",
            PomodoroState::Running { phase: Phase::Break, .. } => "Break",
            PomodoroState::PausedAtBoundary { .. } => "PausedAtBoundary",
        }
    }

    /// True only while a Work phase is running.
    pub fn is_working(&self) -> bool {
        matches!(self, PomodoroState::Running { phase: Phase::Work, .. })
    }

    pub fn phase_started_ms(&self) -> u64 {
        match *self {
            PomodoroState::Running { started_ms, .. } => started_ms,
            PomodoroState::PausedAtBoundary { since_ms, .. } => since_ms,
        }
    }

    pub fn phase_ends_ms(&self, cfg: &PomodoroConfig) -> Option<u64> {
        match *self {
            PomodoroState::Running { phase, started_ms } => Some(started_ms + cfg.duration(phase)),
            PomodoroState::PausedAtBoundary { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseChange {
    pub at_ms: u64,
    pub from: PomodoroState,
    pub to: PomodoroState,
}

/// Advances the cycle to `now`, returning the new state and every boundary
/// crossed on the way, each stamped with its exact boundary time.
pub fn pomodoro_tick(cfg: &PomodoroConfig, state: PomodoroState, now: u64) -> (PomodoroState, Vec<PhaseChange>) {
    let mut state = state;
    let mut changes = Vec::new();
    while let PomodoroState::Running { phase, started_ms } = state {
        let boundary = started_ms + cfg.duration(phase);
        if now < boundary {
            break;
        }
        let next = if cfg.auto_advance {
            PomodoroState::Running {
                phase: phase.next(),
                started_ms: boundary,
            }
        } else {
            PomodoroState::PausedAtBoundary {
                finished: phase,
                since_ms: boundary,
            }
        };
        changes.push(PhaseChange {
            at_ms: boundary,
            from: state,
            to: next,
        });
        state = next;
    }
    (state, changes)
}

/// Handles a resume command; only a paused cycle reacts.
pub fn pomodoro_resume(state: PomodoroState, now: u64) -> Option<PhaseChange> {
    match state {
        PomodoroState::PausedAtBoundary { finished, .. } => Some(PhaseChange {
            at_ms: now,
            from: state,
            to: PomodoroState::Running {
                phase: finished.next(),
                started_ms: now,
            },
        }),
        PomodoroState::Running { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn work_boundary_is_exact() {
        let cfg = PomodoroConfig::default();
        let s0 = PomodoroState::start(0);
        let (s, ch) = pomodoro_tick(&cfg, s0, 1_499_999);
        assert!(ch.is_empty());
        assert_eq!(s.label(), "Work");
        let (s, ch) = pomodoro_tick(&cfg, s, 1_500_000);
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].at_ms, 1_500_000);
        assert_eq!(s, PomodoroState::Running { phase: Phase::Break, started_ms: 1_500_000 });
    }

    #[test]
    fn break_auto_advances_to_work() {
        let cfg = PomodoroConfig::default();
        let (s, ch) = pomodoro_tick(&cfg, PomodoroState::start(0), 1_800_000);
        assert_eq!(ch.iter().map(|c| c.at_ms).collect::<Vec<_>>(), vec![1_500_000, 1_800_000]);
        assert_eq!(s, PomodoroState::Running { phase: Phase::Work, started_ms: 1_800_000 });
    }

    #[test]
    fn long_jump_crosses_every_boundary() {
        let cfg = PomodoroConfig { work_duration_ms: 10, break_duration_ms: 5, auto_advance: true };
        let (_, ch) = pomodoro_tick(&cfg, PomodoroState::start(0), 46);
        assert_eq!(ch.iter().map(|c| c.at_ms).collect::<Vec<_>>(), vec![10, 15, 25, 30, 40, 45]);
    }

    #[test]
    fn manual_advance_pauses_until_resume() {
        let cfg = PomodoroConfig { auto_advance: false, ..Default::default() };
        let (s, ch) = pomodoro_tick(&cfg, PomodoroState::start(0), 10_000_000);
        assert_eq!(ch.len(), 1);
        assert_eq!(s, PomodoroState::PausedAtBoundary { finished: Phase::Work, since_ms: 1_500_000 });
        assert!(!s.is_working());
        let resumed = pomodoro_resume(s, 10_000_000).unwrap();
        assert_eq!(resumed.to, PomodoroState::Running { phase: Phase::Break, started_ms: 10_000_000 });
        assert!(pomodoro_resume(resumed.to, 10_000_001).is_none());
    }

    #[test]
    fn config_validation() {
        assert!(PomodoroConfig { work_duration_ms: 0, ..Default::default() }.validate().is_err());
        assert!(PomodoroConfig { break_duration_ms: 0, ..Default::default() }.validate().is_err());
        assert!(PomodoroConfig::default().validate().is_ok());
    }
}
