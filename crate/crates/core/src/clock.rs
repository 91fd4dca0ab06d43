//! Runtime clock: scripted (advanced explicitly, deterministic) or wall.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockMode {
    Scripted,
    Wall,
}

#[derive(Debug, Clone)]
pub struct LogicalClock {
    now_ms: u64,
    mode: ClockMode,
    /// Logical milliseconds per wall millisecond; `0.0` means unpaced.
    speed: f64,
    wall_origin: Option<Instant>,
}

impl LogicalClock {
    pub fn scripted(speed: f64) -> Self {
        Self {
            now_ms: 0,
            mode: ClockMode::Scripted,
            speed: if speed.is_finite() && speed > 0.0 { speed } else { 0.0 },
            wall_origin: None,
        }
    }

    pub fn wall() -> Self {
        Self {
            now_ms: 0,
            mode: ClockMode::Wall,
            speed: 1.0,
            wall_origin: Some(Instant::now()),
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Current time. In wall mode this samples the host clock and never
    /// goes backwards.
    pub fn now_ms(&mut self) -> u64 {
        if let (ClockMode::Wall, Some(origin)) = (self.mode, self.wall_origin) {
            let elapsed = origin.elapsed().as_millis() as u64;
            self.now_ms = self.now_ms.max(elapsed);
        }
        self.now_ms
    }

    /// Advances a scripted clock. Earlier targets are ignored so time stays
    /// monotone; wall clocks ignore ticks entirely. Returns the new time.
    pub fn tick_to(&mut self, ms: u64) -> u64 {
        if self.mode == ClockMode::Scripted {
            self.now_ms = self.now_ms.max(ms);
        }
        self.now_ms()
    }

    /// Wall time a scripted clock needs to cover `from..to` logical ms at
    /// its speed. Wall clocks always run at real time.
    pub fn pacing(&self, from_ms: u64, to_ms: u64) -> Duration {
        let logical = to_ms.saturating_sub(from_ms) as f64;
        match self.mode {
            ClockMode::Wall => Duration::from_millis(logical as u64),
            ClockMode::Scripted if self.speed == 0.0 => Duration::ZERO,
            ClockMode::Scripted => Duration::from_secs_f64(logical / self.speed / 1000.0),
        }
    }
}
