use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn within(self, extent: f64) -> bool {
        (0.0..=extent).contains(&self.x) && (0.0..=extent).contains(&self.y)
    }
}

/// Random-waypoint state of one mobile node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec2,
    pub target: Vec2,
    pub speed_mps: f64,
}

impl Waypoint {
    /// Moves for `dt_ms`, drawing a fresh target and speed on every arrival.
    /// Targets are drawn inside the grid, so the straight path between two
    /// in-grid points never leaves it.
    pub fn step<R: Rng>(&mut self, dt_ms: f64, extent: f64, speed: (f64, f64), rng: &mut R) {
        let mut remaining_s = dt_ms / 1000.0;
        // bounded: each iteration either finishes or consumes a full leg
        for _ in 0..10_000 {
            if remaining_s <= 0.0 || self.speed_mps <= 0.0 {
                return;
            }
            let dist = self.position.distance(self.target);
            let reach_s = dist / self.speed_mps;
            if reach_s > remaining_s {
                let f = self.speed_mps * remaining_s / dist;
                self.position.x += (self.target.x - self.position.x) * f;
                self.position.y += (self.target.y - self.position.y) * f;
                return;
            }
            self.position = self.target;
            remaining_s -= reach_s;
            self.target = Vec2::new(rng.gen_range(0.0..=extent), rng.gen_range(0.0..=extent));
            self.speed_mps = draw_speed(speed, rng);
        }
    }
}

pub fn draw_speed<R: Rng>((lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}
