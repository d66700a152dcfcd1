//! Reward shapers shared by the environments and the training harness.

/// Field-type bomb avoidance penalty `−1e4 (d_b − 0.3)^4`, for `d_b` the
/// Euclidean distance to the bomb center. Meant for inhibitory states only.
pub fn bomb_proxy_shaping(d_b: f64) -> f64 {
    -1e4 * (d_b - 0.3).powi(4)
}

/// Kinematic quantities the conservative shaper reads.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LanderKinematics {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub angle: f64,
    pub v_angle: f64,
}

/// Components of the conservative inhibitory reward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservativeTerms {
    pub r_x: f64,
    pub r_y: f64,
    pub r_angle: f64,
    pub r_vel: f64,
}

impl ConservativeTerms {
    pub fn total(&self) -> f64 {
        self.r_x + self.r_y + self.r_angle + self.r_vel
    }
}

pub fn conservative_terms(k: &LanderKinematics, bomb_center: (f64, f64)) -> ConservativeTerms {
    let d_x = (k.x - bomb_center.0).abs();
    let d_y = (k.y - bomb_center.1).abs();
    ConservativeTerms {
        r_x: -1.0 / (6.0 * d_x + 0.1) + 0.77,
        r_y: -3.0 * (d_y - 0.05).powi(2),
        r_angle: -k.angle * k.angle,
        r_vel: -2.0 * (k.vx * k.vx + k.vy * k.vy + k.v_angle * k.v_angle),
    }
}

/// `r_x + r_y + r_angle + r_vel` relative to the bomb center.
pub fn conservative_shaping(k: &LanderKinematics, bomb_center: (f64, f64)) -> f64 {
    conservative_terms(k, bomb_center).total()
}

pub const STUCK_WINDOW: usize = 6;

/// Sum of the six most recent raw rewards when negative, else zero.
pub fn stuck_reward(recent: &[f64; STUCK_WINDOW]) -> f64 {
    let s: f64 = recent.iter().sum();
    if s < 0.0 {
        s
    } else {
        0.0
    }
}

/// Trailing reward window, zero-padded at episode start and kept oldest
/// first, so its sum runs in chronological order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StuckWindow {
    buf: [f64; STUCK_WINDOW],
}

impl StuckWindow {
    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn push(&mut self, r: f64) {
        self.buf.rotate_left(1);
        self.buf[STUCK_WINDOW - 1] = r;
    }

    pub fn values(&self) -> &[f64; STUCK_WINDOW] {
        &self.buf
    }

    pub fn stuck_reward(&self) -> f64 {
        stuck_reward(&self.buf)
    }
}

/// Penalty for approaching a stop zone at speed: proportional to forward
/// velocity once within `reach` of the zone edge.
pub fn zone_approach_shaping(distance_to_zone: f64, velocity: f64, reach: f64) -> f64 {
    if distance_to_zone >= reach || velocity <= 0.0 {
        return 0.0;
    }
    let closeness = (reach - distance_to_zone.max(0.0)) / reach;
    -10.0 * velocity * closeness
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proxy_values() {
        assert_eq!(bomb_proxy_shaping(0.3), 0.0);
        assert!((bomb_proxy_shaping(0.2) + 1.0).abs() < 1e-9);
        assert!((bomb_proxy_shaping(0.0) + 81.0).abs() < 1e-9);
    }

    #[test]
    fn conservative_values() {
        let at = |x: f64| LanderKinematics {
            x,
            y: 0.55,
            ..Default::default()
        };
        let t = conservative_terms(&at(0.0), (0.0, 0.5));
        assert!((t.r_x + 9.23).abs() < 1e-12);
        assert!((t.r_y + t.r_angle + t.r_vel).abs() < 1e-12);
        let t = conservative_terms(&at(0.1), (0.0, 0.5));
        assert!((t.r_x - (-1.0 / 0.7 + 0.77)).abs() < 1e-12);
        assert!((t.r_x + 0.6586).abs() < 1e-4);
    }

    #[test]
    fn stuck_values() {
        assert!((stuck_reward(&[-0.1; 6]) + 0.6).abs() < 1e-12);
        assert_eq!(stuck_reward(&[0.1, 0.1, 0.1, 0.0, 0.0, 0.0]), 0.0);
        assert!((stuck_reward(&[0.0, 0.0, 0.0, 0.0, 0.0, -0.2]) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn window_slides() {
        let mut w = StuckWindow::default();
        for _ in 0..5 {
            w.push(-0.1);
        }
        assert!((w.stuck_reward() + 0.5).abs() < 1e-12);
        w.push(-0.1);
        w.push(1.0);
        assert!((w.stuck_reward() - 0.0).abs() < 1e-12);
        w.clear();
        assert_eq!(w.stuck_reward(), 0.0);
    }

    #[test]
    fn approach_shaping_only_near_and_forward() {
        assert_eq!(zone_approach_shaping(0.5, 1.0, 0.3), 0.0);
        assert_eq!(zone_approach_shaping(0.1, -0.5, 0.3), 0.0);
        assert!(zone_approach_shaping(0.0, 1.0, 0.3) < zone_approach_shaping(0.2, 1.0, 0.3));
    }
}
