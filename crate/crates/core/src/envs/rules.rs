use super::StepInfo;
use crate::replay::Branch;

/// Deterministic total map from a state (plus environment info) to a branch.
pub trait InhibitionRule {
    fn classify(&self, obs: &[f64], info: &StepInfo) -> Branch;
}

impl<T: InhibitionRule + ?Sized> InhibitionRule for Box<T> {
    fn classify(&self, obs: &[f64], info: &StepInfo) -> Branch {
        (**self).classify(obs, info)
    }
}

fn branch(inhibit: bool) -> Branch {
    if inhibit {
        Branch::I
    } else {
        Branch::R
    }
}

/// Lander rule: inhibit while above the bomb and within 0.3 of its center.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProximityBombRule;

impl InhibitionRule for ProximityBombRule {
    fn classify(&self, obs: &[f64], info: &StepInfo) -> Branch {
        let Some((xb, yb)) = info.bomb_center.filter(|_| info.bomb_present) else {
            return Branch::R;
        };
        let (x, y) = (obs[0], obs[1]);
        branch(proximity_inhibits(y, yb, (x - xb).hypot(y - yb)))
    }
}

/// Predicate behind [`ProximityBombRule`] on altitude, bomb altitude and bomb distance.
pub fn proximity_inhibits(y: f64, y_b: f64, d_b: f64) -> bool {
    y > y_b && d_b < 0.3
}

/// Wider lander rule: inhibit while above the bomb and within 0.2 horizontally.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConservativeBombRule;

impl InhibitionRule for ConservativeBombRule {
    fn classify(&self, obs: &[f64], info: &StepInfo) -> Branch {
        let Some((xb, yb)) = info.bomb_center.filter(|_| info.bomb_present) else {
            return Branch::R;
        };
        branch((obs[0] - xb).abs() < 0.2 && obs[1] > yb)
    }
}

/// Stop-go rule: inhibit while the stop zone is up.
#[derive(Clone, Copy, Debug, Default)]
pub struct StopZoneRule;

impl InhibitionRule for StopZoneRule {
    fn classify(&self, _obs: &[f64], info: &StepInfo) -> Branch {
        branch(info.bomb_present)
    }
}

/// Runner rule: inhibit while the trailing reward window is negative.
#[derive(Clone, Copy, Debug, Default)]
pub struct StuckRule;

impl InhibitionRule for StuckRule {
    fn classify(&self, _obs: &[f64], info: &StepInfo) -> Branch {
        branch(info.stuck)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NeverInhibit;

impl InhibitionRule for NeverInhibit {
    fn classify(&self, _obs: &[f64], _info: &StepInfo) -> Branch {
        Branch::R
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bomb(xb: f64, yb: f64) -> StepInfo {
        StepInfo {
            bomb_present: true,
            bomb_center: Some((xb, yb)),
            ..Default::default()
        }
    }

    #[test]
    fn proximity_rule_cases() {
        let r = ProximityBombRule;
        assert!(proximity_inhibits(1.0, 0.3, 0.2));
        assert!(!proximity_inhibits(0.2, 0.3, 0.1));
        let info = bomb(0.0, 0.3);
        let obs = [0.16, 0.42, 0.0, 0.0];
        assert!(((0.16f64).hypot(0.12) - 0.2).abs() < 1e-12);
        assert_eq!(r.classify(&obs, &info), Branch::I);
        assert_eq!(r.classify(&[0.0, 0.2, 0.0], &info), Branch::R);
        assert_eq!(r.classify(&[0.0, 0.35, 0.0], &StepInfo::default()), Branch::R);
        assert_eq!(r.classify(&[0.5, 0.35, 0.0], &info), Branch::R);
    }

    #[test]
    fn conservative_rule_cases() {
        let r = ConservativeBombRule;
        let info = bomb(0.1, 0.3);
        assert_eq!(r.classify(&[0.2, 1.0], &info), Branch::I);
        assert_eq!(r.classify(&[0.35, 1.0], &info), Branch::R);
        assert_eq!(r.classify(&[0.1, 0.2], &info), Branch::R);
    }

    #[test]
    fn flag_rules() {
        let stuck = StepInfo {
            stuck: true,
            ..Default::default()
        };
        assert_eq!(StuckRule.classify(&[], &stuck), Branch::I);
        assert_eq!(StuckRule.classify(&[], &StepInfo::default()), Branch::R);
        assert_eq!(StopZoneRule.classify(&[], &bomb(0.6, 0.0)), Branch::I);
        assert_eq!(NeverInhibit.classify(&[], &bomb(0.0, 0.0)), Branch::R);
    }
}
