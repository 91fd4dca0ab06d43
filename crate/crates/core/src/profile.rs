//! Placement of an agent on the mixed-reality agent cube: agency, corporeal
//! presence and interactive capacity.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agency {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgencyTrait {
    Autonomy,
    SocialAbility,
    Reactivity,
    Proactivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "FSM")]
    Fsm,
    Fuzzy,
    Deliberative,
}

impl ControllerKind {
    /// Agency class implied by the controller: reactive controllers are weak,
    /// deliberative ones strong.
    pub fn implied_agency(self) -> Agency {
        match self {
            ControllerKind::Fsm | ControllerKind::Fuzzy => Agency::Weak,
            ControllerKind::Deliberative => Agency::Strong,
        }
    }
}

/// A virtual/physical coordinate pair, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embodiment {
    #[serde(rename = "virtual")]
    pub virtual_part: f64,
    pub physical: f64,
}

impl Embodiment {
    pub const fn new(virtual_part: f64, physical: f64) -> Self {
        Self {
            virtual_part,
            physical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiraProfile {
    pub agency: Agency,
    #[serde(default)]
    pub agency_traits: BTreeSet<AgencyTrait>,
    pub corporeal_presence: Embodiment,
    pub interactive_capacity: Embodiment,
    pub controller_kind: ControllerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileViolation {
    AgencyControllerMismatch {
        agency: Agency,
        controller: ControllerKind,
    },
    CoordinateOutOfRange {
        axis: &'static str,
        value: f64,
    },
    Unembodied,
}

impl fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileViolation::AgencyControllerMismatch { agency, controller } => write!(
                f,
                "{agency:?} agency cannot use a {controller:?} controller (expected {:?})",
                controller.implied_agency()
            ),
            ProfileViolation::CoordinateOutOfRange { axis, value } => {
                write!(f, "{axis} = {value} is outside [0, 1]")
            }
            ProfileViolation::Unembodied => {
                f.write_str("corporeal presence is zero on both the virtual and physical axis")
            }
        }
    }
}

/// Returns every violated profile invariant; empty iff the profile is valid.
pub fn profile_violations(p: &MiraProfile) -> Vec<ProfileViolation> {
    let mut out = Vec::new();
    if p.controller_kind.implied_agency() != p.agency {
        out.push(ProfileViolation::AgencyControllerMismatch {
            agency: p.agency,
            controller: p.controller_kind,
        });
    }
    let coords = [
        ("corporeal_presence.virtual", p.corporeal_presence.virtual_part),
        ("corporeal_presence.physical", p.corporeal_presence.physical),
        ("interactive_capacity.virtual", p.interactive_capacity.virtual_part),
        ("interactive_capacity.physical", p.interactive_capacity.physical),
    ];
    for (axis, value) in coords {
        if !(0.0..=1.0).contains(&value) {
            out.push(ProfileViolation::CoordinateOutOfRange { axis, value });
        }
    }
    let cp = p.corporeal_presence;
    // NaN coordinates are already reported above; `!(x > 0)` keeps them here too.
    if !(cp.virtual_part + cp.physical > 0.0) {
        out.push(ProfileViolation::Unembodied);
    }
    out
}

pub fn validate_profile(p: &MiraProfile) -> Result<(), Vec<ProfileViolation>> {
    let v = profile_violations(p);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plant() -> MiraProfile {
        MiraProfile {
            agency: Agency::Weak,
            agency_traits: [AgencyTrait::Reactivity].into(),
            corporeal_presence: Embodiment::new(0.9, 0.6),
            interactive_capacity: Embodiment::new(0.8, 0.1),
            controller_kind: ControllerKind::Fsm,
        }
    }

    #[test]
    fn plant_avatar_profile_is_valid() {
        assert_eq!(validate_profile(&plant()), Ok(()));
    }

    #[test]
    fn strong_agency_with_fsm_is_rejected() {
        let p = MiraProfile {
            agency: Agency::Strong,
            ..plant()
        };
        assert_eq!(
            profile_violations(&p),
            vec![ProfileViolation::AgencyControllerMismatch {
                agency: Agency::Strong,
                controller: ControllerKind::Fsm
            }]
        );
    }

    #[test]
    fn unembodied_is_rejected() {
        let p = MiraProfile {
            corporeal_presence: Embodiment::new(0.0, 0.0),
            ..plant()
        };
        assert_eq!(profile_violations(&p), vec![ProfileViolation::Unembodied]);
    }

    #[test]
    fn reports_all_violations_at_once() {
        let p = MiraProfile {
            agency: Agency::Weak,
            agency_traits: BTreeSet::new(),
            corporeal_presence: Embodiment::new(-0.5, 0.0),
            interactive_capacity: Embodiment::new(1.5, f64::NAN),
            controller_kind: ControllerKind::Deliberative,
        };
        assert_eq!(profile_violations(&p).len(), 5);
    }

    #[test]
    fn serde_names() {
        let json = serde_json::to_string(&plant()).unwrap();
        assert!(json.contains(r#""controller_kind":"FSM""#), "{json}");
        assert!(json.contains(r#""virtual":0.9"#), "{json}");
        let back: MiraProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plant());
    }

    fn coord() -> impl Strategy<Value = f64> {
        prop_oneof![-1.0..2.0f64, Just(0.0), Just(1.0)]
    }

    proptest! {
        #[test]
        fn validator_is_total_and_idempotent(
            strong in any::<bool>(),
            controller in 0u8..3,
            cv in coord(), cp in coord(), iv in coord(), ip in coord(),
        ) {
            let p = MiraProfile {
                agency: if strong { Agency::Strong } else { Agency::Weak },
                agency_traits: BTreeSet::new(),
                corporeal_presence: Embodiment::new(cv, cp),
                interactive_capacity: Embodiment::new(iv, ip),
                controller_kind: [ControllerKind::Fsm, ControllerKind::Fuzzy, ControllerKind::Deliberative][controller as usize],
            };
            let first = profile_violations(&p);
            prop_assert_eq!(&first, &profile_violations(&p));
            let in_range = [cv, cp, iv, ip].iter().all(|c| (0.0..=1.0).contains(c));
            let paired = (controller == 2) == strong;
            let embodied = cv + cp > 0.0;
            prop_assert_eq!(first.is_empty(), in_range && paired && embodied);
        }
    }
}
