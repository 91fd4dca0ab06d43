//! The smart-workstation agents: a desk plant, the desk and the laptop.

use std::collections::BTreeSet;

use serde_json::json;
use thiserror::Error;

use crate::agent::AgentSpec;
use crate::event::Label;
use crate::profile::{Agency, AgencyTrait, ControllerKind, Embodiment, MiraProfile};

pub const PLANT_STATES: [&str; 4] = ["NeedsWater", "NeedsLight", "Healthy", "Thriving"];
pub const DESK_STATES: [&str; 4] = ["Idle", "Ready", "Focus", "BreakCue"];
pub const LAPTOP_STATES: [&str; 4] = ["Locked", "Idle", "Focus", "BreakPrompt"];

pub const DEFAULT_MOISTURE_LOW: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("moisture {0} outside [0, 1]")]
pub struct MoistureOutOfRange(pub f64);

/// How the plant avatar presents for the given context, as
/// `(state, avatar_scale, ambient_effect)`. Dry soil outranks darkness,
/// which outranks an empty desk.
pub fn plant_avatar_policy(
    light_on: bool,
    presence: bool,
    moisture: f64,
) -> Result<(&'static str, f64, bool), MoistureOutOfRange> {
    if !(0.0..=1.0).contains(&moisture) {
        return Err(MoistureOutOfRange(moisture));
    }
    Ok(if moisture < DEFAULT_MOISTURE_LOW {
        ("NeedsWater", 0.4, false)
    } else if !light_on {
        ("NeedsLight", 0.6, false)
    } else if !presence {
        ("Healthy", 0.8, false)
    } else {
        ("Thriving", 1.0, true)
    })
}

fn traits(t: &[AgencyTrait]) -> BTreeSet<AgencyTrait> {
    t.iter().copied().collect()
}

pub fn plant_profile() -> MiraProfile {
    MiraProfile {
        agency: Agency::Weak,
        agency_traits: traits(&[AgencyTrait::Reactivity]),
        corporeal_presence: Embodiment::new(0.9, 0.6),
        interactive_capacity: Embodiment::new(0.8, 0.1),
        controller_kind: ControllerKind::Fsm,
    }
}

pub fn desk_profile() -> MiraProfile {
    MiraProfile {
        agency: Agency::Weak,
        agency_traits: traits(&[AgencyTrait::Reactivity]),
        corporeal_presence: Embodiment::new(0.3, 1.0),
        interactive_capacity: Embodiment::new(0.2, 0.7),
        controller_kind: ControllerKind::Fsm,
    }
}

pub fn laptop_profile() -> MiraProfile {
    MiraProfile {
        agency: Agency::Strong,
        agency_traits: traits(&[
            AgencyTrait::Autonomy,
            AgencyTrait::Reactivity,
            AgencyTrait::Proactivity,
            AgencyTrait::SocialAbility,
        ]),
        corporeal_presence: Embodiment::new(0.6, 0.8),
        interactive_capacity: Embodiment::new(0.9, 0.3),
        controller_kind: ControllerKind::Deliberative,
    }
}

fn spec(v: serde_json::Value) -> AgentSpec {
    serde_json::from_value(v).expect("built-in spec parses")
}

/// The plant's rule table, one rule per row of [`plant_avatar_policy`].
pub fn plant_spec(zone: &Label) -> AgentSpec {
    spec(json!({
        "agent_id": "plant",
        "zone": zone,
        "profile": plant_profile(),
        "states": PLANT_STATES,
        "initial": "Healthy",
        "initial_outputs": {"avatar_scale": 0.8, "ambient_effect": false},
        "subscribes": ["Presence", "LightLevel", "Moisture"],
        "rules": [
            {"when": [{"fact": "moisture", "op": "lt", "value": DEFAULT_MOISTURE_LOW}],
             "to": "NeedsWater", "outputs": {"avatar_scale": 0.4, "ambient_effect": false}},
            {"when": [{"fact": "light_on", "op": "eq", "value": false}],
             "to": "NeedsLight", "outputs": {"avatar_scale": 0.6, "ambient_effect": false}},
            {"when": [{"fact": "presence", "op": "eq", "value": false}],
             "to": "Healthy", "outputs": {"avatar_scale": 0.8, "ambient_effect": false}},
            {"to": "Thriving", "outputs": {"avatar_scale": 1.0, "ambient_effect": true}}
        ]
    }))
}

/// The desk cues breaks with an amber light and a haptic pulse, and shows
/// green while the user is focused.
pub fn desk_spec(zone: &Label) -> AgentSpec {
    spec(json!({
        "agent_id": "desk",
        "zone": zone,
        "profile": desk_profile(),
        "states": DESK_STATES,
        "initial": "Idle",
        "initial_outputs": {"led_color": [0, 0, 0], "haptic_pulse": false},
        "subscribes": ["Presence", "Command"],
        "rules": [
            {"when": [{"fact": "presence", "op": "eq", "value": false}],
             "to": "Idle", "outputs": {"led_color": [0, 0, 0], "haptic_pulse": false}},
            {"when": [{"fact": "user_mode", "op": "eq", "value": "Working"}],
             "to": "Focus", "outputs": {"led_color": [0, 255, 0], "haptic_pulse": false}},
            {"when": [{"fact": "user_mode", "op": "eq", "value": "Break"}],
             "to": "BreakCue", "outputs": {"led_color": [255, 176, 0], "haptic_pulse": true}},
            {"to": "Ready", "outputs": {"led_color": [255, 255, 255], "haptic_pulse": false}}
        ]
    }))
}

/// The laptop locks when the user leaves, silences notifications during
/// focus and prompts for a break when one is due.
pub fn laptop_spec(zone: &Label) -> AgentSpec {
    spec(json!({
        "agent_id": "laptop",
        "zone": zone,
        "profile": laptop_profile(),
        "states": LAPTOP_STATES,
        "initial": "Locked",
        "initial_outputs": {"screen": "locked", "notifications": false},
        "subscribes": ["Presence", "Activity", "Command"],
        "rules": [
            {"when": [{"fact": "presence", "op": "eq", "value": false}],
             "to": "Locked", "outputs": {"screen": "locked", "notifications": false}},
            {"when": [{"fact": "user_mode", "op": "eq", "value": "Break"}],
             "to": "BreakPrompt", "outputs": {"screen": "break_prompt", "notifications": true}},
            {"when": [{"fact": "user_mode", "op": "eq", "value": "Working"}],
             "to": "Focus", "outputs": {"screen": "focus", "notifications": false}},
            {"to": "Idle", "outputs": {"screen": "desktop", "notifications": true}}
        ]
    }))
}

pub fn default_agents(zone: &Label) -> Vec<AgentSpec> {
    vec![plant_spec(zone), desk_spec(zone), laptop_spec(zone)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Action, AgentInstance};
    use crate::event::{ContextEvent, EventValue};
    use crate::schema::OutputValue;

    fn zone() -> Label {
        Label::new("desk1").unwrap()
    }

    fn ev(value: EventValue) -> ContextEvent {
        ContextEvent::new("desk1", "sensor", value, 0, 0).unwrap()
    }

    fn light(on: bool) -> EventValue {
        EventValue::LightLevel {
            on,
            mean_luminance: if on { 180.0 } else { 20.0 },
        }
    }

    #[test]
    fn policy_examples() {
        assert_eq!(plant_avatar_policy(true, true, 0.9), Ok(("Thriving", 1.0, true)));
        assert_eq!(plant_avatar_policy(false, false, 0.9), Ok(("NeedsLight", 0.6, false)));
        assert_eq!(plant_avatar_policy(true, true, 0.1), Ok(("NeedsWater", 0.4, false)));
        assert!(plant_avatar_policy(true, true, 1.5).is_err());
        assert!(plant_avatar_policy(true, true, f64::NAN).is_err());
    }

    #[test]
    fn policy_is_monotone_over_grid() {
        for moisture in [0.0, 0.1, 0.2499, 0.25, 0.6, 1.0] {
            for other in [false, true] {
                let scale = |l, p| plant_avatar_policy(l, p, moisture).unwrap().1;
                assert!(scale(true, other) >= scale(false, other));
                assert!(scale(other, true) >= scale(other, false));
            }
        }
    }

    #[test]
    fn plant_rules_agree_with_policy() {
        for moisture in [0.0, 0.1, 0.2499, 0.25, 0.6, 1.0] {
            for light_on in [false, true] {
                for presence in [false, true] {
                    let mut plant = AgentInstance::new(plant_spec(&zone()), 0).unwrap();
                    plant.step(&ev(EventValue::Moisture(moisture)), 0);
                    plant.step(&ev(light(light_on)), 0);
                    plant.step(&ev(EventValue::Presence(presence)), 0);
                    let (state, scale, ambient) = plant_avatar_policy(light_on, presence, moisture).unwrap();
                    assert_eq!(plant.state(), state, "{light_on} {presence} {moisture}");
                    assert_eq!(plant.outputs()["avatar_scale"], OutputValue::Number(scale));
                    assert_eq!(plant.outputs()["ambient_effect"], OutputValue::Bool(ambient));
                }
            }
        }
    }

    #[test]
    fn healthy_plant_loses_light() {
        let mut plant = AgentInstance::new(plant_spec(&zone()), 0).unwrap();
        assert_eq!(plant.state(), "Healthy");
        let out = plant.step(&ev(light(false)), 1);
        assert_eq!(out.state_after, "NeedsLight");
        assert!(matches!(&out.actions[0], Action::PublishState { state, .. } if state == "NeedsLight"));
        assert_eq!(plant.outputs()["ambient_effect"], OutputValue::Bool(false));
    }

    #[test]
    fn desk_turns_green_for_focused_user() {
        let mut desk = AgentInstance::new(desk_spec(&zone()), 0).unwrap();
        desk.step(&ev(EventValue::command("user_mode", ["Working"])), 0);
        desk.step(&ev(EventValue::Presence(true)), 1);
        assert_eq!(desk.state(), "Focus");
        assert_eq!(desk.outputs()["haptic_pulse"], OutputValue::Bool(false));
        assert_eq!(desk.outputs()["led_color"], OutputValue::Color([0, 255, 0]));
    }

    #[test]
    fn builtin_specs_are_valid() {
        for s in default_agents(&zone()) {
            assert_eq!(s.problems(), vec![], "{}", s.agent_id);
        }
    }
}
