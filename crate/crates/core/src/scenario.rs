//! Scenario files: loading, dotted-path overrides and validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::channel::ChannelConfig;
use crate::mission::{DetectorModel, MissionConfig, WorldConfig};
use crate::protocol::{AgentId, PlatoonId, Position, Role, SegmentId, SlbConfig};
use crate::time::{SimDuration, SimTime};

/// Agent ids are packed into 16 bits in random-draw keys.
pub const MAX_AGENTS: usize = u16::MAX as usize + 1;

fn default_speed() -> f64 {
    1.0
}

fn default_motion_tick() -> SimDuration {
    SimDuration::from_ticks(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonSpec {
    pub id: PlatoonId,
    pub size: usize,
    /// Role of each position, leader first.
    pub roles: Vec<Role>,
    #[serde(default)]
    pub start_offset: SimDuration,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorModel>,
    /// Platoons without a mission only beacon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<MissionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Send the platoon home: PATROL -> EXITING.
    Recall,
    /// Make the first vision member's classifier return positive now.
    InjectDetection {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segment: Option<SegmentId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub time: SimTime,
    pub platoon: PlatoonId,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub t_end: SimTime,
    pub slb: SlbConfig,
    pub channel: ChannelConfig,
    #[serde(default = "default_motion_tick")]
    pub motion_tick: SimDuration,
    pub platoons: Vec<PlatoonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scripted_commands: Vec<ScriptedCommand>,
}

/// One agent as laid out by the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentSlot {
    pub id: AgentId,
    pub platoon: PlatoonId,
    pub platoon_index: usize,
    pub role: Role,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad override {spec:?}: {reason}")]
    Override { spec: String, reason: String },
    #[error("scenario has {} problem(s):\n{}", .0.0.len(), .0)]
    Invalid(Violations),
}

impl Scenario {
    /// Read, apply overrides, parse and validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_with_overrides(&text, overrides)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Self::from_json_with_overrides(text, &[])
    }

    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut value: Value = serde_json::from_str(text)?;
        for spec in overrides {
            apply_override_spec(&mut value, spec)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_value(value)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("scenario serializes")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(Violations(v)))
        }
    }

    /// Every invariant violation, with the path of the offending field.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |path: String, message: String| out.push(Violation { path, message });

        let general = self.slb.violations(0);
        for m in &general {
            push("slb".into(), m.clone());
        }
        if !(0.0..=1.0).contains(&self.channel.loss_prob) {
            push(
                "channel.loss_prob".into(),
                format!("{} is outside [0, 1]", self.channel.loss_prob),
            );
        }
        if self.motion_tick.is_zero() {
            push("motion_tick".into(), "must be positive".into());
        }
        if self.platoons.is_empty() {
            push("platoons".into(), "at least one platoon is required".into());
        }

        let segments: BTreeSet<SegmentId> = self
            .world
            .as_ref()
            .map(|w| w.segments.iter().map(|s| s.id).collect())
            .unwrap_or_default();
        let mut ids = BTreeSet::new();
        let mut total_agents = 0usize;
        for (i, p) in self.platoons.iter().enumerate() {
            let at = format!("platoons[{i}]");
            total_agents += p.size;
            if !ids.insert(p.id) {
                push(format!("{at}.id"), format!("duplicate platoon id {}", p.id));
            }
            if p.size == 0 {
                push(format!("{at}.size"), "must be at least 1".into());
            }
            if p.size != p.roles.len() {
                push(
                    format!("{at}.roles"),
                    format!("{} roles listed for a platoon of size {}", p.roles.len(), p.size),
                );
            }
            if p.roles.first().is_some_and(|r| *r != Role::Leader) {
                push(format!("{at}.roles[0]"), "position 0 must be the leader".into());
            }
            let leaders = p.roles.iter().filter(|r| **r == Role::Leader).count();
            if leaders != 1 {
                push(format!("{at}.roles"), format!("exactly one leader required, found {leaders}"));
            }
            for m in self.slb.violations(p.size) {
                if !general.contains(&m) {
                    push(format!("{at}.size"), m);
                }
            }
            if !(p.speed.is_finite() && p.speed > 0.0) {
                push(format!("{at}.speed"), "must be a positive number".into());
            }
            if let Some(d) = &p.detector {
                for (path, m) in d.violations(&format!("{at}.detector")) {
                    push(path, m);
                }
                if p.mission.is_none() {
                    push(format!("{at}.detector"), "a detector requires a mission".into());
                }
            }
            if p.mission.is_some() {
                for role in [Role::Vision, Role::Treatment] {
                    if !p.roles.contains(&role) {
                        push(format!("{at}.roles"), format!("a mission needs at least one {role} member"));
                    }
                }
                if self.world.is_none() {
                    push(format!("{at}.mission"), "a mission requires a world".into());
                }
            }
        }
        if total_agents > MAX_AGENTS {
            push(
                "platoons".into(),
                format!("{total_agents} agents in total; at most {MAX_AGENTS} supported"),
            );
        }

        if let Some(w) = &self.world {
            for (path, m) in w.violations() {
                push(path, m);
            }
        }

        for (i, c) in self.scripted_commands.iter().enumerate() {
            let at = format!("scripted_commands[{i}]");
            match self.platoons.iter().find(|p| p.id == c.platoon) {
                None => push(format!("{at}.platoon"), format!("unknown platoon {}", c.platoon)),
                Some(p) if p.mission.is_none() => {
                    push(format!("{at}.platoon"), format!("platoon {} has no mission", c.platoon))
                }
                Some(_) => {}
            }
            if let Command::InjectDetection { segment: Some(seg) } = c.command {
                if !segments.contains(&seg) {
                    push(format!("{at}.command.segment"), format!("unknown segment {seg}"));
                }
            }
        }

        for (i, d) in self.channel.forced_drops.iter().enumerate() {
            if d.agent.0 as usize >= total_agents {
                push(
                    format!("channel.forced_drops[{i}].agent"),
                    format!("unknown agent {}", d.agent),
                );
            }
        }
        out
    }

    /// Agents in id order. Ids are handed out sequentially across platoons
    /// in list order.
    pub fn agents(&self) -> Vec<AgentSlot> {
        let mut out = Vec::new();
        for (pi, p) in self.platoons.iter().enumerate() {
            for (pos, role) in p.roles.iter().enumerate() {
                out.push(AgentSlot {
                    id: AgentId(out.len() as u32),
                    platoon: p.id,
                    platoon_index: pi,
                    role: *role,
                    position: Position(pos as u32),
                });
            }
        }
        out
    }
}

/// Apply `path=value`. The value is parsed as JSON, falling back to a plain
/// string.
pub fn apply_override_spec(root: &mut Value, spec: &str) -> Result<(), ScenarioError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ScenarioError::Override {
        spec: spec.to_string(),
        reason: "expected path=value".into(),
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, path, value).map_err(|reason| ScenarioError::Override {
        spec: spec.to_string(),
        reason,
    })
}

/// Set a dotted path such as `channel.loss_prob` or `platoons.0.speed`.
/// Every intermediate step must exist; the last key may be new on an object
/// (unknown keys are then caught when the scenario is parsed).
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    check_path(root, path)?;
    let parts: Vec<&str> = path.split('.').collect();
    let (last, init) = parts.split_last().expect("non-empty path");
    let mut cur = root;
    for part in init {
        cur = match cur {
            Value::Object(map) => map.get_mut(*part).expect("checked"),
            Value::Array(items) => &mut items[part.parse::<usize>().expect("checked")],
            _ => unreachable!("checked"),
        };
    }
    match cur {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
        }
        Value::Array(items) => items[last.parse::<usize>().expect("checked")] = value,
        _ => unreachable!("checked"),
    }
    Ok(())
}

/// Does `path` address something `set_path` could write?
pub fn check_path(root: &Value, path: &str) -> Result<(), String> {
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(format!("malformed path {path:?}"));
    }
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let walked = parts[..=i].join(".");
        cur = match cur {
            Value::Object(map) => match map.get(*part) {
                Some(next) => next,
                None if last => return Ok(()),
                None => return Err(format!("no field {walked}")),
            },
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| format!("{walked}: expected an index"))?;
                items
                    .get(idx)
                    .ok_or_else(|| format!("{walked}: index out of range ({} items)", items.len()))?
            }
            _ => return Err(format!("{walked}: cannot descend into a scalar")),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WALKTHROUGH: &str = r#"{
        "seed": 1,
        "t_end": 300,
        "slb": {"beacon_interval": 100, "slot_offset": 0.5, "slot_width": 0.5},
        "channel": {"loss_prob": 0, "collisions_enabled": true},
        "platoons": [{"id": 1, "size": 4, "roles": ["leader", "vision", "treatment", "power"]}]
    }"#;

    fn paths(err: ScenarioError) -> Vec<String> {
        match err {
            ScenarioError::Invalid(v) => v.0.into_iter().map(|v| v.path).collect(),
            other => panic!("expected violations, got {other}"),
        }
    }

    #[test]
    fn loads_minimal_beacon_scenario() {
        let s = Scenario::from_json(WALKTHROUGH).unwrap();
        assert_eq!(s.slb.beacon_interval, SimDuration::from_ticks(1000));
        assert_eq!(s.platoons[0].roles.len(), 4);
        assert!(s.channel.priority_survives);
        assert_eq!(s.motion_tick, SimDuration::from_ticks(10));
        let agents = s.agents();
        assert_eq!(agents[3].role, Role::Power);
        assert_eq!(agents[3].position, Position(3));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = WALKTHROUGH.replace("\"loss_prob\"", "\"los_prob\"");
        assert!(matches!(Scenario::from_json(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn two_leaders_rejected() {
        let text = WALKTHROUGH.replace("\"vision\"", "\"leader\"");
        assert_eq!(paths(Scenario::from_json(&text).unwrap_err()), vec!["platoons[0].roles"]);
    }

    #[test]
    fn slot_inequality_reported_with_numbers() {
        let text = WALKTHROUGH.replace("\"beacon_interval\": 100", "\"beacon_interval\": 2");
        let err = Scenario::from_json(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("platoons[0].size"), "{msg}");
        assert!(msg.contains("4 * 0.5 + 0.5 = 2.5 > 2.0"), "{msg}");
    }

    #[test]
    fn all_problems_reported_together() {
        let text = WALKTHROUGH
            .replace("\"loss_prob\": 0", "\"loss_prob\": 1.5")
            .replace("\"size\": 4", "\"size\": 3")
            .replace("[\"leader\", \"vision\"", "[\"vision\", \"leader\"");
        let p = paths(Scenario::from_json(&text).unwrap_err());
        assert_eq!(p, vec!["channel.loss_prob", "platoons[0].roles", "platoons[0].roles[0]"]);
    }

    #[test]
    fn mission_needs_world_and_roles() {
        let text = WALKTHROUGH.replace(
            "\"roles\": [\"leader\", \"vision\", \"treatment\", \"power\"]",
            "\"roles\": [\"leader\", \"power\", \"power\", \"power\"], \"mission\": {\"max_cycles\": 1, \"treatment_duration\": 5}",
        );
        let p = paths(Scenario::from_json(&text).unwrap_err());
        assert_eq!(p, vec!["platoons[0].roles", "platoons[0].roles", "platoons[0].mission"]);
    }

    #[test]
    fn overrides_apply_before_parse() {
        let s = Scenario::from_json_with_overrides(
            WALKTHROUGH,
            &["channel.loss_prob=1.0".into(), "platoons.0.speed=2".into(), "seed=9".into()],
        )
        .unwrap();
        assert_eq!(s.channel.loss_prob, 1.0);
        assert_eq!(s.platoons[0].speed, 2.0);
        assert_eq!(s.seed, 9);
    }

    #[test]
    fn bad_override_paths() {
        for spec in ["nope.x=1", "platoons.5.speed=1", "seed.x=1", "channel.loss_prob", ".=1"] {
            let err = Scenario::from_json_with_overrides(WALKTHROUGH, &[spec.into()]).unwrap_err();
            assert!(matches!(err, ScenarioError::Override { .. }), "{spec}: {err}");
        }
        // a new leaf key is accepted by the path walker but refused by the schema
        let err = Scenario::from_json_with_overrides(WALKTHROUGH, &["channel.typo=1".into()]).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json(WALKTHROUGH).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn forced_drop_agent_must_exist() {
        let text = WALKTHROUGH.replace(
            "\"collisions_enabled\": true",
            "\"collisions_enabled\": true, \"forced_drops\": [{\"agent\": 4, \"seq\": 1}]",
        );
        assert_eq!(
            paths(Scenario::from_json(&text).unwrap_err()),
            vec!["channel.forced_drops[0].agent"]
        );
    }
}
