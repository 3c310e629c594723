//! Text rendering of observations and planner context, and lenient parsing
//! of agent replies.
//!
//! Observation layout, one header per section, always in this order:
//!
//! ```text
//! [time]
//! 03:00 (180 s)
//! [resources]
//! minerals: 50
//! gas: 0
//! [supply]
//! 12/15
//! [units]
//! Probe: 12
//! [buildings]
//! Nexus: 1
//! [technologies]
//! none
//! [ongoing_commands]
//! BuildPylon: 12 s remaining
//! [visible_enemy]
//! none observed
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::PlanContext;
use crate::world::{ActionCatalog, ActionRequest, Observation, OpponentView, PlayerState, QueueEntry};

pub const SECTIONS: [&str; 8] = [
    "time",
    "resources",
    "supply",
    "units",
    "buildings",
    "technologies",
    "ongoing_commands",
    "visible_enemy",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("planner context has no proposals")]
    NoProposals,
    #[error("state text is malformed at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseIssue {
    UnknownAction(String),
    NoActionsFound,
}

/// The player-owned fields recovered from rendered state text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedState {
    pub tick: u32,
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub units: BTreeMap<String, u32>,
    pub buildings: BTreeMap<String, u32>,
    pub techs: BTreeSet<String>,
    pub queue: Vec<QueueEntry>,
}

pub fn format_clock(tick: u32) -> String {
    format!("{:02}:{:02} ({tick} s)", tick / 60, tick % 60)
}

fn sorted_counts<'a>(
    map: &'a BTreeMap<String, u32>,
    catalog: &ActionCatalog,
) -> Vec<(&'a String, u32)> {
    let mut items: Vec<_> = map.iter().filter(|(_, n)| **n > 0).map(|(k, n)| (k, *n)).collect();
    items.sort_by_key(|(id, _)| (catalog.entity_rank(id), (*id).clone()));
    items
}

fn push_counts(out: &mut String, map: &BTreeMap<String, u32>, catalog: &ActionCatalog) {
    let items = sorted_counts(map, catalog);
    if items.is_empty() {
        out.push_str("none\n");
    }
    for (id, n) in items {
        let _ = writeln!(out, "{id}: {n}");
    }
}

/// Renders the player-owned sections, without any opponent information.
pub fn render_player_state(tick: u32, player: &PlayerState, catalog: &ActionCatalog) -> String {
    let mut out = String::with_capacity(512);
    let _ = writeln!(out, "[time]\n{}", format_clock(tick));
    let _ = writeln!(out, "[resources]\nminerals: {}\ngas: {}", player.minerals, player.gas);
    let _ = writeln!(out, "[supply]\n{}/{}", player.supply_used, player.supply_cap);
    out.push_str("[units]\n");
    push_counts(&mut out, &player.units, catalog);
    out.push_str("[buildings]\n");
    push_counts(&mut out, &player.buildings, catalog);
    out.push_str("[technologies]\n");
    let mut techs: Vec<&String> = player.techs.iter().collect();
    techs.sort_by_key(|t| (catalog.entity_rank(t), (*t).clone()));
    if techs.is_empty() {
        out.push_str("none\n");
    }
    for t in techs {
        let _ = writeln!(out, "{t}");
    }
    out.push_str("[ongoing_commands]\n");
    if player.queue.is_empty() {
        out.push_str("none\n");
    }
    for q in &player.queue {
        let _ = writeln!(out, "{}: {} s remaining", q.action_id, q.remaining);
    }
    out
}

/// Renders a full observation. `opponent` orders the revealed enemy entities.
pub fn render_observation(obs: &Observation, own: &ActionCatalog, opponent: &ActionCatalog) -> String {
    let mut out = render_player_state(obs.tick, &obs.own, own);
    out.push_str("[visible_enemy]\n");
    let (units, buildings) = match &obs.opponent {
        OpponentView::Hidden => (None, None),
        OpponentView::Revealed { units, buildings } => (Some(units), Some(buildings)),
        OpponentView::Full(p) => (Some(&p.units), Some(&p.buildings)),
    };
    let units = units.map(|u| sorted_counts(u, opponent)).unwrap_or_default();
    let buildings = buildings.map(|b| sorted_counts(b, opponent)).unwrap_or_default();
    if units.is_empty() && buildings.is_empty() {
        out.push_str("none observed\n");
        return out;
    }
    let _ = writeln!(out, "combat units: {}", obs.visible_enemy_count);
    for (id, n) in units.into_iter().chain(buildings) {
        let _ = writeln!(out, "{id}: {n}");
    }
    out
}

fn parse_u32(line_no: usize, raw: &str) -> Result<u32, TextError> {
    raw.trim().parse().map_err(|_| TextError::Malformed {
        line: line_no,
        reason: format!("expected a number, got `{}`", raw.trim()),
    })
}

fn parse_kv(line_no: usize, line: &str) -> Result<(String, u32), TextError> {
    let (k, v) = line.split_once(':').ok_or_else(|| TextError::Malformed {
        line: line_no,
        reason: "expected `name: count`".into(),
    })?;
    Ok((k.trim().to_string(), parse_u32(line_no, v)?))
}

/// Parses the player sections produced by [`render_player_state`] or
/// [`render_observation`]. The enemy section is skipped.
pub fn parse_state(text: &str) -> Result<ParsedState, TextError> {
    let mut state = ParsedState::default();
    let mut section = "";
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = SECTIONS.iter().find(|s| **s == name).copied().ok_or_else(|| {
                TextError::Malformed { line: line_no, reason: format!("unknown section `{name}`") }
            })?;
            continue;
        }
        if line == "none" && section != "visible_enemy" {
            continue;
        }
        match section {
            "time" => {
                let secs = line
                    .split_once('(')
                    .and_then(|(_, rest)| rest.strip_suffix(" s)"))
                    .ok_or_else(|| TextError::Malformed {
                        line: line_no,
                        reason: "expected `mm:ss (N s)`".into(),
                    })?;
                state.tick = parse_u32(line_no, secs)?;
            }
            "resources" => match parse_kv(line_no, line)? {
                (k, v) if k == "minerals" => state.minerals = v,
                (k, v) if k == "gas" => state.gas = v,
                (k, _) => {
                    return Err(TextError::Malformed { line: line_no, reason: format!("unknown resource `{k}`") })
                }
            },
            "supply" => {
                let (u, c) = line.split_once('/').ok_or_else(|| TextError::Malformed {
                    line: line_no,
                    reason: "expected `used/cap`".into(),
                })?;
                state.supply_used = parse_u32(line_no, u)?;
                state.supply_cap = parse_u32(line_no, c)?;
            }
            "units" => {
                let (k, v) = parse_kv(line_no, line)?;
                state.units.insert(k, v);
            }
            "buildings" => {
                let (k, v) = parse_kv(line_no, line)?;
                state.buildings.insert(k, v);
            }
            "technologies" => {
                state.techs.insert(line.to_string());
            }
            "ongoing_commands" => {
                let (id, rest) = line.split_once(':').ok_or_else(|| TextError::Malformed {
                    line: line_no,
                    reason: "expected `Action: N s remaining`".into(),
                })?;
                let secs = rest.trim().strip_suffix(" s remaining").ok_or_else(|| {
                    TextError::Malformed { line: line_no, reason: "expected `N s remaining`".into() }
                })?;
                state.queue.push(QueueEntry {
                    action_id: id.trim().to_string(),
                    remaining: parse_u32(line_no, secs)?,
                });
            }
            "visible_enemy" => {}
            _ => {
                return Err(TextError::Malformed { line: line_no, reason: "content before first section".into() })
            }
        }
    }
    Ok(state)
}

/// Renders the failure line quoted back to the planner.
pub fn render_failure(f: &crate::execloop::FailureRecord) -> String {
    format!("t={} {} {} (retry {})", f.tick, f.action_id, f.reason, f.retry_count)
}

pub fn render_window(window: &[crate::advisors::WindowAction]) -> String {
    let mut out = String::new();
    for (i, w) in window.iter().enumerate() {
        let _ = writeln!(out, "{}. {} (+{} s)", i + 1, w.action_id, w.offset);
    }
    out
}

/// Renders the full planner prompt body: state, advisor blocks, failures, battle notes.
pub fn render_planner_context(
    ctx: &PlanContext,
    own: &ActionCatalog,
    opponent: &ActionCatalog,
) -> Result<String, TextError> {
    if ctx.proposals.is_empty() {
        return Err(TextError::NoProposals);
    }
    let mut out = String::with_capacity(2048);
    out.push_str("=== state ===\n");
    out.push_str(&render_observation(&ctx.obs, own, opponent));
    out.push_str("=== advisors ===\n");
    let mut proposals: Vec<_> = ctx.proposals.iter().collect();
    proposals.sort_by_key(|p| p.agent_id);
    for p in proposals {
        let _ = writeln!(out, "[advisor {}]", p.agent_id);
        let _ = writeln!(out, "objective: {}", p.strategic_objective.trim());
        let _ = writeln!(out, "rationale:\n{}", p.tactical_rationale.trim());
        out.push_str("actions:\n");
        out.push_str(&render_window(&p.window));
    }
    out.push_str("=== failures ===\n");
    for f in &ctx.failure_records {
        out.push_str(&render_failure(f));
        out.push('\n');
    }
    out.push_str("=== battle ===\n");
    for b in &ctx.battle_events {
        out.push_str(b.trim());
        out.push('\n');
    }
    Ok(out)
}

fn separators() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:[\n\r,;]+\s*|^\s*|\s)\d+[.)](?:\s+|$)|[\n\r,;]+").expect("valid regex"))
}

fn offset_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(\s*\+?\s*(\d+)\s*s?\s*\)").expect("valid regex"))
}

fn paren_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\([^)]*\)").expect("valid regex"))
}

/// Extracts catalog actions from free text. Never fails; problems come back as issues.
///
/// Items are separated by list numbering (`1.` / `1)`), commas, semicolons or
/// newlines. Ids match case-insensitively with spaces and punctuation ignored,
/// so `Build Pylon` resolves to `BuildPylon`. A trailing `(+N s)` sets the offset.
pub fn parse_action_sequence(text: &str, catalog: &ActionCatalog) -> (Vec<ActionRequest>, Vec<ParseIssue>) {
    let mut actions = Vec::new();
    let mut issues = Vec::new();
    for token in separators().split(text) {
        let offset = offset_re()
            .captures(token)
            .and_then(|c| c.get(1))
            .and_then(|m| m.as_str().parse().ok());
        let bare = paren_re().replace_all(token, " ");
        let bare = bare.trim().trim_start_matches(['-', '*', '•']).trim();
        if bare.is_empty() {
            continue;
        }
        let key: String = bare.chars().filter(char::is_ascii_alphanumeric).collect();
        match catalog.get_ignore_case(&key) {
            Some(spec) if !key.is_empty() => actions.push(ActionRequest { action_id: spec.id.clone(), offset }),
            _ => issues.push(ParseIssue::UnknownAction(bare.to_string())),
        }
    }
    if actions.is_empty() && issues.is_empty() {
        issues.push(ParseIssue::NoActionsFound);
    }
    (actions, issues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldRules;
    use crate::world::{Race, World};

    fn fresh() -> (World, Observation) {
        let world = World::new([Race::Protoss, Race::Zerg], WorldRules::default());
        let state = world.initial_state(7);
        let obs = world.observe(&state, 0, false);
        (world, obs)
    }

    #[test]
    fn fresh_protoss_render() {
        let (world, obs) = fresh();
        let text = render_observation(&obs, world.catalog(0), world.catalog(1));
        let golden = include_str!("../data/golden/fresh_protoss.txt");
        assert_eq!(text, golden);
        assert_eq!(text, render_observation(&obs, world.catalog(0), world.catalog(1)));
    }

    #[test]
    fn state_round_trip() {
        let (world, mut obs) = fresh();
        obs.own.techs.insert("WarpGate".into());
        obs.own.queue.push(QueueEntry { action_id: "BuildPylon".into(), remaining: 12 });
        let text = render_observation(&obs, world.catalog(0), world.catalog(1));
        let parsed = parse_state(&text).unwrap();
        assert_eq!(parsed.minerals, obs.own.minerals);
        assert_eq!(parsed.supply_cap, obs.own.supply_cap);
        assert_eq!(parsed.units, obs.own.units);
        assert_eq!(parsed.buildings, obs.own.buildings);
        assert_eq!(parsed.techs, obs.own.techs);
        assert_eq!(parsed.queue, obs.own.queue);
    }

    #[test]
    fn parse_numbered_reply() {
        let cat = ActionCatalog::builtin(Race::Protoss);
        let (acts, issues) = parse_action_sequence("1. Build Pylon 2. Train Zealot", &cat);
        let ids: Vec<_> = acts.iter().map(|a| a.action_id.as_str()).collect();
        assert_eq!(ids, ["BuildPylon", "TrainZealot"]);
        assert!(issues.is_empty());
    }

    #[test]
    fn parse_unknown_and_empty() {
        let cat = ActionCatalog::builtin(Race::Protoss);
        let (acts, issues) = parse_action_sequence("Summon Dragon", &cat);
        assert!(acts.is_empty());
        assert_eq!(issues, vec![ParseIssue::UnknownAction("Summon Dragon".into())]);
        let (acts, issues) = parse_action_sequence("", &cat);
        assert!(acts.is_empty());
        assert_eq!(issues, vec![ParseIssue::NoActionsFound]);
    }

    #[test]
    fn parse_offsets_and_upgrades() {
        let cat = ActionCatalog::builtin(Race::Protoss);
        let text = "1. BuildPylon (+0 s)\n2. ResearchGroundWeapons1 (+30 s)\n3. train zealot (+45)";
        let (acts, issues) = parse_action_sequence(text, &cat);
        assert!(issues.is_empty(), "{issues:?}");
        assert_eq!(acts[1], ActionRequest { action_id: "ResearchGroundWeapons1".into(), offset: Some(30) });
        assert_eq!(acts[2].offset, Some(45));
    }

    #[test]
    fn every_id_round_trips() {
        for race in Race::ALL {
            let cat = ActionCatalog::builtin(race);
            for spec in cat.actions.iter().chain(&cat.commands) {
                let window = vec![crate::advisors::WindowAction { action_id: spec.id.clone(), offset: 3 }];
                let (acts, issues) = parse_action_sequence(&render_window(&window), &cat);
                assert!(issues.is_empty(), "{}: {issues:?}", spec.id);
                assert_eq!(acts, vec![ActionRequest { action_id: spec.id.clone(), offset: Some(3) }]);
            }
        }
    }
}
