//! Replay logs, sliding-window sample extraction, rationale attachment and
//! instruction-dataset emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisors::{AgentClient, AgentParams, AgentRequest, WindowAction};
use crate::world::{ActionCatalog, Category, Race};

pub const REPLAY_FORMAT: &str = "hima-replay/1";

/// Placeholder replaced by an advisor's strategic objective at inference time.
pub const SO_PLACEHOLDER: &str = "{strategic_objective}";

pub const DATASET_INSTRUCTION: &str = "You are a StarCraft II macro-management advisor. \
Strategic objective: {strategic_objective}\n\
Given the current player state, propose the actions to issue over the next window. \
Explain the plan under Immediate, Short-term and Long-term headers, then list the \
actions as a numbered sequence with their offsets.";

pub const RATIONALE_SYSTEM_PROMPT: &str = "You are an expert StarCraft II analyst. \
Given a player state and the action sequence the player executed next, generate the \
rationale behind the chosen action sequence. Break the rationale into three time frames \
under the headers `Immediate:`, `Short-term:` and `Long-term:`.";

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("replay has no actions for player {0}")]
    EmptyReplay(usize),
    #[error("window is empty")]
    EmptyWindow,
    #[error("external rationale backend unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("replay format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMeta {
    pub id: String,
    pub races: [Race; 2],
    pub seed: u64,
    pub winner: Option<usize>,
    pub duration: u32,
    /// Unit counts held by each player when the match ended.
    pub final_units: [BTreeMap<String, u32>; 2],
    /// Which players count as demonstrators.
    pub demonstrators: [bool; 2],
    pub labels: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEvent {
    pub t: u32,
    pub player: usize,
    pub action_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u32,
    pub player: usize,
    pub state_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayLog {
    pub meta: ReplayMeta,
    pub events: Vec<ReplayEvent>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReplayLine {
    Header { format: String, meta: ReplayMeta },
    Event(ReplayEvent),
    Snapshot(Snapshot),
}

impl ReplayLog {
    pub fn new(meta: ReplayMeta) -> Self {
        Self { meta, events: Vec::new(), snapshots: Vec::new() }
    }

    /// Records an action; the snapshot is stored once per (t, player).
    pub fn record(&mut self, t: u32, player: usize, action_id: &str, state_text: impl FnOnce() -> String) {
        if self.snapshot(t, player).is_none() {
            self.snapshots.push(Snapshot { t, player, state_text: state_text() });
        }
        self.events.push(ReplayEvent { t, player, action_id: action_id.to_string() });
    }

    pub fn snapshot(&self, t: u32, player: usize) -> Option<&str> {
        self.snapshots
            .iter()
            .rev()
            .find(|s| s.t == t && s.player == player)
            .map(|s| s.state_text.as_str())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), DemoError> {
        let header = ReplayLine::Header { format: REPLAY_FORMAT.to_string(), meta: self.meta.clone() };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for s in &self.snapshots {
            writeln!(w, "{}", serde_json::to_string(&ReplayLine::Snapshot(s.clone()))?)?;
        }
        for e in &self.events {
            writeln!(w, "{}", serde_json::to_string(&ReplayLine::Event(e.clone()))?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DemoError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, DemoError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| DemoError::Format("empty replay".into()))??;
        let ReplayLine::Header { format, meta } = serde_json::from_str(&first)? else {
            return Err(DemoError::Format("missing header".into()));
        };
        if format != REPLAY_FORMAT {
            return Err(DemoError::Format(format!("unsupported format `{format}`")));
        }
        let mut log = ReplayLog::new(meta);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                ReplayLine::Event(e) => log.events.push(e),
                ReplayLine::Snapshot(s) => log.snapshots.push(s),
                ReplayLine::Header { .. } => return Err(DemoError::Format("repeated header".into())),
            }
        }
        Ok(log)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DemoError> {
        Self::read_from(BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RationaleMode {
    #[default]
    Template,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_seconds: u32,
    pub rationale_mode: RationaleMode,
    pub winners_only: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { window_seconds: 180, rationale_mode: RationaleMode::Template, winners_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSource {
    pub replay_id: String,
    pub player: usize,
    pub t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub state_text: String,
    pub window: Vec<WindowAction>,
    pub rationale: String,
    pub source: SampleSource,
    pub cluster_id: Option<usize>,
    /// Set when the external backend could not provide a rationale.
    pub rationale_unavailable: bool,
}

/// One sample per distinct action time of `player`, each collecting that
/// player's actions in the half-open window `[t, t + window_seconds)`.
pub fn extract_samples(log: &ReplayLog, cfg: &PipelineConfig, player: usize) -> Result<Vec<DemoSample>, DemoError> {
    let mut events: Vec<(usize, &ReplayEvent)> =
        log.events.iter().enumerate().filter(|(_, e)| e.player == player).collect();
    if events.is_empty() {
        return Err(DemoError::EmptyReplay(player));
    }
    events.sort_by_key(|(i, e)| (e.t, *i));
    let delta = cfg.window_seconds.max(1);
    let mut samples = Vec::new();
    let mut end = 0;
    let mut start = 0;
    while start < events.len() {
        let t = events[start].1.t;
        if end < start {
            end = start;
        }
        while end < events.len() && events[end].1.t < t.saturating_add(delta) {
            end += 1;
        }
        let window = events[start..end]
            .iter()
            .map(|(_, e)| WindowAction { action_id: e.action_id.clone(), offset: e.t - t })
            .collect();
        samples.push(DemoSample {
            state_text: log.snapshot(t, player).unwrap_or_default().to_string(),
            window,
            rationale: String::new(),
            source: SampleSource { replay_id: log.meta.id.clone(), player, t },
            cluster_id: None,
            rationale_unavailable: false,
        });
        while start < events.len() && events[start].1.t == t {
            start += 1;
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Intent {
    Supply,
    Workers,
    Expansion,
    Gas,
    Structures,
    Army,
    Research,
    Commands,
}

impl Intent {
    fn phrase(self) -> &'static str {
        match self {
            Intent::Supply => "expand supply capacity",
            Intent::Workers => "grow the worker economy",
            Intent::Expansion => "take an additional base",
            Intent::Gas => "secure gas income",
            Intent::Structures => "add production and tech structures",
            Intent::Army => "build army",
            Intent::Research => "research upgrades",
            Intent::Commands => "issue army commands",
        }
    }
}

fn intent_of(catalog: &ActionCatalog, action_id: &str) -> (Intent, String) {
    let Some(spec) = catalog.get(action_id) else { return (Intent::Commands, action_id.to_string()) };
    let name = spec.produces.clone().unwrap_or_else(|| spec.id.clone());
    let intent = match spec.category {
        _ if spec.tags.supply => Intent::Supply,
        _ if spec.tags.worker => Intent::Workers,
        _ if spec.tags.townhall => Intent::Expansion,
        _ if spec.tags.gas => Intent::Gas,
        Category::UnitProduction => Intent::Army,
        Category::BuildingConstruction => Intent::Structures,
        Category::TechnologyDevelopment => Intent::Research,
        Category::GeneralCommand => Intent::Commands,
    };
    (intent, name)
}

fn describe(catalog: &ActionCatalog, actions: &[&WindowAction]) -> String {
    if actions.is_empty() {
        return "no new orders; keep the current production running.".into();
    }
    // intents in order of first appearance, each with entity tallies
    let mut order: Vec<Intent> = Vec::new();
    let mut tallies: BTreeMap<Intent, Vec<(String, u32)>> = BTreeMap::new();
    for a in actions {
        let (intent, name) = intent_of(catalog, &a.action_id);
        if !order.contains(&intent) {
            order.push(intent);
        }
        let list = tallies.entry(intent).or_default();
        match list.iter_mut().find(|(n, _)| *n == name) {
            Some((_, c)) => *c += 1,
            None => list.push((name, 1)),
        }
    }
    let parts: Vec<String> = order
        .iter()
        .map(|intent| {
            let items: Vec<String> = tallies[intent]
                .iter()
                .map(|(n, c)| if *c > 1 { format!("{n} x{c}") } else { n.clone() })
                .collect();
            format!("{} ({})", intent.phrase(), items.join(", "))
        })
        .collect();
    let mut text = parts.join(", then ");
    text.push('.');
    text
}

/// Deterministic three-timeframe rationale built from the window contents.
pub fn template_rationale(window: &[WindowAction], catalog: &ActionCatalog, window_seconds: u32) -> String {
    let short_from = (window_seconds / 6).max(1);
    let long_from = (window_seconds / 2).max(short_from + 1);
    let bucket = |lo: u32, hi: u32| -> Vec<&WindowAction> {
        window.iter().filter(|a| a.offset >= lo && a.offset < hi).collect()
    };
    let mut out = String::new();
    let _ = writeln!(out, "Immediate: {}", describe(catalog, &bucket(0, short_from)));
    let _ = writeln!(out, "Short-term: {}", describe(catalog, &bucket(short_from, long_from)));
    let _ = write!(out, "Long-term: {}", describe(catalog, &bucket(long_from, u32::MAX)));
    out
}

pub fn has_timeframe_headers(text: &str) -> bool {
    ["Immediate:", "Short-term:", "Long-term:"].iter().all(|h| text.contains(h))
}

pub fn numbered_actions(window: &[WindowAction]) -> String {
    crate::textio::render_window(window)
}

/// Fills in the rationale. External failures flag the sample instead of failing.
pub fn attach_rationale(
    mut sample: DemoSample,
    cfg: &PipelineConfig,
    catalog: &ActionCatalog,
    external: Option<&dyn AgentClient>,
) -> Result<DemoSample, DemoError> {
    if sample.window.is_empty() {
        return Err(DemoError::EmptyWindow);
    }
    match cfg.rationale_mode {
        RationaleMode::Template => {
            sample.rationale = template_rationale(&sample.window, catalog, cfg.window_seconds);
            sample.rationale_unavailable = false;
        }
        RationaleMode::External => {
            let reply = match external {
                None => Err("no endpoint configured".to_string()),
                Some(client) => {
                    let req = AgentRequest {
                        system: RATIONALE_SYSTEM_PROMPT.to_string(),
                        input: format!("{}\nactions:\n{}", sample.state_text, numbered_actions(&sample.window)),
                        params: AgentParams::default(),
                    };
                    client.exchange(&req).map_err(|e| e.to_string())
                }
            };
            match reply {
                Ok(text) if has_timeframe_headers(&text) => {
                    sample.rationale = text.trim().to_string();
                    sample.rationale_unavailable = false;
                }
                Ok(_) => {
                    sample.rationale.clear();
                    sample.rationale_unavailable = true;
                }
                Err(_) => {
                    sample.rationale.clear();
                    sample.rationale_unavailable = true;
                }
            }
        }
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl DatasetRecord {
    pub fn from_sample(sample: &DemoSample) -> Self {
        Self {
            instruction: DATASET_INSTRUCTION.to_string(),
            input: sample.state_text.clone(),
            output: format!("{}\n{}", sample.rationale, numbered_actions(&sample.window)),
        }
    }
}

/// Writes one JSON record per usable sample; flagged samples are skipped.
pub fn emit_dataset(samples: &[DemoSample], path: impl AsRef<Path>) -> Result<usize, DemoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let mut count = 0;
    for s in samples.iter().filter(|s| !s.rationale_unavailable && !s.rationale.is_empty()) {
        writeln!(w, "{}", serde_json::to_string(&DatasetRecord::from_sample(s))?)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DemoError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with(times: &[(u32, &str)]) -> ReplayLog {
        let meta = ReplayMeta {
            id: "r0".into(),
            races: [Race::Protoss, Race::Zerg],
            seed: 0,
            winner: Some(0),
            duration: 500,
            final_units: Default::default(),
            demonstrators: [true, true],
            labels: ["a".into(), "b".into()],
        };
        let mut log = ReplayLog::new(meta);
        for (t, id) in times {
            log.record(*t, 0, id, || format!("state@{t}"));
        }
        log
    }

    fn ids(s: &DemoSample) -> Vec<&str> {
        s.window.iter().map(|w| w.action_id.as_str()).collect()
    }

    #[test]
    fn four_sample_example() {
        let log = log_with(&[(0, "A"), (60, "B"), (120, "C"), (400, "D")]);
        let samples = extract_samples(&log, &PipelineConfig::default(), 0).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(ids(&samples[0]), ["A", "B", "C"]);
        assert_eq!(ids(&samples[1]), ["B", "C"]);
        assert_eq!(ids(&samples[2]), ["C"]);
        assert_eq!(ids(&samples[3]), ["D"]);
        assert_eq!(samples[1].window[1].offset, 60);
        assert_eq!(samples[3].state_text, "state@400");
    }

    #[test]
    fn window_is_half_open() {
        let log = log_with(&[(0, "A"), (180, "B")]);
        let samples = extract_samples(&log, &PipelineConfig::default(), 0).unwrap();
        assert_eq!(ids(&samples[0]), ["A"]);
    }

    #[test]
    fn empty_replay() {
        let log = log_with(&[(0, "A")]);
        assert!(matches!(extract_samples(&log, &PipelineConfig::default(), 1), Err(DemoError::EmptyReplay(1))));
    }

    #[test]
    fn template_golden() {
        let cat = ActionCatalog::builtin(Race::Protoss);
        let window = vec![
            WindowAction { action_id: "BuildPylon".into(), offset: 0 },
            WindowAction { action_id: "TrainZealot".into(), offset: 0 },
        ];
        let text = template_rationale(&window, &cat, 180);
        assert_eq!(text, include_str!("../data/golden/rationale_pylon_zealot.txt").trim_end());
        assert!(has_timeframe_headers(&text));
        let supply = text.find("supply").unwrap();
        let army = text.find("army").unwrap();
        assert!(supply < army);
    }

    #[test]
    fn replay_round_trip() {
        let log = log_with(&[(0, "BuildPylon"), (5, "TrainProbe")]);
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = ReplayLog::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }
}
