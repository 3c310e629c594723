//! Strategic advisors. The deterministic backend retrieves the nearest
//! demonstration of its cluster; the external backend asks a text agent.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{SoLabel, StrategicObjective};
use crate::config::{AgentDefaults, FeatureScale};
use crate::demos::{DemoSample, DATASET_INSTRUCTION, SO_PLACEHOLDER};
use crate::textio::{self, ParseIssue};
use crate::world::{ActionCatalog, Category, Observation};

pub const ENDPOINT_ENV: &str = "HIMA_AGENT_ENDPOINT";
pub const TIMEOUT_ENV: &str = "HIMA_AGENT_TIMEOUT";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowAction {
    pub action_id: String,
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub agent_id: usize,
    pub window: Vec<WindowAction>,
    pub tactical_rationale: String,
    pub strategic_objective: String,
    pub so_label: Option<SoLabel>,
    /// Parse problems in an external reply; empty for retrieval.
    pub degraded: Vec<ParseIssue>,
}

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error("cluster {0} has no demonstration samples")]
    EmptyCluster(usize),
    #[error("sample state text is unreadable: {0}")]
    BadSample(#[from] textio::TextError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent did not answer in time")]
    Timeout,
    #[error("agent transport failed: {0}")]
    Transport(String),
    #[error("agent reply unusable: {0}")]
    BadReply(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub temperature: f64,
    pub max_actions: usize,
}

impl Default for AgentParams {
    fn default() -> Self {
        let d = AgentDefaults::default();
        Self { temperature: d.temperature, max_actions: d.max_actions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub system: String,
    pub input: String,
    pub params: AgentParams,
}

#[derive(Deserialize)]
struct AgentReply {
    text: String,
}

fn reply_text(raw: &str) -> String {
    serde_json::from_str::<AgentReply>(raw.trim()).map(|r| r.text).unwrap_or_else(|_| raw.to_string())
}

/// One request, one free-text reply.
pub trait AgentClient: Send + Sync {
    fn exchange(&self, req: &AgentRequest) -> Result<String, AgentError>;
}

/// POSTs the request as JSON; accepts `{"text": ...}` or a plain-text body.
pub struct HttpAgentClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpAgentClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self { endpoint: endpoint.into(), agent: config.into() }
    }
}

impl AgentClient for HttpAgentClient {
    fn exchange(&self, req: &AgentRequest) -> Result<String, AgentError> {
        let body = serde_json::to_string(req).map_err(|e| AgentError::Transport(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => AgentError::Transport(format!("HTTP {code}")),
                // connection failures count as an agent that never answered
                _ => AgentError::Timeout,
            })?;
        let raw = resp.body_mut().read_to_string().map_err(|e| AgentError::BadReply(e.to_string()))?;
        Ok(reply_text(&raw))
    }
}

struct PipeInner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

/// Talks to a long-lived child process: one JSON request line out, one reply line back.
pub struct PipeAgentClient {
    inner: Mutex<PipeInner>,
    timeout: Duration,
}

impl PipeAgentClient {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, AgentError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let stdin = child.stdin.take().ok_or_else(|| AgentError::Transport("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| AgentError::Transport("no stdout".into()))?;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { inner: Mutex::new(PipeInner { child, stdin, lines: rx }), timeout })
    }
}

impl AgentClient for PipeAgentClient {
    fn exchange(&self, req: &AgentRequest) -> Result<String, AgentError> {
        let mut inner = self.inner.lock().map_err(|_| AgentError::Transport("poisoned".into()))?;
        let line = serde_json::to_string(req).map_err(|e| AgentError::Transport(e.to_string()))?;
        writeln!(inner.stdin, "{line}")
            .and_then(|_| inner.stdin.flush())
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        match inner.lines.recv_timeout(self.timeout) {
            Ok(reply) => Ok(reply_text(&reply)),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(AgentError::Timeout),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(AgentError::Transport("agent exited".into())),
        }
    }
}

impl Drop for PipeAgentClient {
    fn drop(&mut self) {
        if let Ok(inner) = self.inner.get_mut() {
            let _ = inner.child.kill();
            let _ = inner.child.wait();
        }
    }
}

/// Builds a client from an endpoint string: `http(s)://…` or `pipe:<command>`.
pub fn client_for(endpoint: &str, timeout: Duration) -> Result<Arc<dyn AgentClient>, AgentError> {
    if let Some(cmd) = endpoint.strip_prefix("pipe:") {
        Ok(Arc::new(PipeAgentClient::spawn(cmd, timeout)?))
    } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        Ok(Arc::new(HttpAgentClient::new(endpoint, timeout)))
    } else {
        Err(AgentError::Transport(format!("unsupported endpoint `{endpoint}`")))
    }
}

/// Client from the environment, falling back to the configured endpoint.
pub fn client_from_env(defaults: &AgentDefaults) -> Result<Option<Arc<dyn AgentClient>>, AgentError> {
    let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()).or_else(|| defaults.endpoint.clone());
    let secs = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(defaults.timeout_secs);
    endpoint.map(|e| client_for(&e, Duration::from_secs(secs))).transpose()
}

/// Fixed feature layout for one race.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    units: Vec<String>,
    buildings: Vec<String>,
    techs: Vec<String>,
    scale: FeatureScale,
}

/// The player-owned numbers features are computed from.
pub struct StateView<'a> {
    pub tick: u32,
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub units: &'a std::collections::BTreeMap<String, u32>,
    pub buildings: &'a std::collections::BTreeMap<String, u32>,
    pub techs: &'a std::collections::BTreeSet<String>,
}

impl<'a> From<&'a textio::ParsedState> for StateView<'a> {
    fn from(s: &'a textio::ParsedState) -> Self {
        Self {
            tick: s.tick,
            minerals: s.minerals,
            gas: s.gas,
            supply_used: s.supply_used,
            supply_cap: s.supply_cap,
            units: &s.units,
            buildings: &s.buildings,
            techs: &s.techs,
        }
    }
}

impl<'a> StateView<'a> {
    pub fn of(tick: u32, p: &'a crate::world::PlayerState) -> Self {
        Self {
            tick,
            minerals: p.minerals,
            gas: p.gas,
            supply_used: p.supply_used,
            supply_cap: p.supply_cap,
            units: &p.units,
            buildings: &p.buildings,
            techs: &p.techs,
        }
    }
}

impl FeatureSpace {
    pub fn new(catalog: &ActionCatalog, scale: FeatureScale) -> Self {
        let mut units = Vec::new();
        let mut buildings = Vec::new();
        let mut techs = Vec::new();
        for a in &catalog.actions {
            let entity = a.produces.clone().unwrap_or_else(|| a.id.clone());
            match a.category {
                Category::UnitProduction => units.push(entity),
                Category::BuildingConstruction => buildings.push(entity),
                Category::TechnologyDevelopment => techs.push(entity),
                Category::GeneralCommand => {}
            }
        }
        Self { units, buildings, techs, scale }
    }

    pub fn dim(&self) -> usize {
        5 + self.units.len() + self.buildings.len() + self.techs.len()
    }

    pub fn features(&self, s: &StateView<'_>) -> Vec<f64> {
        let sc = &self.scale;
        let mut v = Vec::with_capacity(self.dim());
        v.push(f64::from(s.minerals) / sc.minerals);
        v.push(f64::from(s.gas) / sc.gas);
        v.push(f64::from(s.supply_used) / sc.supply);
        v.push(f64::from(s.supply_cap) / sc.supply);
        v.push(f64::from(s.tick) / sc.game_time);
        let count = |m: &std::collections::BTreeMap<String, u32>, k: &str| f64::from(m.get(k).copied().unwrap_or(0));
        v.extend(self.units.iter().map(|u| count(s.units, u) / sc.unit_count));
        v.extend(self.buildings.iter().map(|b| count(s.buildings, b) / sc.building_count));
        v.extend(self.techs.iter().map(|t| if s.techs.contains(t) { 1.0 } else { 0.0 }));
        v
    }
}

/// Nearest row by squared Euclidean distance; ties keep the earliest row.
/// Rows whose partial sum already exceeds the best are abandoned.
pub fn nearest_neighbor(rows: &[Vec<f64>], query: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    'rows: for (i, row) in rows.iter().enumerate() {
        let bound = best.map_or(f64::INFINITY, |(_, d)| d);
        let mut d = 0.0;
        for (a, b) in row.iter().zip(query) {
            d += (a - b) * (a - b);
            if d >= bound {
                continue 'rows;
            }
        }
        best = Some((i, d));
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone)]
struct Demo {
    window: Vec<WindowAction>,
    rationale: String,
}

enum Backend {
    Retrieval,
    External(Arc<dyn AgentClient>),
}

pub struct Advisor {
    pub agent_id: usize,
    pub objective: StrategicObjective,
    features: Vec<Vec<f64>>,
    demos: Vec<Demo>,
    backend: Backend,
}

impl std::fmt::Debug for Advisor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Advisor")
            .field("agent_id", &self.agent_id)
            .field("objective", &self.objective.label)
            .field("demos", &self.demos.len())
            .finish()
    }
}

impl Advisor {
    pub fn corpus_len(&self) -> usize {
        self.demos.len()
    }

    pub fn system_prompt(&self) -> String {
        DATASET_INSTRUCTION.replace(SO_PLACEHOLDER, &self.objective.text)
    }

    fn retrieve(&self, space: &FeatureSpace, obs: &Observation) -> Proposal {
        let query = space.features(&StateView::of(obs.tick, &obs.own));
        let idx = nearest_neighbor(&self.features, &query).expect("advisor corpus is non-empty");
        let demo = &self.demos[idx];
        Proposal {
            agent_id: self.agent_id,
            window: demo.window.clone(),
            tactical_rationale: demo.rationale.clone(),
            strategic_objective: self.objective.text.clone(),
            so_label: Some(self.objective.label),
            degraded: Vec::new(),
        }
    }

    pub fn propose(&self, space: &FeatureSpace, obs: &Observation, catalog: &ActionCatalog, opponent: &ActionCatalog) -> Proposal {
        match &self.backend {
            Backend::Retrieval => self.retrieve(space, obs),
            Backend::External(client) => {
                let req = AgentRequest {
                    system: self.system_prompt(),
                    input: textio::render_observation(obs, catalog, opponent),
                    params: AgentParams::default(),
                };
                match client.exchange(&req) {
                    Ok(text) => external_proposal(self, &text, catalog),
                    Err(e) => {
                        let mut p = self.retrieve(space, obs);
                        p.degraded.push(ParseIssue::UnknownAction(format!("agent unavailable: {e}")));
                        p
                    }
                }
            }
        }
    }
}

fn external_proposal(advisor: &Advisor, text: &str, catalog: &ActionCatalog) -> Proposal {
    let (actions, issues) = textio::parse_action_sequence(actions_part(text), catalog);
    let mut last = 0;
    let window = actions
        .into_iter()
        .filter(|a| catalog.get(&a.action_id).is_some())
        .map(|a| {
            last = a.offset.unwrap_or(last).max(last);
            WindowAction { action_id: a.action_id, offset: last }
        })
        .collect();
    Proposal {
        agent_id: advisor.agent_id,
        window,
        tactical_rationale: rationale_part(text).trim().to_string(),
        strategic_objective: advisor.objective.text.clone(),
        so_label: Some(advisor.objective.label),
        degraded: issues,
    }
}

/// Everything after the last timeframe paragraph that starts a numbered list.
fn actions_part(text: &str) -> &str {
    text.find("\n1.").or_else(|| text.find("\n1)")).map_or(text, |i| &text[i..])
}

fn rationale_part(text: &str) -> &str {
    text.find("\n1.").or_else(|| text.find("\n1)")).map_or("", |i| &text[..i])
}

/// A team of advisors sharing one feature layout.
pub struct AdvisorPool {
    pub advisors: Vec<Advisor>,
    pub space: FeatureSpace,
    pub catalog: Arc<ActionCatalog>,
}

impl std::fmt::Debug for AdvisorPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdvisorPool").field("advisors", &self.advisors).finish()
    }
}

impl AdvisorPool {
    pub fn len(&self) -> usize {
        self.advisors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advisors.is_empty()
    }

    pub fn propose_all(&self, obs: &Observation, opponent: &ActionCatalog) -> Vec<Proposal> {
        self.advisors.iter().map(|a| a.propose(&self.space, obs, &self.catalog, opponent)).collect()
    }

    /// Switches every advisor to the external agent; retrieval stays as the fallback.
    pub fn with_external(mut self, client: Arc<dyn AgentClient>) -> Self {
        for a in &mut self.advisors {
            a.backend = Backend::External(Arc::clone(&client));
        }
        self
    }
}

/// One retrieval advisor per objective, indexed over that cluster's samples.
pub fn build_pool(
    samples: &[DemoSample],
    objectives: &[StrategicObjective],
    catalog: Arc<ActionCatalog>,
    scale: FeatureScale,
) -> Result<AdvisorPool, AdvisorError> {
    let space = FeatureSpace::new(&catalog, scale);
    let mut advisors = Vec::with_capacity(objectives.len());
    for (agent_id, objective) in objectives.iter().enumerate() {
        let mut features = Vec::new();
        let mut demos = Vec::new();
        for s in samples.iter().filter(|s| s.cluster_id == Some(objective.cluster) && !s.window.is_empty()) {
            let parsed = textio::parse_state(&s.state_text)?;
            features.push(space.features(&StateView::from(&parsed)));
            demos.push(Demo { window: s.window.clone(), rationale: s.rationale.clone() });
        }
        if demos.is_empty() {
            return Err(AdvisorError::EmptyCluster(objective.cluster));
        }
        advisors.push(Advisor { agent_id, objective: objective.clone(), features, demos, backend: Backend::Retrieval });
    }
    Ok(AdvisorPool { advisors, space, catalog })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_ties_keep_first() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(nearest_neighbor(&rows, &[1.0, 0.1]), Some(0));
        assert_eq!(nearest_neighbor(&rows, &[0.0, 0.9]), Some(1));
        assert_eq!(nearest_neighbor(&[], &[0.0]), None);
    }

    #[test]
    fn external_reply_is_split() {
        let cat = ActionCatalog::builtin(crate::world::Race::Protoss);
        let advisor = Advisor {
            agent_id: 2,
            objective: StrategicObjective {
                cluster: 0,
                label: SoLabel::GroundSupportFocus,
                air_share: 0.0,
                ground_share: 1.0,
                text: "ground".into(),
            },
            features: vec![],
            demos: vec![],
            backend: Backend::Retrieval,
        };
        let text = "Immediate: pylon\nShort-term: gates\nLong-term: army\n1. BuildPylon (+0 s)\n2. Build Gateway (+20 s)\n3. Nonsense";
        let p = external_proposal(&advisor, text, &cat);
        assert_eq!(p.window.len(), 2);
        assert_eq!(p.window[1], WindowAction { action_id: "BuildGateway".into(), offset: 20 });
        assert!(p.tactical_rationale.starts_with("Immediate:"));
        assert_eq!(p.degraded, vec![ParseIssue::UnknownAction("Nonsense".into())]);
    }

    #[test]
    fn unreachable_endpoint_times_out() {
        let client = HttpAgentClient::new("http://127.0.0.1:9/agent", Duration::from_millis(300));
        let req = AgentRequest { system: String::new(), input: String::new(), params: AgentParams::default() };
        assert_eq!(client.exchange(&req), Err(AgentError::Timeout));
    }
}
