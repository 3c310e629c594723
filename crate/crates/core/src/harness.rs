//! Match runner, traces, metrics, tournaments, demonstration corpora and ablations.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::advisors::{build_pool, AdvisorError, AdvisorPool, AgentClient, AgentParams, AgentRequest};
use crate::clustering::{assign_strategic_objectives, cluster_replays, ClusterError, ClusterModel, StrategicObjective};
use crate::config::{CheatRules, HimaConfig, WorldRules};
use crate::demos::{attach_rationale, extract_samples, DemoError, DemoSample, PipelineConfig, RationaleMode, ReplayLog, ReplayMeta};
use crate::execloop::{AgentRecord, AgentStats, CommandRules, FeedbackConfig, HimaAgent, Orchestration};
use crate::opponents::{make_builtin, make_expert, OpponentError, Persona, Policy};
use crate::planner::{Aggregation, Planner, PlannerBackend, PlannerConfig};
use crate::textio;
use crate::world::{try_enqueue, ActionCatalog, ActionRequest, Category, Feasibility, Observation, Outcome, Race, World, WorldEvent};

pub const TRACE_FORMAT: &str = "hima-trace/1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid match configuration: {0}")]
    Config(String),
    #[error("trace is incomplete: {0}")]
    IncompleteTrace(String),
    #[error("side {side} made {calls} planner calls, above the bound of {bound}")]
    CallBound { side: usize, calls: u32, bound: u32 },
    #[error("unknown ablation axis `{0}`")]
    UnknownAxis(String),
    #[error(transparent)]
    Opponent(#[from] OpponentError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything a HIMA side needs besides its race.
#[derive(Clone)]
pub struct HimaSpec {
    pub pool: Arc<AdvisorPool>,
    pub planner: PlannerConfig,
    /// External planner agent; `None` uses the deterministic planner.
    pub planner_agent: Option<Arc<dyn AgentClient>>,
    /// Skip the planner and execute the first advisor's window directly.
    pub direct: bool,
    pub feedback: FeedbackConfig,
    pub commands: CommandRules,
    pub keep_planner_traces: bool,
}

impl HimaSpec {
    pub fn new(pool: Arc<AdvisorPool>, cfg: &HimaConfig) -> Self {
        Self {
            pool,
            planner: PlannerConfig {
                delta: cfg.pipeline.window_seconds,
                weights: cfg.scoring.clone(),
                ..PlannerConfig::default()
            },
            planner_agent: None,
            direct: false,
            feedback: cfg.feedback.clone(),
            commands: CommandRules::default(),
            keep_planner_traces: false,
        }
    }
}

#[derive(Clone)]
pub enum SideKind {
    Hima(HimaSpec),
    Builtin(u8),
    Expert(Persona),
    External(Arc<dyn AgentClient>),
    /// Never acts.
    Passive,
}

impl SideKind {
    pub fn label(&self) -> String {
        match self {
            SideKind::Hima(h) if h.direct => "hima-direct".into(),
            SideKind::Hima(_) => "hima".into(),
            SideKind::Builtin(l) => format!("builtin-{l}"),
            SideKind::Expert(p) => format!("expert-{}", p.key()),
            SideKind::External(_) => "external".into(),
            SideKind::Passive => "passive".into(),
        }
    }
}

#[derive(Clone)]
pub struct SideConfig {
    pub race: Race,
    pub kind: SideKind,
}

#[derive(Clone)]
pub struct MatchConfig {
    pub sides: [SideConfig; 2],
    pub seed: u64,
    pub rules: WorldRules,
    pub cheats: CheatRules,
    pub record_replay: bool,
    /// Keep the decoded trace in the result.
    pub keep_trace: bool,
    pub trace_path: Option<PathBuf>,
}

impl MatchConfig {
    pub fn new(a: SideConfig, b: SideConfig, seed: u64) -> Self {
        Self {
            sides: [a, b],
            seed,
            rules: WorldRules::default(),
            cheats: CheatRules::default(),
            record_replay: false,
            keep_trace: false,
            trace_path: None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rules.time_cap == 0 {
            return Err(HarnessError::Config("time_cap must be positive".into()));
        }
        for s in &self.sides {
            if let SideKind::Builtin(l) = s.kind {
                if !(1..=10).contains(&l) {
                    return Err(HarnessError::Config(format!("builtin level {l} is outside 1..=10")));
                }
            }
            if let SideKind::Hima(h) = &s.kind {
                if h.pool.catalog.race != s.race {
                    return Err(HarnessError::Config("advisor pool race differs from side race".into()));
                }
                if h.pool.is_empty() {
                    return Err(HarnessError::Config("advisor pool is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// Per-second sample of one side, the raw input for metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickSample {
    pub t: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub spent_minerals: u64,
    pub spent_gas: u64,
    pub techs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Meta { format: String, seed: u64, races: [Race; 2], labels: [String; 2] },
    Tick { side: usize, sample: TickSample },
    Action { t: u32, side: usize, action_id: String },
    Rejected { t: u32, side: usize, action_id: String, reason: Feasibility },
    Event { t: u32, event: WorldEvent },
    Agent { side: usize, record: AgentRecord },
    End { outcome: Outcome, duration: u32, tech_total: [u32; 2] },
}

struct TraceSink {
    hasher: Sha256,
    kept: Option<Vec<TraceRecord>>,
    file: Option<BufWriter<std::fs::File>>,
}

impl TraceSink {
    fn push(&mut self, rec: TraceRecord) -> Result<(), HarnessError> {
        let line = serde_json::to_string(&rec)?;
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        if let Some(f) = &mut self.file {
            writeln!(f, "{line}")?;
        }
        if let Some(k) = &mut self.kept {
            k.push(rec);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub seed: u64,
    pub outcome: Outcome,
    pub winner: Option<usize>,
    pub duration: u32,
    pub trace_hash: String,
    pub trace: Option<Vec<TraceRecord>>,
    pub trace_path: Option<PathBuf>,
    pub replay: Option<ReplayLog>,
    pub stats: [Option<AgentStats>; 2],
    pub series: [Vec<TickSample>; 2],
    pub tech_total: [u32; 2],
    pub labels: [String; 2],
}

impl MatchResult {
    pub fn planner_calls(&self, side: usize) -> u32 {
        self.stats[side].map_or(0, |s| s.planner_calls)
    }
}

/// Sends the rendered observation every `period` seconds and applies whatever parses.
struct ExternalPolicy {
    client: Arc<dyn AgentClient>,
    catalog: Arc<ActionCatalog>,
    opponent: Arc<ActionCatalog>,
    period: u32,
    last: Option<u32>,
}

const EXTERNAL_SYSTEM_PROMPT: &str = "You control one StarCraft II player. Reply with a numbered \
list of actions to issue now, one catalog action per line.";

impl Policy for ExternalPolicy {
    fn decide(&mut self, obs: &Observation) -> Vec<ActionRequest> {
        if self.last.is_some_and(|l| obs.tick < l + self.period) {
            return Vec::new();
        }
        self.last = Some(obs.tick);
        let req = AgentRequest {
            system: EXTERNAL_SYSTEM_PROMPT.into(),
            input: textio::render_observation(obs, &self.catalog, &self.opponent),
            params: AgentParams::default(),
        };
        let Ok(text) = self.client.exchange(&req) else { return Vec::new() };
        let (actions, _) = textio::parse_action_sequence(&text, &self.catalog);
        let mut sim = obs.own.clone();
        actions
            .into_iter()
            .filter(|a| {
                self.catalog.get(&a.action_id).is_some_and(|s| s.is_command())
                    || try_enqueue(&mut sim, &self.catalog, &a.action_id).is_ok()
            })
            .collect()
    }
}

struct PassivePolicy;

impl Policy for PassivePolicy {
    fn decide(&mut self, _obs: &Observation) -> Vec<ActionRequest> {
        Vec::new()
    }
}

fn build_policy(
    side: &SideConfig,
    opponent_race: Race,
    seed: u64,
    rules: &WorldRules,
) -> Result<(Box<dyn Policy>, bool, bool), HarnessError> {
    Ok(match &side.kind {
        SideKind::Builtin(level) => {
            let p = make_builtin(side.race, *level, seed)?;
            let (v, m) = (p.cheat_vision(), p.cheat_money());
            (Box::new(p), v, m)
        }
        SideKind::Expert(persona) => (Box::new(make_expert(side.race, *persona, seed)), false, false),
        SideKind::Passive => (Box::new(PassivePolicy), false, false),
        SideKind::External(client) => (
            Box::new(ExternalPolicy {
                client: Arc::clone(client),
                catalog: ActionCatalog::builtin(side.race),
                opponent: ActionCatalog::builtin(opponent_race),
                period: 10,
                last: None,
            }),
            false,
            false,
        ),
        SideKind::Hima(h) => {
            let opponent = ActionCatalog::builtin(opponent_race);
            let orchestration = if h.direct {
                Orchestration::Direct
            } else {
                let mut planner = Planner::new(Arc::clone(&h.pool.catalog), Arc::clone(&opponent), rules.clone(), h.planner.clone());
                if let Some(agent) = &h.planner_agent {
                    planner = planner.with_backend(PlannerBackend::External(Arc::clone(agent)));
                }
                Orchestration::Planner(Box::new(planner))
            };
            let agent = HimaAgent::new(Arc::clone(&h.pool), opponent, orchestration, h.feedback.clone(), h.commands.clone())
                .with_traces(h.keep_planner_traces);
            (Box::new(agent), false, false)
        }
    })
}

fn sample_of(state: &crate::world::PlayerState, t: u32) -> TickSample {
    TickSample {
        t,
        supply_used: state.supply_used,
        supply_cap: state.supply_cap,
        spent_minerals: state.cumulative_spent.minerals,
        spent_gas: state.cumulative_spent.gas,
        techs: state.techs.len() as u32,
    }
}

/// Plays one match to completion. Deterministic in the configuration.
pub fn run_match(cfg: &MatchConfig) -> Result<MatchResult, HarnessError> {
    cfg.validate()?;
    let races = [cfg.sides[0].race, cfg.sides[1].race];
    let world = World::new(races, cfg.rules.clone());
    let mut state = world.initial_state(cfg.seed);
    let mut policies: Vec<Box<dyn Policy>> = Vec::with_capacity(2);
    let mut vision = [false; 2];
    for p in 0..2 {
        let side_seed = crate::opponents::mix_seed(cfg.seed, p as u64 + 1);
        let (policy, v, money) = build_policy(&cfg.sides[p], races[1 - p], side_seed, &cfg.rules)?;
        if money {
            world.grant_cheat_money(&mut state, p, &cfg.cheats);
        }
        vision[p] = v;
        policies.push(policy);
    }
    let labels = [cfg.sides[0].kind.label(), cfg.sides[1].kind.label()];
    let mut sink = TraceSink {
        hasher: Sha256::new(),
        kept: cfg.keep_trace.then(Vec::new),
        file: match &cfg.trace_path {
            Some(p) => Some(BufWriter::new(std::fs::File::create(p)?)),
            None => None,
        },
    };
    sink.push(TraceRecord::Meta { format: TRACE_FORMAT.into(), seed: cfg.seed, races, labels: labels.clone() })?;
    let mut replay = cfg.record_replay.then(|| {
        ReplayLog::new(ReplayMeta {
            id: format!("{}-{}-{}-{}", labels[0], labels[1], races[0].name(), cfg.seed),
            races,
            seed: cfg.seed,
            winner: None,
            duration: 0,
            final_units: Default::default(),
            demonstrators: [true, true],
            labels: labels.clone(),
        })
    });
    let mut series: [Vec<TickSample>; 2] = [Vec::new(), Vec::new()];

    while !state.outcome.is_terminal() {
        let t = state.tick;
        for p in 0..2 {
            let obs = world.observe(&state, p, vision[p]);
            let actions = policies[p].decide(&obs);
            for a in actions {
                let verdict = world.validate_action(&state, p, &a.action_id);
                if !verdict.is_ok() {
                    sink.push(TraceRecord::Rejected { t, side: p, action_id: a.action_id, reason: verdict })?;
                    continue;
                }
                if let Some(log) = replay.as_mut() {
                    if !world.catalog(p).get(&a.action_id).is_some_and(|s| s.is_command()) {
                        let (player, cat) = (&state.players[p], world.catalog(p));
                        log.record(t, p, &a.action_id, || textio::render_player_state(t, player, cat));
                    }
                }
                let events = world
                    .apply_action(&mut state, p, &a.action_id)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                sink.push(TraceRecord::Action { t, side: p, action_id: a.action_id })?;
                for event in events {
                    sink.push(TraceRecord::Event { t, event })?;
                }
            }
            for record in policies[p].drain_records() {
                sink.push(TraceRecord::Agent { side: p, record })?;
            }
        }
        let events = world.tick(&mut state, 1).map_err(|e| HarnessError::Config(e.to_string()))?;
        for policy in policies.iter_mut() {
            policy.observe_events(state.tick, &events);
        }
        for event in events {
            sink.push(TraceRecord::Event { t: state.tick, event })?;
        }
        for (p, s) in series.iter_mut().enumerate() {
            let sample = sample_of(&state.players[p], state.tick);
            s.push(sample);
            sink.push(TraceRecord::Tick { side: p, sample })?;
        }
    }
    let tech_total = [0, 1].map(|p| tech_total(world.catalog(p)));
    let duration = state.tick;
    sink.push(TraceRecord::End { outcome: state.outcome, duration, tech_total })?;
    if let Some(f) = &mut sink.file {
        f.flush()?;
    }
    let winner = match state.outcome {
        Outcome::Win(p) => Some(p),
        _ => None,
    };
    if let Some(log) = replay.as_mut() {
        log.meta.winner = winner;
        log.meta.duration = duration;
        log.meta.final_units = [state.players[0].units.clone(), state.players[1].units.clone()];
        log.meta.demonstrators = [0, 1].map(|p| !matches!(cfg.sides[p].kind, SideKind::Builtin(_) | SideKind::Passive));
    }
    let stats = [policies[0].agent_stats(), policies[1].agent_stats()];
    for (p, side) in cfg.sides.iter().enumerate() {
        if let (SideKind::Hima(h), Some(st)) = (&side.kind, stats[p]) {
            let bound = st.call_bound(duration, h.feedback.replan_period);
            if st.planner_calls > bound {
                return Err(HarnessError::CallBound { side: p, calls: st.planner_calls, bound });
            }
        }
    }
    let hash = sink.hasher.finalize();
    Ok(MatchResult {
        seed: cfg.seed,
        outcome: state.outcome,
        winner,
        duration,
        trace_hash: hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }),
        trace: sink.kept,
        trace_path: cfg.trace_path.clone(),
        replay,
        stats,
        series,
        tech_total,
        labels,
    })
}

pub fn tech_total(catalog: &ActionCatalog) -> u32 {
    catalog.actions.iter().filter(|a| a.category == Category::TechnologyDevelopment).count() as u32
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, HarnessError> {
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pbr: f64,
    pub rur: u64,
    /// Whether maximum supply was ever reached; otherwise `rur` is whole-game spend.
    pub max_supply_reached: bool,
    pub apu: f64,
    pub tr: f64,
}

/// Macro metrics over a side's per-second samples.
pub fn metrics_from_samples(samples: &[TickSample], techs_total: u32, max_supply: u32) -> Result<MetricReport, HarnessError> {
    let last = samples.last().ok_or_else(|| HarnessError::IncompleteTrace("no tick samples".into()))?;
    let first_max = samples.iter().position(|s| s.supply_used >= max_supply);
    let at_max = samples.iter().filter(|s| s.supply_used >= max_supply).count();
    let upto = first_max.map_or(samples.len(), |i| i + 1);
    let spend_at = |s: &TickSample| s.spent_minerals + s.spent_gas;
    let apu = samples[..upto]
        .iter()
        .map(|s| if s.supply_cap == 0 { 0.0 } else { f64::from(s.supply_used) / f64::from(s.supply_cap) })
        .sum::<f64>()
        / upto as f64;
    Ok(MetricReport {
        pbr: at_max as f64 / samples.len() as f64,
        rur: first_max.map_or(spend_at(last), |i| spend_at(&samples[i])),
        max_supply_reached: first_max.is_some(),
        apu,
        tr: if techs_total == 0 { 0.0 } else { f64::from(last.techs) / f64::from(techs_total) },
    })
}

pub fn compute_metrics(result: &MatchResult, side: usize, rules: &WorldRules) -> Result<MetricReport, HarnessError> {
    metrics_from_samples(&result.series[side], result.tech_total[side], rules.max_supply)
}

/// Metrics recomputed from a decoded trace.
pub fn metrics_from_trace(trace: &[TraceRecord], side: usize, max_supply: u32) -> Result<MetricReport, HarnessError> {
    let samples: Vec<TickSample> = trace
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Tick { side: s, sample } if *s == side => Some(*sample),
            _ => None,
        })
        .collect();
    let total = trace
        .iter()
        .find_map(|r| match r {
            TraceRecord::End { tech_total, .. } => Some(tech_total[side]),
            _ => None,
        })
        .ok_or_else(|| HarnessError::IncompleteTrace("missing end record".into()))?;
    metrics_from_samples(&samples, total, max_supply)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub winner: Option<usize>,
    pub duration: u32,
    pub planner_calls: u32,
    pub trace_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub side: usize,
    pub wins: usize,
    pub n: usize,
    pub fraction: f64,
    pub results: Vec<SeedResult>,
}

impl WinRate {
    pub fn mean_planner_calls(&self) -> f64 {
        if self.results.is_empty() {
            return 0.0;
        }
        self.results.iter().map(|r| f64::from(r.planner_calls)).sum::<f64>() / self.results.len() as f64
    }
}

/// Runs seeds `seed_base..seed_base + n` in parallel; draws count as non-wins.
pub fn win_rate(template: &MatchConfig, side: usize, n: usize, seed_base: u64, workers: usize) -> Result<WinRate, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("n must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| seed_base + i).collect();
    let run = || crate::parallel::map_ordered(&seeds, |&s| run_match(&template.with_seed(s)));
    let outcomes = crate::parallel::with_workers(workers, run);
    let mut results = Vec::with_capacity(n);
    for r in outcomes {
        let r = r?;
        results.push(SeedResult {
            seed: r.seed,
            winner: r.winner,
            duration: r.duration,
            planner_calls: r.planner_calls(side),
            trace_hash: r.trace_hash,
        });
    }
    let wins = results.iter().filter(|r| r.winner == Some(side)).count();
    Ok(WinRate { side, wins, n, fraction: wins as f64 / n as f64, results })
}

/// Demonstration games: expert personas of `race` against builtin levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub race: Race,
    pub opponent_races: Vec<Race>,
    pub levels: Vec<u8>,
    pub seeds_per_pairing: usize,
    pub seed_base: u64,
}

impl CorpusSpec {
    pub fn standard(race: Race, opponent: Race) -> Self {
        Self { race, opponent_races: vec![opponent], levels: vec![3, 4, 5, 6], seeds_per_pairing: 6, seed_base: 10_000 }
    }
}

pub fn generate_corpus(spec: &CorpusSpec, rules: &WorldRules, workers: usize) -> Result<Vec<ReplayLog>, HarnessError> {
    let mut configs = Vec::new();
    for persona in Persona::ALL {
        for &opp in &spec.opponent_races {
            for &level in &spec.levels {
                for i in 0..spec.seeds_per_pairing as u64 {
                    let mut cfg = MatchConfig::new(
                        SideConfig { race: spec.race, kind: SideKind::Expert(persona) },
                        SideConfig { race: opp, kind: SideKind::Builtin(level) },
                        spec.seed_base + i * 97 + u64::from(level) * 7919 + persona as u64 * 104_729,
                    );
                    cfg.rules = rules.clone();
                    cfg.record_replay = true;
                    configs.push(cfg);
                }
            }
        }
    }
    let results = crate::parallel::with_workers(workers, || crate::parallel::map_ordered(&configs, run_match));
    let mut logs = Vec::with_capacity(results.len());
    for r in results {
        if let Some(log) = r?.replay {
            logs.push(log);
        }
    }
    Ok(logs)
}

pub struct HimaStack {
    pub pool: Arc<AdvisorPool>,
    pub model: ClusterModel,
    pub objectives: Vec<StrategicObjective>,
    pub samples: Vec<DemoSample>,
}

/// Clusters the corpus, labels objectives and indexes one advisor per non-empty cluster.
pub fn build_stack(corpus: &[ReplayLog], race: Race, k: usize, seed: u64, cfg: &HimaConfig) -> Result<HimaStack, HarnessError> {
    let catalog = ActionCatalog::builtin(race);
    let model = cluster_replays(corpus, &catalog, k, seed, cfg.pipeline.winners_only, cfg.clustering.max_iterations)?;
    let objectives = assign_strategic_objectives(&model, &catalog, cfg.clustering.dominance_threshold);
    let pipeline = PipelineConfig {
        window_seconds: cfg.pipeline.window_seconds,
        rationale_mode: RationaleMode::Template,
        winners_only: cfg.pipeline.winners_only,
    };
    let mut samples = Vec::new();
    for a in &model.assignments {
        let Some(log) = corpus.iter().find(|l| l.meta.id == a.member.replay_id) else { continue };
        let extracted = match extract_samples(log, &pipeline, a.member.player) {
            Ok(s) => s,
            Err(DemoError::EmptyReplay(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        for mut s in extracted {
            s.cluster_id = Some(a.cluster);
            samples.push(attach_rationale(s, &pipeline, &catalog, None)?);
        }
    }
    let populated: Vec<StrategicObjective> =
        objectives.iter().filter(|o| samples.iter().any(|s| s.cluster_id == Some(o.cluster))).cloned().collect();
    let pool = build_pool(&samples, &populated, catalog, cfg.features.clone())?;
    Ok(HimaStack { pool: Arc::new(pool), model, objectives, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AblationAxis {
    AgentCount(Vec<usize>),
    Aggregation(Vec<Aggregation>),
    Tcot(Vec<bool>),
    Delta(Vec<u32>),
}

impl AblationAxis {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        Ok(match name {
            "agent_count" | "agents" => AblationAxis::AgentCount(vec![1, 2, 3, 4, 5]),
            "aggregation" => AblationAxis::Aggregation(vec![Aggregation::Simple, Aggregation::Ngt, Aggregation::NgtTrSo]),
            "tcot" => AblationAxis::Tcot(vec![false, true]),
            "delta" => AblationAxis::Delta(vec![60, 180, 300]),
            other => return Err(HarnessError::UnknownAxis(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub value: String,
    pub win_rate: f64,
    pub wins: usize,
    pub n: usize,
    pub mean_planner_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub axis: AblationAxis,
    pub race: Race,
    pub opponent: Race,
    pub level: u8,
    pub seeds: usize,
    pub seed_base: u64,
    pub workers: usize,
}

/// One win-rate cell per axis value against a fixed builtin level.
pub fn ablate(spec: &AblationSpec, corpus: &[ReplayLog], cfg: &HimaConfig) -> Result<Vec<AblationRow>, HarnessError> {
    let base_stack = build_stack(corpus, spec.race, cfg.clustering.k, 7, cfg)?;
    let cell = |axis: &str, value: String, hima: HimaSpec| -> Result<AblationRow, HarnessError> {
        let mut m = MatchConfig::new(
            SideConfig { race: spec.race, kind: SideKind::Hima(hima) },
            SideConfig { race: spec.opponent, kind: SideKind::Builtin(spec.level) },
            0,
        );
        m.rules = cfg.world.clone();
        m.cheats = cfg.cheats.clone();
        let wr = win_rate(&m, 0, spec.seeds, spec.seed_base, spec.workers)?;
        Ok(AblationRow {
            axis: axis.into(),
            value,
            win_rate: wr.fraction,
            wins: wr.wins,
            n: wr.n,
            mean_planner_calls: wr.mean_planner_calls(),
        })
    };
    let mut rows = Vec::new();
    match &spec.axis {
        AblationAxis::AgentCount(ks) => {
            for &k in ks {
                let stack = build_stack(corpus, spec.race, k, 7, cfg)?;
                rows.push(cell("agent_count", k.to_string(), HimaSpec::new(stack.pool, cfg))?);
            }
        }
        AblationAxis::Aggregation(modes) => {
            for &mode in modes {
                let mut h = HimaSpec::new(Arc::clone(&base_stack.pool), cfg);
                h.planner.aggregation = mode;
                rows.push(cell("aggregation", format!("{mode:?}"), h)?);
            }
        }
        AblationAxis::Tcot(flags) => {
            for &on in flags {
                let mut h = HimaSpec::new(Arc::clone(&base_stack.pool), cfg);
                h.planner.tcot = on;
                rows.push(cell("tcot", on.to_string(), h)?);
            }
        }
        AblationAxis::Delta(deltas) => {
            for &d in deltas {
                let mut h = HimaSpec::new(Arc::clone(&base_stack.pool), cfg);
                h.planner.delta = d;
                h.feedback.replan_period = d;
                rows.push(cell("delta", d.to_string(), h)?);
            }
        }
    }
    Ok(rows)
}

pub fn write_table(rows: &[AblationRow], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "axis\tvalue\twin_rate\twins\tn\tmean_planner_calls")?;
    for r in rows {
        writeln!(w, "{}\t{}\t{:.4}\t{}\t{}\t{:.2}", r.axis, r.value, r.win_rate, r.wins, r.n, r.mean_planner_calls)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: u32, used: u32, cap: u32, spent: u64) -> TickSample {
        TickSample { t, supply_used: used, supply_cap: cap, spent_minerals: spent, spent_gas: 0, techs: 0 }
    }

    #[test]
    fn never_maxed_uses_whole_game_spend() {
        let s = [sample(1, 10, 20, 50), sample(2, 12, 20, 75)];
        let m = metrics_from_samples(&s, 24, 200).unwrap();
        assert_eq!(m.pbr, 0.0);
        assert_eq!(m.rur, 75);
        assert!(!m.max_supply_reached);
        assert_eq!(m.tr, 0.0);
        assert!((m.apu - 0.55).abs() < 1e-12);
    }

    #[test]
    fn empty_series_is_incomplete() {
        assert!(matches!(metrics_from_samples(&[], 1, 200), Err(HarnessError::IncompleteTrace(_))));
    }

    #[test]
    fn builtin_mirror_is_deterministic() {
        let cfg = MatchConfig::new(
            SideConfig { race: Race::Zerg, kind: SideKind::Builtin(4) },
            SideConfig { race: Race::Zerg, kind: SideKind::Builtin(4) },
            42,
        );
        let a = run_match(&cfg).unwrap();
        let b = run_match(&cfg).unwrap();
        assert_eq!(a.trace_hash, b.trace_hash);
        assert_eq!(a.outcome, b.outcome);
    }
}
