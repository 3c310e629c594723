//! Plan execution with deferred retries, threat detection and replanning.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::advisors::AdvisorPool;
use crate::opponents::Policy;
use crate::planner::{Bucket, FinalPlan, PlanContext, Planner, PlannerTrace};
use crate::world::{
    try_enqueue, ActionCatalog, ActionRequest, Feasibility, GameState, Observation, PlayerState, Victor, World,
    WorldError, WorldEvent, ATTACK, SCOUT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    pub threat_threshold: u32,
    pub replan_period: u32,
    pub max_retries_per_action: u32,
    pub retry_delay: u32,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { threat_threshold: 10, replan_period: 180, max_retries_per_action: 2, retry_delay: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub tick: u32,
    pub action_id: String,
    pub reason: Feasibility,
    /// Retries already spent when this validation failed.
    pub retry_count: u32,
    /// The entry was removed from the plan after this failure.
    pub dropped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplanDecision {
    None,
    Periodic,
    ThreatDiscard,
    Exhausted,
}

pub fn detect_threat(obs: &Observation, cfg: &FeedbackConfig) -> bool {
    obs.visible_enemy_count >= cfg.threat_threshold
}

/// A missing `last_plan_time` means no plan was ever made and counts as periodic.
pub fn should_replan(
    now: u32,
    last_plan_time: Option<u32>,
    threat: bool,
    plan_exhausted: bool,
    cfg: &FeedbackConfig,
) -> ReplanDecision {
    if threat {
        return ReplanDecision::ThreatDiscard;
    }
    match last_plan_time {
        None => ReplanDecision::Periodic,
        Some(last) if now.saturating_sub(last) >= cfg.replan_period => ReplanDecision::Periodic,
        _ if plan_exhausted => ReplanDecision::Exhausted,
        _ => ReplanDecision::None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub action_id: String,
    pub due: u32,
    pub retries: u32,
    pub bucket: Bucket,
}

/// The executable remainder of a plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivePlan {
    pub created_at: u32,
    pub entries: Vec<PendingEntry>,
}

impl ActivePlan {
    pub fn from_plan(plan: &FinalPlan) -> Self {
        Self {
            created_at: plan.created_at,
            entries: plan
                .entries
                .iter()
                .map(|e| PendingEntry { action_id: e.action_id.clone(), due: e.earliest_time, retries: 0, bucket: e.bucket })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Validates every due entry against `own` in plan order. Returns the action
/// ids to apply (already checked in sequence) and the failures.
/// Long-term entries are context for the next plan and never execute.
pub fn execute_due(
    plan: &mut ActivePlan,
    own: &PlayerState,
    catalog: &ActionCatalog,
    now: u32,
    cfg: &FeedbackConfig,
) -> (Vec<String>, Vec<FailureRecord>) {
    let mut sim = own.clone();
    let mut executed = Vec::new();
    let mut failures = Vec::new();
    plan.entries.retain_mut(|e| {
        if e.due > now || e.bucket == Bucket::LongTerm {
            return true;
        }
        let verdict = try_enqueue(&mut sim, catalog, &e.action_id);
        if verdict.is_ok() {
            executed.push(e.action_id.clone());
            return false;
        }
        let dropped = e.retries >= cfg.max_retries_per_action;
        failures.push(FailureRecord { tick: now, action_id: e.action_id.clone(), reason: verdict, retry_count: e.retries, dropped });
        e.retries += 1;
        e.due = now + cfg.retry_delay;
        !dropped
    });
    (executed, failures)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub events: Vec<WorldEvent>,
    pub executed: Vec<String>,
    pub failures: Vec<FailureRecord>,
}

/// Advances one second, then runs the entries due at the new time.
pub fn step_plan(
    world: &World,
    state: &mut GameState,
    player: usize,
    plan: &mut ActivePlan,
    cfg: &FeedbackConfig,
) -> Result<StepReport, WorldError> {
    let events = world.tick(state, 1)?;
    let (executed, failures) = execute_due(plan, &state.players[player], world.catalog(player), state.tick, cfg);
    for id in &executed {
        world.apply_action(state, player, id)?;
    }
    Ok(StepReport { events, executed, failures })
}

/// Rule-driven general commands issued outside of plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRules {
    pub enabled: bool,
    /// Army supply needed before attacking.
    pub attack_supply: u32,
    pub attack_after: u32,
    pub scout_period: Option<u32>,
}

impl Default for CommandRules {
    fn default() -> Self {
        Self { enabled: true, attack_supply: 60, attack_after: 420, scout_period: Some(300) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStats {
    pub planner_calls: u32,
    pub advisor_calls: u32,
    pub threat_events: u32,
    pub exhaustion_events: u32,
    pub failures: u32,
    pub dropped: u32,
    pub executed: u32,
}

impl AgentStats {
    /// Most planner calls a match of `duration` seconds may spend.
    pub fn call_bound(&self, duration: u32, replan_period: u32) -> u32 {
        duration.div_ceil(replan_period.max(1)) + self.threat_events + self.exhaustion_events
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentRecord {
    Plan { t: u32, decision: ReplanDecision, entries: usize, trace: Option<Box<PlannerTrace>> },
    Threat { t: u32, visible: u32 },
    Failure(FailureRecord),
}

pub enum Orchestration {
    /// Proposals go through the strategic planner.
    Planner(Box<Planner>),
    /// The first advisor's window is executed as proposed.
    Direct,
}

/// The hierarchical agent: advisors propose, the planner decides, the executor retries.
pub struct HimaAgent {
    pool: Arc<AdvisorPool>,
    opponent_catalog: Arc<ActionCatalog>,
    orchestration: Orchestration,
    feedback: FeedbackConfig,
    commands: CommandRules,
    plan: ActivePlan,
    last_plan: Option<u32>,
    exhausted_fired: bool,
    threat_prev: bool,
    pending_failures: Vec<FailureRecord>,
    battle_notes: Vec<String>,
    last_scout: Option<u32>,
    player: Option<usize>,
    last_context: Option<PlanContext>,
    keep_traces: bool,
    stats: AgentStats,
    records: Vec<AgentRecord>,
}

impl HimaAgent {
    pub fn new(
        pool: Arc<AdvisorPool>,
        opponent_catalog: Arc<ActionCatalog>,
        orchestration: Orchestration,
        feedback: FeedbackConfig,
        commands: CommandRules,
    ) -> Self {
        Self {
            pool,
            opponent_catalog,
            orchestration,
            feedback,
            commands,
            plan: ActivePlan::default(),
            last_plan: None,
            exhausted_fired: false,
            threat_prev: false,
            pending_failures: Vec::new(),
            battle_notes: Vec::new(),
            last_scout: None,
            player: None,
            last_context: None,
            keep_traces: false,
            stats: AgentStats::default(),
            records: Vec::new(),
        }
    }

    /// Keeps full planner traces in the records.
    pub fn with_traces(mut self, keep: bool) -> Self {
        self.keep_traces = keep;
        self
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    pub fn plan(&self) -> &ActivePlan {
        &self.plan
    }

    /// Context given to the most recent planner call.
    pub fn last_context(&self) -> Option<&PlanContext> {
        self.last_context.as_ref()
    }

    /// Queues an action into the current plan, due now. Useful for probing feedback.
    pub fn inject(&mut self, action_id: &str, due: u32) {
        self.plan.entries.insert(0, PendingEntry { action_id: action_id.into(), due, retries: 0, bucket: Bucket::Immediate });
    }

    fn replan(&mut self, obs: &Observation, decision: ReplanDecision) {
        let proposals = self.pool.propose_all(obs, &self.opponent_catalog);
        self.stats.advisor_calls += proposals.len() as u32;
        let now = obs.tick;
        let (plan, trace) = match &self.orchestration {
            Orchestration::Planner(planner) => {
                let ctx = PlanContext {
                    obs: obs.clone(),
                    proposals,
                    failure_records: std::mem::take(&mut self.pending_failures),
                    battle_events: std::mem::take(&mut self.battle_notes),
                    game_time: now,
                };
                let result = planner.plan(&ctx, self.stats.planner_calls);
                self.stats.planner_calls += 1;
                self.last_context = Some(ctx);
                match result {
                    Ok((plan, trace)) => (ActivePlan::from_plan(&plan), Some(trace)),
                    Err(_) => (ActivePlan { created_at: now, entries: Vec::new() }, None),
                }
            }
            Orchestration::Direct => {
                self.pending_failures.clear();
                self.battle_notes.clear();
                let entries = proposals
                    .first()
                    .map(|p| {
                        p.window
                            .iter()
                            .map(|w| PendingEntry { action_id: w.action_id.clone(), due: now + w.offset, retries: 0, bucket: Bucket::ShortTerm })
                            .collect()
                    })
                    .unwrap_or_default();
                (ActivePlan { created_at: now, entries }, None)
            }
        };
        self.plan = plan;
        self.last_plan = Some(now);
        self.exhausted_fired = false;
        self.records.push(AgentRecord::Plan {
            t: now,
            decision,
            entries: self.plan.entries.len(),
            trace: trace.filter(|_| self.keep_traces).map(Box::new),
        });
    }

    fn commands(&mut self, obs: &Observation, sim: &PlayerState, out: &mut Vec<ActionRequest>) {
        if !self.commands.enabled {
            return;
        }
        let catalog = &self.pool.catalog;
        if !obs.engaged && obs.tick >= self.commands.attack_after && sim.army_supply(catalog) >= self.commands.attack_supply {
            out.push(ActionRequest::new(ATTACK));
        }
        if let Some(period) = self.commands.scout_period {
            if self.last_scout.is_none_or(|s| obs.tick >= s + period) && obs.tick > 0 {
                self.last_scout = Some(obs.tick);
                out.push(ActionRequest::new(SCOUT));
            }
        }
    }
}

impl Policy for HimaAgent {
    fn decide(&mut self, obs: &Observation) -> Vec<ActionRequest> {
        self.player = Some(obs.player);
        let now = obs.tick;
        let threat = detect_threat(obs, &self.feedback);
        let rising = threat && !self.threat_prev;
        self.threat_prev = threat;
        if rising {
            self.stats.threat_events += 1;
            self.records.push(AgentRecord::Threat { t: now, visible: obs.visible_enemy_count });
        }
        let exhausted = self.plan.is_empty() && !self.exhausted_fired;
        let decision = should_replan(now, self.last_plan, rising, exhausted, &self.feedback);
        if decision == ReplanDecision::Exhausted {
            self.stats.exhaustion_events += 1;
        }
        if decision != ReplanDecision::None {
            self.replan(obs, decision);
            if decision == ReplanDecision::Exhausted {
                self.exhausted_fired = true;
            }
        }
        let (executed, failures) = execute_due(&mut self.plan, &obs.own, &self.pool.catalog, now, &self.feedback);
        self.stats.executed += executed.len() as u32;
        self.stats.failures += failures.len() as u32;
        self.stats.dropped += failures.iter().filter(|f| f.dropped).count() as u32;
        for f in &failures {
            self.records.push(AgentRecord::Failure(f.clone()));
        }
        self.pending_failures.extend(failures);
        let mut sim = obs.own.clone();
        let mut out: Vec<ActionRequest> = executed
            .into_iter()
            .inspect(|id| {
                let _ = try_enqueue(&mut sim, &self.pool.catalog, id);
            })
            .map(ActionRequest::new)
            .collect();
        self.commands(obs, &sim, &mut out);
        out
    }

    fn observe_events(&mut self, tick: u32, events: &[WorldEvent]) {
        let Some(me) = self.player else { return };
        let fmt_losses = |m: &std::collections::BTreeMap<String, u32>| {
            if m.is_empty() {
                "nothing".to_string()
            } else {
                m.iter().map(|(k, v)| format!("{k} x{v}")).collect::<Vec<_>>().join(", ")
            }
        };
        for e in events {
            let note = match e {
                WorldEvent::EngagementStarted { attacker, committed } if *attacker != me => {
                    format!("t={tick} enemy attack with {committed} units")
                }
                WorldEvent::EngagementStarted { committed, .. } => format!("t={tick} we attacked with {committed} units"),
                WorldEvent::CombatRound { attacker, round, attacker_losses, defender_losses } => {
                    let (ours, theirs) =
                        if *attacker == me { (attacker_losses, defender_losses) } else { (defender_losses, attacker_losses) };
                    format!("t={tick} round {round}: lost {}; destroyed {}", fmt_losses(ours), fmt_losses(theirs))
                }
                WorldEvent::EngagementEnded { attacker, victor } => {
                    let won = match victor {
                        Victor::Attacker => *attacker == me,
                        Victor::Defender => *attacker != me,
                        Victor::Draw => false,
                    };
                    format!("t={tick} engagement ended, {}", if won { "we held the field" } else { "we lost the field" })
                }
                _ => continue,
            };
            self.battle_notes.push(note);
        }
    }

    fn agent_stats(&self) -> Option<AgentStats> {
        Some(self.stats)
    }

    fn drain_records(&mut self) -> Vec<AgentRecord> {
        std::mem::take(&mut self.records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldRules;
    use crate::world::Race;

    #[test]
    fn threat_boundary() {
        let world = World::new([Race::Protoss, Race::Zerg], WorldRules::default());
        let mut obs = world.observe(&world.initial_state(0), 0, false);
        let cfg = FeedbackConfig::default();
        obs.visible_enemy_count = 10;
        assert!(detect_threat(&obs, &cfg));
        obs.visible_enemy_count = 9;
        assert!(!detect_threat(&obs, &cfg));
        obs.visible_enemy_count = 0;
        assert!(!detect_threat(&obs, &cfg));
    }

    #[test]
    fn replan_priorities() {
        let cfg = FeedbackConfig::default();
        assert_eq!(should_replan(50, Some(0), true, true, &cfg), ReplanDecision::ThreatDiscard);
        assert_eq!(should_replan(180, Some(0), false, false, &cfg), ReplanDecision::Periodic);
        assert_eq!(should_replan(100, Some(0), false, false, &cfg), ReplanDecision::None);
        assert_eq!(should_replan(100, Some(0), false, true, &cfg), ReplanDecision::Exhausted);
        assert_eq!(should_replan(0, None, false, false, &cfg), ReplanDecision::Periodic);
    }

    fn entry(id: &str, due: u32) -> PendingEntry {
        PendingEntry { action_id: id.into(), due, retries: 0, bucket: Bucket::Immediate }
    }

    #[test]
    fn three_failures_then_drop() {
        let world = World::new([Race::Protoss, Race::Zerg], WorldRules::default());
        let mut state = world.initial_state(0);
        let cfg = FeedbackConfig::default();
        let mut plan = ActivePlan { created_at: 0, entries: vec![entry("TrainZealot", 1)] };
        let mut failures = Vec::new();
        for _ in 0..40 {
            failures.extend(step_plan(&world, &mut state, 0, &mut plan, &cfg).unwrap().failures);
        }
        assert_eq!(failures.len(), 3);
        assert_eq!(failures.iter().map(|f| f.tick).collect::<Vec<_>>(), [1, 11, 21]);
        assert_eq!(failures.iter().map(|f| f.retry_count).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(failures[2].dropped && !failures[1].dropped);
        assert_eq!(failures[0].reason, Feasibility::MissingPrerequisite(vec!["Gateway".into()]));
        assert!(plan.is_empty());
    }

    #[test]
    fn completion_precedes_due_actions() {
        let world = World::new([Race::Protoss, Race::Zerg], WorldRules::default());
        let mut state = world.initial_state(0);
        state.players[0].minerals = 1000;
        world.apply_action(&mut state, 0, "BuildPylon").unwrap();
        for _ in 0..world.catalog(0).get("BuildPylon").unwrap().build_time {
            world.tick(&mut state, 1).unwrap();
        }
        world.apply_action(&mut state, 0, "BuildGateway").unwrap();
        let gateway_time = world.catalog(0).get("BuildGateway").unwrap().build_time;
        for _ in 0..gateway_time - 1 {
            world.tick(&mut state, 1).unwrap();
        }
        let cfg = FeedbackConfig::default();
        let mut plan = ActivePlan { created_at: 0, entries: vec![entry("TrainZealot", state.tick + 1)] };
        let report = step_plan(&world, &mut state, 0, &mut plan, &cfg).unwrap();
        assert_eq!(report.executed, ["TrainZealot"]);
        assert!(report.failures.is_empty());
    }

    #[test]
    fn empty_plan_only_ticks() {
        let world = World::new([Race::Protoss, Race::Zerg], WorldRules::default());
        let mut state = world.initial_state(0);
        let mut plan = ActivePlan::default();
        let report = step_plan(&world, &mut state, 0, &mut plan, &FeedbackConfig::default()).unwrap();
        assert!(report.executed.is_empty() && report.failures.is_empty());
        assert_eq!(state.tick, 1);
    }
}
