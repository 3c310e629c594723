//! Strategic planner: aggregates advisor proposals into one time-bucketed plan.
//!
//! Stages run in order: assess the situation, resolve disagreement between
//! advisors, formulate an ordered strategy, then decompose it into
//! immediate, short-term and long-term entries by forward projection.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisors::{AgentClient, AgentParams, AgentRequest, Proposal, WindowAction};
use crate::clustering::SoLabel;
use crate::config::{ScoringWeights, WorldRules};
use crate::execloop::FailureRecord;
use crate::textio::{self, ParseIssue, TextError};
use crate::world::{check_feasibility, try_enqueue, ActionCatalog, ActionSpec, Category, Feasibility, Observation, PlayerState};

pub const PLANNER_SYSTEM_PROMPT: &str = "You are the strategic planner of a StarCraft II team. \
Several advisors proposed action windows below. Assess the situation, resolve their \
disagreements, and reply with a single numbered action sequence with offsets, \
one action per line, for example `1. BuildPylon (+0 s)`.";

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no proposals to plan from")]
    NoProposals,
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub obs: Observation,
    pub proposals: Vec<Proposal>,
    pub failure_records: Vec<FailureRecord>,
    pub battle_events: Vec<String>,
    pub game_time: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Aggregation {
    /// Concatenate proposals, keeping actions whose prerequisites can be met.
    Simple,
    /// Nominal group technique without objective alignment.
    Ngt,
    /// Nominal group technique plus objective alignment in conflict scores.
    #[default]
    NgtTrSo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub delta: u32,
    pub aggregation: Aggregation,
    pub tcot: bool,
    pub weights: ScoringWeights,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { delta: 180, aggregation: Aggregation::NgtTrSo, tcot: true, weights: ScoringWeights::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bucket {
    Immediate,
    ShortTerm,
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub action_id: String,
    pub earliest_time: u32,
    pub bucket: Bucket,
    /// Advisors that proposed this instance.
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalPlan {
    pub created_at: u32,
    pub horizon: u32,
    pub entries: Vec<PlanEntry>,
}

impl FinalPlan {
    pub fn bucket(&self, b: Bucket) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(move |e| e.bucket == b)
    }

    pub fn action_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.action_id.clone()).or_insert(0) += 1;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub tick: u32,
    pub minerals: u32,
    pub gas: u32,
    pub projected_minerals: u64,
    pub projected_gas: u64,
    pub supply_headroom: u32,
    pub visible_enemy: u32,
    pub engaged: bool,
    pub feasible_now: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcedAction {
    pub action_id: String,
    pub offset: u32,
    pub sources: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictKind {
    ResourceOversubscription,
    UniqueDuplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictResolution {
    pub kind: ConflictKind,
    pub winners: Vec<SourcedAction>,
    pub losers: Vec<SourcedAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResolvedStrategy {
    pub agreed: Vec<SourcedAction>,
    pub conflict_resolutions: Vec<ConflictResolution>,
    pub adopted_isolated: Vec<SourcedAction>,
    pub rejected_isolated: Vec<SourcedAction>,
    pub synthesis_order: Vec<SourcedAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerTrace {
    pub invocation: u32,
    pub assessment: Assessment,
    pub resolved: ResolvedStrategy,
    /// Actions removed while formulating (already owned, queued or repeated).
    pub redundant: Vec<String>,
    /// Action ids kept out of the immediate bucket after a recent drop.
    pub barred: Vec<String>,
    pub fallback: bool,
    /// Actions an external planner produced that no advisor proposed.
    pub invented: Vec<String>,
    pub parse_issues: Vec<ParseIssue>,
}

pub enum PlannerBackend {
    Deterministic,
    External(Arc<dyn AgentClient>),
}

pub struct Planner {
    pub catalog: Arc<ActionCatalog>,
    pub opponent_catalog: Arc<ActionCatalog>,
    pub rules: WorldRules,
    pub config: PlannerConfig,
    pub backend: PlannerBackend,
}

fn cost_of(spec: &ActionSpec) -> (u64, u64) {
    (u64::from(spec.mineral_cost), u64::from(spec.gas_cost))
}

/// Objective alignment of one action for an advisor label.
pub fn so_alignment(spec: &ActionSpec, label: Option<SoLabel>) -> f64 {
    let army = spec.is_army_unit() || spec.category == Category::TechnologyDevelopment;
    match label {
        Some(SoLabel::AirFocus) if spec.tags.air => 1.0,
        Some(SoLabel::GroundSupportFocus) if army && !spec.tags.air => 1.0,
        Some(SoLabel::GroundAirHybrid) if army => 1.0,
        _ => 0.0,
    }
}

/// Count of each action id in one window.
fn counts(window: &[WindowAction]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for w in window {
        *m.entry(w.action_id.as_str()).or_insert(0) += 1;
    }
    m
}

/// Offset of the n-th (0-based) instance of `id` in `window`.
fn nth_offset(window: &[WindowAction], id: &str, n: usize) -> Option<u32> {
    window.iter().filter(|w| w.action_id == id).nth(n).map(|w| w.offset)
}

struct Budget {
    minerals: i64,
    gas: i64,
}

impl Budget {
    fn fits(&self, (m, g): (u64, u64)) -> bool {
        self.minerals >= m as i64 && self.gas >= g as i64
    }

    fn spend(&mut self, (m, g): (u64, u64)) {
        self.minerals -= m as i64;
        self.gas -= g as i64;
    }
}

/// Resolves proposals into an ordered strategy.
pub fn ngt_resolve(
    proposals: &[Proposal],
    own: &PlayerState,
    catalog: &ActionCatalog,
    rules: &WorldRules,
    delta: u32,
    weights: &ScoringWeights,
    use_so: bool,
) -> ResolvedStrategy {
    let mut proposals: Vec<&Proposal> = proposals.iter().collect();
    proposals.sort_by_key(|p| p.agent_id);
    let windows: Vec<Vec<WindowAction>> = proposals
        .iter()
        .map(|p| p.window.iter().filter(|w| catalog.get(&w.action_id).is_some()).cloned().collect())
        .collect();
    let per_agent: Vec<BTreeMap<&str, usize>> = windows.iter().map(|w| counts(w)).collect();
    let ids: BTreeSet<&str> = per_agent.iter().flat_map(|m| m.keys().copied()).collect();

    let mut agreed = Vec::new();
    let mut extras = Vec::new();
    for id in ids {
        let mut c: Vec<(usize, usize)> = per_agent.iter().enumerate().map(|(a, m)| (a, m.get(id).copied().unwrap_or(0))).collect();
        let supporters = c.iter().filter(|(_, n)| *n > 0).count();
        // highest count first, earliest advisor on ties
        c.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        let top = c[0];
        let shared = c.get(1).map_or(0, |x| x.1);
        for n in 0..shared {
            let holders: Vec<usize> = c.iter().filter(|(_, k)| *k > n).map(|(a, _)| *a).collect();
            let offset = holders.iter().filter_map(|&a| nth_offset(&windows[a], id, n)).min().unwrap_or(0);
            let sources = holders.iter().map(|&a| proposals[a].agent_id).collect();
            agreed.push(SourcedAction { action_id: id.to_string(), offset, sources, score: 0.0 });
        }
        for n in shared..top.1 {
            let offset = nth_offset(&windows[top.0], id, n).unwrap_or(0);
            let spec = catalog.get(id).expect("filtered to catalog actions");
            let feasible = if check_feasibility(own, catalog, id).is_ok() { 1.0 } else { 0.0 };
            let so = if use_so { so_alignment(spec, proposals[top.0].so_label) } else { 0.0 };
            let score = weights.feasibility * feasible + weights.majority * supporters as f64 + weights.so_alignment * so;
            extras.push((SourcedAction { action_id: id.to_string(), offset, sources: vec![proposals[top.0].agent_id], score }, top.0));
        }
    }
    agreed.sort_by(|a, b| a.offset.cmp(&b.offset).then(catalog.index_of(&a.action_id).cmp(&catalog.index_of(&b.action_id))));

    let mut resolved = ResolvedStrategy { agreed: agreed.clone(), ..Default::default() };

    // unique structures: at most one instance, none if already present
    let mut have_unique: BTreeSet<String> = agreed.iter().map(|a| a.action_id.clone()).collect();
    let mut kept = Vec::new();
    for (x, a) in extras {
        let spec = catalog.get(&x.action_id).expect("catalog action");
        if spec.tags.unique {
            let entity = spec.produces.as_deref().unwrap_or(&spec.id);
            let present = own.owns(entity) || own.queued(&spec.id) > 0 || have_unique.contains(&spec.id);
            if present {
                resolved.conflict_resolutions.push(ConflictResolution {
                    kind: ConflictKind::UniqueDuplicate,
                    winners: Vec::new(),
                    losers: vec![x],
                });
                continue;
            }
            have_unique.insert(spec.id.clone());
        }
        kept.push((x, a));
    }

    // resources over the horizon, after paying for the agreed actions
    let (rm, rg) = own.income_rate_milli(catalog, rules);
    let mut budget = Budget {
        minerals: i64::from(own.minerals) + (rm * u64::from(delta) / 1000) as i64,
        gas: i64::from(own.gas) + (rg * u64::from(delta) / 1000) as i64,
    };
    for a in &agreed {
        budget.spend(cost_of(catalog.get(&a.action_id).expect("catalog action")));
    }
    let total: (u64, u64) = kept.iter().fold((0, 0), |acc, (x, _)| {
        let c = cost_of(catalog.get(&x.action_id).expect("catalog action"));
        (acc.0 + c.0, acc.1 + c.1)
    });
    let mut ranked = kept;
    ranked.sort_by(|(x, a), (y, b)| y.score.total_cmp(&x.score).then(a.cmp(b)).then(x.offset.cmp(&y.offset)));
    let oversubscribed = !budget.fits(total);
    let mut winners = Vec::new();
    let mut losers = Vec::new();
    for (x, _) in ranked {
        let cost = cost_of(catalog.get(&x.action_id).expect("catalog action"));
        if budget.fits(cost) {
            budget.spend(cost);
            winners.push(x);
        } else {
            losers.push(x);
        }
    }
    let by_offset = |v: &mut Vec<SourcedAction>| v.sort_by(|a, b| a.offset.cmp(&b.offset).then(a.sources.cmp(&b.sources)));
    by_offset(&mut winners);
    if oversubscribed {
        resolved.conflict_resolutions.push(ConflictResolution {
            kind: ConflictKind::ResourceOversubscription,
            winners: winners.clone(),
            losers,
        });
        resolved.synthesis_order = agreed;
        resolved.synthesis_order.extend(winners);
        return resolved;
    }

    // isolated actions join only when their requirements can be met within the horizon
    let mut available: BTreeSet<String> = own.units.keys().chain(own.buildings.keys()).chain(own.techs.iter()).cloned().collect();
    for q in &own.queue {
        if let Some(e) = catalog.get(&q.action_id).and_then(|s| s.produces.clone()) {
            available.insert(e);
        }
    }
    let mut order = agreed;
    for a in &order {
        if let Some(e) = catalog.get(&a.action_id).and_then(|s| s.produces.clone()) {
            available.insert(e);
        }
    }
    // a couple of passes let isolated actions supply each other's prerequisites
    let mut pending = winners;
    for _ in 0..3 {
        let mut next = Vec::new();
        for x in pending {
            let spec = catalog.get(&x.action_id).expect("catalog action");
            if spec.requirements().all(|r| available.contains(r)) {
                if let Some(e) = &spec.produces {
                    available.insert(e.clone());
                }
                resolved.adopted_isolated.push(x);
            } else {
                next.push(x);
            }
        }
        pending = next;
    }
    resolved.rejected_isolated = pending;
    by_offset(&mut resolved.adopted_isolated);
    order.extend(resolved.adopted_isolated.iter().cloned());
    resolved.synthesis_order = order;
    resolved
}

/// Concatenates windows in advisor order, keeping actions whose requirements
/// are owned or produced earlier in the list.
pub fn simple_merge(proposals: &[Proposal], own: &PlayerState, catalog: &ActionCatalog) -> Vec<SourcedAction> {
    let mut proposals: Vec<&Proposal> = proposals.iter().collect();
    proposals.sort_by_key(|p| p.agent_id);
    let mut available: BTreeSet<String> = own.units.keys().chain(own.buildings.keys()).chain(own.techs.iter()).cloned().collect();
    for q in &own.queue {
        if let Some(e) = catalog.get(&q.action_id).and_then(|s| s.produces.clone()) {
            available.insert(e);
        }
    }
    let mut out = Vec::new();
    for p in proposals {
        for w in &p.window {
            let Some(spec) = catalog.get(&w.action_id) else { continue };
            if spec.requirements().all(|r| available.contains(r)) {
                if let Some(e) = &spec.produces {
                    available.insert(e.clone());
                }
                out.push(SourcedAction { action_id: w.action_id.clone(), offset: w.offset, sources: vec![p.agent_id], score: 0.0 });
            }
        }
    }
    out
}

/// Drops redundant optional actions and moves proposed prerequisites ahead of
/// the actions that need them. Agreed actions are never dropped.
pub fn formulate(
    order: Vec<SourcedAction>,
    protected: usize,
    own: &PlayerState,
    catalog: &ActionCatalog,
) -> (Vec<SourcedAction>, Vec<String>) {
    let mut redundant = Vec::new();
    let mut seen_tech = BTreeSet::new();
    let mut seen_unique = BTreeSet::new();
    let mut kept = Vec::with_capacity(order.len());
    for (i, a) in order.into_iter().enumerate() {
        let spec = catalog.get(&a.action_id).expect("catalog action");
        let entity = spec.produces.clone().unwrap_or_else(|| spec.id.clone());
        let already = own.owns(&entity) || own.queued(&spec.id) > 0;
        let tech = spec.category == Category::TechnologyDevelopment;
        let dup = (tech && !seen_tech.insert(spec.id.clone())) || (spec.tags.unique && !seen_unique.insert(spec.id.clone()));
        if i >= protected && ((tech || spec.tags.unique) && (already || dup)) {
            redundant.push(a.action_id);
            continue;
        }
        kept.push(a);
    }
    let mut available: BTreeSet<String> = own.units.keys().chain(own.buildings.keys()).chain(own.techs.iter()).cloned().collect();
    for q in &own.queue {
        if let Some(e) = catalog.get(&q.action_id).and_then(|s| s.produces.clone()) {
            available.insert(e);
        }
    }
    // stable prerequisite hoisting, bounded so it always terminates
    let mut i = 0;
    let mut moves = 0;
    let limit = kept.len() * kept.len() + 1;
    while i < kept.len() {
        let spec = catalog.get(&kept[i].action_id).expect("catalog action");
        let missing: Vec<String> = spec.requirements().filter(|r| !available.contains(*r)).map(str::to_string).collect();
        let provider = missing.iter().find_map(|m| {
            (i + 1..kept.len()).find(|&j| catalog.get(&kept[j].action_id).and_then(|s| s.produces.as_deref()) == Some(m.as_str()))
        });
        match provider {
            Some(j) if moves < limit => {
                let item = kept.remove(j);
                kept.insert(i, item);
                moves += 1;
            }
            _ => {
                if let Some(e) = &spec.produces {
                    available.insert(e.clone());
                }
                i += 1;
            }
        }
    }
    (kept, redundant)
}

/// Assigns each action its earliest projected time. Entries stay in order,
/// so earliest times never decrease; anything not feasible within the
/// horizon lands in the long-term bucket.
pub fn tcot_decompose(
    order: &[SourcedAction],
    own: &PlayerState,
    now: u32,
    catalog: &ActionCatalog,
    rules: &WorldRules,
    delta: u32,
    barred: &BTreeSet<String>,
) -> Vec<PlanEntry> {
    let mut sim = own.clone();
    let mut t = now;
    let mut entries = Vec::with_capacity(order.len());
    let horizon = now + delta;
    let mut long = Vec::new();
    for a in order {
        let blocked_now = barred.contains(&a.action_id);
        if t == now && !blocked_now && try_enqueue(&mut sim, catalog, &a.action_id).is_ok() {
            entries.push(PlanEntry { action_id: a.action_id.clone(), earliest_time: now, bucket: Bucket::Immediate, sources: a.sources.clone() });
            continue;
        }
        let mut probe = sim.clone();
        let mut s = t;
        let mut placed = false;
        while s < horizon {
            probe.advance_second(catalog, rules);
            s += 1;
            if matches!(check_feasibility(&probe, catalog, &a.action_id), Feasibility::Ok) {
                let _ = try_enqueue(&mut probe, catalog, &a.action_id);
                sim = probe;
                t = s;
                entries.push(PlanEntry { action_id: a.action_id.clone(), earliest_time: s, bucket: Bucket::ShortTerm, sources: a.sources.clone() });
                placed = true;
                break;
            }
            // nothing changes once the projection has no queue and is capped on resources
            if probe.queue.is_empty() && probe.income_rate_milli(catalog, rules) == (0, 0) {
                break;
            }
        }
        if !placed {
            long.push(PlanEntry { action_id: a.action_id.clone(), earliest_time: horizon, bucket: Bucket::LongTerm, sources: a.sources.clone() });
        }
    }
    entries.extend(long);
    entries
}

impl Planner {
    pub fn new(catalog: Arc<ActionCatalog>, opponent_catalog: Arc<ActionCatalog>, rules: WorldRules, config: PlannerConfig) -> Self {
        Self { catalog, opponent_catalog, rules, config, backend: PlannerBackend::Deterministic }
    }

    pub fn with_backend(mut self, backend: PlannerBackend) -> Self {
        self.backend = backend;
        self
    }

    fn assess(&self, ctx: &PlanContext) -> Assessment {
        let own = &ctx.obs.own;
        let (rm, rg) = own.income_rate_milli(&self.catalog, &self.rules);
        let d = u64::from(self.config.delta);
        let feasible_now = ctx
            .proposals
            .iter()
            .flat_map(|p| p.window.iter())
            .map(|w| (w.action_id.clone(), check_feasibility(own, &self.catalog, &w.action_id).is_ok()))
            .collect();
        Assessment {
            tick: ctx.obs.tick,
            minerals: own.minerals,
            gas: own.gas,
            projected_minerals: u64::from(own.minerals) + rm * d / 1000,
            projected_gas: u64::from(own.gas) + rg * d / 1000,
            supply_headroom: own.supply_cap.saturating_sub(own.supply_used),
            visible_enemy: ctx.obs.visible_enemy_count,
            engaged: ctx.obs.engaged,
            feasible_now,
        }
    }

    /// Ids dropped by the executor since the last plan; they stay out of the immediate bucket.
    fn barred(ctx: &PlanContext) -> BTreeSet<String> {
        ctx.failure_records.iter().filter(|f| f.dropped).map(|f| f.action_id.clone()).collect()
    }

    fn decompose(&self, order: &[SourcedAction], ctx: &PlanContext, barred: &BTreeSet<String>) -> Vec<PlanEntry> {
        let now = ctx.obs.tick;
        if self.config.tcot {
            tcot_decompose(order, &ctx.obs.own, now, &self.catalog, &self.rules, self.config.delta, barred)
        } else {
            let mut entries: Vec<PlanEntry> = order
                .iter()
                .map(|a| PlanEntry {
                    action_id: a.action_id.clone(),
                    earliest_time: now + a.offset,
                    bucket: Bucket::ShortTerm,
                    sources: a.sources.clone(),
                })
                .collect();
            entries.sort_by_key(|e| e.earliest_time);
            entries
        }
    }

    fn deterministic(&self, ctx: &PlanContext, invocation: u32) -> (FinalPlan, PlannerTrace) {
        let own = &ctx.obs.own;
        let assessment = self.assess(ctx);
        let barred = Self::barred(ctx);
        let (resolved, protected) = match self.config.aggregation {
            Aggregation::Simple => {
                let order = simple_merge(&ctx.proposals, own, &self.catalog);
                let n = order.len();
                (ResolvedStrategy { synthesis_order: order, ..Default::default() }, n)
            }
            Aggregation::Ngt | Aggregation::NgtTrSo => {
                let r = ngt_resolve(
                    &ctx.proposals,
                    own,
                    &self.catalog,
                    &self.rules,
                    self.config.delta,
                    &self.config.weights,
                    self.config.aggregation == Aggregation::NgtTrSo,
                );
                let n = r.agreed.len();
                (r, n)
            }
        };
        let (order, redundant) = if self.config.aggregation == Aggregation::Simple {
            (resolved.synthesis_order.clone(), Vec::new())
        } else {
            formulate(resolved.synthesis_order.clone(), protected, own, &self.catalog)
        };
        let entries = self.decompose(&order, ctx, &barred);
        let plan = FinalPlan { created_at: ctx.obs.tick, horizon: self.config.delta, entries };
        let trace = PlannerTrace {
            invocation,
            assessment,
            resolved,
            redundant,
            barred: barred.into_iter().collect(),
            fallback: false,
            invented: Vec::new(),
            parse_issues: Vec::new(),
        };
        (plan, trace)
    }

    pub fn plan(&self, ctx: &PlanContext, invocation: u32) -> Result<(FinalPlan, PlannerTrace), PlanError> {
        if ctx.proposals.is_empty() {
            return Err(PlanError::NoProposals);
        }
        let PlannerBackend::External(client) = &self.backend else {
            return Ok(self.deterministic(ctx, invocation));
        };
        let req = AgentRequest {
            system: PLANNER_SYSTEM_PROMPT.to_string(),
            input: textio::render_planner_context(ctx, &self.catalog, &self.opponent_catalog)?,
            params: AgentParams::default(),
        };
        let reply = client.exchange(&req);
        let parsed = reply.as_ref().map(|text| textio::parse_action_sequence(text, &self.catalog));
        let (actions, issues) = match parsed {
            Ok((actions, issues)) if actions.iter().any(|a| self.catalog.get(&a.action_id).is_some()) => (actions, issues),
            other => {
                let (mut plan, mut trace) = self.deterministic(ctx, invocation);
                trace.fallback = true;
                if let Ok((_, issues)) = other {
                    trace.parse_issues = issues;
                }
                plan.created_at = ctx.obs.tick;
                return Ok((plan, trace));
            }
        };
        let proposed: BTreeSet<&str> = ctx.proposals.iter().flat_map(|p| p.window.iter().map(|w| w.action_id.as_str())).collect();
        let mut invented = Vec::new();
        let mut last = 0;
        let order: Vec<SourcedAction> = actions
            .into_iter()
            .filter(|a| self.catalog.get(&a.action_id).is_some())
            .map(|a| {
                if !proposed.contains(a.action_id.as_str()) {
                    invented.push(a.action_id.clone());
                }
                last = a.offset.unwrap_or(last).max(last);
                let sources = ctx
                    .proposals
                    .iter()
                    .filter(|p| p.window.iter().any(|w| w.action_id == a.action_id))
                    .map(|p| p.agent_id)
                    .collect();
                SourcedAction { action_id: a.action_id, offset: last, sources, score: 0.0 }
            })
            .collect();
        let barred = Self::barred(ctx);
        let entries = self.decompose(&order, ctx, &barred);
        let plan = FinalPlan { created_at: ctx.obs.tick, horizon: self.config.delta, entries };
        let trace = PlannerTrace {
            invocation,
            assessment: self.assess(ctx),
            resolved: ResolvedStrategy { synthesis_order: order, ..Default::default() },
            redundant: Vec::new(),
            barred: barred.into_iter().collect(),
            fallback: false,
            invented,
            parse_issues: issues,
        };
        Ok((plan, trace))
    }
}
