//! Scripted opponents: the ten-level builtin ladder and the expert personas
//! that generate demonstration replays.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execloop::{AgentRecord, AgentStats};
use crate::world::{
    check_feasibility, try_enqueue, ActionCatalog, ActionRequest, Feasibility, Observation,
    OpponentView, PlayerState, Race, WorldEvent, ATTACK,
};

pub const SCRIPT_FORMAT: &str = "hima-script/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpponentError {
    #[error("difficulty level {0} is outside 1..=10")]
    BadLevel(u8),
    #[error("script for {race} is invalid: {reason}")]
    Script { race: Race, reason: String },
}

/// Something that picks actions from observations, one call per simulated second.
pub trait Policy: Send {
    fn decide(&mut self, obs: &Observation) -> Vec<ActionRequest>;

    /// Sees what happened during the last world tick.
    fn observe_events(&mut self, _tick: u32, _events: &[WorldEvent]) {}

    fn agent_stats(&self) -> Option<AgentStats> {
        None
    }

    fn drain_records(&mut self) -> Vec<AgentRecord> {
        Vec::new()
    }
}

const LEVEL_NAMES: [&str; 10] = [
    "VeryEasy",
    "Easy",
    "Medium",
    "Hard",
    "Harder",
    "VeryHard",
    "Elite",
    "CheatVision",
    "CheatMoney",
    "CheatInsane",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyLevel {
    pub level: u8,
    pub name: &'static str,
    pub cheat_vision: bool,
    pub cheat_money: bool,
    /// Longest gap between decisions, in seconds.
    pub decision_period: u32,
    /// Earliest time an attack may be launched.
    pub aggression_time: u32,
}

impl DifficultyLevel {
    pub fn new(level: u8) -> Result<Self, OpponentError> {
        if !(1..=10).contains(&level) {
            return Err(OpponentError::BadLevel(level));
        }
        let l = u32::from(level);
        Ok(Self {
            level,
            name: LEVEL_NAMES[usize::from(level - 1)],
            cheat_vision: matches!(level, 8 | 10),
            cheat_money: matches!(level, 9 | 10),
            decision_period: 22 - 2 * l,
            aggression_time: 640 - 40 * l,
        })
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let pos = LEVEL_NAMES.iter().position(|n| n.eq_ignore_ascii_case(name))?;
        Self::new(pos as u8 + 1).ok()
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lv.{} {}", self.level, self.name)
    }
}

/// The three expert play styles used to build the demonstration corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Persona {
    Ground,
    Air,
    Hybrid,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::Ground, Persona::Air, Persona::Hybrid];

    pub fn key(self) -> &'static str {
        match self {
            Persona::Ground => "ground",
            Persona::Air => "air",
            Persona::Hybrid => "hybrid",
        }
    }
}

impl FromStr for Persona {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Persona::ALL
            .into_iter()
            .find(|p| p.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown persona `{s}`"))
    }
}

/// A build plan in entity ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptPlan {
    #[serde(default)]
    pub level: Option<u8>,
    pub workers: u32,
    pub bases: u32,
    pub gas: u32,
    /// Chance of passing on any single discretionary action.
    pub skip: f64,
    pub attack_supply: u32,
    pub structures: Vec<(String, u32)>,
    pub techs: Vec<String>,
    pub roster: Vec<(String, u32)>,
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptDocument {
    format: String,
    race: String,
    levels: Vec<ScriptPlan>,
    personas: BTreeMap<String, ScriptPlan>,
}

#[derive(Debug, Clone)]
pub struct ScriptBook {
    pub race: Race,
    pub levels: Vec<ScriptPlan>,
    pub personas: BTreeMap<Persona, ScriptPlan>,
}

pub fn script_source(race: Race) -> &'static str {
    match race {
        Race::Protoss => include_str!("../data/scripts/protoss.toml"),
        Race::Terran => include_str!("../data/scripts/terran.toml"),
        Race::Zerg => include_str!("../data/scripts/zerg.toml"),
    }
}

fn check_plan(catalog: &ActionCatalog, plan: &ScriptPlan) -> Result<(), String> {
    let known = |id: &str| catalog.producer_of(id).is_some();
    for (id, _) in plan.structures.iter().chain(&plan.roster) {
        if !known(id) {
            return Err(format!("unknown entity `{id}`"));
        }
    }
    if let Some(t) = plan.techs.iter().find(|t| !known(t)) {
        return Err(format!("unknown tech `{t}`"));
    }
    if plan.roster.is_empty() || plan.roster.iter().all(|(_, w)| *w == 0) {
        return Err("roster is empty".into());
    }
    if !(0.0..1.0).contains(&plan.skip) {
        return Err(format!("skip {} is outside [0, 1)", plan.skip));
    }
    Ok(())
}

pub fn load_scripts(race: Race, source: &str, catalog: &ActionCatalog) -> Result<ScriptBook, OpponentError> {
    let fail = |reason: String| OpponentError::Script { race, reason };
    let doc: ScriptDocument = toml::from_str(source).map_err(|e| fail(e.to_string()))?;
    if doc.format != SCRIPT_FORMAT {
        return Err(fail(format!("format `{}`", doc.format)));
    }
    if doc.race.parse::<Race>().ok() != Some(race) {
        return Err(fail(format!("race `{}`", doc.race)));
    }
    let mut levels = doc.levels;
    levels.sort_by_key(|p| p.level);
    let numbered: Vec<Option<u8>> = levels.iter().map(|p| p.level).collect();
    if numbered != (1..=10).map(Some).collect::<Vec<_>>() {
        return Err(fail("levels must be exactly 1..=10".into()));
    }
    let mut personas = BTreeMap::new();
    for (key, plan) in doc.personas {
        let persona: Persona = key.parse().map_err(fail)?;
        personas.insert(persona, plan);
    }
    if personas.len() != Persona::ALL.len() {
        return Err(fail("every persona needs a plan".into()));
    }
    for plan in levels.iter().chain(personas.values()) {
        check_plan(catalog, plan).map_err(fail)?;
    }
    Ok(ScriptBook { race, levels, personas })
}

impl ScriptBook {
    pub fn builtin(race: Race) -> Arc<ScriptBook> {
        static BOOKS: OnceLock<[Arc<ScriptBook>; 3]> = OnceLock::new();
        let all = BOOKS.get_or_init(|| {
            Race::ALL.map(|r| {
                let cat = ActionCatalog::builtin(r);
                let book = load_scripts(r, script_source(r), &cat)
                    .unwrap_or_else(|e| panic!("shipped script is invalid: {e}"));
                Arc::new(book)
            })
        });
        let pos = Race::ALL.iter().position(|&r| r == race).unwrap_or(0);
        Arc::clone(&all[pos])
    }

    pub fn level(&self, level: u8) -> &ScriptPlan {
        &self.levels[usize::from(level.clamp(1, 10) - 1)]
    }
}

/// Timing knobs shared by every scripted player.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tempo {
    pub decision_period: u32,
    pub aggression_time: u32,
    pub cheat_vision: bool,
}

/// Executes a [`ScriptPlan`]: economy first, then structures, techs and army.
#[derive(Debug, Clone)]
pub struct MacroPolicy {
    catalog: Arc<ActionCatalog>,
    plan: ScriptPlan,
    tempo: Tempo,
    rng: ChaCha8Rng,
    next_decision: u32,
    saving_for: Option<String>,
}

const MAX_PRODUCERS: u32 = 12;

pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl MacroPolicy {
    pub fn new(catalog: Arc<ActionCatalog>, plan: ScriptPlan, tempo: Tempo, seed: u64) -> Self {
        Self { catalog, plan, tempo, rng: ChaCha8Rng::seed_from_u64(seed), next_decision: 0, saving_for: None }
    }

    pub fn plan(&self) -> &ScriptPlan {
        &self.plan
    }

    fn action_for(&self, entity: &str) -> Option<String> {
        self.catalog.producer_of(entity).map(|s| s.id.clone())
    }

    fn skipped(&mut self) -> bool {
        self.plan.skip > 0.0 && self.rng.random::<f64>() < self.plan.skip
    }

    fn attempt(
        &mut self,
        sim: &mut PlayerState,
        out: &mut Vec<ActionRequest>,
        action_id: &str,
        discretionary: bool,
    ) -> Feasibility {
        if discretionary && self.skipped() {
            return Feasibility::InsufficientResources;
        }
        let verdict = try_enqueue(sim, &self.catalog, action_id);
        if verdict.is_ok() {
            out.push(ActionRequest::new(action_id));
        }
        verdict
    }

    fn owned_or_queued(&self, sim: &PlayerState, entity: &str) -> u32 {
        let queued = self
            .action_for(entity)
            .map_or(0, |id| sim.queued(&id) as u32);
        sim.count(entity) + queued
    }

    fn townhalls(&self, sim: &PlayerState) -> (u32, u32) {
        let mut owned = 0;
        let mut queued = 0;
        for spec in self.catalog.actions.iter().filter(|a| a.tags.townhall) {
            if let Some(e) = &spec.produces {
                owned += sim.count(e);
            }
            queued += sim.queued(&spec.id) as u32;
        }
        (owned, queued)
    }

    fn supply_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>) {
        let Some(spec) = self.catalog.supply_action().cloned() else { return };
        let producers: u32 = self
            .plan
            .roster
            .iter()
            .filter_map(|(u, _)| self.catalog.producer_of(u)?.producer.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .iter()
            .map(|p| sim.slots(&self.catalog, p))
            .sum();
        let headroom = (3 + 2 * producers).min(24);
        let pending = sim.queued(&spec.id) as u32 * spec.supply_granted;
        let projected = sim.supply_cap + pending;
        if projected < 200 && projected < sim.supply_used + headroom {
            self.attempt(sim, out, &spec.id, false);
        }
    }

    fn worker_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>) {
        let Some(spec) = self.catalog.worker_action().cloned() else { return };
        let (halls, _) = self.townhalls(sim);
        let gas = self
            .catalog
            .gas_action()
            .and_then(|g| g.produces.clone())
            .map_or(0, |g| sim.count(&g));
        // Minerals fill first, so the gas crew only exists above the mineral line.
        let full = 16 * halls + 3 * gas;
        let cap = self.plan.workers.max(full).min(full + 2);
        for _ in 0..halls.max(1) {
            let total = self.owned_or_queued(sim, self.catalog.worker());
            if total >= cap || !self.attempt(sim, out, &spec.id, true).is_ok() {
                break;
            }
        }
    }

    /// Returns minerals to hold back for a pending expansion or structure.
    fn build_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>) -> u32 {
        let mut reserve = 0;
        let workers = sim.workers(&self.catalog);
        let (halls, halls_queued) = self.townhalls(sim);
        if halls + halls_queued < self.plan.bases && workers >= 14 * halls {
            if let Some(spec) = self.catalog.townhall_action().cloned() {
                if self.attempt(sim, out, &spec.id, true) == Feasibility::InsufficientResources {
                    reserve = spec.mineral_cost;
                }
            }
        }
        if let Some(spec) = self.catalog.gas_action().cloned() {
            let entity = spec.produces.clone().unwrap_or_default();
            let have = self.owned_or_queued(sim, &entity);
            if have < self.plan.gas.min(2 * halls) && workers >= 12 + 4 * have {
                self.attempt(sim, out, &spec.id, true);
            }
        }
        let structures = self.plan.structures.clone();
        for (entity, count) in &structures {
            if self.owned_or_queued(sim, entity) >= *count {
                continue;
            }
            let Some(id) = self.action_for(entity) else { continue };
            match self.attempt(sim, out, &id, true) {
                Feasibility::InsufficientResources => {
                    let cost = self.catalog.get(&id).map_or(0, |s| s.mineral_cost);
                    reserve = reserve.max(cost);
                    break;
                }
                _ => continue,
            }
        }
        reserve
    }

    fn tech_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>) {
        let techs = self.plan.techs.clone();
        for tech in &techs {
            let Some(id) = self.action_for(tech) else { continue };
            if sim.owns(tech) || sim.queued(&id) > 0 {
                continue;
            }
            let free = self
                .catalog
                .get(&id)
                .and_then(|s| s.producer.as_deref())
                .is_none_or(|p| sim.free_slots(&self.catalog, p) > 0);
            if free {
                self.attempt(sim, out, &id, true);
            }
        }
    }

    fn army_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>, reserve: u32) {
        for _ in 0..12 {
            let candidates: Vec<(String, u32)> = self
                .plan
                .roster
                .iter()
                .filter_map(|(unit, w)| {
                    let spec = self.catalog.producer_of(unit)?;
                    let free = spec
                        .producer
                        .as_deref()
                        .is_none_or(|p| sim.free_slots(&self.catalog, p) > 0);
                    let ok = free
                        && *w > 0
                        && matches!(
                            check_feasibility(sim, &self.catalog, &spec.id),
                            Feasibility::Ok | Feasibility::InsufficientResources
                        );
                    ok.then(|| (spec.id.clone(), *w))
                })
                .collect();
            // A unit we were saving for keeps priority while its producer is free.
            let saved = self
                .saving_for
                .take()
                .filter(|id| candidates.iter().any(|(c, _)| c == id));
            let choice = match saved {
                Some(id) => id,
                None => {
                    if candidates.is_empty() || self.skipped() {
                        break;
                    }
                    self.most_lacking(sim, &candidates)
                }
            };
            let (cost, gas_cost) = self.catalog.get(&choice).map_or((0, 0), |s| (s.mineral_cost, s.gas_cost));
            if sim.gas < gas_cost {
                continue;
            }
            if sim.minerals < cost + reserve || !try_enqueue(sim, &self.catalog, &choice).is_ok() {
                self.saving_for = Some(choice);
                break;
            }
            out.push(ActionRequest::new(choice));
        }
    }

    /// The candidate furthest below its roster share of army supply.
    fn most_lacking(&self, sim: &PlayerState, candidates: &[(String, u32)]) -> String {
        let supply_of = |unit: &str| {
            let Some(spec) = self.catalog.producer_of(unit) else { return 0.0 };
            f64::from((sim.count(unit) + sim.queued(&spec.id) as u32) * spec.supply_cost)
        };
        let weight_total: f64 = self.plan.roster.iter().map(|(_, w)| f64::from(*w)).sum();
        let supply_total: f64 = self.plan.roster.iter().map(|(u, _)| supply_of(u)).sum::<f64>().max(1.0);
        let deficit = |id: &str| {
            let (unit, w) = self
                .plan
                .roster
                .iter()
                .find(|(u, _)| self.catalog.producer_of(u).is_some_and(|s| s.id == id))
                .expect("candidates come from the roster");
            f64::from(*w) / weight_total - supply_of(unit) / supply_total
        };
        candidates
            .iter()
            .map(|(id, _)| (id, deficit(id)))
            .fold(None::<(&String, f64)>, |best, (id, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((id, d)),
            })
            .map(|(id, _)| id.clone())
            .expect("candidates are not empty")
    }

    /// Adds a producer for the lead roster unit when every slot is busy and money piles up.
    fn surplus_step(&mut self, sim: &mut PlayerState, out: &mut Vec<ActionRequest>) {
        let Some(producer) = self
            .plan
            .roster
            .iter()
            .find_map(|(u, _)| self.catalog.producer_of(u)?.producer.clone())
        else {
            return;
        };
        let Some(spec) = self.catalog.producer_of(&producer).cloned() else { return };
        if sim.free_slots(&self.catalog, &producer) > 0 || sim.queued(&spec.id) > 0 {
            return;
        }
        if sim.minerals >= 2 * spec.mineral_cost + 100 && sim.count(&producer) < MAX_PRODUCERS {
            self.attempt(sim, out, &spec.id, true);
        }
    }

    fn wants_attack(&self, obs: &Observation, sim: &PlayerState) -> bool {
        if obs.engaged {
            return false;
        }
        let supply = sim.army_supply(&self.catalog);
        let ready = obs.tick >= self.tempo.aggression_time && supply >= self.plan.attack_supply;
        match (&obs.opponent, self.tempo.cheat_vision) {
            // Full sight allows an early strike on a clearly weaker army.
            (OpponentView::Full(enemy), true) => {
                let enemy_cat = ActionCatalog::builtin(enemy.race);
                let theirs: f64 = enemy
                    .units
                    .iter()
                    .map(|(id, n)| enemy_cat.strength_of(id) * f64::from(*n))
                    .sum();
                let ours: f64 = sim
                    .units
                    .iter()
                    .map(|(id, n)| self.catalog.strength_of(id) * f64::from(*n))
                    .sum();
                ready || (supply >= self.plan.attack_supply / 2 && ours > 1.25 * theirs)
            }
            _ => ready,
        }
    }
}

impl Policy for MacroPolicy {
    fn decide(&mut self, obs: &Observation) -> Vec<ActionRequest> {
        if obs.tick < self.next_decision {
            return Vec::new();
        }
        // A jittered gap keeps production from locking into a phase with build times.
        let period = self.tempo.decision_period.max(1);
        let gap = self.rng.random_range(period.div_ceil(2)..=period);
        self.next_decision = obs.tick + gap;
        let mut sim = obs.own.clone();
        let mut out = Vec::new();
        self.supply_step(&mut sim, &mut out);
        self.worker_step(&mut sim, &mut out);
        let reserve = self.build_step(&mut sim, &mut out);
        self.tech_step(&mut sim, &mut out);
        self.army_step(&mut sim, &mut out, reserve);
        self.surplus_step(&mut sim, &mut out);
        if self.wants_attack(obs, &sim) {
            out.push(ActionRequest::new(ATTACK));
        }
        out
    }
}

/// A builtin ladder opponent.
#[derive(Debug, Clone)]
pub struct BuiltinPolicy {
    pub race: Race,
    pub difficulty: DifficultyLevel,
    inner: MacroPolicy,
}

impl BuiltinPolicy {
    pub fn cheat_vision(&self) -> bool {
        self.difficulty.cheat_vision
    }

    pub fn cheat_money(&self) -> bool {
        self.difficulty.cheat_money
    }

    pub fn script(&self) -> &ScriptPlan {
        self.inner.plan()
    }
}

impl Policy for BuiltinPolicy {
    fn decide(&mut self, obs: &Observation) -> Vec<ActionRequest> {
        self.inner.decide(obs)
    }
}

pub fn make_builtin(race: Race, level: u8, seed: u64) -> Result<BuiltinPolicy, OpponentError> {
    let difficulty = DifficultyLevel::new(level)?;
    let book = ScriptBook::builtin(race);
    let tempo = Tempo {
        decision_period: difficulty.decision_period,
        aggression_time: difficulty.aggression_time,
        cheat_vision: difficulty.cheat_vision,
    };
    let inner = MacroPolicy::new(
        ActionCatalog::builtin(race),
        book.level(level).clone(),
        tempo,
        mix_seed(seed, u64::from(level)),
    );
    Ok(BuiltinPolicy { race, difficulty, inner })
}

/// Expert timing used for demonstration players.
pub const EXPERT_TEMPO: Tempo = Tempo { decision_period: 5, aggression_time: 420, cheat_vision: false };

pub fn make_expert(race: Race, persona: Persona, seed: u64) -> MacroPolicy {
    let book = ScriptBook::builtin(race);
    let plan = book.personas[&persona].clone();
    MacroPolicy::new(ActionCatalog::builtin(race), plan, EXPERT_TEMPO, mix_seed(seed, 100 + persona as u64))
}
