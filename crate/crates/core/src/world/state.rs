use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::catalog::{ActionCatalog, ActionSpec, Category, Race};
use crate::config::WorldRules;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub minerals: u64,
    pub gas: u64,
}

impl Resources {
    pub fn total(&self) -> u64 {
        self.minerals + self.gas
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub action_id: String,
    pub remaining: u32,
}

/// Sub-unit income remainders, in thousandths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomeCarry {
    pub minerals: u64,
    pub gas: u64,
    pub bonus_minerals: u64,
    pub bonus_gas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub race: Race,
    pub minerals: u32,
    pub gas: u32,
    pub supply_used: u32,
    pub supply_cap: u32,
    pub units: BTreeMap<String, u32>,
    pub buildings: BTreeMap<String, u32>,
    pub techs: BTreeSet<String>,
    pub queue: Vec<QueueEntry>,
    pub cumulative_spent: Resources,
    pub cumulative_harvested: Resources,
    pub cheat_injections: Resources,
    pub starting: Resources,
    /// Income multiplier in thousandths (1000 = normal).
    pub income_permille: u32,
    pub carry: IncomeCarry,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feasibility {
    Ok,
    MissingPrerequisite(Vec<String>),
    InsufficientResources,
    SupplyBlocked,
    UnknownAction,
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Feasibility::Ok)
    }
}

impl fmt::Display for Feasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feasibility::Ok => f.write_str("Ok"),
            Feasibility::MissingPrerequisite(ids) => {
                write!(f, "MissingPrerequisite({})", ids.join(", "))
            }
            Feasibility::InsufficientResources => f.write_str("InsufficientResources"),
            Feasibility::SupplyBlocked => f.write_str("SupplyBlocked"),
            Feasibility::UnknownAction => f.write_str("UnknownAction"),
        }
    }
}

/// An action id requested by a policy, optionally with a relative offset in seconds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionRequest {
    pub action_id: String,
    pub offset: Option<u32>,
}

impl ActionRequest {
    pub fn new(action_id: impl Into<String>) -> Self {
        Self { action_id: action_id.into(), offset: None }
    }
}

/// Something that finished production during an economy step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub action_id: String,
    pub entity: String,
}

impl PlayerState {
    pub fn new(catalog: &ActionCatalog, rules: &WorldRules) -> Self {
        let start = &catalog.start;
        let mut player = PlayerState {
            race: catalog.race,
            minerals: start.minerals,
            gas: start.gas,
            supply_used: 0,
            supply_cap: 0,
            units: start.units.clone(),
            buildings: start.buildings.clone(),
            techs: BTreeSet::new(),
            queue: Vec::new(),
            cumulative_spent: Resources::default(),
            cumulative_harvested: Resources::default(),
            cheat_injections: Resources::default(),
            starting: Resources { minerals: start.minerals as u64, gas: start.gas as u64 },
            income_permille: 1000,
            carry: IncomeCarry::default(),
        };
        player.supply_used = player
            .units
            .iter()
            .map(|(id, n)| catalog.producer_of(id).map_or(0, |s| s.supply_cost) * n)
            .sum();
        player.recompute_supply_cap(catalog, rules);
        player
    }

    /// Adds a cheat bank bonus and income multiplier.
    pub fn grant_cheat_money(&mut self, bonus: u32, multiplier: f64) {
        self.minerals += bonus;
        self.gas += bonus;
        self.cheat_injections.minerals += bonus as u64;
        self.cheat_injections.gas += bonus as u64;
        self.income_permille = (multiplier * 1000.0).round() as u32;
    }

    /// Units + buildings + techs owned, as a count for `entity`.
    pub fn count(&self, entity: &str) -> u32 {
        self.units
            .get(entity)
            .or_else(|| self.buildings.get(entity))
            .copied()
            .unwrap_or_else(|| u32::from(self.techs.contains(entity)))
    }

    pub fn owns(&self, entity: &str) -> bool {
        self.count(entity) > 0
    }

    pub fn queued(&self, action_id: &str) -> usize {
        self.queue.iter().filter(|q| q.action_id == action_id).count()
    }

    pub fn building_total(&self) -> u32 {
        self.buildings.values().sum()
    }

    pub fn workers(&self, catalog: &ActionCatalog) -> u32 {
        self.units.get(catalog.worker()).copied().unwrap_or(0)
    }

    /// Combat units only (strength > 0), excluding static defenses.
    pub fn army(&self, catalog: &ActionCatalog) -> BTreeMap<String, u32> {
        self.units
            .iter()
            .filter(|(id, n)| **n > 0 && catalog.strength_of(id) > 0.0)
            .map(|(id, n)| (id.clone(), *n))
            .collect()
    }

    pub fn army_supply(&self, catalog: &ActionCatalog) -> u32 {
        self.units
            .iter()
            .filter_map(|(id, n)| {
                let spec = catalog.producer_of(id)?;
                spec.is_combat().then_some(spec.supply_cost * n)
            })
            .sum()
    }

    pub fn army_power(&self, catalog: &ActionCatalog, rules: &WorldRules) -> f64 {
        let raw: f64 = self
            .units
            .iter()
            .map(|(id, n)| catalog.strength_of(id) * f64::from(*n))
            .sum();
        raw * self.strength_multiplier(rules)
    }

    pub fn strength_multiplier(&self, rules: &WorldRules) -> f64 {
        1.0 + rules.tech_strength_bonus * self.techs.len() as f64
    }

    pub fn recompute_supply_cap(&mut self, catalog: &ActionCatalog, rules: &WorldRules) {
        let granted: u32 = self
            .units
            .iter()
            .chain(self.buildings.iter())
            .map(|(id, n)| catalog.producer_of(id).map_or(0, |s| s.supply_granted) * n)
            .sum();
        self.supply_cap = granted.min(rules.max_supply);
    }

    /// Parallel production slots currently offered by `producer`.
    pub fn slots(&self, catalog: &ActionCatalog, producer: &str) -> u32 {
        let base = catalog.producer_of(producer).map_or(1, |s| s.slots) * self.count(producer);
        let extra: u32 = self
            .buildings
            .iter()
            .filter(|(id, _)| {
                catalog.producer_of(id).and_then(|s| s.extra_slot_for.as_deref()) == Some(producer)
            })
            .map(|(_, n)| *n)
            .sum();
        base + extra
    }

    /// Production slots of `producer` not occupied by queued work.
    pub fn free_slots(&self, catalog: &ActionCatalog, producer: &str) -> u32 {
        let busy = self
            .queue
            .iter()
            .filter(|q| {
                catalog.get(&q.action_id).and_then(|s| s.producer.as_deref()) == Some(producer)
            })
            .count() as u32;
        self.slots(catalog, producer).saturating_sub(busy)
    }

    /// Income per second at the current worker allocation, in thousandths.
    pub fn income_rate_milli(&self, catalog: &ActionCatalog, rules: &WorldRules) -> (u64, u64) {
        let workers = u64::from(self.workers(catalog));
        let mut bases = 0u64;
        let mut gas_structures = 0u64;
        for (id, n) in &self.buildings {
            if let Some(spec) = catalog.producer_of(id) {
                if spec.tags.townhall {
                    bases += u64::from(*n);
                }
                if spec.tags.gas {
                    gas_structures += u64::from(*n);
                }
            }
        }
        let mineral_workers = workers.min(bases * u64::from(rules.mineral_workers_per_base));
        let gas_workers = (workers - mineral_workers)
            .min(gas_structures * u64::from(rules.gas_workers_per_structure));
        (
            mineral_workers * rules.mineral_rate_milli(),
            gas_workers * rules.gas_rate_milli(),
        )
    }

    /// One second of harvesting followed by one second of production.
    pub fn advance_second(&mut self, catalog: &ActionCatalog, rules: &WorldRules) -> Vec<Completion> {
        self.harvest_second(catalog, rules);
        self.produce_second(catalog, rules)
    }

    fn harvest_second(&mut self, catalog: &ActionCatalog, rules: &WorldRules) {
        let (m_milli, g_milli) = self.income_rate_milli(catalog, rules);
        self.carry.minerals += m_milli;
        self.carry.gas += g_milli;
        let m = self.carry.minerals / 1000;
        let g = self.carry.gas / 1000;
        self.carry.minerals %= 1000;
        self.carry.gas %= 1000;
        self.minerals += m as u32;
        self.gas += g as u32;
        self.cumulative_harvested.minerals += m;
        self.cumulative_harvested.gas += g;

        if self.income_permille > 1000 {
            let extra = u64::from(self.income_permille - 1000);
            self.carry.bonus_minerals += m_milli * extra / 1000;
            self.carry.bonus_gas += g_milli * extra / 1000;
            let bm = self.carry.bonus_minerals / 1000;
            let bg = self.carry.bonus_gas / 1000;
            self.carry.bonus_minerals %= 1000;
            self.carry.bonus_gas %= 1000;
            self.minerals += bm as u32;
            self.gas += bg as u32;
            self.cheat_injections.minerals += bm;
            self.cheat_injections.gas += bg;
        }
    }

    fn produce_second(&mut self, catalog: &ActionCatalog, rules: &WorldRules) -> Vec<Completion> {
        let mut used: BTreeMap<&str, u32> = BTreeMap::new();
        let mut slot_cache: BTreeMap<String, u32> = BTreeMap::new();
        let mut finished = Vec::new();
        for (idx, entry) in self.queue.iter().enumerate() {
            let Some(spec) = catalog.get(&entry.action_id) else { continue };
            let active = match spec.producer.as_deref() {
                None => true,
                Some(p) => {
                    let cap = *slot_cache
                        .entry(p.to_string())
                        .or_insert_with(|| self.slots(catalog, p));
                    let taken = used.entry(p).or_insert(0);
                    if *taken < cap {
                        *taken += 1;
                        true
                    } else {
                        false
                    }
                }
            };
            if active && entry.remaining <= 1 {
                finished.push(idx);
            }
        }
        // Decrement active entries; producers are re-resolved the same way.
        let mut used: BTreeMap<String, u32> = BTreeMap::new();
        for entry in self.queue.iter_mut() {
            let Some(spec) = catalog.get(&entry.action_id) else { continue };
            let active = match spec.producer.as_deref() {
                None => true,
                Some(p) => {
                    let cap = slot_cache.get(p).copied().unwrap_or(0);
                    let taken = used.entry(p.to_string()).or_insert(0);
                    if *taken < cap {
                        *taken += 1;
                        true
                    } else {
                        false
                    }
                }
            };
            if active {
                entry.remaining = entry.remaining.saturating_sub(1);
            }
        }

        let mut completions = Vec::with_capacity(finished.len());
        for idx in finished.into_iter().rev() {
            let entry = self.queue.remove(idx);
            if let Some(spec) = catalog.get(&entry.action_id) {
                if let Some(entity) = spec.produces.clone() {
                    self.materialize(spec, &entity);
                    completions.push(Completion { action_id: entry.action_id, entity });
                }
            }
        }
        completions.reverse();
        if !completions.is_empty() {
            self.recompute_supply_cap(catalog, rules);
        }
        completions
    }

    fn materialize(&mut self, spec: &ActionSpec, entity: &str) {
        match spec.category {
            Category::UnitProduction => *self.units.entry(entity.to_string()).or_insert(0) += 1,
            Category::BuildingConstruction => {
                *self.buildings.entry(entity.to_string()).or_insert(0) += 1
            }
            Category::TechnologyDevelopment => {
                self.techs.insert(entity.to_string());
            }
            Category::GeneralCommand => {}
        }
    }

    /// Removes `n` of a unit or building, keeping supply accounting consistent.
    pub fn remove_entity(&mut self, catalog: &ActionCatalog, entity: &str, n: u32) -> u32 {
        let Some(spec) = catalog.producer_of(entity) else { return 0 };
        let map = match spec.category {
            Category::UnitProduction => &mut self.units,
            Category::BuildingConstruction => &mut self.buildings,
            _ => return 0,
        };
        let Some(have) = map.get_mut(entity) else { return 0 };
        let removed = n.min(*have);
        *have -= removed;
        if *have == 0 {
            map.remove(entity);
        }
        if spec.category == Category::UnitProduction {
            self.supply_used = self.supply_used.saturating_sub(spec.supply_cost * removed);
        }
        removed
    }

    /// Restores `supply_used <= supply_cap` after supply providers were lost.
    pub fn enforce_supply(&mut self, catalog: &ActionCatalog, rules: &WorldRules) {
        self.recompute_supply_cap(catalog, rules);
        while self.supply_used > self.supply_cap {
            let queued = self.queue.iter().rposition(|q| {
                catalog.get(&q.action_id).is_some_and(|s| s.supply_cost > 0)
            });
            if let Some(idx) = queued {
                let entry = self.queue.remove(idx);
                let cost = catalog.get(&entry.action_id).map_or(0, |s| s.supply_cost);
                self.supply_used = self.supply_used.saturating_sub(cost);
                continue;
            }
            let victim = self
                .units
                .keys()
                .filter_map(|id| catalog.producer_of(id))
                .filter(|s| s.supply_cost > 0)
                .min_by(|a, b| {
                    a.strength
                        .total_cmp(&b.strength)
                        .then(a.supply_cost.cmp(&b.supply_cost))
                })
                .and_then(|s| s.produces.clone());
            match victim {
                Some(id) => {
                    self.remove_entity(catalog, &id, 1);
                }
                None => break,
            }
        }
    }
}

/// Feasibility of queuing `action_id` for `player`.
///
/// Checks run in the order unknown → prerequisites → resources → supply.
pub fn check_feasibility(player: &PlayerState, catalog: &ActionCatalog, action_id: &str) -> Feasibility {
    let Some(spec) = catalog.get(action_id) else { return Feasibility::UnknownAction };
    if spec.is_command() {
        return Feasibility::Ok;
    }
    let mut missing: Vec<&str> = spec.requirements().filter(|r| !player.owns(r)).collect();
    if !missing.is_empty() {
        missing.sort_by_key(|m| catalog.entity_rank(m));
        missing.dedup();
        return Feasibility::MissingPrerequisite(missing.into_iter().map(str::to_string).collect());
    }
    if player.minerals < spec.mineral_cost || player.gas < spec.gas_cost {
        return Feasibility::InsufficientResources;
    }
    if spec.supply_cost > 0 && player.supply_used + spec.supply_cost > player.supply_cap {
        return Feasibility::SupplyBlocked;
    }
    Feasibility::Ok
}

/// Pays for and queues a production action. The caller has already checked feasibility.
pub(crate) fn enqueue(player: &mut PlayerState, spec: &ActionSpec) {
    player.minerals -= spec.mineral_cost;
    player.gas -= spec.gas_cost;
    player.cumulative_spent.minerals += u64::from(spec.mineral_cost);
    player.cumulative_spent.gas += u64::from(spec.gas_cost);
    player.supply_used += spec.supply_cost;
    player.queue.push(QueueEntry { action_id: spec.id.clone(), remaining: spec.build_time });
}

/// Queues `action_id` if feasible; returns the feasibility verdict either way.
pub fn try_enqueue(player: &mut PlayerState, catalog: &ActionCatalog, action_id: &str) -> Feasibility {
    let verdict = check_feasibility(player, catalog, action_id);
    if verdict.is_ok() {
        if let Some(spec) = catalog.get(action_id) {
            if !spec.is_command() {
                enqueue(player, spec);
            }
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::catalog::ActionCatalog;

    fn protoss() -> (std::sync::Arc<ActionCatalog>, WorldRules, PlayerState) {
        let cat = ActionCatalog::builtin(Race::Protoss);
        let rules = WorldRules::default();
        let p = PlayerState::new(&cat, &rules);
        (cat, rules, p)
    }

    #[test]
    fn fresh_start_matches_catalog() {
        let (_, _, p) = protoss();
        assert_eq!((p.supply_used, p.supply_cap, p.minerals), (12, 15, 50));
        let zerg = ActionCatalog::builtin(Race::Zerg);
        let z = PlayerState::new(&zerg, &WorldRules::default());
        assert_eq!((z.supply_used, z.supply_cap), (12, 14));
    }

    #[test]
    fn feasibility_order() {
        let (cat, _, mut p) = protoss();
        assert_eq!(check_feasibility(&p, &cat, "Nope"), Feasibility::UnknownAction);
        assert_eq!(
            check_feasibility(&p, &cat, "TrainZealot"),
            Feasibility::MissingPrerequisite(vec!["Gateway".into()])
        );
        p.buildings.insert("Gateway".into(), 1);
        p.minerals = 40;
        assert_eq!(check_feasibility(&p, &cat, "TrainZealot"), Feasibility::InsufficientResources);
        p.minerals = 1000;
        p.supply_used = 14;
        assert_eq!(check_feasibility(&p, &cat, "TrainZealot"), Feasibility::SupplyBlocked);
    }

    #[test]
    fn missing_prereqs_sorted_by_catalog_order() {
        let (cat, _, p) = protoss();
        // Colossus needs RoboticsFacility and RoboticsBay; both are absent.
        match check_feasibility(&p, &cat, "TrainColossus") {
            Feasibility::MissingPrerequisite(ids) => {
                assert_eq!(ids, vec!["RoboticsFacility".to_string(), "RoboticsBay".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn saturated_income() {
        let (cat, rules, mut p) = protoss();
        p.units.insert("Probe".into(), 16);
        let before = p.minerals;
        for _ in 0..10 {
            p.advance_second(&cat, &rules);
        }
        assert_eq!(p.minerals - before, 160);
    }

    #[test]
    fn gas_income_accrues_in_tenths() {
        let (cat, rules, mut p) = protoss();
        p.units.insert("Probe".into(), 19);
        p.buildings.insert("Assimilator".into(), 1);
        for _ in 0..10 {
            p.advance_second(&cat, &rules);
        }
        // 3 gas workers * 0.9/s * 10 s
        assert_eq!(p.gas, 27);
    }

    #[test]
    fn producer_slots_serialize_production() {
        let (cat, rules, mut p) = protoss();
        p.buildings.insert("Gateway".into(), 1);
        p.minerals = 1000;
        p.supply_cap = 100;
        assert!(try_enqueue(&mut p, &cat, "TrainZealot").is_ok());
        assert!(try_enqueue(&mut p, &cat, "TrainZealot").is_ok());
        for _ in 0..27 {
            p.advance_second(&cat, &rules);
        }
        assert_eq!(p.count("Zealot"), 1);
        for _ in 0..27 {
            p.advance_second(&cat, &rules);
        }
        assert_eq!(p.count("Zealot"), 2);
    }
}
