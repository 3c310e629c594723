//! Data-driven per-race action catalogs and the prerequisite DAG checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CATALOG_FORMAT: &str = "hima-catalog/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    Protoss,
    Terran,
    Zerg,
}

impl Race {
    pub const ALL: [Race; 3] = [Race::Protoss, Race::Terran, Race::Zerg];

    /// Number of macro actions (unit, building, tech) the race exposes.
    pub fn expected_action_count(self) -> usize {
        match self {
            Race::Protoss => 58,
            Race::Zerg => 61,
            Race::Terran => 62,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Race::Protoss => "protoss",
            Race::Terran => "terran",
            Race::Zerg => "zerg",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Race::Protoss => "Protoss",
            Race::Terran => "Terran",
            Race::Zerg => "Zerg",
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl std::str::FromStr for Race {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "protoss" | "p" => Ok(Race::Protoss),
            "terran" | "t" => Ok(Race::Terran),
            "zerg" | "z" => Ok(Race::Zerg),
            other => Err(format!("unknown race `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    UnitProduction,
    BuildingConstruction,
    TechnologyDevelopment,
    GeneralCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Unit,
    Building,
    Tech,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActionTags {
    pub worker: bool,
    pub townhall: bool,
    pub gas: bool,
    pub supply: bool,
    pub air: bool,
    pub ground: bool,
    pub unique: bool,
    pub defense: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub id: String,
    pub race: Race,
    pub category: Category,
    pub mineral_cost: u32,
    pub gas_cost: u32,
    pub supply_cost: u32,
    pub supply_granted: u32,
    pub build_time: u32,
    pub prerequisites: Vec<String>,
    pub produces: Option<String>,
    pub strength: f64,
    /// Building whose slots this action occupies while in production.
    pub producer: Option<String>,
    /// Parallel production slots this entity provides when it is a producer.
    pub slots: u32,
    /// A structure that adds one slot to another producer (reactors).
    pub extra_slot_for: Option<String>,
    pub tags: ActionTags,
}

impl ActionSpec {
    pub fn is_command(&self) -> bool {
        self.category == Category::GeneralCommand
    }

    pub fn is_army_unit(&self) -> bool {
        self.category == Category::UnitProduction && !self.tags.worker
    }

    /// Fighting units and static defenses.
    pub fn is_combat(&self) -> bool {
        self.strength > 0.0
    }

    /// All identifiers that must be owned before this action may be queued.
    pub fn requirements(&self) -> impl Iterator<Item = &str> {
        let producer = self
            .producer
            .as_deref()
            .filter(|p| !self.prerequisites.iter().any(|q| q == p));
        producer.into_iter().chain(self.prerequisites.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("catalog does not parse: {0}")]
    Parse(String),
    #[error("catalog format header `{0}` is not `{CATALOG_FORMAT}`")]
    Format(String),
    #[error("catalog race `{got}` does not match requested {expected}")]
    RaceMismatch { expected: Race, got: String },
    #[error("expected {expected} actions, catalog has {got}")]
    Count { expected: usize, got: usize },
    #[error("cyclic prerequisites: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("dangling reference `{0}`")]
    Ref(String),
    #[error("duplicate action id `{0}`")]
    Duplicate(String),
    #[error("invalid action `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("actions unreachable from the bootstrap set: {0:?}")]
    Unreachable(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct CatalogDocument {
    format: String,
    race: String,
    actions: Vec<ActionRecord>,
    start: StartRecord,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRecord {
    id: String,
    category: String,
    #[serde(default)]
    minerals: u32,
    #[serde(default)]
    gas: u32,
    #[serde(default)]
    supply: u32,
    #[serde(default)]
    grants: u32,
    time: u32,
    #[serde(default)]
    producer: Option<String>,
    #[serde(default)]
    requires: Vec<String>,
    #[serde(default)]
    produces: Option<String>,
    #[serde(default)]
    strength: f64,
    #[serde(default)]
    slots: Option<u32>,
    #[serde(default)]
    extra_slot_for: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct StartRecord {
    minerals: u32,
    #[serde(default)]
    gas: u32,
    units: BTreeMap<String, u32>,
    buildings: BTreeMap<String, u32>,
}

/// Initial holdings for a player of this race.
#[derive(Debug, Clone, PartialEq)]
pub struct StartState {
    pub minerals: u32,
    pub gas: u32,
    pub units: BTreeMap<String, u32>,
    pub buildings: BTreeMap<String, u32>,
}

#[derive(Debug, Clone)]
pub struct ActionCatalog {
    pub race: Race,
    /// The race's macro actions in catalog order.
    pub actions: Vec<ActionSpec>,
    /// Rule-driven general commands (attack, scout); not part of the counted actions.
    pub commands: Vec<ActionSpec>,
    /// Non-worker unit identifiers, in catalog order.
    pub unit_set: Vec<String>,
    pub start: StartState,
    by_id: HashMap<String, usize>,
    by_lower_id: HashMap<String, usize>,
    by_entity: HashMap<String, usize>,
    worker: String,
}

pub const ATTACK: &str = "Attack";
pub const SCOUT: &str = "Scout";

fn general_commands(race: Race) -> Vec<ActionSpec> {
    [ATTACK, SCOUT]
        .into_iter()
        .map(|id| ActionSpec {
            id: id.to_string(),
            race,
            category: Category::GeneralCommand,
            mineral_cost: 0,
            gas_cost: 0,
            supply_cost: 0,
            supply_granted: 0,
            build_time: 1,
            prerequisites: Vec::new(),
            produces: None,
            strength: 0.0,
            producer: None,
            slots: 1,
            extra_slot_for: None,
            tags: ActionTags::default(),
        })
        .collect()
}

fn parse_category(id: &str, raw: &str) -> Result<Category, CatalogError> {
    match raw {
        "unit" => Ok(Category::UnitProduction),
        "building" => Ok(Category::BuildingConstruction),
        "tech" => Ok(Category::TechnologyDevelopment),
        other => Err(CatalogError::Invalid {
            id: id.to_string(),
            reason: format!("unknown category `{other}`"),
        }),
    }
}

fn parse_tags(id: &str, raw: &[String]) -> Result<ActionTags, CatalogError> {
    let mut tags = ActionTags::default();
    for tag in raw {
        let slot = match tag.as_str() {
            "worker" => &mut tags.worker,
            "townhall" => &mut tags.townhall,
            "gas" => &mut tags.gas,
            "supply" => &mut tags.supply,
            "air" => &mut tags.air,
            "ground" => &mut tags.ground,
            "unique" => &mut tags.unique,
            "defense" => &mut tags.defense,
            other => {
                return Err(CatalogError::Invalid {
                    id: id.to_string(),
                    reason: format!("unknown tag `{other}`"),
                })
            }
        };
        *slot = true;
    }
    Ok(tags)
}

/// Parses and validates a catalog document for `race`.
pub fn load_catalog(race: Race, source: &str) -> Result<ActionCatalog, CatalogError> {
    let doc: CatalogDocument =
        toml::from_str(source).map_err(|e| CatalogError::Parse(e.to_string()))?;
    if doc.format != CATALOG_FORMAT {
        return Err(CatalogError::Format(doc.format));
    }
    if doc.race.parse::<Race>().ok() != Some(race) {
        return Err(CatalogError::RaceMismatch { expected: race, got: doc.race });
    }

    let mut actions = Vec::with_capacity(doc.actions.len());
    for rec in doc.actions {
        let category = parse_category(&rec.id, &rec.category)?;
        let tags = parse_tags(&rec.id, &rec.tags)?;
        if rec.minerals + rec.gas == 0 {
            return Err(CatalogError::Invalid { id: rec.id, reason: "zero cost".into() });
        }
        if rec.time == 0 {
            return Err(CatalogError::Invalid { id: rec.id, reason: "build time 0".into() });
        }
        if category != Category::UnitProduction && rec.supply > 0 {
            return Err(CatalogError::Invalid {
                id: rec.id,
                reason: "only units consume supply".into(),
            });
        }
        if !(rec.strength >= 0.0 && rec.strength.is_finite()) {
            return Err(CatalogError::Invalid { id: rec.id, reason: "bad strength".into() });
        }
        actions.push(ActionSpec {
            id: rec.id,
            race,
            category,
            mineral_cost: rec.minerals,
            gas_cost: rec.gas,
            supply_cost: rec.supply,
            supply_granted: rec.grants,
            build_time: rec.time,
            prerequisites: rec.requires,
            produces: rec.produces,
            strength: rec.strength,
            producer: rec.producer,
            slots: rec.slots.unwrap_or(1),
            extra_slot_for: rec.extra_slot_for,
            tags,
        });
    }

    let expected = race.expected_action_count();
    if actions.len() != expected {
        return Err(CatalogError::Count { expected, got: actions.len() });
    }

    let start = StartState {
        minerals: doc.start.minerals,
        gas: doc.start.gas,
        units: doc.start.units,
        buildings: doc.start.buildings,
    };
    ActionCatalog::assemble(race, actions, start)
}

impl ActionCatalog {
    fn assemble(
        race: Race,
        actions: Vec<ActionSpec>,
        start: StartState,
    ) -> Result<ActionCatalog, CatalogError> {
        let commands = general_commands(race);
        let mut by_id = HashMap::new();
        let mut by_lower_id = HashMap::new();
        let mut by_entity = HashMap::new();
        for (idx, spec) in actions.iter().chain(commands.iter()).enumerate() {
            if by_id.insert(spec.id.clone(), idx).is_some() {
                return Err(CatalogError::Duplicate(spec.id.clone()));
            }
            by_lower_id.insert(spec.id.to_ascii_lowercase(), idx);
            if let Some(entity) = &spec.produces {
                if by_entity.insert(entity.clone(), idx).is_some() {
                    return Err(CatalogError::Duplicate(entity.clone()));
                }
            }
        }

        for spec in &actions {
            let refs = spec
                .requirements()
                .chain(spec.extra_slot_for.as_deref())
                .map(str::to_string)
                .collect::<Vec<_>>();
            for r in refs {
                if !by_entity.contains_key(&r) {
                    return Err(CatalogError::Ref(r));
                }
            }
            if spec.produces.is_none() {
                return Err(CatalogError::Invalid {
                    id: spec.id.clone(),
                    reason: "produces nothing".into(),
                });
            }
        }
        for entity in start.units.keys().chain(start.buildings.keys()) {
            if !by_entity.contains_key(entity) {
                return Err(CatalogError::Ref(entity.clone()));
            }
        }

        let workers: Vec<&ActionSpec> = actions.iter().filter(|a| a.tags.worker).collect();
        let worker = match workers.as_slice() {
            [w] => w.produces.clone().unwrap_or_default(),
            _ => {
                return Err(CatalogError::Invalid {
                    id: race.name().to_string(),
                    reason: "catalog needs exactly one worker unit".into(),
                })
            }
        };

        let unit_set = actions
            .iter()
            .filter(|a| a.is_army_unit())
            .filter_map(|a| a.produces.clone())
            .collect();

        let catalog = ActionCatalog {
            race,
            actions,
            commands,
            unit_set,
            start,
            by_id,
            by_lower_id,
            by_entity,
            worker,
        };
        catalog.check_acyclic()?;
        catalog.check_reachable()?;
        Ok(catalog)
    }

    /// Depth-first search over entity → prerequisite edges.
    fn check_acyclic(&self) -> Result<(), CatalogError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut marks = vec![Mark::Fresh; self.actions.len()];
        let mut path: Vec<usize> = Vec::new();

        fn visit(
            cat: &ActionCatalog,
            idx: usize,
            marks: &mut [Mark],
            path: &mut Vec<usize>,
        ) -> Result<(), CatalogError> {
            match marks[idx] {
                Mark::Done => return Ok(()),
                Mark::Active => {
                    let start = path.iter().position(|&p| p == idx).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        path[start..].iter().map(|&i| cat.actions[i].id.clone()).collect();
                    cycle.push(cat.actions[idx].id.clone());
                    return Err(CatalogError::Cycle(cycle));
                }
                Mark::Fresh => {}
            }
            marks[idx] = Mark::Active;
            path.push(idx);
            for req in cat.actions[idx].requirements() {
                let next = cat.by_entity[req];
                visit(cat, next, marks, path)?;
            }
            path.pop();
            marks[idx] = Mark::Done;
            Ok(())
        }

        for idx in 0..self.actions.len() {
            visit(self, idx, &mut marks, &mut path)?;
        }
        Ok(())
    }

    /// Every action must become enabled starting from the prerequisite-free set.
    fn check_reachable(&self) -> Result<(), CatalogError> {
        let order = self.topological_order();
        if order.len() == self.actions.len() {
            return Ok(());
        }
        let reached: BTreeSet<usize> = order.into_iter().collect();
        let missing = (0..self.actions.len())
            .filter(|i| !reached.contains(i))
            .map(|i| self.actions[i].id.clone())
            .collect();
        Err(CatalogError::Unreachable(missing))
    }

    /// Actions in an order where each action follows the producers of its prerequisites.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut owned: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::with_capacity(self.actions.len());
        let mut placed = vec![false; self.actions.len()];
        loop {
            let mut progressed = false;
            for (idx, spec) in self.actions.iter().enumerate() {
                if placed[idx] || !spec.requirements().all(|r| owned.contains(r)) {
                    continue;
                }
                placed[idx] = true;
                order.push(idx);
                progressed = true;
                if let Some(p) = &spec.produces {
                    owned.insert(p.as_str());
                }
            }
            if !progressed {
                break;
            }
        }
        order
    }

    /// Loads the catalog shipped with the crate.
    pub fn builtin(race: Race) -> Arc<ActionCatalog> {
        static CATALOGS: OnceLock<[Arc<ActionCatalog>; 3]> = OnceLock::new();
        let all = CATALOGS.get_or_init(|| {
            Race::ALL.map(|r| {
                let cat = load_catalog(r, builtin_source(r))
                    .unwrap_or_else(|e| panic!("shipped {r} catalog is invalid: {e}"));
                Arc::new(cat)
            })
        });
        let pos = Race::ALL.iter().position(|&r| r == race).unwrap_or(0);
        Arc::clone(&all[pos])
    }

    pub fn get(&self, id: &str) -> Option<&ActionSpec> {
        self.by_id.get(id).map(|&i| self.spec_at(i))
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Case-insensitive lookup used by reply parsing.
    pub fn get_ignore_case(&self, id: &str) -> Option<&ActionSpec> {
        self.by_lower_id.get(&id.to_ascii_lowercase()).map(|&i| self.spec_at(i))
    }

    fn spec_at(&self, idx: usize) -> &ActionSpec {
        if idx < self.actions.len() {
            &self.actions[idx]
        } else {
            &self.commands[idx - self.actions.len()]
        }
    }

    /// The action that produces `entity`.
    pub fn producer_of(&self, entity: &str) -> Option<&ActionSpec> {
        self.by_entity.get(entity).map(|&i| self.spec_at(i))
    }

    /// Catalog position of the action producing `entity`; used for stable orderings.
    pub fn entity_rank(&self, entity: &str) -> usize {
        self.by_entity.get(entity).copied().unwrap_or(usize::MAX)
    }

    pub fn entity_kind(&self, entity: &str) -> Option<EntityKind> {
        self.producer_of(entity).map(|spec| match spec.category {
            Category::UnitProduction => EntityKind::Unit,
            Category::BuildingConstruction => EntityKind::Building,
            _ => EntityKind::Tech,
        })
    }

    pub fn strength_of(&self, entity: &str) -> f64 {
        self.producer_of(entity).map_or(0.0, |s| s.strength)
    }

    pub fn worker(&self) -> &str {
        &self.worker
    }

    pub fn tech_count(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| a.category == Category::TechnologyDevelopment)
            .count()
    }

    pub fn supply_action(&self) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.tags.supply)
    }

    pub fn townhall_action(&self) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.tags.townhall)
    }

    pub fn gas_action(&self) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.tags.gas)
    }

    pub fn worker_action(&self) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.tags.worker)
    }
}

pub fn builtin_source(race: Race) -> &'static str {
    match race {
        Race::Protoss => include_str!("../../data/catalog/protoss.toml"),
        Race::Terran => include_str!("../../data/catalog/terran.toml"),
        Race::Zerg => include_str!("../../data/catalog/zerg.toml"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_counts() {
        for race in Race::ALL {
            let cat = load_catalog(race, builtin_source(race)).unwrap();
            assert_eq!(cat.actions.len(), race.expected_action_count(), "{race}");
            assert!(cat.actions.iter().any(|a| a.prerequisites.is_empty()));
            assert_eq!(cat.topological_order().len(), cat.actions.len());
        }
    }

    #[test]
    fn removing_an_action_breaks_the_count() {
        let src = builtin_source(Race::Terran);
        let trimmed: String = src
            .lines()
            .filter(|l| !l.contains("\"ResearchWeaponRefit\""))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            load_catalog(Race::Terran, &trimmed).unwrap_err(),
            CatalogError::Count { expected: 62, got: 61 }
        );
    }

    #[test]
    fn cycle_is_reported_with_path() {
        let src = builtin_source(Race::Protoss).replace(
            "{ id = \"BuildPylon\", category = \"building\", minerals = 100, time = 25,",
            "{ id = \"BuildPylon\", category = \"building\", minerals = 100, time = 25, requires = [\"Gateway\"],",
        );
        match load_catalog(Race::Protoss, &src).unwrap_err() {
            CatalogError::Cycle(path) => {
                assert!(path.contains(&"BuildPylon".to_string()));
                assert!(path.contains(&"BuildGateway".to_string()));
                assert_eq!(path.first(), path.last());
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn dangling_reference() {
        let src = builtin_source(Race::Zerg)
            .replace("requires = [\"Hive\"], produces = \"Viper\"", "requires = [\"Hive2\"], produces = \"Viper\"");
        assert_eq!(load_catalog(Race::Zerg, &src).unwrap_err(), CatalogError::Ref("Hive2".into()));
    }

    #[test]
    fn wrong_race_and_header() {
        let src = builtin_source(Race::Zerg);
        assert!(matches!(
            load_catalog(Race::Protoss, src).unwrap_err(),
            CatalogError::RaceMismatch { .. }
        ));
        let bad = src.replace("hima-catalog/1", "hima-catalog/0");
        assert!(matches!(load_catalog(Race::Zerg, &bad).unwrap_err(), CatalogError::Format(_)));
    }

    #[test]
    fn lookups() {
        let cat = ActionCatalog::builtin(Race::Protoss);
        assert_eq!(cat.worker(), "Probe");
        assert_eq!(cat.get_ignore_case("buildpylon").unwrap().id, "BuildPylon");
        assert_eq!(cat.producer_of("Gateway").unwrap().id, "BuildGateway");
        assert_eq!(cat.get(ATTACK).unwrap().category, Category::GeneralCommand);
        assert_eq!(cat.entity_kind("Charge"), Some(EntityKind::Tech));
        assert!(!cat.unit_set.contains(&"Probe".to_string()));
        assert_eq!(cat.tech_count(), 24);
    }
}
