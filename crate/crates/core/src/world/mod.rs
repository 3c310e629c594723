//! The deterministic two-player macro simulator.

pub mod catalog;
pub mod combat;
pub mod state;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    builtin_source, load_catalog, ActionCatalog, ActionSpec, Category, CatalogError, EntityKind,
    Race, ATTACK, SCOUT,
};
pub use combat::{resolve_combat, ArmyRef, CombatError, CombatOutcome, CombatSide, Victor};
pub use state::{check_feasibility, try_enqueue, ActionRequest, Completion, Feasibility, PlayerState, QueueEntry, Resources};

use crate::config::{CheatRules, WorldRules};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("player index {0} out of range")]
    BadPlayer(usize),
    #[error("cannot apply {action} for player {player}: {verdict}")]
    ApplyOnInfeasible { player: usize, action: String, verdict: Feasibility },
    #[error("tick requested after the match ended ({0:?})")]
    TickAfterTerminal(Outcome),
    #[error("tick length must be at least one second")]
    ZeroTick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Win(usize),
    Draw,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }
}

/// An attack in progress. The defender's whole base is exposed to the attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub attacker: usize,
    pub started: u32,
    pub rounds: u32,
    pub attacker_carry: f64,
    pub defender_carry: f64,
    /// Damage toward non-combat targets once the defending army is gone.
    pub siege_carry: f64,
}

impl Engagement {
    pub fn defender(&self) -> usize {
        1 - self.attacker
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub tick: u32,
    pub players: [PlayerState; 2],
    pub engagement: Option<Engagement>,
    pub rng_seed: u64,
    pub outcome: Outcome,
    /// Tick of each player's most recent scout.
    pub scouted_at: [Option<u32>; 2],
}

/// Things that happened while time advanced or a command resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldEvent {
    Completed { player: usize, action_id: String, entity: String },
    EngagementStarted { attacker: usize, committed: u32 },
    CombatRound {
        attacker: usize,
        round: u32,
        attacker_losses: BTreeMap<String, u32>,
        defender_losses: BTreeMap<String, u32>,
    },
    EngagementEnded { attacker: usize, victor: Victor },
    Scouted { player: usize },
    MatchEnded { outcome: Outcome },
}

/// What one player can see at a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tick: u32,
    pub player: usize,
    pub own: PlayerState,
    pub opponent: OpponentView,
    pub visible_enemy_count: u32,
    pub engaged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OpponentView {
    Hidden,
    Revealed { units: BTreeMap<String, u32>, buildings: BTreeMap<String, u32> },
    Full(Box<PlayerState>),
}

/// Rules plus the two players' catalogs. Cheap to clone and share across threads.
#[derive(Debug, Clone)]
pub struct World {
    pub catalogs: [Arc<ActionCatalog>; 2],
    pub rules: WorldRules,
}

impl World {
    pub fn new(races: [Race; 2], rules: WorldRules) -> Self {
        Self { catalogs: races.map(ActionCatalog::builtin), rules }
    }

    pub fn with_catalogs(catalogs: [Arc<ActionCatalog>; 2], rules: WorldRules) -> Self {
        Self { catalogs, rules }
    }

    pub fn catalog(&self, player: usize) -> &ActionCatalog {
        &self.catalogs[player]
    }

    pub fn initial_state(&self, seed: u64) -> GameState {
        GameState {
            tick: 0,
            players: [0, 1].map(|i| PlayerState::new(&self.catalogs[i], &self.rules)),
            engagement: None,
            rng_seed: seed,
            outcome: Outcome::Ongoing,
            scouted_at: [None, None],
        }
    }

    /// Applies the cheat-money tier to `player` at match start.
    pub fn grant_cheat_money(&self, state: &mut GameState, player: usize, cheats: &CheatRules) {
        state.players[player].grant_cheat_money(cheats.bank_bonus, cheats.income_multiplier);
    }

    pub fn validate_action(&self, state: &GameState, player: usize, action_id: &str) -> Feasibility {
        match state.players.get(player) {
            Some(p) => check_feasibility(p, &self.catalogs[player], action_id),
            None => Feasibility::UnknownAction,
        }
    }

    /// Pays for and queues `action_id`, or runs a general command.
    pub fn apply_action(
        &self,
        state: &mut GameState,
        player: usize,
        action_id: &str,
    ) -> Result<Vec<WorldEvent>, WorldError> {
        if player > 1 {
            return Err(WorldError::BadPlayer(player));
        }
        let verdict = self.validate_action(state, player, action_id);
        if !verdict.is_ok() {
            return Err(WorldError::ApplyOnInfeasible {
                player,
                action: action_id.to_string(),
                verdict,
            });
        }
        let catalog = &self.catalogs[player];
        let spec = catalog.get(action_id).expect("validated action exists");
        if !spec.is_command() {
            state::enqueue(&mut state.players[player], spec);
            return Ok(Vec::new());
        }
        Ok(match action_id {
            ATTACK => self.start_attack(state, player),
            SCOUT => {
                state.scouted_at[player] = Some(state.tick);
                vec![WorldEvent::Scouted { player }]
            }
            _ => Vec::new(),
        })
    }

    fn start_attack(&self, state: &mut GameState, player: usize) -> Vec<WorldEvent> {
        if state.engagement.is_some() || state.outcome.is_terminal() {
            return Vec::new();
        }
        let army = state.players[player].army(&self.catalogs[player]);
        let committed: u32 = army
            .iter()
            .filter(|(id, _)| self.catalogs[player].entity_kind(id) == Some(EntityKind::Unit))
            .map(|(_, n)| *n)
            .sum();
        if committed == 0 {
            return Vec::new();
        }
        state.engagement = Some(Engagement {
            attacker: player,
            started: state.tick,
            rounds: 0,
            attacker_carry: 0.0,
            defender_carry: 0.0,
            siege_carry: 0.0,
        });
        vec![WorldEvent::EngagementStarted { attacker: player, committed }]
    }

    /// Advances `dt` seconds, returning everything that happened in order.
    pub fn tick(&self, state: &mut GameState, dt: u32) -> Result<Vec<WorldEvent>, WorldError> {
        if dt == 0 {
            return Err(WorldError::ZeroTick);
        }
        let mut events = Vec::new();
        for _ in 0..dt {
            if state.outcome.is_terminal() {
                return Err(WorldError::TickAfterTerminal(state.outcome));
            }
            self.step(state, &mut events);
        }
        Ok(events)
    }

    fn step(&self, state: &mut GameState, events: &mut Vec<WorldEvent>) {
        for (i, player) in state.players.iter_mut().enumerate() {
            for c in player.advance_second(&self.catalogs[i], &self.rules) {
                events.push(WorldEvent::Completed { player: i, action_id: c.action_id, entity: c.entity });
            }
        }
        state.tick += 1;

        let round_due = state.engagement.as_ref().is_some_and(|e| {
            (state.tick - e.started) % self.rules.combat_round_seconds == 0
        });
        if round_due {
            self.combat_round(state, events);
        }
        self.terminal_check(state, events);
    }

    fn combat_round(&self, state: &mut GameState, events: &mut Vec<WorldEvent>) {
        let Some(mut eng) = state.engagement.take() else { return };
        let (a, d) = (eng.attacker, eng.defender());
        let (cat_a, cat_d) = (&self.catalogs[a], &self.catalogs[d]);
        let mult_a = state.players[a].strength_multiplier(&self.rules);
        let mult_d = state.players[d].strength_multiplier(&self.rules);

        let mut side_a = CombatSide { units: attacking_units(&state.players[a], cat_a), carry: eng.attacker_carry };
        let mut side_d = CombatSide { units: state.players[d].army(cat_d), carry: eng.defender_carry };
        let pa = combat::army_power(&side_a.units, cat_a, mult_a);
        let pd = combat::army_power(&side_d.units, cat_d, mult_d);
        eng.rounds += 1;

        let (la, ld) = if pd > 0.0 {
            combat::combat_round(
                &mut side_a,
                (cat_a, mult_a),
                &mut side_d,
                (cat_d, mult_d),
                self.rules.attrition,
            )
        } else {
            (BTreeMap::new(), self.siege(&mut eng, &state.players[d], cat_d, pa))
        };
        eng.attacker_carry = side_a.carry;
        eng.defender_carry = side_d.carry;

        for (id, n) in &la {
            state.players[a].remove_entity(cat_a, id, *n);
        }
        for (id, n) in &ld {
            state.players[d].remove_entity(cat_d, id, *n);
        }
        state.players[a].enforce_supply(cat_a, &self.rules);
        state.players[d].enforce_supply(cat_d, &self.rules);

        events.push(WorldEvent::CombatRound {
            attacker: a,
            round: eng.rounds,
            attacker_losses: la,
            defender_losses: ld,
        });

        let pa_after = state.players[a].army_power(cat_a, &self.rules);
        let pd_after = combat::army_power(&state.players[d].army(cat_d), cat_d, mult_d);
        let victor = if pa_after <= 0.0 {
            Some(if pd_after <= 0.0 { Victor::Draw } else { Victor::Defender })
        } else if state.players[d].building_total() == 0 {
            Some(Victor::Attacker)
        } else {
            None
        };
        match victor {
            Some(victor) => events.push(WorldEvent::EngagementEnded { attacker: a, victor }),
            None => state.engagement = Some(eng),
        }
    }

    /// Damage against an undefended base: units fall before buildings.
    fn siege(
        &self,
        eng: &mut Engagement,
        defender: &PlayerState,
        catalog: &ActionCatalog,
        attacker_power: f64,
    ) -> BTreeMap<String, u32> {
        eng.siege_carry += attacker_power * self.rules.attrition;
        let mut targets: Vec<(String, u32, f64)> = Vec::new();
        let mut push = |id: &String, n: u32, durability: f64| targets.push((id.clone(), n, durability));
        let mut units: Vec<_> = defender.units.iter().filter(|(_, n)| **n > 0).collect();
        units.sort_by_key(|(id, _)| catalog.entity_rank(id));
        for (id, n) in units {
            let spec = catalog.producer_of(id);
            let durability = if spec.is_some_and(|s| s.tags.worker) { 0.5 } else { 1.0 };
            push(id, *n, durability);
        }
        let mut buildings: Vec<_> = defender.buildings.iter().filter(|(_, n)| **n > 0).collect();
        buildings.sort_by(|a, b| {
            building_durability(catalog, a.0)
                .total_cmp(&building_durability(catalog, b.0))
                .then_with(|| catalog.entity_rank(a.0).cmp(&catalog.entity_rank(b.0)))
        });
        for (id, n) in buildings {
            push(id, *n, building_durability(catalog, id));
        }

        let mut removed = BTreeMap::new();
        'outer: for (id, n, durability) in targets {
            for _ in 0..n {
                if eng.siege_carry + 1e-9 < durability {
                    break 'outer;
                }
                eng.siege_carry -= durability;
                *removed.entry(id.clone()).or_insert(0) += 1;
            }
        }
        if removed.values().sum::<u32>() as usize
            == defender.units.values().chain(defender.buildings.values()).sum::<u32>() as usize
        {
            eng.siege_carry = 0.0;
        }
        removed
    }

    fn terminal_check(&self, state: &mut GameState, events: &mut Vec<WorldEvent>) {
        let dead = [0, 1].map(|i| state.players[i].building_total() == 0);
        let outcome = match dead {
            [true, true] => Outcome::Draw,
            [true, false] => Outcome::Win(1),
            [false, true] => Outcome::Win(0),
            [false, false] if state.tick >= self.rules.time_cap => {
                let v0 = state.players[0].army_supply(&self.catalogs[0]);
                let v1 = state.players[1].army_supply(&self.catalogs[1]);
                match v0.cmp(&v1) {
                    std::cmp::Ordering::Greater => Outcome::Win(0),
                    std::cmp::Ordering::Less => Outcome::Win(1),
                    std::cmp::Ordering::Equal => Outcome::Draw,
                }
            }
            _ => Outcome::Ongoing,
        };
        if outcome.is_terminal() {
            state.outcome = outcome;
            state.engagement = None;
            events.push(WorldEvent::MatchEnded { outcome });
        }
    }

    pub fn observe(&self, state: &GameState, player: usize, cheat_vision: bool) -> Observation {
        let other = 1 - player;
        let opp = &state.players[other];
        let opp_cat = &self.catalogs[other];
        let scouted = state.scouted_at[player]
            .is_some_and(|s| state.tick >= s && state.tick < s + self.rules.scout_window);
        let engaged = state.engagement.is_some();

        let opponent = if cheat_vision {
            OpponentView::Full(Box::new(opp.clone()))
        } else if scouted {
            OpponentView::Revealed { units: opp.units.clone(), buildings: opp.buildings.clone() }
        } else if let Some(eng) = &state.engagement {
            if eng.attacker == player {
                // The attacker stands in the defender's base.
                OpponentView::Revealed { units: opp.army(opp_cat), buildings: opp.buildings.clone() }
            } else {
                OpponentView::Revealed { units: attacking_units(opp, opp_cat), buildings: BTreeMap::new() }
            }
        } else {
            OpponentView::Hidden
        };

        let visible_enemy_count = match &opponent {
            OpponentView::Hidden => 0,
            OpponentView::Full(p) => combat_unit_count(&p.units, opp_cat),
            OpponentView::Revealed { units, .. } => combat_unit_count(units, opp_cat),
        };
        Observation {
            tick: state.tick,
            player,
            own: state.players[player].clone(),
            opponent,
            visible_enemy_count,
            engaged,
        }
    }

    /// Resolves a battle between two armies with this world's rules.
    pub fn resolve_combat(
        &self,
        attacker: &BTreeMap<String, u32>,
        attacker_player: usize,
        defender: &BTreeMap<String, u32>,
        rounds: u32,
    ) -> Result<CombatOutcome, CombatError> {
        let d = 1 - attacker_player;
        resolve_combat(
            ArmyRef::new(attacker, &self.catalogs[attacker_player]),
            ArmyRef::new(defender, &self.catalogs[d]),
            rounds,
            self.rules.attrition,
        )
    }
}

fn building_durability(catalog: &ActionCatalog, id: &str) -> f64 {
    let cost = catalog.producer_of(id).map_or(0, |s| s.mineral_cost + s.gas_cost);
    2.0 + f64::from(cost) / 100.0
}

fn attacking_units(player: &PlayerState, catalog: &ActionCatalog) -> BTreeMap<String, u32> {
    player
        .army(catalog)
        .into_iter()
        .filter(|(id, _)| catalog.entity_kind(id) == Some(EntityKind::Unit))
        .collect()
}

fn combat_unit_count(units: &BTreeMap<String, u32>, catalog: &ActionCatalog) -> u32 {
    units
        .iter()
        .filter(|(id, _)| {
            catalog.entity_kind(id) == Some(EntityKind::Unit) && catalog.strength_of(id) > 0.0
        })
        .map(|(_, n)| *n)
        .sum()
}
