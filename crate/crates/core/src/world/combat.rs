//! Deterministic Lanchester-square battle rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::ActionCatalog;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CombatError {
    #[error("both armies are empty")]
    EmptyArmy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Victor {
    Attacker,
    Defender,
    Draw,
}

/// A borrowed army: unit counts plus the catalog and tech multiplier that give them strength.
#[derive(Debug, Clone, Copy)]
pub struct ArmyRef<'a> {
    pub units: &'a BTreeMap<String, u32>,
    pub catalog: &'a ActionCatalog,
    pub multiplier: f64,
}

impl<'a> ArmyRef<'a> {
    pub fn new(units: &'a BTreeMap<String, u32>, catalog: &'a ActionCatalog) -> Self {
        Self { units, catalog, multiplier: 1.0 }
    }

    pub fn power(&self) -> f64 {
        army_power(self.units, self.catalog, self.multiplier)
    }
}

pub fn army_power(units: &BTreeMap<String, u32>, catalog: &ActionCatalog, multiplier: f64) -> f64 {
    units
        .iter()
        .map(|(id, n)| catalog.strength_of(id) * f64::from(*n))
        .sum::<f64>()
        * multiplier
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombatOutcome {
    pub losses_attacker: BTreeMap<String, u32>,
    pub losses_defender: BTreeMap<String, u32>,
    pub victor: Option<Victor>,
    pub rounds: u32,
}

/// Mutable per-side combat state carried between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombatSide {
    pub units: BTreeMap<String, u32>,
    /// Damage received but not yet large enough to remove the next unit.
    pub carry: f64,
}

impl CombatSide {
    pub fn new(units: BTreeMap<String, u32>) -> Self {
        let units = units.into_iter().filter(|(_, n)| *n > 0).collect();
        Self { units, carry: 0.0 }
    }
}

/// Removes units worth `budget` power, weakest first. Returns what was removed.
fn take_losses(
    side: &mut CombatSide,
    catalog: &ActionCatalog,
    multiplier: f64,
    budget: f64,
    wipe: bool,
) -> BTreeMap<String, u32> {
    let mut removed = BTreeMap::new();
    if wipe {
        side.carry = 0.0;
        return std::mem::take(&mut side.units);
    }
    side.carry += budget;
    let mut order: Vec<(String, f64)> = side
        .units
        .keys()
        .map(|id| (id.clone(), catalog.strength_of(id) * multiplier))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    order.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| catalog.entity_rank(&a.0).cmp(&catalog.entity_rank(&b.0)))
    });
    for (id, strength) in order {
        let Some(count) = side.units.get_mut(&id) else { continue };
        let mut lost = 0;
        while *count > 0 && side.carry + EPS >= strength {
            *count -= 1;
            lost += 1;
            side.carry -= strength;
        }
        if *count == 0 {
            side.units.remove(&id);
        }
        if lost > 0 {
            removed.insert(id, lost);
        }
        if side.carry + EPS < strength {
            break;
        }
    }
    if side.carry < 0.0 {
        side.carry = 0.0;
    }
    removed
}

/// One synchronized round; both budgets come from pre-round power.
pub fn combat_round(
    a: &mut CombatSide,
    a_ref: (&ActionCatalog, f64),
    d: &mut CombatSide,
    d_ref: (&ActionCatalog, f64),
    attrition: f64,
) -> (BTreeMap<String, u32>, BTreeMap<String, u32>) {
    let pa = army_power(&a.units, a_ref.0, a_ref.1);
    let pd = army_power(&d.units, d_ref.0, d_ref.1);
    let budget_a = (pd * attrition).min(pa);
    let budget_d = (pa * attrition).min(pd);
    let wipe_a = pa > 0.0 && pd * attrition + EPS >= pa;
    let wipe_d = pd > 0.0 && pa * attrition + EPS >= pd;
    let la = take_losses(a, a_ref.0, a_ref.1, budget_a, wipe_a);
    let ld = take_losses(d, d_ref.0, d_ref.1, budget_d, wipe_d);
    (la, ld)
}

fn merge(into: &mut BTreeMap<String, u32>, from: BTreeMap<String, u32>) {
    for (id, n) in from {
        *into.entry(id).or_insert(0) += n;
    }
}

pub(crate) fn victor_of(pa: f64, pd: f64) -> Option<Victor> {
    match (pa <= EPS, pd <= EPS) {
        (true, true) => Some(Victor::Draw),
        (false, true) => Some(Victor::Attacker),
        (true, false) => Some(Victor::Defender),
        (false, false) => None,
    }
}

/// Fights up to `rounds` rounds, stopping early once a side is destroyed.
pub fn resolve_combat(
    attacker: ArmyRef<'_>,
    defender: ArmyRef<'_>,
    rounds: u32,
    attrition: f64,
) -> Result<CombatOutcome, CombatError> {
    let mut a = CombatSide::new(attacker.units.clone());
    let mut d = CombatSide::new(defender.units.clone());
    let power = |s: &CombatSide, r: &ArmyRef<'_>| army_power(&s.units, r.catalog, r.multiplier);
    if power(&a, &attacker) <= EPS && power(&d, &defender) <= EPS {
        return Err(CombatError::EmptyArmy);
    }
    let mut outcome = CombatOutcome {
        losses_attacker: BTreeMap::new(),
        losses_defender: BTreeMap::new(),
        victor: victor_of(power(&a, &attacker), power(&d, &defender)),
        rounds: 0,
    };
    while outcome.victor.is_none() && outcome.rounds < rounds {
        let (la, ld) = combat_round(
            &mut a,
            (attacker.catalog, attacker.multiplier),
            &mut d,
            (defender.catalog, defender.multiplier),
            attrition,
        );
        merge(&mut outcome.losses_attacker, la);
        merge(&mut outcome.losses_defender, ld);
        outcome.rounds += 1;
        outcome.victor = victor_of(power(&a, &attacker), power(&d, &defender));
    }
    Ok(outcome)
}
