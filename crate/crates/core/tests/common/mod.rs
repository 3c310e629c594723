//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hima_core::advisors::WindowAction;
use hima_core::config::WorldRules;
use hima_core::demos::{ReplayEvent, ReplayLog, ReplayMeta};
use hima_core::harness::{build_stack, generate_corpus, CorpusSpec, HimaSpec, HimaStack, TickSample, TraceRecord};
use hima_core::world::{ActionCatalog, Category, GameState, Observation, PlayerState, Race, World};
use hima_core::HimaConfig;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The standard Protoss-vs-Zerg stacks, built once per test binary.
pub struct Stacks {
    pub multi: HimaStack,
    pub single: HimaStack,
}

pub fn stacks() -> &'static Stacks {
    static CELL: OnceLock<Stacks> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = HimaConfig::default();
        let corpus = generate_corpus(&CorpusSpec::standard(Race::Protoss, Race::Zerg), &cfg.world, 0).expect("corpus");
        Stacks {
            multi: build_stack(&corpus, Race::Protoss, cfg.clustering.k, 7, &cfg).expect("stack"),
            single: build_stack(&corpus, Race::Protoss, 1, 7, &cfg).expect("single stack"),
        }
    })
}

pub fn hima_spec(stack: &HimaStack) -> HimaSpec {
    HimaSpec::new(Arc::clone(&stack.pool), &HimaConfig::default())
}

// ---- window oracle ----

/// Brute force: for every distinct action time t of `player`, every one of
/// that player's events with t <= e.t < t + delta, ordered by (time, log index).
pub fn window_oracle(log: &ReplayLog, player: usize, delta: u32) -> Vec<(u32, Vec<WindowAction>)> {
    let mut mine: Vec<(u32, usize, &str)> = log
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.player == player)
        .map(|(i, e)| (e.t, i, e.action_id.as_str()))
        .collect();
    mine.sort();
    let times: BTreeSet<u32> = mine.iter().map(|m| m.0).collect();
    times
        .into_iter()
        .map(|t| {
            let w = mine
                .iter()
                .filter(|(et, _, _)| *et >= t && u64::from(*et) < u64::from(t) + u64::from(delta))
                .map(|(et, _, id)| WindowAction { action_id: id.to_string(), offset: et - t })
                .collect();
            (t, w)
        })
        .collect()
}

pub fn synthetic_log(events: Vec<ReplayEvent>) -> ReplayLog {
    let mut log = ReplayLog::new(ReplayMeta {
        id: "synthetic".into(),
        races: [Race::Protoss, Race::Zerg],
        seed: 0,
        winner: Some(0),
        duration: events.iter().map(|e| e.t).max().unwrap_or(0),
        final_units: Default::default(),
        demonstrators: [true, true],
        labels: ["a".into(), "b".into()],
    });
    log.events = events;
    log
}

pub fn random_log(r: &mut ChaCha8Rng, catalog: &ActionCatalog) -> ReplayLog {
    let n = r.random_range(1..=200);
    let horizon = r.random_range(1..=1500);
    let mut events: Vec<ReplayEvent> = (0..n)
        .map(|_| ReplayEvent {
            t: r.random_range(0..horizon),
            player: r.random_range(0..2),
            action_id: catalog.actions[r.random_range(0..catalog.actions.len())].id.clone(),
        })
        .collect();
    if r.random_bool(0.5) {
        events.sort_by_key(|e| e.t);
    }
    synthetic_log(events)
}

// ---- metrics oracle ----

/// Straight from the definitions: ticks at max supply over all ticks; spend at
/// the first such tick (whole game if never); mean utilisation up to it; share
/// of researched technologies.
pub fn metrics_oracle(samples: &[TickSample], techs_total: u32, max_supply: u32) -> (f64, u64, bool, f64, f64) {
    let total = samples.len() as f64;
    let mut at_max = 0usize;
    let mut first: Option<usize> = None;
    for (i, s) in samples.iter().enumerate() {
        if s.supply_used >= max_supply {
            at_max += 1;
            if first.is_none() {
                first = Some(i);
            }
        }
    }
    let spend = |s: &TickSample| s.spent_minerals + s.spent_gas;
    let rur = match first {
        Some(i) => spend(&samples[i]),
        None => spend(samples.last().unwrap()),
    };
    let end = first.map_or(samples.len(), |i| i + 1);
    let mut util = 0.0;
    for s in &samples[..end] {
        if s.supply_cap > 0 {
            util += f64::from(s.supply_used) / f64::from(s.supply_cap);
        }
    }
    let tr = if techs_total == 0 { 0.0 } else { f64::from(samples.last().unwrap().techs) / f64::from(techs_total) };
    (at_max as f64 / total, rur, first.is_some(), util / end as f64, tr)
}

pub fn samples_of(trace: &[TraceRecord], side: usize) -> Vec<TickSample> {
    trace
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Tick { side: s, sample } if *s == side => Some(*sample),
            _ => None,
        })
        .collect()
}

// ---- nearest neighbour oracle ----

pub fn brute_nearest(rows: &[Vec<f64>], q: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        let d: f64 = r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

// ---- clustering ----

/// Adjusted Rand index from the contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n as u64);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Three tight blobs far apart in `dim` dimensions, with the true labels.
pub fn three_blobs(r: &mut ChaCha8Rng, per: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..per {
            pts.push((0..dim).map(|d| if d % 3 == c { 10.0 } else { 0.0 } + r.random_range(-0.5..0.5)).collect());
            labels.push(c);
        }
    }
    (pts, labels)
}

// ---- world states ----

/// A reachable state: a fresh game advanced with random valid actions.
pub fn random_state(r: &mut ChaCha8Rng, race: Race, steps: u32) -> (World, GameState) {
    let world = World::new([race, Race::Zerg], WorldRules::default());
    let mut state = world.initial_state(r.random());
    let cat = world.catalog(0).clone();
    let producible: Vec<String> =
        cat.actions.iter().filter(|a| a.category != Category::GeneralCommand).map(|a| a.id.clone()).collect();
    for _ in 0..steps {
        for _ in 0..3 {
            let id = &producible[r.random_range(0..producible.len())];
            if world.validate_action(&state, 0, id).is_ok() {
                world.apply_action(&mut state, 0, id).expect("validated");
            }
        }
        world.tick(&mut state, 1).expect("tick");
    }
    (world, state)
}

pub fn observation(world: &World, state: &GameState) -> Observation {
    world.observe(state, 0, false)
}

/// Independent restatement of the feasibility rules.
pub fn requirements_owned(p: &PlayerState, catalog: &ActionCatalog, id: &str) -> bool {
    let spec = catalog.get(id).expect("known action");
    let owned = |e: &str| p.units.get(e).is_some_and(|n| *n > 0) || p.buildings.get(e).is_some_and(|n| *n > 0) || p.techs.contains(e);
    spec.producer.iter().chain(spec.prerequisites.iter()).all(|e| owned(e))
}

pub fn conservation_holds(p: &PlayerState) -> bool {
    let m = p.starting.minerals + p.cumulative_harvested.minerals + p.cheat_injections.minerals;
    let g = p.starting.gas + p.cumulative_harvested.gas + p.cheat_injections.gas;
    m.checked_sub(p.cumulative_spent.minerals) == Some(u64::from(p.minerals))
        && g.checked_sub(p.cumulative_spent.gas) == Some(u64::from(p.gas))
}
