mod common;

use proptest::prelude::*;

use common::{conservation_holds, requirements_owned};
use hima_core::config::{CheatRules, WorldRules};
use hima_core::world::{Feasibility, Race, World};

fn race() -> impl Strategy<Value = Race> {
    prop::sample::select(vec![Race::Protoss, Race::Zerg, Race::Terran])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_attempts_keep_invariants(
        races in (race(), race()),
        seed in any::<u64>(),
        cheat in any::<bool>(),
        attempts in prop::collection::vec((0usize..2, any::<prop::sample::Index>(), 0u32..3), 1..400),
    ) {
        let world = World::new([races.0, races.1], WorldRules::default());
        let mut state = world.initial_state(seed);
        if cheat {
            world.grant_cheat_money(&mut state, 1, &CheatRules::default());
        }
        for (p, pick, dt) in attempts {
            if state.outcome.is_terminal() {
                break;
            }
            let cat = world.catalog(p);
            let spec = &cat.actions[pick.index(cat.actions.len())];
            let verdict = world.validate_action(&state, p, &spec.id);
            if !spec.is_command() {
                let pl = &state.players[p];
                let owned = requirements_owned(pl, cat, &spec.id);
                prop_assert_eq!(matches!(verdict, Feasibility::MissingPrerequisite(_)), !owned);
                if verdict.is_ok() {
                    prop_assert!(pl.minerals >= spec.mineral_cost && pl.gas >= spec.gas_cost);
                    prop_assert!(spec.supply_cost == 0 || pl.supply_used + spec.supply_cost <= pl.supply_cap);
                }
            }
            if verdict.is_ok() {
                world.apply_action(&mut state, p, &spec.id).unwrap();
            } else {
                prop_assert!(world.apply_action(&mut state.clone(), p, &spec.id).is_err());
            }
            if dt > 0 {
                world.tick(&mut state, dt).unwrap();
            }
            for pl in &state.players {
                prop_assert!(conservation_holds(pl));
                prop_assert!(pl.supply_used <= 200 && pl.supply_cap <= 200);
            }
        }
    }
}
