//! Round-trip properties of the scenario text form.

use proptest::prelude::*;

use fracwave_harness::scenario::{format_real, parse_real};
use fracwave_harness::{Recipe, Scenario};

fn scenario_text(dt_steps: u32, order: f64, width: f64, seed: u64, noise: f64) -> String {
    format!(
        "grid.points = 64\ngrid.box_length = 4\ngrid.order = {order}\n\
         time.dt = 1/{dt_steps}\ntime.steps = {dt_steps}\n\
         mask.omega = -0.5:0.5\nmask.w1 = -1.25:-0.5625\nmask.w2 = 0.5625:1.25\n\
         initial.u0 = bump(center=0, width={width}, amplitude=1)\n\
         noise.level = {noise}\nseed = {seed}\n"
    )
}

proptest! {
    #[test]
    fn reals_survive_formatting(v in proptest::num::f64::NORMAL) {
        prop_assert_eq!(parse_real(&format_real(v)).unwrap(), v);
    }

    #[test]
    fn canonical_text_is_a_fixed_point(
        steps in 8u32..512,
        order in 0.1f64..0.95,
        width in 0.05f64..0.5,
        seed in any::<u64>(),
        noise in 0.0f64..0.1,
    ) {
        let s = Scenario::parse(&scenario_text(steps, order, width, seed, noise)).unwrap();
        let again = Scenario::parse(&s.canonical_text()).unwrap();
        prop_assert_eq!(again.canonical_text(), s.canonical_text());
        prop_assert_eq!(again.hash(), s.hash());
        prop_assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn distinct_seeds_give_distinct_hashes(a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let sa = Scenario::parse(&scenario_text(64, 0.75, 0.3, a, 0.0)).unwrap();
        let sb = Scenario::parse(&scenario_text(64, 0.75, 0.3, b, 0.0)).unwrap();
        prop_assert_ne!(sa.hash(), sb.hash());
    }

    #[test]
    fn recipes_round_trip_through_display(c in -1.0f64..1.0, w in 0.01f64..1.0, a in -5.0f64..5.0) {
        let r = Recipe::parse(&format!("bump(amplitude={a}, center={c}, width={w})")).unwrap();
        prop_assert_eq!(Recipe::parse(&r.to_string()).unwrap(), r);
    }
}
