//! Round-trip properties of the scenario file format.

use proptest::prelude::*;
use ttscore_core::{
    generate_random_scenario, load_scenario, parse_scenario, save_scenario, scenario_to_json,
    validate_scenario, FaultModel, Scenario,
};

/// Generated topologies with randomized fault parameters, timeout, and model.
fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (
        2u32..=5,
        any::<u16>(),
        1u32..=6,
        any::<bool>(),
        proptest::collection::vec(0u8..=10, 24),
    )
        .prop_map(|(n, seed, timeout, permanent, tenths)| {
            let mut s = generate_random_scenario(n, seed as u64).unwrap();
            s.timeout = timeout;
            s.fault_model = if permanent {
                FaultModel::Permanent
            } else {
                FaultModel::Temporary
            };
            for (e, pair) in s.network.edges.iter_mut().zip(tenths.chunks(2)) {
                e.p_crash = f64::from(pair[0]) / 10.0;
                e.p_omit = f64::from(pair[1]) / 10.0;
            }
            s
        })
}

proptest! {
    #[test]
    fn json_round_trip_is_lossless_and_canonical(s in scenario_strategy()) {
        prop_assert_eq!(validate_scenario(&s), vec![]);
        let json = scenario_to_json(&s);
        let back = parse_scenario(&json).unwrap();
        prop_assert_eq!(&back, &s);
        // Serialisation is canonical: a reloaded scenario prints identically.
        prop_assert_eq!(scenario_to_json(&back), json);
    }
}

#[test]
fn file_round_trip_preserves_a_generated_scenario() {
    let s = generate_random_scenario(4, 7).unwrap();
    let path = std::env::temp_dir().join(format!("ttscore-roundtrip-{}.json", std::process::id()));
    save_scenario(&s, &path).unwrap();
    let back = load_scenario(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back, s);
}
