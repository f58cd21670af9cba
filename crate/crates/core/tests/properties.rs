//! Property tests for the structural invariants: configuration round trips,
//! mutual inversion of the control maps, and linearity of the simulator.

use proptest::prelude::*;

use memstring::config::{load_config, serialize_config};
use memstring::medium::MemoryKernel;
use memstring::volterra::{apply_memory_map, invert_memory_map};
use memstring::TimeGrid;

fn kernel_strategy() -> impl Strategy<Value = MemoryKernel> {
    prop_oneof![
        Just(MemoryKernel::Zero),
        (0.05f64..1.0, 0.1f64..3.0).prop_map(|(a, eta)| MemoryKernel::Exponential { a, eta }),
        proptest::collection::vec(-0.5f64..0.5, 1..4)
            .prop_map(|coeffs| MemoryKernel::Polynomial { coeffs }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn config_serialization_round_trips(
        length in 0.5f64..3.0,
        rho in 0.2f64..4.0,
        alpha in 0.2f64..4.0,
        beta in -5.0f64..5.0,
        n_modes in 1usize..40,
        kernel in kernel_strategy(),
    ) {
        let doc = format!(
            r#"{{
                "medium": {{
                    "length": {length},
                    "rho": {{"const": {rho}}},
                    "alpha": {{"const": {alpha}}},
                    "beta": {{"const": {beta}}}
                }},
                "kernel": {},
                "horizon": 2.0,
                "n_modes": {n_modes},
                "dt": 0.001
            }}"#,
            serde_json::to_string(&kernel).unwrap(),
        );
        let cfg = load_config(&doc).unwrap();
        let text = serialize_config(&cfg);
        let cfg2 = load_config(&text).unwrap();
        prop_assert_eq!(cfg, cfg2);
    }

    #[test]
    fn memory_map_round_trip_is_identity(
        kernel in kernel_strategy(),
        a1 in -1.0f64..1.0,
        a2 in -1.0f64..1.0,
        w in 0.5f64..6.0,
    ) {
        let grid = TimeGrid::new(2.0, 2e-3).unwrap();
        let f: Vec<f64> = grid.times().map(|t| a1 * (w * t).sin() + a2 * (0.5 * w * t).cos()).collect();
        let g = apply_memory_map(&f, &kernel, &grid).unwrap();
        let back = invert_memory_map(&g, &kernel, &grid).unwrap();
        for (x, y) in f.iter().zip(back.iter()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
