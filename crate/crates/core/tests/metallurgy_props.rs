use phosforge_core::metallurgy::{
    partition_coefficient, partition_from_capacity, phosphate_capacity_from_partition, phosphate_capacity_gas,
    SlagMetalState,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn partition_is_scale_free(slag in 0.0f64..1.0, metal in 1e-4f64..0.1, k in 1e-3f64..1e3) {
        let base = SlagMetalState { pct_p_slag: slag, pct_p_metal: metal, ..Default::default() };
        let scaled = SlagMetalState { pct_p_slag: slag * k, pct_p_metal: metal * k, ..Default::default() };
        let a = partition_coefficient(&base).unwrap().l_p;
        let b = partition_coefficient(&scaled).unwrap().l_p;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn capacity_is_linear_in_partition_and_kp(
        l_p in 0.1f64..50.0, k_p in 0.1f64..10.0, s in 0.1f64..10.0, p_o2 in 1e-3f64..2.0, f_p in 0.1f64..3.0,
    ) {
        let state = SlagMetalState { k_p, f_p, p_o2, ..Default::default() };
        let c = phosphate_capacity_from_partition(&state, l_p).unwrap();
        let c_l = phosphate_capacity_from_partition(&state, s * l_p).unwrap();
        prop_assert!((c_l - s * c).abs() <= 1e-12 * c_l.abs());
        let scaled_k = SlagMetalState { k_p: s * k_p, ..state.clone() };
        let c_k = phosphate_capacity_from_partition(&scaled_k, l_p).unwrap();
        prop_assert!((c_k - s * c).abs() <= 1e-12 * c_k.abs());
    }

    #[test]
    fn capacity_routes_agree_on_consistent_states(
        l_p in 1.0f64..20.0, k_p in 0.1f64..10.0, f_p in 0.2f64..3.0, p_o2 in 1e-3f64..1.0, p_p2 in 1e-3f64..1.0,
    ) {
        let mut state = SlagMetalState { k_p, f_p, p_o2, p_p2, ..Default::default() };
        let c = phosphate_capacity_from_partition(&state, l_p).unwrap();
        // the slag PO₄ content that makes the gas route give the same C
        state.pct_po4_slag = Some(c * p_p2.sqrt() * p_o2.powf(1.25));
        let gas = phosphate_capacity_gas(&state).unwrap();
        prop_assert!((gas - c).abs() <= 1e-12 * c.abs());
        prop_assert!((partition_from_capacity(&state, gas).unwrap() - l_p).abs() <= 1e-12 * l_p);
    }
}

#[test]
fn doubling_oxygen_pressure() {
    let low = SlagMetalState { p_o2: 0.21, ..Default::default() };
    let high = SlagMetalState { p_o2: 0.42, ..Default::default() };
    let ratio = phosphate_capacity_from_partition(&high, 8.0).unwrap() / phosphate_capacity_from_partition(&low, 8.0).unwrap();
    assert!((ratio - 2f64.powf(-1.25)).abs() < 1e-12);
}
