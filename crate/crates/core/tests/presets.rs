use tilesync_core::engine::{avoid_wait_kernel, simulate};
use tilesync_core::oracle::{build_dep_dag, validate_trace};
use tilesync_core::workloads::{applicable_policies, preset_names, preset_with, table5_presets, table7_presets};
use tilesync_core::{Mode, ScenarioError};

#[test]
fn every_preset_is_safe_in_both_modes() {
    for name in preset_names() {
        for choice in applicable_policies(&name).unwrap() {
            for mode in [Mode::StreamSync, Mode::FineGrained] {
                let sc = preset_with(&name, choice, mode).unwrap();
                let out = simulate(&sc).unwrap();
                assert!(!out.metrics.deadlock, "{name} {choice:?} {mode}");
                let v = validate_trace(&sc, &out.trace, &build_dep_dag(&sc)).unwrap();
                assert!(v.is_empty(), "{name} {choice:?} {mode}: {:?}", &v[..v.len().min(3)]);
            }
        }
    }
}

#[test]
fn fine_grained_is_never_slower_on_table_presets() {
    for name in table5_presets().into_iter().chain(table7_presets()) {
        for choice in applicable_policies(&name).unwrap() {
            let stream = simulate(&preset_with(&name, choice, Mode::StreamSync).unwrap()).unwrap().metrics;
            let fine = simulate(&preset_with(&name, choice, Mode::FineGrained).unwrap()).unwrap().metrics;
            assert!(fine.makespan <= stream.makespan, "{name} {choice:?}: {} > {}", fine.makespan, stream.makespan);
        }
    }
}

#[test]
fn small_mlp_batches_skip_the_wait_kernel() {
    for name in table5_presets() {
        let sc = preset_with(&name, applicable_policies(&name).unwrap()[0], Mode::FineGrained).unwrap();
        let skip = avoid_wait_kernel(&sc.stages[0].kernel, &sc.stages[1].kernel, sc.gpu);
        assert_eq!(skip, name == "mlp:1-64" || name == "mlp:128", "{name}");
    }
}

#[test]
fn unknown_preset_is_a_config_error() {
    assert_eq!(tilesync_core::workloads::preset("mlp:4096"), Err(ScenarioError::UnknownPreset("mlp:4096".into())));
}
