//! Fixtures shared by the benchmarks.

use indexmap::IndexMap;
use marn_core::lsthm::ModalityConfig;
use marn_core::{Marn, MarnConfig, MultimodalSequence, NetConfig, ParamStore, Task, Variant};

pub const MODALITIES: [&str; 3] = ["language", "vision", "acoustic"];

/// Three modalities with `d_in = 8`, binary head.
pub fn config(variant: Variant, d_mem: usize, k: usize) -> MarnConfig {
    MarnConfig {
        modalities: MODALITIES
            .iter()
            .map(|n| ModalityConfig { name: n.to_string(), d_in: 8, d_mem, d_local: 4 })
            .collect(),
        k,
        task: Task::Classification { classes: 2 },
        variant,
        attention: NetConfig::default(),
        reducer: NetConfig::default(),
        generator: NetConfig::default(),
        head: NetConfig::default(),
        seed: 1,
    }
}

/// Deterministic sequence of length `t` shaped for `cfg`.
pub fn sequence(cfg: &MarnConfig, t: usize) -> MultimodalSequence {
    let streams: IndexMap<String, Vec<Vec<f64>>> = cfg
        .modalities
        .iter()
        .enumerate()
        .map(|(m, mc)| {
            let rows = (0..t)
                .map(|i| (0..mc.d_in).map(|j| ((i * 31 + j * 7 + m * 13) as f64 * 0.37).sin()).collect())
                .collect();
            (mc.name.clone(), rows)
        })
        .collect();
    MultimodalSequence { id: "bench".into(), label: 1.0, streams }
}

pub fn model(variant: Variant, d_mem: usize, k: usize) -> (Marn, ParamStore) {
    Marn::build(&config(variant, d_mem, k)).expect("valid bench config")
}
