#![allow(dead_code)]

use indexmap::IndexMap;
use marn_core::lsthm::ModalityConfig;
use marn_core::{MarnConfig, MultimodalSequence, NetConfig, Task, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MODALITIES: [&str; 3] = ["language", "vision", "acoustic"];

/// 3 modalities, d_in = 3, d_mem = 4, d_local = 2, K = 2, binary head.
pub fn tiny(variant: Variant) -> MarnConfig {
    MarnConfig {
        modalities: MODALITIES
            .iter()
            .map(|n| ModalityConfig { name: n.to_string(), d_in: 3, d_mem: 4, d_local: 2 })
            .collect(),
        k: 2,
        task: Task::Classification { classes: 2 },
        variant,
        attention: NetConfig::default(),
        reducer: NetConfig::default(),
        generator: NetConfig::default(),
        head: NetConfig::default(),
        seed: 42,
    }
}

pub fn random_sequence(rng: &mut ChaCha8Rng, t: usize, d_in: usize, label: f64) -> MultimodalSequence {
    let streams: IndexMap<String, Vec<Vec<f64>>> = MODALITIES
        .iter()
        .map(|n| {
            let rows = (0..t).map(|_| (0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            (n.to_string(), rows)
        })
        .collect();
    MultimodalSequence { id: format!("r{}", rng.gen::<u32>()), label, streams }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
