//! Seeded inputs shared by the benchmarks.

use bioledger_core::biohash::{self, BioHashModel, BiohashConfig, DevSet};
use bioledger_core::features::{
    make_pairs, synth_dataset, Dataset, SyntheticSpec, TimeSeriesTemplate,
};
use bioledger_core::BitString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bits(len: usize, seed: u64) -> BitString {
    let mut r = rng(seed);
    BitString::from_bools((0..len).map(|_| r.random::<bool>()))
}

pub fn scores(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let genuine = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let impostor = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    (genuine, impostor)
}

/// A random walk over `channels` channels.
pub fn series(frames: usize, channels: usize, seed: u64) -> TimeSeriesTemplate {
    let mut r = rng(seed);
    let data = (0..channels)
        .map(|_| {
            let mut x = 0.0;
            (0..frames)
                .map(|_| {
                    x += r.random_range(-1.0..1.0);
                    x
                })
                .collect()
        })
        .collect();
    TimeSeriesTemplate::new("bench", data).expect("non-empty channels")
}

pub fn dataset(seed: u64) -> Dataset {
    synth_dataset(&SyntheticSpec {
        n_classes: 10,
        samples_per_class: 10,
        dimension: 100,
        intra_class_spread: 0.3,
        inter_class_spread: 3.0,
        seed,
    })
    .expect("valid synthetic spec")
}

pub fn model(config: &BiohashConfig, seed: u64) -> BioHashModel {
    let ds = dataset(seed);
    let pairs = make_pairs(&ds, 200, 200, seed).expect("enough pairs");
    let dev = DevSet::new(ds, pairs).expect("valid dev set");
    biohash::train_model(&dev, config, seed).expect("trainable config")
}
