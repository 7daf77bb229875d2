//! The standard synthetic benchmark: a seeded labeled corpus, a disjoint
//! unlabeled pool, and a recipe comparing both initializations at a small
//! and a large sample size.

use crate::recipe::{ExperimentRecipe, GridSpec, PretrainSpec, RecipeName, SampleSize};
use crate::synth::{SyntheticSpec, DESK_DIMS};
use selftaught_models::ArchId;
use selftaught_train::{InitMode, TrainConfig};

pub const BENCH_SMALL_N: usize = 10;

pub fn benchmark_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_studies: 1,
        subjects_per_study: 100,
        classes: 4,
        tasks: 0,
        dims: DESK_DIMS,
        class_amplitude: 1.0,
        subject_amplitude: 0.25,
        noise_sigma: 0.5,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn benchmark_recipe(seed: u64) -> ExperimentRecipe {
    ExperimentRecipe {
        name: RecipeName::HcpContrast,
        sample_sizes: vec![SampleSize::Subjects(BENCH_SMALL_N), SampleSize::GLOBAL],
        init_modes: InitMode::BOTH.to_vec(),
        grid: GridSpec {
            archs: vec![ArchId::Cnn4],
            batch_sizes: vec![8],
            epochs: vec![30],
        },
        base: TrainConfig {
            input_dims: DESK_DIMS,
            width_divisor: 8,
            ..TrainConfig::default()
        },
        pretrain: PretrainSpec {
            pool_maps: 256,
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            pool_seed: seed.wrapping_add(1_000_003),
        },
        seed,
        ..ExperimentRecipe::default()
    }
}
