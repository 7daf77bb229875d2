//! Synthetic benchmark generation, experiment recipes, report rendering
//! and the `selftaught` command line.

mod bench;
pub mod cli;
mod config;
mod error;
mod recipe;
mod report;
mod synth;

pub use bench::{benchmark_recipe, benchmark_spec, BENCH_SMALL_N};
pub use config::AppConfig;
pub use error::{HarnessError, Result, EXIT_RUNTIME, EXIT_VALIDATION};
pub use recipe::{
    run_recipe, run_recipe_on, ExperimentRecipe, GlobalTag, GridSpec, PretrainSpec, RecipeInputs, RecipeName,
    RecipeResults, SampleSize, SizeRuns,
};
pub use report::{render_report, Report, REPORT_METRICS};
pub use synth::{
    assert_disjoint, class_templates, generate_pool, generate_synthetic, ClassInfo, LabelView, SyntheticDataset,
    SyntheticSpec, DESK_DIMS, POOL_MAPS_PER_SUBJECT,
};
