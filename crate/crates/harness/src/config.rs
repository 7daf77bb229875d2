use crate::error::Result;
use crate::recipe::ExperimentRecipe;
use crate::synth::SyntheticSpec;
use selftaught_train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Contents of a `--config` TOML file. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    pub recipe: ExperimentRecipe,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synthetic.seed = seed;
        self.train.seed = seed;
        self.recipe.seed = seed;
        self.recipe.base.seed = seed;
        self
    }
}
