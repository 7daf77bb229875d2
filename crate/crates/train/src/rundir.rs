use crate::error::Result;
use crate::record::EpochRecord;
use selftaught_core::nn::Checkpoint;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Artifact directory of one run: `config.json`, plans, `*.csv` curves,
/// `*.ckpt` checkpoints and `*.json` metrics.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
    save_checkpoints: bool,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            save_checkpoints: true,
        })
    }

    pub fn without_checkpoints(mut self) -> Self {
        self.save_checkpoints = false;
        self
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn child(&self, name: &str) -> Result<Self> {
        let mut d = Self::create(self.root.join(name))?;
        d.save_checkpoints = self.save_checkpoints;
        Ok(d)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&p, text)?;
        Ok(p)
    }

    pub fn write_curve(&self, name: &str, curve: &[EpochRecord]) -> Result<PathBuf> {
        let p = self.root.join(name);
        let mut w = csv::Writer::from_path(&p)?;
        for r in curve {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(p)
    }

    /// Writes the checkpoint unless this directory was opened without
    /// checkpoints.
    pub fn write_checkpoint(&self, name: &str, ck: &Checkpoint) -> Result<Option<PathBuf>> {
        if !self.save_checkpoints {
            return Ok(None);
        }
        let p = self.root.join(name);
        ck.save(&p)?;
        Ok(Some(p))
    }
}
