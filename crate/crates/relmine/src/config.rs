//! Run configuration shared by the pipeline stages and the CLI. Every
//! field has a default, so a JSON config file may set only the fields it
//! wants to change.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LmConfig;
use crate::rgsl::RowMean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig { epochs: 20, batch_size: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.70, val: 0.15, test: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Drop the relation-mean term from structure-learner message gates.
    pub no_relation_matrix: bool,
    /// Skip structure learning and enrichment entirely.
    pub no_latent_learning: bool,
    /// Train the detector on the classification loss alone.
    pub no_llm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmLmConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for WarmLmConfig {
    fn default() -> Self {
        WarmLmConfig { epochs: 5, batch_size: 8, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub d_hidden: usize,
    pub n_layers: usize,
    pub k_sim: usize,
    pub k_att: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_deg: f64,
    pub pretext: StageConfig,
    pub bimodal: StageConfig,
    pub splits: SplitFractions,
    pub ablation: AblationFlags,
    /// Orientation of the relation-matrix mean fed to message gates.
    pub rowmean: RowMean,
    /// Initialize the detector encoder from the pretext encoder instead of
    /// fresh weights.
    pub warm_start: bool,
    pub lm: LmConfig,
    pub lm_warm: WarmLmConfig,
    /// Explanation decoding budget.
    pub max_new_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            d_hidden: 128,
            n_layers: 3,
            k_sim: 5,
            k_att: 20,
            lr: 5e-5,
            weight_decay: 5e-4,
            lambda_deg: 0.1,
            pretext: StageConfig { epochs: 20, batch_size: 16 },
            bimodal: StageConfig { epochs: 10, batch_size: 4 },
            splits: SplitFractions::default(),
            ablation: AblationFlags::default(),
            rowmean: RowMean::Rows,
            warm_start: false,
            lm: LmConfig::default(),
            lm_warm: WarmLmConfig::default(),
            max_new_tokens: 40,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.splits;
        for (name, v) in [("train", s.train), ("val", s.val), ("test", s.test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("split fraction {name} = {v} outside (0, 1)")));
            }
        }
        if (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {}, expected 1",
                s.train + s.val + s.test
            )));
        }
        for (name, v) in [
            ("d_hidden", self.d_hidden),
            ("n_layers", self.n_layers),
            ("k_sim", self.k_sim),
            ("k_att", self.k_att),
            ("pretext.epochs", self.pretext.epochs),
            ("pretext.batch_size", self.pretext.batch_size),
            ("bimodal.epochs", self.bimodal.epochs),
            ("bimodal.batch_size", self.bimodal.batch_size),
            ("max_new_tokens", self.max_new_tokens),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("weight_decay", self.weight_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if self.lr == 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.lambda_deg.is_finite() && self.lambda_deg >= 0.0) {
            return Err(Error::Config(format!("lambda_deg = {} must be nonnegative", self.lambda_deg)));
        }
        if self.lm.d % self.lm.n_heads != 0 {
            return Err(Error::Config(format!(
                "lm.d = {} not divisible by lm.n_heads = {}",
                self.lm.d, self.lm.n_heads
            )));
        }
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
