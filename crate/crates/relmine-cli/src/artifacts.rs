//! On-disk layout of a trained run directory and the inverse operations:
//! loading a saved model and rebuilding the exact corpus view (splits,
//! standardization, latent enrichment) it was trained against.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use relmine::bimodal::{BimodalModel, LmBundle, LM_PREFIX};
use relmine::checkpoint;
use relmine::config::RunConfig;
use relmine::detector::DetectorModel;
use relmine::ingest::Corpus;
use relmine::lm::{TinyLm, Tokenizer};
use relmine::pipeline::{stratified_split, PipelineRun, SplitIndices};
use relmine::pretext::{enrich_corpus, LearnedStructure};
use relmine::tape::ParamStore;

pub const CONFIG_FILE: &str = "config.json";
pub const MODEL_FILE: &str = "model.bin";
pub const STRUCTURES_FILE: &str = "structures.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const REPORT_FILE: &str = "report.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Persist everything a later `eval` or `explain` needs, plus the logs and
/// test-split outputs of this run.
pub fn save_run(dir: &Path, cfg: &RunConfig, run: &PipelineRun) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write_json(&dir.join(CONFIG_FILE))?;
    checkpoint::save(&run.store, &dir.join(MODEL_FILE))?;
    write_json(&dir.join(STRUCTURES_FILE), &run.structures)?;
    if let Some(bundle) = &run.model.lm {
        bundle.tokenizer.write_json(&dir.join(TOKENIZER_FILE))?;
    }
    write_json(&dir.join("pretext_log.json"), &run.pretext_log)?;
    write_json(&dir.join("warm_losses.json"), &run.warm_losses)?;
    write_json(&dir.join("bimodal_log.json"), &run.bimodal_log)?;
    write_json(&dir.join("predictions.json"), &run.predictions)?;
    write_json(&dir.join(REPORT_FILE), &run.report)?;
    Ok(())
}

pub struct SavedModel {
    pub cfg: RunConfig,
    pub store: ParamStore,
    pub structures: Vec<LearnedStructure>,
    pub tokenizer: Option<Tokenizer>,
}

pub fn load_model(dir: &Path) -> Result<SavedModel> {
    let cfg = RunConfig::read_json(&dir.join(CONFIG_FILE))?;
    let store = checkpoint::load(&dir.join(MODEL_FILE))?;
    let structures: Vec<LearnedStructure> = read_json(&dir.join(STRUCTURES_FILE))?;
    let tok_path = dir.join(TOKENIZER_FILE);
    let tokenizer =
        if tok_path.exists() { Some(Tokenizer::read_json(&tok_path)?) } else { None };
    if tokenizer.is_none() && !cfg.ablation.no_llm {
        anyhow::bail!(
            "{} lacks {TOKENIZER_FILE} but its config expects a language model",
            dir.display()
        );
    }
    Ok(SavedModel { cfg, store, structures, tokenizer })
}

impl SavedModel {
    /// Replay the training-time corpus preparation: split by the recorded
    /// seed, standardize numeric slots from the train split, and re-apply
    /// the mined latent edges.
    pub fn prepare(&self, mut corpus: Corpus) -> Result<(Corpus, SplitIndices)> {
        corpus.check_shape()?;
        let splits = stratified_split(&corpus, &self.cfg.splits, self.cfg.seed)?;
        if !corpus.header.standardized {
            corpus.standardize_numeric(&splits.train)?;
        }
        let corpus = if self.cfg.ablation.no_latent_learning {
            corpus
        } else {
            enrich_corpus(&corpus, &self.structures)?
        };
        Ok((corpus, splits))
    }

    pub fn attach(&self, corpus: &Corpus) -> Result<BimodalModel> {
        let detector = DetectorModel::attach(&self.store, corpus, &self.cfg)?;
        let lm = match &self.tokenizer {
            Some(tk) => {
                let lm =
                    TinyLm::attach(&self.store, LM_PREFIX, self.cfg.lm.clone(), tk.vocab_size())?;
                Some(LmBundle { lm, tokenizer: tk.clone() })
            }
            None => None,
        };
        Ok(BimodalModel { detector, lm })
    }
}
