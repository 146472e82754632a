//! End-to-end orchestration: stratified splitting, numeric
//! standardization, pretraining, enrichment, warm language-model setup,
//! fused training, and evaluation. One run is a pure function of the
//! corpus, the configuration, and the seed; the multi-seed driver just
//! varies the seed and aggregates.

use serde::{Deserialize, Serialize};

use crate::bimodal::{
    build_and_warm_lm, train_bimodal, BimodalEpoch, BimodalModel,
};
use crate::config::{RunConfig, SplitFractions};
use crate::detector::PredictionRecord;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::ingest::Corpus;
use crate::metrics::Metrics;
use crate::pretext::{enrich_corpus, train_pretext, LearnedStructure, PretextEpoch};
use crate::rng::substream;
use crate::tape::{ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Label-stratified split. Within each label group the order is shuffled
/// by the split substream, then fractions are applied by floor division
/// with the remainder going to the test side.
pub fn stratified_split(
    corpus: &Corpus,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<SplitIndices> {
    let mut by_label: std::collections::BTreeMap<bool, Vec<usize>> = Default::default();
    for (i, g) in corpus.graphs.iter().enumerate() {
        let label = g
            .label
            .ok_or_else(|| Error::MissingField(format!("graph {:?} has no label", g.respondent_id)))?;
        by_label.entry(label).or_default().push(i);
    }

    let mut out = SplitIndices { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    let mut rng = substream(seed, "split");
    for (_, mut group) in by_label {
        for i in (1..group.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            group.swap(i, j);
        }
        let n = group.len();
        let n_train = (n as f64 * fractions.train).floor() as usize;
        let n_val = (n as f64 * (fractions.train + fractions.val)).floor() as usize - n_train;
        out.train.extend(&group[..n_train]);
        out.val.extend(&group[n_train..n_train + n_val]);
        out.test.extend(&group[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    for (name, part) in [("train", &out.train), ("val", &out.val), ("test", &out.test)] {
        if part.is_empty() {
            return Err(Error::Schema(format!(
                "{name} split is empty; corpus of {} graphs is too small for {fractions:?}",
                corpus.graphs.len()
            )));
        }
    }
    Ok(out)
}

/// Evaluation summary for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub metrics: Metrics,
}

/// Detector-only forward over a set of graphs.
pub fn predict(
    store: &ParamStore,
    model: &BimodalModel,
    corpus: &Corpus,
    indices: &[usize],
) -> Result<Vec<PredictionRecord>> {
    map_ordered(indices, |&gi| {
        let g = &corpus.graphs[gi];
        let mut t = Tape::new();
        let fwd = model.detector.forward(&mut t, store, corpus, g)?;
        Ok(PredictionRecord::from_forward(g, &fwd))
    })
    .into_iter()
    .collect()
}

pub fn evaluate(predictions: &[PredictionRecord]) -> Result<EvalReport> {
    let probs: Vec<f64> = predictions.iter().map(|p| p.probability).collect();
    let labels: Vec<bool> = predictions
        .iter()
        .map(|p| p.label.ok_or_else(|| Error::MissingField("unlabeled prediction".into())))
        .collect::<Result<_>>()?;
    Ok(EvalReport { n: predictions.len(), metrics: Metrics::compute(&probs, &labels, 0.5)? })
}

pub struct PipelineRun {
    pub splits: SplitIndices,
    pub pretext_log: Vec<PretextEpoch>,
    pub structures: Vec<LearnedStructure>,
    pub warm_losses: Vec<f64>,
    pub bimodal_log: Vec<BimodalEpoch>,
    pub store: ParamStore,
    pub model: BimodalModel,
    pub predictions: Vec<PredictionRecord>,
    pub report: EvalReport,
}

pub fn run_pipeline(corpus: &Corpus, cfg: &RunConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    corpus.check_shape()?;

    let splits = stratified_split(corpus, &cfg.splits, cfg.seed)?;
    let mut corpus = corpus.clone();
    if !corpus.header.standardized {
        corpus.standardize_numeric(&splits.train)?;
    }

    // The pretext stage exists to mine structure (and optionally to warm
    // the detector encoder); with both uses ablated away it is dead work.
    let run_pretext_stage = !cfg.ablation.no_latent_learning || cfg.warm_start;
    let (pretext_log, structures, pretext_store) = if run_pretext_stage {
        let out = train_pretext(&corpus, &splits.train, cfg)?;
        (out.log, out.structures, Some(out.store))
    } else {
        (Vec::new(), Vec::new(), None)
    };

    let enriched = if cfg.ablation.no_latent_learning {
        corpus
    } else {
        enrich_corpus(&corpus, &structures)?
    };

    let mut store = ParamStore::new();
    let (lm, warm_losses) = if cfg.ablation.no_llm {
        (None, Vec::new())
    } else {
        let (bundle, losses) =
            build_and_warm_lm(&mut store, &enriched, &structures, &splits.train, cfg)?;
        (Some(bundle), losses)
    };

    let warm_from = if cfg.warm_start { pretext_store.as_ref() } else { None };
    let outcome =
        train_bimodal(&mut store, lm, &enriched, &structures, &splits.train, cfg, warm_from)?;

    let predictions = predict(&store, &outcome.model, &enriched, &splits.test)?;
    let report = evaluate(&predictions)?;

    Ok(PipelineRun {
        splits,
        pretext_log,
        structures,
        warm_losses,
        bimodal_log: outcome.log,
        store,
        model: outcome.model,
        predictions,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    pub auc: f64,
}

impl MetricRow {
    pub fn from_metrics(m: &Metrics) -> MetricRow {
        MetricRow {
            accuracy: m.accuracy,
            precision: m.precision_pos,
            recall: m.recall_pos,
            macro_f1: m.macro_f1,
            auc: m.auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub row: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: Vec<SeedRun>,
    pub mean: MetricRow,
    /// Sample standard deviation (zero for a single run).
    pub std: MetricRow,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(runs: Vec<SeedRun>) -> Result<Aggregate> {
    if runs.is_empty() {
        return Err(Error::Schema("no runs to aggregate".into()));
    }
    let col = |f: fn(&MetricRow) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = runs.iter().map(|r| f(&r.row)).collect();
        mean_std(&vals)
    };
    let (acc, acc_s) = col(|r| r.accuracy);
    let (pre, pre_s) = col(|r| r.precision);
    let (rec, rec_s) = col(|r| r.recall);
    let (f1, f1_s) = col(|r| r.macro_f1);
    let (auc, auc_s) = col(|r| r.auc);
    Ok(Aggregate {
        runs,
        mean: MetricRow { accuracy: acc, precision: pre, recall: rec, macro_f1: f1, auc },
        std: MetricRow {
            accuracy: acc_s,
            precision: pre_s,
            recall: rec_s,
            macro_f1: f1_s,
            auc: auc_s,
        },
    })
}

/// One full pipeline per seed, aggregated to mean and deviation rows.
pub fn run_seeds(corpus: &Corpus, cfg: &RunConfig, seeds: &[u64]) -> Result<Aggregate> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        let run = run_pipeline(corpus, &c)?;
        runs.push(SeedRun { seed, row: MetricRow::from_metrics(&run.report.metrics) });
    }
    aggregate(runs)
}
