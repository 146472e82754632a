//! Fused training stage: the detector's pooled user embedding is projected
//! to a soft prefix for a frozen language model, and the combined loss is
//! the label-token cross entropy plus the classifier cross entropy, summed
//! on the tape so the reported total is exactly the sum of its parts.
//! Gradients update the encoder, scorer, classifier, and projection head;
//! the language model is warm-trained once, then frozen for good.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::graph::RelationalGraph;
use crate::ingest::Corpus;
use crate::lm::{warm_train, TinyLm, Tokenizer, WarmTrainConfig, EOS, NO, YES};
use crate::optim::{glorot, Adam, AdamConfig};
use crate::pretext::LearnedStructure;
use crate::prompt::{textualize, vocabulary_sources, PromptBundle, PromptVariant};
use crate::rng::substream;
use crate::tape::{ParamStore, Tape, Var};

pub const LM_PREFIX: &str = "lm";

pub struct LmBundle {
    pub lm: TinyLm,
    pub tokenizer: Tokenizer,
}

/// Undirected mined pairs for one graph, or none when structure learning
/// was ablated.
pub fn pairs_of(structures: &[LearnedStructure], gi: usize) -> Vec<(usize, usize)> {
    structures
        .get(gi)
        .map(|s| s.pairs.iter().map(|p| (p.a, p.b)).collect())
        .unwrap_or_default()
}

/// Question selection used before any detector exists (warm training):
/// the first k questions in codebook order.
fn leading_questions(corpus: &Corpus, k: usize) -> Vec<usize> {
    (0..corpus.n_questions().min(k)).collect()
}

/// Build the tokenizer, initialize the language model, teacher-force it on
/// answer-only prompts with gold labels, then freeze it. Returns the
/// bundle and the warm-training loss curve.
pub fn build_and_warm_lm(
    store: &mut ParamStore,
    corpus: &Corpus,
    structures: &[LearnedStructure],
    train: &[usize],
    cfg: &RunConfig,
) -> Result<(LmBundle, Vec<f64>)> {
    let tokenizer = Tokenizer::build(&vocabulary_sources(corpus));
    let mut rng = substream(cfg.seed, "lm:init");
    let lm = TinyLm::init(store, &mut rng, LM_PREFIX, cfg.lm.clone(), tokenizer.vocab_size());

    let questions = leading_questions(corpus, cfg.k_att);
    let mut sequences = Vec::with_capacity(train.len());
    for &gi in train {
        let g = &corpus.graphs[gi];
        let label = g
            .label
            .ok_or_else(|| Error::MissingField(format!("graph {:?} has no label", g.respondent_id)))?;
        let bundle = textualize(
            corpus,
            g,
            &questions,
            &pairs_of(structures, gi),
            PromptVariant::AnswerOnly,
        )?;
        let mut seq = tokenizer.encode(&bundle.text);
        seq.push(Tokenizer::label_id(label));
        seq.push(EOS);
        lm.check_len(seq.len())?;
        sequences.push(seq);
    }

    let warm = WarmTrainConfig {
        epochs: cfg.lm_warm.epochs,
        batch_size: cfg.lm_warm.batch_size,
        lr: cfg.lm_warm.lr,
        weight_decay: 0.0,
    };
    let losses = warm_train(store, &lm, &sequences, &warm, cfg.seed)?;
    store.freeze_prefix(&format!("{LM_PREFIX}."));
    Ok((LmBundle { lm, tokenizer }, losses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalEpoch {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_gen: Option<f64>,
    pub l_cls: f64,
}

pub struct BimodalModel {
    pub detector: DetectorModel,
    pub lm: Option<LmBundle>,
}

pub struct BimodalOutcome {
    pub model: BimodalModel,
    pub log: Vec<BimodalEpoch>,
}

fn project(t: &mut Tape, store: &ParamStore, h_agg: Var) -> Var {
    let w = t.param(store, store.lookup("proj.w").expect("projection head"));
    let b = t.param(store, store.lookup("proj.b").expect("projection head"));
    t.linear(h_agg, w, b)
}

/// Variant-A prompt for one graph under a given question selection.
pub fn training_prompt(
    corpus: &Corpus,
    g: &RelationalGraph,
    selected: &[usize],
    structures: &[LearnedStructure],
    gi: usize,
) -> Result<PromptBundle> {
    textualize(corpus, g, selected, &pairs_of(structures, gi), PromptVariant::AnswerOnly)
}

/// Copy encoder weights from a pretext store onto this store's detector
/// encoder (same corpus, same width, so every shape matches).
pub fn warm_start_encoder(store: &mut ParamStore, pretext_store: &ParamStore) {
    for i in 0..pretext_store.len() {
        let name = pretext_store.name(i);
        if let Some(suffix) = name.strip_prefix(crate::pretext::PRETEXT_ENCODER) {
            let det_name = format!("{}{suffix}", crate::detector::DET_ENCODER);
            if let Some(j) = store.lookup(&det_name) {
                *store.value_mut(j) = pretext_store.value(i).clone();
            }
        }
    }
}

/// Train the detector (and projection head) on the enriched corpus.
/// `lm` of None runs the classification-only ablation. The store must
/// already hold the frozen language model when `lm` is provided; its
/// digest is compared before and after training. `warm_from` seeds the
/// detector encoder with pretext encoder weights.
pub fn train_bimodal(
    store: &mut ParamStore,
    lm: Option<LmBundle>,
    corpus: &Corpus,
    structures: &[LearnedStructure],
    train: &[usize],
    cfg: &RunConfig,
    warm_from: Option<&ParamStore>,
) -> Result<BimodalOutcome> {
    if train.is_empty() {
        return Err(Error::Schema("bimodal training set is empty".into()));
    }
    let mut init_rng = substream(cfg.seed, "det:init");
    let detector = DetectorModel::init(store, &mut init_rng, corpus, cfg);
    if let Some(pretext_store) = warm_from {
        warm_start_encoder(store, pretext_store);
    }
    if lm.is_some() {
        store.add("proj.w", glorot(&mut init_rng, cfg.lm.d, cfg.d_hidden), true);
        store.add("proj.b", Array2::zeros((1, cfg.lm.d)), true);
    }
    let lm_digest = lm.as_ref().map(|_| store.digest(&format!("{LM_PREFIX}.")));

    let mut opt = Adam::new(store, AdamConfig::new(cfg.lr, cfg.weight_decay));
    let mut log = Vec::with_capacity(cfg.bimodal.epochs);
    for epoch in 0..cfg.bimodal.epochs {
        let mut order: Vec<usize> = train.to_vec();
        let mut rng = substream(cfg.seed, &format!("bimodal:order:{epoch}"));
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            order.swap(i, j);
        }

        let mut sum_loss = 0.0;
        let mut sum_gen = 0.0;
        let mut sum_cls = 0.0;
        for batch in order.chunks(cfg.bimodal.batch_size) {
            type Out = (f64, Option<f64>, f64, Vec<Array2<f64>>);
            let results: Vec<Result<Out>> = map_ordered(batch, |&gi| {
                let g = &corpus.graphs[gi];
                let label = g.label.ok_or_else(|| {
                    Error::MissingField(format!("graph {:?} has no label", g.respondent_id))
                })?;
                let mut t = Tape::new();
                let fwd = detector.forward(&mut t, store, corpus, g)?;
                let l_cls = t.bce_with_logits(fwd.logit, vec![label as u8 as f64]);
                let (loss, l_gen_val) = match &lm {
                    Some(bundle) => {
                        let prompt = training_prompt(corpus, g, &fwd.selected, structures, gi)?;
                        let tokens = bundle.tokenizer.encode(&prompt.text);
                        let z = project(&mut t, store, fwd.h_agg);
                        let l_gen = bundle.lm.label_loss(
                            &mut t,
                            store,
                            Some(z),
                            &tokens,
                            Tokenizer::label_id(label),
                        )?;
                        (t.add(l_gen, l_cls), Some(t.value(l_gen)[(0, 0)]))
                    }
                    None => (l_cls, None),
                };
                let grads = t.backward(loss);
                Ok((
                    t.value(loss)[(0, 0)],
                    l_gen_val,
                    t.value(l_cls)[(0, 0)],
                    t.param_grads(&grads, store),
                ))
            });

            let mut grads = store.zero_grads();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, gen, cls, g) = r?;
                batch_loss += loss;
                sum_loss += loss;
                sum_gen += gen.unwrap_or(0.0);
                sum_cls += cls;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += &gi;
                }
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: batch_loss });
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            opt.step(store, &grads);
        }

        let n = train.len() as f64;
        log.push(BimodalEpoch {
            epoch,
            loss: sum_loss / n,
            l_gen: lm.as_ref().map(|_| sum_gen / n),
            l_cls: sum_cls / n,
        });
    }

    if let Some(before) = lm_digest {
        let after = store.digest(&format!("{LM_PREFIX}."));
        if before != after {
            return Err(Error::FreezeViolation { before, after });
        }
    }

    Ok(BimodalOutcome { model: BimodalModel { detector, lm }, log })
}

/// One generated explanation plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub respondent_id: String,
    pub probability: f64,
    pub predicted: bool,
    /// First generated token, always "Yes" or "No".
    pub lm_label: String,
    pub agrees: bool,
    pub text: String,
    /// Decoding hit the token budget before emitting a terminator.
    pub truncated: bool,
    pub selected: Vec<usize>,
    pub cue_pairs: Vec<(usize, usize)>,
}

/// Greedy variant-B generation for one respondent.
pub fn explain(
    store: &ParamStore,
    model: &BimodalModel,
    corpus: &Corpus,
    structures: &[LearnedStructure],
    gi: usize,
    max_new_tokens: usize,
) -> Result<ExplanationRecord> {
    let bundle = model
        .lm
        .as_ref()
        .ok_or_else(|| Error::Schema("explanations need the language model".into()))?;
    let g = &corpus.graphs[gi];
    let mut t = Tape::new();
    let fwd = model.detector.forward(&mut t, store, corpus, g)?;
    let z_var = project(&mut t, store, fwd.h_agg);
    let z = t.value(z_var).clone();

    let pairs = pairs_of(structures, gi);
    let prompt = textualize(corpus, g, &fwd.selected, &pairs, PromptVariant::Explain)?;
    let tokens = bundle.tokenizer.encode(&prompt.text);
    let generated =
        bundle.lm.greedy_decode(store, Some(&z), &tokens, &[YES, NO], max_new_tokens)?;

    let cue_pairs: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .filter(|(a, b)| prompt.questions.contains(a) && prompt.questions.contains(b))
        .collect();
    let lm_yes = generated.first() == Some(&YES);
    Ok(ExplanationRecord {
        respondent_id: g.respondent_id.clone(),
        probability: fwd.prob,
        predicted: fwd.prob >= 0.5,
        lm_label: if lm_yes { "Yes" } else { "No" }.to_string(),
        agrees: lm_yes == (fwd.prob >= 0.5),
        text: bundle.tokenizer.decode(&generated),
        truncated: generated.len() == max_new_tokens,
        selected: fwd.selected.clone(),
        cue_pairs,
    })
}

/// Fraction of explanations whose first token matches the classifier.
pub fn agreement_rate(records: &[ExplanationRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.agrees).count() as f64 / records.len() as f64
}
