//! Synthetic survey generator. Questions are round-robined over topics,
//! answers are drawn from per-question marginals, selected cross-topic
//! question pairs are coupled through a fixed category permutation, and the
//! binary label comes from a logistic model whose bias is bisected so the
//! positive rate lands on the requested base rate.
//!
//! The planted pairs and the label model are written to a ground-truth
//! sidecar so recovery and ablation experiments can score against them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{Category, Codebook, LabelRule, QuestionDef};
use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::ingest::{corpus_from_answers, Corpus};
use crate::rng::substream;

const CATEGORY_LABELS: [&str; 6] = ["Never", "Rarely", "Sometimes", "Often", "Very often", "Always"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_graphs: usize,
    pub n_questions: usize,
    pub n_topics: usize,
    pub n_categories: usize,
    /// Number of coupled cross-topic question pairs to plant.
    pub n_planted: usize,
    /// Probability that the second question of a pair copies the permuted
    /// answer of the first.
    pub pair_strength: f64,
    /// Target positive-label rate.
    pub base_rate: f64,
    /// Standard deviation of per-category label weights.
    pub weight_scale: f64,
    /// Extra logit added when a planted pair is in its coupled state.
    pub interaction_weight: f64,
    /// Embedding dimension for node features.
    pub d_in: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_graphs: 200,
            n_questions: 12,
            n_topics: 4,
            n_categories: 3,
            n_planted: 2,
            pair_strength: 0.9,
            base_rate: 0.3,
            weight_scale: 1.0,
            interaction_weight: 0.0,
            d_in: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPair {
    /// Question positions (codebook order), always in different topics.
    pub a: usize,
    pub b: usize,
    /// Category permutation: coupled state is `answer_b == permutation[answer_a]`.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub spec: SynthSpec,
    pub seed: u64,
    pub pairs: Vec<PlantedPair>,
    pub question_weights: Vec<Vec<f64>>,
    pub bias: f64,
    pub achieved_rate: f64,
}

impl SynthGroundTruth {
    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("ground truth serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

fn category_label(c: usize, k: usize) -> String {
    if k <= CATEGORY_LABELS.len() {
        CATEGORY_LABELS[c].to_string()
    } else {
        format!("level {c}")
    }
}

/// The codebook implied by a spec; shared by generator and tests.
pub fn synth_codebook(spec: &SynthSpec) -> Codebook {
    let topics: Vec<String> = (0..spec.n_topics).map(|t| format!("topic {t}")).collect();
    let questions = (0..spec.n_questions)
        .map(|i| QuestionDef {
            id: format!("Q{i}"),
            text: format!("How often do you engage in activity {i}?"),
            topic: topics[i % spec.n_topics].clone(),
            categories: (0..spec.n_categories)
                .map(|c| Category {
                    code: (c + 1).to_string(),
                    label: category_label(c, spec.n_categories),
                })
                .collect(),
            missing_label: None,
        })
        .collect();
    Codebook {
        topics,
        questions,
        user_fields: Vec::new(),
        age: None,
        label: LabelRule { any_equals: vec![("synthetic_label".into(), "1".into())] },
    }
}

fn plant_pairs(spec: &SynthSpec, seed: u64) -> Result<Vec<PlantedPair>> {
    let mut rng = substream(seed, "synth:pairs");
    let mut order: Vec<usize> = (0..spec.n_questions).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let topic_of = |q: usize| q % spec.n_topics;
    let mut pairs = Vec::new();
    let mut used = vec![false; spec.n_questions];
    for (idx, &a) in order.iter().enumerate() {
        if pairs.len() == spec.n_planted {
            break;
        }
        if used[a] {
            continue;
        }
        for &b in order.iter().skip(idx + 1) {
            if used[b] || topic_of(a) == topic_of(b) {
                continue;
            }
            used[a] = true;
            used[b] = true;
            let mut perm: Vec<usize> = (0..spec.n_categories).collect();
            for i in (1..perm.len()).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let (a, b) = (a.min(b), a.max(b));
            pairs.push(PlantedPair { a, b, permutation: perm });
            break;
        }
    }
    if pairs.len() < spec.n_planted {
        return Err(Error::Schema(format!(
            "cannot plant {} disjoint cross-topic pairs over {} questions",
            spec.n_planted, spec.n_questions
        )));
    }
    pairs.sort_by_key(|p| (p.a, p.b));
    Ok(pairs)
}

/// Expected positive rate is monotone in the bias, so bisection always
/// converges; `raw` holds per-respondent logits without the bias term.
fn bisect_bias(raw: &[f64], target: f64) -> f64 {
    let mean_rate = |b: f64| {
        raw.iter().map(|&l| 1.0 / (1.0 + (-(l + b)).exp())).sum::<f64>() / raw.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(Corpus, SynthGroundTruth)> {
    if spec.n_topics < 2 && spec.n_planted > 0 {
        return Err(Error::Schema("planted pairs need at least two topics".into()));
    }
    if spec.n_questions < spec.n_topics {
        return Err(Error::Schema("need at least one question per topic".into()));
    }
    if !(spec.base_rate > 0.0 && spec.base_rate < 1.0) {
        return Err(Error::Schema(format!("base rate {} outside (0, 1)", spec.base_rate)));
    }
    if spec.n_categories < 2 {
        return Err(Error::Schema("questions need at least two categories".into()));
    }

    let codebook = synth_codebook(spec);
    let embedder = TextEmbedder::hashing(spec.d_in);
    let pairs = plant_pairs(spec, seed)?;

    // Per-question category marginals, proportional to exp(N(0, 0.5^2)).
    let mut rng = substream(seed, "synth:marginals");
    let marginals: Vec<Vec<f64>> = (0..spec.n_questions)
        .map(|_| {
            let raw: Vec<f64> = (0..spec.n_categories)
                .map(|_| (0.5 * gauss(&mut rng)).exp())
                .collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        })
        .collect();

    let mut rng = substream(seed, "synth:weights");
    let question_weights: Vec<Vec<f64>> = (0..spec.n_questions)
        .map(|_| (0..spec.n_categories).map(|_| spec.weight_scale * gauss(&mut rng)).collect())
        .collect();

    let mut rng = substream(seed, "synth:answers");
    let mut answers: Vec<Vec<usize>> = Vec::with_capacity(spec.n_graphs);
    for _ in 0..spec.n_graphs {
        let mut row: Vec<usize> = marginals
            .iter()
            .map(|m| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (c, &p) in m.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return c;
                    }
                }
                m.len() - 1
            })
            .collect();
        for p in &pairs {
            let u: f64 = rng.gen();
            if u < spec.pair_strength {
                row[p.b] = p.permutation[row[p.a]];
            }
        }
        answers.push(row);
    }

    let raw_logits: Vec<f64> = answers
        .iter()
        .map(|row| {
            let mut l = 0.0;
            for (q, &c) in row.iter().enumerate() {
                l += question_weights[q][c];
            }
            for p in &pairs {
                if row[p.b] == p.permutation[row[p.a]] {
                    l += spec.interaction_weight;
                }
            }
            l
        })
        .collect();
    let bias = bisect_bias(&raw_logits, spec.base_rate);

    // Empirical rate can still drift from the expected rate; retry the
    // label draw a few times before declaring the target infeasible.
    let mut labels = Vec::new();
    let mut achieved = 0.0;
    let mut ok = false;
    for attempt in 0..8 {
        let mut rng = substream(seed, &format!("synth:labels:{attempt}"));
        let drawn: Vec<bool> = raw_logits
            .iter()
            .map(|&l| {
                let p = 1.0 / (1.0 + (-(l + bias)).exp());
                rng.gen::<f64>() < p
            })
            .collect();
        achieved = drawn.iter().filter(|&&b| b).count() as f64 / drawn.len() as f64;
        if (achieved - spec.base_rate).abs() <= 0.05 {
            labels = drawn;
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(Error::InfeasibleBaseRate { target: spec.base_rate, achieved });
    }

    let respondents = answers
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (row, &label))| {
            let rels: Vec<u32> = row
                .iter()
                .enumerate()
                .map(|(q, &c)| (q * spec.n_categories + c) as u32)
                .collect();
            // The user node needs at least one nonzero feature: answer
            // relations are only visible as `W_rel * x_user`, which
            // vanishes identically on an all-zero user vector.
            (format!("s{i}"), Some(label), vec![1.0], rels)
        })
        .collect();
    let corpus = corpus_from_answers(&codebook, &embedder, respondents)?;

    let truth = SynthGroundTruth {
        spec: spec.clone(),
        seed,
        pairs,
        question_weights,
        bias,
        achieved_rate: achieved,
    };
    Ok((corpus, truth))
}

/// Box-Muller; two uniforms per call keeps the stream layout obvious.
fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
