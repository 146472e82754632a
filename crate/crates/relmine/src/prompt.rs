//! Prompt construction for the language-model head. The wording below is
//! load-bearing: golden-file tests freeze it byte for byte, and the
//! tokenizer vocabulary is built from these templates, so any edit here
//! invalidates saved checkpoints.

use crate::error::{Error, Result};
use crate::graph::RelationalGraph;
use crate::ingest::Corpus;

pub const SYSTEM_INSTRUCTION: &str = "Here are some question-answer pairs provided by a user aged between 15 and 25 years old. Based on these facts, infer whether this user uses illicit drugs.";
pub const LIST_HEADER: &str = "Here are the question-answer pairs:";
pub const ASK_ANSWER_ONLY: &str = "Based on these facts, can you infer whether this user uses illicit drugs?\nPlease answer with only \"Yes\" or \"No\".";
pub const ASK_WITH_EXPLANATION: &str = "Based on these facts, can you infer whether this user uses illicit drugs?\nPlease answer \"Yes\" or \"No\" and explain why.";
pub const LABEL_POSITIVE: &str = "Yes";
pub const LABEL_NEGATIVE: &str = "No";

fn relation_cue(qa: &str, qb: &str) -> String {
    format!(
        "Think about the possible relations between {qa} and {qb} given the user's answers to them."
    )
}

/// Which closing question the prompt ends with. Training uses the
/// answer-only form; explanation decoding uses the open form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptVariant {
    AnswerOnly,
    Explain,
}

/// A rendered prompt plus the question positions it mentions, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub text: String,
    pub questions: Vec<usize>,
}

/// Render a respondent's selected question-answer pairs. `questions` are
/// question positions (codebook order) listed in presentation order, which
/// the detector supplies attention-descending; duplicates keep their first
/// occurrence. Mined `pairs` produce a cue line only when both endpoints
/// are among the selected questions.
pub fn textualize(
    corpus: &Corpus,
    g: &RelationalGraph,
    questions: &[usize],
    pairs: &[(usize, usize)],
    variant: PromptVariant,
) -> Result<PromptBundle> {
    if questions.is_empty() {
        return Err(Error::Schema("prompt needs at least one question".into()));
    }
    let mut ordered: Vec<usize> = Vec::with_capacity(questions.len());
    for &q in questions {
        if !ordered.contains(&q) {
            ordered.push(q);
        }
    }

    let mut lines: Vec<String> = vec![SYSTEM_INSTRUCTION.to_string(), LIST_HEADER.to_string()];
    for &q in &ordered {
        let text = corpus
            .header
            .question_texts
            .get(q)
            .ok_or_else(|| Error::Schema(format!("question position {q} out of range")))?;
        let answer = corpus
            .answer_label(g, q)
            .ok_or_else(|| Error::Schema(format!("question {q} has no answer edge")))?;
        lines.push(format!("Question: {text}\nAnswer: {answer}"));
    }

    let mut cue_pairs: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .filter(|(a, b)| ordered.contains(a) && ordered.contains(b))
        .collect();
    cue_pairs.sort_unstable();
    cue_pairs.dedup();
    for (a, b) in cue_pairs {
        lines.push(relation_cue(
            &corpus.header.question_texts[a],
            &corpus.header.question_texts[b],
        ));
    }

    lines.push(
        match variant {
            PromptVariant::AnswerOnly => ASK_ANSWER_ONLY,
            PromptVariant::Explain => ASK_WITH_EXPLANATION,
        }
        .to_string(),
    );

    Ok(PromptBundle { text: lines.join("\n"), questions: ordered })
}

/// Every string the tokenizer must cover: templates plus the corpus
/// question texts and answer labels.
pub fn vocabulary_sources(corpus: &Corpus) -> Vec<String> {
    let mut out = vec![
        SYSTEM_INSTRUCTION.to_string(),
        LIST_HEADER.to_string(),
        ASK_ANSWER_ONLY.to_string(),
        ASK_WITH_EXPLANATION.to_string(),
        relation_cue("a", "b"),
        "Question: Answer:".to_string(),
    ];
    out.extend(corpus.header.question_texts.iter().cloned());
    for name in (0..corpus.header.registry.answer_count())
        .map(|r| corpus.header.registry.name(r as u32))
    {
        let label = name.split_once("::").map(|(_, l)| l).unwrap_or(name);
        out.push(label.to_string());
    }
    out
}
