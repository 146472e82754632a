//! Survey codebook: which columns are behavior questions, how raw answer
//! codes map to category labels, how the binary label and the age filter
//! are derived, and which demographic columns feed the user node.
//!
//! The codebook fully determines the relation registry, so two corpora
//! built from the same codebook share edge-type ids.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::RelationRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    /// Raw code as it appears in the survey column.
    pub code: String,
    /// Human-readable answer text, used for relation names and prompts.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDef {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub categories: Vec<Category>,
    /// When set, blank or unlisted codes map to this label instead of
    /// failing ingestion.
    #[serde(default)]
    pub missing_label: Option<String>,
}

/// Demographic column encodings for the user node feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum UserEncoding {
    /// One slot per listed code, 1.0 on the matching code.
    OneHot { codes: Vec<String> },
    /// One slot holding the raw value; standardized later from
    /// training-split statistics.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFieldDef {
    pub field: String,
    #[serde(flatten)]
    pub encoding: UserEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRule {
    pub field: String,
    pub min: u32,
    pub max: u32,
}

/// Respondent is positive when any listed column equals its code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub any_equals: Vec<(String, String)>,
}

impl LabelRule {
    pub fn evaluate(&self, get: impl Fn(&str) -> Option<String>) -> Result<bool> {
        let mut any = false;
        let mut seen = false;
        for (field, code) in &self.any_equals {
            if let Some(v) = get(field) {
                seen = true;
                if v.trim() == code.as_str() {
                    any = true;
                }
            }
        }
        if !seen {
            return Err(Error::Schema("no label column present in record".into()));
        }
        Ok(any)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    pub topics: Vec<String>,
    pub questions: Vec<QuestionDef>,
    #[serde(default)]
    pub user_fields: Vec<UserFieldDef>,
    #[serde(default)]
    pub age: Option<AgeRule>,
    pub label: LabelRule,
}

impl Codebook {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        cb.validate()?;
        Ok(cb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Schema("codebook lists no topics".into()));
        }
        if self.questions.is_empty() {
            return Err(Error::Schema("codebook lists no questions".into()));
        }
        let mut topic_names = std::collections::HashSet::new();
        for t in &self.topics {
            if !topic_names.insert(t.as_str()) {
                return Err(Error::Schema(format!("duplicate topic {t:?}")));
            }
        }
        let mut qids = std::collections::HashSet::new();
        let mut used_topics = std::collections::HashSet::new();
        for q in &self.questions {
            if !qids.insert(q.id.as_str()) {
                return Err(Error::Schema(format!("duplicate question id {:?}", q.id)));
            }
            used_topics.insert(q.topic.as_str());
            if !topic_names.contains(q.topic.as_str()) {
                return Err(Error::Schema(format!(
                    "question {:?} names unknown topic {:?}",
                    q.id, q.topic
                )));
            }
            if q.categories.is_empty() {
                return Err(Error::Schema(format!("question {:?} has no categories", q.id)));
            }
            let mut codes = std::collections::HashSet::new();
            let mut labels = std::collections::HashSet::new();
            for c in &q.categories {
                if !codes.insert(c.code.as_str()) {
                    return Err(Error::Schema(format!(
                        "question {:?} repeats code {:?}",
                        q.id, c.code
                    )));
                }
                if !labels.insert(c.label.as_str()) {
                    return Err(Error::Schema(format!(
                        "question {:?} repeats label {:?}",
                        q.id, c.label
                    )));
                }
            }
            if let Some(m) = &q.missing_label {
                if labels.contains(m.as_str()) {
                    return Err(Error::Schema(format!(
                        "question {:?} missing label {m:?} collides with a category",
                        q.id
                    )));
                }
            }
        }
        for t in &self.topics {
            if !used_topics.contains(t.as_str()) {
                return Err(Error::Schema(format!("topic {t:?} has no questions")));
            }
        }
        // Label columns must never double as graph questions, otherwise the
        // target would leak into the node structure.
        for (field, _) in &self.label.any_equals {
            if qids.contains(field.as_str()) {
                return Err(Error::Schema(format!(
                    "label column {field:?} is also a graph question"
                )));
            }
        }
        Ok(())
    }

    /// Answer relations in codebook order: one per (question, category),
    /// plus one per missing label. Names are `"{question id}::{label}"`.
    pub fn build_registry(&self) -> Result<RelationRegistry> {
        let mut names = Vec::new();
        for q in &self.questions {
            for c in &q.categories {
                names.push(format!("{}::{}", q.id, c.label));
            }
            if let Some(m) = &q.missing_label {
                names.push(format!("{}::{}", q.id, m));
            }
        }
        RelationRegistry::from_answer_names(names)
    }

    pub fn question(&self, id: &str) -> Option<&QuestionDef> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn topic_index(&self, topic: &str) -> Option<usize> {
        self.topics.iter().position(|t| t == topic)
    }

    /// Total width of the user feature vector before padding.
    pub fn user_feature_width(&self) -> usize {
        self.user_fields
            .iter()
            .map(|f| match &f.encoding {
                UserEncoding::OneHot { codes } => codes.len(),
                UserEncoding::Numeric => 1,
            })
            .sum()
    }

    /// Slots of the user feature vector that hold raw numeric values.
    pub fn numeric_slots(&self) -> Vec<usize> {
        let mut slots = Vec::new();
        let mut offset = 0;
        for f in &self.user_fields {
            match &f.encoding {
                UserEncoding::OneHot { codes } => offset += codes.len(),
                UserEncoding::Numeric => {
                    slots.push(offset);
                    offset += 1;
                }
            }
        }
        slots
    }

    /// Hex digest of the serialized codebook; stored with corpora so a
    /// graph file cannot be silently paired with the wrong codebook.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("codebook serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex(&hasher.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Codebook with `q` questions round-robined over `t` topics, each with
    /// the same two answers, plus one one-hot and one numeric user field.
    pub fn toy_codebook(q: usize, t: usize) -> Codebook {
        let topics: Vec<String> = (0..t).map(|i| format!("topic {i}")).collect();
        let questions = (0..q)
            .map(|i| QuestionDef {
                id: format!("Q{i}"),
                text: format!("Do you do thing {i}?"),
                topic: topics[i % t].clone(),
                categories: vec![
                    Category { code: "1".into(), label: "Yes".into() },
                    Category { code: "2".into(), label: "No".into() },
                ],
                missing_label: None,
            })
            .collect();
        Codebook {
            topics,
            questions,
            user_fields: vec![
                UserFieldDef {
                    field: "sex".into(),
                    encoding: UserEncoding::OneHot { codes: vec!["1".into(), "2".into()] },
                },
                UserFieldDef { field: "height".into(), encoding: UserEncoding::Numeric },
            ],
            age: Some(AgeRule { field: "age".into(), min: 15, max: 25 }),
            label: LabelRule { any_equals: vec![("drug_any".into(), "1".into())] },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::toy_codebook;
    use super::*;

    #[test]
    fn registry_order_follows_codebook() {
        let cb = toy_codebook(2, 1);
        let reg = cb.build_registry().unwrap();
        assert_eq!(reg.answer_count(), 4);
        assert_eq!(reg.id("Q0::Yes"), Some(0));
        assert_eq!(reg.id("Q0::No"), Some(1));
        assert_eq!(reg.id("Q1::Yes"), Some(2));
        assert_eq!(reg.name(reg.question_topic_id()), "question-topic");
    }

    #[test]
    fn missing_label_gets_relation() {
        let mut cb = toy_codebook(1, 1);
        cb.questions[0].missing_label = Some("Not answered".into());
        let reg = cb.build_registry().unwrap();
        assert_eq!(reg.answer_count(), 3);
        assert_eq!(reg.id("Q0::Not answered"), Some(2));
    }

    #[test]
    fn duplicate_question_rejected() {
        let mut cb = toy_codebook(2, 1);
        cb.questions[1].id = "Q0".into();
        assert!(cb.validate().is_err());
    }

    #[test]
    fn unknown_topic_rejected() {
        let mut cb = toy_codebook(1, 1);
        cb.questions[0].topic = "nothere".into();
        assert!(cb.validate().is_err());
    }

    #[test]
    fn unused_topic_rejected() {
        let mut cb = toy_codebook(2, 1);
        cb.topics.push("spare".into());
        assert!(cb.validate().is_err());
    }

    #[test]
    fn label_column_cannot_be_a_question() {
        let mut cb = toy_codebook(2, 1);
        cb.label.any_equals.push(("Q1".into(), "1".into()));
        assert!(cb.validate().is_err());
    }

    #[test]
    fn label_rule_any_semantics() {
        let rule = LabelRule {
            any_equals: vec![("a".into(), "1".into()), ("b".into(), "1".into())],
        };
        let row =
            |pairs: &[(&str, &str)], f: &str| -> Option<String> {
                pairs.iter().find(|(k, _)| *k == f).map(|(_, v)| v.to_string())
            };
        let pos = [("a", "0"), ("b", "1")];
        let neg = [("a", "0"), ("b", "0")];
        assert!(rule.evaluate(|f| row(&pos, f)).unwrap());
        assert!(!rule.evaluate(|f| row(&neg, f)).unwrap());
        let empty: [(&str, &str); 0] = [];
        assert!(rule.evaluate(|f| row(&empty, f)).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = toy_codebook(2, 1);
        let b = toy_codebook(2, 1);
        assert_eq!(a.digest(), b.digest());
        let mut c = toy_codebook(2, 1);
        c.questions[0].text.push('?');
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn numeric_slots_offsets() {
        let cb = toy_codebook(1, 1);
        assert_eq!(cb.user_feature_width(), 3);
        assert_eq!(cb.numeric_slots(), vec![2]);
    }

    #[test]
    fn json_roundtrip() {
        let cb = toy_codebook(3, 2);
        let text = serde_json::to_string(&cb).unwrap();
        let back: Codebook = serde_json::from_str(&text).unwrap();
        assert_eq!(cb, back);
    }
}
