//! Respondent graph schema shared by every stage: one user node, question
//! nodes typed by the respondent's answers, topic nodes grouping questions,
//! and (after enrichment) learned LATENT question-question edges.
//!
//! Every logical edge is materialized as a directed pair so the pretext
//! stage can restrict the question-to-user direction without touching the
//! rest of the structure.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const QUESTION_TOPIC_RELATION: &str = "question-topic";
pub const LATENT_RELATION: &str = "LATENT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Question,
    Topic,
}

/// Corpus-global registry of edge types. Ids are dense from zero: answer
/// categories first, then `question-topic`, then the reserved `LATENT` id,
/// so relation weight matrices can be indexed by id across all graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationRegistry {
    names: Vec<String>,
    answer_count: u32,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl RelationRegistry {
    pub fn from_answer_names(answer_names: Vec<String>) -> Result<Self> {
        let mut names = answer_names;
        for reserved in [QUESTION_TOPIC_RELATION, LATENT_RELATION] {
            if names.iter().any(|n| n == reserved) {
                return Err(Error::Schema(format!("relation name {reserved:?} is reserved")));
            }
        }
        let answer_count = names.len() as u32;
        names.push(QUESTION_TOPIC_RELATION.to_string());
        names.push(LATENT_RELATION.to_string());
        let mut registry = RelationRegistry { names, answer_count, index: HashMap::new() };
        registry.rebuild_index()?;
        Ok(registry)
    }

    /// Rebuilds the name lookup; call after deserializing.
    pub fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (i, name) in self.names.iter().enumerate() {
            if self.index.insert(name.clone(), i as u32).is_some() {
                return Err(Error::Schema(format!("duplicate relation name {name:?}")));
            }
        }
        Ok(())
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of answer-category relations (ids `0..answer_count`).
    pub fn answer_count(&self) -> usize {
        self.answer_count as usize
    }

    pub fn question_topic_id(&self) -> u32 {
        self.answer_count
    }

    pub fn latent_id(&self) -> u32 {
        self.answer_count + 1
    }

    pub fn is_answer(&self, id: u32) -> bool {
        id < self.answer_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub rel: u32,
}

/// One respondent. Node ids are vector indices; by construction node 0 is
/// the user, followed by questions in codebook order, then topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalGraph {
    pub respondent_id: String,
    pub label: Option<bool>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
}

impl RelationalGraph {
    /// Sort edges lexicographically so serialization is byte-stable.
    pub fn canonicalize(&mut self) {
        self.edges.sort_unstable();
    }

    pub fn user_index(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::User)
    }

    pub fn question_indices(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Question)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn topic_indices(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Topic)
            .map(|(i, _)| i)
            .collect()
    }

    /// The answer relation on the user edge of question node `q`, if present.
    pub fn answer_relation_of(&self, q: usize) -> Option<u32> {
        let user = self.user_index()? as u32;
        self.edges
            .iter()
            .find(|e| e.src == user && e.dst == q as u32)
            .map(|e| e.rel)
    }

    /// The topic node a question is attached to, if present.
    pub fn topic_of(&self, q: usize, question_topic_rel: u32) -> Option<usize> {
        self.edges
            .iter()
            .find(|e| e.src == q as u32 && e.rel == question_topic_rel)
            .map(|e| e.dst as usize)
    }

    pub fn add_edge_pair(&mut self, a: u32, b: u32, rel: u32) {
        self.edges.push(Edge { src: a, dst: b, rel });
        self.edges.push(Edge { src: b, dst: a, rel });
    }

    /// Remove both directions of (a, b) regardless of relation type.
    /// Returns the relation ids removed (one per direction).
    pub fn remove_edge_pair(&mut self, a: u32, b: u32) -> Vec<u32> {
        let mut removed = Vec::new();
        self.edges.retain(|e| {
            let hit = (e.src == a && e.dst == b) || (e.src == b && e.dst == a);
            if hit {
                removed.push(e.rel);
            }
            !hit
        });
        removed
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map(|n| n.features.len()).unwrap_or(0)
    }

    /// Node features stacked into an n-by-d matrix, row per node.
    pub fn feature_matrix(&self) -> ndarray::Array2<f64> {
        let d = self.feature_dim();
        let mut x = ndarray::Array2::zeros((self.nodes.len(), d));
        for (i, node) in self.nodes.iter().enumerate() {
            for (j, &v) in node.features.iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub detail: String,
}

/// Structural-invariant check result. Violations are data, not errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, detail: String) {
        self.violations.push(Violation { code: code.to_string(), detail });
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

/// Check every structural invariant of a complete graph.
pub fn validate_graph(g: &RelationalGraph) -> ValidationReport {
    validate_graph_masked(g, None)
}

/// Same as [`validate_graph`], but permits `masked_question` to lack its
/// user edge pair (the pretext task removes exactly that pair).
pub fn validate_graph_masked(g: &RelationalGraph, masked_question: Option<usize>) -> ValidationReport {
    let mut report = ValidationReport::default();

    let user_count = g.nodes.iter().filter(|n| n.kind == NodeKind::User).count();
    if user_count != 1 {
        report.push("user-count", format!("expected exactly 1 user node, found {user_count}"));
    }

    let dim = g.feature_dim();
    for (i, node) in g.nodes.iter().enumerate() {
        if node.features.len() != dim {
            report.push(
                "feature-dim",
                format!("node {i} has dim {}, expected {dim}", node.features.len()),
            );
        }
    }

    let mut seen = BTreeSet::new();
    for e in &g.edges {
        if e.src == e.dst {
            report.push("self-loop", format!("edge ({}, {}, {})", e.src, e.dst, e.rel));
        }
        if e.src as usize >= g.nodes.len() || e.dst as usize >= g.nodes.len() {
            report.push("edge-endpoint", format!("edge ({}, {}) out of range", e.src, e.dst));
            continue;
        }
        if !seen.insert(*e) {
            report.push("duplicate-edge", format!("edge ({}, {}, {})", e.src, e.dst, e.rel));
        }
        let (ks, kd) = (g.nodes[e.src as usize].kind, g.nodes[e.dst as usize].kind);
        let allowed = matches!(
            (ks, kd),
            (NodeKind::User, NodeKind::Question)
                | (NodeKind::Question, NodeKind::User)
                | (NodeKind::Question, NodeKind::Topic)
                | (NodeKind::Topic, NodeKind::Question)
                | (NodeKind::Question, NodeKind::Question)
        );
        if !allowed {
            report.push("edge-endpoint", format!("edge kinds {ks:?} -> {kd:?} not in schema"));
        }
    }
    for e in &g.edges {
        let mirror = Edge { src: e.dst, dst: e.src, rel: e.rel };
        if !seen.contains(&mirror) {
            report.push("pair-symmetry", format!("edge ({}, {}, {}) lacks its mirror", e.src, e.dst, e.rel));
        }
    }

    if let Some(user) = g.user_index() {
        let user = user as u32;
        for q in g.question_indices() {
            let user_edges = g
                .edges
                .iter()
                .filter(|e| e.src == user && e.dst == q as u32)
                .count();
            let expected = usize::from(masked_question != Some(q));
            if user_edges != expected {
                report.push(
                    "question-user-edge",
                    format!("question node {q} has {user_edges} user edges, expected {expected}"),
                );
            }
            let topic_edges = g
                .edges
                .iter()
                .filter(|e| {
                    e.src == q as u32 && g.nodes[e.dst as usize].kind == NodeKind::Topic
                })
                .count();
            if topic_edges != 1 {
                report.push(
                    "question-topic",
                    format!("question node {q} has {topic_edges} topic edges, expected 1"),
                );
            }
        }
    }

    report
}

/// Corpus summary, shaped like the dataset-statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_graphs: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub questions_per_graph: usize,
    pub topics_per_graph: usize,
    pub unique_relations: usize,
}

/// Exact counts over a homogeneous labeled corpus.
pub fn corpus_stats(corpus: &[RelationalGraph]) -> Result<GraphStats> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Schema("corpus_stats on empty corpus".into()))?;
    let questions = first.question_indices().len();
    let topics = first.topic_indices().len();
    let dim = first.feature_dim();

    let mut n_positive = 0;
    let mut n_negative = 0;
    let mut relations = BTreeSet::new();
    for (i, g) in corpus.iter().enumerate() {
        if g.question_indices().len() != questions
            || g.topic_indices().len() != topics
            || g.feature_dim() != dim
        {
            return Err(Error::Schema(format!(
                "graph {i} ({}) does not share the corpus codebook shape",
                g.respondent_id
            )));
        }
        match g.label {
            Some(true) => n_positive += 1,
            Some(false) => n_negative += 1,
            None => {
                return Err(Error::Schema(format!(
                    "graph {i} ({}) is unlabeled; corpus stats need labels",
                    g.respondent_id
                )))
            }
        }
        for e in &g.edges {
            relations.insert(e.rel);
        }
    }

    Ok(GraphStats {
        n_graphs: corpus.len(),
        n_positive,
        n_negative,
        questions_per_graph: questions,
        topics_per_graph: topics,
        unique_relations: relations.len(),
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// 1 user, `q` questions, `t` topics (round-robin), all answers relation 0,
    /// feature dim `d`. Relation 0..: answers; `qt_rel`: question-topic.
    pub fn small_graph(q: usize, t: usize, d: usize, qt_rel: u32) -> RelationalGraph {
        let mut nodes = vec![GraphNode { kind: NodeKind::User, features: vec![0.5; d] }];
        for i in 0..q {
            nodes.push(GraphNode { kind: NodeKind::Question, features: vec![i as f64 + 1.0; d] });
        }
        for i in 0..t {
            nodes.push(GraphNode { kind: NodeKind::Topic, features: vec![-(i as f64) - 1.0; d] });
        }
        let mut g = RelationalGraph {
            respondent_id: "r0".into(),
            label: Some(false),
            nodes,
            edges: Vec::new(),
        };
        for i in 0..q {
            let qn = (1 + i) as u32;
            let tn = (1 + q + i % t) as u32;
            g.add_edge_pair(0, qn, 0);
            g.add_edge_pair(qn, tn, qt_rel);
        }
        g.canonicalize();
        g
    }
}
