//! Survey ingestion: one CSV row per respondent becomes one relational
//! graph, using the codebook for answer mapping, the label rule, and the
//! age filter. Also owns the corpus container and its JSONL format.
//!
//! Corpus files carry a header line (registry, question ids and texts,
//! topics, feature dim, numeric slots, codebook digest) followed by one
//! graph per line, so a corpus is self-describing.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, UserEncoding};
use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::graph::{validate_graph, GraphNode, NodeKind, RelationalGraph, RelationRegistry};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub registry: RelationRegistry,
    pub question_ids: Vec<String>,
    pub question_texts: Vec<String>,
    pub topics: Vec<String>,
    pub d_in: usize,
    pub numeric_slots: Vec<usize>,
    pub codebook_digest: String,
    #[serde(default)]
    pub standardized: bool,
}

/// A homogeneous set of respondent graphs plus the shared schema needed
/// to interpret them (relation names, question texts, topics).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub graphs: Vec<RelationalGraph>,
}

impl Corpus {
    pub fn n_questions(&self) -> usize {
        self.header.question_ids.len()
    }

    pub fn n_topics(&self) -> usize {
        self.header.topics.len()
    }

    /// Node index of question position `q` (codebook order).
    pub fn question_node(&self, q: usize) -> usize {
        1 + q
    }

    /// Node index of topic position `t`.
    pub fn topic_node(&self, t: usize) -> usize {
        1 + self.n_questions() + t
    }

    /// Answer text shown in prompts: the relation name with the question
    /// id prefix stripped.
    pub fn answer_label(&self, g: &RelationalGraph, q: usize) -> Option<String> {
        let rel = g.answer_relation_of(self.question_node(q))?;
        let name = self.header.registry.name(rel);
        let prefix = format!("{}::", self.header.question_ids[q]);
        Some(name.strip_prefix(&prefix).unwrap_or(name).to_string())
    }

    /// Standardize numeric user-feature slots in place using statistics
    /// from `train` graphs only. Returns per-slot (mean, std).
    pub fn standardize_numeric(&mut self, train: &[usize]) -> Result<Vec<(f64, f64)>> {
        if self.header.standardized {
            return Err(Error::Schema("corpus numeric slots already standardized".into()));
        }
        if train.is_empty() {
            return Err(Error::Schema("standardization needs a nonempty training split".into()));
        }
        let slots = self.header.numeric_slots.clone();
        let mut stats = Vec::with_capacity(slots.len());
        for &slot in &slots {
            let vals: Vec<f64> = train
                .iter()
                .map(|&i| self.graphs[i].nodes[0].features[slot])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            let std = var.sqrt();
            stats.push((mean, std));
            if std < 1e-12 {
                continue;
            }
            for g in &mut self.graphs {
                let v = &mut g.nodes[0].features[slot];
                *v = (*v - mean) / std;
            }
        }
        self.header.standardized = true;
        Ok(stats)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_string(&self.header).expect("header serializes");
        writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
        for g in &self.graphs {
            let line = serde_json::to_string(g).expect("graph serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Schema(format!("{}: empty corpus file", path.display())))?;
        let first = first.map_err(|e| Error::io(path, e))?;
        let mut header: CorpusHeader = serde_json::from_str(&first).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?;
        header.registry.rebuild_index()?;
        let mut graphs = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let g: RelationalGraph = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
            graphs.push(g);
        }
        let corpus = Corpus { header, graphs };
        corpus.check_shape()?;
        Ok(corpus)
    }

    /// Every graph must match the header shape and pass validation.
    pub fn check_shape(&self) -> Result<()> {
        let q = self.n_questions();
        let t = self.n_topics();
        for (i, g) in self.graphs.iter().enumerate() {
            if g.question_indices().len() != q
                || g.topic_indices().len() != t
                || g.feature_dim() != self.header.d_in
            {
                return Err(Error::Schema(format!(
                    "graph {i} ({}) does not match the corpus header shape",
                    g.respondent_id
                )));
            }
            let report = validate_graph(g);
            if !report.is_clean() {
                let v = &report.violations[0];
                return Err(Error::Schema(format!(
                    "graph {i} ({}): {} ({})",
                    g.respondent_id, v.code, v.detail
                )));
            }
        }
        Ok(())
    }
}

/// Shared node scaffold for all graphs of one codebook: question and topic
/// features are respondent-independent.
pub struct GraphBuilder {
    pub registry: RelationRegistry,
    question_features: Vec<Vec<f64>>,
    topic_features: Vec<Vec<f64>>,
    /// (question position, topic position) in codebook order.
    question_topics: Vec<usize>,
    d_in: usize,
}

impl GraphBuilder {
    pub fn new(codebook: &Codebook, embedder: &TextEmbedder) -> Result<Self> {
        let registry = codebook.build_registry()?;
        let mut question_features = Vec::with_capacity(codebook.questions.len());
        let mut question_topics = Vec::with_capacity(codebook.questions.len());
        for q in &codebook.questions {
            question_features.push(embedder.embed(&q.text)?);
            question_topics.push(
                codebook
                    .topic_index(&q.topic)
                    .ok_or_else(|| Error::Schema(format!("unknown topic {:?}", q.topic)))?,
            );
        }
        let mut topic_features = Vec::with_capacity(codebook.topics.len());
        for t in &codebook.topics {
            topic_features.push(embedder.embed(t)?);
        }
        let d_in = embedder.dim();
        if codebook.user_feature_width() > d_in {
            return Err(Error::Dimension(format!(
                "user feature width {} exceeds embedding dim {d_in}",
                codebook.user_feature_width()
            )));
        }
        Ok(GraphBuilder { registry, question_features, topic_features, question_topics, d_in })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    /// Assemble a graph from per-question answer relation ids and a raw
    /// (unpadded) user feature vector.
    pub fn build(
        &self,
        respondent_id: String,
        label: Option<bool>,
        user_features: &[f64],
        answer_relations: &[u32],
    ) -> Result<RelationalGraph> {
        let nq = self.question_features.len();
        if answer_relations.len() != nq {
            return Err(Error::Dimension(format!(
                "expected {nq} answers, got {}",
                answer_relations.len()
            )));
        }
        let mut user = vec![0.0; self.d_in];
        user[..user_features.len()].copy_from_slice(user_features);
        let mut nodes = vec![GraphNode { kind: NodeKind::User, features: user }];
        for f in &self.question_features {
            nodes.push(GraphNode { kind: NodeKind::Question, features: f.clone() });
        }
        for f in &self.topic_features {
            nodes.push(GraphNode { kind: NodeKind::Topic, features: f.clone() });
        }
        let mut g = RelationalGraph { respondent_id, label, nodes, edges: Vec::new() };
        let qt = self.registry.question_topic_id();
        for (q, &rel) in answer_relations.iter().enumerate() {
            let qn = (1 + q) as u32;
            let tn = (1 + nq + self.question_topics[q]) as u32;
            g.add_edge_pair(0, qn, rel);
            g.add_edge_pair(qn, tn, qt);
        }
        g.canonicalize();
        Ok(g)
    }
}

fn header_from(codebook: &Codebook, builder: &GraphBuilder) -> CorpusHeader {
    CorpusHeader {
        registry: builder.registry.clone(),
        question_ids: codebook.questions.iter().map(|q| q.id.clone()).collect(),
        question_texts: codebook.questions.iter().map(|q| q.text.clone()).collect(),
        topics: codebook.topics.clone(),
        d_in: builder.d_in(),
        numeric_slots: codebook.numeric_slots(),
        codebook_digest: codebook.digest(),
        standardized: false,
    }
}

/// Read a survey CSV and build one graph per eligible respondent. Rows
/// outside the age range are skipped; malformed values are errors.
pub fn ingest_csv(
    csv_path: &Path,
    codebook: &Codebook,
    embedder: &TextEmbedder,
) -> Result<Corpus> {
    let builder = GraphBuilder::new(codebook, embedder)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(csv_path)
        .map_err(|e| Error::Parse {
            path: csv_path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: csv_path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    for q in &codebook.questions {
        if col(&q.id).is_none() {
            return Err(Error::Schema(format!("survey is missing question column {:?}", q.id)));
        }
    }
    if let Some(age) = &codebook.age {
        if col(&age.field).is_none() {
            return Err(Error::Schema(format!("survey is missing age column {:?}", age.field)));
        }
    }
    let id_col = col("respondent_id");

    let mut graphs = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::Parse {
            path: csv_path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        let get = |name: &str| col(name).and_then(|i| record.get(i)).map(|s| s.to_string());

        if let Some(age_rule) = &codebook.age {
            let raw = get(&age_rule.field).unwrap_or_default();
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let age: u32 = raw.parse().map_err(|_| Error::Parse {
                path: csv_path.display().to_string(),
                line,
                msg: format!("age value {raw:?} is not an integer"),
            })?;
            if age < age_rule.min || age > age_rule.max {
                continue;
            }
        }

        let label = codebook.label.evaluate(&get)?;

        let mut user_features = Vec::with_capacity(codebook.user_feature_width());
        for f in &codebook.user_fields {
            let raw = get(&f.field).unwrap_or_default();
            let raw = raw.trim().to_string();
            match &f.encoding {
                UserEncoding::OneHot { codes } => {
                    for c in codes {
                        user_features.push(if *c == raw { 1.0 } else { 0.0 });
                    }
                }
                UserEncoding::Numeric => {
                    if raw.is_empty() {
                        user_features.push(0.0);
                    } else {
                        let v: f64 = raw.parse().map_err(|_| Error::Parse {
                            path: csv_path.display().to_string(),
                            line,
                            msg: format!("numeric field {:?} value {raw:?}", f.field),
                        })?;
                        user_features.push(v);
                    }
                }
            }
        }

        let mut answers = Vec::with_capacity(codebook.questions.len());
        for q in &codebook.questions {
            let raw = get(&q.id).unwrap_or_default();
            let raw = raw.trim().to_string();
            let label_text = match q.categories.iter().find(|c| c.code == raw) {
                Some(c) => c.label.clone(),
                None => match &q.missing_label {
                    Some(m) => m.clone(),
                    None => {
                        return Err(Error::UnknownCategory {
                            question: q.id.clone(),
                            category: raw,
                        })
                    }
                },
            };
            let rel = builder
                .registry
                .id(&format!("{}::{}", q.id, label_text))
                .expect("registry covers codebook");
            answers.push(rel);
        }

        let respondent_id = id_col
            .and_then(|i| record.get(i))
            .map(|s| s.to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("row{}", row_idx + 1));
        graphs.push(builder.build(respondent_id, Some(label), &user_features, &answers)?);
    }

    Ok(Corpus { header: header_from(codebook, &builder), graphs })
}

/// Build a corpus directly from per-respondent answer vectors; used by the
/// synthetic generator.
pub fn corpus_from_answers(
    codebook: &Codebook,
    embedder: &TextEmbedder,
    respondents: Vec<(String, Option<bool>, Vec<f64>, Vec<u32>)>,
) -> Result<Corpus> {
    let builder = GraphBuilder::new(codebook, embedder)?;
    let mut graphs = Vec::with_capacity(respondents.len());
    for (id, label, user, answers) in respondents {
        graphs.push(builder.build(id, label, &user, &answers)?);
    }
    Ok(Corpus { header: header_from(codebook, &builder), graphs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::testutil::toy_codebook;
    use crate::graph::corpus_stats;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), content).unwrap();
        f
    }

    #[test]
    fn csv_to_graphs() {
        let cb = toy_codebook(2, 1);
        let emb = TextEmbedder::hashing(16);
        let csv = write_csv(
            "respondent_id,age,sex,height,drug_any,Q0,Q1\n\
             a,16,1,160.0,0,1,2\n\
             b,30,1,170.0,0,1,1\n\
             c,18,2,155.5,1,2,2\n",
        );
        let corpus = ingest_csv(csv.path(), &cb, &emb).unwrap();
        assert_eq!(corpus.graphs.len(), 2, "age 30 filtered out");
        let stats = corpus_stats(&corpus.graphs).unwrap();
        assert_eq!(stats.n_positive, 1);
        assert_eq!(stats.questions_per_graph, 2);
        assert_eq!(stats.topics_per_graph, 1);
        let g = &corpus.graphs[0];
        assert_eq!(g.respondent_id, "a");
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 8);
        assert_eq!(corpus.answer_label(g, 0).as_deref(), Some("Yes"));
        assert_eq!(corpus.answer_label(g, 1).as_deref(), Some("No"));
        assert_eq!(g.nodes[0].features[0], 1.0, "sex one-hot code 1");
        assert_eq!(g.nodes[0].features[2], 160.0, "raw height before standardization");
        corpus.check_shape().unwrap();
    }

    #[test]
    fn unknown_answer_code_is_an_error() {
        let cb = toy_codebook(1, 1);
        let emb = TextEmbedder::hashing(8);
        let csv = write_csv("age,sex,height,drug_any,Q0\n16,1,160,0,7\n");
        let err = ingest_csv(csv.path(), &cb, &emb).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory { .. }));
    }

    #[test]
    fn missing_label_absorbs_blank_and_unknown() {
        let mut cb = toy_codebook(1, 1);
        cb.questions[0].missing_label = Some("Not answered".into());
        let emb = TextEmbedder::hashing(8);
        let csv = write_csv("age,sex,height,drug_any,Q0\n16,1,160,0,\n17,2,150,0,9\n");
        let corpus = ingest_csv(csv.path(), &cb, &emb).unwrap();
        assert_eq!(corpus.graphs.len(), 2);
        for g in &corpus.graphs {
            assert_eq!(corpus.answer_label(g, 0).as_deref(), Some("Not answered"));
        }
    }

    #[test]
    fn missing_question_column_rejected() {
        let cb = toy_codebook(2, 1);
        let emb = TextEmbedder::hashing(8);
        let csv = write_csv("age,sex,height,drug_any,Q0\n16,1,160,0,1\n");
        let err = ingest_csv(csv.path(), &cb, &emb).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn corpus_jsonl_roundtrip_is_byte_stable() {
        let cb = toy_codebook(3, 2);
        let emb = TextEmbedder::hashing(12);
        let csv = write_csv(
            "age,sex,height,drug_any,Q0,Q1,Q2\n\
             16,1,160.0,0,1,2,1\n\
             17,2,150.0,1,2,2,2\n",
        );
        let corpus = ingest_csv(csv.path(), &cb, &emb).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        corpus.write_jsonl(&p1).unwrap();
        let back = Corpus::read_jsonl(&p1).unwrap();
        back.write_jsonl(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(corpus.graphs, back.graphs);
        assert_eq!(corpus.header.codebook_digest, back.header.codebook_digest);
    }

    #[test]
    fn standardization_uses_train_split_only() {
        let cb = toy_codebook(1, 1);
        let emb = TextEmbedder::hashing(8);
        let csv = write_csv(
            "age,sex,height,drug_any,Q0\n\
             16,1,100.0,0,1\n\
             17,1,200.0,0,1\n\
             18,1,300.0,1,2\n",
        );
        let mut corpus = ingest_csv(csv.path(), &cb, &emb).unwrap();
        let stats = corpus.standardize_numeric(&[0, 1]).unwrap();
        assert_eq!(stats.len(), 1);
        let (mean, std) = stats[0];
        assert_eq!(mean, 150.0);
        assert_eq!(std, 50.0);
        let slot = 2;
        assert_eq!(corpus.graphs[0].nodes[0].features[slot], -1.0);
        assert_eq!(corpus.graphs[1].nodes[0].features[slot], 1.0);
        assert_eq!(corpus.graphs[2].nodes[0].features[slot], 3.0);
        assert!(corpus.standardize_numeric(&[0]).is_err(), "second pass refused");
    }
}
