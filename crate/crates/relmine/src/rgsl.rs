//! Latent relation mining over question embeddings: a learned similarity
//! score, hard cross-topic top-k selection with a straight-through
//! estimator, relation-conditioned messages along the selected edges, and
//! a degree-variance penalty that discourages hub questions.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::RelationalGraph;
use crate::optim::glorot;
use crate::rgcn::Rgcn;
use crate::tape::{ParamStore, Tape, Var};

/// How the similarity matrix reaches the message pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureMode {
    /// Hard top-k adjacency; no gradient reaches the scorer.
    Hard,
    /// Masked row softmax of the scores; fully differentiable surrogate.
    Soft,
    /// Hard adjacency forward, soft-surrogate gradient backward.
    StraightThrough,
}

/// Orientation of the relation-matrix mean mixed into message gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowMean {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
pub struct RgslConfig {
    pub d: usize,
    pub d_attn: usize,
    pub k_sim: usize,
    pub lambda_deg: f64,
    pub rowmean: RowMean,
    /// When false, message gates see only the raw source embedding and the
    /// per-relation mean is left out (the relation-matrix ablation).
    pub use_relation_matrix: bool,
}

/// Per-graph question context: node ids, topic membership, and the answer
/// relation on each question's user edge (None when that edge is masked).
#[derive(Debug, Clone)]
pub struct QuestionContext {
    pub nodes: Vec<usize>,
    pub topics: Vec<usize>,
    pub user_rel: Vec<Option<u32>>,
}

impl QuestionContext {
    pub fn from_graph(
        g: &RelationalGraph,
        n_questions: usize,
        question_topic_rel: u32,
    ) -> Result<Self> {
        let mut nodes = Vec::with_capacity(n_questions);
        let mut topics = Vec::with_capacity(n_questions);
        let mut user_rel = Vec::with_capacity(n_questions);
        for q in 0..n_questions {
            let node = 1 + q;
            let t = g
                .topic_of(node, question_topic_rel)
                .ok_or_else(|| Error::Schema(format!("question node {node} lacks a topic")))?;
            nodes.push(node);
            topics.push(t - (1 + n_questions));
            user_rel.push(g.answer_relation_of(node));
        }
        Ok(QuestionContext { nodes, topics, user_rel })
    }
}

pub struct RgslOutput {
    /// Updated question embeddings, Q-by-d, aligned with context order.
    pub h_q: Var,
    /// Degree-variance penalty already scaled by lambda.
    pub penalty: Var,
    /// Selected columns per row of the hard adjacency, ascending.
    pub selected: Vec<Vec<usize>>,
    /// Raw similarity scores.
    pub scores: Array2<f64>,
}

pub struct Rgsl {
    pub cfg: RgslConfig,
    prefix: String,
}

impl Rgsl {
    pub fn init(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, cfg: RgslConfig) -> Rgsl {
        store.add(&format!("{prefix}.wa"), glorot(rng, cfg.d_attn, cfg.d), true);
        store.add(&format!("{prefix}.wrel"), glorot(rng, cfg.d, 2 * cfg.d), true);
        store.add(&format!("{prefix}.wself"), glorot(rng, cfg.d, cfg.d), true);
        Rgsl { cfg, prefix: prefix.to_string() }
    }

    pub fn attach(store: &ParamStore, prefix: &str, cfg: RgslConfig) -> Result<Rgsl> {
        if store.lookup(&format!("{prefix}.wa")).is_none() {
            return Err(Error::Schema(format!("store lacks parameters under {prefix:?}")));
        }
        Ok(Rgsl { cfg, prefix: prefix.to_string() })
    }

    fn p(&self, t: &mut Tape, store: &ParamStore, name: &str) -> Var {
        let idx = store
            .lookup(&format!("{}.{name}", self.prefix))
            .expect("rgsl parameter registered");
        t.param(store, idx)
    }

    /// Mean of a relation weight matrix as a 1-by-d row, in the configured
    /// orientation. Final-layer matrices are square, so both fit.
    fn relation_mean(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        rgcn: &Rgcn,
        rel: u32,
    ) -> Var {
        let layer = rgcn.cfg.n_layers - 1;
        let w = rgcn.relation_weight(t, store, layer, rel);
        let (rows, cols) = (t.value(w).nrows(), t.value(w).ncols());
        match self.cfg.rowmean {
            RowMean::Rows => {
                let ones = t.constant(Array2::from_elem((1, rows), 1.0 / rows as f64));
                t.matmul(ones, w)
            }
            RowMean::Cols => {
                let ones = t.constant(Array2::from_elem((cols, 1), 1.0 / cols as f64));
                let col = t.matmul(w, ones);
                t.transpose(col)
            }
        }
    }

    /// `h` is the full node matrix from the encoder; `rgcn` supplies the
    /// relation weights whose means gate the messages.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        rgcn: &Rgcn,
        h: Var,
        ctx: &QuestionContext,
        mode: StructureMode,
    ) -> Result<RgslOutput> {
        let q = ctx.nodes.len();
        assert_eq!(ctx.topics.len(), q);
        assert_eq!(ctx.user_rel.len(), q);

        let h_q = t.gather_rows(h, &ctx.nodes);
        let wa = self.p(t, store, "wa");
        let z = t.matmul_bt(h_q, wa);
        let s = t.matmul_bt(z, z);
        let scores = t.value(s).clone();

        let selected = topk_rows(&scores, &ctx.topics, self.cfg.k_sim)?;
        let mut a_hat = Array2::zeros((q, q));
        for (i, row) in selected.iter().enumerate() {
            for &j in row {
                a_hat[(i, j)] = 1.0 / self.cfg.k_sim as f64;
            }
        }

        // Same-topic entries are pushed out of the soft surrogate with a
        // large negative additive mask.
        let mut neg = Array2::zeros((q, q));
        for i in 0..q {
            for j in 0..q {
                if ctx.topics[i] == ctx.topics[j] {
                    neg[(i, j)] = -1e30;
                }
            }
        }
        let mask = t.constant(neg);
        let masked = t.add(s, mask);
        let s_soft = t.row_softmax(masked);

        let m = match mode {
            StructureMode::Hard => t.constant(a_hat.clone()),
            StructureMode::Soft => s_soft,
            StructureMode::StraightThrough => {
                // a_hat + (soft - stop(soft)): the parenthesized term is
                // exactly zero forward, identity backward.
                let hard = t.constant(a_hat.clone());
                let frozen = t.stop_grad(s_soft);
                let zero = t.sub(s_soft, frozen);
                t.add(hard, zero)
            }
        };

        // Source-side relation means; a masked source contributes zeros.
        let m_src = if self.cfg.use_relation_matrix {
            let means: Vec<Var> = ctx
                .user_rel
                .iter()
                .map(|r| match r {
                    Some(rel) => self.relation_mean(t, store, rgcn, *rel),
                    None => t.constant(Array2::zeros((1, self.cfg.d))),
                })
                .collect();
            Some(t.concat_rows(&means))
        } else {
            None
        };

        let wrel = self.p(t, store, "wrel");
        let mut rows = Vec::with_capacity(q);
        for i in 0..q {
            let h_i = t.gather_rows(h_q, &[i]);
            let tiled = t.tile_row(h_i, q);
            let left = match m_src {
                Some(m) => t.add(tiled, m),
                None => tiled,
            };
            let x_i = t.concat_cols(left, h_q);
            let gate = t.matmul_bt(x_i, wrel);
            let r_i = t.sigmoid(gate);
            let msgs = t.mul(r_i, h_q);
            let weights = t.slice_rows(m, i, 1);
            rows.push(t.matmul(weights, msgs));
        }
        let neigh = t.concat_rows(&rows);
        let wself = self.p(t, store, "wself");
        let self_term = t.matmul_bt(h_q, wself);
        let pre = t.add(neigh, self_term);
        let out = t.relu(pre);

        // Population variance of soft column sums, scaled by lambda.
        let ones = t.ones(1, q);
        let colsums = t.matmul(ones, s_soft);
        let mean = t.mean_all(colsums);
        let tiled_mean = t.matmul(mean, ones);
        let diff = t.sub(colsums, tiled_mean);
        let sq = t.mul(diff, diff);
        let var = t.mean_all(sq);
        let penalty = t.scale(var, self.cfg.lambda_deg);

        Ok(RgslOutput { h_q: out, penalty, selected, scores })
    }
}

/// Hard top-k per row over cross-topic candidates. Ties break toward the
/// lower column index. Selected columns are returned in ascending order.
pub fn topk_rows(scores: &Array2<f64>, topics: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let q = scores.nrows();
    assert_eq!(scores.ncols(), q);
    assert_eq!(topics.len(), q);
    let mut out = Vec::with_capacity(q);
    for i in 0..q {
        let mut cands: Vec<usize> = (0..q).filter(|&j| topics[j] != topics[i]).collect();
        if cands.len() < k {
            return Err(Error::InsufficientNeighbors { row: i, eligible: cands.len(), k });
        }
        cands.sort_by(|&a, &b| {
            scores[(i, b)]
                .partial_cmp(&scores[(i, a)])
                .expect("scores are finite")
                .then(a.cmp(&b))
        });
        let mut sel: Vec<usize> = cands[..k].to_vec();
        sel.sort_unstable();
        out.push(sel);
    }
    Ok(out)
}

/// Undirected question pairs implied by a hard adjacency, deduplicated
/// and sorted; used to enrich graphs with LATENT edges.
pub fn latent_pairs(selected: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut pairs = std::collections::BTreeSet::new();
    for (i, row) in selected.iter().enumerate() {
        for &j in row {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs.into_iter().collect()
}

/// Fraction of planted pairs present in the adjacency, counting each
/// direction as half a hit.
pub fn recovery_score(selected: &[Vec<usize>], pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &(a, b) in pairs {
        let ab = selected[a].contains(&b) as u8 as f64;
        let ba = selected[b].contains(&a) as u8 as f64;
        total += (ab + ba) / 2.0;
    }
    total / pairs.len() as f64
}
