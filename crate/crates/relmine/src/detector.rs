//! Detection head: a fresh relational encoder over the enriched graph,
//! attention pooling of question embeddings around the user, a logistic
//! classifier, and the top-k question selection that feeds the prompt
//! builder and interpretability output.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::RelationalGraph;
use crate::ingest::Corpus;
use crate::optim::glorot;
use crate::rgcn::{Decomp, Rgcn, RgcnConfig};
use crate::tape::{sigmoid, ParamStore, Tape, Var};

pub const DET_ENCODER: &str = "det.enc";

fn rgcn_config(corpus: &Corpus, cfg: &RunConfig) -> RgcnConfig {
    let n_relations = corpus.header.registry.len();
    RgcnConfig {
        d_in: corpus.header.d_in,
        d_hidden: cfg.d_hidden,
        n_layers: cfg.n_layers,
        n_relations,
        decomp: Decomp::auto(n_relations),
    }
}

pub struct DetectorModel {
    pub rgcn: Rgcn,
    /// Effective selection size, already capped at the question count.
    pub k_att: usize,
}

impl DetectorModel {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        corpus: &Corpus,
        cfg: &RunConfig,
    ) -> DetectorModel {
        let d = cfg.d_hidden;
        let rgcn = Rgcn::init(store, rng, DET_ENCODER, rgcn_config(corpus, cfg));
        store.add("det.att.w1", glorot(rng, d, 2 * d), true);
        store.add("det.att.b1", Array2::zeros((1, d)), true);
        store.add("det.att.w2", glorot(rng, 1, d), true);
        store.add("det.att.b2", Array2::zeros((1, 1)), true);
        store.add("det.cls.w", glorot(rng, 1, d), true);
        store.add("det.cls.b", Array2::zeros((1, 1)), true);
        DetectorModel { rgcn, k_att: cfg.k_att.min(corpus.n_questions()) }
    }

    pub fn attach(store: &ParamStore, corpus: &Corpus, cfg: &RunConfig) -> Result<DetectorModel> {
        let rgcn = Rgcn::attach(store, DET_ENCODER, rgcn_config(corpus, cfg))?;
        if store.lookup("det.cls.w").is_none() {
            return Err(Error::Schema("store lacks the detector head".into()));
        }
        Ok(DetectorModel { rgcn, k_att: cfg.k_att.min(corpus.n_questions()) })
    }

    /// Full detection forward over one (enriched) graph. No inflow mask:
    /// the user node aggregates freely at this stage.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        corpus: &Corpus,
        g: &RelationalGraph,
    ) -> Result<DetectorForward> {
        let n = g.nodes.len();
        let x = t.constant(g.feature_matrix());
        let h = self.rgcn.forward(t, store, x, &g.edges, n, None);

        let nq = corpus.n_questions();
        let q_rows: Vec<usize> = (0..nq).map(|q| corpus.question_node(q)).collect();
        let h_q = t.gather_rows(h, &q_rows);
        let h_u = t.gather_rows(h, &[0]);

        let p = |t: &mut Tape, name: &str| {
            let idx = store.lookup(name).expect("detector parameter registered");
            t.param(store, idx)
        };
        let u_tiled = t.tile_row(h_u, nq);
        let pair = t.concat_cols(h_q, u_tiled);
        let w1 = p(t, "det.att.w1");
        let b1 = p(t, "det.att.b1");
        let hidden = t.linear(pair, w1, b1);
        let hidden = t.relu(hidden);
        let w2 = p(t, "det.att.w2");
        let b2 = p(t, "det.att.b2");
        let raw = t.linear(hidden, w2, b2);

        let alpha = alpha_from_raw(t, raw);
        let h_agg = aggregate(t, alpha, h_q)?;

        let cw = p(t, "det.cls.w");
        let cb = p(t, "det.cls.b");
        let logit = t.linear(h_agg, cw, cb);

        let alpha_values: Vec<f64> = t.value(alpha).row(0).to_vec();
        let selected = select_topk_questions(&alpha_values, self.k_att)?;
        let prob = sigmoid(t.value(logit)[(0, 0)]);
        Ok(DetectorForward { logit, h_agg, prob, alpha: alpha_values, selected })
    }
}

pub struct DetectorForward {
    /// Pre-sigmoid classifier output, 1-by-1.
    pub logit: Var,
    /// Attention-pooled user summary, 1-by-d; feeds the projection head.
    pub h_agg: Var,
    pub prob: f64,
    pub alpha: Vec<f64>,
    /// Top-k question positions, attention-descending.
    pub selected: Vec<usize>,
}

/// Softmax a Q-by-1 raw score column into a 1-by-Q attention row.
pub fn alpha_from_raw(t: &mut Tape, raw: Var) -> Var {
    let row = t.transpose(raw);
    t.row_softmax(row)
}

/// Attention-weighted sum of question embeddings: (1-by-Q) x (Q-by-d).
pub fn aggregate(t: &mut Tape, alpha: Var, h_q: Var) -> Result<Var> {
    let (ar, ac) = t.value(alpha).dim();
    let qr = t.value(h_q).nrows();
    if ar != 1 || ac != qr {
        return Err(Error::Dimension(format!(
            "alpha is {ar}x{ac}, embeddings have {qr} rows"
        )));
    }
    Ok(t.matmul(alpha, h_q))
}

/// The k highest-attention question positions, descending, ties toward
/// the lower position.
pub fn select_topk_questions(alpha: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > alpha.len() {
        return Err(Error::Dimension(format!(
            "k_att = {k} exceeds the {} questions",
            alpha.len()
        )));
    }
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| {
        alpha[b].partial_cmp(&alpha[a]).expect("finite attention").then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

/// Machine-readable per-respondent prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub respondent_id: String,
    pub probability: f64,
    pub predicted: bool,
    pub label: Option<bool>,
    /// (question position, attention weight), attention-descending.
    pub top_questions: Vec<(usize, f64)>,
}

impl PredictionRecord {
    pub fn from_forward(g: &RelationalGraph, fwd: &DetectorForward) -> PredictionRecord {
        PredictionRecord {
            respondent_id: g.respondent_id.clone(),
            probability: fwd.prob,
            predicted: fwd.prob >= 0.5,
            label: g.label,
            top_questions: fwd.selected.iter().map(|&q| (q, fwd.alpha[q])).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradient_check, GradCheckOptions};
    use crate::rng::substream;
    use crate::synth::{generate_synthetic_corpus, SynthSpec};
    use ndarray::array;

    #[test]
    fn alpha_matches_hand_softmax_and_sums_to_one() {
        let mut t = Tape::new();
        let raw = t.constant(array![[2.0_f64.ln()], [0.0]]);
        let alpha = alpha_from_raw(&mut t, raw);
        let v = t.value(alpha);
        assert!((v[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[(0, 1)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((v.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_is_shift_invariant() {
        // Dyadic values keep the shift itself exact, so the softmax (which
        // subtracts the row max) must agree bit for bit.
        let raw_vals = array![[0.25], [-1.5], [2.0], [0.0]];
        let mut t = Tape::new();
        let a = {
            let raw = t.constant(raw_vals.clone());
            let v = alpha_from_raw(&mut t, raw);
            t.value(v).clone()
        };
        let mut t2 = Tape::new();
        let shifted = t2.constant(&raw_vals + 8.0);
        let b = alpha_from_raw(&mut t2, shifted);
        assert_eq!(a, t2.value(b).clone(), "softmax is exactly shift invariant");
    }

    #[test]
    fn aggregation_is_a_weighted_sum() {
        let h = array![[1.0, 2.0], [-1.0, -2.0], [3.0, 0.0]];
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let onehot = t.constant(array![[0.0, 1.0, 0.0]]);
        let agg = aggregate(&mut t, onehot, hv).unwrap();
        assert_eq!(t.value(agg).row(0).to_vec(), vec![-1.0, -2.0]);

        let hv2 = t.constant(h.clone());
        let half = t.constant(array![[0.5, 0.5, 0.0]]);
        let cancel = aggregate(&mut t, half, hv2).unwrap();
        assert_eq!(t.value(cancel).row(0).to_vec(), vec![0.0, 0.0]);

        // Brute force on a random case.
        let mut rng = substream(40, "agg");
        let h3 = crate::optim::normal(&mut rng, 5, 3, 1.0);
        let a3 = crate::optim::normal(&mut rng, 1, 5, 1.0);
        let mut expect = vec![0.0; 3];
        for i in 0..5 {
            for j in 0..3 {
                expect[j] += a3[(0, i)] * h3[(i, j)];
            }
        }
        let hv3 = t.constant(h3);
        let av3 = t.constant(a3);
        let got = aggregate(&mut t, av3, hv3).unwrap();
        for j in 0..3 {
            assert!((t.value(got)[(0, j)] - expect[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn topk_orders_by_alpha_then_position() {
        assert_eq!(select_topk_questions(&[0.1, 0.7, 0.2], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_topk_questions(&[0.25, 0.25, 0.5], 3).unwrap(), vec![2, 0, 1]);
        assert!(select_topk_questions(&[0.5, 0.5], 3).is_err());

        // Brute-force comparison on a random vector.
        let mut rng = substream(41, "topk");
        let alpha: Vec<f64> = (0..30).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let got = select_topk_questions(&alpha, 20).unwrap();
        let mut pairs: Vec<(usize, f64)> = alpha.iter().copied().enumerate().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expect: Vec<usize> = pairs.iter().take(20).map(|p| p.0).collect();
        assert_eq!(got, expect);
    }

    fn small_setup() -> (Corpus, ParamStore, DetectorModel) {
        let spec = SynthSpec {
            n_graphs: 6,
            n_questions: 5,
            n_topics: 2,
            n_categories: 2,
            n_planted: 1,
            d_in: 8,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 23).unwrap().0;
        let cfg = RunConfig {
            d_hidden: 6,
            n_layers: 2,
            k_att: 3,
            ..RunConfig::default()
        };
        let mut store = ParamStore::new();
        let mut rng = substream(8, "det:init");
        let model = DetectorModel::init(&mut store, &mut rng, &corpus, &cfg);
        (corpus, store, model)
    }

    #[test]
    fn forward_yields_probability_and_capped_selection() {
        let (corpus, store, model) = small_setup();
        let mut t = Tape::new();
        let fwd = model.forward(&mut t, &store, &corpus, &corpus.graphs[0]).unwrap();
        assert!(fwd.prob > 0.0 && fwd.prob < 1.0);
        assert_eq!(fwd.alpha.len(), 5);
        assert!((fwd.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(fwd.selected.len(), 3);

        // Zeroed classifier weights pin the probability at one half.
        let mut zeroed = ParamStore::new();
        for i in 0..store.len() {
            let mut v = store.value(i).clone();
            if store.name(i).starts_with("det.cls") {
                v.fill(0.0);
            }
            zeroed.add(store.name(i), v, store.is_trainable(i));
        }
        let mut t2 = Tape::new();
        let fwd2 = model.forward(&mut t2, &zeroed, &corpus, &corpus.graphs[0]).unwrap();
        assert_eq!(fwd2.prob, 0.5);
    }

    #[test]
    fn scorer_and_classifier_pass_fd_check() {
        let (corpus, mut store, model) = small_setup();
        let g = corpus.graphs[1].clone();
        let label = g.label.unwrap();
        let f = |s: &ParamStore| {
            let mut t = Tape::new();
            let fwd = model.forward(&mut t, s, &corpus, &g).unwrap();
            let loss = t.bce_with_logits(fwd.logit, vec![label as u8 as f64]);
            let grads = t.backward(loss);
            (t.value(loss)[(0, 0)], t.param_grads(&grads, s))
        };
        let opts = GradCheckOptions { max_entries_per_param: 16, ..Default::default() };
        let report = gradient_check(&mut store, &f, &opts);
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn deterministic_forward() {
        let (corpus, store, model) = small_setup();
        let mut t1 = Tape::new();
        let a = model.forward(&mut t1, &store, &corpus, &corpus.graphs[2]).unwrap();
        let mut t2 = Tape::new();
        let b = model.forward(&mut t2, &store, &corpus, &corpus.graphs[2]).unwrap();
        assert_eq!(a.prob, b.prob);
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.selected, b.selected);
    }
}
