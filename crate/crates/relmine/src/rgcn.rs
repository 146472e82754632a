//! Relational graph convolution: per-relation weight matrices, mean
//! normalization over same-relation neighbors, a self-connection, ReLU
//! between layers and identity on the last. Large relation sets switch to
//! a shared basis decomposition so parameter count stays bounded.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::optim::glorot;
use crate::tape::{ParamStore, Tape, Var};

/// Relation sets beyond this size use basis decomposition automatically.
pub const BASIS_THRESHOLD: usize = 64;
pub const DEFAULT_BASES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decomp {
    /// One weight matrix per relation.
    Full,
    /// W_r = sum_b coef[r, b] * V_b with the given basis count.
    Basis(usize),
}

impl Decomp {
    pub fn auto(n_relations: usize) -> Self {
        if n_relations > BASIS_THRESHOLD {
            Decomp::Basis(DEFAULT_BASES)
        } else {
            Decomp::Full
        }
    }
}

#[derive(Debug, Clone)]
pub struct RgcnConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub n_layers: usize,
    pub n_relations: usize,
    pub decomp: Decomp,
}

/// Parameter names are derived from a prefix so several towers (pretext
/// encoder, detector encoder) can coexist in one store.
pub struct Rgcn {
    pub cfg: RgcnConfig,
    prefix: String,
}

impl Rgcn {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        cfg: RgcnConfig,
    ) -> Rgcn {
        for l in 0..cfg.n_layers {
            let d_in = if l == 0 { cfg.d_in } else { cfg.d_hidden };
            match cfg.decomp {
                Decomp::Full => {
                    for r in 0..cfg.n_relations {
                        store.add(
                            &format!("{prefix}.l{l}.rel{r}"),
                            glorot(rng, cfg.d_hidden, d_in),
                            true,
                        );
                    }
                }
                Decomp::Basis(b) => {
                    for i in 0..b {
                        store.add(
                            &format!("{prefix}.l{l}.basis{i}"),
                            glorot(rng, cfg.d_hidden, d_in),
                            true,
                        );
                    }
                    store.add(
                        &format!("{prefix}.l{l}.coef"),
                        glorot(rng, cfg.n_relations, b),
                        true,
                    );
                }
            }
            store.add(&format!("{prefix}.l{l}.self"), glorot(rng, cfg.d_hidden, d_in), true);
        }
        Rgcn { cfg, prefix: prefix.to_string() }
    }

    /// Reconnect to parameters already present in the store.
    pub fn attach(store: &ParamStore, prefix: &str, cfg: RgcnConfig) -> Result<Rgcn> {
        let probe = format!("{prefix}.l0.self");
        if store.lookup(&probe).is_none() {
            return Err(Error::Schema(format!("store lacks parameters under {prefix:?}")));
        }
        Ok(Rgcn { cfg, prefix: prefix.to_string() })
    }

    /// Materialize W_r for a layer on the tape (direct parameter or basis
    /// combination). Dimensions: d_out-by-d_in of that layer.
    pub fn relation_weight(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        layer: usize,
        rel: u32,
    ) -> Var {
        match self.cfg.decomp {
            Decomp::Full => {
                let idx = store
                    .lookup(&format!("{}.l{layer}.rel{rel}", self.prefix))
                    .expect("relation weight registered");
                t.param(store, idx)
            }
            Decomp::Basis(b) => {
                let coef_idx = store
                    .lookup(&format!("{}.l{layer}.coef", self.prefix))
                    .expect("basis coefficients registered");
                let coef = t.param(store, coef_idx);
                let row = t.gather_rows(coef, &[rel as usize]);
                let mats: Vec<Var> = (0..b)
                    .map(|i| {
                        let idx = store
                            .lookup(&format!("{}.l{layer}.basis{i}", self.prefix))
                            .expect("basis matrix registered");
                        t.param(store, idx)
                    })
                    .collect();
                t.lin_comb(row, &mats)
            }
        }
    }

    fn self_weight(&self, t: &mut Tape, store: &ParamStore, layer: usize) -> Var {
        let idx = store
            .lookup(&format!("{}.l{layer}.self", self.prefix))
            .expect("self weight registered");
        t.param(store, idx)
    }

    /// Run all layers. `inflow_masked[i]` removes every neighbor message
    /// into node i at every layer, leaving only the self path, so a masked
    /// node's output depends on its own features alone.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        x: Var,
        edges: &[Edge],
        n_nodes: usize,
        inflow_masked: Option<&[bool]>,
    ) -> Var {
        let mask: Vec<f64> = match inflow_masked {
            Some(m) => {
                assert_eq!(m.len(), n_nodes, "inflow mask length");
                m.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()
            }
            None => vec![1.0; n_nodes],
        };

        // In-degree per (node, relation); the mean normalizer is exact.
        let mut deg: HashMap<(u32, u32), f64> = HashMap::new();
        for e in edges {
            *deg.entry((e.dst, e.rel)).or_insert(0.0) += 1.0;
        }

        // Relations in id order so tape layout is deterministic.
        let mut by_rel: Vec<(u32, Vec<&Edge>)> = Vec::new();
        for e in edges {
            match by_rel.binary_search_by_key(&e.rel, |(r, _)| *r) {
                Ok(i) => by_rel[i].1.push(e),
                Err(i) => by_rel.insert(i, (e.rel, vec![e])),
            }
        }

        let mut h = x;
        for l in 0..self.cfg.n_layers {
            let mut inputs = Vec::with_capacity(by_rel.len());
            let mut triplets = Vec::new();
            for (k, (rel, rel_edges)) in by_rel.iter().enumerate() {
                let srcs: Vec<usize> = rel_edges.iter().map(|e| e.src as usize).collect();
                let gathered = t.gather_rows(h, &srcs);
                let w = self.relation_weight(t, store, l, *rel);
                let transformed = t.matmul_bt(gathered, w);
                inputs.push(transformed);
                for (row, e) in rel_edges.iter().enumerate() {
                    let c = deg[&(e.dst, e.rel)];
                    triplets.push((k as u32, row as u32, e.dst, 1.0 / c));
                }
            }
            let w0 = self.self_weight(t, store, l);
            let self_term = t.matmul_bt(h, w0);
            let mut out = if inputs.is_empty() {
                self_term
            } else {
                let neigh = t.multi_scatter(&inputs, n_nodes, triplets);
                let neigh = t.row_scale(neigh, &mask);
                t.add(neigh, self_term)
            };
            if l + 1 < self.cfg.n_layers {
                out = t.relu(out);
            }
            h = out;
        }
        h
    }
}
