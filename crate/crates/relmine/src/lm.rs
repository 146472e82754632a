//! Word-level tokenizer and a small decoder-only language model: learned
//! positions, pre-norm RMS blocks, tied input/output embeddings, strict
//! causal masking, and an optional soft prefix occupying position zero.
//! The label words "Yes" and "No" are dedicated case-sensitive ids so the
//! answer token is never conflated with the words inside the prompt.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::optim::{glorot, normal, Adam, AdamConfig};
use crate::rng::substream;
use crate::tape::{ParamStore, Tape, Var};

pub const UNK: u32 = 0;
pub const EOS: u32 = 1;
pub const YES: u32 = 2;
pub const NO: u32 = 3;

/// Lowercase alphanumeric runs plus single punctuation characters.
fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// Vocabulary: four reserved ids, then the sorted token set of the
    /// source strings. Sorting makes the ids independent of source order.
    pub fn build(sources: &[String]) -> Tokenizer {
        let mut seen = std::collections::BTreeSet::new();
        for s in sources {
            for tok in split_tokens(s) {
                seen.insert(tok);
            }
        }
        let mut tokens =
            vec!["<unk>".to_string(), "<eos>".to_string(), "Yes".to_string(), "No".to_string()];
        tokens.extend(seen);
        let mut tk = Tokenizer { tokens, index: HashMap::new() };
        tk.rebuild_index();
        tk
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_tokens(text)
            .into_iter()
            .map(|t| self.index.get(&t).copied().unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.tokens.get(i as usize).map(|s| s.as_str()).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn label_id(positive: bool) -> u32 {
        if positive {
            YES
        } else {
            NO
        }
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("tokenizer serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tk: Tokenizer = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        tk.rebuild_index();
        Ok(tk)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub d: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub max_len: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { d: 128, n_heads: 4, n_blocks: 2, max_len: 512 }
    }
}

pub struct TinyLm {
    pub cfg: LmConfig,
    vocab: usize,
    prefix: String,
}

impl TinyLm {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        cfg: LmConfig,
        vocab: usize,
    ) -> TinyLm {
        assert_eq!(cfg.d % cfg.n_heads, 0, "head width must divide model width");
        store.add(&format!("{prefix}.embed"), normal(rng, vocab, cfg.d, 0.02), true);
        store.add(&format!("{prefix}.pos"), normal(rng, cfg.max_len, cfg.d, 0.02), true);
        for b in 0..cfg.n_blocks {
            store.add(&format!("{prefix}.b{b}.ln1"), Array2::ones((1, cfg.d)), true);
            store.add(&format!("{prefix}.b{b}.wq"), glorot(rng, cfg.d, cfg.d), true);
            store.add(&format!("{prefix}.b{b}.wk"), glorot(rng, cfg.d, cfg.d), true);
            store.add(&format!("{prefix}.b{b}.wv"), glorot(rng, cfg.d, cfg.d), true);
            store.add(&format!("{prefix}.b{b}.wo"), glorot(rng, cfg.d, cfg.d), true);
            store.add(&format!("{prefix}.b{b}.ln2"), Array2::ones((1, cfg.d)), true);
            store.add(&format!("{prefix}.b{b}.ff1"), glorot(rng, 4 * cfg.d, cfg.d), true);
            store.add(&format!("{prefix}.b{b}.ff1b"), Array2::zeros((1, 4 * cfg.d)), true);
            store.add(&format!("{prefix}.b{b}.ff2"), glorot(rng, cfg.d, 4 * cfg.d), true);
            store.add(&format!("{prefix}.b{b}.ff2b"), Array2::zeros((1, cfg.d)), true);
        }
        store.add(&format!("{prefix}.lnf"), Array2::ones((1, cfg.d)), true);
        TinyLm { cfg, vocab, prefix: prefix.to_string() }
    }

    pub fn attach(store: &ParamStore, prefix: &str, cfg: LmConfig, vocab: usize) -> Result<TinyLm> {
        match store.lookup(&format!("{prefix}.embed")) {
            Some(idx) if store.value(idx).dim() == (vocab, cfg.d) => {
                Ok(TinyLm { cfg, vocab, prefix: prefix.to_string() })
            }
            Some(idx) => Err(Error::Dimension(format!(
                "embedding table is {:?}, expected ({vocab}, {})",
                store.value(idx).dim(),
                cfg.d
            ))),
            None => Err(Error::Schema(format!("store lacks parameters under {prefix:?}"))),
        }
    }

    pub fn check_len(&self, seq_len: usize) -> Result<()> {
        if seq_len > self.cfg.max_len {
            return Err(Error::Dimension(format!(
                "sequence length {seq_len} exceeds the position table ({})",
                self.cfg.max_len
            )));
        }
        if seq_len == 0 {
            return Err(Error::Dimension("empty sequence".into()));
        }
        Ok(())
    }

    fn p(&self, t: &mut Tape, store: &ParamStore, name: &str) -> Var {
        let idx = store
            .lookup(&format!("{}.{name}", self.prefix))
            .expect("lm parameter registered");
        t.param(store, idx)
    }

    fn norm(&self, t: &mut Tape, x: Var, gain: Var) -> Var {
        let l = t.value(x).nrows();
        let n = t.rms_norm_rows(x, 1e-6);
        let tiled = t.tile_row(gain, l);
        t.mul(n, tiled)
    }

    /// Logits for the whole sequence, one row per position. The optional
    /// soft prefix is a 1-by-d row prepended at position zero.
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        soft_prefix: Option<Var>,
        tokens: &[u32],
    ) -> Result<Var> {
        let n_pre = soft_prefix.is_some() as usize;
        let l = n_pre + tokens.len();
        self.check_len(l)?;
        for &tok in tokens {
            if tok as usize >= self.vocab {
                return Err(Error::Schema(format!("token id {tok} outside the vocabulary")));
            }
        }

        let embed = self.p(t, store, "embed");
        let rows: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let mut x = if tokens.is_empty() {
            soft_prefix.expect("nonempty sequence")
        } else {
            let tok = t.gather_rows(embed, &rows);
            match soft_prefix {
                Some(p) => t.concat_rows(&[p, tok]),
                None => tok,
            }
        };

        let pos = self.p(t, store, "pos");
        let pos_rows: Vec<usize> = (0..l).collect();
        let pos_slice = t.gather_rows(pos, &pos_rows);
        x = t.add(x, pos_slice);

        // Strict causal additive mask, shared by every block.
        let mut causal = Array2::zeros((l, l));
        for i in 0..l {
            for j in (i + 1)..l {
                causal[(i, j)] = -1e30;
            }
        }
        let mask = t.constant(causal);

        let dh = self.cfg.d / self.cfg.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for b in 0..self.cfg.n_blocks {
            let ln1 = self.p(t, store, &format!("b{b}.ln1"));
            let xn = self.norm(t, x, ln1);
            let wq = self.p(t, store, &format!("b{b}.wq"));
            let wk = self.p(t, store, &format!("b{b}.wk"));
            let wv = self.p(t, store, &format!("b{b}.wv"));
            let wo = self.p(t, store, &format!("b{b}.wo"));
            let q = t.matmul_bt(xn, wq);
            let k = t.matmul_bt(xn, wk);
            let v = t.matmul_bt(xn, wv);
            let mut heads = Vec::with_capacity(self.cfg.n_heads);
            for h in 0..self.cfg.n_heads {
                let qh = t.slice_cols(q, h * dh, dh);
                let kh = t.slice_cols(k, h * dh, dh);
                let vh = t.slice_cols(v, h * dh, dh);
                let logits = t.matmul_bt(qh, kh);
                let scaled = t.scale(logits, scale);
                let masked = t.add(scaled, mask);
                let probs = t.row_softmax(masked);
                heads.push(t.matmul(probs, vh));
            }
            let mut cat = heads[0];
            for h in &heads[1..] {
                cat = t.concat_cols(cat, *h);
            }
            let att = t.matmul_bt(cat, wo);
            x = t.add(x, att);

            let ln2 = self.p(t, store, &format!("b{b}.ln2"));
            let xn2 = self.norm(t, x, ln2);
            let ff1 = self.p(t, store, &format!("b{b}.ff1"));
            let ff1b = self.p(t, store, &format!("b{b}.ff1b"));
            let ff2 = self.p(t, store, &format!("b{b}.ff2"));
            let ff2b = self.p(t, store, &format!("b{b}.ff2b"));
            let h1 = t.linear(xn2, ff1, ff1b);
            let h1 = t.relu(h1);
            let h2 = t.linear(h1, ff2, ff2b);
            x = t.add(x, h2);
        }

        let lnf = self.p(t, store, "lnf");
        let xf = self.norm(t, x, lnf);
        // Output projection reuses the embedding table (tied weights).
        Ok(t.matmul_bt(xf, embed))
    }

    /// Full next-token cross entropy over a token sequence; used to warm
    /// the model before it is frozen.
    pub fn next_token_loss(&self, t: &mut Tape, store: &ParamStore, tokens: &[u32]) -> Result<Var> {
        if tokens.len() < 2 {
            return Err(Error::Dimension("next-token loss needs at least two tokens".into()));
        }
        let logits = self.forward(t, store, None, tokens)?;
        let mut targets: Vec<Option<usize>> =
            tokens[1..].iter().map(|&t| Some(t as usize)).collect();
        targets.push(None);
        Ok(t.cross_entropy(logits, targets))
    }

    /// Cross entropy of the label token at the first answer position: the
    /// row fed by the last prompt token.
    pub fn label_loss(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        soft_prefix: Option<Var>,
        prompt: &[u32],
        label: u32,
    ) -> Result<Var> {
        let logits = self.forward(t, store, soft_prefix, prompt)?;
        let l = t.value(logits).nrows();
        let mut targets = vec![None; l];
        targets[l - 1] = Some(label as usize);
        Ok(t.cross_entropy(logits, targets))
    }

    /// Greedy decoding. The first generated token is restricted to
    /// `first_allowed` (the label words); later steps take the plain
    /// argmax until EOS or the cap. Ties go to the lower token id.
    pub fn greedy_decode(
        &self,
        store: &ParamStore,
        soft_prefix: Option<&Array2<f64>>,
        prompt: &[u32],
        first_allowed: &[u32],
        max_new: usize,
    ) -> Result<Vec<u32>> {
        let mut tokens = prompt.to_vec();
        let mut out = Vec::new();
        for step in 0..max_new {
            let mut t = Tape::new();
            let prefix_var = soft_prefix.map(|p| t.constant(p.clone()));
            let logits = self.forward(&mut t, store, prefix_var, &tokens)?;
            let row = t.value(logits).nrows() - 1;
            let scores = t.value(logits).row(row).to_owned();
            let pick = if step == 0 {
                assert!(!first_allowed.is_empty());
                *first_allowed
                    .iter()
                    .min_by(|&&a, &&b| {
                        scores[b as usize]
                            .partial_cmp(&scores[a as usize])
                            .expect("finite logits")
                            .then(a.cmp(&b))
                    })
                    .expect("nonempty constraint")
            } else {
                let mut best = 0u32;
                for i in 1..self.vocab as u32 {
                    if scores[i as usize] > scores[best as usize] {
                        best = i;
                    }
                }
                best
            };
            if pick == EOS {
                break;
            }
            out.push(pick);
            tokens.push(pick);
            if tokens.len() + soft_prefix.is_some() as usize >= self.cfg.max_len {
                break;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for WarmTrainConfig {
    fn default() -> Self {
        WarmTrainConfig { epochs: 5, batch_size: 8, lr: 1e-3, weight_decay: 0.0 }
    }
}

/// Teacher-force the model on full sequences (prompt, label, EOS already
/// appended by the caller). Returns the mean loss per epoch.
pub fn warm_train(
    store: &mut ParamStore,
    lm: &TinyLm,
    sequences: &[Vec<u32>],
    cfg: &WarmTrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if sequences.is_empty() {
        return Err(Error::Schema("warm training needs at least one sequence".into()));
    }
    let mut opt = Adam::new(store, AdamConfig::new(cfg.lr, cfg.weight_decay));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        let mut rng = substream(seed, &format!("lm:order:{epoch}"));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Vec<Array2<f64>>)>> = map_ordered(batch, |&i| {
                let mut t = Tape::new();
                let loss = lm.next_token_loss(&mut t, store, &sequences[i])?;
                let g = t.backward(loss);
                Ok((t.value(loss)[(0, 0)], t.param_grads(&g, store)))
            });
            let mut grads = store.zero_grads();
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += &gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: batch_loss });
            }
            total += batch_loss * batch.len() as f64;
            opt.step(store, &grads);
        }
        epoch_losses.push(total / sequences.len() as f64);
    }
    Ok(epoch_losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradient_check, GradCheckOptions};

    fn toy_tokenizer() -> Tokenizer {
        Tokenizer::build(&[
            "Please answer with only \"Yes\" or \"No\".".to_string(),
            "the cat sat on the mat".to_string(),
            "cats, dogs!".to_string(),
        ])
    }

    #[test]
    fn reserved_ids_and_sorted_tail() {
        let tk = toy_tokenizer();
        assert_eq!(tk.encode("Yes"), vec![tk.index["yes"]]);
        assert_eq!(Tokenizer::label_id(true), YES);
        assert_eq!(Tokenizer::label_id(false), NO);
        assert_eq!(tk.tokens[UNK as usize], "<unk>");
        assert_eq!(tk.tokens[EOS as usize], "<eos>");
        // Tail is sorted, so rebuilding from shuffled sources is identical.
        let tk2 = Tokenizer::build(&[
            "cats, dogs!".to_string(),
            "the cat sat on the mat".to_string(),
            "Please answer with only \"Yes\" or \"No\".".to_string(),
        ]);
        assert_eq!(tk, tk2);
    }

    #[test]
    fn punctuation_splits_and_unknowns_map_to_unk() {
        let tk = toy_tokenizer();
        let ids = tk.encode("The cat, obviously!");
        assert_eq!(ids.len(), 5, "the / cat / , / obviously / !");
        assert_eq!(ids[3], UNK);
        assert_eq!(ids[2], tk.index[","]);
    }

    #[test]
    fn tokenizer_roundtrips_through_json() {
        let tk = toy_tokenizer();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.json");
        tk.write_json(&p).unwrap();
        let back = Tokenizer::read_json(&p).unwrap();
        assert_eq!(tk, back);
        assert_eq!(back.encode("cat"), tk.encode("cat"));
    }

    fn tiny_lm(vocab: usize) -> (ParamStore, TinyLm) {
        let mut store = ParamStore::new();
        let mut rng = substream(11, "lm:init");
        let cfg = LmConfig { d: 8, n_heads: 2, n_blocks: 1, max_len: 16 };
        let lm = TinyLm::init(&mut store, &mut rng, "lm", cfg, vocab);
        (store, lm)
    }

    #[test]
    fn strict_causality() {
        let (store, lm) = tiny_lm(10);
        let a = [4u32, 5, 6, 7];
        let b = [4u32, 5, 9, 8];
        let run = |tokens: &[u32]| {
            let mut t = Tape::new();
            let logits = lm.forward(&mut t, &store, None, tokens).unwrap();
            t.value(logits).clone()
        };
        let la = run(&a);
        let lb = run(&b);
        assert_eq!(la.row(0), lb.row(0));
        assert_eq!(la.row(1), lb.row(1), "rows before the first change must match");
        assert_ne!(la.row(2), lb.row(2));
    }

    #[test]
    fn soft_prefix_shifts_positions_and_carries_gradient() {
        let (mut store, lm) = tiny_lm(10);
        store.add("probe.prefix", normal(&mut substream(3, "p"), 1, 8, 0.5), true);
        let f = |s: &ParamStore| {
            let mut t = Tape::new();
            let idx = s.lookup("probe.prefix").unwrap();
            let p = t.param(s, idx);
            let loss = lm.label_loss(&mut t, s, Some(p), &[4, 5, 6], YES).unwrap();
            let g = t.backward(loss);
            (t.value(loss)[(0, 0)], t.param_grads(&g, s))
        };
        let (_, grads) = f(&store);
        let idx = store.lookup("probe.prefix").unwrap();
        assert!(grads[idx].iter().any(|&g| g != 0.0), "prefix must receive gradient");
    }

    #[test]
    fn lm_gradients_pass_fd_check() {
        let (mut store, lm) = tiny_lm(10);
        let tokens = [4u32, 5, 6, 7, 2];
        let f = |s: &ParamStore| {
            let mut t = Tape::new();
            let loss = lm.next_token_loss(&mut t, s, &tokens).unwrap();
            let g = t.backward(loss);
            (t.value(loss)[(0, 0)], t.param_grads(&g, s))
        };
        let opts = GradCheckOptions { max_entries_per_param: 24, ..Default::default() };
        let report = gradient_check(&mut store, &f, &opts);
        // The stack is deep enough that central differences carry ~1e-6 of
        // cancellation noise; real gradient bugs show up orders above this.
        assert!(
            report.max_rel_err < 1e-5,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn sequence_length_guard() {
        let (store, lm) = tiny_lm(10);
        let long = vec![4u32; 17];
        assert!(lm.forward(&mut Tape::new(), &store, None, &long).is_err());
        assert!(lm.check_len(16).is_ok());
    }

    #[test]
    fn warm_training_reduces_loss_and_decode_is_constrained() {
        let tk = Tokenizer::build(&[
            "is the light on".to_string(),
            "is the light off".to_string(),
        ]);
        let mut store = ParamStore::new();
        let mut rng = substream(21, "lm:init");
        let cfg = LmConfig { d: 16, n_heads: 2, n_blocks: 2, max_len: 24 };
        let lm = TinyLm::init(&mut store, &mut rng, "lm", cfg, tk.vocab_size());

        // Two patterns: "...on" answers Yes, "...off" answers No.
        let mut seqs = Vec::new();
        for _ in 0..8 {
            let mut a = tk.encode("is the light on");
            a.push(YES);
            a.push(EOS);
            seqs.push(a);
            let mut b = tk.encode("is the light off");
            b.push(NO);
            b.push(EOS);
            seqs.push(b);
        }
        let cfg = WarmTrainConfig { epochs: 30, batch_size: 4, lr: 3e-3, weight_decay: 0.0 };
        let losses = warm_train(&mut store, &lm, &seqs, &cfg, 7).unwrap();
        assert!(
            losses[losses.len() - 1] < 0.5 * losses[0],
            "warm training failed to learn: {losses:?}"
        );

        let on = tk.encode("is the light on");
        let gen = lm.greedy_decode(&store, None, &on, &[YES, NO], 4).unwrap();
        assert_eq!(gen[0], YES, "learned association");
        let off = tk.encode("is the light off");
        let gen = lm.greedy_decode(&store, None, &off, &[YES, NO], 4).unwrap();
        assert_eq!(gen[0], NO);
        // Decoding twice gives identical output.
        let again = lm.greedy_decode(&store, None, &off, &[YES, NO], 4).unwrap();
        assert_eq!(gen, again);
    }
}
