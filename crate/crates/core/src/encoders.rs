//! Sentence encoders: Transformer (bidirectional self-attention, mean
//! pooled), CNN (stacked multi-width convolutions, mean pooled), and the DAN
//! used for the bag-of-words context feature, plus the task-specific heads
//! layered on the shared encoder output.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{NodeId, ParameterSet, Real, Session, Tensor};
use crate::error::{Error, Result};
use crate::subword::TokenSequence;

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Transformer,
    Cnn,
    Dan,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Transformer => "transformer",
            Arch::Cnn => "cnn",
            Arch::Dan => "dan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(Arch::Transformer),
            "cnn" => Ok(Arch::Cnn),
            "dan" => Ok(Arch::Dan),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Architecture hyperparameters. The `desk` presets are small enough to
/// train on a laptop core; `paper` mirrors the published configuration and
/// is practical for shape checks only.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub out_dim: usize,
    pub max_len: usize,
    // transformer
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub filter: usize,
    // cnn
    pub cnn_layers: usize,
    pub filter_widths: Vec<usize>,
    pub filters: usize,
    // dan (context encoder)
    pub dan_hidden: Vec<usize>,
}

impl EncoderConfig {
    pub fn desk(arch: Arch, vocab_size: usize) -> Self {
        EncoderConfig {
            arch,
            vocab_size,
            embed_dim: 64,
            out_dim: 64,
            max_len: match arch {
                Arch::Cnn => 256,
                _ => 100,
            },
            layers: 2,
            heads: 2,
            hidden: 64,
            filter: 128,
            cnn_layers: 2,
            filter_widths: vec![1, 2, 3, 5],
            filters: 32,
            dan_hidden: vec![64],
        }
    }

    pub fn paper(arch: Arch, vocab_size: usize) -> Self {
        EncoderConfig {
            arch,
            vocab_size,
            embed_dim: 512,
            out_dim: 512,
            max_len: match arch {
                Arch::Cnn => 256,
                _ => 100,
            },
            layers: 6,
            heads: 8,
            hidden: 512,
            filter: 2048,
            cnn_layers: 2,
            filter_widths: vec![1, 2, 3, 5],
            filters: 256,
            dan_hidden: vec![512],
        }
    }

    pub fn preset(name: &str, arch: Arch, vocab_size: usize) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(arch, vocab_size)),
            "paper" => Ok(Self::paper(arch, vocab_size)),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if self.hidden % self.heads != 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "embed dim {} must be divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.filter_widths.is_empty() {
            return Err(Error::invalid("filter_widths must be non-empty"));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must cover pad and unk"));
        }
        Ok(())
    }

    /// Flat `key=value` text, embedded in checkpoints.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "arch={}", self.arch.as_str());
        let _ = writeln!(s, "vocab_size={}", self.vocab_size);
        let _ = writeln!(s, "embed_dim={}", self.embed_dim);
        let _ = writeln!(s, "out_dim={}", self.out_dim);
        let _ = writeln!(s, "max_len={}", self.max_len);
        let _ = writeln!(s, "layers={}", self.layers);
        let _ = writeln!(s, "heads={}", self.heads);
        let _ = writeln!(s, "hidden={}", self.hidden);
        let _ = writeln!(s, "filter={}", self.filter);
        let _ = writeln!(s, "cnn_layers={}", self.cnn_layers);
        let widths: Vec<String> = self.filter_widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "filter_widths={}", widths.join(","));
        let _ = writeln!(s, "filters={}", self.filters);
        let hidden: Vec<String> = self.dan_hidden.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "dan_hidden={}", hidden.join(","));
        s
    }

    pub fn from_kv(text: &str, source: &str) -> Result<Self> {
        let mut cfg = EncoderConfig::desk(Arch::Transformer, 2);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, lineno + 1, "expected key=value"))?;
            let bad = |what: &str| Error::parse(source, lineno + 1, format!("bad {what}: {value:?}"));
            match key.trim() {
                "arch" => cfg.arch = Arch::parse(value.trim())?,
                "vocab_size" => cfg.vocab_size = value.trim().parse().map_err(|_| bad("vocab_size"))?,
                "embed_dim" => cfg.embed_dim = value.trim().parse().map_err(|_| bad("embed_dim"))?,
                "out_dim" => cfg.out_dim = value.trim().parse().map_err(|_| bad("out_dim"))?,
                "max_len" => cfg.max_len = value.trim().parse().map_err(|_| bad("max_len"))?,
                "layers" => cfg.layers = value.trim().parse().map_err(|_| bad("layers"))?,
                "heads" => cfg.heads = value.trim().parse().map_err(|_| bad("heads"))?,
                "hidden" => cfg.hidden = value.trim().parse().map_err(|_| bad("hidden"))?,
                "filter" => cfg.filter = value.trim().parse().map_err(|_| bad("filter"))?,
                "cnn_layers" => cfg.cnn_layers = value.trim().parse().map_err(|_| bad("cnn_layers"))?,
                "filter_widths" => {
                    cfg.filter_widths = parse_usize_list(value).ok_or_else(|| bad("filter_widths"))?
                }
                "filters" => cfg.filters = value.trim().parse().map_err(|_| bad("filters"))?,
                "dan_hidden" => {
                    cfg.dan_hidden = parse_usize_list(value).ok_or_else(|| bad("dan_hidden"))?
                }
                other => return Err(Error::parse(source, lineno + 1, format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_usize_list(s: &str) -> Option<Vec<usize>> {
    let v: Option<Vec<usize>> = s.trim().split(',').map(|p| p.trim().parse().ok()).collect();
    v.filter(|v| !v.is_empty())
}

/// Padded token batch: ids flattened row-major with a 0/1 validity mask.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub batch: usize,
    pub seq: usize,
    pub mask: Vec<f64>,
}

impl TokenBatch {
    /// Pads sequences to the longest in the batch with `pad_id`.
    pub fn from_sequences(seqs: &[TokenSequence], pad_id: u32) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::empty("token batch"));
        }
        if let Some(i) = seqs.iter().position(|s| s.ids.is_empty()) {
            return Err(Error::invalid(format!("sequence {i} in batch is empty")));
        }
        let seq = seqs.iter().map(|s| s.ids.len()).max().unwrap();
        let batch = seqs.len();
        let mut ids = vec![pad_id as usize; batch * seq];
        let mut mask = vec![0.0; batch * seq];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.ids.iter().enumerate() {
                ids[b * seq + t] = id as usize;
                mask[b * seq + t] = 1.0;
            }
        }
        Ok(TokenBatch { ids, batch, seq, mask })
    }

    pub fn mask_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[self.batch, self.seq],
            self.mask.iter().map(|&m| T::from_f64(m)).collect(),
        )
        .expect("mask shape consistent by construction")
    }
}

/// Bag-of-words batch for the DAN context encoder. Ids within each bag are
/// sorted so the mean is summed in a fixed order regardless of input order.
#[derive(Debug, Clone)]
pub struct BagBatch {
    pub ids: Vec<usize>,
    pub batch: usize,
    pub width: usize,
    pub mask: Vec<f64>,
    /// 0/1 per row; rows with 0 contribute an all-zero context embedding.
    pub present: Vec<f64>,
}

impl BagBatch {
    /// `bags` may contain empty entries only when `allow_missing` is set;
    /// those rows are marked absent and produce zero context vectors.
    pub fn from_bags(bags: &[Vec<u32>], pad_id: u32, allow_missing: bool) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::empty("bag batch"));
        }
        if !allow_missing {
            if let Some(i) = bags.iter().position(|b| b.is_empty()) {
                return Err(Error::invalid(format!("bag {i} is empty")));
            }
        }
        let width = bags.iter().map(|b| b.len()).max().unwrap().max(1);
        let batch = bags.len();
        let mut ids = vec![pad_id as usize; batch * width];
        let mut mask = vec![0.0; batch * width];
        let mut present = vec![0.0; batch];
        for (b, bag) in bags.iter().enumerate() {
            let mut sorted: Vec<u32> = bag.clone();
            sorted.sort_unstable();
            if !sorted.is_empty() {
                present[b] = 1.0;
            } else {
                // keep one masked slot so pooling stays well-defined
                mask[b * width] = 1.0;
            }
            for (t, &id) in sorted.iter().enumerate() {
                ids[b * width + t] = id as usize;
                mask[b * width + t] = 1.0;
            }
        }
        Ok(BagBatch {
            ids,
            batch,
            width,
            mask,
            present,
        })
    }
}

// ---- parameter initialization ----------------------------------------------

fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data consistent")
}

fn xavier<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, &[rows, cols], bound)
}

fn dense_init<T: Real>(params: &mut ParameterSet<T>, rng: &mut ChaCha8Rng, prefix: &str, inp: usize, out: usize) -> Result<()> {
    params.insert(&format!("{prefix}/w"), xavier(rng, inp, out))?;
    params.insert(&format!("{prefix}/b"), Tensor::zeros(&[out]))?;
    Ok(())
}

/// Initializes every parameter the multi-task model can touch: the shared
/// encoder for `cfg.arch`, the DAN context encoder, and the three task
/// heads. Deterministic for a given seed.
pub fn init_params<T: Real>(cfg: &EncoderConfig, seed: u64) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let e = cfg.embed_dim;
    params.insert("enc/embed", uniform(&mut rng, &[cfg.vocab_size, e], 0.1))?;
    match cfg.arch {
        Arch::Transformer => {
            params.insert("enc/pos", uniform(&mut rng, &[cfg.max_len, e], 0.1))?;
            for l in 0..cfg.layers {
                for name in ["wq", "wk", "wv", "wo"] {
                    dense_init(&mut params, &mut rng, &format!("enc/l{l}/attn/{name}"), e, e)?;
                }
                params.insert(&format!("enc/l{l}/ln1/gamma"), Tensor::full(&[e], T::one()))?;
                params.insert(&format!("enc/l{l}/ln1/beta"), Tensor::zeros(&[e]))?;
                dense_init(&mut params, &mut rng, &format!("enc/l{l}/ffn/fc1"), e, cfg.filter)?;
                dense_init(&mut params, &mut rng, &format!("enc/l{l}/ffn/fc2"), cfg.filter, e)?;
                params.insert(&format!("enc/l{l}/ln2/gamma"), Tensor::full(&[e], T::one()))?;
                params.insert(&format!("enc/l{l}/ln2/beta"), Tensor::zeros(&[e]))?;
            }
            dense_init(&mut params, &mut rng, "enc/out", e, cfg.out_dim)?;
        }
        Arch::Cnn => {
            let mut cin = e;
            for l in 0..cfg.cnn_layers {
                for &w in &cfg.filter_widths {
                    let bound = (6.0 / (w * cin + cfg.filters) as f64).sqrt();
                    params.insert(
                        &format!("enc/l{l}/conv{w}/kernel"),
                        uniform(&mut rng, &[w, cin, cfg.filters], bound),
                    )?;
                    params.insert(&format!("enc/l{l}/conv{w}/bias"), Tensor::zeros(&[cfg.filters]))?;
                }
                cin = cfg.filters * cfg.filter_widths.len();
            }
            dense_init(&mut params, &mut rng, "enc/ff1", cin, e)?;
            dense_init(&mut params, &mut rng, "enc/out", e, cfg.out_dim)?;
        }
        Arch::Dan => {
            let mut inp = e;
            for (i, &h) in cfg.dan_hidden.iter().enumerate() {
                dense_init(&mut params, &mut rng, &format!("enc/ff{i}"), inp, h)?;
                inp = h;
            }
            dense_init(&mut params, &mut rng, "enc/out", inp, cfg.out_dim)?;
        }
    }
    // Context DAN: separate embedding table and feed-forward stack.
    params.insert("ctx/embed", uniform(&mut rng, &[cfg.vocab_size, e], 0.1))?;
    let mut inp = e;
    for (i, &h) in cfg.dan_hidden.iter().enumerate() {
        dense_init(&mut params, &mut rng, &format!("ctx/ff{i}"), inp, h)?;
        inp = h;
    }
    dense_init(&mut params, &mut rng, "ctx/out", inp, cfg.out_dim)?;
    // Task heads.
    let d = cfg.out_dim;
    dense_init(&mut params, &mut rng, "head/question/fc1", d, d)?;
    dense_init(&mut params, &mut rng, "head/question/fc2", d, d)?;
    dense_init(&mut params, &mut rng, "head/response/fc1", 2 * d, d)?;
    dense_init(&mut params, &mut rng, "head/response/fc2", d, d)?;
    dense_init(&mut params, &mut rng, "head/nli/fc1", 4 * d, d)?;
    dense_init(&mut params, &mut rng, "head/nli/fc2", d, 3)?;
    Ok(params)
}

// ---- forward passes --------------------------------------------------------

fn dense<T: Real>(sess: &mut Session<'_, T>, prefix: &str, x: NodeId) -> Result<NodeId> {
    let w = sess.param(&format!("{prefix}/w"))?;
    let b = sess.param(&format!("{prefix}/b"))?;
    let y = sess.graph.matmul(x, w, false)?;
    sess.graph.add(y, b)
}

fn check_batch(cfg: &EncoderConfig, batch: &TokenBatch) -> Result<()> {
    if batch.batch == 0 {
        return Err(Error::empty("encoder batch"));
    }
    if batch.seq > cfg.max_len {
        return Err(Error::invalid(format!(
            "sequence length {} exceeds max_len {}; truncate during tokenization",
            batch.seq, cfg.max_len
        )));
    }
    Ok(())
}

/// Shared-encoder sentence embedding for the configured architecture.
pub fn encode_batch<T: Real>(sess: &mut Session<'_, T>, cfg: &EncoderConfig, batch: &TokenBatch) -> Result<NodeId> {
    match cfg.arch {
        Arch::Transformer => encode_transformer(sess, cfg, batch),
        Arch::Cnn => encode_cnn(sess, cfg, batch),
        Arch::Dan => {
            // Sequence input treated as a bag when the shared encoder itself
            // is a DAN.
            let mask = sess.constant(batch.mask_tensor())?;
            let table = sess.param("enc/embed")?;
            let emb = sess.graph.embedding_lookup(table, &batch.ids, &[batch.batch, batch.seq])?;
            let mut h = sess.graph.masked_mean_pool(emb, mask)?;
            for i in 0..cfg.dan_hidden.len() {
                h = dense(sess, &format!("enc/ff{i}"), h)?;
                h = sess.graph.relu(h)?;
            }
            dense(sess, "enc/out", h)
        }
    }
}

/// Transformer encoder: token + learned positional embeddings, `layers`
/// post-norm blocks of masked self-attention and feed-forward with
/// residuals, then a masked mean over real token positions projected to
/// `out_dim`.
pub fn encode_transformer<T: Real>(sess: &mut Session<'_, T>, cfg: &EncoderConfig, batch: &TokenBatch) -> Result<NodeId> {
    check_batch(cfg, batch)?;
    let mask = sess.constant(batch.mask_tensor())?;
    let table = sess.param("enc/embed")?;
    let mut x = sess.graph.embedding_lookup(table, &batch.ids, &[batch.batch, batch.seq])?;
    let pos_table = sess.param("enc/pos")?;
    let pos_ids: Vec<usize> = (0..batch.batch).flat_map(|_| 0..batch.seq).collect();
    let pos = sess.graph.embedding_lookup(pos_table, &pos_ids, &[batch.batch, batch.seq])?;
    x = sess.graph.add(x, pos)?;
    for l in 0..cfg.layers {
        let q = dense(sess, &format!("enc/l{l}/attn/wq"), x)?;
        let k = dense(sess, &format!("enc/l{l}/attn/wk"), x)?;
        let v = dense(sess, &format!("enc/l{l}/attn/wv"), x)?;
        let att = sess.graph.scaled_dot_attention(q, k, v, mask, cfg.heads)?;
        let att = dense(sess, &format!("enc/l{l}/attn/wo"), att)?;
        let res = sess.graph.add(x, att)?;
        let g1 = sess.param(&format!("enc/l{l}/ln1/gamma"))?;
        let b1 = sess.param(&format!("enc/l{l}/ln1/beta"))?;
        x = sess.graph.layer_norm(res, g1, b1, LAYER_NORM_EPS)?;
        let h = dense(sess, &format!("enc/l{l}/ffn/fc1"), x)?;
        let h = sess.graph.relu(h)?;
        let h = dense(sess, &format!("enc/l{l}/ffn/fc2"), h)?;
        let res = sess.graph.add(x, h)?;
        let g2 = sess.param(&format!("enc/l{l}/ln2/gamma"))?;
        let b2 = sess.param(&format!("enc/l{l}/ln2/beta"))?;
        x = sess.graph.layer_norm(res, g2, b2, LAYER_NORM_EPS)?;
    }
    let pooled = sess.graph.masked_mean_pool(x, mask)?;
    dense(sess, "enc/out", pooled)
}

/// CNN encoder: per layer, padded positions are zeroed and same-padded
/// convolutions at each filter width are concatenated; after the stack, a
/// masked mean pool feeds two dense layers down to `out_dim`.
pub fn encode_cnn<T: Real>(sess: &mut Session<'_, T>, cfg: &EncoderConfig, batch: &TokenBatch) -> Result<NodeId> {
    check_batch(cfg, batch)?;
    let mask = sess.constant(batch.mask_tensor())?;
    let table = sess.param("enc/embed")?;
    let mut x = sess.graph.embedding_lookup(table, &batch.ids, &[batch.batch, batch.seq])?;
    for l in 0..cfg.cnn_layers {
        // Zero padded positions so convolution windows that straddle the
        // sequence tail see exactly the same zeros as same-padding inserts
        // beyond it; this is what makes encoding pad-invariant.
        let masked = sess.graph.mask_mul(x, mask)?;
        let mut paths = Vec::with_capacity(cfg.filter_widths.len());
        for &w in &cfg.filter_widths {
            let kernel = sess.param(&format!("enc/l{l}/conv{w}/kernel"))?;
            let bias = sess.param(&format!("enc/l{l}/conv{w}/bias"))?;
            let conv = sess.graph.conv1d(masked, kernel)?;
            let conv = sess.graph.add(conv, bias)?;
            paths.push(conv);
        }
        let cat = sess.graph.concat_last(&paths)?;
        x = sess.graph.relu(cat)?;
    }
    let pooled = sess.graph.masked_mean_pool(x, mask)?;
    let h = dense(sess, "enc/ff1", pooled)?;
    let h = sess.graph.relu(h)?;
    dense(sess, "enc/out", h)
}

/// DAN context encoder over token bags: fixed-order mean of context token
/// embeddings through a feed-forward stack. Rows marked absent in the batch
/// come out as all-zero vectors.
pub fn encode_dan_context<T: Real>(sess: &mut Session<'_, T>, cfg: &EncoderConfig, bags: &BagBatch) -> Result<NodeId> {
    let mask = sess.constant(Tensor::from_vec(
        &[bags.batch, bags.width],
        bags.mask.iter().map(|&m| T::from_f64(m)).collect(),
    )?)?;
    let table = sess.param("ctx/embed")?;
    let emb = sess.graph.embedding_lookup(table, &bags.ids, &[bags.batch, bags.width])?;
    let mut h = sess.graph.masked_mean_pool(emb, mask)?;
    for i in 0..cfg.dan_hidden.len() {
        h = dense(sess, &format!("ctx/ff{i}"), h)?;
        h = sess.graph.relu(h)?;
    }
    h = dense(sess, "ctx/out", h)?;
    if bags.present.iter().any(|&p| p == 0.0) {
        // Absent contexts contribute an all-zero embedding.
        let keep: Vec<T> = bags
            .present
            .iter()
            .flat_map(|&p| std::iter::repeat(T::from_f64(p)).take(cfg.out_dim))
            .collect();
        let keep = sess.constant(Tensor::from_vec(&[bags.batch, cfg.out_dim], keep)?)?;
        return sess.graph.mul(h, keep);
    }
    Ok(h)
}

/// Heads usable on top of the shared encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskHead {
    QaQuestion,
    QaResponse,
    Nli,
}

/// Question head: one hidden feed-forward layer back to `out_dim`.
pub fn qa_question_head<T: Real>(sess: &mut Session<'_, T>, x: NodeId) -> Result<NodeId> {
    let h = dense(sess, "head/question/fc1", x)?;
    let h = sess.graph.relu(h)?;
    dense(sess, "head/question/fc2", h)
}

/// Response head: concatenates the answer embedding with the DAN context
/// embedding, then one hidden feed-forward layer to `out_dim`.
pub fn qa_response_head<T: Real>(sess: &mut Session<'_, T>, answer: NodeId, context: NodeId) -> Result<NodeId> {
    let cat = sess.graph.concat_last(&[answer, context])?;
    let h = dense(sess, "head/response/fc1", cat)?;
    let h = sess.graph.relu(h)?;
    dense(sess, "head/response/fc2", h)
}

/// NLI head over premise `u` and hypothesis `v`:
/// `[u; v; |u - v|; u * v]` through a hidden layer to 3-class logits.
pub fn nli_head<T: Real>(sess: &mut Session<'_, T>, u: NodeId, v: NodeId) -> Result<NodeId> {
    let diff = sess.graph.sub(u, v)?;
    let absdiff = sess.graph.abs(diff)?;
    let prod = sess.graph.mul(u, v)?;
    let feats = sess.graph.concat_last(&[u, v, absdiff, prod])?;
    let h = dense(sess, "head/nli/fc1", feats)?;
    let h = sess.graph.relu(h)?;
    dense(sess, "head/nli/fc2", h)
}


// ---- inference helpers -------------------------------------------------------

/// Which embedding surface to produce when encoding raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signature {
    /// Plain shared-encoder sentence embedding (`u`, `v` of the similarity
    /// formula).
    Sentence,
    /// Shared encoder followed by the question head.
    Question,
    /// Shared encoder concatenated with the DAN context embedding through
    /// the response head.
    Response,
}

impl Signature {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Signature::Sentence),
            "question" => Ok(Signature::Question),
            "response" => Ok(Signature::Response),
            other => Err(Error::invalid(format!("unknown signature {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Signature::Sentence => "sentence",
            Signature::Question => "question",
            Signature::Response => "response",
        }
    }
}

/// Batched inference: embeds `texts` under the chosen signature in chunks of
/// `chunk` sentences. For [`Signature::Response`], `contexts` supplies one
/// optional context text per input; it must be `None` for the other
/// signatures.
pub fn embed_texts(
    params: &ParameterSet<f32>,
    cfg: &EncoderConfig,
    vocab: &crate::subword::SubwordVocabulary,
    texts: &[String],
    contexts: Option<&[Option<String>]>,
    signature: Signature,
    chunk: usize,
) -> Result<Vec<Vec<f64>>> {
    if signature != Signature::Response && contexts.is_some() {
        return Err(Error::invalid("contexts are only meaningful for the response signature"));
    }
    if let Some(ctx) = contexts {
        if ctx.len() != texts.len() {
            return Err(Error::invalid("one context (possibly empty) per text required"));
        }
    }
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(texts.len());
    let mut start = 0;
    while start < texts.len() {
        let end = (start + chunk).min(texts.len());
        let seqs = texts[start..end]
            .iter()
            .map(|t| crate::subword::encode_text(vocab, t, cfg.max_len))
            .collect::<Result<Vec<_>>>()?;
        let batch = TokenBatch::from_sequences(&seqs, vocab.pad_id())?;
        let mut sess = Session::new(params);
        let enc = encode_batch(&mut sess, cfg, &batch)?;
        let node = match signature {
            Signature::Sentence => enc,
            Signature::Question => qa_question_head(&mut sess, enc)?,
            Signature::Response => {
                let bags = texts[start..end]
                    .iter()
                    .enumerate()
                    .map(|(i, _)| match contexts.and_then(|c| c[start + i].as_deref()) {
                        Some(text) => Ok(crate::subword::encode_text(vocab, text, cfg.max_len)?.ids),
                        None => Ok(Vec::new()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let bags = BagBatch::from_bags(&bags, vocab.pad_id(), true)?;
                let ctx = encode_dan_context(&mut sess, cfg, &bags)?;
                qa_response_head(&mut sess, enc, ctx)?
            }
        };
        let value = sess.graph.value(node);
        for row in value.data().chunks(cfg.out_dim) {
            out.push(row.iter().map(|&x| x as f64).collect());
        }
        start = end;
    }
    Ok(out)
}
