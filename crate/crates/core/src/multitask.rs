//! Multi-task dual-encoder training: example loading, the in-batch softmax
//! ranking loss, the QA / translation / NLI task losses over one shared
//! encoder, and the round-robin training loop.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Adam, NodeId, ParameterSet, Real, Session};
use crate::encoders::{self, BagBatch, EncoderConfig, TokenBatch};
use crate::error::{Error, Result};
use crate::subword::{encode_text, SubwordVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Qa,
    Translation,
    Nli,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Qa => "qa",
            Task::Translation => "translation",
            Task::Nli => "nli",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NliLabel {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl NliLabel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "entailment" => Ok(NliLabel::Entailment),
            "contradiction" => Ok(NliLabel::Contradiction),
            "neutral" => Ok(NliLabel::Neutral),
            other => Err(Error::invalid(format!("unknown NLI label {other:?}"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One training record. Texts are non-empty; QA context is optional.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingExample {
    Qa {
        question: String,
        answer: String,
        context: Option<String>,
    },
    Translation {
        source: String,
        target: String,
        lang_pair: String,
    },
    Nli {
        premise: String,
        hypothesis: String,
        label: NliLabel,
    },
}

impl TrainingExample {
    pub fn task(&self) -> Task {
        match self {
            TrainingExample::Qa { .. } => Task::Qa,
            TrainingExample::Translation { .. } => Task::Translation,
            TrainingExample::Nli { .. } => Task::Nli,
        }
    }
}

#[derive(serde::Deserialize)]
struct RawRecord {
    task: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    lang_pair: Option<String>,
    #[serde(default)]
    premise: Option<String>,
    #[serde(default)]
    hypothesis: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

/// Parses JSON-lines training data. Unknown fields are ignored; an unknown
/// task or a missing/empty required field rejects the record with its line
/// number.
pub fn parse_jsonl<R: BufRead>(reader: R, file: &str) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(file, lineno, format!("bad json: {e}")))?;
        let need = |field: Option<String>, name: &str| -> Result<String> {
            match field {
                Some(s) if !s.trim().is_empty() => Ok(s),
                Some(_) => Err(Error::parse(file, lineno, format!("empty field {name:?}"))),
                None => Err(Error::parse(file, lineno, format!("missing field {name:?}"))),
            }
        };
        let example = match raw.task.as_str() {
            "qa" => TrainingExample::Qa {
                question: need(raw.question, "question")?,
                answer: need(raw.answer, "answer")?,
                context: match raw.context {
                    Some(c) if !c.trim().is_empty() => Some(c),
                    _ => None,
                },
            },
            "translation" => TrainingExample::Translation {
                source: need(raw.source, "source")?,
                target: need(raw.target, "target")?,
                lang_pair: raw.lang_pair.unwrap_or_else(|| "und-und".to_string()),
            },
            "nli" => TrainingExample::Nli {
                premise: need(raw.premise, "premise")?,
                hypothesis: need(raw.hypothesis, "hypothesis")?,
                label: NliLabel::parse(&need(raw.label, "label")?)
                    .map_err(|e| Error::parse(file, lineno, e.to_string()))?,
            },
            other => {
                return Err(Error::parse(file, lineno, format!("unknown task {other:?}")));
            }
        };
        out.push(example);
    }
    Ok(out)
}

pub fn load_jsonl(path: &std::path::Path) -> Result<Vec<TrainingExample>> {
    let file = std::fs::File::open(path)?;
    parse_jsonl(std::io::BufReader::new(file), &path.display().to_string())
}

/// One JSON-lines record in the training-data format.
pub fn to_json_record(example: &TrainingExample) -> Result<String> {
    let value = match example {
        TrainingExample::Qa {
            question,
            answer,
            context,
        } => match context {
            Some(c) => serde_json::json!({"task": "qa", "question": question, "answer": answer, "context": c}),
            None => serde_json::json!({"task": "qa", "question": question, "answer": answer}),
        },
        TrainingExample::Translation {
            source,
            target,
            lang_pair,
        } => serde_json::json!({"task": "translation", "source": source, "target": target, "lang_pair": lang_pair}),
        TrainingExample::Nli {
            premise,
            hypothesis,
            label,
        } => {
            let label = match label {
                NliLabel::Entailment => "entailment",
                NliLabel::Contradiction => "contradiction",
                NliLabel::Neutral => "neutral",
            };
            serde_json::json!({"task": "nli", "premise": premise, "hypothesis": hypothesis, "label": label})
        }
    };
    serde_json::to_string(&value).map_err(|e| Error::invalid(format!("serialize record: {e}")))
}

/// Deterministic shuffled split into train/dev. `floor(n * train_fraction)`
/// examples go to train; the partitions are disjoint and exhaustive.
pub fn split_train_dev<E: Clone>(examples: &[E], train_fraction: f64, seed: u64) -> Result<(Vec<E>, Vec<E>)> {
    if examples.is_empty() {
        return Err(Error::empty("dataset to split"));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!("train_fraction {train_fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (examples.len() as f64 * train_fraction).floor() as usize;
    let train = order[..n_train].iter().map(|&i| examples[i].clone()).collect();
    let dev = order[n_train..].iter().map(|&i| examples[i].clone()).collect();
    Ok((train, dev))
}

/// In-batch softmax ranking loss over row-aligned source/target embeddings:
/// score matrix `S = source x target^T`, loss is the mean over rows of
/// `-log softmax(S_i)[i]`, each true pair ranked against the other n-1
/// in-batch targets.
pub fn in_batch_ranking_loss<T: Real>(sess: &mut Session<'_, T>, source: NodeId, target: NodeId) -> Result<NodeId> {
    let (ss, ts) = (
        sess.graph.value(source).shape().to_vec(),
        sess.graph.value(target).shape().to_vec(),
    );
    if ss.len() != 2 || ss != ts {
        return Err(Error::shape(
            "in_batch_ranking_loss",
            format!("{ss:?} vs {ts:?}, want matching (n, d)"),
        ));
    }
    let scores = sess.graph.matmul(source, target, true)?;
    let labels: Vec<usize> = (0..ss[0]).collect();
    let per_row = sess.graph.cross_entropy_from_logits(scores, &labels)?;
    sess.graph.mean_all(per_row)
}

fn tokenize_batch(vocab: &SubwordVocabulary, texts: &[&str], max_len: usize) -> Result<TokenBatch> {
    let seqs = texts
        .iter()
        .map(|t| encode_text(vocab, t, max_len))
        .collect::<Result<Vec<_>>>()?;
    TokenBatch::from_sequences(&seqs, vocab.pad_id())
}

fn context_bags(vocab: &SubwordVocabulary, contexts: &[Option<&str>], max_len: usize) -> Result<BagBatch> {
    let bags = contexts
        .iter()
        .map(|c| match c {
            Some(text) => Ok(encode_text(vocab, text, max_len)?.ids),
            None => Ok(Vec::new()),
        })
        .collect::<Result<Vec<_>>>()?;
    BagBatch::from_bags(&bags, vocab.pad_id(), true)
}

/// QA loss: question through the shared encoder and question head; answer
/// through the shared encoder, concatenated with the DAN context embedding
/// in the response head; then the in-batch ranking loss. Missing context
/// uses an all-zero context embedding.
pub fn qa_loss<T: Real>(
    sess: &mut Session<'_, T>,
    cfg: &EncoderConfig,
    vocab: &SubwordVocabulary,
    questions: &[&str],
    answers: &[&str],
    contexts: &[Option<&str>],
) -> Result<NodeId> {
    if questions.len() != answers.len() || questions.len() != contexts.len() {
        return Err(Error::invalid("qa_loss: parallel lists differ in length"));
    }
    let qb = tokenize_batch(vocab, questions, cfg.max_len)?;
    let ab = tokenize_batch(vocab, answers, cfg.max_len)?;
    let bags = context_bags(vocab, contexts, cfg.max_len)?;
    let q = encoders::encode_batch(sess, cfg, &qb)?;
    let q = encoders::qa_question_head(sess, q)?;
    let a = encoders::encode_batch(sess, cfg, &ab)?;
    let c = encoders::encode_dan_context(sess, cfg, &bags)?;
    let r = encoders::qa_response_head(sess, a, c)?;
    in_batch_ranking_loss(sess, q, r)
}

/// Translation ranking loss: both sides through the shared encoder.
pub fn translation_loss<T: Real>(
    sess: &mut Session<'_, T>,
    cfg: &EncoderConfig,
    vocab: &SubwordVocabulary,
    sources: &[&str],
    targets: &[&str],
) -> Result<NodeId> {
    if sources.len() != targets.len() {
        return Err(Error::invalid("translation_loss: parallel lists differ in length"));
    }
    let sb = tokenize_batch(vocab, sources, cfg.max_len)?;
    let tb = tokenize_batch(vocab, targets, cfg.max_len)?;
    let s = encoders::encode_batch(sess, cfg, &sb)?;
    let t = encoders::encode_batch(sess, cfg, &tb)?;
    in_batch_ranking_loss(sess, s, t)
}

/// NLI loss: premise/hypothesis through the shared encoder, the NLI head's
/// 3-class logits against the labels with cross-entropy.
pub fn nli_loss<T: Real>(
    sess: &mut Session<'_, T>,
    cfg: &EncoderConfig,
    vocab: &SubwordVocabulary,
    premises: &[&str],
    hypotheses: &[&str],
    labels: &[NliLabel],
) -> Result<NodeId> {
    if premises.len() != hypotheses.len() || premises.len() != labels.len() {
        return Err(Error::invalid("nli_loss: parallel lists differ in length"));
    }
    let pb = tokenize_batch(vocab, premises, cfg.max_len)?;
    let hb = tokenize_batch(vocab, hypotheses, cfg.max_len)?;
    let u = encoders::encode_batch(sess, cfg, &pb)?;
    let v = encoders::encode_batch(sess, cfg, &hb)?;
    let logits = encoders::nli_head(sess, u, v)?;
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let per_row = sess.graph.cross_entropy_from_logits(logits, &idx)?;
    sess.graph.mean_all(per_row)
}

/// Training-run settings beyond the encoder architecture.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Final parameters plus bookkeeping from a training run.
pub struct TrainState {
    pub params: ParameterSet<f32>,
    pub step: u64,
    pub seed: u64,
    /// (step, loss) per task, in the order steps were taken.
    pub curves: BTreeMap<Task, Vec<(u64, f32)>>,
}

impl TrainState {
    pub fn last_loss(&self, task: Task) -> Option<f32> {
        self.curves.get(&task).and_then(|c| c.last()).map(|&(_, l)| l)
    }
}

/// Cycles through one task's examples in seeded shuffled order, reshuffling
/// at each epoch boundary.
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Sampler { order, cursor: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        for _ in 0..size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

/// Multi-task training: strict round-robin over the present tasks in the
/// order (qa, translation, nli), one Adam step per batch. Deterministic for
/// a given seed and single thread.
pub fn train(cfg: &TrainConfig, examples: &[TrainingExample], vocab: &SubwordVocabulary) -> Result<TrainState> {
    let mut qa: Vec<&TrainingExample> = Vec::new();
    let mut translation: Vec<&TrainingExample> = Vec::new();
    let mut nli: Vec<&TrainingExample> = Vec::new();
    for ex in examples {
        match ex.task() {
            Task::Qa => qa.push(ex),
            Task::Translation => translation.push(ex),
            Task::Nli => nli.push(ex),
        }
    }
    let mut roster: Vec<(Task, Vec<&TrainingExample>)> = Vec::new();
    for (task, list) in [(Task::Qa, qa), (Task::Translation, translation), (Task::Nli, nli)] {
        if !list.is_empty() {
            roster.push((task, list));
        }
    }
    if roster.is_empty() {
        return Err(Error::empty("training data"));
    }
    if cfg.batch_size < 2 && roster.iter().any(|(t, _)| matches!(t, Task::Qa | Task::Translation)) {
        return Err(Error::invalid(
            "batch_size must be at least 2 for ranking tasks (a single pair has no in-batch negatives)",
        ));
    }

    let mut params = encoders::init_params::<f32>(&cfg.encoder, cfg.seed)?;
    let mut adam = Adam::new();
    let mut samplers: BTreeMap<Task, Sampler> = roster
        .iter()
        .map(|(task, list)| (*task, Sampler::new(list.len(), cfg.seed ^ (*task as u64 + 1))))
        .collect();
    let mut curves: BTreeMap<Task, Vec<(u64, f32)>> = roster.iter().map(|(t, _)| (*t, Vec::new())).collect();

    for step in 1..=cfg.steps {
        let (task, list) = &roster[((step - 1) % roster.len() as u64) as usize];
        let picks = samplers
            .get_mut(task)
            .expect("sampler exists for every roster task")
            .next_batch(cfg.batch_size.min(list.len()).max(1));
        let mut sess = Session::new(&params);
        let loss_node = match task {
            Task::Qa => {
                let mut questions = Vec::new();
                let mut answers = Vec::new();
                let mut contexts = Vec::new();
                for &i in &picks {
                    let TrainingExample::Qa { question, answer, context } = list[i] else {
                        unreachable!("qa roster holds qa examples");
                    };
                    questions.push(question.as_str());
                    answers.push(answer.as_str());
                    contexts.push(context.as_deref());
                }
                qa_loss(&mut sess, &cfg.encoder, vocab, &questions, &answers, &contexts)?
            }
            Task::Translation => {
                let mut sources = Vec::new();
                let mut targets = Vec::new();
                for &i in &picks {
                    let TrainingExample::Translation { source, target, .. } = list[i] else {
                        unreachable!("translation roster holds translation examples");
                    };
                    sources.push(source.as_str());
                    targets.push(target.as_str());
                }
                translation_loss(&mut sess, &cfg.encoder, vocab, &sources, &targets)?
            }
            Task::Nli => {
                let mut premises = Vec::new();
                let mut hypotheses = Vec::new();
                let mut labels = Vec::new();
                for &i in &picks {
                    let TrainingExample::Nli { premise, hypothesis, label } = list[i] else {
                        unreachable!("nli roster holds nli examples");
                    };
                    premises.push(premise.as_str());
                    hypotheses.push(hypothesis.as_str());
                    labels.push(*label);
                }
                nli_loss(&mut sess, &cfg.encoder, vocab, &premises, &hypotheses, &labels)?
            }
        };
        let loss = sess.graph.value(loss_node).item()?;
        let grads = sess.gradients(loss_node)?;
        adam.step(&mut params, &grads, cfg.lr, step)?;
        curves.get_mut(task).expect("curve exists").push((step, loss));
    }

    Ok(TrainState {
        params,
        step: cfg.steps,
        seed: cfg.seed,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;
    use crate::encoders::Arch;
    use crate::subword::train_vocab;

    fn tiny_cfg(vocab_size: usize) -> EncoderConfig {
        let mut cfg = EncoderConfig::desk(Arch::Transformer, vocab_size);
        cfg.embed_dim = 8;
        cfg.out_dim = 8;
        cfg.hidden = 8;
        cfg.filter = 16;
        cfg.heads = 2;
        cfg.layers = 1;
        cfg.dan_hidden = vec![8];
        cfg
    }

    fn test_vocab() -> SubwordVocabulary {
        train_vocab(
            &[
                "the cat sat on the mat",
                "a dog ran in the park",
                "ein hund lief im park",
                "die katze sass auf der matte",
                "what color is it",
                "blue red green story about",
            ],
            80,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn jsonl_parsing_handles_all_tasks_and_rejects_bad_records() {
        let data = concat!(
            r#"{"task":"translation","source":"hello","target":"hallo","lang_pair":"en-de"}"#, "\n",
            r#"{"task":"qa","question":"why","answer":"because","context":"a story","extra_field":1}"#, "\n",
            r#"{"task":"qa","question":"why","answer":"because"}"#, "\n",
            r#"{"task":"nli","premise":"p","hypothesis":"h","label":"neutral"}"#, "\n",
        );
        let parsed = parse_jsonl(data.as_bytes(), "test.jsonl").unwrap();
        assert_eq!(parsed.len(), 4);
        assert_eq!(parsed[0].task(), Task::Translation);
        assert!(matches!(&parsed[1], TrainingExample::Qa { context: Some(_), .. }));
        assert!(matches!(&parsed[2], TrainingExample::Qa { context: None, .. }));

        let bad_task = r#"{"task":"summarize","source":"x","target":"y"}"#;
        let err = parse_jsonl(bad_task.as_bytes(), "test.jsonl").unwrap_err();
        assert!(err.to_string().contains("test.jsonl:1"), "{err}");

        let empty_text = r#"{"task":"translation","source":"","target":"y"}"#;
        assert!(parse_jsonl(empty_text.as_bytes(), "t").is_err());

        let bad_label = r#"{"task":"nli","premise":"p","hypothesis":"h","label":"maybe"}"#;
        assert!(parse_jsonl(bad_label.as_bytes(), "t").is_err());
    }

    #[test]
    fn split_is_deterministic_disjoint_and_exhaustive() {
        let examples: Vec<u32> = (0..10).collect();
        let (train, dev) = split_train_dev(&examples, 0.9, 42).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(dev.len(), 1);
        let (train2, dev2) = split_train_dev(&examples, 0.9, 42).unwrap();
        assert_eq!(train, train2);
        assert_eq!(dev, dev2);
        let mut union: Vec<u32> = train.iter().chain(dev.iter()).copied().collect();
        union.sort_unstable();
        assert_eq!(union, examples);
    }

    #[test]
    fn ranking_loss_trivial_values() {
        let params = ParameterSet::<f64>::new();
        // n = 1: softmax over a single candidate is certain.
        let mut sess = Session::new(&params);
        let s = sess.constant(Tensor::from_vec(&[1, 3], vec![0.3, -0.2, 0.9]).unwrap()).unwrap();
        let loss = in_batch_ranking_loss(&mut sess, s, s).unwrap();
        assert_eq!(sess.graph.value(loss).item().unwrap(), 0.0);
        // n = 2 with all four embeddings identical: uniform softmax over 2.
        let mut sess = Session::new(&params);
        let e = sess.constant(Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap()).unwrap();
        let loss = in_batch_ranking_loss(&mut sess, e, e).unwrap();
        assert!((sess.graph.value(loss).item().unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ranking_loss_matches_scalar_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (n, d) = (8, 5);
        let src: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Independent oracle: explicit per-row log-sum-exp loop.
        let mut expect = 0.0;
        for i in 0..n {
            let mut row = vec![0.0f64; n];
            for (j, r) in row.iter_mut().enumerate() {
                for c in 0..d {
                    *r += src[i * d + c] * tgt[j * d + c];
                }
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            expect += lse - row[i];
        }
        expect /= n as f64;
        let params = ParameterSet::<f64>::new();
        let mut sess = Session::new(&params);
        let s = sess.constant(Tensor::from_vec(&[n, d], src).unwrap()).unwrap();
        let t = sess.constant(Tensor::from_vec(&[n, d], tgt).unwrap()).unwrap();
        let loss = in_batch_ranking_loss(&mut sess, s, t).unwrap();
        assert!((sess.graph.value(loss).item().unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn ranking_loss_is_invariant_under_pair_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let (n, d) = (6, 4);
        let src: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permute = |data: &[f64]| -> Vec<f64> {
            perm.iter().flat_map(|&i| data[i * d..(i + 1) * d].to_vec()).collect()
        };
        let params = ParameterSet::<f64>::new();
        let eval = |s_data: Vec<f64>, t_data: Vec<f64>| -> f64 {
            let mut sess = Session::new(&params);
            let s = sess.constant(Tensor::from_vec(&[n, d], s_data).unwrap()).unwrap();
            let t = sess.constant(Tensor::from_vec(&[n, d], t_data).unwrap()).unwrap();
            let loss = in_batch_ranking_loss(&mut sess, s, t).unwrap();
            sess.graph.value(loss).item().unwrap()
        };
        let base = eval(src.clone(), tgt.clone());
        let permuted = eval(permute(&src), permute(&tgt));
        assert!((base - permuted).abs() < 1e-9);
    }

    #[test]
    fn qa_loss_single_pair_is_zero_and_zeroed_context_encoder_ignores_context() {
        let vocab = test_vocab();
        let cfg = tiny_cfg(vocab.size());
        let params = encoders::init_params::<f64>(&cfg, 3).unwrap();
        let mut sess = Session::new(&params);
        let loss = qa_loss(
            &mut sess,
            &cfg,
            &vocab,
            &["what color is it"],
            &["blue"],
            &[Some("a story")],
        )
        .unwrap();
        assert_eq!(sess.graph.value(loss).item().unwrap(), 0.0);

        // Zero every context-encoder parameter: the loss may not depend on
        // the context text any more.
        let mut zeroed = params.clone();
        let names: Vec<String> = zeroed.names().filter(|n| n.starts_with("ctx/")).cloned().collect();
        for name in names {
            let t = zeroed.get_mut(&name).unwrap();
            *t = Tensor::zeros(t.shape());
        }
        let eval = |ctx: &str| -> f64 {
            let mut sess = Session::new(&zeroed);
            let loss = qa_loss(
                &mut sess,
                &cfg,
                &vocab,
                &["what color is it", "the cat sat"],
                &["blue", "red"],
                &[Some(ctx), Some(ctx)],
            )
            .unwrap();
            sess.graph.value(loss).item().unwrap()
        };
        assert_eq!(eval("a story about red"), eval("the park"));
    }

    #[test]
    fn nli_uniform_logits_cost_ln3() {
        let vocab = test_vocab();
        let cfg = tiny_cfg(vocab.size());
        let mut params = encoders::init_params::<f64>(&cfg, 4).unwrap();
        for name in ["head/nli/fc2/w", "head/nli/fc2/b"] {
            let t = params.get_mut(name).unwrap();
            *t = Tensor::zeros(t.shape());
        }
        let mut sess = Session::new(&params);
        let loss = nli_loss(
            &mut sess,
            &cfg,
            &vocab,
            &["the cat sat", "a dog ran"],
            &["the mat", "the park"],
            &[NliLabel::Entailment, NliLabel::Contradiction],
        )
        .unwrap();
        assert!((sess.graph.value(loss).item().unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nli_path_passes_finite_difference_check() {
        let vocab = train_vocab(&["aa bb", "bb cc"], 12, 1.0).unwrap();
        let mut cfg = tiny_cfg(vocab.size());
        cfg.embed_dim = 4;
        cfg.out_dim = 4;
        cfg.hidden = 4;
        cfg.filter = 6;
        cfg.dan_hidden = vec![4];
        let params = encoders::init_params::<f64>(&cfg, 5).unwrap();
        let report = crate::autograd::gradcheck::check(
            &params,
            |sess| {
                nli_loss(
                    sess,
                    &cfg,
                    &vocab,
                    &["aa bb", "bb"],
                    &["bb cc", "aa"],
                    &[NliLabel::Neutral, NliLabel::Entailment],
                )
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn separable_nli_toy_set_trains_to_low_loss() {
        let corpus = ["aa bb cc", "dd ee ff", "gg hh ii"];
        let vocab = train_vocab(&corpus, 40, 1.0).unwrap();
        let cfg = TrainConfig {
            encoder: tiny_cfg(vocab.size()),
            steps: 400,
            batch_size: 3,
            lr: 3e-3,
            seed: 11,
        };
        let examples = vec![
            TrainingExample::Nli {
                premise: "aa bb".into(),
                hypothesis: "aa bb cc".into(),
                label: NliLabel::Entailment,
            },
            TrainingExample::Nli {
                premise: "dd ee".into(),
                hypothesis: "ff".into(),
                label: NliLabel::Contradiction,
            },
            TrainingExample::Nli {
                premise: "gg hh".into(),
                hypothesis: "ii".into(),
                label: NliLabel::Neutral,
            },
        ];
        let state = train(&cfg, &examples, &vocab).unwrap();
        let last = state.last_loss(Task::Nli).unwrap();
        assert!(last < 0.05, "final nli loss {last}");
    }

    #[test]
    fn training_with_zero_steps_keeps_initial_parameters() {
        let vocab = test_vocab();
        let cfg = TrainConfig {
            encoder: tiny_cfg(vocab.size()),
            steps: 0,
            batch_size: 2,
            lr: 1e-3,
            seed: 9,
        };
        let examples = vec![TrainingExample::Translation {
            source: "the cat".into(),
            target: "die katze".into(),
            lang_pair: "en-de".into(),
        }];
        let state = train(&cfg, &examples, &vocab).unwrap();
        let init = encoders::init_params::<f32>(&cfg.encoder, cfg.seed).unwrap();
        assert_eq!(state.params, init);
    }

    #[test]
    fn ranking_tasks_reject_batch_size_one() {
        let vocab = test_vocab();
        let cfg = TrainConfig {
            encoder: tiny_cfg(vocab.size()),
            steps: 1,
            batch_size: 1,
            lr: 1e-3,
            seed: 9,
        };
        let examples = vec![TrainingExample::Translation {
            source: "the cat".into(),
            target: "die katze".into(),
            lang_pair: "en-de".into(),
        }];
        assert!(train(&cfg, &examples, &vocab).is_err());
    }

    #[test]
    fn translation_step_leaves_qa_head_gradients_exactly_zero() {
        let vocab = test_vocab();
        let cfg = tiny_cfg(vocab.size());
        let params = encoders::init_params::<f32>(&cfg, 13).unwrap();
        let mut sess = Session::new(&params);
        let loss = translation_loss(
            &mut sess,
            &cfg,
            &vocab,
            &["the cat sat", "a dog ran"],
            &["die katze sass", "ein hund lief"],
        )
        .unwrap();
        let grads = sess.gradients(loss).unwrap();
        for (name, grad) in &grads {
            let zero = grad.data().iter().all(|&g| g == 0.0);
            if name.starts_with("head/") || name.starts_with("ctx/") {
                assert!(zero, "{name} should have zero gradient");
            }
        }
        let shared_moves = grads
            .iter()
            .filter(|(n, _)| n.starts_with("enc/"))
            .any(|(_, g)| g.data().iter().any(|&x| x != 0.0));
        assert!(shared_moves, "shared encoder gradients must be nonzero");
    }

    #[test]
    fn round_robin_gives_each_task_equal_batches() {
        let vocab = test_vocab();
        let cfg = TrainConfig {
            encoder: tiny_cfg(vocab.size()),
            steps: 12,
            batch_size: 2,
            lr: 1e-3,
            seed: 21,
        };
        let examples = vec![
            TrainingExample::Qa {
                question: "what color is it".into(),
                answer: "blue".into(),
                context: None,
            },
            TrainingExample::Qa {
                question: "what color".into(),
                answer: "red".into(),
                context: Some("story".into()),
            },
            TrainingExample::Translation {
                source: "the cat".into(),
                target: "die katze".into(),
                lang_pair: "en-de".into(),
            },
            TrainingExample::Translation {
                source: "a dog".into(),
                target: "ein hund".into(),
                lang_pair: "en-de".into(),
            },
            TrainingExample::Nli {
                premise: "the cat sat".into(),
                hypothesis: "the mat".into(),
                label: NliLabel::Neutral,
            },
            TrainingExample::Nli {
                premise: "a dog ran".into(),
                hypothesis: "in the park".into(),
                label: NliLabel::Entailment,
            },
        ];
        let state = train(&cfg, &examples, &vocab).unwrap();
        for task in [Task::Qa, Task::Translation, Task::Nli] {
            assert_eq!(state.curves[&task].len(), 4, "{task:?}");
        }
    }

    #[test]
    fn translation_step_changes_subsequent_qa_loss() {
        let vocab = test_vocab();
        let enc = tiny_cfg(vocab.size());
        let qa_eval = |params: &ParameterSet<f32>| -> f32 {
            let mut sess = Session::new(params);
            let loss = qa_loss(
                &mut sess,
                &enc,
                &vocab,
                &["what color is it", "the cat"],
                &["blue", "red"],
                &[None, None],
            )
            .unwrap();
            sess.graph.value(loss).item().unwrap()
        };
        let cfg = TrainConfig {
            encoder: enc.clone(),
            steps: 1,
            batch_size: 2,
            lr: 1e-2,
            seed: 31,
        };
        let examples = vec![
            TrainingExample::Translation {
                source: "the cat sat".into(),
                target: "die katze sass".into(),
                lang_pair: "en-de".into(),
            },
            TrainingExample::Translation {
                source: "a dog ran".into(),
                target: "ein hund lief".into(),
                lang_pair: "en-de".into(),
            },
        ];
        let before = qa_eval(&encoders::init_params::<f32>(&enc, cfg.seed).unwrap());
        let state = train(&cfg, &examples, &vocab).unwrap();
        let after = qa_eval(&state.params);
        assert_ne!(before, after, "shared parameters must couple the tasks");
    }
}
