//! Command implementations. All metric math stays in `muse_core::retrieval`;
//! this layer only moves data between files and the library.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use muse_core::autograd::checkpoint::{self, Checkpoint};
use muse_core::encoders::{self, Signature};
use muse_core::multitask::{self, TrainConfig, TrainingExample};
use muse_core::retrieval::{self, EmbeddingIndex, Metric, ScoredResult};
use muse_core::subword::{self, SubwordVocabulary};
use muse_core::taskgen::{self, ReqaLevel, RetrievalTaskSpec};
use muse_core::transfer::{self, ProbeConfig};
use muse_core::{Arch, EncoderConfig, ParameterSet};

use crate::args;
use crate::config::{defaults, KvConfig};
use crate::report::{self, MetricEntry};
use crate::UsageError;

// ---- shared plumbing --------------------------------------------------------

pub struct Model {
    pub config: EncoderConfig,
    pub params: ParameterSet<f32>,
    pub vocab: SubwordVocabulary,
}

pub fn load_model(model: &Path, vocab: &Path) -> Result<Model> {
    let ckpt: Checkpoint<f32> = checkpoint::load_from_path(model)
        .with_context(|| format!("loading checkpoint {}", model.display()))?;
    let config = EncoderConfig::from_kv(&ckpt.config_text, &model.display().to_string())?;
    let loaded = subword::load_from_path(vocab)?;
    if config.vocab_size != loaded.size() {
        bail!(muse_core::Error::invalid(format!(
            "checkpoint was trained with a vocabulary of {} pieces but {} holds {}",
            config.vocab_size,
            vocab.display(),
            loaded.size()
        )));
    }
    let vocab = loaded;
    Ok(Model {
        config,
        params: ckpt.params,
        vocab,
    })
}

/// Chunked embedding with optional fan-out across a local thread pool.
/// Results are identical for any thread count: the chunking is fixed and
/// each chunk is independent.
pub fn embed_parallel(
    model: &Model,
    texts: &[String],
    contexts: Option<&[Option<String>]>,
    signature: Signature,
    chunk: usize,
    threads: usize,
) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    if threads <= 1 {
        return Ok(encoders::embed_texts(
            &model.params,
            &model.config,
            &model.vocab,
            texts,
            contexts,
            signature,
            chunk,
        )?);
    }
    let chunk = chunk.max(1);
    let jobs: Vec<(usize, usize)> = (0..texts.len())
        .step_by(chunk)
        .map(|s| (s, (s + chunk).min(texts.len())))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let chunks: Vec<Result<Vec<Vec<f64>>>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(s, e)| {
                let ctx_slice = contexts.map(|c| c[s..e].to_vec());
                Ok(encoders::embed_texts(
                    &model.params,
                    &model.config,
                    &model.vocab,
                    &texts[s..e],
                    ctx_slice.as_deref(),
                    signature,
                    chunk,
                )?)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(texts.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

// ---- train-vocab ------------------------------------------------------------

pub fn train_vocab(a: &args::TrainVocabArgs, kv: &KvConfig) -> Result<()> {
    let size = kv.resolve(a.size, "vocab_size", defaults::VOCAB_SIZE)?;
    let coverage = kv.resolve(a.coverage, "coverage", defaults::COVERAGE)?;
    let corpus = read_lines(&a.input)?;
    let vocab = subword::train_vocab(&corpus, size, coverage)?;
    subword::save_to_path(&vocab, &a.output)?;
    println!(
        "trained vocabulary: {} pieces, {} merges -> {}",
        vocab.size(),
        vocab.merges().len(),
        a.output.display()
    );
    Ok(())
}

// ---- train --------------------------------------------------------------------

fn resolve_encoder_config(
    arch: Option<&str>,
    preset: Option<&str>,
    encoder_config: Option<&Path>,
    vocab_size: usize,
) -> Result<EncoderConfig> {
    if let Some(path) = encoder_config {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = EncoderConfig::from_kv(&text, &path.display().to_string())?;
        cfg.vocab_size = vocab_size;
        cfg.validate()?;
        return Ok(cfg);
    }
    let arch = Arch::parse(arch.unwrap_or("transformer"))?;
    Ok(EncoderConfig::preset(preset.unwrap_or("desk"), arch, vocab_size)?)
}

pub fn train(a: &args::TrainArgs, kv: &KvConfig) -> Result<()> {
    let vocab = subword::load_from_path(&a.vocab)?;
    let examples = multitask::load_jsonl(&a.data)?;
    if examples.is_empty() {
        bail!(muse_core::Error::empty("training data"));
    }
    let train_fraction = kv.resolve(a.train_fraction, "train_fraction", defaults::TRAIN_FRACTION)?;
    let seed = kv.resolve(a.seed, "seed", defaults::SEED)?;
    let (train_split, dev_split) = multitask::split_train_dev(&examples, train_fraction, seed)?;
    if let Some(dev_out) = &a.dev_out {
        let mut text = String::new();
        for ex in &dev_split {
            text.push_str(&multitask::to_json_record(ex)?);
            text.push('\n');
        }
        std::fs::write(dev_out, text)?;
    }
    let encoder = resolve_encoder_config(
        a.arch.as_deref(),
        a.preset.as_deref(),
        a.encoder_config.as_deref(),
        vocab.size(),
    )?;
    let cfg = TrainConfig {
        encoder,
        steps: kv.resolve(a.steps, "steps", defaults::STEPS)?,
        batch_size: kv.resolve(a.batch_size, "batch_size", defaults::BATCH_SIZE)?,
        lr: kv.resolve(a.lr, "lr", defaults::LR)?,
        seed,
    };
    let state = multitask::train(&cfg, &train_split, &vocab)?;
    checkpoint::save_to_path(
        &a.output,
        &Checkpoint {
            config_text: cfg.encoder.to_kv(),
            step: state.step,
            params: state.params,
        },
    )?;
    println!(
        "trained {} steps on {} examples ({} held out) -> {}",
        state.step,
        train_split.len(),
        dev_split.len(),
        a.output.display()
    );
    for (task, curve) in &state.curves {
        if let Some((step, loss)) = curve.last() {
            println!("  {}: final loss {loss:.4} at step {step}", task.as_str());
        }
    }
    Ok(())
}

// ---- encode --------------------------------------------------------------------

pub fn encode(a: &args::EncodeArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let model = load_model(&a.model, &a.vocab)?;
    let signature = Signature::parse(&a.signature)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let lines = read_lines(&a.input)?;
    let file = a.input.display().to_string();
    let mut texts = Vec::with_capacity(lines.len());
    let mut contexts = Vec::with_capacity(lines.len());
    for (lineno, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            bail!(muse_core::Error::parse(&file, lineno + 1, "blank input line"));
        }
        if signature == Signature::Response {
            let (text, ctx) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            if text.trim().is_empty() {
                bail!(muse_core::Error::parse(&file, lineno + 1, "empty text before context"));
            }
            texts.push(text.to_string());
            contexts.push(if ctx.trim().is_empty() { None } else { Some(ctx.to_string()) });
        } else {
            texts.push(line.clone());
        }
    }
    let ctx_arg = (signature == Signature::Response).then_some(contexts.as_slice());
    let embeddings = embed_parallel(&model, &texts, ctx_arg, signature, chunk, threads)?;
    let ids: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
    report::write_embeddings(&a.output, &ids, &embeddings)?;
    println!("encoded {} texts -> {}", texts.len(), a.output.display());
    Ok(())
}

// ---- index / search --------------------------------------------------------------

pub fn index(a: &args::IndexArgs) -> Result<()> {
    let rows = report::read_embeddings(&a.embeddings)?;
    let (ids, vectors): (Vec<String>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    // Validate through the real index builder before writing.
    EmbeddingIndex::build(ids.iter().cloned().zip(vectors.iter().cloned()).collect())?;
    report::write_index(&a.output, ids, vectors)?;
    println!("indexed -> {}", a.output.display());
    Ok(())
}

pub fn search(a: &args::SearchArgs, kv: &KvConfig) -> Result<()> {
    let file = report::read_index(&a.index)?;
    let index = EmbeddingIndex::build(file.ids.into_iter().zip(file.vectors).collect())?;
    let metric = Metric::parse(&kv.resolve(a.metric.clone(), "metric", "dot".to_string())?)?;
    let k = kv.resolve(a.k, "k", defaults::TOP_K)?;
    let queries = report::read_embeddings(&a.queries)?;
    let mut results = BTreeMap::new();
    for (qid, vector) in queries {
        results.insert(qid, index.top_k(&vector, k, metric)?);
    }
    report::write_results(&a.output, &results)?;
    println!("searched {} queries -> {}", results.len(), a.output.display());
    Ok(())
}

// ---- shared dense evaluation over a task spec -------------------------------------

struct TaskEvaluation {
    results: BTreeMap<String, Vec<ScoredResult>>,
    entries: Vec<MetricEntry>,
}

/// Encode queries and candidates, run exact retrieval, compute metrics.
/// `qa_mode` routes queries through the question head and candidates
/// through the response head with their context feature.
#[allow(clippy::too_many_arguments)]
fn evaluate_dense(
    task: &RetrievalTaskSpec,
    task_label: &str,
    model: &Model,
    qa_mode: bool,
    metric: Metric,
    k: usize,
    cutoff: usize,
    chunk: usize,
    threads: usize,
) -> Result<TaskEvaluation> {
    task.validate()?;
    let cand_ids: Vec<String> = task.candidates.keys().cloned().collect();
    let cand_texts: Vec<String> = cand_ids.iter().map(|id| task.candidates[id].text.clone()).collect();
    let cand_ctx: Vec<Option<String>> = cand_ids.iter().map(|id| task.candidates[id].context.clone()).collect();
    let (qsig, csig) = if qa_mode {
        (Signature::Question, Signature::Response)
    } else {
        (Signature::Sentence, Signature::Sentence)
    };
    let ctx_arg = qa_mode.then_some(cand_ctx.as_slice());
    let cand_emb = embed_parallel(model, &cand_texts, ctx_arg, csig, chunk, threads)?;
    let index = EmbeddingIndex::build(cand_ids.into_iter().zip(cand_emb).collect())?;

    let query_ids: Vec<String> = task.queries.keys().cloned().collect();
    let query_texts: Vec<String> = query_ids.iter().map(|id| task.queries[id].clone()).collect();
    let query_emb = embed_parallel(model, &query_texts, None, qsig, chunk, threads)?;

    let mut results = BTreeMap::new();
    let mut lists = Vec::with_capacity(query_ids.len());
    let mut rels: Vec<HashSet<String>> = Vec::with_capacity(query_ids.len());
    for (qid, emb) in query_ids.iter().zip(&query_emb) {
        let hits = index.top_k(emb, k, metric)?;
        lists.push(hits.clone());
        rels.push(task.relevance[qid].iter().cloned().collect());
        results.insert(qid.clone(), hits);
    }
    let entries = vec![
        MetricEntry {
            task: task_label.to_string(),
            metric: format!("map@{cutoff}"),
            value: retrieval::mean_average_precision(&lists, &rels, cutoff)?,
            n_queries: lists.len(),
        },
        MetricEntry {
            task: task_label.to_string(),
            metric: "p@1".to_string(),
            value: retrieval::precision_at_1(&lists, &rels)?,
            n_queries: lists.len(),
        },
    ];
    Ok(TaskEvaluation { results, entries })
}

fn write_eval_outputs(
    output_dir: &Path,
    task_label: &str,
    eval: &TaskEvaluation,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(output_dir)?;
    let report_path = output_dir.join(format!("{task_label}_report.json"));
    let results_path = output_dir.join(format!("{task_label}_results.tsv"));
    report::write_report(&report_path, &eval.entries)?;
    report::write_results(&results_path, &eval.results)?;
    for e in &eval.entries {
        println!("{}: {} = {:.4} (n={})", e.task, e.metric, e.value, e.n_queries);
    }
    Ok((report_path, results_path))
}

/// Cross-lingual adjustment: optionally drop queries whose back-translation
/// fails the cosine filter, then swap in translated query texts.
fn apply_cross_lingual(
    task: &mut RetrievalTaskSpec,
    model: &Model,
    translated: Option<&Path>,
    backtranslations: Option<&Path>,
    threshold: f64,
    chunk: usize,
    threads: usize,
) -> Result<Option<MetricEntry>> {
    let mut filter_entry = None;
    if let Some(bt_path) = backtranslations {
        let bt: BTreeMap<String, String> = report::read_two_column_tsv(bt_path)?.into_iter().collect();
        let mut qids = Vec::new();
        let mut originals = Vec::new();
        let mut backs = Vec::new();
        for (qid, bt_text) in &bt {
            let original = task
                .queries
                .get(qid)
                .ok_or_else(|| muse_core::Error::invalid(format!("back-translation for unknown query {qid:?}")))?;
            qids.push(qid.clone());
            originals.push(original.clone());
            backs.push(bt_text.clone());
        }
        let orig_emb = embed_parallel(model, &originals, None, Signature::Sentence, chunk, threads)?;
        let back_emb = embed_parallel(model, &backs, None, Signature::Sentence, chunk, threads)?;
        let mask = taskgen::backtranslation_filter(&orig_emb, &back_emb, threshold)?;
        let keep: BTreeMap<String, bool> = qids.into_iter().zip(mask.iter().copied()).collect();
        let n_before = task.queries.len();
        task.retain_queries(&keep);
        filter_entry = Some(MetricEntry {
            task: task.kind.clone(),
            metric: "filter_keep_rate".to_string(),
            value: task.queries.len() as f64 / n_before as f64,
            n_queries: task.queries.len(),
        });
    }
    if let Some(path) = translated {
        let all: BTreeMap<String, String> = report::read_two_column_tsv(path)?.into_iter().collect();
        // Translations for queries the filter dropped are simply unused.
        let surviving: BTreeMap<String, String> = all
            .into_iter()
            .filter(|(qid, _)| task.queries.contains_key(qid))
            .collect();
        task.apply_translated_queries(&surviving)?;
    }
    Ok(filter_entry)
}

// ---- eval-sr ---------------------------------------------------------------------

pub fn eval_sr(a: &args::EvalSrArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let mut task = match (&a.task, &a.pairs, &a.texts) {
        (Some(task_path), None, None) => {
            let text = std::fs::read_to_string(task_path)?;
            RetrievalTaskSpec::from_json(&text, &task_path.display().to_string())?
        }
        (None, Some(pairs_path), Some(texts_path)) => {
            let pairs = report::read_two_column_tsv(pairs_path)?;
            let texts: BTreeMap<String, String> = report::read_two_column_tsv(texts_path)?.into_iter().collect();
            let clusters = taskgen::transitive_closure(&pairs);
            taskgen::build_sr_task(&clusters, &texts)?
        }
        _ => bail!(UsageError("eval-sr needs either --task, or both --pairs and --texts".into())),
    };
    let model = load_model(&a.model, &a.vocab)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let cutoff = kv.resolve(a.cutoff, "cutoff", defaults::MAP_CUTOFF)?;
    let metric = Metric::parse(&kv.resolve(a.metric.clone(), "metric", "dot".to_string())?)?;
    let threshold = kv.resolve(a.filter_threshold, "filter_threshold", taskgen::BACKTRANSLATION_THRESHOLD)?;
    let filter_entry = apply_cross_lingual(
        &mut task,
        &model,
        a.translated_queries.as_deref(),
        a.backtranslations.as_deref(),
        threshold,
        chunk,
        threads,
    )?;
    if let Some(out) = &a.task_out {
        std::fs::write(out, task.to_json()?)?;
    }
    let k = cutoff.max(1);
    let mut eval = evaluate_dense(&task, "sr", &model, false, metric, k, cutoff, chunk, threads)?;
    eval.entries.extend(filter_entry);
    write_eval_outputs(&a.output_dir, "sr", &eval)?;
    Ok(())
}

// ---- eval-bitext --------------------------------------------------------------------

fn load_parallel_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let examples = multitask::load_jsonl(path)?;
        let pairs: Vec<(String, String)> = examples
            .into_iter()
            .filter_map(|ex| match ex {
                TrainingExample::Translation { source, target, .. } => Some((source, target)),
                _ => None,
            })
            .collect();
        if pairs.is_empty() {
            bail!(muse_core::Error::invalid(format!(
                "{} holds no translation records",
                path.display()
            )));
        }
        Ok(pairs)
    } else {
        report::read_two_column_tsv(path)
    }
}

pub fn eval_bitext(a: &args::EvalBitextArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let pairs = load_parallel_pairs(&a.pairs)?;
    let direction = match a.direction.as_str() {
        "src2tgt" => taskgen::BitextDirection::SourceToTarget,
        "tgt2src" => taskgen::BitextDirection::TargetToSource,
        other => bail!(UsageError(format!("unknown direction {other:?}"))),
    };
    let task = taskgen::build_bitext_task(&pairs, direction, &a.lang_pair)?;
    if let Some(out) = &a.task_out {
        std::fs::write(out, task.to_json()?)?;
    }
    let model = load_model(&a.model, &a.vocab)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let k = kv.resolve(a.k, "k", defaults::TOP_K)?;
    let metric = Metric::parse(&kv.resolve(a.metric.clone(), "metric", "dot".to_string())?)?;
    let eval = evaluate_dense(&task, "bitext", &model, false, metric, k, k, chunk, threads)?;
    write_eval_outputs(&a.output_dir, "bitext", &eval)?;
    Ok(())
}

// ---- eval-reqa --------------------------------------------------------------------

pub fn eval_reqa(a: &args::EvalReqaArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let squad = taskgen::load_squad(&a.squad)?;
    let level = ReqaLevel::parse(&a.level)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let k = kv.resolve(a.k, "k", defaults::TOP_K)?;
    std::fs::create_dir_all(&a.output_dir)?;

    if a.bm25 {
        if level != ReqaLevel::Paragraph {
            bail!(UsageError(
                "the BM25 baseline runs at --level paragraph only".into()
            ));
        }
        let task = taskgen::build_reqa(&squad.data, ReqaLevel::Paragraph)?;
        if let Some(out) = &a.task_out {
            std::fs::write(out, task.spec.to_json()?)?;
        }
        return eval_reqa_bm25(&task.spec, &a.output_dir, k);
    }

    let (Some(model_path), Some(vocab_path)) = (&a.model, &a.vocab) else {
        bail!(UsageError("dense ReQA evaluation needs --model and --vocab".into()));
    };
    let model = load_model(model_path, vocab_path)?;
    let qa_mode = match a.mode.as_str() {
        "qa" => true,
        "plain" => false,
        other => bail!(UsageError(format!("unknown mode {other:?} (expected qa or plain)"))),
    };
    let threshold = kv.resolve(a.filter_threshold, "filter_threshold", taskgen::BACKTRANSLATION_THRESHOLD)?;

    match level {
        ReqaLevel::Sentence => {
            let mut task = taskgen::build_reqa(&squad.data, ReqaLevel::Sentence)?;
            let filter_entry = apply_cross_lingual(
                &mut task.spec,
                &model,
                a.translated_queries.as_deref(),
                a.backtranslations.as_deref(),
                threshold,
                chunk,
                threads,
            )?;
            if let Some(out) = &a.task_out {
                std::fs::write(out, task.spec.to_json()?)?;
            }
            let mut eval = evaluate_dense(&task.spec, "reqa_sentence", &model, qa_mode, Metric::Dot, k, k, chunk, threads)?;
            eval.entries.extend(filter_entry);
            write_eval_outputs(&a.output_dir, "reqa_sentence", &eval)?;
        }
        ReqaLevel::Paragraph => {
            // Dense paragraph retrieval runs sentence retrieval first and
            // keeps each paragraph at its best sentence's position.
            let mut sentence_task = taskgen::build_reqa(&squad.data, ReqaLevel::Sentence)?;
            let filter_entry = apply_cross_lingual(
                &mut sentence_task.spec,
                &model,
                a.translated_queries.as_deref(),
                a.backtranslations.as_deref(),
                threshold,
                chunk,
                threads,
            )?;
            let paragraph_task = taskgen::build_reqa(&squad.data, ReqaLevel::Paragraph)?;
            if let Some(out) = &a.task_out {
                std::fs::write(out, paragraph_task.spec.to_json()?)?;
            }
            let n_sentences = sentence_task.spec.candidates.len();
            let sent_eval = evaluate_dense(
                &sentence_task.spec,
                "reqa_sentence",
                &model,
                qa_mode,
                Metric::Dot,
                n_sentences,
                n_sentences,
                chunk,
                threads,
            )?;
            let mut results = BTreeMap::new();
            let mut lists = Vec::new();
            let mut rels = Vec::new();
            for (qid, hits) in &sent_eval.results {
                let mut paras = taskgen::paragraph_by_nearest_sentence(hits, &sentence_task.sentence_to_paragraph)?;
                paras.truncate(k);
                lists.push(paras.clone());
                rels.push(
                    paragraph_task.spec.relevance[qid]
                        .iter()
                        .cloned()
                        .collect::<HashSet<String>>(),
                );
                results.insert(qid.clone(), paras);
            }
            let mut entries = vec![
                MetricEntry {
                    task: "reqa_paragraph".to_string(),
                    metric: format!("map@{k}"),
                    value: retrieval::mean_average_precision(&lists, &rels, k)?,
                    n_queries: lists.len(),
                },
                MetricEntry {
                    task: "reqa_paragraph".to_string(),
                    metric: "p@1".to_string(),
                    value: retrieval::precision_at_1(&lists, &rels)?,
                    n_queries: lists.len(),
                },
            ];
            entries.extend(filter_entry);
            let eval = TaskEvaluation { results, entries };
            write_eval_outputs(&a.output_dir, "reqa_paragraph", &eval)?;
        }
    }
    Ok(())
}

fn eval_reqa_bm25(task: &RetrievalTaskSpec, output_dir: &Path, k: usize) -> Result<()> {
    task.validate()?;
    let documents: Vec<(String, Vec<String>)> = task
        .candidates
        .iter()
        .map(|(id, c)| (id.clone(), retrieval::lexical_tokens(&c.text)))
        .collect();
    let index = retrieval::bm25_build(documents, retrieval::BM25_DEFAULT_K1, retrieval::BM25_DEFAULT_B)?;
    let mut results = BTreeMap::new();
    let mut lists = Vec::new();
    let mut rels = Vec::new();
    for (qid, text) in &task.queries {
        let query = retrieval::lexical_tokens(text);
        let hits = if query.is_empty() {
            Vec::new()
        } else {
            retrieval::bm25_search(&index, &query, k)?
        };
        lists.push(hits.clone());
        rels.push(task.relevance[qid].iter().cloned().collect::<HashSet<String>>());
        results.insert(qid.clone(), hits);
    }
    let entries = vec![
        MetricEntry {
            task: "reqa_paragraph_bm25".to_string(),
            metric: format!("map@{k}"),
            value: retrieval::mean_average_precision(&lists, &rels, k)?,
            n_queries: lists.len(),
        },
        MetricEntry {
            task: "reqa_paragraph_bm25".to_string(),
            metric: "p@1".to_string(),
            value: retrieval::precision_at_1(&lists, &rels)?,
            n_queries: lists.len(),
        },
    ];
    let eval = TaskEvaluation { results, entries };
    write_eval_outputs(output_dir, "reqa_paragraph_bm25", &eval)?;
    Ok(())
}

// ---- eval-sts ---------------------------------------------------------------------

pub fn eval_sts(a: &args::EvalStsArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let text = std::fs::read_to_string(&a.data)?;
    let pairs = transfer::parse_sts_tsv(&text, &a.data.display().to_string())?;
    let model = load_model(&a.model, &a.vocab)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let (pearson, spearman) = transfer::sts_evaluate(&pairs, |texts| {
        embed_parallel(&model, texts, None, Signature::Sentence, chunk, threads)
            .map_err(|e| muse_core::Error::invalid(format!("{e:#}")))
    })?;
    std::fs::create_dir_all(&a.output_dir)?;
    let entries = vec![
        MetricEntry {
            task: "sts".to_string(),
            metric: "pearson".to_string(),
            value: pearson,
            n_queries: pairs.len(),
        },
        MetricEntry {
            task: "sts".to_string(),
            metric: "spearman".to_string(),
            value: spearman,
            n_queries: pairs.len(),
        },
    ];
    report::write_report(&a.output_dir.join("sts_report.json"), &entries)?;
    // per-pair system scores next to the report
    let emb_a = embed_parallel(
        &model,
        &pairs.iter().map(|p| p.text_a.clone()).collect::<Vec<_>>(),
        None,
        Signature::Sentence,
        chunk,
        threads,
    )?;
    let emb_b = embed_parallel(
        &model,
        &pairs.iter().map(|p| p.text_b.clone()).collect::<Vec<_>>(),
        None,
        Signature::Sentence,
        chunk,
        threads,
    )?;
    let mut lines = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        let score = retrieval::angular_similarity(&emb_a[i], &emb_b[i])?;
        lines.push_str(&format!("{i}\t{score}\t{}\n", pair.gold));
    }
    std::fs::write(a.output_dir.join("sts_scores.tsv"), lines)?;
    for e in &entries {
        println!("{}: {} = {:.4} (n={})", e.task, e.metric, e.value, e.n_queries);
    }
    Ok(())
}

// ---- probe ------------------------------------------------------------------------

pub fn probe(a: &args::ProbeArgs, kv: &KvConfig, threads: usize) -> Result<()> {
    let model = load_model(&a.model, &a.vocab)?;
    let chunk = kv.resolve(a.batch, "batch", defaults::ENCODE_CHUNK)?;
    let train_rows = transfer::parse_labeled_tsv(
        &std::fs::read_to_string(&a.train)?,
        &a.train.display().to_string(),
    )?;
    let test_rows = transfer::parse_labeled_tsv(
        &std::fs::read_to_string(&a.test)?,
        &a.test.display().to_string(),
    )?;
    let cfg = ProbeConfig {
        hidden: kv.resolve(a.hidden, "probe_hidden", 64)?,
        epochs: kv.resolve(a.epochs, "probe_epochs", 300)?,
        lr: kv.resolve(a.lr, "probe_lr", 1e-2)?,
        seed: kv.resolve(a.seed, "seed", defaults::SEED)?,
    };
    let embed = |rows: &[(usize, String)]| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let texts: Vec<String> = rows.iter().map(|(_, t)| t.clone()).collect();
        let labels: Vec<usize> = rows.iter().map(|(l, _)| *l).collect();
        let emb = embed_parallel(&model, &texts, None, Signature::Sentence, chunk, threads)?;
        Ok((emb, labels))
    };
    let (train_emb, train_labels) = embed(&train_rows)?;
    let (test_emb, test_labels) = embed(&test_rows)?;
    let probe = transfer::train_probe(&train_emb, &train_labels, &cfg)?;
    let train_acc = transfer::evaluate_probe(&probe, &train_emb, &train_labels)?;
    let test_acc = transfer::evaluate_probe(&probe, &test_emb, &test_labels)?;
    std::fs::create_dir_all(&a.output_dir)?;
    let entries = vec![
        MetricEntry {
            task: "probe".to_string(),
            metric: "train_accuracy".to_string(),
            value: train_acc,
            n_queries: train_labels.len(),
        },
        MetricEntry {
            task: "probe".to_string(),
            metric: "test_accuracy".to_string(),
            value: test_acc,
            n_queries: test_labels.len(),
        },
    ];
    report::write_report(&a.output_dir.join("probe_report.json"), &entries)?;
    for e in &entries {
        println!("{}: {} = {:.4} (n={})", e.task, e.metric, e.value, e.n_queries);
    }
    Ok(())
}

// ---- shared id sets -----------------------------------------------------------------

/// Relevant-id lookup used by integration tests to recompute metrics
/// directly from serialized task + results files.
pub fn relevance_sets(task: &RetrievalTaskSpec) -> BTreeMap<String, BTreeSet<String>> {
    task.relevance.clone()
}
