//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "muse",
    version,
    about = "Multilingual dual-encoder sentence embeddings: train, encode, search, evaluate"
)]
pub struct Cli {
    /// Optional key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for encoding/evaluation fan-out (training is always
    /// single-threaded).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a subword vocabulary from a text corpus.
    TrainVocab(TrainVocabArgs),
    /// Multi-task dual-encoder training from JSON-lines data.
    Train(TrainArgs),
    /// Encode text lines into embedding vectors.
    Encode(EncodeArgs),
    /// Build a dense index file from an embedding TSV.
    Index(IndexArgs),
    /// Exact top-k search of query embeddings against an index.
    Search(SearchArgs),
    /// Semantic-retrieval evaluation (MAP@k) from positive pairs.
    EvalSr(EvalSrArgs),
    /// Retrieval question answering evaluation on SQuAD-format data.
    EvalReqa(EvalReqaArgs),
    /// Bitext retrieval evaluation (P@1) on a parallel corpus.
    EvalBitext(EvalBitextArgs),
    /// STS evaluation: angular similarity vs gold scores.
    EvalSts(EvalStsArgs),
    /// Train/evaluate a probe classifier on frozen embeddings.
    Probe(ProbeArgs),
    /// Resource benchmark: encoding time and memory vs sentence length.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TrainVocabArgs {
    /// Input corpus, one text per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output vocabulary file.
    #[arg(long)]
    pub output: PathBuf,
    /// Target vocabulary size (pieces including specials).
    #[arg(long)]
    pub size: Option<usize>,
    /// Character coverage cutoff in (0, 1].
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON-lines training data (task field per record).
    #[arg(long)]
    pub data: PathBuf,
    /// Trained vocabulary file.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub output: PathBuf,
    /// Encoder architecture.
    #[arg(long)]
    pub arch: Option<String>,
    /// Hyperparameter preset: desk or paper.
    #[arg(long)]
    pub preset: Option<String>,
    /// Full encoder config file (key=value); overrides arch/preset.
    #[arg(long)]
    pub encoder_config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the data used for training; the rest becomes the dev
    /// split.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Where to write the dev split (JSON-lines), if anywhere.
    #[arg(long)]
    pub dev_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Input text: one sentence per line; for --signature response, lines
    /// are `text<TAB>context` with an optional context.
    #[arg(long)]
    pub input: PathBuf,
    /// Output embedding TSV (`id<TAB>v1,v2,...`); ids are input line
    /// numbers.
    #[arg(long)]
    pub output: PathBuf,
    /// sentence | question | response
    #[arg(long, default_value = "sentence")]
    pub signature: String,
    /// Encoding chunk size.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Embedding TSV to index.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output index file (JSON).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Index file produced by `muse index`.
    #[arg(long)]
    pub index: PathBuf,
    /// Query embedding TSV.
    #[arg(long)]
    pub queries: PathBuf,
    /// Results TSV: query_id, rank, candidate_id, score.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// dot | angular
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalSrArgs {
    /// Positive pair TSV (`id1<TAB>id2`). Requires --texts.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Sentence TSV (`id<TAB>text`).
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// Prebuilt task spec JSON (alternative to --pairs/--texts).
    #[arg(long)]
    pub task: Option<PathBuf>,
    /// Write the constructed task spec here for reuse.
    #[arg(long)]
    pub task_out: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Directory for the metrics report and results TSV.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// MAP cutoff.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Cross-lingual variant: replace query texts by id (`qid<TAB>text`).
    #[arg(long)]
    pub translated_queries: Option<PathBuf>,
    /// English back-translations of the translated queries
    /// (`qid<TAB>text`); queries whose back-translation embedding has
    /// cosine similarity below the threshold with the original are dropped.
    #[arg(long)]
    pub backtranslations: Option<PathBuf>,
    #[arg(long)]
    pub filter_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalReqaArgs {
    /// SQuAD v1.0-format JSON file.
    #[arg(long)]
    pub squad: PathBuf,
    /// sentence | paragraph
    #[arg(long, default_value = "sentence")]
    pub level: String,
    /// qa = question/response heads with context; plain = raw sentence
    /// embeddings on both sides.
    #[arg(long, default_value = "qa")]
    pub mode: String,
    /// Evaluate the BM25 lexical baseline instead of the dense model
    /// (paragraph level).
    #[arg(long)]
    pub bm25: bool,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub task_out: Option<PathBuf>,
    #[arg(long)]
    pub translated_queries: Option<PathBuf>,
    #[arg(long)]
    pub backtranslations: Option<PathBuf>,
    #[arg(long)]
    pub filter_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalBitextArgs {
    /// Parallel corpus: TSV `source<TAB>target`, or JSON-lines translation
    /// records.
    #[arg(long)]
    pub pairs: PathBuf,
    /// src2tgt | tgt2src
    #[arg(long, default_value = "src2tgt")]
    pub direction: String,
    #[arg(long, default_value = "und-und")]
    pub lang_pair: String,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub task_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalStsArgs {
    /// STS TSV: `score<TAB>text_a<TAB>text_b`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Training TSV: `label<TAB>text`.
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out TSV: `label<TAB>text`.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// transformer | cnn | both
    #[arg(long, default_value = "both")]
    pub arch: String,
    /// Benchmark an existing checkpoint instead of a fresh random model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Comma-separated sentence length buckets.
    #[arg(long)]
    pub lengths: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report (JSON).
    #[arg(long)]
    pub output: PathBuf,
}
