//! Microbenchmarks for the paths that dominate training and evaluation:
//! encoder forward passes, exact top-k search, BM25 scoring, and subword
//! encoding.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use muse_core::autograd::Session;
use muse_core::encoders::{self, TokenBatch};
use muse_core::retrieval::{self, EmbeddingIndex, Metric};
use muse_core::subword::{self, TokenSequence};
use muse_core::{Arch, EncoderConfig};

fn random_batch(rng: &mut ChaCha8Rng, batch: usize, len: usize, vocab: usize) -> TokenBatch {
    let seqs: Vec<TokenSequence> = (0..batch)
        .map(|_| TokenSequence {
            ids: (0..len).map(|_| rng.gen_range(2..vocab as u32)).collect(),
            length: len,
        })
        .collect();
    TokenBatch::from_sequences(&seqs, 0).unwrap()
}

fn encoder_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder_forward");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for arch in [Arch::Transformer, Arch::Cnn] {
        let cfg = EncoderConfig::desk(arch, 512);
        let params = encoders::init_params::<f32>(&cfg, 1).unwrap();
        for len in [16usize, 64] {
            let batch = random_batch(&mut rng, 16, len, cfg.vocab_size);
            group.bench_with_input(
                BenchmarkId::new(arch.as_str(), len),
                &batch,
                |b, batch| {
                    b.iter(|| {
                        let mut sess = Session::new(&params);
                        black_box(encoders::encode_batch(&mut sess, &cfg, batch).unwrap());
                    })
                },
            );
        }
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let pairs = muse_core::synth::cipher_bitext(64, 3);
    let corpus: Vec<String> = pairs.iter().flat_map(|(s, t)| [s.clone(), t.clone()]).collect();
    let vocab = subword::train_vocab(&corpus, 300, 1.0).unwrap();
    let cfg = EncoderConfig::desk(Arch::Transformer, vocab.size());
    let params = encoders::init_params::<f32>(&cfg, 2).unwrap();
    let sources: Vec<&str> = pairs.iter().take(16).map(|(s, _)| s.as_str()).collect();
    let targets: Vec<&str> = pairs.iter().take(16).map(|(_, t)| t.as_str()).collect();
    c.bench_function("translation_loss_forward_backward", |b| {
        b.iter(|| {
            let mut sess = Session::new(&params);
            let loss =
                muse_core::multitask::translation_loss(&mut sess, &cfg, &vocab, &sources, &targets)
                    .unwrap();
            black_box(sess.gradients(loss).unwrap());
        })
    });
}

fn exact_top_k(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, d) = (5000, 64);
    let entries: Vec<(String, Vec<f64>)> = (0..n)
        .map(|i| {
            (
                format!("c{i:05}"),
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let index = EmbeddingIndex::build(entries).unwrap();
    let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut group = c.benchmark_group("top_k_5000x64");
    for metric in [Metric::Dot, Metric::Angular] {
        group.bench_function(format!("{metric:?}"), |b| {
            b.iter(|| black_box(index.top_k(&query, 100, metric).unwrap()))
        });
    }
    group.finish();
}

fn bm25_search(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words: Vec<String> = (0..500).map(|i| format!("w{i:03}")).collect();
    let docs: Vec<(String, Vec<String>)> = (0..2000)
        .map(|i| {
            let len = rng.gen_range(5..60);
            (
                format!("d{i:04}"),
                (0..len).map(|_| words[rng.gen_range(0..words.len())].clone()).collect(),
            )
        })
        .collect();
    let index = retrieval::bm25_build(docs, 1.2, 0.75).unwrap();
    let query: Vec<String> = (0..4).map(|i| format!("w{:03}", i * 7)).collect();
    c.bench_function("bm25_search_2000_docs", |b| {
        b.iter(|| black_box(retrieval::bm25_search(&index, &query, 100).unwrap()))
    });
}

fn subword_encode(c: &mut Criterion) {
    let corpus = muse_core::synth::toy16_corpus(40, 9, 0.0);
    let vocab = subword::train_vocab(&corpus, 500, 0.9995).unwrap();
    let line = &corpus[0];
    c.bench_function("subword_encode_line", |b| {
        b.iter(|| black_box(subword::encode_text(&vocab, line, 256).unwrap()))
    });
}

criterion_group!(
    benches,
    encoder_forward,
    training_step,
    exact_top_k,
    bm25_search,
    subword_encode
);
criterion_main!(benches);
