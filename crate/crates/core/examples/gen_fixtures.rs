//! Regenerates the bundled toy datasets under data/. Everything is seeded,
//! so re-running produces byte-identical files.
//!
//! Usage: cargo run -p muse-core --example gen_fixtures -- [data-dir]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use muse_core::multitask::{to_json_record, TrainingExample};
use muse_core::synth;

fn write(path: &Path, content: String) {
    std::fs::write(path, content).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".to_string());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir).expect("create data dir");

    // Full 2,000-pair cipher corpus for bitext experiments.
    let bitext = synth::cipher_bitext(2000, 1);
    let mut tsv = String::new();
    for (s, t) in &bitext {
        let _ = writeln!(tsv, "{s}\t{t}");
    }
    write(&dir.join("toy_bitext.tsv"), tsv);

    // Mixed multi-task training file: a small translation slice plus the QA
    // and NLI toys.
    let mut examples: Vec<TrainingExample> = Vec::new();
    for (s, t) in synth::cipher_bitext(400, 2) {
        examples.push(TrainingExample::Translation {
            source: s,
            target: t,
            lang_pair: "en-xx".into(),
        });
    }
    for (q, a, c) in synth::toy_qa_corpus() {
        examples.push(TrainingExample::Qa {
            question: q,
            answer: a,
            context: Some(c),
        });
    }
    examples.extend(synth::toy_nli_examples(80, 5));
    let mut jsonl = String::new();
    let mut corpus: BTreeSet<String> = BTreeSet::new();
    for ex in &examples {
        let _ = writeln!(jsonl, "{}", to_json_record(ex).expect("serializable record"));
        match ex {
            TrainingExample::Translation { source, target, .. } => {
                corpus.insert(source.clone());
                corpus.insert(target.clone());
            }
            TrainingExample::Qa { question, answer, context } => {
                corpus.insert(question.clone());
                corpus.insert(answer.clone());
                if let Some(c) = context {
                    corpus.insert(c.clone());
                }
            }
            TrainingExample::Nli { premise, hypothesis, .. } => {
                corpus.insert(premise.clone());
                corpus.insert(hypothesis.clone());
            }
        }
    }
    write(&dir.join("toy_train.jsonl"), jsonl);
    let mut corpus_txt = String::new();
    for line in &corpus {
        let _ = writeln!(corpus_txt, "{line}");
    }
    write(&dir.join("toy_corpus.txt"), corpus_txt);

    // QA-only file for the context-vs-no-context comparison.
    let mut qa_jsonl = String::new();
    for (q, a, c) in synth::toy_qa_corpus() {
        let record = TrainingExample::Qa {
            question: q,
            answer: a,
            context: Some(c),
        };
        let _ = writeln!(qa_jsonl, "{}", to_json_record(&record).expect("serializable record"));
    }
    write(&dir.join("toy_qa.jsonl"), qa_jsonl);

    // Sixteen-script corpus for vocabulary training plus a held-out sample.
    write(
        &dir.join("toy16_corpus.txt"),
        synth::toy16_corpus(60, 3, 0.004).join("\n") + "\n",
    );
    write(
        &dir.join("toy16_heldout.txt"),
        synth::toy16_corpus(12, 4, 0.004).join("\n") + "\n",
    );

    // Semantic-retrieval demo: paraphrase clusters.
    let (texts, pairs) = synth::toy_sr_data();
    let mut texts_tsv = String::new();
    for (id, text) in &texts {
        let _ = writeln!(texts_tsv, "{id}\t{text}");
    }
    write(&dir.join("sr_texts.tsv"), texts_tsv);
    let mut pairs_tsv = String::new();
    for (a, b) in &pairs {
        let _ = writeln!(pairs_tsv, "{a}\t{b}");
    }
    write(&dir.join("sr_pairs.tsv"), pairs_tsv);

    // STS and probe demos.
    let mut sts = String::new();
    for (gold, a, b) in synth::toy_sts_pairs() {
        let _ = writeln!(sts, "{gold}\t{a}\t{b}");
    }
    write(&dir.join("toy_sts.tsv"), sts);
    let mut probe_train = String::new();
    for (label, text) in synth::toy_probe_data(30, 6) {
        let _ = writeln!(probe_train, "{label}\t{text}");
    }
    write(&dir.join("toy_probe_train.tsv"), probe_train);
    let mut probe_test = String::new();
    for (label, text) in synth::toy_probe_data(10, 7) {
        let _ = writeln!(probe_test, "{label}\t{text}");
    }
    write(&dir.join("toy_probe_test.tsv"), probe_test);
}
