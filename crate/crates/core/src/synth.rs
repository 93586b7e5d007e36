//! Deterministic synthetic corpora for tests, demos, and the end-to-end
//! evaluation harness. Everything here is seeded; the same arguments always
//! produce the same data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::multitask::{NliLabel, TrainingExample};

const SOURCE_LEXICON: &[&str] = &[
    "the", "a", "small", "large", "old", "new", "red", "blue", "green", "dark", "cat", "dog",
    "bird", "fish", "horse", "tree", "river", "stone", "house", "door", "boat", "lamp", "book",
    "chair", "clock", "cloud", "wheel", "road", "field", "garden", "runs", "sits", "flies",
    "swims", "stands", "falls", "opens", "closes", "turns", "moves", "quickly", "slowly",
    "quietly", "today", "tonight", "often", "never", "always", "near", "far", "above", "below",
    "beside", "inside", "outside", "north", "south", "east", "west", "again",
];

const CIPHER_CONSONANTS: &[char] = &['z', 'v', 'k', 'p', 'g', 'm', 'r', 't', 'b', 'd', 'n', 's', 'f', 'l'];
const CIPHER_VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// Deterministic pseudoword for lexicon entry `i`: the "cipher language" is
/// a token-for-token substitution of the source lexicon.
fn cipher_word(i: usize) -> String {
    let c = CIPHER_CONSONANTS.len();
    let v = CIPHER_VOWELS.len();
    let mut word = String::new();
    word.push(CIPHER_CONSONANTS[i % c]);
    word.push(CIPHER_VOWELS[i % v]);
    word.push(CIPHER_CONSONANTS[(i / c) % c]);
    word.push(CIPHER_VOWELS[(i / v) % v]);
    if i >= c * v {
        word.push(CIPHER_CONSONANTS[(i / (c * v)) % c]);
    }
    word
}

/// Synthetic bilingual corpus: `n` distinct sentence pairs where the target
/// side replaces every source token by its cipher-language counterpart.
/// Sentences are distinct as token multisets, so a retrieval pool never
/// contains two candidates with the same bag of words.
pub fn cipher_bitext(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut indices: Vec<usize> = (0..SOURCE_LEXICON.len()).collect();
    while out.len() < n {
        let len = rng.gen_range(4..=9);
        indices.shuffle(&mut rng);
        let words: Vec<usize> = indices[..len].to_vec();
        let mut key = words.clone();
        key.sort_unstable();
        if !seen.insert(key) {
            continue;
        }
        let source: Vec<&str> = words.iter().map(|&i| SOURCE_LEXICON[i]).collect();
        let target: Vec<String> = words.iter().map(|&i| cipher_word(i)).collect();
        out.push((source.join(" "), target.join(" ")));
    }
    out
}

const QA_ADJECTIVES: &[&str] = &["small", "large", "old", "new"];
const QA_NOUNS: &[&str] = &[
    "car", "boat", "lamp", "door", "book", "tree", "bird", "fish", "house", "chair", "clock",
    "stone", "river", "cloud", "horse", "wheel",
];
const QA_COLORS: &[&str] = &["red", "blue", "green", "gold"];

/// Toy QA corpus of 64 (question, answer, context) triples. Answers repeat
/// the same surface text within each color group, so answer text alone
/// cannot identify the right candidate; the context names the item and
/// disambiguates. This is what makes the context-aware response encoding
/// measurably better than the context-free one.
pub fn toy_qa_corpus() -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    let mut k = 0;
    for adj in QA_ADJECTIVES {
        for noun in QA_NOUNS {
            let color = QA_COLORS[k % QA_COLORS.len()];
            out.push((
                format!("what color is the {adj} {noun}"),
                format!("it is {color}"),
                format!("notes about the {adj} {noun}"),
            ));
            k += 1;
        }
    }
    out
}

// ---- 16-language toy corpus ----------------------------------------------------

fn char_range(start: u32, count: usize) -> Vec<char> {
    (0..count as u32).filter_map(|i| char::from_u32(start + i)).collect()
}

fn spaced_chars(start: u32, step: u32, count: usize) -> Vec<char> {
    (0..count as u32).filter_map(|i| char::from_u32(start + i * step)).collect()
}

/// Sixteen toy "languages", each with its own script block, roughly echoing
/// the coverage of the real model's language set.
fn toy_alphabets() -> Vec<(&'static str, Vec<char>)> {
    vec![
        ("en", "abcdefghijklmnopqrstuv".chars().collect()),
        ("de", "abcdefghijklmnopqrst\u{00e4}\u{00f6}\u{00fc}\u{00df}".chars().collect()),
        ("fr", "abcdefghijklmnopqrst\u{00e9}\u{00e8}\u{00ea}\u{00e7}".chars().collect()),
        ("es", "abcdefghijklmnopqrst\u{00f1}\u{00e1}\u{00ed}\u{00f3}".chars().collect()),
        ("ru", char_range(0x0430, 22)),  // Cyrillic
        ("pl", "abcdefghijklmnoprstu\u{0105}\u{0119}\u{0142}\u{017c}".chars().collect()),
        ("el", char_range(0x03B1, 22)),  // Greek (stand-in for a 17th script)
        ("ar", char_range(0x0627, 20)),  // Arabic
        ("he", char_range(0x05D0, 22)),  // Hebrew (stand-in)
        ("hi", char_range(0x0915, 22)),  // Devanagari (stand-in)
        ("th", char_range(0x0E01, 22)),  // Thai
        ("ja", char_range(0x3042, 22)),  // Hiragana
        ("ko", spaced_chars(0xAC00, 97, 22)),  // Hangul syllables
        ("zh", spaced_chars(0x4E00, 131, 22)), // CJK ideographs
        ("zh-tw", spaced_chars(0x5B00, 131, 22)),
        ("tr", "abcdefghijklmnoprstu\u{00e7}\u{011f}\u{0131}\u{015f}".chars().collect()),
    ]
}

/// Rare characters injected at low rate so held-out coverage sits below 1.0.
fn noise_pool() -> Vec<char> {
    char_range(0x2460, 24) // circled digits, never in any core alphabet
}

/// One corpus line drawn from a language's lexicon.
fn toy_line(rng: &mut ChaCha8Rng, lexicon: &[String], noise_rate: f64, noise: &[char]) -> String {
    let n_words = rng.gen_range(5..=10);
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let mut w = lexicon[rng.gen_range(0..lexicon.len())].clone();
        if noise_rate > 0.0 && rng.gen_bool(noise_rate) {
            w.push(noise[rng.gen_range(0..noise.len())]);
        }
        words.push(w);
    }
    words.join(" ")
}

/// Multilingual toy corpus: `lines_per_lang` lines in each of 16 scripts.
/// About `noise_rate` of words carry one rare out-of-alphabet character.
pub fn toy16_corpus(lines_per_lang: usize, seed: u64, noise_rate: f64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = noise_pool();
    let mut lines = Vec::with_capacity(lines_per_lang * 16);
    for (li, (_, alphabet)) in toy_alphabets().into_iter().enumerate() {
        // Fixed lexicon of 40 words per language.
        let mut lex_rng = ChaCha8Rng::seed_from_u64(seed ^ (1000 + li as u64));
        let lexicon: Vec<String> = (0..40)
            .map(|_| {
                let len = lex_rng.gen_range(2..=6);
                (0..len).map(|_| alphabet[lex_rng.gen_range(0..alphabet.len())]).collect()
            })
            .collect();
        for _ in 0..lines_per_lang {
            lines.push(toy_line(&mut rng, &lexicon, noise_rate, &noise));
        }
    }
    lines
}

// ---- demo datasets for the remaining evaluations -------------------------------

/// Paraphrase clusters for a toy SR task: returns (texts, positive pairs).
/// Three surface forms per (noun, adjective) cell plus unpaired distractors.
pub fn toy_sr_data() -> (Vec<(String, String)>, Vec<(String, String)>) {
    let nouns = ["door", "river", "clock", "garden", "boat", "lamp"];
    let adjs = ["old", "quiet", "bright"];
    let mut texts = Vec::new();
    let mut pairs = Vec::new();
    let mut k = 0;
    for noun in nouns {
        for adj in adjs {
            let ids = [format!("s{k:03}a"), format!("s{k:03}b"), format!("s{k:03}c")];
            texts.push((ids[0].clone(), format!("the {noun} is {adj}")));
            texts.push((ids[1].clone(), format!("the {noun} looks {adj}")));
            texts.push((ids[2].clone(), format!("that {noun} seems {adj}")));
            pairs.push((ids[0].clone(), ids[1].clone()));
            pairs.push((ids[1].clone(), ids[2].clone()));
            k += 1;
        }
    }
    for (i, noun) in nouns.iter().enumerate() {
        texts.push((format!("x{i:03}"), format!("nobody mentioned the {noun} today")));
    }
    (texts, pairs)
}

/// Toy STS pairs: gold score is the template overlap level (5 same meaning,
/// 3 related, 1 unrelated).
pub fn toy_sts_pairs() -> Vec<(f64, String, String)> {
    let nouns = ["cat", "boat", "clock", "garden", "river", "door", "bird", "wheel", "lamp", "stone"];
    let mut out = Vec::new();
    for (i, noun) in nouns.iter().enumerate() {
        let other = nouns[(i + 3) % nouns.len()];
        out.push((
            5.0,
            format!("the {noun} is very old"),
            format!("the {noun} is old"),
        ));
        out.push((
            3.0,
            format!("the {noun} is very old"),
            format!("the {noun} moves quickly"),
        ));
        out.push((
            1.0,
            format!("the {noun} is very old"),
            format!("a {other} stands far away"),
        ));
    }
    out
}

/// Toy two-class probe data: (label, text) rows about animals vs objects.
pub fn toy_probe_data(n_per_class: usize, seed: u64) -> Vec<(usize, String)> {
    let animals = ["cat", "dog", "bird", "fish", "horse"];
    let objects = ["clock", "lamp", "door", "wheel", "stone"];
    let verbs_a = ["runs", "swims", "flies", "sleeps"];
    let verbs_o = ["stands", "turns", "falls", "waits"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..n_per_class * 2 {
        let class = i % 2;
        let (noun, verb) = if class == 0 {
            (
                animals[rng.gen_range(0..animals.len())],
                verbs_a[rng.gen_range(0..verbs_a.len())],
            )
        } else {
            (
                objects[rng.gen_range(0..objects.len())],
                verbs_o[rng.gen_range(0..verbs_o.len())],
            )
        };
        out.push((class, format!("the {noun} {verb} again and again")));
    }
    out
}

/// Toy NLI examples from templates.
pub fn toy_nli_examples(n: usize, seed: u64) -> Vec<TrainingExample> {
    let nouns = ["cat", "dog", "horse", "bird"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let noun = nouns[rng.gen_range(0..nouns.len())];
        let (premise, hypothesis, label) = match rng.gen_range(0..3) {
            0 => (
                format!("the {noun} runs across the field"),
                format!("the {noun} moves"),
                NliLabel::Entailment,
            ),
            1 => (
                format!("the {noun} runs across the field"),
                format!("the {noun} never moves"),
                NliLabel::Contradiction,
            ),
            _ => (
                format!("the {noun} runs across the field"),
                format!("the {noun} is old"),
                NliLabel::Neutral,
            ),
        };
        out.push(TrainingExample::Nli {
            premise,
            hypothesis,
            label,
        });
    }
    out
}
