//! Shared subword vocabulary: deterministic byte-pair encoding over a
//! word-boundary-marked character stream, with character-level fallback to
//! `<unk>` and a character-coverage report.
//!
//! Pre-tokenization splits on Unicode whitespace and prepends [`WORD_MARKER`]
//! to every word, so merges never cross word boundaries and decoding can
//! restore single spaces. Characters below the coverage cutoff are dropped
//! from the vocabulary and encode as `unk_id`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Word-boundary marker (U+2581, as in SentencePiece output).
pub const WORD_MARKER: char = '\u{2581}';

pub const PAD_PIECE: &str = "<pad>";
pub const UNK_PIECE: &str = "<unk>";

/// Learned token inventory with merge rules and fixed special-token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordVocabulary {
    pieces: Vec<String>,
    piece_ids: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    merge_ranks: HashMap<(String, String), usize>,
}

/// Encoded text: token ids after truncation plus the pre-truncation count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub length: usize,
}

impl SubwordVocabulary {
    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        1
    }

    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn piece_id(&self, piece: &str) -> Option<u32> {
        self.piece_ids.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(|s| s.as_str())
    }

    fn has_char(&self, c: char) -> bool {
        let mut buf = [0u8; 4];
        self.piece_ids.contains_key(c.encode_utf8(&mut buf) as &str)
    }
}

/// Train a BPE vocabulary of at most `target_size` pieces.
///
/// Characters are retained most-frequent-first until they cover at least
/// `coverage` of the corpus character mass (whitespace and the synthetic
/// word marker excluded); the rest fall back to `<unk>`. Merges are learned
/// highest-count-first with lexicographic `(left, right)` tie-breaking, so
/// identical corpora always produce byte-identical vocabularies.
pub fn train_vocab<S: AsRef<str>>(
    corpus: &[S],
    target_size: usize,
    coverage: f64,
) -> Result<SubwordVocabulary> {
    if corpus.is_empty() {
        return Err(Error::empty("training corpus"));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("coverage {coverage} outside (0, 1]")));
    }

    // Word frequencies; BTreeMap for deterministic iteration.
    let mut word_freqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut char_freqs: BTreeMap<char, u64> = BTreeMap::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            let mut marked = String::with_capacity(word.len() + 3);
            marked.push(WORD_MARKER);
            marked.push_str(word);
            *word_freqs.entry(marked).or_insert(0) += 1;
            for c in word.chars() {
                *char_freqs.entry(c).or_insert(0) += 1;
            }
        }
    }
    if word_freqs.is_empty() {
        return Err(Error::empty("training corpus (no words)"));
    }

    // Coverage cutoff: most frequent characters first until the cumulative
    // mass reaches `coverage`.
    let total: u64 = char_freqs.values().sum();
    let mut by_freq: Vec<(char, u64)> = char_freqs.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut retained: Vec<char> = Vec::new();
    let mut cum = 0u64;
    for (c, f) in &by_freq {
        if cum as f64 >= coverage * total as f64 {
            break;
        }
        retained.push(*c);
        cum += f;
    }

    // Specials + marker + retained characters must fit.
    let base_count = 2 + 1 + retained.len();
    if target_size < base_count {
        return Err(Error::invalid(format!(
            "target_size {target_size} cannot hold {} base pieces ({} retained characters plus specials and the word marker)",
            base_count,
            retained.len()
        )));
    }

    let mut pieces: Vec<String> = vec![PAD_PIECE.to_string(), UNK_PIECE.to_string()];
    pieces.push(WORD_MARKER.to_string());
    pieces.extend(retained.iter().map(|c| c.to_string()));
    let mut piece_ids: HashMap<String, u32> = pieces
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i as u32))
        .collect();

    // Initial symbol sequences: one entry per word type. Dropped characters
    // act as merge barriers (`None`).
    let known: std::collections::HashSet<char> = retained.iter().copied().collect();
    let mut sequences: Vec<(Vec<Option<String>>, u64)> = word_freqs
        .into_iter()
        .map(|(word, freq)| {
            let syms = word
                .chars()
                .map(|c| {
                    if c == WORD_MARKER || known.contains(&c) {
                        Some(c.to_string())
                    } else {
                        None
                    }
                })
                .collect();
            (syms, freq)
        })
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    while pieces.len() < target_size {
        let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
        for (syms, freq) in &sequences {
            for w in syms.windows(2) {
                if let [Some(l), Some(r)] = w {
                    *pair_counts.entry((l.clone(), r.clone())).or_insert(0) += freq;
                }
            }
        }
        let Some(best) = pair_counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(pair, _)| pair)
        else {
            break; // nothing left to merge
        };
        let merged = format!("{}{}", best.0, best.1);
        for (syms, _) in sequences.iter_mut() {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i].as_deref() == Some(best.0.as_str())
                    && syms[i + 1].as_deref() == Some(best.1.as_str())
                {
                    syms[i] = Some(merged.clone());
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        merges.push(best);
        // A merge can reproduce an existing piece string; record the rule
        // but keep ids unique.
        if !piece_ids.contains_key(&merged) {
            piece_ids.insert(merged.clone(), pieces.len() as u32);
            pieces.push(merged);
        }
    }

    let merge_ranks = merges
        .iter()
        .cloned()
        .enumerate()
        .map(|(rank, pair)| (pair, rank))
        .collect();
    Ok(SubwordVocabulary {
        pieces,
        piece_ids,
        merges,
        merge_ranks,
    })
}

/// Segment `text` into token ids, applying merges in rank order within each
/// word. Unknown characters encode as `unk_id` and act as merge barriers.
/// The output keeps at most `max_len` ids; `length` reports the
/// pre-truncation count.
pub fn encode_text(vocab: &SubwordVocabulary, text: &str, max_len: usize) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut ids: Vec<u32> = Vec::new();
    for word in text.split_whitespace() {
        encode_word(vocab, word, &mut ids);
    }
    let length = ids.len();
    ids.truncate(max_len);
    Ok(TokenSequence { ids, length })
}

fn encode_word(vocab: &SubwordVocabulary, word: &str, out: &mut Vec<u32>) {
    // Split into runs of known symbols separated by unknown characters.
    let mut run: Vec<String> = vec![WORD_MARKER.to_string()];
    let flush = |run: &mut Vec<String>, out: &mut Vec<u32>| {
        if run.is_empty() {
            return;
        }
        apply_merges(vocab, run);
        for sym in run.drain(..) {
            // Every symbol is either a retained character or a merged piece.
            out.push(vocab.piece_id(&sym).expect("symbol must be a piece"));
        }
    };
    for c in word.chars() {
        if vocab.has_char(c) {
            run.push(c.to_string());
        } else {
            flush(&mut run, out);
            out.push(vocab.unk_id());
        }
    }
    flush(&mut run, out);
}

fn apply_merges(vocab: &SubwordVocabulary, syms: &mut Vec<String>) {
    loop {
        let mut best: Option<(usize, usize)> = None; // (rank, position)
        for i in 0..syms.len().saturating_sub(1) {
            let key = (syms[i].clone(), syms[i + 1].clone());
            if let Some(&rank) = vocab.merge_ranks.get(&key) {
                if best.map_or(true, |(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
        }
        let Some((rank, _)) = best else { break };
        let (l, r) = vocab.merges[rank].clone();
        let mut i = 0;
        while i + 1 < syms.len() {
            if syms[i] == l && syms[i + 1] == r {
                syms[i] = format!("{l}{r}");
                syms.remove(i + 1);
            }
            i += 1;
        }
    }
}

/// Inverse of [`encode_text`] for canonical (single-space) text: concatenate
/// pieces, turn word markers back into spaces, and drop the leading space.
pub fn decode(vocab: &SubwordVocabulary, ids: &[u32]) -> Result<String> {
    let mut text = String::new();
    for &id in ids {
        let piece = vocab
            .piece(id)
            .ok_or_else(|| Error::invalid(format!("token id {id} out of range")))?;
        text.push_str(piece);
    }
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c == WORD_MARKER {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    Ok(out.strip_prefix(' ').unwrap_or(&out).to_string())
}

/// Fraction of non-whitespace characters in `sample` that the vocabulary can
/// represent without falling back to `<unk>`.
pub fn character_coverage<S: AsRef<str>>(vocab: &SubwordVocabulary, sample: &[S]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::empty("coverage sample"));
    }
    let mut total = 0u64;
    let mut covered = 0u64;
    for line in sample {
        for c in line.as_ref().chars().filter(|c| !c.is_whitespace()) {
            total += 1;
            if vocab.has_char(c) {
                covered += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::empty("coverage sample (no characters)"));
    }
    Ok(covered as f64 / total as f64)
}

/// Serialize as UTF-8 text: `piece\tid` lines in id order, then a `#MERGES`
/// section of `left\tright` lines in rank order.
pub fn to_text(vocab: &SubwordVocabulary) -> String {
    let mut out = String::new();
    for (id, piece) in vocab.pieces.iter().enumerate() {
        let _ = writeln!(out, "{piece}\t{id}");
    }
    out.push_str("#MERGES\n");
    for (l, r) in &vocab.merges {
        let _ = writeln!(out, "{l}\t{r}");
    }
    out
}

/// Parse the text format produced by [`to_text`]. Rejects duplicate or
/// non-contiguous ids, duplicate pieces, and merges over unknown pieces.
pub fn from_text(text: &str, file: &str) -> Result<SubwordVocabulary> {
    let mut pieces: Vec<String> = Vec::new();
    let mut piece_ids: HashMap<String, u32> = HashMap::new();
    let mut merges: Vec<(String, String)> = Vec::new();
    let mut in_merges = false;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if line == "#MERGES" {
            in_merges = true;
            continue;
        }
        let (left, right) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(file, lineno, "expected two tab-separated fields"))?;
        if in_merges {
            for part in [left, right] {
                if !piece_ids.contains_key(part) {
                    return Err(Error::parse(file, lineno, format!("merge references unknown piece {part:?}")));
                }
            }
            let joined = format!("{left}{right}");
            if !piece_ids.contains_key(&joined) {
                return Err(Error::parse(file, lineno, format!("merge result {joined:?} is not a piece")));
            }
            merges.push((left.to_string(), right.to_string()));
        } else {
            let id: u32 = right
                .parse()
                .map_err(|_| Error::parse(file, lineno, format!("bad id {right:?}")))?;
            if id as usize != pieces.len() {
                return Err(Error::parse(
                    file,
                    lineno,
                    format!("duplicate or out-of-order id {id} (expected {})", pieces.len()),
                ));
            }
            if piece_ids.contains_key(left) {
                return Err(Error::parse(file, lineno, format!("duplicate piece {left:?}")));
            }
            piece_ids.insert(left.to_string(), id);
            pieces.push(left.to_string());
        }
    }
    if pieces.len() < 2 || pieces[0] != PAD_PIECE || pieces[1] != UNK_PIECE {
        return Err(Error::parse(file, 1, "vocabulary must start with <pad> and <unk>"));
    }
    let merge_ranks = merges
        .iter()
        .cloned()
        .enumerate()
        .map(|(rank, pair)| (pair, rank))
        .collect();
    Ok(SubwordVocabulary {
        pieces,
        piece_ids,
        merges,
        merge_ranks,
    })
}

pub fn save_to_path(vocab: &SubwordVocabulary, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(vocab))?;
    Ok(())
}

pub fn load_from_path(path: &Path) -> Result<SubwordVocabulary> {
    let text = std::fs::read_to_string(path)?;
    from_text(&text, &path.display().to_string())
}
