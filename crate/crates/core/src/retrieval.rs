//! Exact dense nearest-neighbor search, angular similarity, ranking metrics
//! (MAP@k, P@1), and the BM25 lexical baseline.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};

/// Scoring function for dense retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Dot,
    Angular,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Metric::Dot),
            "angular" => Ok(Metric::Angular),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// One ranked hit. Within a result list scores are non-increasing and ranks
/// run 1, 2, ... with ties broken by candidate id ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResult {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

/// Searchable store of candidate embeddings with precomputed norms.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

/// Angular similarity of the published formula:
/// `-arccos(clamp(u.v / (|u||v|), -1, 1))`, in `[-pi, 0]`, symmetric.
pub fn angular_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(
            "angular_similarity",
            format!("[{}] vs [{}]", u.len(), v.len()),
        ));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("angular_similarity: zero vector"));
    }
    let cos = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(-cos.acos())
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(
            "cosine_similarity",
            format!("[{}] vs [{}]", u.len(), v.len()),
        ));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine_similarity: zero vector"));
    }
    Ok(dot(u, v) / (nu * nv))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

impl EmbeddingIndex {
    /// Builds from `(id, vector)` rows. Ids must be unique and dimensions
    /// consistent.
    pub fn build(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::empty("embedding index"));
        }
        let dim = entries[0].1.len();
        if dim == 0 {
            return Err(Error::empty("embedding dimension"));
        }
        let mut seen = HashSet::new();
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut norms = Vec::with_capacity(entries.len());
        for (id, vector) in entries {
            if vector.len() != dim {
                return Err(Error::shape(
                    "embedding_index",
                    format!("candidate {id:?} has dim {} but index has {dim}", vector.len()),
                ));
            }
            if !vector.iter().all(|x| x.is_finite()) {
                return Err(Error::non_finite("embedding_index"));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::invalid(format!("duplicate candidate id {id:?}")));
            }
            norms.push(norm(&vector));
            data.extend(vector);
            ids.push(id);
        }
        Ok(EmbeddingIndex { ids, dim, data, norms })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Exhaustive exact top-k under the chosen metric. Ties break by
    /// candidate id ascending; returns `min(k, n)` results.
    pub fn top_k(&self, query: &[f64], k: usize, metric: Metric) -> Result<Vec<ScoredResult>> {
        if self.ids.is_empty() {
            return Err(Error::empty("embedding index"));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if query.len() != self.dim {
            return Err(Error::shape(
                "top_k",
                format!("query dim {} vs index dim {}", query.len(), self.dim),
            ));
        }
        let qn = norm(query);
        if metric == Metric::Angular && qn == 0.0 {
            return Err(Error::invalid("top_k: zero query vector under angular metric"));
        }
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.ids.len());
        for i in 0..self.ids.len() {
            let d = dot(query, self.row(i));
            let score = match metric {
                Metric::Dot => d,
                Metric::Angular => {
                    if self.norms[i] == 0.0 {
                        return Err(Error::invalid(format!(
                            "top_k: candidate {:?} has zero norm under angular metric",
                            self.ids[i]
                        )));
                    }
                    -(d / (qn * self.norms[i])).clamp(-1.0, 1.0).acos()
                }
            };
            scored.push((score, i));
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("scores are finite")
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (score, i))| ScoredResult {
                id: self.ids[i].clone(),
                score,
                rank: r + 1,
            })
            .collect())
    }
}

/// MAP@cutoff. Per query, `AP = sum over relevant ranks r <= cutoff of
/// precision@r, divided by min(|relevant|, cutoff)`; MAP is the mean over
/// queries. A query with an empty relevant set is an error.
pub fn mean_average_precision(
    result_lists: &[Vec<ScoredResult>],
    relevant_sets: &[HashSet<String>],
    cutoff: usize,
) -> Result<f64> {
    if result_lists.is_empty() {
        return Err(Error::empty("result lists"));
    }
    if result_lists.len() != relevant_sets.len() {
        return Err(Error::invalid("one relevant set per query required"));
    }
    let mut total = 0.0;
    for (results, relevant) in result_lists.iter().zip(relevant_sets) {
        if relevant.is_empty() {
            return Err(Error::empty("relevant set"));
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (i, r) in results.iter().take(cutoff).enumerate() {
            if relevant.contains(&r.id) {
                hits += 1;
                ap += hits as f64 / (i + 1) as f64;
            }
        }
        total += ap / relevant.len().min(cutoff) as f64;
    }
    Ok(total / result_lists.len() as f64)
}

/// Fraction of queries whose rank-1 result is relevant. Queries with empty
/// result lists count as misses.
pub fn precision_at_1(result_lists: &[Vec<ScoredResult>], relevant_sets: &[HashSet<String>]) -> Result<f64> {
    if result_lists.is_empty() {
        return Err(Error::empty("result lists"));
    }
    if result_lists.len() != relevant_sets.len() {
        return Err(Error::invalid("one relevant set per query required"));
    }
    let mut hits = 0usize;
    for (results, relevant) in result_lists.iter().zip(relevant_sets) {
        if relevant.is_empty() {
            return Err(Error::empty("relevant set"));
        }
        if results.first().is_some_and(|r| relevant.contains(&r.id)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / result_lists.len() as f64)
}

/// Sparse index for the BM25 baseline.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    doc_ids: Vec<String>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_freqs: BTreeMap<String, usize>,
    pub k1: f64,
    pub b: f64,
}

pub const BM25_DEFAULT_K1: f64 = 1.2;
pub const BM25_DEFAULT_B: f64 = 0.75;

/// Build a BM25 index over tokenized documents.
pub fn bm25_build(documents: Vec<(String, Vec<String>)>, k1: f64, b: f64) -> Result<Bm25Index> {
    if documents.is_empty() {
        return Err(Error::empty("document collection"));
    }
    let mut doc_ids = Vec::with_capacity(documents.len());
    let mut doc_lengths = Vec::with_capacity(documents.len());
    let mut term_freqs = Vec::with_capacity(documents.len());
    let mut doc_freqs: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (id, tokens) in documents {
        if tokens.is_empty() {
            return Err(Error::invalid(format!("document {id:?} has no tokens")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::invalid(format!("duplicate document id {id:?}")));
        }
        let mut tf: HashMap<String, usize> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_insert(0) += 1;
        }
        for term in tf.keys() {
            *doc_freqs.entry(term.clone()).or_insert(0) += 1;
        }
        doc_ids.push(id);
        doc_lengths.push(tokens.len());
        term_freqs.push(tf);
    }
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
    Ok(Bm25Index {
        doc_ids,
        doc_lengths,
        avg_doc_length,
        term_freqs,
        doc_freqs,
        k1,
        b,
    })
}

impl Bm25Index {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freqs.get(term).copied().unwrap_or(0) as f64;
        let n = self.doc_ids.len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of one document for a query; zero when no term matches.
    pub fn score(&self, query: &[String], doc_index: usize) -> f64 {
        let tf_map = &self.term_freqs[doc_index];
        let dl = self.doc_lengths[doc_index] as f64;
        let mut unique: Vec<&String> = query.iter().collect();
        unique.sort();
        unique.dedup();
        let mut s = 0.0;
        for term in unique {
            let tf = tf_map.get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            let denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self.avg_doc_length);
            s += self.idf(term) * tf * (self.k1 + 1.0) / denom;
        }
        s
    }
}

/// Top-k BM25 search. Only documents matching at least one query term are
/// returned, ranked by score with id tie-breaking as in dense `top_k`.
pub fn bm25_search(index: &Bm25Index, query: &[String], k: usize) -> Result<Vec<ScoredResult>> {
    if query.is_empty() {
        return Err(Error::empty("query"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for i in 0..index.doc_ids.len() {
        let s = index.score(query, i);
        if s > 0.0 {
            scored.push((s, i));
        }
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("scores are finite")
            .then_with(|| index.doc_ids[a.1].cmp(&index.doc_ids[b.1]))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(r, (score, i))| ScoredResult {
            id: index.doc_ids[i].clone(),
            score,
            rank: r + 1,
        })
        .collect())
}

/// Lowercased alphanumeric word tokenizer used for BM25 evaluation.
pub fn lexical_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}
