//! Construction of the retrieval evaluation tasks: semantic retrieval from
//! positive pairs via transitive closure, ReQA from SQuAD-format data at
//! sentence or paragraph level, bitext retrieval from parallel corpora, and
//! the cross-lingual variants with a back-translation cosine filter.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{cosine_similarity, ScoredResult};

/// One retrieval candidate; sentence-level ReQA candidates carry their
/// enclosing paragraph as context for the response encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

/// Queries, candidate pool, and relevance sets for any retrieval task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalTaskSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_pair: Option<String>,
    pub queries: BTreeMap<String, String>,
    pub candidates: BTreeMap<String, Candidate>,
    pub relevance: BTreeMap<String, BTreeSet<String>>,
}

impl RetrievalTaskSpec {
    /// Checks the type invariants: every relevance target exists in the
    /// candidate pool, every query has at least one relevant candidate, and
    /// all texts are non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::empty("task queries"));
        }
        if self.candidates.is_empty() {
            return Err(Error::empty("task candidates"));
        }
        for (id, text) in &self.queries {
            if text.trim().is_empty() {
                return Err(Error::invalid(format!("query {id:?} has empty text")));
            }
            let rel = self
                .relevance
                .get(id)
                .ok_or_else(|| Error::invalid(format!("query {id:?} has no relevance set")))?;
            if rel.is_empty() {
                return Err(Error::invalid(format!("query {id:?} has an empty relevance set")));
            }
            for cid in rel {
                if !self.candidates.contains_key(cid) {
                    return Err(Error::invalid(format!(
                        "query {id:?} marks unknown candidate {cid:?} relevant"
                    )));
                }
            }
        }
        for qid in self.relevance.keys() {
            if !self.queries.contains_key(qid) {
                return Err(Error::invalid(format!("relevance for unknown query {qid:?}")));
            }
        }
        for (id, cand) in &self.candidates {
            if cand.text.trim().is_empty() {
                return Err(Error::invalid(format!("candidate {id:?} has empty text")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("serialize task: {e}")))
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let spec: RetrievalTaskSpec =
            serde_json::from_str(text).map_err(|e| Error::parse(source, e.line(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Cross-lingual variant: replace query texts by id, leaving query ids,
    /// candidates, and relevance sets untouched. Every translation id must
    /// name an existing query.
    pub fn apply_translated_queries(&mut self, translations: &BTreeMap<String, String>) -> Result<()> {
        for (qid, text) in translations {
            if text.trim().is_empty() {
                return Err(Error::invalid(format!("translated query {qid:?} is empty")));
            }
            let slot = self
                .queries
                .get_mut(qid)
                .ok_or_else(|| Error::invalid(format!("translation for unknown query {qid:?}")))?;
            *slot = text.clone();
        }
        Ok(())
    }

    /// Drops queries whose keep flag is false (back-translation filtering),
    /// removing their relevance sets.
    pub fn retain_queries(&mut self, keep: &BTreeMap<String, bool>) {
        self.queries.retain(|id, _| keep.get(id).copied().unwrap_or(true));
        self.relevance.retain(|id, _| self.queries.contains_key(id));
    }
}

// ---- semantic retrieval ------------------------------------------------------

/// Connected components of the positive-pair graph (union-find). Clusters
/// partition the mentioned ids; self-pairs yield singletons. Output is
/// deterministic: members sorted, clusters ordered by smallest member.
pub fn transitive_closure(pairs: &[(String, String)]) -> Vec<BTreeSet<String>> {
    struct Dsu {
        parent: Vec<usize>,
    }
    impl Dsu {
        fn find(&mut self, i: usize) -> usize {
            let mut root = i;
            while self.parent[root] != root {
                root = self.parent[root];
            }
            let mut cur = i;
            while self.parent[cur] != root {
                let next = self.parent[cur];
                self.parent[cur] = root;
                cur = next;
            }
            root
        }
        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra != rb {
                self.parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut ids: Vec<&String> = Vec::new();
    let mut index: HashMap<&String, usize> = HashMap::new();
    for (a, b) in pairs {
        for id in [a, b] {
            if !index.contains_key(id) {
                index.insert(id, ids.len());
                ids.push(id);
            }
        }
    }
    let mut dsu = Dsu {
        parent: (0..ids.len()).collect(),
    };
    for (a, b) in pairs {
        dsu.union(index[a], index[b]);
    }
    let mut clusters: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for i in 0..ids.len() {
        let root = dsu.find(i);
        clusters.entry(root).or_default().insert(ids[i].clone());
    }
    let mut out: Vec<BTreeSet<String>> = clusters.into_values().collect();
    out.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    out
}

/// SR task: every sentence is a candidate; sentences in clusters of size
/// two or more become queries whose relevant set is their cluster minus
/// themselves. Singleton-cluster sentences stay candidates only.
pub fn build_sr_task(clusters: &[BTreeSet<String>], texts: &BTreeMap<String, String>) -> Result<RetrievalTaskSpec> {
    let mut queries = BTreeMap::new();
    let mut relevance = BTreeMap::new();
    for cluster in clusters {
        for id in cluster {
            if !texts.contains_key(id) {
                return Err(Error::invalid(format!("no text for cluster member {id:?}")));
            }
        }
        if cluster.len() < 2 {
            continue;
        }
        for id in cluster {
            let rel: BTreeSet<String> = cluster.iter().filter(|m| *m != id).cloned().collect();
            queries.insert(id.clone(), texts[id].clone());
            relevance.insert(id.clone(), rel);
        }
    }
    let candidates = texts
        .iter()
        .map(|(id, text)| {
            (
                id.clone(),
                Candidate {
                    text: text.clone(),
                    context: None,
                },
            )
        })
        .collect();
    Ok(RetrievalTaskSpec {
        kind: "sr".to_string(),
        level: None,
        language_pair: None,
        queries,
        candidates,
        relevance,
    })
}

// ---- sentence splitting ------------------------------------------------------

/// Character interval `[start, end)` of one sentence within a paragraph.
/// Offsets count Unicode scalar values, matching SQuAD answer offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "vs", "etc", "e.g", "i.e", "fig", "no", "jr", "sr",
    "inc", "dept", "approx",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}' | '\u{00bb}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' | '\u{00ab}')
}

/// Rule-based splitter: break after a run of `.`/`!`/`?` (plus closing
/// quotes or brackets) when it is followed by whitespace and then an
/// uppercase or opening character, unless the token before a period is a
/// known abbreviation. Spans are trimmed to non-whitespace bounds and cover
/// every non-whitespace character of the input.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = next_non_ws(&chars, 0);
    let mut i = 0;
    while i < n {
        if start >= n {
            break;
        }
        if i >= start && is_terminator(chars[i]) {
            let is_period_break = chars[i] == '.';
            // absorb a run of terminators, then closing punctuation
            let mut end = i;
            while end + 1 < n && is_terminator(chars[end + 1]) {
                end += 1;
            }
            while end + 1 < n && is_closing(chars[end + 1]) {
                end += 1;
            }
            let after = next_non_ws(&chars, end + 1);
            let boundary = end + 1 >= n
                || (end + 1 < n
                    && chars[end + 1].is_whitespace()
                    && after < n
                    && (chars[after].is_uppercase() || is_opening(chars[after])));
            let abbreviated = is_period_break && ends_with_abbreviation(&chars, i);
            if boundary && !abbreviated {
                spans.push(SentenceSpan { start, end: end + 1 });
                start = after;
            }
            i = end + 1;
        } else {
            i += 1;
        }
    }
    if start < n {
        // trailing sentence without a recognized boundary
        let mut end = n;
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if end > start {
            spans.push(SentenceSpan { start, end });
        }
    }
    spans
}

fn next_non_ws(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

fn ends_with_abbreviation(chars: &[char], period: usize) -> bool {
    let mut begin = period;
    while begin > 0 && !chars[begin - 1].is_whitespace() {
        begin -= 1;
    }
    if begin == period {
        return false;
    }
    let token: String = chars[begin..period].iter().collect::<String>().to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Substring addressed by a span, in character offsets.
pub fn span_text(text: &str, span: SentenceSpan) -> String {
    text.chars().skip(span.start).take(span.end - span.start).collect()
}

/// Checks the span invariants for one paragraph: ordered, non-overlapping,
/// covering all non-whitespace characters.
pub fn check_spans(text: &str, spans: &[SentenceSpan]) -> Result<()> {
    let chars: Vec<char> = text.chars().collect();
    let mut covered = vec![false; chars.len()];
    let mut prev_end = 0;
    for span in spans {
        if span.start < prev_end || span.end <= span.start || span.end > chars.len() {
            return Err(Error::invalid(format!("bad span {span:?}")));
        }
        for c in covered.iter_mut().take(span.end).skip(span.start) {
            *c = true;
        }
        prev_end = span.end;
    }
    for (i, c) in chars.iter().enumerate() {
        if !c.is_whitespace() && !covered[i] {
            return Err(Error::invalid(format!("character {i} ({c:?}) not covered by any span")));
        }
    }
    Ok(())
}

// ---- ReQA from SQuAD-format data ----------------------------------------------

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SquadFile {
    pub data: Vec<SquadDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SquadDocument {
    #[serde(default)]
    pub title: String,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SquadQa {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub answers: Vec<SquadAnswer>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SquadAnswer {
    pub text: String,
    /// Character offset of the answer within its paragraph context.
    pub answer_start: usize,
}

pub fn load_squad(path: &std::path::Path) -> Result<SquadFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path.display().to_string(), e.line(), e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqaLevel {
    Sentence,
    Paragraph,
}

impl ReqaLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ReqaLevel::Sentence => "sentence",
            ReqaLevel::Paragraph => "paragraph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(ReqaLevel::Sentence),
            "paragraph" => Ok(ReqaLevel::Paragraph),
            other => Err(Error::invalid(format!("unknown ReQA level {other:?}"))),
        }
    }
}

/// ReQA construction artifacts: the task plus the sentence-to-paragraph map
/// needed for paragraph retrieval via nearest sentence.
#[derive(Debug, Clone)]
pub struct ReqaTask {
    pub spec: RetrievalTaskSpec,
    pub sentence_to_paragraph: BTreeMap<String, String>,
}

/// Builds the ReQA task. At sentence level every sentence of every
/// paragraph is a candidate (carrying its paragraph text as context) and a
/// question's relevant sentence is the one whose span contains the answer
/// start offset. At paragraph level candidates are paragraphs. Duplicate
/// candidate texts keep distinct ids.
pub fn build_reqa(docs: &[SquadDocument], level: ReqaLevel) -> Result<ReqaTask> {
    let mut queries = BTreeMap::new();
    let mut candidates = BTreeMap::new();
    let mut relevance: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut sentence_to_paragraph = BTreeMap::new();
    for (di, doc) in docs.iter().enumerate() {
        for (pi, para) in doc.paragraphs.iter().enumerate() {
            let pid = format!("d{di}.p{pi}");
            let spans = split_sentences(&para.context);
            let context_chars = para.context.chars().count();
            match level {
                ReqaLevel::Sentence => {
                    for (si, span) in spans.iter().enumerate() {
                        let sid = format!("{pid}.s{si}");
                        candidates.insert(
                            sid.clone(),
                            Candidate {
                                text: span_text(&para.context, *span),
                                context: Some(para.context.clone()),
                            },
                        );
                        sentence_to_paragraph.insert(sid, pid.clone());
                    }
                }
                ReqaLevel::Paragraph => {
                    candidates.insert(
                        pid.clone(),
                        Candidate {
                            text: para.context.clone(),
                            context: None,
                        },
                    );
                }
            }
            for (qi, qa) in para.qas.iter().enumerate() {
                let qid = match &qa.id {
                    Some(id) if !id.is_empty() => id.clone(),
                    _ => format!("{pid}.q{qi}"),
                };
                let answer = qa
                    .answers
                    .first()
                    .ok_or_else(|| Error::invalid(format!("question {qid:?} in {pid} has no answers")))?;
                if answer.answer_start >= context_chars {
                    return Err(Error::invalid(format!(
                        "question {qid:?} in document {:?}: answer offset {} outside paragraph of {} characters",
                        doc.title, answer.answer_start, context_chars
                    )));
                }
                let rel_id = match level {
                    ReqaLevel::Sentence => {
                        let si = spans
                            .iter()
                            .position(|s| s.start <= answer.answer_start && answer.answer_start < s.end)
                            .ok_or_else(|| {
                                Error::invalid(format!(
                                    "question {qid:?} in document {:?}: answer offset {} falls between sentences",
                                    doc.title, answer.answer_start
                                ))
                            })?;
                        format!("{pid}.s{si}")
                    }
                    ReqaLevel::Paragraph => pid.clone(),
                };
                if queries.insert(qid.clone(), qa.question.clone()).is_some() {
                    return Err(Error::invalid(format!("duplicate question id {qid:?}")));
                }
                relevance.insert(qid, BTreeSet::from([rel_id]));
            }
        }
    }
    let spec = RetrievalTaskSpec {
        kind: "reqa".to_string(),
        level: Some(level.as_str().to_string()),
        language_pair: None,
        queries,
        candidates,
        relevance,
    };
    spec.validate()?;
    Ok(ReqaTask {
        spec,
        sentence_to_paragraph,
    })
}

/// Paragraph ranking from a sentence ranking: each paragraph enters at the
/// position of its first (best-ranked) sentence, keeping that sentence's
/// score; later sentences from the same paragraph are dropped.
pub fn paragraph_by_nearest_sentence(
    sentence_results: &[ScoredResult],
    sentence_to_paragraph: &BTreeMap<String, String>,
) -> Result<Vec<ScoredResult>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in sentence_results {
        let pid = sentence_to_paragraph
            .get(&r.id)
            .ok_or_else(|| Error::invalid(format!("sentence {:?} has no paragraph mapping", r.id)))?;
        if seen.insert(pid.clone()) {
            out.push(ScoredResult {
                id: pid.clone(),
                score: r.score,
                rank: out.len() + 1,
            });
        }
    }
    Ok(out)
}

// ---- bitext retrieval ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitextDirection {
    /// Source sentences query the target-language pool.
    SourceToTarget,
    /// Target sentences query the source-language pool.
    TargetToSource,
}

/// Bitext retrieval task: one side queries, the whole other side is the
/// candidate pool, and the aligned mate is the single relevant candidate.
pub fn build_bitext_task(
    pairs: &[(String, String)],
    direction: BitextDirection,
    language_pair: &str,
) -> Result<RetrievalTaskSpec> {
    if pairs.is_empty() {
        return Err(Error::empty("parallel pairs"));
    }
    let width = pairs.len().to_string().len();
    let mut queries = BTreeMap::new();
    let mut candidates = BTreeMap::new();
    let mut relevance = BTreeMap::new();
    for (i, (source, target)) in pairs.iter().enumerate() {
        let (qtext, ctext) = match direction {
            BitextDirection::SourceToTarget => (source, target),
            BitextDirection::TargetToSource => (target, source),
        };
        let qid = format!("q{i:0width$}");
        let cid = format!("c{i:0width$}");
        queries.insert(qid.clone(), qtext.clone());
        candidates.insert(
            cid.clone(),
            Candidate {
                text: ctext.clone(),
                context: None,
            },
        );
        relevance.insert(qid, BTreeSet::from([cid]));
    }
    let spec = RetrievalTaskSpec {
        kind: "bitext".to_string(),
        level: None,
        language_pair: Some(language_pair.to_string()),
        queries,
        candidates,
        relevance,
    };
    spec.validate()?;
    Ok(spec)
}

// ---- back-translation filter ----------------------------------------------------

/// Keep mask for translated queries: `keep[i]` iff
/// `cosine(original_i, backtranslated_i) >= threshold`.
pub fn backtranslation_filter(
    original: &[Vec<f64>],
    backtranslated: &[Vec<f64>],
    threshold: f64,
) -> Result<Vec<bool>> {
    if original.len() != backtranslated.len() {
        return Err(Error::invalid(format!(
            "backtranslation_filter: {} originals vs {} back-translations",
            original.len(),
            backtranslated.len()
        )));
    }
    original
        .iter()
        .zip(backtranslated)
        .map(|(u, v)| Ok(cosine_similarity(u, v)? >= threshold))
        .collect()
}

pub const BACKTRANSLATION_THRESHOLD: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
        list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn closure_merges_chained_pairs() {
        let clusters = transitive_closure(&pairs(&[("a", "b"), ("b", "c")]));
        assert_eq!(clusters.len(), 1);
        let members: Vec<&str> = clusters[0].iter().map(|s| s.as_str()).collect();
        assert_eq!(members, vec!["a", "b", "c"]);
        assert!(transitive_closure(&[]).is_empty());
        // self-pair yields a singleton
        let single = transitive_closure(&pairs(&[("x", "x")]));
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 1);
    }

    /// Independent BFS oracle over the pair graph.
    fn bfs_components(edges: &[(String, String)]) -> Vec<BTreeSet<String>> {
        let mut adj: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
        for (a, b) in edges {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        let mut out = Vec::new();
        for &start in adj.keys() {
            if seen.contains(start) {
                continue;
            }
            let mut component = BTreeSet::new();
            let mut queue = std::collections::VecDeque::from([start]);
            seen.insert(start);
            while let Some(node) = queue.pop_front() {
                component.insert(node.clone());
                for &next in &adj[node] {
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
            out.push(component);
        }
        out.sort_by(|a: &BTreeSet<String>, b| a.iter().next().cmp(&b.iter().next()));
        out
    }

    #[test]
    fn closure_matches_bfs_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..5 {
            let n_nodes = rng.gen_range(20..200);
            let n_edges = rng.gen_range(10..400);
            let edges: Vec<(String, String)> = (0..n_edges)
                .map(|_| {
                    (
                        format!("n{}", rng.gen_range(0..n_nodes)),
                        format!("n{}", rng.gen_range(0..n_nodes)),
                    )
                })
                .collect();
            assert_eq!(transitive_closure(&edges), bfs_components(&edges));
        }
    }

    #[test]
    fn closure_is_idempotent() {
        let edges = pairs(&[("a", "b"), ("b", "c"), ("d", "e"), ("f", "f")]);
        let clusters = transitive_closure(&edges);
        // Re-run on pairs induced by the clusters themselves.
        let mut induced = Vec::new();
        for cluster in &clusters {
            let members: Vec<&String> = cluster.iter().collect();
            for w in members.windows(2) {
                induced.push((w[0].clone(), w[1].clone()));
            }
            if members.len() == 1 {
                induced.push((members[0].clone(), members[0].clone()));
            }
        }
        assert_eq!(transitive_closure(&induced), clusters);
    }

    #[test]
    fn sr_task_counts_follow_cluster_sizes() {
        let texts: BTreeMap<String, String> = ["a", "b", "c", "solo"]
            .iter()
            .map(|id| (id.to_string(), format!("text of {id}")))
            .collect();
        let clusters = transitive_closure(&pairs(&[("a", "b"), ("b", "c")]));
        let task = build_sr_task(&clusters, &texts).unwrap();
        assert_eq!(task.queries.len(), 3);
        assert_eq!(task.candidates.len(), 4);
        for rel in task.relevance.values() {
            assert_eq!(rel.len(), 2);
        }
        task.validate().unwrap();

        // all singletons: zero queries, all candidates
        let lonely = build_sr_task(&[], &texts).unwrap();
        assert!(lonely.queries.is_empty());
        assert_eq!(lonely.candidates.len(), 4);

        // missing text is an error
        let bad = transitive_closure(&pairs(&[("a", "zzz")]));
        assert!(build_sr_task(&bad, &texts).is_err());
    }

    #[test]
    fn sr_relevance_count_matches_combinatorial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut edges = Vec::new();
        for _ in 0..300 {
            edges.push((
                format!("s{}", rng.gen_range(0..120)),
                format!("s{}", rng.gen_range(0..120)),
            ));
        }
        let clusters = transitive_closure(&edges);
        let texts: BTreeMap<String, String> = clusters
            .iter()
            .flatten()
            .map(|id| (id.clone(), format!("t {id}")))
            .collect();
        let task = build_sr_task(&clusters, &texts).unwrap();
        let expected_queries: usize = clusters.iter().filter(|c| c.len() >= 2).map(|c| c.len()).sum();
        let expected_judgments: usize = clusters.iter().map(|c| c.len() * (c.len() - 1)).sum();
        assert_eq!(task.queries.len(), expected_queries);
        let total: usize = task.relevance.values().map(|r| r.len()).sum();
        assert_eq!(total, expected_judgments);
    }

    #[test]
    fn splitter_handles_the_reference_cases() {
        let spans = split_sentences("Hello world.");
        assert_eq!(spans, vec![SentenceSpan { start: 0, end: 12 }]);

        let text = "A b. C d? E f!";
        let spans = split_sentences(text);
        assert_eq!(spans.len(), 3);
        assert_eq!(span_text(text, spans[0]), "A b.");
        assert_eq!(span_text(text, spans[1]), "C d?");
        assert_eq!(span_text(text, spans[2]), "E f!");

        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n ").is_empty());
    }

    #[test]
    fn splitter_respects_abbreviations_and_lowercase_continuations() {
        // Abbreviation before the period: no split.
        let spans = split_sentences("Dr. Smith arrived. He sat down.");
        assert_eq!(spans.len(), 2);
        // Lowercase after the period: no split.
        let spans = split_sentences("The file v1.2 is here. Done.");
        assert_eq!(spans.len(), 2);
        // Quoted sentence end.
        let text = "\"Stop!\" He ran.";
        let spans = split_sentences(text);
        assert_eq!(spans.len(), 2);
        assert_eq!(span_text(text, spans[0]), "\"Stop!\"");
    }

    #[test]
    fn splitter_spans_cover_all_non_whitespace() {
        let cases = [
            "One. Two! Three?",
            "  leading space. And trailing   ",
            "No terminator at all",
            "Ends mid",
            "Mr. Jones met Mrs. Lee. They left! Did they? Yes.",
        ];
        for text in cases {
            let spans = split_sentences(text);
            check_spans(text, &spans).unwrap();
        }
    }

    fn mini_doc() -> SquadDocument {
        let context = "The sky is blue. The grass is green.".to_string();
        SquadDocument {
            title: "colors".to_string(),
            paragraphs: vec![SquadParagraph {
                context: context.clone(),
                qas: vec![SquadQa {
                    id: Some("q1".to_string()),
                    question: "What color is the grass?".to_string(),
                    answers: vec![SquadAnswer {
                        text: "green".to_string(),
                        answer_start: context.find("green").unwrap(),
                    }],
                }],
            }],
        }
    }

    #[test]
    fn reqa_sentence_level_points_at_the_answering_sentence() {
        let docs = vec![mini_doc()];
        let task = build_reqa(&docs, ReqaLevel::Sentence).unwrap();
        assert_eq!(task.spec.queries.len(), 1);
        assert_eq!(task.spec.candidates.len(), 2);
        let rel = &task.spec.relevance["q1"];
        assert_eq!(rel.iter().next().unwrap(), "d0.p0.s1");
        let cand = &task.spec.candidates["d0.p0.s1"];
        assert_eq!(cand.text, "The grass is green.");
        assert_eq!(cand.context.as_deref(), Some("The sky is blue. The grass is green."));
        assert_eq!(task.sentence_to_paragraph["d0.p0.s1"], "d0.p0");
    }

    #[test]
    fn reqa_paragraph_level_has_one_candidate_per_paragraph() {
        let docs = vec![mini_doc()];
        let task = build_reqa(&docs, ReqaLevel::Paragraph).unwrap();
        assert_eq!(task.spec.candidates.len(), 1);
        assert_eq!(task.spec.relevance["q1"].iter().next().unwrap(), "d0.p0");
    }

    #[test]
    fn reqa_rejects_out_of_bounds_answer_offsets() {
        let mut doc = mini_doc();
        doc.paragraphs[0].qas[0].answers[0].answer_start = 10_000;
        let err = build_reqa(&[doc], ReqaLevel::Sentence).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("q1") && msg.contains("colors"), "{msg}");
    }

    #[test]
    fn paragraph_by_nearest_sentence_keeps_first_occurrence() {
        let map: BTreeMap<String, String> = [
            ("s1", "P1"),
            ("s2", "P1"),
            ("s3", "P2"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let results = vec![
            ScoredResult { id: "s3".into(), score: 0.9, rank: 1 },
            ScoredResult { id: "s1".into(), score: 0.8, rank: 2 },
            ScoredResult { id: "s2".into(), score: 0.7, rank: 3 },
        ];
        let paras = paragraph_by_nearest_sentence(&results, &map).unwrap();
        assert_eq!(paras.len(), 2);
        assert_eq!((paras[0].id.as_str(), paras[0].rank), ("P2", 1));
        assert_eq!((paras[1].id.as_str(), paras[1].rank), ("P1", 2));
        assert_eq!(paras[1].score, 0.8);

        let unmapped = vec![ScoredResult { id: "sX".into(), score: 0.0, rank: 1 }];
        assert!(paragraph_by_nearest_sentence(&unmapped, &map).is_err());
    }

    #[test]
    fn paragraph_selection_matches_first_occurrence_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..100 {
            let n_sent = rng.gen_range(2..40);
            let n_para = rng.gen_range(1..8);
            let map: BTreeMap<String, String> = (0..n_sent)
                .map(|i| (format!("s{i}"), format!("p{}", rng.gen_range(0..n_para))))
                .collect();
            let mut order: Vec<usize> = (0..n_sent).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let results: Vec<ScoredResult> = order
                .iter()
                .enumerate()
                .map(|(r, &i)| ScoredResult {
                    id: format!("s{i}"),
                    score: 1.0 - r as f64 * 0.01,
                    rank: r + 1,
                })
                .collect();
            // Oracle: linear scan collecting unseen paragraphs.
            let mut seen = BTreeSet::new();
            let mut expect = Vec::new();
            for r in &results {
                let p = &map[&r.id];
                if seen.insert(p.clone()) {
                    expect.push(p.clone());
                }
            }
            let got: Vec<String> = paragraph_by_nearest_sentence(&results, &map)
                .unwrap()
                .into_iter()
                .map(|r| r.id)
                .collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn bitext_task_is_a_perfect_matching() {
        let task = build_bitext_task(
            &pairs(&[("hello", "hallo"), ("world", "welt")]),
            BitextDirection::SourceToTarget,
            "en-de",
        )
        .unwrap();
        assert_eq!(task.queries.len(), 2);
        assert_eq!(task.candidates.len(), 2);
        // bijection: every candidate is relevant for exactly one query
        let mut targets: Vec<&String> = task.relevance.values().flatten().collect();
        targets.sort();
        targets.dedup();
        assert_eq!(targets.len(), task.candidates.len());

        // duplicate target texts keep distinct ids
        let dup = build_bitext_task(
            &pairs(&[("a", "same"), ("b", "same")]),
            BitextDirection::SourceToTarget,
            "en-xx",
        )
        .unwrap();
        assert_eq!(dup.candidates.len(), 2);
        let rel_a: Vec<&String> = dup.relevance["q0"].iter().collect();
        assert_eq!(rel_a, vec!["c0"]);
    }

    #[test]
    fn backtranslation_filter_thresholds_cosine() {
        let orig = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let same = orig.clone();
        assert_eq!(backtranslation_filter(&orig, &same, 0.5).unwrap(), vec![true, true]);
        let ortho = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(backtranslation_filter(&orig, &ortho, 0.5).unwrap(), vec![false, false]);
        assert!(backtranslation_filter(&orig, &[vec![0.0, 0.0], vec![1.0, 0.0]], 0.5).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect())
            .collect();
        let mask = backtranslation_filter(&a, &b, 0.3).unwrap();
        for i in 0..50 {
            let cos = cosine_similarity(&a[i], &b[i]).unwrap();
            assert_eq!(mask[i], cos >= 0.3);
        }
    }

    #[test]
    fn translated_queries_preserve_ids_and_relevance() {
        let mut task = build_bitext_task(
            &pairs(&[("one", "eins"), ("two", "zwei")]),
            BitextDirection::SourceToTarget,
            "en-de",
        )
        .unwrap();
        let before_ids: Vec<String> = task.queries.keys().cloned().collect();
        let before_rel = task.relevance.clone();
        let translations: BTreeMap<String, String> =
            [("q0".to_string(), "uno".to_string()), ("q1".to_string(), "dos".to_string())].into();
        task.apply_translated_queries(&translations).unwrap();
        assert_eq!(task.queries.keys().cloned().collect::<Vec<_>>(), before_ids);
        assert_eq!(task.relevance, before_rel);
        assert_eq!(task.queries["q0"], "uno");
        let unknown: BTreeMap<String, String> = [("zz".to_string(), "x".to_string())].into();
        assert!(task.apply_translated_queries(&unknown).is_err());
    }

    #[test]
    fn retain_queries_drops_filtered_entries() {
        let mut task = build_bitext_task(
            &pairs(&[("one", "eins"), ("two", "zwei")]),
            BitextDirection::SourceToTarget,
            "en-de",
        )
        .unwrap();
        let keep: BTreeMap<String, bool> = [("q0".to_string(), false), ("q1".to_string(), true)].into();
        task.retain_queries(&keep);
        assert_eq!(task.queries.len(), 1);
        assert!(task.queries.contains_key("q1"));
        assert_eq!(task.relevance.len(), 1);
    }

    #[test]
    fn task_spec_json_round_trips_and_validates() {
        let task = build_bitext_task(
            &pairs(&[("hello", "hallo")]),
            BitextDirection::SourceToTarget,
            "en-de",
        )
        .unwrap();
        let json = task.to_json().unwrap();
        let loaded = RetrievalTaskSpec::from_json(&json, "test.json").unwrap();
        assert_eq!(loaded, task);

        // Relevance pointing at a candidate that does not exist must be
        // rejected on load.
        let mut broken = task.clone();
        broken.relevance.get_mut("q0").unwrap().insert("missing".to_string());
        let broken_json = broken.to_json().unwrap();
        assert!(RetrievalTaskSpec::from_json(&broken_json, "test.json").is_err());
    }
}
