//! File formats shared by the commands: embedding TSV, results TSV, index
//! JSON, and the metrics report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use muse_core::retrieval::ScoredResult;
use muse_core::Error as CoreError;

/// One metrics-report entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricEntry {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub n_queries: usize,
}

pub fn write_report(path: &Path, entries: &[MetricEntry]) -> Result<()> {
    let json = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<MetricEntry>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// `id<TAB>v1,v2,...,vd` per line.
pub fn write_embeddings(path: &Path, ids: &[String], embeddings: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, emb) in ids.iter().zip(embeddings) {
        let joined: Vec<String> = emb.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{id}\t{}", joined.join(","))?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| CoreError::parse(&file, lineno, "expected id<TAB>values"))?;
        let values: std::result::Result<Vec<f64>, _> = rest.split(',').map(|v| v.trim().parse()).collect();
        let values = values.map_err(|_| CoreError::parse(&file, lineno, "bad embedding value"))?;
        out.push((id.to_string(), values));
    }
    Ok(out)
}

/// `query_id<TAB>rank<TAB>candidate_id<TAB>score` rows for all queries.
pub fn write_results(path: &Path, results: &BTreeMap<String, Vec<ScoredResult>>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (qid, hits) in results {
        for hit in hits {
            writeln!(out, "{qid}\t{}\t{}\t{}", hit.rank, hit.id, hit.score)?;
        }
    }
    Ok(())
}

pub fn read_results(path: &Path) -> Result<BTreeMap<String, Vec<ScoredResult>>> {
    let text = std::fs::read_to_string(path)?;
    let file = path.display().to_string();
    let mut out: BTreeMap<String, Vec<ScoredResult>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(CoreError::parse(&file, lineno, "expected 4 tab-separated fields").into());
        }
        let rank: usize = parts[1]
            .parse()
            .map_err(|_| CoreError::parse(&file, lineno, "bad rank"))?;
        let score: f64 = parts[3]
            .parse()
            .map_err(|_| CoreError::parse(&file, lineno, "bad score"))?;
        out.entry(parts[0].to_string()).or_default().push(ScoredResult {
            id: parts[2].to_string(),
            score,
            rank,
        });
    }
    Ok(out)
}

/// Serialized dense index.
#[derive(Debug, Serialize, Deserialize)]
pub struct IndexFile {
    pub dim: usize,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn write_index(path: &Path, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<()> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let file = IndexFile { dim, ids, vectors };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<IndexFile> {
    let text = std::fs::read_to_string(path)?;
    let file: IndexFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing index {}", path.display()))?;
    Ok(file)
}

/// Two-column TSV (`a<TAB>b`), used for pair files and translated queries.
pub fn read_two_column_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| CoreError::parse(&file, lineno, "expected two tab-separated fields"))?;
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(CoreError::parse(&file, lineno, "empty field").into());
        }
        out.push((a.to_string(), b.to_string()));
    }
    Ok(out)
}
