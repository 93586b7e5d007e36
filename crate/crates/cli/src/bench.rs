//! Resource benchmark: masked forward-pass wall time and a deterministic
//! memory estimate per (architecture, sentence-length bucket).

use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use muse_core::autograd::Session;
use muse_core::encoders::{self, TokenBatch};
use muse_core::subword::TokenSequence;
use muse_core::{Arch, EncoderConfig, ParameterSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchEntry {
    pub arch: String,
    pub length: usize,
    pub batch: usize,
    /// Mean wall time per sentence over the timed repeats, microseconds.
    pub mean_us_per_sentence: f64,
    /// Bytes held by forward-pass activations (exact count of tensor
    /// storage on the tape, not process RSS).
    pub activation_bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch: usize,
    pub repeats: usize,
    pub seed: u64,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn entry(&self, arch: &str, length: usize) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.arch == arch && e.length == length)
    }
}

pub const DEFAULT_LENGTHS: &[usize] = &[8, 16, 32, 64, 128];

/// Times masked forward passes for each architecture and length bucket:
/// one warm-up pass, then `repeats` timed passes. Deterministic token ids
/// come from the seed.
pub fn run_bench(
    models: &[(Arch, EncoderConfig, ParameterSet<f32>)],
    lengths: &[usize],
    batch: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    if lengths.is_empty() {
        anyhow::bail!(muse_core::Error::empty("length buckets"));
    }
    if batch == 0 || repeats == 0 {
        anyhow::bail!(muse_core::Error::invalid("batch and repeats must be positive"));
    }
    let mut lengths = lengths.to_vec();
    lengths.sort_unstable();
    let mut entries = Vec::new();
    for (arch, cfg, params) in models {
        for &length in &lengths {
            if length == 0 {
                anyhow::bail!(muse_core::Error::invalid("sentence length 0"));
            }
            if length > cfg.max_len {
                anyhow::bail!(muse_core::Error::invalid(format!(
                    "length {length} exceeds the {}'s max_len {}",
                    arch.as_str(),
                    cfg.max_len
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (length as u64) << 8);
            let seqs: Vec<TokenSequence> = (0..batch)
                .map(|_| TokenSequence {
                    ids: (0..length).map(|_| rng.gen_range(2..cfg.vocab_size as u32)).collect(),
                    length,
                })
                .collect();
            let token_batch = TokenBatch::from_sequences(&seqs, 0)?;
            let forward = || -> Result<usize> {
                let mut sess = Session::new(params);
                encoders::encode_batch(&mut sess, cfg, &token_batch)?;
                Ok(sess.graph.value_bytes())
            };
            let activation_bytes = forward()?; // warm-up
            let start = Instant::now();
            for _ in 0..repeats {
                forward()?;
            }
            let mean_us_per_sentence =
                start.elapsed().as_secs_f64() * 1e6 / (repeats as f64 * batch as f64);
            entries.push(BenchEntry {
                arch: arch.as_str().to_string(),
                length,
                batch,
                mean_us_per_sentence,
                activation_bytes,
            });
        }
    }
    Ok(BenchReport {
        batch,
        repeats,
        seed,
        entries,
    })
}

/// Fresh randomly initialized desk-scale model whose max_len covers the
/// requested lengths.
pub fn random_model(arch: Arch, max_len: usize, seed: u64) -> Result<(Arch, EncoderConfig, ParameterSet<f32>)> {
    let mut cfg = EncoderConfig::desk(arch, 512);
    cfg.max_len = cfg.max_len.max(max_len);
    let params = encoders::init_params(&cfg, seed)?;
    Ok((arch, cfg, params))
}
