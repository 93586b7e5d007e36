//! Downstream evaluation on frozen sentence embeddings: a one-hidden-layer
//! probe classifier, and STS scoring via angular similarity with Pearson and
//! Spearman rank correlation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Adam, ParameterSet, Session, Tensor};
use crate::error::{Error, Result};
use crate::retrieval::angular_similarity;

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 64,
            epochs: 300,
            lr: 1e-2,
            seed: 42,
        }
    }
}

/// Trained probe: its own small parameter set, never the encoder's.
pub struct Probe {
    params: ParameterSet<f32>,
    pub dim: usize,
    pub n_classes: usize,
}

fn embeddings_tensor(embeddings: &[Vec<f64>]) -> Result<(Tensor<f32>, usize)> {
    if embeddings.is_empty() {
        return Err(Error::empty("embeddings"));
    }
    let dim = embeddings[0].len();
    let mut data = Vec::with_capacity(embeddings.len() * dim);
    for (i, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::shape(
                "probe",
                format!("embedding {i} has dim {} but expected {dim}", e.len()),
            ));
        }
        data.extend(e.iter().map(|&x| x as f32));
    }
    Ok((Tensor::from_vec(&[embeddings.len(), dim], data)?, dim))
}

/// Trains a one-hidden-layer classifier with full-batch Adam and
/// cross-entropy on FROZEN embeddings; the encoder is never touched.
pub fn train_probe(embeddings: &[Vec<f64>], labels: &[usize], cfg: &ProbeConfig) -> Result<Probe> {
    if embeddings.len() != labels.len() {
        return Err(Error::invalid("train_probe: one label per embedding required"));
    }
    let (x, dim) = embeddings_tensor(embeddings)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::invalid("train_probe: need at least 2 classes represented"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParameterSet::<f32>::new();
    let xavier = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound) as f32).collect();
        Tensor::from_vec(&[rows, cols], data).expect("shape consistent")
    };
    params.insert("probe/fc1/w", xavier(&mut rng, dim, cfg.hidden))?;
    params.insert("probe/fc1/b", Tensor::zeros(&[cfg.hidden]))?;
    params.insert("probe/fc2/w", xavier(&mut rng, cfg.hidden, n_classes))?;
    params.insert("probe/fc2/b", Tensor::zeros(&[n_classes]))?;
    let mut adam = Adam::new();
    for epoch in 1..=cfg.epochs {
        let mut sess = Session::new(&params);
        let xn = sess.constant(x.clone())?;
        let logits = forward(&mut sess, xn)?;
        let per_row = sess.graph.cross_entropy_from_logits(logits, labels)?;
        let loss = sess.graph.mean_all(per_row)?;
        let grads = sess.gradients(loss)?;
        adam.step(&mut params, &grads, cfg.lr, epoch as u64)?;
    }
    Ok(Probe {
        params,
        dim,
        n_classes,
    })
}

fn forward(sess: &mut Session<'_, f32>, x: crate::autograd::NodeId) -> Result<crate::autograd::NodeId> {
    let w1 = sess.param("probe/fc1/w")?;
    let b1 = sess.param("probe/fc1/b")?;
    let w2 = sess.param("probe/fc2/w")?;
    let b2 = sess.param("probe/fc2/b")?;
    let h = sess.graph.matmul(x, w1, false)?;
    let h = sess.graph.add(h, b1)?;
    let h = sess.graph.relu(h)?;
    let out = sess.graph.matmul(h, w2, false)?;
    sess.graph.add(out, b2)
}

impl Probe {
    pub fn predict(&self, embeddings: &[Vec<f64>]) -> Result<Vec<usize>> {
        let (x, dim) = embeddings_tensor(embeddings)?;
        if dim != self.dim {
            return Err(Error::shape(
                "probe",
                format!("embedding dim {dim} vs probe dim {}", self.dim),
            ));
        }
        let mut sess = Session::new(&self.params);
        let xn = sess.constant(x)?;
        let logits = forward(&mut sess, xn)?;
        let v = sess.graph.value(logits);
        Ok(v.data()
            .chunks(self.n_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect())
    }
}

/// Classification accuracy of a trained probe, in [0, 1].
pub fn evaluate_probe(probe: &Probe, embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::invalid("evaluate_probe: one label per embedding required"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probe.n_classes) {
        return Err(Error::invalid(format!(
            "label {bad} outside the probe's {} classes",
            probe.n_classes
        )));
    }
    let preds = probe.predict(embeddings)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("pearson: need two equal-length series of length >= 2"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::invalid("pearson: correlation undefined for a constant series"));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-based ranks i+1..=j+1
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman: need two equal-length series of length >= 2"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Sentence pair with a gold similarity score.
#[derive(Debug, Clone, PartialEq)]
pub struct StsPair {
    pub text_a: String,
    pub text_b: String,
    pub gold: f64,
}

/// Scores every pair with the angular similarity of the two sentence
/// embeddings and correlates against gold. `encode` maps a batch of texts
/// to embeddings (the encoder stays frozen behind that closure).
pub fn sts_evaluate<F>(pairs: &[StsPair], encode: F) -> Result<(f64, f64)>
where
    F: Fn(&[String]) -> Result<Vec<Vec<f64>>>,
{
    if pairs.len() < 2 {
        return Err(Error::invalid("sts_evaluate: need at least 2 pairs"));
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    if gold.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite("sts gold scores"));
    }
    if gold.iter().all(|&g| g == gold[0]) {
        return Err(Error::invalid("sts_evaluate: constant gold scores make correlation undefined"));
    }
    let texts_a: Vec<String> = pairs.iter().map(|p| p.text_a.clone()).collect();
    let texts_b: Vec<String> = pairs.iter().map(|p| p.text_b.clone()).collect();
    let emb_a = encode(&texts_a)?;
    let emb_b = encode(&texts_b)?;
    if emb_a.len() != pairs.len() || emb_b.len() != pairs.len() {
        return Err(Error::invalid("encoder returned the wrong number of embeddings"));
    }
    let mut system = Vec::with_capacity(pairs.len());
    for (u, v) in emb_a.iter().zip(&emb_b) {
        system.push(angular_similarity(u, v)?);
    }
    Ok((pearson(&system, &gold)?, spearman(&system, &gold)?))
}

/// `score\ttext_a\ttext_b` lines (STS Benchmark layout).
pub fn parse_sts_tsv(text: &str, file: &str) -> Result<Vec<StsPair>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (score, a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(a), Some(b)) => (s, a, b),
            _ => return Err(Error::parse(file, lineno, "expected score\\ttext_a\\ttext_b")),
        };
        let gold: f64 = score
            .trim()
            .parse()
            .map_err(|_| Error::parse(file, lineno, format!("bad score {score:?}")))?;
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(Error::parse(file, lineno, "empty text field"));
        }
        out.push(StsPair {
            text_a: a.to_string(),
            text_b: b.to_string(),
            gold,
        });
    }
    Ok(out)
}

/// `label\ttext` lines for probe classification data.
pub fn parse_labeled_tsv(text: &str, file: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(file, lineno, "expected label\\ttext"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(file, lineno, format!("bad label {label:?}")))?;
        if body.trim().is_empty() {
            return Err(Error::parse(file, lineno, "empty text field"));
        }
        out.push((label, body.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probe_learns_linearly_separable_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            let center = if class == 0 { 1.5 } else { -1.5 };
            embeddings.push(vec![
                center + rng.gen_range(-0.3..0.3),
                -center + rng.gen_range(-0.3..0.3),
            ]);
            labels.push(class);
        }
        let cfg = ProbeConfig {
            hidden: 8,
            epochs: 200,
            lr: 2e-2,
            seed: 7,
        };
        let probe = train_probe(&embeddings, &labels, &cfg).unwrap();
        let acc = evaluate_probe(&probe, &embeddings, &labels).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn probe_rejects_degenerate_labels() {
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(train_probe(&embeddings, &[0, 0], &ProbeConfig::default()).is_err());
        let probe = train_probe(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.1], vec![0.1, 1.0]],
            &[0, 1, 0, 1],
            &ProbeConfig {
                epochs: 10,
                ..ProbeConfig::default()
            },
        )
        .unwrap();
        assert!(evaluate_probe(&probe, &embeddings, &[0, 5]).is_err());
    }

    #[test]
    fn correlations_hit_reference_points() {
        let gold = vec![1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&gold, &gold).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&gold, &gold).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = gold.iter().map(|x| -x).collect();
        assert!((pearson(&neg, &gold).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&neg, &gold).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn correlations_match_textbook_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(5..40);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // Pearson oracle via raw sums: (n*sxy - sx*sy) / sqrt((n*sxx - sx^2)(n*syy - sy^2))
            let nf = n as f64;
            let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in a.iter().zip(&b) {
                sx += x;
                sy += y;
                sxy += x * y;
                sxx += x * x;
                syy += y * y;
            }
            let oracle_p = (nf * sxy - sx * sy) / ((nf * sxx - sx * sx).sqrt() * (nf * syy - sy * sy).sqrt());
            assert!((pearson(&a, &b).unwrap() - oracle_p).abs() < 1e-9);
            // Spearman oracle via the no-ties formula 1 - 6 sum d^2 / (n(n^2-1));
            // continuous random draws are tie-free almost surely.
            let rank = |v: &[f64]| -> Vec<f64> {
                let mut order: Vec<usize> = (0..v.len()).collect();
                order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
                let mut r = vec![0.0; v.len()];
                for (pos, &i) in order.iter().enumerate() {
                    r[i] = (pos + 1) as f64;
                }
                r
            };
            let (ra, rb) = (rank(&a), rank(&b));
            let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
            let oracle_s = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
            assert!((spearman(&a, &b).unwrap() - oracle_s).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        let ranks = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(ranks, vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn sts_evaluate_reference_behavior() {
        // Fake encoder: maps "vN" to an angle so the angular similarity with
        // the fixed second text reproduces a chosen ordering.
        let encode = |texts: &[String]| -> Result<Vec<Vec<f64>>> {
            Ok(texts
                .iter()
                .map(|t| {
                    let angle: f64 = t.trim_start_matches('v').parse().unwrap_or(0.0);
                    vec![angle.cos(), angle.sin()]
                })
                .collect())
        };
        let pairs: Vec<StsPair> = (0..5)
            .map(|i| StsPair {
                text_a: format!("v{}", i as f64 * 0.3),
                text_b: "v0".to_string(),
                // gold descending exactly as the angle grows
                gold: -(i as f64),
            })
            .collect();
        let (p, s) = sts_evaluate(&pairs, encode).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "spearman {s}");
        assert!(p > 0.99, "pearson {p}");

        // symmetric in pair order
        let swapped: Vec<StsPair> = pairs
            .iter()
            .map(|pr| StsPair {
                text_a: pr.text_b.clone(),
                text_b: pr.text_a.clone(),
                gold: pr.gold,
            })
            .collect();
        let (p2, s2) = sts_evaluate(&swapped, encode).unwrap();
        assert!((p - p2).abs() < 1e-12);
        assert!((s - s2).abs() < 1e-12);

        // constant gold is rejected
        let constant: Vec<StsPair> = pairs
            .iter()
            .map(|pr| StsPair { gold: 1.0, ..pr.clone() })
            .collect();
        assert!(sts_evaluate(&constant, encode).is_err());
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let transformed: Vec<f64> = a.iter().map(|x| 2.0 * x + 1.0).collect();
        let s1 = spearman(&a, &b).unwrap();
        let s2 = spearman(&transformed, &b).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn tsv_parsers_report_line_numbers() {
        let pairs = parse_sts_tsv("4.5\tcat\tdog\n1.0\ta\tb\n", "sts.tsv").unwrap();
        assert_eq!(pairs.len(), 2);
        let err = parse_sts_tsv("4.5\tonly one field\n", "sts.tsv").unwrap_err();
        assert!(err.to_string().contains("sts.tsv:1"));
        let rows = parse_labeled_tsv("0\thello\n1\tworld\n", "probe.tsv").unwrap();
        assert_eq!(rows[1], (1, "world".to_string()));
        assert!(parse_labeled_tsv("x\thello\n", "probe.tsv").is_err());
    }
}
