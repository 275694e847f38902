//! Self-trained token embeddings with character n-gram fallback.
//!
//! A skip-gram-with-negative-sampling objective is trained over the parsed
//! template token streams. Each token's input representation is the mean of
//! its own vector and its character n-gram vectors, so tokens never seen in
//! training still embed through their n-grams. Training is single-threaded
//! and fully seeded: the same corpus and seed reproduce the same table.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Token → vector map with subword fallback for unseen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub token_vectors: BTreeMap<String, Vec<f64>>,
    pub subword_vectors: BTreeMap<String, Vec<f64>>,
    pub n_min: usize,
    pub n_max: usize,
}

impl EmbeddingTable {
    /// Embedding of a single token: the stored vector when known, otherwise
    /// the mean of its known n-gram vectors (zero vector when none is known).
    pub fn embed_token(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.token_vectors.get(token) {
            return v.clone();
        }
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for gram in char_ngrams(token, self.n_min, self.n_max) {
            if let Some(v) = self.subword_vectors.get(&gram) {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
                n += 1;
            }
        }
        if n > 0 {
            for a in acc.iter_mut() {
                *a /= n as f64;
            }
        }
        acc
    }

    /// Mean of the token vectors of an event's template tokens.
    pub fn embed_event(&self, tokens: &[String]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyEvent);
        }
        let mut acc = vec![0.0; self.dim];
        for tok in tokens {
            let v = self.embed_token(tok);
            for (a, b) in acc.iter_mut().zip(&v) {
                *a += b;
            }
        }
        let n = tokens.len() as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
        Ok(acc)
    }

    /// Text export: header `vocab_size dim`, then `token v1 … vE` per line,
    /// tokens in sorted order.
    pub fn export_text(&self) -> String {
        let mut out = format!("{} {}\n", self.token_vectors.len(), self.dim);
        for (tok, vec) in &self.token_vectors {
            out.push_str(tok);
            for v in vec {
                out.push(' ');
                out.push_str(&format!("{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// FastText-style n-grams of `<token>` with boundary markers.
pub fn char_ngrams(token: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let wrapped: Vec<char> = format!("<{token}>").chars().collect();
    let mut grams = Vec::new();
    for n in n_min..=n_max {
        if wrapped.len() < n {
            break;
        }
        for start in 0..=wrapped.len() - n {
            grams.push(wrapped[start..start + n].iter().collect());
        }
    }
    grams
}

/// Configuration of the skip-gram trainer.
#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            window: 4,
            epochs: 3,
            negatives: 5,
            lr: 0.05,
            n_min: 3,
            n_max: 5,
        }
    }
}

/// Train token and n-gram vectors over sentences of tokens.
pub fn train_embeddings(
    corpus: &[Vec<String>],
    config: &EmbeddingConfig,
    seed: u64,
) -> Result<EmbeddingTable> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyInput("embedding corpus is empty".into()));
    }
    if config.dim < 2 {
        return Err(Error::Config("embedding dim must be >= 2".into()));
    }

    // Vocabulary in first-occurrence order; counts drive negative sampling.
    let mut vocab_ids: HashMap<String, usize> = HashMap::new();
    let mut vocab: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut sentences: Vec<Vec<usize>> = Vec::with_capacity(corpus.len());
    for sent in corpus {
        let mut ids = Vec::with_capacity(sent.len());
        for tok in sent {
            let id = *vocab_ids.entry(tok.clone()).or_insert_with(|| {
                vocab.push(tok.clone());
                counts.push(0);
                vocab.len() - 1
            });
            counts[id] += 1;
            ids.push(id);
        }
        sentences.push(ids);
    }
    if vocab.len() < 2 {
        return Err(Error::DegenerateVocabulary);
    }

    // Subword inventory over the vocabulary.
    let mut gram_ids: HashMap<String, usize> = HashMap::new();
    let mut grams: Vec<String> = Vec::new();
    let token_grams: Vec<Vec<usize>> = vocab
        .iter()
        .map(|tok| {
            char_ngrams(tok, config.n_min, config.n_max)
                .into_iter()
                .map(|g| {
                    *gram_ids.entry(g.clone()).or_insert_with(|| {
                        grams.push(g);
                        grams.len() - 1
                    })
                })
                .collect()
        })
        .collect();

    let dim = config.dim;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    let init = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-bound..bound)).collect()
    };
    let mut word_in: Vec<Vec<f64>> = (0..vocab.len()).map(|_| init(&mut rng)).collect();
    let mut gram_in: Vec<Vec<f64>> = (0..grams.len()).map(|_| init(&mut rng)).collect();
    let mut word_out: Vec<Vec<f64>> = vec![vec![0.0; dim]; vocab.len()];

    // Unigram^0.75 negative-sampling table.
    let neg_table = build_negative_table(&counts);

    let total_steps: usize = sentences.iter().map(|s| s.len()).sum::<usize>() * config.epochs;
    let mut step = 0usize;
    for _epoch in 0..config.epochs {
        for sent in &sentences {
            for (pos, &center) in sent.iter().enumerate() {
                step += 1;
                let lr = config.lr * (1.0 - step as f64 / (total_steps + 1) as f64).max(0.05);
                let span = 1 + (rng.random_range(0..config.window.max(1)));
                let lo = pos.saturating_sub(span);
                let hi = (pos + span + 1).min(sent.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let ctx = sent[ctx_pos];
                    sgns_update(
                        center,
                        ctx,
                        &token_grams,
                        &mut word_in,
                        &mut gram_in,
                        &mut word_out,
                        &neg_table,
                        config.negatives,
                        lr,
                        &mut rng,
                    );
                }
            }
        }
    }

    // Final table: composed input representation per token; raw gram vectors.
    let mut token_vectors = BTreeMap::new();
    for (id, tok) in vocab.iter().enumerate() {
        token_vectors.insert(tok.clone(), compose(id, &token_grams, &word_in, &gram_in, dim));
    }
    let mut subword_vectors = BTreeMap::new();
    for (id, gram) in grams.iter().enumerate() {
        subword_vectors.insert(gram.clone(), gram_in[id].clone());
    }
    Ok(EmbeddingTable {
        dim,
        token_vectors,
        subword_vectors,
        n_min: config.n_min,
        n_max: config.n_max,
    })
}

fn build_negative_table(counts: &[u64]) -> Vec<usize> {
    const TABLE: usize = 1 << 16;
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut table = Vec::with_capacity(TABLE);
    let mut cum = 0.0;
    let mut id = 0usize;
    for slot in 0..TABLE {
        let target = (slot as f64 + 0.5) / TABLE as f64;
        while id + 1 < weights.len() && (cum + weights[id]) / total < target {
            cum += weights[id];
            id += 1;
        }
        table.push(id);
    }
    table
}

/// Mean of the word's own vector and its n-gram vectors.
fn compose(
    id: usize,
    token_grams: &[Vec<usize>],
    word_in: &[Vec<f64>],
    gram_in: &[Vec<f64>],
    dim: usize,
) -> Vec<f64> {
    let mut acc = word_in[id].clone();
    for &g in &token_grams[id] {
        for (a, b) in acc.iter_mut().zip(&gram_in[g]) {
            *a += b;
        }
    }
    let n = (1 + token_grams[id].len()) as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    let _ = dim;
    acc
}

#[allow(clippy::too_many_arguments)]
fn sgns_update(
    center: usize,
    ctx: usize,
    token_grams: &[Vec<usize>],
    word_in: &mut [Vec<f64>],
    gram_in: &mut [Vec<f64>],
    word_out: &mut [Vec<f64>],
    neg_table: &[usize],
    negatives: usize,
    lr: f64,
    rng: &mut ChaCha20Rng,
) {
    let dim = word_out[0].len();
    let hidden = compose(center, token_grams, word_in, gram_in, dim);
    let mut hidden_grad = vec![0.0; dim];

    let apply = |target: usize, label: f64, word_out: &mut [Vec<f64>], hidden_grad: &mut [f64]| {
        let out = &mut word_out[target];
        let dot: f64 = hidden.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        let sigma = 1.0 / (1.0 + (-dot).exp());
        let g = (label - sigma) * lr;
        for d in 0..dim {
            hidden_grad[d] += g * out[d];
            out[d] += g * hidden[d];
        }
    };

    apply(ctx, 1.0, word_out, &mut hidden_grad);
    for _ in 0..negatives {
        let neg = neg_table[rng.random_range(0..neg_table.len())];
        if neg == ctx {
            continue;
        }
        apply(neg, 0.0, word_out, &mut hidden_grad);
    }

    // Distribute the hidden gradient over the composed inputs (mean → 1/n).
    let n = (1 + token_grams[center].len()) as f64;
    for d in 0..dim {
        word_in[center][d] += hidden_grad[d] / n;
    }
    for &g in &token_grams[center] {
        for d in 0..dim {
            gram_in[g][d] += hidden_grad[d] / n;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
