//! Word2Vec CBOW track embeddings with negative sampling.
//!
//! Playlists are sentences and tracks are words. The context of a centre
//! track is the whole rest of its playlist, averaged. Noise tracks are drawn
//! from the unigram distribution raised to the 3/4 power.

use std::collections::HashMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_text, write_bytes, PlaylistCorpus, TrackId};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W2VConfig {
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub lr_floor: f64,
}

impl Default for W2VConfig {
    fn default() -> Self {
        W2VConfig {
            dim: 128,
            lr: 0.02,
            epochs: 20,
            negatives: 5,
            min_count: 1,
            lr_floor: 1e-4,
        }
    }
}

impl W2VConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if !(self.lr > self.lr_floor && self.lr_floor > 0.0) {
            return Err(Error::Config(format!(
                "need lr > lr_floor > 0, got lr={} floor={}",
                self.lr, self.lr_floor
            )));
        }
        if self.epochs == 0 || self.negatives == 0 {
            return Err(Error::Config("epochs and negatives must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct W2VModel {
    dim: usize,
    vocab: Vec<TrackId>,
    index: HashMap<TrackId, usize>,
    input: Vec<f64>,
    output: Vec<f64>,
    config: W2VConfig,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct W2VFile {
    dim: usize,
    vocab: Vec<TrackId>,
    input_vectors: Vec<f64>,
    config: W2VConfig,
    seed: u64,
}

/// One training example: averaged context, the centre, and noise tracks.
#[derive(Debug, Clone)]
pub struct CbowExample<'a> {
    pub context: &'a [usize],
    pub center: usize,
    pub negatives: &'a [usize],
}

/// Gradient of the negative-sampling loss for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct CbowGrad {
    pub loss: f64,
    /// Shared by every context row (the mean's 1/|context| folded in).
    pub context_row: Vec<f64>,
    /// `(vocab index, gradient)` for the centre and each negative, in order.
    pub output_rows: Vec<(usize, Vec<f64>)>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl W2VModel {
    /// Seeded initial model: input rows uniform in ±0.5/dim, output rows zero.
    pub fn init(vocab: Vec<TrackId>, config: W2VConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let mut rng = rng_for(seed, Stream::Word2Vec, 0);
        let bound = 0.5 / dim as f64;
        let input = (0..vocab.len() * dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(W2VModel {
            dim,
            output: vec![0.0; vocab.len() * dim],
            vocab,
            index,
            input,
            config,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[TrackId] {
        &self.vocab
    }

    pub fn config(&self) -> &W2VConfig {
        &self.config
    }

    pub fn contains(&self, track: &str) -> bool {
        self.index.contains_key(track)
    }

    pub fn index_of(&self, track: &str) -> Option<usize> {
        self.index.get(track).copied()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.output[i * self.dim..(i + 1) * self.dim]
    }

    /// The track's input vector.
    pub fn embedding(&self, track: &str) -> Result<&[f64]> {
        self.index_of(track)
            .map(|i| self.input_row(i))
            .ok_or_else(|| Error::UnknownTrack(track.to_string()))
    }

    pub fn context_mean(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            for (a, b) in h.iter_mut().zip(self.input_row(c)) {
                *a += b;
            }
        }
        let inv = 1.0 / context.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    /// `-ln σ(h·o_c) - Σ ln σ(-h·o_n)`.
    pub fn cbow_loss(&self, ex: &CbowExample<'_>) -> f64 {
        let h = self.context_mean(ex.context);
        let mut loss = neg_log_sigmoid(dot(&h, self.output_row(ex.center)));
        for &n in ex.negatives {
            loss += neg_log_sigmoid(-dot(&h, self.output_row(n)));
        }
        loss
    }

    pub fn cbow_grad(&self, ex: &CbowExample<'_>) -> CbowGrad {
        let h = self.context_mean(ex.context);
        let mut grad_h = vec![0.0; self.dim];
        let mut output_rows = Vec::with_capacity(1 + ex.negatives.len());
        let mut loss = 0.0;
        let targets = std::iter::once((ex.center, 1.0)).chain(ex.negatives.iter().map(|&n| (n, 0.0)));
        for (w, label) in targets {
            let o = self.output_row(w);
            let s = dot(&h, o);
            loss += if label == 1.0 {
                neg_log_sigmoid(s)
            } else {
                neg_log_sigmoid(-s)
            };
            // d/ds of the logistic loss
            let g = sigmoid(s) - label;
            for (gh, ov) in grad_h.iter_mut().zip(o) {
                *gh += g * ov;
            }
            output_rows.push((w, h.iter().map(|v| g * v).collect()));
        }
        let inv = 1.0 / ex.context.len() as f64;
        grad_h.iter_mut().for_each(|v| *v *= inv);
        CbowGrad {
            loss,
            context_row: grad_h,
            output_rows,
        }
    }

    /// One SGD step on a single example; returns the pre-step loss.
    pub fn sgd_step(&mut self, ex: &CbowExample<'_>, lr: f64) -> f64 {
        let g = self.cbow_grad(ex);
        for &c in ex.context {
            for (p, d) in self.input_row_mut(c).iter_mut().zip(&g.context_row) {
                *p -= lr * d;
            }
        }
        for (w, d) in &g.output_rows {
            for (p, dv) in self.output_row_mut(*w).iter_mut().zip(d) {
                *p -= lr * dv;
            }
        }
        g.loss
    }

    /// The `w2v.json` encoding.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let f = W2VFile {
            dim: self.dim,
            vocab: self.vocab.clone(),
            input_vectors: self.input.clone(),
            config: self.config,
            seed: self.seed,
        };
        let mut v = serde_json::to_vec(&f)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    /// Loads input vectors; output vectors are not persisted.
    pub fn load(path: &Path) -> Result<Self> {
        let f: W2VFile = serde_json::from_str(&read_text(path)?)?;
        if f.input_vectors.len() != f.vocab.len() * f.dim {
            return Err(Error::Validation(format!(
                "{}: expected {} input values, found {}",
                path.display(),
                f.vocab.len() * f.dim,
                f.input_vectors.len()
            )));
        }
        if f.input_vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "w2v_load" });
        }
        let index = f.vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(W2VModel {
            dim: f.dim,
            output: vec![0.0; f.vocab.len() * f.dim],
            vocab: f.vocab,
            index,
            input: f.input_vectors,
            config: f.config,
            seed: f.seed,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct W2VTrainLog {
    pub epoch_mean_loss: Vec<f64>,
    pub vocab_size: usize,
    pub center_visits: u64,
}

/// Trains CBOW with full-playlist context windows. Playlists are visited in
/// corpus order; lr decays linearly from `config.lr` to `config.lr_floor`
/// across all centre visits.
pub fn train_cbow(corpus: &PlaylistCorpus, config: &W2VConfig, seed: u64) -> Result<(W2VModel, W2VTrainLog)> {
    config.validate()?;
    let reg = corpus.registry();
    let mut freq = vec![0usize; reg.len()];
    for p in corpus.playlists() {
        for &t in &p.tracks {
            freq[t] += 1;
        }
    }
    let kept: Vec<usize> = (0..reg.len()).filter(|&t| freq[t] >= config.min_count.max(1)).collect();
    let mut to_vocab = vec![usize::MAX; reg.len()];
    for (v, &t) in kept.iter().enumerate() {
        to_vocab[t] = v;
    }
    let sentences: Vec<Vec<usize>> = corpus
        .playlists()
        .iter()
        .map(|p| p.tracks.iter().map(|&t| to_vocab[t]).filter(|&v| v != usize::MAX).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() >= 2)
        .collect();
    if sentences.is_empty() {
        return Err(Error::Validation("no CBOW contexts: every playlist has fewer than 2 tracks".into()));
    }
    let vocab: Vec<TrackId> = kept.iter().map(|&t| reg.id(t).clone()).collect();
    let mut model = W2VModel::init(vocab, *config, seed)?;

    let weights: Vec<f64> = kept.iter().map(|&t| (freq[t] as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
    let per_epoch: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let total = per_epoch * config.epochs as u64;
    let mut visits = 0u64;
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
    let mut context = Vec::new();
    let mut negatives = Vec::with_capacity(config.negatives);

    for epoch in 0..config.epochs {
        let mut rng = rng_for(seed, Stream::Word2Vec, 1 + epoch as u64);
        let mut loss_sum = 0.0;
        for s in &sentences {
            for (pos, &center) in s.iter().enumerate() {
                let lr = (config.lr - (config.lr - config.lr_floor) * visits as f64 / total as f64)
                    .max(config.lr_floor);
                context.clear();
                context.extend(s.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, &t)| t));
                negatives.clear();
                for _ in 0..config.negatives {
                    let n = noise.sample(&mut rng);
                    // noise equal to the centre is dropped
                    if n != center {
                        negatives.push(n);
                    }
                }
                let ex = CbowExample {
                    context: &context,
                    center,
                    negatives: &negatives,
                };
                loss_sum += model.sgd_step(&ex, lr);
                visits += 1;
            }
        }
        if model.input.iter().chain(&model.output).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "cbow_epoch" });
        }
        epoch_mean_loss.push(loss_sum / per_epoch as f64);
    }
    let log = W2VTrainLog {
        epoch_mean_loss,
        vocab_size: model.vocab.len(),
        center_visits: visits,
    };
    Ok((model, log))
}
