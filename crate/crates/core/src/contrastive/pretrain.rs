use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ntxent::nt_xent_loss;
use crate::cooccur::{build_topk, count_cooccurrences, TopKIndex};
use crate::corpus::{ArtistMap, FeatureStore, PlaylistCorpus, TrackId};
use crate::embed::W2VModel;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Checkpoint, Mlp, Schedule, Tensor};
use crate::pairgen::{simclr_views, EpochPairs, MixingGain, PairSource, Side, Strategy};
use crate::seed::{rng_for, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtXentConfig {
    pub temperature: f64,
    pub batch_size: usize,
}

impl Default for NtXentConfig {
    fn default() -> Self {
        NtXentConfig {
            temperature: 0.1,
            batch_size: 384,
        }
    }
}

/// Warmup length, either absolute or as a fraction of the total step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Warmup {
    Steps(u64),
    Fraction(f64),
}

impl Warmup {
    fn steps(self, total: u64) -> u64 {
        match self {
            Warmup::Steps(s) => s,
            Warmup::Fraction(f) => ((total as f64 * f).round() as u64).min(total.saturating_sub(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub strategy: Strategy,
    pub epochs: u64,
    pub peak_lr: f64,
    pub warmup: Warmup,
    /// Backbone widths after the input layer; the last entry is the embedding size.
    pub backbone_hidden: Vec<usize>,
    /// Projection head widths after the embedding.
    pub projector: Vec<usize>,
    pub top_k: usize,
    pub mixing: MixingGain,
    pub adam: AdamConfig,
    pub ntxent: NtXentConfig,
}

impl PretrainConfig {
    /// Full-scale hyperparameters: 50 epochs, batch 384, peak 1e-4 after 5000 warmup steps.
    pub fn reference(strategy: Strategy) -> Self {
        PretrainConfig {
            strategy,
            epochs: 50,
            peak_lr: 1e-4,
            warmup: Warmup::Steps(5000),
            backbone_hidden: vec![256, 128],
            projector: vec![128, 128],
            top_k: 10,
            mixing: MixingGain::default(),
            adam: AdamConfig::default(),
            ntxent: NtXentConfig::default(),
        }
    }

    /// Same architecture, loss and epoch count for corpora of a few thousand
    /// tracks. Such runs have well under 5000 steps in total, so warmup is a
    /// fraction of the run and the peak rate is raised to compensate.
    pub fn desk(strategy: Strategy) -> Self {
        PretrainConfig {
            epochs: 50,
            peak_lr: 1e-2,
            warmup: Warmup::Fraction(0.1),
            ntxent: NtXentConfig {
                temperature: 0.1,
                batch_size: 64,
            },
            ..Self::reference(strategy)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs ≥ 1 required".into()));
        }
        if self.ntxent.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.ntxent.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::Config("peak learning rate must be positive".into()));
        }
        if let Warmup::Fraction(f) = self.warmup {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("warmup fraction must be in [0, 1), got {f}")));
            }
        }
        if self.backbone_hidden.is_empty() || self.projector.is_empty() {
            return Err(Error::Config("backbone and projector need at least one layer".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top-k must be positive".into()));
        }
        self.mixing.distribution()?;
        Ok(())
    }
}

/// Inputs shared by all strategies. `artists` is needed for
/// [`Strategy::ArtistCo`] and `w2v` for [`Strategy::W2v`].
#[derive(Clone, Copy)]
pub struct PretrainData<'a> {
    pub corpus: &'a PlaylistCorpus,
    pub features: &'a FeatureStore,
    pub artists: Option<&'a ArtistMap>,
    pub w2v: Option<&'a W2VModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub mean_loss: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub pair_count: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEncoder {
    pub backbone: Mlp,
    pub strategy: Strategy,
    pub schedule: Schedule,
    pub seed: u64,
    pub history: Vec<EpochLog>,
}

impl PretrainedEncoder {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::encoder(&self.backbone, self.strategy.as_str(), Some(self.schedule), self.seed)
    }
}

/// Mean backbone output over every segment of each requested track.
pub fn embed_tracks<'t>(
    backbone: &Mlp,
    features: &FeatureStore,
    tracks: impl IntoIterator<Item = &'t TrackId>,
) -> Result<BTreeMap<TrackId, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for t in tracks {
        let segs = features.require(t.as_str())?;
        let h = backbone.infer(&Tensor::from_rows(segs)?)?;
        let mut mean = vec![0.0; h.cols()];
        for row in h.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let k = h.rows() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        out.insert(t.clone(), mean);
    }
    Ok(out)
}

struct Module {
    net: Mlp,
    opt: AdamState,
}

impl Module {
    fn new(widths: &[usize], adam: AdamConfig, rng: &mut Rng) -> Result<Self> {
        let net = Mlp::new(widths, rng)?;
        let opt = AdamState::new(adam, &net.param_sizes());
        Ok(Module { net, opt })
    }

    fn apply(&mut self, grads: &crate::nn::MlpGrads, lr: f64) -> Result<()> {
        let g = grads.slices();
        self.opt.step(&mut self.net.params_mut(), &g, lr)
    }
}

fn widths(input: usize, rest: &[usize]) -> Vec<usize> {
    std::iter::once(input).chain(rest.iter().copied()).collect()
}

fn source<'a>(data: &PretrainData<'a>, strategy: Strategy, topk: &'a Option<TopKIndex>) -> Result<PairSource<'a>> {
    let reg = data.corpus.registry();
    Ok(match strategy {
        Strategy::Co => PairSource::Co(data.corpus),
        Strategy::Tco => PairSource::Tco(topk.as_ref().expect("top-k index built for TCO")),
        Strategy::ArtistCo => PairSource::ArtistCo(
            data.artists
                .ok_or_else(|| Error::Config("the artist strategy needs an artist map".into()))?,
        ),
        Strategy::W2v => PairSource::W2v(
            reg,
            data.w2v
                .ok_or_else(|| Error::Config("the w2v strategy needs a trained word2vec model".into()))?,
        ),
        Strategy::SimClr => PairSource::SimClr(reg),
    })
}

fn check_coverage(data: &PretrainData<'_>, epochs: &[EpochPairs]) -> Result<()> {
    for ep in epochs {
        for p in &ep.pairs {
            for r in [&p.x, &p.y] {
                if r.side == Side::AudioSegment {
                    data.features.require(r.track.as_str())?;
                }
            }
        }
    }
    Ok(())
}

fn random_segment<'f>(features: &'f FeatureStore, track: &TrackId, rng: &mut Rng) -> Result<&'f [f64]> {
    let segs = features.require(track.as_str())?;
    Ok(&segs[rng.random_range(0..segs.len())])
}

/// Contrastive pre-training of backbone + projector with NT-Xent.
///
/// Pairs for every epoch are generated before training so the total step
/// count, and therefore the cosine schedule, is known exactly. Within an
/// epoch pairs are shuffled and chunked; a trailing chunk with fewer than two
/// pairs is dropped. Only the backbone is returned.
pub fn pretrain(data: PretrainData<'_>, config: &PretrainConfig, seed: u64) -> Result<PretrainedEncoder> {
    config.validate()?;
    let strategy = config.strategy;
    let topk = if strategy == Strategy::Tco {
        Some(build_topk(&count_cooccurrences(data.corpus), config.top_k)?)
    } else {
        None
    };
    let src = source(&data, strategy, &topk)?;
    let batch = config.ntxent.batch_size;
    let tau = config.ntxent.temperature;

    let epochs: Vec<EpochPairs> = (0..config.epochs).map(|e| src.epoch(seed, e)).collect();
    for (e, ep) in epochs.iter().enumerate() {
        if ep.len() < 2 {
            return Err(Error::Validation(format!(
                "strategy {strategy} produced {} pairs in epoch {e}; at least 2 are required",
                ep.len()
            )));
        }
    }
    check_coverage(&data, &epochs)?;
    let batches_in = |n: usize| (n / batch + usize::from(n % batch >= 2)) as u64;
    let total_steps: u64 = epochs.iter().map(|e| batches_in(e.len())).sum();
    let schedule = Schedule::warmup_cosine(config.peak_lr, config.warmup.steps(total_steps), total_steps)?;

    let dim = data.features.dim();
    let emb = *config.backbone_hidden.last().expect("validated");
    let mut backbone = Module::new(&widths(dim, &config.backbone_hidden), config.adam, &mut rng_for(seed, Stream::Init, 0))?;
    let mut proj = Module::new(&widths(emb, &config.projector), config.adam, &mut rng_for(seed, Stream::Init, 1))?;
    // frozen word2vec targets get their own projection
    let mut proj_y = match (strategy, data.w2v) {
        (Strategy::W2v, Some(m)) => Some(Module::new(
            &widths(m.dim(), &config.projector),
            config.adam,
            &mut rng_for(seed, Stream::Init, 2),
        )?),
        _ => None,
    };

    let mut history = Vec::with_capacity(epochs.len());
    let mut step = 0u64;
    for (e, ep) in epochs.iter().enumerate() {
        let e = e as u64;
        let mut order: Vec<usize> = (0..ep.len()).collect();
        order.shuffle(&mut rng_for(seed, Stream::Batches, e));
        let mut seg_rng = rng_for(seed, Stream::Segments, e);
        let mut mix_rng = rng_for(seed, Stream::Mixing, e);
        let lr_start = schedule.lr_at(step);
        let mut loss_sum = 0.0;
        let mut n_steps = 0u64;
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let lr = schedule.lr_at(step);
            let pairs: Vec<_> = chunk.iter().map(|&i| &ep.pairs[i]).collect();
            let mut xs: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
            let mut ys: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
            match strategy {
                Strategy::SimClr => {
                    let segs = pairs
                        .iter()
                        .map(|p| random_segment(data.features, &p.x.track, &mut seg_rng))
                        .collect::<Result<Vec<_>>>()?;
                    for (a, b) in simclr_views(&segs, &config.mixing, &mut mix_rng)? {
                        xs.push(a);
                        ys.push(b);
                    }
                }
                Strategy::W2v => {
                    let m = data.w2v.expect("checked by source");
                    for p in &pairs {
                        xs.push(random_segment(data.features, &p.x.track, &mut seg_rng)?.to_vec());
                        ys.push(m.embedding(p.y.track.as_str())?.to_vec());
                    }
                }
                _ => {
                    for p in &pairs {
                        xs.push(random_segment(data.features, &p.x.track, &mut seg_rng)?.to_vec());
                        ys.push(random_segment(data.features, &p.y.track, &mut seg_rng)?.to_vec());
                    }
                }
            }
            let x = Tensor::from_rows(&xs)?;
            let y = Tensor::from_rows(&ys)?;
            let n = x.rows();
            let loss = match proj_y.as_mut() {
                None => {
                    let h = backbone.net.forward(&x.vstack(&y)?)?;
                    let z = proj.net.forward(&h)?;
                    let (zx, zy) = z.split_rows(n);
                    let out = nt_xent_loss(&zx, &zy, tau)?;
                    let (gp, gh) = proj.net.backward(&out.grad_x.vstack(&out.grad_y)?)?;
                    let (gb, _) = backbone.net.backward(&gh)?;
                    proj.apply(&gp, lr)?;
                    backbone.apply(&gb, lr)?;
                    out.loss
                }
                Some(py) => {
                    let zx = proj.net.forward(&backbone.net.forward(&x)?)?;
                    let zy = py.net.forward(&y)?;
                    let out = nt_xent_loss(&zx, &zy, tau)?;
                    let (gp, gh) = proj.net.backward(&out.grad_x)?;
                    let (gb, _) = backbone.net.backward(&gh)?;
                    let (gpy, _) = py.net.backward(&out.grad_y)?;
                    proj.apply(&gp, lr)?;
                    backbone.apply(&gb, lr)?;
                    py.apply(&gpy, lr)?;
                    out.loss
                }
            };
            debug!("{strategy} epoch {e} step {step}: loss {loss:.6} lr {lr:.3e}");
            loss_sum += loss;
            n_steps += 1;
            step += 1;
        }
        let log = EpochLog {
            epoch: e,
            mean_loss: loss_sum / n_steps as f64,
            lr_start,
            lr_end: schedule.lr_at(step.saturating_sub(1)),
            pair_count: ep.len(),
            steps: n_steps,
        };
        info!("{strategy} epoch {e}: mean loss {:.5}, {} pairs", log.mean_loss, log.pair_count);
        history.push(log);
    }

    Ok(PretrainedEncoder {
        backbone: backbone.net,
        strategy,
        schedule,
        seed,
        history,
    })
}
