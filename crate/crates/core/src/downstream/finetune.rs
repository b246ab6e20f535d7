use std::collections::BTreeSet;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::macro_metrics;
use super::stopping::{EarlyStopper, Observation};
use super::MetricReport;
use crate::corpus::{FeatureStore, LabelSet, SplitSpec, TrackId};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Checkpoint, Mlp, MlpGrads, ModelKind, Schedule, Tensor};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub max_epochs: usize,
    pub l2: f64,
    pub lr_floor: f64,
    pub lr_ceil: f64,
    /// Rise (or fall) of the triangular wave, in epochs.
    pub half_cycle_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub head_hidden: usize,
    /// Backbone widths after the input for runs without pre-training.
    pub scratch_hidden: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            max_epochs: 50,
            l2: 1e-5,
            lr_floor: 1e-5,
            lr_ceil: 1e-4,
            half_cycle_epochs: 2,
            patience: 10,
            batch_size: 32,
            head_hidden: 128,
            scratch_hidden: vec![256, 128],
            adam: AdamConfig::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be in 1..max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 || self.head_hidden == 0 || self.half_cycle_epochs == 0 {
            return Err(Error::Config("batch size, head width and half cycle must be positive".into()));
        }
        if self.scratch_hidden.is_empty() {
            return Err(Error::Config("scratch backbone needs at least one layer".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Schedule::cyclical(self.lr_floor, self.lr_ceil, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Center segment only.
    Valid,
    /// Mean of per-segment probabilities over all segments.
    Test,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Backbone plus a one-hidden-layer sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub backbone: Mlp,
    pub head: Mlp,
    pub tags: Vec<String>,
}

impl Classifier {
    pub fn new(backbone: Mlp, head: Mlp, tags: Vec<String>) -> Result<Self> {
        if backbone.out_dim() != head.in_dim() || head.out_dim() != tags.len() {
            return Err(Error::Shape {
                op: "classifier",
                expected: format!("head {}→{}", backbone.out_dim(), tags.len()),
                got: format!("{}→{}", head.in_dim(), head.out_dim()),
            });
        }
        Ok(Classifier { backbone, head, tags })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.head.infer(&self.backbone.infer(x)?)
    }

    /// Per-segment tag probabilities.
    pub fn predict_segments(&self, segments: &[Vec<f64>]) -> Result<Tensor> {
        let mut p = self.logits(&Tensor::from_rows(segments)?)?;
        p.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(p)
    }

    pub fn predict_track(&self, features: &FeatureStore, track: &str, phase: Phase) -> Result<Vec<f64>> {
        let segs = features.require(track)?;
        match phase {
            Phase::Valid => Ok(self.predict_segments(&segs[segs.len() / 2..segs.len() / 2 + 1])?.row(0).to_vec()),
            Phase::Test => {
                let p = self.predict_segments(segs)?;
                let mut mean = vec![0.0; p.cols()];
                for r in p.iter_rows() {
                    mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= p.rows() as f64);
                Ok(mean)
            }
        }
    }

    pub fn checkpoint(&self, origin: &str, schedule: Option<Schedule>, seed: u64) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Classifier,
            head: Some(self.head.snapshot()),
            tags: Some(self.tags.clone()),
            ..Checkpoint::encoder(&self.backbone, origin, schedule, seed)
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let tags = c
            .tags
            .clone()
            .ok_or_else(|| Error::Validation("classifier checkpoint has no tag list".into()))?;
        Classifier::new(c.backbone()?, c.head()?, tags)
    }

    /// Macro metrics over `tracks` under the given inference rule.
    pub fn evaluate<'t>(
        &self,
        features: &FeatureStore,
        labels: &LabelSet,
        tracks: impl IntoIterator<Item = &'t TrackId>,
        phase: Phase,
    ) -> Result<super::MacroMetrics> {
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for t in tracks {
            truth.push(labels.require(t.as_str())?);
            scores.push(self.predict_track(features, t.as_str(), phase)?);
        }
        macro_metrics(&self.tags, &scores, &truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ap: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    /// Weights restored from the best validation epoch.
    pub classifier: Classifier,
    pub report: MetricReport,
    pub history: Vec<FinetuneEpochLog>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub schedule: Schedule,
}

/// Joint fine-tuning of backbone and head, selected by validation AP.
/// `encoder = None` trains from scratch.
pub fn finetune(
    encoder: Option<&Mlp>,
    features: &FeatureStore,
    labels: &LabelSet,
    splits: &SplitSpec,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    let valid = &splits.valid;
    finetune_with(encoder, features, labels, splits, config, seed, &mut |_, c: &Classifier| {
        Ok(c.evaluate(features, labels, valid, Phase::Valid)?.average_precision)
    })
}

struct Trainable {
    net: Mlp,
    opt: AdamState,
}

impl Trainable {
    fn new(net: Mlp, adam: AdamConfig) -> Self {
        let opt = AdamState::new(adam, &net.param_sizes());
        Trainable { net, opt }
    }

    fn step(&mut self, mut grads: MlpGrads, l2: f64, lr: f64) -> Result<()> {
        for ((gw, _), layer) in grads.layers.iter_mut().zip(self.net.layers()) {
            gw.iter_mut().zip(&layer.weight).for_each(|(g, w)| *g += 2.0 * l2 * w);
        }
        self.opt.step(&mut self.net.params_mut(), &grads.slices(), lr)
    }

    fn penalty(&self) -> f64 {
        self.net.layers().iter().flat_map(|l| &l.weight).map(|w| w * w).sum()
    }
}

/// [`finetune`] with a caller-supplied validation score per epoch
/// (`validate(epoch, current)`, 1-based epochs).
pub fn finetune_with(
    encoder: Option<&Mlp>,
    features: &FeatureStore,
    labels: &LabelSet,
    splits: &SplitSpec,
    config: &FinetuneConfig,
    seed: u64,
    validate: &mut dyn FnMut(usize, &Classifier) -> Result<f64>,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    for (name, s) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        if s.is_empty() {
            return Err(Error::Validation(format!("split `{name}` is empty")));
        }
    }
    labels.validate_for(splits)?;
    for t in splits.all() {
        features.require(t.as_str())?;
    }
    let dim = features.dim();
    let backbone = match encoder {
        Some(b) => {
            if b.in_dim() != dim {
                return Err(Error::Shape {
                    op: "finetune",
                    expected: format!("encoder input {dim}"),
                    got: b.in_dim().to_string(),
                });
            }
            b.clone()
        }
        None => {
            let w: Vec<usize> = std::iter::once(dim).chain(config.scratch_hidden.iter().copied()).collect();
            Mlp::new(&w, &mut rng_for(seed, Stream::Init, 10))?
        }
    };
    let tags = labels.vocabulary().to_vec();
    let head = Mlp::new(
        &[backbone.out_dim(), config.head_hidden, tags.len()],
        &mut rng_for(seed, Stream::Init, 11),
    )?;
    let mut bb = Trainable::new(backbone, config.adam);
    let mut hd = Trainable::new(head, config.adam);

    let train: Vec<&TrackId> = splits.train.iter().collect();
    let steps_per_epoch = train.len().div_ceil(config.batch_size) as u64;
    let schedule = Schedule::cyclical(
        config.lr_floor,
        config.lr_ceil,
        config.half_cycle_epochs as u64 * steps_per_epoch,
    )?;

    let mut stopper: EarlyStopper<Classifier> = EarlyStopper::new(config.patience);
    let mut history = Vec::new();
    let mut step = 0u64;
    let mut stopped_epoch = 0;
    for epoch in 1..=config.max_epochs {
        let mut rng = rng_for(seed, Stream::Finetune, epoch as u64);
        let mut order = train.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(config.batch_size) {
            lr = schedule.lr_at(step);
            let mut xs = Vec::with_capacity(chunk.len());
            let mut ys: Vec<&[bool]> = Vec::with_capacity(chunk.len());
            for t in chunk {
                let segs = features.require(t.as_str())?;
                xs.push(segs[rng.random_range(0..segs.len())].clone());
                ys.push(labels.require(t.as_str())?);
            }
            let x = Tensor::from_rows(&xs)?;
            let z = bb.net.forward(&x)?;
            let logits = hd.net.forward(&z)?;
            let b = chunk.len() as f64;
            let mut g = Tensor::zeros(logits.rows(), logits.cols());
            let mut bce = 0.0;
            for (i, y) in ys.iter().enumerate() {
                for (j, (&l, &t)) in logits.row(i).iter().zip(y.iter()).enumerate() {
                    let t = if t { 1.0 } else { 0.0 };
                    bce += l.max(0.0) - l * t + (-l.abs()).exp().ln_1p();
                    g.row_mut(i)[j] = (sigmoid(l) - t) / b;
                }
            }
            loss_sum += bce / b + config.l2 * (bb.penalty() + hd.penalty());
            let (gh, gz) = hd.net.backward(&g)?;
            let (gb, _) = bb.net.backward(&gz)?;
            hd.step(gh, config.l2, lr)?;
            bb.step(gb, config.l2, lr)?;
            step += 1;
        }
        let current = Classifier::new(bb.net.clone(), hd.net.clone(), tags.clone())?;
        let val_ap = validate(epoch, &current)?;
        let entry = FinetuneEpochLog {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_ap,
            lr,
        };
        info!(
            "finetune epoch {epoch}: train loss {:.5}, val AP {:.5}, lr {:.3e}",
            entry.train_loss, entry.val_ap, entry.lr
        );
        history.push(entry);
        stopped_epoch = epoch;
        if stopper.observe(val_ap, || current) == Observation::Stop {
            break;
        }
    }
    let (best_epoch, _, classifier) = stopper
        .into_best()
        .ok_or_else(|| Error::Validation("validation score was never finite".into()))?;
    let test: BTreeSet<&TrackId> = splits.test.iter().collect();
    let test_metrics = classifier.evaluate(features, labels, test, Phase::Test)?;
    let report = MetricReport {
        seed,
        ..MetricReport::default()
    }
    .with_classification(test_metrics);
    Ok(FinetuneOutcome {
        classifier,
        report,
        history,
        best_epoch,
        stopped_epoch,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn head_constant(p: &[f64]) -> Classifier {
        // zero backbone/head weights; head bias sets the logit directly
        let backbone = Mlp::zeros(&[2, 3]).unwrap();
        let mut head = Mlp::zeros(&[3, 2, p.len()]).unwrap();
        let last = head.layers_mut().last_mut().unwrap();
        for (b, q) in last.bias.iter_mut().zip(p) {
            *b = (q / (1.0 - q)).ln();
        }
        let tags = (0..p.len()).map(|i| format!("t{i}")).collect();
        Classifier::new(backbone, head, tags).unwrap()
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_segment_phases_agree() {
        let mut data = BTreeMap::new();
        data.insert(TrackId::new("a").unwrap(), vec![vec![0.3, -0.2]]);
        let fs = FeatureStore::new(2, data).unwrap();
        let c = head_constant(&[0.3, 0.7]);
        let v = c.predict_track(&fs, "a", Phase::Valid).unwrap();
        let t = c.predict_track(&fs, "a", Phase::Test).unwrap();
        assert_eq!(v, t);
        assert!((v[0] - 0.3).abs() < 1e-12);
        assert!(c.predict_track(&fs, "zz", Phase::Test).is_err());
    }

    #[test]
    fn test_phase_averages_probabilities() {
        // inputs are shifted positive so the hidden ReLU passes them; the
        // output bias undoes the shift, leaving logit(p) per segment
        let mut backbone = Mlp::zeros(&[1, 1]).unwrap();
        backbone.layers_mut()[0].weight[0] = 1.0;
        let mut head = Mlp::zeros(&[1, 1, 1]).unwrap();
        head.layers_mut()[0].weight[0] = 1.0;
        head.layers_mut()[1].weight[0] = 1.0;
        head.layers_mut()[1].bias[0] = -10.0;
        let c = Classifier::new(backbone, head, vec!["x".into()]).unwrap();
        let x = |p: f64| (p / (1.0 - p)).ln() + 10.0;
        let mut data = BTreeMap::new();
        data.insert(TrackId::new("a").unwrap(), vec![vec![x(0.2)], vec![x(0.4)], vec![x(0.6)]]);
        let fs = FeatureStore::new(1, data).unwrap();
        let got = c.predict_track(&fs, "a", Phase::Test).unwrap()[0];
        assert!((got - 0.4).abs() < 1e-12);
        let centre = c.predict_track(&fs, "a", Phase::Valid).unwrap()[0];
        assert!((centre - 0.4).abs() < 1e-12);
        let per = c.predict_segments(fs.segments("a").unwrap()).unwrap();
        let mean = per.iter_rows().map(|r| r[0]).sum::<f64>() / 3.0;
        assert_eq!(got, mean);
    }

    #[test]
    fn rejects_bad_patience() {
        let cfg = FinetuneConfig {
            patience: 50,
            ..FinetuneConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
