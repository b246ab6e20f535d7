//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Oracles here are written from the metric and
//! loss definitions, not from the library code.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use playpair::contrastive::{embed_tracks, nt_xent_loss, pretrain, PretrainConfig, PretrainData};
use playpair::cooccur::{build_topk, count_cooccurrences};
use playpair::corpus::{PlaylistCorpus, TrackId};
use playpair::downstream::{
    average_precision, evaluate_triplets, finetune, finetune_with, macro_metrics, roc_auc, Classifier, EarlyStopper,
    FinetuneConfig, Observation,
};
use playpair::embed::{train_cbow, W2VConfig};
use playpair::nn::{Mlp, Schedule, Tensor};
use playpair::pairgen::{simclr_views, MixingGain, PairSource, Strategy};
use playpair::seed::{rng_for, Stream};
use playpair::synth::{generate_world, planted_clusters, SynthConfig, SynthWorld};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// ---------------------------------------------------------------- 1

/// Direct softmax over all 2N views, no log-sum-exp.
fn nt_xent_oracle(x: &[Vec<f64>], y: &[Vec<f64>], tau: f64) -> f64 {
    let n = x.len();
    let views: Vec<&Vec<f64>> = x.iter().chain(y.iter()).collect();
    let mut total = 0.0;
    for i in 0..2 * n {
        let partner = if i < n { i + n } else { i - n };
        let mut den = 0.0;
        for k in 0..2 * n {
            if k != i {
                den += (cosine(views[i], views[k]) / tau).exp();
            }
        }
        let num = (cosine(views[i], views[partner]) / tau).exp();
        total += -(num / den).ln();
    }
    total / (2 * n) as f64
}

fn criterion_nt_xent() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    let mut worst_loss: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for b in 0..200 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(2..=16);
        let tau = rng.random_range(0.1..1.0);
        let gen = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let x = gen(&mut rng);
        let y = gen(&mut rng);
        let out = nt_xent_loss(&Tensor::from_rows(&x).unwrap(), &Tensor::from_rows(&y).unwrap(), tau)
            .map_err(|e| format!("batch {b}: {e}"))?;
        let oracle = nt_xent_oracle(&x, &y, tau);
        let rel = (out.loss - oracle).abs() / oracle.abs().max(1e-300);
        worst_loss = worst_loss.max(rel);
        ensure(rel <= 1e-9, || format!("batch {b}: loss {} vs oracle {oracle} (rel {rel:e})", out.loss))?;

        let analytic: Vec<f64> = out.grad_x.data().iter().chain(out.grad_y.data()).copied().collect();
        let mut flat: Vec<f64> = x.iter().chain(y.iter()).flatten().copied().collect();
        for (k, &a) in analytic.iter().enumerate() {
            let orig = flat[k];
            let eval = |v: f64, flat: &mut Vec<f64>| {
                flat[k] = v;
                let rows: Vec<Vec<f64>> = flat.chunks(d).map(|c| c.to_vec()).collect();
                nt_xent_oracle(&rows[..n], &rows[n..], tau)
            };
            let numeric = (eval(orig + h, &mut flat) - eval(orig - h, &mut flat)) / (2.0 * h);
            flat[k] = orig;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst_grad = worst_grad.max(rel);
            ensure(rel <= 1e-4, || format!("batch {b} coord {k}: grad {a} vs fd {numeric} (rel {rel:e})"))?;
        }
    }
    Ok(format!("200 batches, max loss rel err {worst_loss:.1e}, max grad rel err {worst_grad:.1e}"))
}

// ---------------------------------------------------------------- 2

fn auc_pairs_oracle(s: &[f64], l: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Precision/recall at every distinct threshold, highest first.
fn ap_curve_oracle(s: &[f64], l: &[bool]) -> Option<f64> {
    let n_pos = l.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == l.len() {
        return None;
    }
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = s.iter().zip(l).filter(|(v, y)| **v >= t && **y).count() as f64;
        let fp = s.iter().zip(l).filter(|(v, y)| **v >= t && !**y).count() as f64;
        let recall = tp / n_pos as f64;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    Some(ap)
}

fn criterion_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut excluded_seen = 0;
    for set in 0..500 {
        let n = rng.random_range(2..=200);
        let n_tags = rng.random_range(1..=5);
        let tied = rng.random_bool(0.5);
        let mut scores = vec![vec![0.0; n_tags]; n];
        let mut labels = vec![vec![false; n_tags]; n];
        for j in 0..n_tags {
            let p = rng.random_range(0.0..1.0);
            for i in 0..n {
                scores[i][j] = if tied {
                    rng.random_range(0..8) as f64 / 8.0
                } else {
                    rng.random_range(0.0..1.0)
                };
                labels[i][j] = rng.random_bool(p);
            }
        }
        let tags: Vec<String> = (0..n_tags).map(|j| format!("t{j}")).collect();
        let mut expected = Vec::new();
        for j in 0..n_tags {
            let s: Vec<f64> = scores.iter().map(|r| r[j]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[j]).collect();
            let (auc, ap) = (auc_pairs_oracle(&s, &l), ap_curve_oracle(&s, &l));
            let got_auc = roc_auc(&s, &l).map_err(|e| e.to_string())?;
            let got_ap = average_precision(&s, &l).map_err(|e| e.to_string())?;
            ensure(got_auc.is_some() == auc.is_some() && got_ap.is_some() == ap.is_some(), || {
                format!("set {set} tag {j}: degenerate handling differs")
            })?;
            if let (Some(a), Some(p), Some(ga), Some(gp)) = (auc, ap, got_auc, got_ap) {
                worst = worst.max((a - ga).abs()).max((p - gp).abs());
                ensure((a - ga).abs() <= 1e-12 && (p - gp).abs() <= 1e-12, || {
                    format!("set {set} tag {j}: auc {ga} vs {a}, ap {gp} vs {p}")
                })?;
                expected.push((a, p));
            } else {
                excluded_seen += 1;
            }
        }
        match macro_metrics(&tags, &scores, &labels) {
            Ok(m) => {
                ensure(!expected.is_empty(), || format!("set {set}: expected an error"))?;
                let k = expected.len() as f64;
                let auc = expected.iter().map(|e| e.0).sum::<f64>() / k;
                let ap = expected.iter().map(|e| e.1).sum::<f64>() / k;
                worst = worst.max((auc - m.roc_auc).abs()).max((ap - m.average_precision).abs());
                ensure((auc - m.roc_auc).abs() <= 1e-12 && (ap - m.average_precision).abs() <= 1e-12, || {
                    format!("set {set}: macro {} / {} vs {auc} / {ap}", m.roc_auc, m.average_precision)
                })?;
                ensure(m.excluded.len() == n_tags - expected.len(), || format!("set {set}: excluded count"))?;
            }
            Err(_) => ensure(expected.is_empty(), || format!("set {set}: unexpected error"))?,
        }
    }

    let l = [true, true, false, false, false];
    let up = [0.9, 0.8, 0.3, 0.2, 0.1];
    let down = [0.1, 0.2, 0.7, 0.8, 0.9];
    let flat = [0.4; 5];
    let r = |v: Result<Option<f64>, playpair::Error>| v.unwrap().unwrap();
    ensure(r(roc_auc(&up, &l)) == 1.0, || "perfect AUC != 1".into())?;
    ensure(r(roc_auc(&down, &l)) == 0.0, || "inverted AUC != 0".into())?;
    ensure(r(roc_auc(&flat, &l)) == 0.5, || "tied AUC != 0.5".into())?;
    ensure(r(average_precision(&up, &l)) == 1.0, || "perfect AP != 1".into())?;
    let last = [false, false, false, false, true];
    ensure(r(average_precision(&up, &last)) == 1.0 / 5.0, || "positive-last AP != 1/m".into())?;
    Ok(format!("500 sets, max abs diff {worst:.1e}, {excluded_seen} degenerate tags handled, extremes exact"))
}

// ---------------------------------------------------------------- 3

fn random_lists(rng: &mut ChaCha8Rng, disjoint: bool) -> Vec<Vec<String>> {
    let vocab = rng.random_range(4..=40);
    let n_lists = rng.random_range(1..=12);
    if disjoint {
        let mut ids: Vec<usize> = (0..vocab).collect();
        ids.shuffle(rng);
        let mut lists = vec![Vec::new(); n_lists];
        for (k, t) in ids.into_iter().enumerate() {
            lists[k % n_lists].push(format!("t{t}"));
        }
        lists.retain(|l| !l.is_empty());
        lists
    } else {
        (0..n_lists)
            .map(|_| {
                let len = rng.random_range(1..=12);
                (0..len).map(|_| format!("t{}", rng.random_range(0..vocab))).collect()
            })
            .collect()
    }
}

fn criterion_pairs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut co_total, mut tco_total) = (0, 0);
    for c in 0..1000 {
        let disjoint = c % 4 == 0;
        let lists = random_lists(&mut rng, disjoint);
        let corpus = PlaylistCorpus::from_lists(&lists).map_err(|e| e.to_string())?;
        let sets: Vec<HashSet<&str>> = lists.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
        let bound: usize = sets.iter().map(|s| s.len() / 2).sum();
        let mut counts: HashMap<(&str, &str), u32> = HashMap::new();
        for s in &sets {
            for a in s {
                for b in s {
                    if a != b {
                        *counts.entry((a, b)).or_default() += 1;
                    }
                }
            }
        }
        let k = rng.random_range(1..=5);
        let index = build_topk(&count_cooccurrences(&corpus), k).map_err(|e| e.to_string())?;
        let seed = rng.random::<u64>();
        let epoch = rng.random_range(0..5);

        for source in [PairSource::Co(&corpus), PairSource::Tco(&index)] {
            let name = source.strategy();
            let pairs = source.epoch(seed, epoch);
            ensure(pairs == source.epoch(seed, epoch), || format!("corpus {c} {name}: not reproducible"))?;
            let mut used = HashSet::new();
            for p in &pairs.pairs {
                let (x, y) = (p.x.track.as_str(), p.y.track.as_str());
                ensure(used.insert(x) && used.insert(y), || format!("corpus {c} {name}: repeated track"))?;
                let cxy = counts.get(&(x, y)).copied().unwrap_or(0);
                ensure(cxy > 0, || format!("corpus {c} {name}: {x},{y} never co-occur"))?;
                if name == Strategy::Tco {
                    let stronger = counts.iter().filter(|((a, _), &v)| *a == x && v > cxy).count();
                    ensure(stronger < k, || format!("corpus {c}: {y} is outside top-{k} of {x}"))?;
                }
            }
            match name {
                Strategy::Co => {
                    ensure(pairs.len() <= bound, || format!("corpus {c}: CO count {} > {bound}", pairs.len()))?;
                    ensure(!disjoint || pairs.len() == bound, || {
                        format!("corpus {c}: disjoint CO count {} != {bound}", pairs.len())
                    })?;
                    co_total += pairs.len();
                }
                _ => tco_total += pairs.len(),
            }
        }
    }
    Ok(format!("1000 corpora, {co_total} CO and {tco_total} TCO pairs checked"))
}

// ---------------------------------------------------------------- 4

fn criterion_beta() -> Check {
    // With segments [1] and [0], a view of segment 0 equals its gain.
    let one = [1.0];
    let zero = [0.0];
    let batch: Vec<&[f64]> = vec![&one, &zero];
    let gain = MixingGain::default();
    let mut rng = rng_for(404, Stream::Mixing, 0);
    let mut samples = Vec::with_capacity(10_000);
    while samples.len() < 10_000 {
        let views = simclr_views(&batch, &gain, &mut rng).map_err(|e| e.to_string())?;
        samples.push(views[0].0[0]);
        samples.push(views[0].1[0]);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    ensure(samples.iter().all(|g| (0.0..=1.0).contains(g)), || "gain outside [0, 1]".into())?;
    ensure((mean - 0.714).abs() <= 0.02, || format!("sample mean {mean:.4}"))?;
    Ok(format!("10000 gains, mean {mean:.4} (analytic {:.4})", gain.mean()))
}

// ---------------------------------------------------------------- 5

fn criterion_schedules() -> Check {
    let total = 100_000;
    let s = Schedule::warmup_cosine(1e-4, 5000, total).map_err(|e| e.to_string())?;
    for (step, want) in [(0, 0.0), (2500, 5e-5), (5000, 1e-4), (total, 0.0)] {
        let got = s.lr_at(step);
        ensure((got - want).abs() <= 1e-12, || format!("warmup-cosine lr({step}) = {got:e}, want {want:e}"))?;
    }
    let (floor, ceil, half) = (1e-5, 1e-4, 37);
    let c = Schedule::cyclical(floor, ceil, half).map_err(|e| e.to_string())?;
    for v in 0..12u64 {
        let got = c.lr_at(v * half);
        let want = if v % 2 == 0 { floor } else { ceil };
        ensure(got == want, || format!("cyclical lr({}) = {got:e}, want {want:e}", v * half))?;
    }
    for step in 0..12 * half {
        let got = c.lr_at(step);
        ensure((floor..=ceil).contains(&got), || format!("cyclical lr({step}) = {got:e} out of range"))?;
    }
    Ok("warmup-cosine anchor values and 12 cyclical vertices exact".into())
}

// ---------------------------------------------------------------- 6

fn criterion_w2v() -> Check {
    let corpus = planted_clusters(200, 10, 6).map_err(|e| e.to_string())?;
    let config = W2VConfig {
        epochs: 20,
        lr: 0.02,
        ..W2VConfig::default()
    };
    let (model, log) = train_cbow(&corpus, &config, 6).map_err(|e| e.to_string())?;
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for a in model.vocab() {
        for b in model.vocab() {
            if a < b {
                let c = cosine(model.embedding(a.as_str()).unwrap(), model.embedding(b.as_str()).unwrap());
                if a.as_str().as_bytes()[0] == b.as_str().as_bytes()[0] {
                    within.push(c);
                } else {
                    cross.push(c);
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&within) - mean(&cross);
    ensure(gap > 0.2, || format!("within − cross = {gap:.3}"))?;
    Ok(format!(
        "within {:.3}, cross {:.3}, gap {gap:.3}, loss {:.3} → {:.3}",
        mean(&within),
        mean(&cross),
        log.epoch_mean_loss[0],
        log.epoch_mean_loss.last().unwrap()
    ))
}

// ---------------------------------------------------------------- 7, 8

struct SeedRun {
    seed: u64,
    random_acc: f64,
    co_acc: f64,
    simclr_acc: f64,
    co_auc: f64,
    simclr_auc: f64,
    scratch_auc: f64,
}

fn run_seed(seed: u64) -> Result<SeedRun, String> {
    let err = |e: playpair::Error| format!("seed {seed}: {e}");
    let world = generate_world(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .map_err(err)?;
    let tracks: Vec<TrackId> = world.features.tracks().ids().to_vec();
    let sim = |net: &Mlp| -> Result<f64, String> {
        let emb = embed_tracks(net, &world.features, &tracks).map_err(err)?;
        Ok(evaluate_triplets(&emb, &world.triplets).map_err(err)?.accuracy)
    };
    let random = Mlp::new(&[world.config.dim, 256, 128], &mut rng_for(seed, Stream::Init, 0)).map_err(err)?;
    let data = PretrainData {
        corpus: &world.corpus,
        features: &world.features,
        artists: Some(&world.artists),
        w2v: None,
    };
    let co = pretrain(data, &PretrainConfig::desk(Strategy::Co), seed).map_err(err)?;
    let simclr = pretrain(data, &PretrainConfig::desk(Strategy::SimClr), seed).map_err(err)?;
    let fc = FinetuneConfig::default();
    let auc = |enc: Option<&Mlp>| -> Result<f64, String> {
        let out = finetune(enc, &world.features, &world.labels, &world.splits, &fc, seed).map_err(err)?;
        out.report.macro_roc_auc.ok_or_else(|| format!("seed {seed}: no AUC"))
    };
    Ok(SeedRun {
        seed,
        random_acc: sim(&random)?,
        co_acc: sim(&co.backbone)?,
        simclr_acc: sim(&simclr.backbone)?,
        co_auc: auc(Some(&co.backbone))?,
        simclr_auc: auc(Some(&simclr.backbone))?,
        scratch_auc: auc(None)?,
    })
}

fn end_to_end() -> &'static Result<(Vec<SeedRun>, Duration), String> {
    static RUNS: OnceLock<Result<(Vec<SeedRun>, Duration), String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs: Vec<Result<SeedRun, String>> = std::thread::scope(|s| {
            let handles: Vec<_> = [1, 2, 3].map(|seed| s.spawn(move || run_seed(seed))).into();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("seed run panicked".into())))
                .collect()
        });
        Ok((runs.into_iter().collect::<Result<Vec<_>, _>>()?, start.elapsed()))
    })
}

fn mean_of(runs: &[SeedRun], f: impl Fn(&SeedRun) -> f64) -> f64 {
    runs.iter().map(f).sum::<f64>() / runs.len() as f64
}

fn criterion_similarity() -> Check {
    let (runs, elapsed) = end_to_end().as_ref().map_err(Clone::clone)?;
    for r in runs {
        println!(
            "      seed {}: triplet acc random {:.3}, CO {:.3}, SimCLR {:.3}",
            r.seed, r.random_acc, r.co_acc, r.simclr_acc
        );
    }
    let (rnd, co, sc) = (
        mean_of(runs, |r| r.random_acc),
        mean_of(runs, |r| r.co_acc),
        mean_of(runs, |r| r.simclr_acc),
    );
    let detail = format!("mean acc CO {co:.3}, SimCLR {sc:.3}, random {rnd:.3} (shared runs {elapsed:.0?})");
    ensure(co >= 0.85, || format!("CO {co:.3} < 0.85; {detail}"))?;
    ensure(sc >= 0.60, || format!("SimCLR {sc:.3} < 0.60; {detail}"))?;
    ensure((rnd - 0.5).abs() <= 0.05, || format!("random {rnd:.3} outside 0.50 ± 0.05; {detail}"))?;
    ensure(co - sc >= 0.10, || format!("CO − SimCLR = {:.3} < 0.10; {detail}", co - sc))?;
    Ok(detail)
}

fn criterion_classification() -> Check {
    let (runs, _) = end_to_end().as_ref().map_err(Clone::clone)?;
    for r in runs {
        println!(
            "      seed {}: test macro AUC CO {:.4}, SimCLR {:.4}, scratch {:.4}",
            r.seed, r.co_auc, r.simclr_auc, r.scratch_auc
        );
    }
    let (co, sc, scratch) = (
        mean_of(runs, |r| r.co_auc),
        mean_of(runs, |r| r.simclr_auc),
        mean_of(runs, |r| r.scratch_auc),
    );
    let detail = format!("mean AUC CO {co:.4}, SimCLR {sc:.4}, scratch {scratch:.4}");
    ensure(co - scratch >= 0.03, || format!("CO − scratch = {:.4} < 0.03; {detail}", co - scratch))?;
    ensure(co >= sc, || format!("CO below SimCLR; {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- 9

fn small_world(seed: u64) -> SynthWorld {
    generate_world(&SynthConfig {
        n_genres: 4,
        tracks_per_genre: 30,
        n_artists: 24,
        n_playlists: 120,
        playlist_len: 12,
        dim: 16,
        n_triplets: 200,
        seed,
        ..SynthConfig::default()
    })
    .expect("small world")
}

/// Stopping epoch and first argmax epoch, simulated from the rule itself.
fn expected_stop(trace: &[f64], patience: usize) -> (usize, usize) {
    let (mut best, mut best_epoch) = (f64::NEG_INFINITY, 0);
    for (i, &s) in trace.iter().enumerate() {
        let e = i + 1;
        if s > best {
            best = s;
            best_epoch = e;
        } else if e - best_epoch >= patience {
            return (e, best_epoch);
        }
    }
    (trace.len(), best_epoch)
}

fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut level: f64 = 0.3;
    (0..len)
        .map(|_| {
            if rng.random_bool(0.3) {
                // quantised values create exact ties with earlier epochs
                level = (rng.random_range(0..20) as f64) / 20.0;
            }
            level
        })
        .collect()
}

fn criterion_early_stopping() -> Check {
    let patience = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for t in 0..2000 {
        let len = rng.random_range(1..=60);
        let trace = random_trace(&mut rng, len);
        let (stop, best) = expected_stop(&trace, patience);
        let mut stopper: EarlyStopper<usize> = EarlyStopper::new(patience);
        let mut stopped = trace.len();
        for (i, &s) in trace.iter().enumerate() {
            if stopper.observe(s, || i + 1) == Observation::Stop {
                stopped = i + 1;
                break;
            }
        }
        ensure(stopped == stop, || format!("trace {t}: stopped at {stopped}, expected {stop}"))?;
        let (epoch, score, snap) = stopper.into_best().ok_or("no best")?;
        ensure(epoch == best && snap == best && score == trace[best - 1], || {
            format!("trace {t}: restored epoch {epoch}, expected {best}")
        })?;
    }

    let world = small_world(9);
    let config = FinetuneConfig {
        max_epochs: 40,
        ..FinetuneConfig::default()
    };
    let mut fine_runs = 0;
    for t in 0..4 {
        let trace = random_trace(&mut rng, config.max_epochs);
        let (stop, best) = expected_stop(&trace, patience);
        let mut seen: BTreeMap<usize, Classifier> = BTreeMap::new();
        let out = finetune_with(None, &world.features, &world.labels, &world.splits, &config, t, &mut |e, c| {
            seen.insert(e, c.clone());
            Ok(trace[e - 1])
        })
        .map_err(|e| e.to_string())?;
        ensure(out.stopped_epoch == stop, || format!("finetune {t}: stopped {} != {stop}", out.stopped_epoch))?;
        ensure(out.best_epoch == best, || format!("finetune {t}: best {} != {best}", out.best_epoch))?;
        ensure(seen.len() == stop, || format!("finetune {t}: validated {} epochs", seen.len()))?;
        ensure(out.classifier == seen[&best], || format!("finetune {t}: restored weights are not epoch {best}"))?;
        if best != stop {
            ensure(out.classifier != seen[&stop], || format!("finetune {t}: weights equal the last epoch"))?;
        }
        fine_runs += 1;
    }
    Ok(format!("2000 stopper traces and {fine_runs} injected fine-tunes at patience {patience}"))
}

// ---------------------------------------------------------------- 10

fn cli(args: &[&str]) -> Result<(), String> {
    let code = playpair::cli::run(std::iter::once("playpair").chain(args.iter().copied()));
    ensure(code == 0, || format!("`playpair {}` exited {code}", args.join(" ")))
}

fn pipeline(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let world = p("world");
    let cfg = serde_json::json!({
        "n_genres": 4, "tracks_per_genre": 30, "n_artists": 24, "n_playlists": 120,
        "playlist_len": 12, "dim": 16, "n_triplets": 200
    });
    std::fs::write(root.join("synth.json"), cfg.to_string()).map_err(|e| e.to_string())?;
    cli(&["synth", "--seed", "5", "--out-dir", &world, "--config", &p("synth.json")])?;
    cli(&["train-w2v", "--data", &world, "--seed", "5", "--dim", "16", "--epochs", "5", "--out", &p("w2v.json")])?;
    for s in ["co", "w2v", "simclr"] {
        cli(&[
            "pretrain", "--data", &world, "--strategy", s, "--seed", "5", "--epochs", "3",
            "--w2v", &p("w2v.json"), "--out", &p(&format!("enc-{s}.json")),
        ])?;
    }
    cli(&["finetune", "--data", &world, "--seed", "5", "--encoder", &p("enc-co.json"), "--max-epochs", "4", "--patience", "2", "--out-dir", &p("ft")])?;
    cli(&["eval-sim", "--data", &world, "--seed", "5", "--encoder", &p("enc-co.json"), "--out", &p("sim.json")])?;
    cli(&["eval-cls", "--data", &world, "--model", &p("ft/model.json"), "--out", &p("cls.json")])?;

    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().contains("manifest") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn criterion_determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = pipeline(a.path())?;
    let fb = pipeline(b.path())?;
    let names_a: BTreeSet<&String> = fa.keys().collect();
    let names_b: BTreeSet<&String> = fb.keys().collect();
    ensure(names_a == names_b, || "runs produced different file sets".into())?;
    for required in ["enc-co.json", "enc-w2v.json", "enc-simclr.json", "w2v.json", "ft/model.json", "ft/report.json", "sim.json", "cls.json"] {
        ensure(fa.contains_key(required), || format!("missing output {required}"))?;
    }
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("outputs differ: {differing:?}"))?;
    let bytes: usize = fa.values().map(Vec::len).sum();
    Ok(format!("{} files ({bytes} bytes) byte-identical across two runs", fa.len()))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Check, u64); 10] = [
        ("NT-Xent oracle and finite differences", criterion_nt_xent, 30),
        ("ROC-AUC / AP oracles", criterion_metrics, 30),
        ("pair-generation invariants", criterion_pairs, 60),
        ("Beta(5,2) mixing gain", criterion_beta, 5),
        ("schedule values", criterion_schedules, 5),
        ("Word2Vec cluster separation", criterion_w2v, 120),
        ("similarity ordering", criterion_similarity, 15 * 60),
        ("classification ordering", criterion_classification, 20 * 60),
        ("early stopping and selection", criterion_early_stopping, 120),
        ("pipeline determinism", criterion_determinism, 300),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|d| {
            if elapsed.as_secs() > *budget {
                Err(format!("{d}; exceeded runtime budget {budget}s"))
            } else {
                Ok(d)
            }
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{elapsed:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{elapsed:.1?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
