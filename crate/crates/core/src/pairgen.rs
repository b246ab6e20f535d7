//! Per-epoch anchor/positive pair generation.
//!
//! Playlist strategies keep a global availability set so each track is used in
//! at most one pair per epoch. Artist co-occurrence deliberately does not.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng as _, SeedableRng};
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::cooccur::TopKIndex;
use crate::corpus::{ArtistMap, PlaylistCorpus, TrackId, TrackRegistry};
use crate::embed::W2VModel;
use crate::error::{Error, Result};
use crate::seed::{self, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Random pairs among co-occurring playlist members.
    Co,
    /// Partner drawn from the track's top-k co-occurring tracks.
    Tco,
    /// Co-occurrence applied to artist track sets, repetitions allowed.
    #[serde(rename = "artist")]
    ArtistCo,
    /// Audio segment aligned with the track's Word2Vec embedding.
    W2v,
    /// Two mixed views of the same segment.
    #[serde(rename = "simclr")]
    SimClr,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Co,
        Strategy::Tco,
        Strategy::ArtistCo,
        Strategy::W2v,
        Strategy::SimClr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Co => "co",
            Strategy::Tco => "tco",
            Strategy::ArtistCo => "artist",
            Strategy::W2v => "w2v",
            Strategy::SimClr => "simclr",
        }
    }

    /// Whether the strategy forbids a track from appearing in two pairs.
    pub fn unique_tracks(self) -> bool {
        matches!(self, Strategy::Co | Strategy::Tco)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "audio-segment")]
    AudioSegment,
    #[serde(rename = "w2v-embedding")]
    W2vEmbedding,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::AudioSegment => "audio-segment",
            Side::W2vEmbedding => "w2v-embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairRef {
    pub side: Side,
    pub track: TrackId,
}

impl PairRef {
    pub fn audio(track: TrackId) -> Self {
        PairRef {
            side: Side::AudioSegment,
            track,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackPair {
    pub x: PairRef,
    pub y: PairRef,
}

impl TrackPair {
    fn audio(x: &TrackId, y: &TrackId) -> Self {
        TrackPair {
            x: PairRef::audio(x.clone()),
            y: PairRef::audio(y.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPairs {
    pub strategy: Strategy,
    pub pairs: Vec<TrackPair>,
    pub seed: u64,
    /// Registry tracks not used by any pair.
    pub unpaired: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub strategy: Strategy,
    pub epoch: u64,
    pub pair_count: usize,
    pub unpaired_count: usize,
    pub seed: u64,
}

impl EpochPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn summary(&self, epoch: u64) -> PairSummary {
        PairSummary {
            strategy: self.strategy,
            epoch,
            pair_count: self.pairs.len(),
            unpaired_count: self.unpaired,
            seed: self.seed,
        }
    }

    /// `strategy<TAB>x_side<TAB>x_track<TAB>y_side<TAB>y_track` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.strategy,
                p.x.side.as_str(),
                p.x.track,
                p.y.side.as_str(),
                p.y.track
            ));
        }
        out
    }
}

fn count_unpaired(registry_len: usize, pairs: &[TrackPair], registry: &TrackRegistry) -> usize {
    let mut used = vec![false; registry_len];
    for p in pairs {
        for t in [&p.x.track, &p.y.track] {
            if let Some(i) = registry.index_of(t.as_str()) {
                used[i] = true;
            }
        }
    }
    used.iter().filter(|u| !**u).count()
}

/// Random within-playlist pairs; each track used at most once per epoch.
pub fn co_occurrence_pairs(corpus: &PlaylistCorpus, seed: u64) -> EpochPairs {
    let mut rng = Rng::seed_from_u64(seed);
    let reg = corpus.registry();
    let mut available = vec![true; reg.len()];
    let mut order: Vec<usize> = (0..corpus.playlists().len()).collect();
    order.shuffle(&mut rng);
    let mut pairs = Vec::new();
    for pi in order {
        let mut members: Vec<usize> = corpus.playlists()[pi]
            .tracks
            .iter()
            .copied()
            .filter(|&t| available[t])
            .collect();
        members.shuffle(&mut rng);
        for chunk in members.chunks_exact(2) {
            available[chunk[0]] = false;
            available[chunk[1]] = false;
            pairs.push(TrackPair::audio(reg.id(chunk[0]), reg.id(chunk[1])));
        }
    }
    let unpaired = available.iter().filter(|a| **a).count();
    EpochPairs {
        strategy: Strategy::Co,
        pairs,
        seed,
        unpaired,
    }
}

/// Visits tracks in random order and pairs each still-available track with a
/// uniformly drawn available member of its top-k list.
pub fn top_co_occurrence_pairs(index: &TopKIndex, seed: u64) -> EpochPairs {
    let mut rng = Rng::seed_from_u64(seed);
    let reg = index.registry();
    let mut available = vec![true; reg.len()];
    let mut order: Vec<usize> = (0..reg.len()).collect();
    order.shuffle(&mut rng);
    let mut pairs = Vec::new();
    let mut unpaired = 0;
    let mut candidates = Vec::new();
    for j in order {
        if !available[j] {
            continue;
        }
        available[j] = false;
        candidates.clear();
        candidates.extend(
            index
                .neighbors_idx(j)
                .iter()
                .map(|&(k, _)| k)
                .filter(|&k| available[k]),
        );
        match candidates.choose(&mut rng) {
            Some(&k) => {
                available[k] = false;
                pairs.push(TrackPair::audio(reg.id(j), reg.id(k)));
            }
            None => unpaired += 1,
        }
    }
    EpochPairs {
        strategy: Strategy::Tco,
        pairs,
        seed,
        unpaired,
    }
}

/// Co-occurrence over artist track sets, each artist processed independently.
pub fn artist_co_pairs(artists: &ArtistMap, seed: u64) -> EpochPairs {
    let mut rng = Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for tracks in artists.by_artist().into_values() {
        let mut tracks = tracks;
        tracks.shuffle(&mut rng);
        for chunk in tracks.chunks_exact(2) {
            pairs.push(TrackPair::audio(chunk[0], chunk[1]));
        }
    }
    let registry = TrackRegistry::new(artists.tracks().cloned());
    let unpaired = count_unpaired(registry.len(), &pairs, &registry);
    EpochPairs {
        strategy: Strategy::ArtistCo,
        pairs,
        seed,
        unpaired,
    }
}

/// One audio/embedding pair per registry track present in the model.
/// Returns the pairs and the ids absent from the model vocabulary.
pub fn w2v_pairs(registry: &TrackRegistry, model: &W2VModel) -> (EpochPairs, Vec<TrackId>) {
    let (covered, skipped): (Vec<&TrackId>, Vec<&TrackId>) =
        registry.ids().iter().partition(|t| model.contains(t.as_str()));
    let pairs = covered
        .into_iter()
        .map(|t| TrackPair {
            x: PairRef::audio(t.clone()),
            y: PairRef {
                side: Side::W2vEmbedding,
                track: t.clone(),
            },
        })
        .collect();
    let unpaired = skipped.len();
    (
        EpochPairs {
            strategy: Strategy::W2v,
            pairs,
            seed: 0,
            unpaired,
        },
        skipped.into_iter().cloned().collect(),
    )
}

/// Identity pairs for every registry track; views are made per batch by
/// [`simclr_views`].
pub fn simclr_pairs(registry: &TrackRegistry) -> EpochPairs {
    EpochPairs {
        strategy: Strategy::SimClr,
        pairs: registry.ids().iter().map(|t| TrackPair::audio(t, t)).collect(),
        seed: 0,
        unpaired: 0,
    }
}

/// Beta-distributed mixing gain for the SimCLR baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingGain {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MixingGain {
    fn default() -> Self {
        MixingGain {
            alpha: 5.0,
            beta: 2.0,
        }
    }
}

impl MixingGain {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn distribution(&self) -> Result<Beta<f64>> {
        Beta::new(self.alpha, self.beta)
            .map_err(|e| Error::Config(format!("invalid mixing gain Beta({}, {}): {e}", self.alpha, self.beta)))
    }
}

/// Two views per segment: `g·v_i + (1−g)·v_j` with an independent gain and an
/// independent partner `j ≠ i` per view.
pub fn simclr_views(
    batch: &[&[f64]],
    gain: &MixingGain,
    rng: &mut Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if batch.len() < 2 {
        return Err(Error::Validation(
            "SimCLR mixing needs a batch of at least 2 segments".into(),
        ));
    }
    let dist = gain.distribution()?;
    let n = batch.len();
    let view = |i: usize, rng: &mut Rng| -> Vec<f64> {
        let g = dist.sample(rng);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        batch[i]
            .iter()
            .zip(batch[j])
            .map(|(a, b)| g * a + (1.0 - g) * b)
            .collect()
    };
    Ok((0..n).map(|i| (view(i, rng), view(i, rng))).collect())
}

/// Everything a strategy may need to regenerate its pairs.
pub enum PairSource<'a> {
    Co(&'a PlaylistCorpus),
    Tco(&'a TopKIndex),
    ArtistCo(&'a ArtistMap),
    W2v(&'a TrackRegistry, &'a W2VModel),
    SimClr(&'a TrackRegistry),
}

impl PairSource<'_> {
    pub fn strategy(&self) -> Strategy {
        match self {
            PairSource::Co(_) => Strategy::Co,
            PairSource::Tco(_) => Strategy::Tco,
            PairSource::ArtistCo(_) => Strategy::ArtistCo,
            PairSource::W2v(..) => Strategy::W2v,
            PairSource::SimClr(_) => Strategy::SimClr,
        }
    }

    /// Pairs for `epoch`, seeded from `seed` by the fixed derivation rule.
    pub fn epoch(&self, seed: u64, epoch: u64) -> EpochPairs {
        let s = seed::derive_seed(seed, Stream::Pairs, epoch);
        let mut pairs = match self {
            PairSource::Co(c) => co_occurrence_pairs(c, s),
            PairSource::Tco(idx) => top_co_occurrence_pairs(idx, s),
            PairSource::ArtistCo(a) => artist_co_pairs(a, s),
            PairSource::W2v(reg, m) => w2v_pairs(reg, m).0,
            PairSource::SimClr(reg) => simclr_pairs(reg),
        };
        pairs.seed = s;
        pairs
    }
}
