//! Playlist corpora and the track-keyed stores that accompany them.
//!
//! Text formats (all UTF-8, LF line endings):
//!
//! * `playlists.jsonl`: `{"pid": 0, "name": "...", "tracks": ["a", "b"]}` per line.
//! * `artists.tsv`: `track_id<TAB>artist_id`, one line per membership.
//! * `features.tsv`: header `#dim=<D>`, then `track_id<TAB>segment<TAB>v1,...,vD`.
//! * `labels.tsv`: header `#tags=t1,t2,...`, then `track_id<TAB>t1,t3` (subset may be empty).
//! * `triplets.tsv`: `anchor<TAB>positive<TAB>negative`.
//! * `splits.tsv`: `track_id<TAB>{train|valid|test}`.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque, whitespace-free track identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TrackId(String);

impl TrackId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("empty track id".into()));
        }
        if id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!("track id `{id}` contains whitespace")));
        }
        Ok(TrackId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for TrackId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TrackId::new(s).map_err(serde::de::Error::custom)
    }
}

impl Borrow<str> for TrackId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sorted set of track ids with a dense index. Index order equals
/// lexicographic id order, which downstream tie-breaking relies on.
#[derive(Debug, Clone)]
pub struct TrackRegistry {
    ids: Arc<Vec<TrackId>>,
    index: Arc<HashMap<TrackId, usize>>,
}

impl TrackRegistry {
    pub fn new(ids: impl IntoIterator<Item = TrackId>) -> Self {
        let set: BTreeSet<TrackId> = ids.into_iter().collect();
        let ids: Vec<TrackId> = set.into_iter().collect();
        let index = ids.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TrackRegistry {
            ids: Arc::new(ids),
            index: Arc::new(index),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[TrackId] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> &TrackId {
        &self.ids[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Reads one id per line; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut ids = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            ids.push(TrackId::new(line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?);
        }
        Ok(TrackRegistry::new(ids))
    }
}

impl PartialEq for TrackRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Playlist {
    pub pid: i64,
    pub name: Option<String>,
    /// Registry indices, deduplicated, in original order.
    pub tracks: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub deduplicated: usize,
    pub skipped_empty: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaylistCorpus {
    playlists: Vec<Playlist>,
    registry: TrackRegistry,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlaylistRecord {
    pid: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    tracks: Vec<TrackId>,
}

/// Raw playlist input for programmatic construction.
#[derive(Debug, Clone)]
pub struct RawPlaylist {
    pub pid: i64,
    pub name: Option<String>,
    pub tracks: Vec<TrackId>,
}

impl PlaylistCorpus {
    /// Builds a corpus, dropping in-playlist repeats (first occurrence kept)
    /// and empty playlists. With `registry`, unknown tracks are an error and
    /// the registry may list tracks that appear in no playlist.
    pub fn build(
        raw: Vec<RawPlaylist>,
        registry: Option<TrackRegistry>,
    ) -> Result<(Self, LoadReport)> {
        let registry = match registry {
            Some(r) => {
                for p in &raw {
                    if let Some(t) = p.tracks.iter().find(|t| !r.contains(t.as_str())) {
                        return Err(Error::UnknownTrack(t.to_string()));
                    }
                }
                r
            }
            None => TrackRegistry::new(raw.iter().flat_map(|p| p.tracks.iter().cloned())),
        };
        let mut report = LoadReport::default();
        let mut playlists = Vec::with_capacity(raw.len());
        for p in raw {
            if p.tracks.is_empty() {
                report.skipped_empty += 1;
                continue;
            }
            let mut seen = HashSet::new();
            let mut tracks = Vec::with_capacity(p.tracks.len());
            for t in &p.tracks {
                let idx = registry.index_of(t.as_str()).expect("registry covers playlists");
                if seen.insert(idx) {
                    tracks.push(idx);
                } else {
                    report.deduplicated += 1;
                }
            }
            playlists.push(Playlist {
                pid: p.pid,
                name: p.name,
                tracks,
            });
        }
        if playlists.is_empty() {
            return Err(Error::Validation("no playlists".into()));
        }
        Ok((PlaylistCorpus { playlists, registry }, report))
    }

    /// Convenience constructor from plain string lists; pids are positional.
    pub fn from_lists<S: AsRef<str>>(lists: &[Vec<S>]) -> Result<Self> {
        let raw = lists
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(RawPlaylist {
                    pid: i as i64,
                    name: None,
                    tracks: l.iter().map(|s| TrackId::new(s.as_ref())).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::build(raw, None)?.0)
    }

    pub fn playlists(&self) -> &[Playlist] {
        &self.playlists
    }

    pub fn registry(&self) -> &TrackRegistry {
        &self.registry
    }

    /// Track ids of one playlist, in stored order.
    pub fn playlist_ids(&self, i: usize) -> Vec<&TrackId> {
        self.playlists[i]
            .tracks
            .iter()
            .map(|&t| self.registry.id(t))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for p in &self.playlists {
            let rec = PlaylistRecord {
                pid: p.pid,
                name: p.name.clone(),
                tracks: p.tracks.iter().map(|&t| self.registry.id(t).clone()).collect(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        write_bytes(path, &out)
    }
}

pub fn load_playlists(
    path: &Path,
    registry: Option<TrackRegistry>,
) -> Result<(PlaylistCorpus, LoadReport)> {
    let text = read_text(path)?;
    let mut raw = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlaylistRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, n + 1, format!("malformed playlist: {e}")))?;
        if let Some(r) = &registry {
            if let Some(t) = rec.tracks.iter().find(|t| !r.contains(t.as_str())) {
                return Err(Error::parse(path, n + 1, format!("unknown track `{t}`")));
            }
        }
        raw.push(RawPlaylist {
            pid: rec.pid,
            name: rec.name,
            tracks: rec.tracks,
        });
    }
    PlaylistCorpus::build(raw, registry)
}

/// Track → artist memberships.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtistMap {
    track_to_artists: BTreeMap<TrackId, BTreeSet<String>>,
}

impl ArtistMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, track: TrackId, artist: impl Into<String>) {
        self.track_to_artists.entry(track).or_default().insert(artist.into());
    }

    pub fn from_pairs<S: AsRef<str>, A: AsRef<str>>(pairs: &[(S, A)]) -> Result<Self> {
        let mut map = ArtistMap::new();
        for (t, a) in pairs {
            map.insert(TrackId::new(t.as_ref())?, a.as_ref());
        }
        Ok(map)
    }

    pub fn artists_of(&self, track: &str) -> Option<&BTreeSet<String>> {
        self.track_to_artists.get(track)
    }

    pub fn tracks(&self) -> impl Iterator<Item = &TrackId> {
        self.track_to_artists.keys()
    }

    pub fn len(&self) -> usize {
        self.track_to_artists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track_to_artists.is_empty()
    }

    /// Artist → tracks, both sorted.
    pub fn by_artist(&self) -> BTreeMap<&str, Vec<&TrackId>> {
        let mut out: BTreeMap<&str, Vec<&TrackId>> = BTreeMap::new();
        for (t, artists) in &self.track_to_artists {
            for a in artists {
                out.entry(a.as_str()).or_default().push(t);
            }
        }
        out
    }

    pub fn validate_against(&self, registry: &TrackRegistry) -> Result<()> {
        match self.tracks().find(|t| !registry.contains(t.as_str())) {
            Some(t) => Err(Error::UnknownTrack(t.to_string())),
            None => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut map = ArtistMap::new();
        for (n, line) in data_lines(&text) {
            let mut cols = line.split('\t');
            let (Some(t), Some(a), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::parse(path, n, "expected `track_id<TAB>artist_id`"));
            };
            if a.is_empty() {
                return Err(Error::parse(path, n, "empty artist id"));
            }
            let t = TrackId::new(t).map_err(|e| Error::parse(path, n, e.to_string()))?;
            map.insert(t, a);
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (t, artists) in &self.track_to_artists {
            for a in artists {
                out.push_str(&format!("{t}\t{a}\n"));
            }
        }
        write_bytes(path, out.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsReport {
    pub n_playlists: usize,
    pub n_tracks: usize,
    pub n_artists: usize,
    pub tracks_per_artist: f64,
    pub tracks_per_playlist: f64,
    pub playlists_per_track: f64,
    pub artists_per_track: f64,
}

/// Mean degrees of the playlist/track and artist/track bipartite graphs.
pub fn corpus_stats(corpus: &PlaylistCorpus, artists: &ArtistMap) -> Result<StatsReport> {
    let reg = corpus.registry();
    if let Some(t) = reg.ids().iter().find(|t| artists.artists_of(t.as_str()).is_none()) {
        return Err(Error::Validation(format!("track `{t}` has no artist")));
    }
    artists.validate_against(reg)?;
    let memberships: usize = corpus.playlists().iter().map(|p| p.tracks.len()).sum();
    let by_artist = artists.by_artist();
    let artist_memberships: usize = by_artist.values().map(Vec::len).sum();
    let n_tracks = reg.len();
    Ok(StatsReport {
        n_playlists: corpus.playlists().len(),
        n_tracks,
        n_artists: by_artist.len(),
        tracks_per_artist: artist_memberships as f64 / by_artist.len() as f64,
        tracks_per_playlist: memberships as f64 / corpus.playlists().len() as f64,
        playlists_per_track: memberships as f64 / n_tracks as f64,
        artists_per_track: artist_memberships as f64 / n_tracks as f64,
    })
}

/// Per-track segment vectors standing in for spectrogram patches.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    tracks: TrackRegistry,
    segments: Vec<Vec<Vec<f64>>>,
}

impl FeatureStore {
    pub fn new(dim: usize, data: BTreeMap<TrackId, Vec<Vec<f64>>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dim must be positive".into()));
        }
        for (t, segs) in &data {
            if segs.is_empty() {
                return Err(Error::Validation(format!("track `{t}` has no segments")));
            }
            for s in segs {
                if s.len() != dim {
                    return Err(Error::Validation(format!(
                        "track `{t}`: segment has {} values, expected {dim}",
                        s.len()
                    )));
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation(format!("track `{t}`: non-finite value")));
                }
            }
        }
        let tracks = TrackRegistry::new(data.keys().cloned());
        let segments = data.into_values().collect();
        Ok(FeatureStore {
            dim,
            tracks,
            segments,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tracks(&self) -> &TrackRegistry {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn segments(&self, track: &str) -> Option<&[Vec<f64>]> {
        self.tracks.index_of(track).map(|i| self.segments[i].as_slice())
    }

    pub fn segments_at(&self, index: usize) -> &[Vec<f64>] {
        &self.segments[index]
    }

    pub fn require(&self, track: &str) -> Result<&[Vec<f64>]> {
        self.segments(track).ok_or_else(|| Error::UnknownTrack(track.to_string()))
    }

    /// Errors with the first registry track lacking features.
    pub fn check_covers(&self, registry: &TrackRegistry) -> Result<()> {
        match registry.ids().iter().find(|t| !self.tracks.contains(t.as_str())) {
            Some(t) => Err(Error::Validation(format!("no features for track `{t}`"))),
            None => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#dim=")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::parse(path, 1, "expected header `#dim=<D>`"))?,
            None => return Err(Error::parse(path, 1, "empty features file")),
        };
        let mut rows: BTreeMap<TrackId, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(t), Some(seg), Some(vals), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::parse(path, n, "expected `track_id<TAB>segment<TAB>values`"));
            };
            let t = TrackId::new(t).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let seg: usize = seg
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad segment index `{seg}`")))?;
            let v = vals
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, n, format!("bad value: {e}")))?;
            if v.len() != dim {
                return Err(Error::parse(
                    path,
                    n,
                    format!("row for `{t}` has {} values, expected dim={dim}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::parse(path, n, format!("non-finite value for `{t}`")));
            }
            if rows.entry(t.clone()).or_default().insert(seg, v).is_some() {
                return Err(Error::parse(path, n, format!("duplicate segment {seg} for `{t}`")));
            }
        }
        let mut data = BTreeMap::new();
        for (t, segs) in rows {
            if segs.keys().copied().ne(0..segs.len()) {
                return Err(Error::Validation(format!(
                    "{}: segment indices for `{t}` are not consecutive from 0",
                    path.display()
                )));
            }
            data.insert(t, segs.into_values().collect());
        }
        FeatureStore::new(dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("#dim={}\n", self.dim);
        for (t, segs) in self.tracks.ids().iter().zip(&self.segments) {
            for (s, v) in segs.iter().enumerate() {
                out.push_str(&format!("{t}\t{s}\t{}\n", join_floats(v)));
            }
        }
        write_bytes(path, out.as_bytes())
    }
}

/// Binary multi-label targets over an ordered tag vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    vocabulary: Vec<String>,
    labels: BTreeMap<TrackId, Vec<bool>>,
}

impl LabelSet {
    pub fn new(vocabulary: Vec<String>, labels: BTreeMap<TrackId, Vec<bool>>) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::Validation("empty tag vocabulary".into()));
        }
        let uniq: HashSet<&String> = vocabulary.iter().collect();
        if uniq.len() != vocabulary.len() {
            return Err(Error::Validation("duplicate tag in vocabulary".into()));
        }
        if let Some(tag) = vocabulary.iter().find(|t| t.is_empty() || t.contains([',', '\t'])) {
            return Err(Error::Validation(format!("invalid tag name `{tag}`")));
        }
        if let Some((t, _)) = labels.iter().find(|(_, v)| v.len() != vocabulary.len()) {
            return Err(Error::Validation(format!("label vector length mismatch for `{t}`")));
        }
        Ok(LabelSet { vocabulary, labels })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn n_tags(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn get(&self, track: &str) -> Option<&[bool]> {
        self.labels.get(track).map(Vec::as_slice)
    }

    pub fn require(&self, track: &str) -> Result<&[bool]> {
        self.get(track).ok_or_else(|| Error::UnknownTrack(track.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrackId, &[bool])> {
        self.labels.iter().map(|(t, v)| (t, v.as_slice()))
    }

    /// Every split track must be labelled and every tag needs a positive in train.
    pub fn validate_for(&self, splits: &SplitSpec) -> Result<()> {
        for t in splits.all() {
            self.require(t.as_str())?;
        }
        for (j, tag) in self.vocabulary.iter().enumerate() {
            if !splits.train.iter().any(|t| self.labels[t][j]) {
                return Err(Error::Validation(format!("tag `{tag}` has no positive in train")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut lines = text.lines().enumerate();
        let vocabulary: Vec<String> = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#tags=")
                .ok_or_else(|| Error::parse(path, 1, "expected header `#tags=...`"))?
                .split(',')
                .map(str::to_string)
                .collect(),
            None => return Err(Error::parse(path, 1, "empty labels file")),
        };
        let position: HashMap<&str, usize> =
            vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut labels = BTreeMap::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (t, tags) = line.split_once('\t').unwrap_or((line, ""));
            let t = TrackId::new(t).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let mut v = vec![false; vocabulary.len()];
            for tag in tags.split(',').filter(|s| !s.is_empty()) {
                let j = *position
                    .get(tag)
                    .ok_or_else(|| Error::parse(path, n, format!("unknown tag `{tag}`")))?;
                v[j] = true;
            }
            if labels.insert(t.clone(), v).is_some() {
                return Err(Error::parse(path, n, format!("duplicate track `{t}`")));
            }
        }
        LabelSet::new(vocabulary, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("#tags={}\n", self.vocabulary.join(","));
        for (t, v) in &self.labels {
            let tags: Vec<&str> = v
                .iter()
                .zip(&self.vocabulary)
                .filter(|(on, _)| **on)
                .map(|(_, tag)| tag.as_str())
                .collect();
            out.push_str(&format!("{t}\t{}\n", tags.join(",")));
        }
        write_bytes(path, out.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSpec {
    pub train: BTreeSet<TrackId>,
    pub valid: BTreeSet<TrackId>,
    pub test: BTreeSet<TrackId>,
}

impl SplitSpec {
    pub fn new(
        train: BTreeSet<TrackId>,
        valid: BTreeSet<TrackId>,
        test: BTreeSet<TrackId>,
    ) -> Result<Self> {
        let spec = SplitSpec { train, valid, test };
        for s in [Split::Train, Split::Valid, Split::Test] {
            if spec.get(s).is_empty() {
                return Err(Error::Validation(format!("split `{}` is empty", s.as_str())));
            }
        }
        let overlap = spec
            .train
            .intersection(&spec.valid)
            .chain(spec.train.intersection(&spec.test))
            .chain(spec.valid.intersection(&spec.test))
            .next();
        if let Some(t) = overlap {
            return Err(Error::Validation(format!("track `{t}` is in more than one split")));
        }
        Ok(spec)
    }

    pub fn get(&self, split: Split) -> &BTreeSet<TrackId> {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &TrackId> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn validate_against(&self, registry: &TrackRegistry) -> Result<()> {
        match self.all().find(|t| !registry.contains(t.as_str())) {
            Some(t) => Err(Error::UnknownTrack(t.to_string())),
            None => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut sets: [BTreeSet<TrackId>; 3] = Default::default();
        let mut seen = HashSet::new();
        for (n, line) in data_lines(&text) {
            let Some((t, s)) = line.split_once('\t') else {
                return Err(Error::parse(path, n, "expected `track_id<TAB>split`"));
            };
            let t = TrackId::new(t).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let slot = match s.trim() {
                "train" => 0,
                "valid" => 1,
                "test" => 2,
                other => return Err(Error::parse(path, n, format!("unknown split `{other}`"))),
            };
            if !seen.insert(t.clone()) {
                return Err(Error::parse(path, n, format!("track `{t}` listed twice")));
            }
            sets[slot].insert(t);
        }
        let [train, valid, test] = sets;
        SplitSpec::new(train, valid, test)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(&TrackId, Split)> = Vec::new();
        for s in [Split::Train, Split::Valid, Split::Test] {
            rows.extend(self.get(s).iter().map(|t| (t, s)));
        }
        rows.sort();
        let mut out = String::new();
        for (t, s) in rows {
            out.push_str(&format!("{t}\t{}\n", s.as_str()));
        }
        write_bytes(path, out.as_bytes())
    }
}

impl PartialOrd for Split {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Split {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Triplet {
    pub anchor: TrackId,
    pub positive: TrackId,
    pub negative: TrackId,
}

impl Triplet {
    pub fn new(anchor: TrackId, positive: TrackId, negative: TrackId) -> Result<Self> {
        if anchor == positive || anchor == negative || positive == negative {
            return Err(Error::Validation(format!(
                "non-distinct triplet ({anchor}, {positive}, {negative})"
            )));
        }
        Ok(Triplet {
            anchor,
            positive,
            negative,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn validate_against(&self, features: &FeatureStore) -> Result<()> {
        for tr in &self.triplets {
            for t in [&tr.anchor, &tr.positive, &tr.negative] {
                if !features.tracks().contains(t.as_str()) {
                    return Err(Error::UnknownTrack(t.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut triplets = Vec::new();
        for (n, line) in data_lines(&text) {
            let cols: Vec<&str> = line.split('\t').collect();
            let [a, p, q] = cols[..] else {
                return Err(Error::parse(path, n, "expected `anchor<TAB>positive<TAB>negative`"));
            };
            let id = |s: &str| TrackId::new(s).map_err(|e| Error::parse(path, n, e.to_string()));
            let tr = Triplet::new(id(a)?, id(p)?, id(q)?)
                .map_err(|e| Error::parse(path, n, e.to_string()))?;
            triplets.push(tr);
        }
        Ok(TripletSet { triplets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.triplets {
            out.push_str(&format!("{}\t{}\t{}\n", t.anchor, t.positive, t.negative));
        }
        write_bytes(path, out.as_bytes())
    }
}

pub(crate) fn join_floats(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    parts.join(",")
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}
