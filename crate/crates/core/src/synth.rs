//! Seeded synthetic worlds with planted genre structure.
//!
//! Every track has a low-dimensional *signal* latent (its genre centroid plus
//! a little jitter) and a larger *nuisance* latent that is unrelated to genre.
//! Segments are a fixed random linear image of both plus per-segment noise, so
//! raw feature geometry is dominated by nuisance while playlists, artists and
//! labels only follow the signal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_bytes, ArtistMap, FeatureStore, LabelSet, PlaylistCorpus, RawPlaylist, SplitSpec, TrackId, TrackRegistry,
    Triplet, TripletSet,
};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_genres: usize,
    pub tracks_per_genre: usize,
    pub n_artists: usize,
    pub n_playlists: usize,
    pub playlist_len: usize,
    /// Probability that a playlist slot is drawn from another genre.
    pub contamination: f64,
    pub dim: usize,
    pub segments_per_track: usize,
    /// Per-segment feature noise σ.
    pub noise_sigma: f64,
    pub n_triplets: usize,
    pub n_moods: usize,
    /// Jitter of a track's signal latent around its genre centroid.
    pub genre_spread: f64,
    pub nuisance_dim: usize,
    pub nuisance_scale: f64,
    /// Fraction of tracks credited to a second artist of the same genre.
    pub featuring_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_genres: 8,
            tracks_per_genre: 250,
            n_artists: 200,
            n_playlists: 500,
            playlist_len: 20,
            contamination: 0.1,
            dim: 32,
            segments_per_track: 3,
            noise_sigma: 0.5,
            n_triplets: 2000,
            n_moods: 4,
            genre_spread: 0.2,
            nuisance_dim: 8,
            nuisance_scale: 2.5,
            featuring_rate: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(0.0..0.5).contains(&self.contamination) {
            return err(format!("contamination must be in [0, 0.5), got {}", self.contamination));
        }
        for (name, v) in [
            ("n_genres", self.n_genres),
            ("tracks_per_genre", self.tracks_per_genre),
            ("n_artists", self.n_artists),
            ("n_playlists", self.n_playlists),
            ("playlist_len", self.playlist_len),
            ("dim", self.dim),
            ("segments_per_track", self.segments_per_track),
            ("n_triplets", self.n_triplets),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if self.n_genres < 2 {
            return err("at least 2 genres are needed for triplet negatives".into());
        }
        if self.tracks_per_genre < 7 {
            return err("tracks_per_genre must be at least 7 for 70/15/15 splits".into());
        }
        if self.n_artists > self.n_genres * self.tracks_per_genre {
            return err(format!(
                "infeasible: {} artists for {} tracks",
                self.n_artists,
                self.n_genres * self.tracks_per_genre
            ));
        }
        if self.n_artists < self.n_genres {
            return err("need at least one artist per genre".into());
        }
        if self.dim < self.n_genres + self.nuisance_dim {
            return err(format!(
                "feature dim {} is smaller than the latent size {}",
                self.dim,
                self.n_genres + self.nuisance_dim
            ));
        }
        if self.playlist_len > self.tracks_per_genre {
            return err("playlist_len exceeds tracks_per_genre".into());
        }
        if !(self.noise_sigma >= 0.0 && self.genre_spread >= 0.0 && self.nuisance_scale >= 0.0) {
            return err("noise scales must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.featuring_rate) {
            return err("featuring_rate must be in [0, 1]".into());
        }
        Ok(())
    }

    pub fn n_tracks(&self) -> usize {
        self.n_genres * self.tracks_per_genre
    }
}

pub struct SynthWorld {
    pub config: SynthConfig,
    pub corpus: PlaylistCorpus,
    pub artists: ArtistMap,
    pub features: FeatureStore,
    pub labels: LabelSet,
    pub splits: SplitSpec,
    pub triplets: TripletSet,
    /// Hidden genre of every track; written only to the debug file.
    pub genres: BTreeMap<TrackId, usize>,
    /// Hidden signal latent of every track.
    pub signal: BTreeMap<TrackId, Vec<f64>>,
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

/// Row-major `rows × cols` matrix with orthonormal columns (Gram-Schmidt on
/// Gaussian draws), so the map neither amplifies nor mixes away noise.
fn orthonormal_columns(rng: &mut Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = normal_vec(rng, rows, 1.0);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for (j, b) in basis.iter().enumerate() {
        for i in 0..rows {
            m[i * cols + j] = b[i];
        }
    }
    m
}

pub fn generate_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let seed = config.seed;
    let g_n = config.n_genres;
    let n = config.n_tracks();
    let mut rng = rng_for(seed, Stream::Synth, 0);

    // Track ids are a random permutation so that id order carries no genre.
    let width = (n.max(2) - 1).to_string().len();
    let mut names: Vec<usize> = (0..n).collect();
    names.shuffle(&mut rng);
    let ids: Vec<TrackId> = names
        .iter()
        .map(|k| TrackId::new(format!("trk{k:0width$}")).expect("valid id"))
        .collect();
    let genre_of = |t: usize| t / config.tracks_per_genre;
    let members = |g: usize| g * config.tracks_per_genre..(g + 1) * config.tracks_per_genre;

    // Signal latent: one-hot centroids (orthonormal) plus jitter.
    let signal: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut s = normal_vec(&mut rng, g_n, config.genre_spread);
            s[genre_of(t)] += 1.0;
            s
        })
        .collect();
    let nuisance: Vec<Vec<f64>> = (0..n)
        .map(|_| normal_vec(&mut rng, config.nuisance_dim, config.nuisance_scale))
        .collect();

    // Segments: fixed random linear map of [signal; nuisance] plus noise.
    let latent = g_n + config.nuisance_dim;
    let map = orthonormal_columns(&mut rng, config.dim, latent);
    let mut seg_rng = rng_for(seed, Stream::Synth, 1);
    let mut feature_data = BTreeMap::new();
    for t in 0..n {
        let z: Vec<f64> = signal[t].iter().chain(&nuisance[t]).copied().collect();
        let clean: Vec<f64> = (0..config.dim)
            .map(|i| map[i * latent..(i + 1) * latent].iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        let segs: Vec<Vec<f64>> = (0..config.segments_per_track)
            .map(|_| clean.iter().map(|c| c + config.noise_sigma * normal(&mut seg_rng)).collect())
            .collect();
        feature_data.insert(ids[t].clone(), segs);
    }
    let features = FeatureStore::new(config.dim, feature_data)?;

    // Artists own contiguous same-genre blocks.
    let mut art_rng = rng_for(seed, Stream::Synth, 2);
    let mut artists = ArtistMap::new();
    let mut artists_in: Vec<Vec<String>> = vec![Vec::new(); g_n];
    for a in 0..config.n_artists {
        artists_in[a % g_n].push(format!("art{a:04}"));
    }
    for g in 0..g_n {
        let list = &artists_in[g];
        let k = list.len();
        for (pos, t) in members(g).enumerate() {
            let owner = pos * k / config.tracks_per_genre;
            artists.insert(ids[t].clone(), list[owner].clone());
            if k > 1 && art_rng.random_bool(config.featuring_rate) {
                let mut other = art_rng.random_range(0..k - 1);
                if other >= owner {
                    other += 1;
                }
                artists.insert(ids[t].clone(), list[other].clone());
            }
        }
    }

    // Playlists: a home genre per list, off-genre slots with the contamination rate.
    let mut pl_rng = rng_for(seed, Stream::Synth, 3);
    let lo = (config.playlist_len / 2).max(1);
    let hi = (config.playlist_len * 3) / 2;
    let mut raw = Vec::with_capacity(config.n_playlists);
    for pid in 0..config.n_playlists {
        let home = pl_rng.random_range(0..g_n);
        let len = pl_rng.random_range(lo..=hi.max(lo)).min(config.tracks_per_genre);
        let mut chosen = BTreeSet::new();
        let mut tracks = Vec::with_capacity(len);
        while tracks.len() < len {
            let g = if pl_rng.random_bool(config.contamination) {
                let mut o = pl_rng.random_range(0..g_n - 1);
                if o >= home {
                    o += 1;
                }
                o
            } else {
                home
            };
            let t = g * config.tracks_per_genre + pl_rng.random_range(0..config.tracks_per_genre);
            if chosen.insert(t) {
                tracks.push(ids[t].clone());
            }
        }
        raw.push(RawPlaylist {
            pid: pid as i64,
            name: None,
            tracks,
        });
    }
    let registry = TrackRegistry::new(ids.iter().cloned());
    let (corpus, _) = PlaylistCorpus::build(raw, Some(registry))?;

    // Labels: genre one-hot plus moods thresholded at the median of a random
    // projection of the signal latent.
    let mut lab_rng = rng_for(seed, Stream::Synth, 4);
    let mut vocabulary: Vec<String> = (0..g_n).map(|g| format!("genre{g}")).collect();
    let mut mood_flags = vec![Vec::with_capacity(config.n_moods); n];
    for m in 0..config.n_moods {
        vocabulary.push(format!("mood{m}"));
        let w = normal_vec(&mut lab_rng, g_n, 1.0);
        let proj: Vec<f64> = signal.iter().map(|s| s.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let mut sorted = proj.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[n / 2];
        for t in 0..n {
            mood_flags[t].push(proj[t] >= median);
        }
    }
    let labels = LabelSet::new(
        vocabulary,
        (0..n)
            .map(|t| {
                let mut v: Vec<bool> = (0..g_n).map(|g| g == genre_of(t)).collect();
                v.extend(&mood_flags[t]);
                (ids[t].clone(), v)
            })
            .collect(),
    )?;

    // Splits stratified by genre.
    let mut split_rng = rng_for(seed, Stream::Synth, 5);
    let (mut train, mut valid, mut test) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
    for g in 0..g_n {
        let mut ts: Vec<usize> = members(g).collect();
        ts.shuffle(&mut split_rng);
        let n_train = (ts.len() * 70) / 100;
        let n_valid = ((ts.len() * 15) / 100).max(1);
        for (i, &t) in ts.iter().enumerate() {
            let id = ids[t].clone();
            if i < n_train {
                train.insert(id);
            } else if i < n_train + n_valid {
                valid.insert(id);
            } else {
                test.insert(id);
            }
        }
    }
    let splits = SplitSpec::new(train, valid, test)?;

    // Triplets: anchor and positive share a genre, the negative does not.
    let mut tri_rng = rng_for(seed, Stream::Synth, 6);
    let mut triplets = Vec::with_capacity(config.n_triplets);
    for _ in 0..config.n_triplets {
        let a = tri_rng.random_range(0..n);
        let g = genre_of(a);
        let p = loop {
            let p = members(g).start + tri_rng.random_range(0..config.tracks_per_genre);
            if p != a {
                break p;
            }
        };
        let ng = {
            let o = tri_rng.random_range(0..g_n - 1);
            if o >= g {
                o + 1
            } else {
                o
            }
        };
        let q = members(ng).start + tri_rng.random_range(0..config.tracks_per_genre);
        triplets.push(Triplet::new(ids[a].clone(), ids[p].clone(), ids[q].clone())?);
    }

    Ok(SynthWorld {
        config: config.clone(),
        corpus,
        artists,
        features,
        labels,
        splits,
        triplets: TripletSet { triplets },
        genres: (0..n).map(|t| (ids[t].clone(), genre_of(t))).collect(),
        signal: (0..n).map(|t| (ids[t].clone(), signal[t].clone())).collect(),
    })
}

#[derive(Serialize)]
struct WorldManifest<'a> {
    config: &'a SynthConfig,
    seed: u64,
    n_tracks: usize,
    files: &'a [&'a str],
}

pub const WORLD_FILES: [&str; 8] = [
    "tracks.txt",
    "playlists.jsonl",
    "artists.tsv",
    "features.tsv",
    "labels.tsv",
    "splits.tsv",
    "triplets.tsv",
    "world.json",
];

impl SynthWorld {
    /// Writes the standard data files, `world.json`, and `hidden_genres.tsv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut ids = String::new();
        for t in self.corpus.registry().ids() {
            ids.push_str(t.as_str());
            ids.push('\n');
        }
        write_bytes(&dir.join("tracks.txt"), ids.as_bytes())?;
        self.corpus.save(&dir.join("playlists.jsonl"))?;
        self.artists.save(&dir.join("artists.tsv"))?;
        self.features.save(&dir.join("features.tsv"))?;
        self.labels.save(&dir.join("labels.tsv"))?;
        self.splits.save(&dir.join("splits.tsv"))?;
        self.triplets.save(&dir.join("triplets.tsv"))?;
        let manifest = WorldManifest {
            config: &self.config,
            seed: self.config.seed,
            n_tracks: self.config.n_tracks(),
            files: &WORLD_FILES,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_bytes(&dir.join("world.json"), &json)?;
        let mut hidden = String::new();
        for (t, g) in &self.genres {
            hidden.push_str(&format!("{t}\tgenre{g}\n"));
        }
        write_bytes(&dir.join("hidden_genres.tsv"), hidden.as_bytes())
    }
}

/// A small corpus with two disjoint groups of tracks ("a00".."a19" and
/// "b00".."b19"). Every playlist draws `len` distinct tracks from one group,
/// alternating groups.
pub fn planted_clusters(n_playlists: usize, len: usize, seed: u64) -> Result<PlaylistCorpus> {
    if !(2..=20).contains(&len) {
        return Err(Error::Config("planted cluster playlists need 2..=20 tracks".into()));
    }
    let mut rng = rng_for(seed, Stream::Synth, 7);
    let lists: Vec<Vec<String>> = (0..n_playlists)
        .map(|p| {
            let group = if p % 2 == 0 { 'a' } else { 'b' };
            let mut members: Vec<usize> = (0..20).collect();
            members.shuffle(&mut rng);
            members[..len].iter().map(|t| format!("{group}{t:02}")).collect()
        })
        .collect();
    PlaylistCorpus::from_lists(&lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::count_cooccurrences;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_genres: 4,
            tracks_per_genre: 30,
            n_artists: 12,
            n_playlists: 60,
            playlist_len: 8,
            n_triplets: 100,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn rejects_infeasible_configs() {
        let c = SynthConfig {
            n_artists: 10_000,
            ..SynthConfig::default()
        };
        assert!(generate_world(&c).is_err());
        let c = SynthConfig {
            contamination: 0.5,
            ..SynthConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_contamination_gives_single_genre_playlists() {
        let w = generate_world(&SynthConfig {
            contamination: 0.0,
            ..small(3)
        })
        .unwrap();
        for i in 0..w.corpus.playlists().len() {
            let gs: BTreeSet<usize> = w.corpus.playlist_ids(i).iter().map(|t| w.genres[*t]).collect();
            assert_eq!(gs.len(), 1);
        }
    }

    #[test]
    fn same_genre_cooccurrence_dominates() {
        let w = generate_world(&small(4)).unwrap();
        let c = count_cooccurrences(&w.corpus);
        let (mut same, mut cross) = (0u64, 0u64);
        for (a, b, k) in c.sorted_entries() {
            let reg = w.corpus.registry();
            if w.genres[reg.id(a)] == w.genres[reg.id(b)] {
                same += k as u64;
            } else {
                cross += k as u64;
            }
        }
        assert!(same > cross, "{same} vs {cross}");
    }

    #[test]
    fn artists_are_genre_pure_and_labels_valid() {
        let w = generate_world(&small(5)).unwrap();
        for (_, tracks) in w.artists.by_artist() {
            let gs: BTreeSet<usize> = tracks.iter().map(|t| w.genres[*t]).collect();
            assert_eq!(gs.len(), 1);
        }
        w.labels.validate_for(&w.splits).unwrap();
        w.triplets.validate_against(&w.features).unwrap();
        for tr in &w.triplets.triplets {
            assert_eq!(w.genres[&tr.anchor], w.genres[&tr.positive]);
            assert_ne!(w.genres[&tr.anchor], w.genres[&tr.negative]);
        }
    }

    #[test]
    fn saved_files_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_world(&small(9)).unwrap().save(a.path()).unwrap();
        generate_world(&small(9)).unwrap().save(b.path()).unwrap();
        for f in WORLD_FILES.iter().chain(&["hidden_genres.tsv"]) {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
        let other = tempfile::tempdir().unwrap();
        generate_world(&small(10)).unwrap().save(other.path()).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("features.tsv")).unwrap(),
            std::fs::read(other.path().join("features.tsv")).unwrap()
        );
    }
}
