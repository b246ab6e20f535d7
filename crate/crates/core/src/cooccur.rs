//! Playlist co-occurrence counts and per-track top-k neighbour lists.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_text, write_bytes, PlaylistCorpus, TrackId, TrackRegistry};
use crate::error::{Error, Result};

/// Sparse symmetric counts keyed on unordered registry-index pairs `(lo, hi)`.
#[derive(Debug, Clone)]
pub struct CoocCounts {
    registry: TrackRegistry,
    counts: HashMap<(u32, u32), u32>,
}

fn key(a: usize, b: usize) -> (u32, u32) {
    if a < b {
        (a as u32, b as u32)
    } else {
        (b as u32, a as u32)
    }
}

impl CoocCounts {
    pub fn empty(registry: TrackRegistry) -> Self {
        CoocCounts {
            registry,
            counts: HashMap::new(),
        }
    }

    pub fn registry(&self) -> &TrackRegistry {
        &self.registry
    }

    /// Number of distinct co-occurring pairs.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    /// Count for an unordered pair; 0 for self-pairs and unknown tracks.
    pub fn count(&self, a: &str, b: &str) -> u32 {
        match (self.registry.index_of(a), self.registry.index_of(b)) {
            (Some(i), Some(j)) if i != j => self.count_idx(i, j),
            _ => 0,
        }
    }

    pub fn count_idx(&self, a: usize, b: usize) -> u32 {
        self.counts.get(&key(a, b)).copied().unwrap_or(0)
    }

    /// `(lo, hi, count)` triples sorted by index, i.e. lexicographically by id.
    pub fn sorted_entries(&self) -> Vec<(usize, usize, u32)> {
        let mut v: Vec<_> = self
            .counts
            .iter()
            .map(|(&(a, b), &c)| (a as usize, b as usize, c))
            .collect();
        v.sort_unstable();
        v
    }

    /// Adds another shard's counts. Both must share a registry.
    pub fn merge(&mut self, other: &CoocCounts) -> Result<()> {
        if self.registry != other.registry {
            return Err(Error::Validation("cannot merge counts over different registries".into()));
        }
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (a, b, c) in self.sorted_entries() {
            out.push_str(&format!("{}\t{}\t{c}\n", self.registry.id(a), self.registry.id(b)));
        }
        write_bytes(path, out.as_bytes())
    }

    pub fn load(path: &Path, registry: TrackRegistry) -> Result<Self> {
        let text = read_text(path)?;
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [a, b, c] = cols[..] else {
                return Err(Error::parse(path, i + 1, "expected `track_a<TAB>track_b<TAB>count`"));
            };
            if a >= b {
                return Err(Error::parse(path, i + 1, "track_a must sort before track_b"));
            }
            let lookup = |t: &str| {
                registry
                    .index_of(t)
                    .ok_or_else(|| Error::parse(path, i + 1, format!("unknown track `{t}`")))
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            let c: u32 = c
                .parse()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad count `{c}`")))?;
            counts.insert(key(ia, ib), c);
        }
        Ok(CoocCounts { registry, counts })
    }
}

fn count_shard(corpus: &PlaylistCorpus, range: std::ops::Range<usize>) -> HashMap<(u32, u32), u32> {
    let mut counts = HashMap::new();
    for p in &corpus.playlists()[range] {
        for (i, &a) in p.tracks.iter().enumerate() {
            for &b in &p.tracks[i + 1..] {
                *counts.entry(key(a, b)).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Counts, for every unordered track pair, the playlists containing both.
pub fn count_cooccurrences(corpus: &PlaylistCorpus) -> CoocCounts {
    count_cooccurrences_sharded(corpus, rayon::current_num_threads().max(1))
}

/// Same as [`count_cooccurrences`] with an explicit shard count. Shards are
/// contiguous playlist ranges merged by addition.
pub fn count_cooccurrences_sharded(corpus: &PlaylistCorpus, shards: usize) -> CoocCounts {
    let n = corpus.playlists().len();
    let shards = shards.clamp(1, n.max(1));
    let step = n.div_ceil(shards);
    let parts: Vec<HashMap<(u32, u32), u32>> = (0..shards)
        .into_par_iter()
        .map(|s| count_shard(corpus, (s * step).min(n)..((s + 1) * step).min(n)))
        .collect();
    let mut counts = HashMap::new();
    for part in parts {
        for (k, c) in part {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    CoocCounts {
        registry: corpus.registry().clone(),
        counts,
    }
}

/// Each track's `k` most co-occurring partners, count descending, ties by id.
#[derive(Debug, Clone)]
pub struct TopKIndex {
    k: usize,
    registry: TrackRegistry,
    neighbors: Vec<Vec<(usize, u32)>>,
}

impl TopKIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn registry(&self) -> &TrackRegistry {
        &self.registry
    }

    pub fn neighbors_idx(&self, track: usize) -> &[(usize, u32)] {
        &self.neighbors[track]
    }

    pub fn neighbors(&self, track: &str) -> Option<Vec<(&TrackId, u32)>> {
        let i = self.registry.index_of(track)?;
        Some(
            self.neighbors[i]
                .iter()
                .map(|&(j, c)| (self.registry.id(j), c))
                .collect(),
        )
    }

    /// Builds an index directly from neighbour lists given by id.
    /// Lists are taken as-is (caller owns their order), truncated to `k`.
    pub fn from_lists(registry: TrackRegistry, k: usize, lists: &[(&str, Vec<&str>)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); registry.len()];
        for (t, ns) in lists {
            let i = registry.index_of(t).ok_or_else(|| Error::UnknownTrack(t.to_string()))?;
            neighbors[i] = ns
                .iter()
                .take(k)
                .map(|n| {
                    registry
                        .index_of(n)
                        .map(|j| (j, 1))
                        .ok_or_else(|| Error::UnknownTrack(n.to_string()))
                })
                .collect::<Result<_>>()?;
        }
        Ok(TopKIndex {
            k,
            registry,
            neighbors,
        })
    }
}

pub fn build_topk(counts: &CoocCounts, k: usize) -> Result<TopKIndex> {
    if k == 0 {
        return Err(Error::Config("top-k requires k >= 1".into()));
    }
    let n = counts.registry.len();
    let mut adj: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
    for (&(a, b), &c) in &counts.counts {
        adj[a as usize].push((b as usize, c));
        adj[b as usize].push((a as usize, c));
    }
    for list in &mut adj {
        list.sort_unstable_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        list.truncate(k);
    }
    Ok(TopKIndex {
        k,
        registry: counts.registry.clone(),
        neighbors: adj,
    })
}
