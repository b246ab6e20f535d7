use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{TrackId, TripletSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletReport {
    pub accuracy: f64,
    /// Mean of `d(anchor, negative) − d(anchor, positive)`.
    pub avg_difference: f64,
    pub n: usize,
}

/// `1 − cos(a, b)`; both vectors must be non-zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

pub fn evaluate_triplets(embeddings: &BTreeMap<TrackId, Vec<f64>>, triplets: &TripletSet) -> Result<TripletReport> {
    if triplets.is_empty() {
        return Err(Error::Validation("no triplets to evaluate".into()));
    }
    let get = |t: &TrackId| -> Result<&[f64]> {
        let v = embeddings
            .get(t)
            .ok_or_else(|| Error::UnknownTrack(t.to_string()))?;
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::Validation(format!("zero-norm embedding for track `{t}`")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("non-finite embedding for track `{t}`")));
        }
        Ok(v)
    };
    let mut correct = 0usize;
    let mut diff = 0.0;
    for tr in &triplets.triplets {
        let a = get(&tr.anchor)?;
        let dp = cosine_distance(a, get(&tr.positive)?);
        let dn = cosine_distance(a, get(&tr.negative)?);
        if dn > dp {
            correct += 1;
        }
        diff += dn - dp;
    }
    let n = triplets.len();
    Ok(TripletReport {
        accuracy: correct as f64 / n as f64,
        avg_difference: diff / n as f64,
        n,
    })
}
