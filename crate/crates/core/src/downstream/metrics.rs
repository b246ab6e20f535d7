use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indices sorted by ascending score, grouped into runs of equal scores.
fn tie_blocks(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match blocks.last_mut() {
            Some(b) if scores[b[0]] == scores[i] => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

fn counts(labels: &[bool]) -> (usize, usize) {
    let p = labels.iter().filter(|&&l| l).count();
    (p, labels.len() - p)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "metric",
            expected: format!("{} labels", scores.len()),
            got: labels.len().to_string(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "metric" });
    }
    Ok(())
}

/// ROC-AUC as the Mann-Whitney statistic with half credit for ties.
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check(scores, labels)?;
    let (p, n) = counts(labels);
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let mut rank_sum = 0.0;
    let mut seen = 0usize;
    for block in tie_blocks(scores) {
        // average of ranks seen+1 ..= seen+len
        let avg = seen as f64 + (block.len() as f64 + 1.0) / 2.0;
        rank_sum += avg * block.iter().filter(|&&i| labels[i]).count() as f64;
        seen += block.len();
    }
    let p_f = p as f64;
    Ok(Some((rank_sum - p_f * (p_f + 1.0) / 2.0) / (p_f * n as f64)))
}

/// Step-wise average precision over a descending sweep; tied scores enter as
/// one block. `None` when either class is absent.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check(scores, labels)?;
    let (p, n) = counts(labels);
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for block in tie_blocks(scores).into_iter().rev() {
        let pos = block.iter().filter(|&&i| labels[i]).count();
        tp += pos;
        fp += block.len() - pos;
        if pos > 0 {
            let recall = tp as f64 / p as f64;
            ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
            prev_recall = recall;
        }
    }
    Ok(Some(ap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMetrics {
    pub tag: String,
    pub roc_auc: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub per_tag: Vec<TagMetrics>,
    /// Tags without both a positive and a negative in the evaluated set.
    pub excluded: Vec<String>,
}

/// Per-tag and macro metrics. `scores[i][j]` and `labels[i][j]` are track `i`, tag `j`.
pub fn macro_metrics<S: AsRef<[f64]> + Sync, L: AsRef<[bool]> + Sync>(
    tags: &[String],
    scores: &[S],
    labels: &[L],
) -> Result<MacroMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "macro_metrics",
            expected: format!("{} label rows", scores.len()),
            got: labels.len().to_string(),
        });
    }
    for (s, l) in scores.iter().zip(labels) {
        if s.as_ref().len() != tags.len() || l.as_ref().len() != tags.len() {
            return Err(Error::Shape {
                op: "macro_metrics",
                expected: format!("{} tags per row", tags.len()),
                got: format!("{}/{}", s.as_ref().len(), l.as_ref().len()),
            });
        }
    }
    let per: Vec<Result<Option<(f64, f64)>>> = (0..tags.len())
        .into_par_iter()
        .map(|j| {
            let s: Vec<f64> = scores.iter().map(|r| r.as_ref()[j]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r.as_ref()[j]).collect();
            Ok(match (roc_auc(&s, &l)?, average_precision(&s, &l)?) {
                (Some(a), Some(p)) => Some((a, p)),
                _ => None,
            })
        })
        .collect();
    let mut per_tag = Vec::new();
    let mut excluded = Vec::new();
    for (tag, r) in tags.iter().zip(per) {
        match r? {
            Some((roc_auc, average_precision)) => per_tag.push(TagMetrics {
                tag: tag.clone(),
                roc_auc,
                average_precision,
            }),
            None => excluded.push(tag.clone()),
        }
    }
    if per_tag.is_empty() {
        return Err(Error::Validation("no tag has both positives and negatives".into()));
    }
    if !excluded.is_empty() {
        warn!("excluded degenerate tags from macro mean: {}", excluded.join(", "));
    }
    let k = per_tag.len() as f64;
    Ok(MacroMetrics {
        roc_auc: per_tag.iter().map(|t| t.roc_auc).sum::<f64>() / k,
        average_precision: per_tag.iter().map(|t| t.average_precision).sum::<f64>() / k,
        per_tag,
        excluded,
    })
}

pub fn macro_roc_auc<S: AsRef<[f64]> + Sync, L: AsRef<[bool]> + Sync>(
    tags: &[String],
    scores: &[S],
    labels: &[L],
) -> Result<f64> {
    Ok(macro_metrics(tags, scores, labels)?.roc_auc)
}

pub fn macro_average_precision<S: AsRef<[f64]> + Sync, L: AsRef<[bool]> + Sync>(
    tags: &[String],
    scores: &[S],
    labels: &[L],
) -> Result<f64> {
    Ok(macro_metrics(tags, scores, labels)?.average_precision)
}
