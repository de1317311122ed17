//! Feature-based target sample selection: cluster statistics, regularized
//! Mahalanobis distances, score normalization and candidate extraction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kmeans::{cluster_members, kmeans, KMeansResult};
use crate::linalg;
use crate::pool::SamplePool;

/// Shrinkage factor applied to the covariance before inversion.
pub const COV_SHRINKAGE: f64 = 1e-3;
const COV_EPSILON: f64 = 1e-9;

/// Mean, covariance and regularized inverse covariance for one target class
/// or one non-target k-means cluster.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    /// Inverse of covariance + shrinkage * (trace/d + eps) * I.
    pub inv_covariance: Vec<f64>,
    pub count: usize,
}

/// Per-round s_t / s_w / s values over the current unlabeled set.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    /// id -> (s_t, s_w, s), with s = s_t - s_w.
    pub scores: BTreeMap<u64, (f64, f64, f64)>,
}

/// Fits mean, sample covariance and the regularized inverse for one cluster.
/// A single-member cluster gets a zero covariance that regularization lifts to
/// a small SPD diagonal, so it is usable immediately.
pub fn fit_cluster(features: &[&[f64]]) -> Result<ClusterModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput("fit_cluster: no features".into()));
    }
    let d = features[0].len();
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.len(),
            });
        }
    }
    let mean = linalg::mean(features);
    let covariance = linalg::sample_covariance(features, &mean);
    let reg = regularize(&covariance, d);
    let inv_covariance =
        linalg::spd_inverse(&reg, d).expect("regularized covariance is positive definite");
    Ok(ClusterModel {
        mean,
        covariance,
        inv_covariance,
        count: features.len(),
    })
}

/// Covariance + shrinkage * (trace/d + eps) * I.
pub fn regularize(covariance: &[f64], d: usize) -> Vec<f64> {
    let ridge = COV_SHRINKAGE * (linalg::trace(covariance, d) / d as f64 + COV_EPSILON);
    let mut reg = covariance.to_vec();
    for i in 0..d {
        reg[i * d + i] += ridge;
    }
    reg
}

/// Squared Mahalanobis distance (z - mu)^T inv_cov (z - mu). The squared form
/// is used throughout; candidate ranking is invariant to taking the root.
pub fn mahalanobis_sq(z: &[f64], cluster: &ClusterModel) -> Result<f64> {
    if z.len() != cluster.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: cluster.mean.len(),
            got: z.len(),
        });
    }
    let diff: Vec<f64> = z.iter().zip(&cluster.mean).map(|(a, b)| a - b).collect();
    Ok(linalg::quadratic_form(&cluster.inv_covariance, &diff))
}

/// Raw s_t per unlabeled sample: minimum squared Mahalanobis distance over the
/// target class clusters.
pub fn target_score(
    unlabeled: &[(u64, &[f64])],
    target_clusters: &[ClusterModel],
) -> Result<BTreeMap<u64, f64>> {
    if target_clusters.is_empty() {
        return Err(Error::EmptyInput("target_score: no target clusters".into()));
    }
    min_cluster_distance(unlabeled, target_clusters)
}

/// Raw s_w per unlabeled sample: minimum squared Mahalanobis distance over the
/// non-target clusters. With zero clusters (nothing queried yet) every raw
/// value is 0, so the combined score reduces to s_t.
pub fn nontarget_score(
    unlabeled: &[(u64, &[f64])],
    nontarget_clusters: &[ClusterModel],
) -> Result<BTreeMap<u64, f64>> {
    if nontarget_clusters.is_empty() {
        return Ok(unlabeled.iter().map(|&(id, _)| (id, 0.0)).collect());
    }
    min_cluster_distance(unlabeled, nontarget_clusters)
}

fn min_cluster_distance(
    unlabeled: &[(u64, &[f64])],
    clusters: &[ClusterModel],
) -> Result<BTreeMap<u64, f64>> {
    let mut out = BTreeMap::new();
    for &(id, z) in unlabeled {
        let mut best = f64::INFINITY;
        for cluster in clusters {
            let d = mahalanobis_sq(z, cluster)?;
            if d < best {
                best = d;
            }
        }
        out.insert(id, best);
    }
    Ok(out)
}

/// Min-max normalization over the supplied raw values. If all values are
/// equal, every output is 0.
pub fn normalize(raw: &BTreeMap<u64, f64>) -> Result<BTreeMap<u64, f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("normalize: empty map".into()));
    }
    let min = raw.values().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    Ok(raw
        .iter()
        .map(|(&id, &v)| (id, if span > 0.0 { (v - min) / span } else { 0.0 }))
        .collect())
}

/// Builds one ClusterModel per k-means cluster of the queried non-target
/// features.
pub fn nontarget_clusters_from_kmeans(
    features: &[Vec<f64>],
    result: &KMeansResult,
) -> Result<Vec<ClusterModel>> {
    let mut clusters = Vec::new();
    for members in cluster_members(result) {
        let group: Vec<&[f64]> = members.iter().map(|&i| features[i].as_slice()).collect();
        clusters.push(fit_cluster(&group)?);
    }
    Ok(clusters)
}

/// Builds the W-cluster model of the queried non-target set. Returns no
/// clusters when nothing non-target has been queried yet.
pub fn build_nontarget_clusters(
    pool: &SamplePool,
    w: usize,
    seed: u64,
) -> Result<Vec<ClusterModel>> {
    let ids = pool.queried_nontarget_ids();
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let features: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| pool.features(id).unwrap().to_vec())
        .collect();
    let result = kmeans(&features, w, seed)?;
    nontarget_clusters_from_kmeans(&features, &result)
}

/// One ClusterModel per fine-grained class present in the labeled target set.
pub fn build_target_clusters(pool: &SamplePool) -> Result<Vec<ClusterModel>> {
    let mut clusters = Vec::new();
    for (_, ids) in pool.labeled_targets_by_class() {
        let features: Vec<&[f64]> = ids.iter().map(|&id| pool.features(id).unwrap()).collect();
        clusters.push(fit_cluster(&features)?);
    }
    Ok(clusters)
}

/// Computes the score table for the current unlabeled set.
pub fn score_table(
    pool: &SamplePool,
    target_clusters: &[ClusterModel],
    nontarget_clusters: &[ClusterModel],
) -> Result<ScoreTable> {
    score_table_with_flags(pool, target_clusters, nontarget_clusters, false, false)
}

/// Score table with ablation switches: `disable_st` / `disable_sw` zero out
/// the corresponding component before combination.
pub fn score_table_with_flags(
    pool: &SamplePool,
    target_clusters: &[ClusterModel],
    nontarget_clusters: &[ClusterModel],
    disable_st: bool,
    disable_sw: bool,
) -> Result<ScoreTable> {
    let ids = pool.unlabeled_ids();
    if ids.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    let unlabeled: Vec<(u64, &[f64])> = ids
        .iter()
        .map(|&id| (id, pool.features(id).unwrap()))
        .collect();

    let zeros = || -> BTreeMap<u64, f64> { ids.iter().map(|&id| (id, 0.0)).collect() };
    let st_raw = if disable_st {
        zeros()
    } else {
        target_score(&unlabeled, target_clusters)?
    };
    let sw_raw = if disable_sw {
        zeros()
    } else {
        nontarget_score(&unlabeled, nontarget_clusters)?
    };
    let st = normalize(&st_raw)?;
    let sw = normalize(&sw_raw)?;

    let mut table = ScoreTable::default();
    for &id in &ids {
        let t = st[&id];
        let w = sw[&id];
        table.scores.insert(id, (t, w, t - w));
    }
    Ok(table)
}

/// Candidate extraction: the min(candidate_size, |U|) unlabeled ids with the
/// smallest combined score, ties broken by lower id.
pub fn ftss_select(
    pool: &SamplePool,
    candidate_size: usize,
    target_clusters: &[ClusterModel],
    nontarget_clusters: &[ClusterModel],
) -> Result<Vec<u64>> {
    let table = score_table(pool, target_clusters, nontarget_clusters)?;
    Ok(select_smallest(&table, candidate_size))
}

pub fn select_smallest(table: &ScoreTable, candidate_size: usize) -> Vec<u64> {
    let mut entries: Vec<(u64, f64)> = table.scores.iter().map(|(&id, &(_, _, s))| (id, s)).collect();
    entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    entries
        .into_iter()
        .take(candidate_size)
        .map(|(id, _)| id)
        .collect()
}
