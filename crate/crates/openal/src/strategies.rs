//! Query strategies: the two-stage openal strategy with its ablation
//! variants, plus the random / uncertainty / certainty / coreset baselines.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftss;
use crate::linalg::squared_euclidean;
use crate::pool::SamplePool;
use crate::probe::{self, ProbeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    OpenAl,
    Random,
    Uncertainty,
    Certainty,
    Coreset,
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "openal" => Ok(StrategyKind::OpenAl),
            "random" => Ok(StrategyKind::Random),
            "uncertainty" => Ok(StrategyKind::Uncertainty),
            "certainty" => Ok(StrategyKind::Certainty),
            "coreset" => Ok(StrategyKind::Coreset),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StrategyKind::OpenAl => "openal",
            StrategyKind::Random => "random",
            StrategyKind::Uncertainty => "uncertainty",
            StrategyKind::Certainty => "certainty",
            StrategyKind::Coreset => "coreset",
        };
        write!(f, "{name}")
    }
}

/// Ablation switches for the openal strategy.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    pub disable_sw: bool,
    pub disable_st: bool,
    pub disable_miss: bool,
    pub only_miss: bool,
}

#[derive(Debug, Clone)]
pub struct QuerySelection {
    pub round: usize,
    pub selected: Vec<u64>,
    pub strategy: String,
    /// Stage-1 candidate ids when the strategy has a candidate stage.
    pub candidates: Vec<u64>,
    /// Per-selected-id ranking score (entropy or distance), for diagnostics.
    pub scores: Vec<f64>,
}

fn entropy_of(model: Option<&ProbeModel>, z: &[f64], class_count: usize) -> Result<f64> {
    match model {
        Some(m) => probe::entropy(&probe::predict_proba(m, z)?),
        // cold start: uniform probabilities, constant entropy
        None => Ok((class_count.max(2) as f64).ln()),
    }
}

/// Stage 2: keep the `budget` candidates with highest predictive entropy,
/// ties broken by lower id.
pub fn miss_select(
    pool: &SamplePool,
    candidates: &[u64],
    model: Option<&ProbeModel>,
    budget: usize,
) -> Result<QuerySelection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("miss_select: no candidates".into()));
    }
    if budget > candidates.len() {
        return Err(Error::BudgetExceedsCandidates {
            budget,
            candidates: candidates.len(),
        });
    }
    let k = pool.target_class_count();
    let mut scored: Vec<(u64, f64)> = Vec::with_capacity(candidates.len());
    for &id in candidates {
        let z = pool.features(id).ok_or(Error::UnknownId(id))?;
        scored.push((id, entropy_of(model, z, k)?));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(budget);
    Ok(QuerySelection {
        round: 0,
        selected: scored.iter().map(|(id, _)| *id).collect(),
        strategy: "miss".into(),
        candidates: candidates.to_vec(),
        scores: scored.iter().map(|(_, e)| *e).collect(),
    })
}

pub fn random_select(pool: &SamplePool, budget: usize, seed: u64) -> Result<QuerySelection> {
    let mut ids = pool.unlabeled_ids();
    if ids.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(budget.min(ids.len()));
    Ok(QuerySelection {
        round: 0,
        selected: ids.clone(),
        strategy: "random".into(),
        candidates: Vec::new(),
        scores: Vec::new(),
    })
}

fn entropy_ranked(
    pool: &SamplePool,
    model: Option<&ProbeModel>,
    budget: usize,
    highest_first: bool,
) -> Result<Vec<(u64, f64)>> {
    let ids = pool.unlabeled_ids();
    if ids.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    let k = pool.target_class_count();
    let mut scored: Vec<(u64, f64)> = Vec::with_capacity(ids.len());
    for id in ids {
        let z = pool.features(id).unwrap();
        scored.push((id, entropy_of(model, z, k)?));
    }
    scored.sort_by(|a, b| {
        let ord = if highest_first {
            b.1.partial_cmp(&a.1).unwrap()
        } else {
            a.1.partial_cmp(&b.1).unwrap()
        };
        ord.then(a.0.cmp(&b.0))
    });
    scored.truncate(budget.min(scored.len()));
    Ok(scored)
}

/// Highest predictive entropy over the whole unlabeled set.
pub fn uncertainty_select(
    pool: &SamplePool,
    model: Option<&ProbeModel>,
    budget: usize,
) -> Result<QuerySelection> {
    let scored = entropy_ranked(pool, model, budget, true)?;
    Ok(QuerySelection {
        round: 0,
        selected: scored.iter().map(|(id, _)| *id).collect(),
        strategy: "uncertainty".into(),
        candidates: Vec::new(),
        scores: scored.iter().map(|(_, e)| *e).collect(),
    })
}

/// Lowest predictive entropy first.
pub fn certainty_select(
    pool: &SamplePool,
    model: Option<&ProbeModel>,
    budget: usize,
) -> Result<QuerySelection> {
    let scored = entropy_ranked(pool, model, budget, false)?;
    Ok(QuerySelection {
        round: 0,
        selected: scored.iter().map(|(id, _)| *id).collect(),
        strategy: "certainty".into(),
        candidates: Vec::new(),
        scores: scored.iter().map(|(_, e)| *e).collect(),
    })
}

/// K-center greedy: repeatedly take the unlabeled point whose minimum
/// Euclidean distance to the labeled set plus already-picked points is
/// largest. An empty labeled set seeds from the lowest unlabeled id.
pub fn coreset_select(pool: &SamplePool, budget: usize) -> Result<QuerySelection> {
    let unlabeled = pool.unlabeled_ids();
    if unlabeled.is_empty() {
        return Err(Error::NoUnlabeled);
    }
    let mut labeled_feats: Vec<&[f64]> = pool
        .labeled_target_ids()
        .into_iter()
        .chain(pool.queried_nontarget_ids())
        .map(|id| pool.features(id).unwrap())
        .collect();

    let mut remaining: Vec<(u64, &[f64], f64)> = unlabeled
        .iter()
        .map(|&id| (id, pool.features(id).unwrap(), f64::INFINITY))
        .collect();
    let mut selected = Vec::new();
    let mut scores = Vec::new();

    if labeled_feats.is_empty() {
        // seed from the lowest id (remaining is id-sorted)
        let (id, z, _) = remaining.remove(0);
        selected.push(id);
        scores.push(f64::INFINITY);
        labeled_feats.push(z);
    }
    for entry in &mut remaining {
        for lf in &labeled_feats {
            entry.2 = entry.2.min(squared_euclidean(entry.1, lf));
        }
    }

    while selected.len() < budget.min(unlabeled.len()) && !remaining.is_empty() {
        let mut best = 0;
        for (i, entry) in remaining.iter().enumerate() {
            if entry.2 > remaining[best].2
                || (entry.2 == remaining[best].2 && entry.0 < remaining[best].0)
            {
                best = i;
            }
        }
        let (id, z, dist) = remaining.remove(best);
        selected.push(id);
        scores.push(dist.sqrt());
        for entry in &mut remaining {
            entry.2 = entry.2.min(squared_euclidean(entry.1, z));
        }
    }

    Ok(QuerySelection {
        round: 0,
        selected,
        strategy: "coreset".into(),
        candidates: Vec::new(),
        scores,
    })
}

/// The two-stage openal strategy: FTSS candidate extraction followed by MISS
/// entropy ranking, with ablation flags mapping to the variant behaviors.
#[allow(clippy::too_many_arguments)]
pub fn openal_select(
    pool: &SamplePool,
    model: Option<&ProbeModel>,
    budget: usize,
    candidate_multiplier: usize,
    kmeans_w: usize,
    kmeans_seed: u64,
    flags: AblationFlags,
) -> Result<QuerySelection> {
    if flags.only_miss {
        let mut sel = uncertainty_select(pool, model, budget)?;
        sel.strategy = "openal(only_miss)".into();
        return Ok(sel);
    }
    let unlabeled = pool.unlabeled_count();
    if unlabeled == 0 {
        return Err(Error::NoUnlabeled);
    }
    let budget = budget.min(unlabeled);
    let candidate_size = if flags.disable_miss {
        budget
    } else {
        (candidate_multiplier * budget).min(unlabeled)
    };

    let target_clusters = if flags.disable_st {
        Vec::new()
    } else {
        ftss::build_target_clusters(pool)?
    };
    let nontarget_clusters = if flags.disable_sw {
        Vec::new()
    } else {
        ftss::build_nontarget_clusters(pool, kmeans_w, kmeans_seed)?
    };
    let table = ftss::score_table_with_flags(
        pool,
        &target_clusters,
        &nontarget_clusters,
        flags.disable_st,
        flags.disable_sw,
    )?;
    let candidates = ftss::select_smallest(&table, candidate_size);

    if flags.disable_miss {
        return Ok(QuerySelection {
            round: 0,
            selected: candidates.clone(),
            strategy: "openal(no_miss)".into(),
            candidates,
            scores: Vec::new(),
        });
    }
    let mut sel = miss_select(pool, &candidates, model, budget.min(candidates.len()))?;
    sel.strategy = "openal".into();
    Ok(sel)
}
