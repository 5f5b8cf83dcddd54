//! Product-discovery evaluation.
//!
//! Three intensity datasets (negative, neutral, positive) are retrieved by
//! prompt. A traversal seeded at a negative product and a visual-similarity
//! baseline from the same seed each produce an ordered discovery trajectory.
//! Sliding a window over each trajectory and counting how many products fall
//! in each dataset gives the discovery curves. A meaningful traversal shows
//! one peak per dataset, in intensity order.

mod projection;
mod report;

pub use projection::{project_2d, Projection};
pub use report::{run_eval, write_artifacts, DirectionFrom, EvalReport, EvalSetup};

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::PromptBank;
use crate::direction::DirectionVector;
use crate::error::{Error, Result};
use crate::index::KnnIndex;
use crate::traversal::{traverse, TraversalConfig};
use crate::vector::EmbeddingVector;

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_DATASET_SIZE: usize = 100;
pub const DEFAULT_MIN_PEAK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetLabel {
    Negative,
    Neutral,
    Positive,
}

impl DatasetLabel {
    pub const ALL: [DatasetLabel; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }
}

impl fmt::Display for DatasetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityPrompts {
    pub negative: String,
    pub neutral: String,
    pub positive: String,
}

/// Pairwise shared-product counts between the datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub negative_neutral: usize,
    pub negative_positive: usize,
    pub neutral_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityDatasets {
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
    pub prompts: IntensityPrompts,
    pub overlap: OverlapReport,
}

impl IntensityDatasets {
    pub fn get(&self, label: DatasetLabel) -> &[String] {
        match label {
            DatasetLabel::Negative => &self.negative,
            DatasetLabel::Neutral => &self.neutral,
            DatasetLabel::Positive => &self.positive,
        }
    }
}

fn shared(a: &[String], b: &[String]) -> usize {
    let a: HashSet<&String> = a.iter().collect();
    b.iter().filter(|x| a.contains(x)).count()
}

pub fn generate_intensity_datasets(
    index: &KnnIndex,
    bank: &PromptBank,
    neg_prompt: &str,
    neu_prompt: &str,
    pos_prompt: &str,
    n: usize,
) -> Result<IntensityDatasets> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dataset size must be positive".into(),
        ));
    }
    for p in [neg_prompt, neu_prompt, pos_prompt] {
        bank.get(p)?;
    }
    if index.len() < n {
        return Err(Error::InsufficientCatalog {
            requested: n,
            available: index.len(),
        });
    }
    let ids = |p: &str| -> Result<Vec<String>> {
        Ok(index
            .retrieve_by_prompt(bank, p, n)?
            .into_iter()
            .map(|h| h.product_id)
            .collect())
    };
    let negative = ids(neg_prompt)?;
    let neutral = ids(neu_prompt)?;
    let positive = ids(pos_prompt)?;
    let overlap = OverlapReport {
        negative_neutral: shared(&negative, &neutral),
        negative_positive: shared(&negative, &positive),
        neutral_positive: shared(&neutral, &positive),
    };
    Ok(IntensityDatasets {
        negative,
        neutral,
        positive,
        prompts: IntensityPrompts {
            negative: neg_prompt.to_string(),
            neutral: neu_prompt.to_string(),
            positive: pos_prompt.to_string(),
        },
        overlap,
    })
}

/// Ids recommended by a traversal, in step order then rank order.
pub fn discovery_trajectory_gradrec(
    seed_id: &str,
    direction: &DirectionVector,
    index: &KnnIndex,
    cfg: &TraversalConfig,
) -> Result<Vec<String>> {
    Ok(traverse(seed_id, direction, index, cfg)?.discovered())
}

/// The seed's `length` nearest neighbours, nearest first.
pub fn discovery_trajectory_visual(
    seed_id: &str,
    index: &KnnIndex,
    length: usize,
) -> Result<Vec<String>> {
    let seed = index
        .row_of(seed_id)
        .ok_or_else(|| Error::UnknownSeed(seed_id.to_string()))?;
    if length == 0 {
        return Ok(Vec::new());
    }
    let query = EmbeddingVector::new(index.vector(seed).to_vec())?;
    let exclude: HashSet<String> = [seed_id.to_string()].into();
    Ok(index
        .knn(&query, length, &exclude)?
        .into_iter()
        .map(|n| n.product_id)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    #[serde(rename = "gradrec")]
    GradRec,
    VisualSimilarity,
}

impl TrajectorySource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GradRec => "gradrec",
            Self::VisualSimilarity => "visual_similarity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryCurves {
    pub source: TrajectorySource,
    pub window_size: usize,
    pub negative: Vec<usize>,
    pub neutral: Vec<usize>,
    pub positive: Vec<usize>,
    /// Set when the trajectory was shorter than one window.
    pub too_short: bool,
}

impl DiscoveryCurves {
    pub fn get(&self, label: DatasetLabel) -> &[usize] {
        match label {
            DatasetLabel::Negative => &self.negative,
            DatasetLabel::Neutral => &self.neutral,
            DatasetLabel::Positive => &self.positive,
        }
    }
}

/// For every window start `t`, how many of `trajectory[t..t+window]` belong
/// to each dataset. The window advances one product at a time.
pub fn windowed_intersection(
    trajectory: &[String],
    datasets: &IntensityDatasets,
    window: usize,
    source: TrajectorySource,
) -> Result<DiscoveryCurves> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let too_short = trajectory.len() < window;
    let positions = if too_short {
        0
    } else {
        trajectory.len() - window + 1
    };
    let curve = |label: DatasetLabel| -> Vec<usize> {
        let members: HashSet<&str> = datasets.get(label).iter().map(String::as_str).collect();
        let hits: Vec<usize> = trajectory
            .iter()
            .map(|id| members.contains(id.as_str()) as usize)
            .collect();
        if positions == 0 {
            return Vec::new();
        }
        // running sum over the window
        let mut out = Vec::with_capacity(positions);
        let mut count: usize = hits[..window].iter().sum();
        out.push(count);
        for t in 1..positions {
            count = count + hits[t + window - 1] - hits[t - 1];
            out.push(count);
        }
        out
    };
    Ok(DiscoveryCurves {
        source,
        window_size: window,
        negative: curve(DatasetLabel::Negative),
        neutral: curve(DatasetLabel::Neutral),
        positive: curve(DatasetLabel::Positive),
        too_short,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Peak {
    pub label: DatasetLabel,
    /// First window start reaching the maximum; `None` for an empty curve.
    pub window_start: Option<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakOrder {
    /// Labels sorted by peak position.
    pub order: Vec<DatasetLabel>,
    pub expected: Vec<DatasetLabel>,
    pub peaks: Vec<Peak>,
    /// Labels whose peak stays below `min_peak`.
    pub missing: Vec<DatasetLabel>,
    pub min_peak: usize,
    pub pass: bool,
}

/// Checks for three peaks in intensity order starting from `start` (the
/// seed's level), each reaching at least `min_peak`.
pub fn peak_order(
    curves: &DiscoveryCurves,
    start: DatasetLabel,
    min_peak: usize,
) -> Result<PeakOrder> {
    let expected = match start {
        DatasetLabel::Negative => DatasetLabel::ALL.to_vec(),
        DatasetLabel::Positive => DatasetLabel::ALL.iter().rev().copied().collect(),
        DatasetLabel::Neutral => {
            return Err(Error::InvalidArgument(
                "peak order needs an extreme starting level".into(),
            ))
        }
    };
    let peaks: Vec<Peak> = DatasetLabel::ALL
        .iter()
        .map(|&label| {
            let c = curves.get(label);
            let max = c.iter().copied().max().unwrap_or(0);
            Peak {
                label,
                window_start: c.iter().position(|&x| x == max).filter(|_| !c.is_empty()),
                count: max,
            }
        })
        .collect();
    let mut sorted = peaks.clone();
    sorted.sort_by_key(|p| (p.window_start.is_none(), p.window_start, p.label));
    let order: Vec<DatasetLabel> = sorted.iter().map(|p| p.label).collect();
    let missing: Vec<DatasetLabel> = peaks
        .iter()
        .filter(|p| p.window_start.is_none() || p.count < min_peak)
        .map(|p| p.label)
        .collect();
    let strictly_increasing = sorted
        .windows(2)
        .all(|w| matches!((w[0].window_start, w[1].window_start), (Some(a), Some(b)) if a < b));
    let pass = missing.is_empty() && strictly_increasing && order == expected;
    Ok(PeakOrder {
        order,
        expected,
        peaks,
        missing,
        min_peak,
        pass,
    })
}

/// 1-based ranks with ties given their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation between trajectory position and planted α.
/// Returns 0 when either side has no variation.
pub fn monotonicity_score(trajectory: &[String], alpha: &BTreeMap<String, f64>) -> Result<f64> {
    let values = trajectory
        .iter()
        .map(|id| {
            alpha
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownProduct(id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() < 2 {
        return Ok(0.0);
    }
    let positions: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    Ok(pearson(&average_ranks(&positions), &average_ranks(&values)))
}
