//! Attribute direction vectors from a neutral/exemplar prompt pair.
//!
//! Both prompts retrieve a small class set of image vectors. Per channel `j`:
//!
//! ```text
//! snr[j] = (mean_e[j] - mean_n[j]) / (std_e[j] + epsilon)
//! ```
//!
//! with population std over the exemplar set. The sign of the difference is
//! kept. The direction is `snr / ‖snr‖`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::PromptBank;
use crate::error::{Error, Result};
use crate::index::KnnIndex;
use crate::vector::{norm_f64, EmbeddingVector};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_CLASS_SIZE: usize = 100;
/// Class-set overlap at or above this fraction is flagged.
pub const OVERLAP_WARN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Population std over the exemplar set.
    #[default]
    Exemplar,
    /// Population std over both sets together.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrOptions {
    pub epsilon: f64,
    pub noise: NoiseModel,
    /// Keep only the `q` channels with the largest |snr|.
    pub top_channels: Option<usize>,
}

impl Default for SnrOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            noise: NoiseModel::Exemplar,
            top_channels: None,
        }
    }
}

impl SnrOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if let Some(q) = self.top_channels {
            if q == 0 || q > dim {
                return Err(Error::InvalidArgument(format!(
                    "top_channels must be in 1..={dim}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSetProvenance {
    pub neutral_prompt: Option<String>,
    pub exemplar_prompt: Option<String>,
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub neutral_ids: Vec<String>,
    #[serde(default)]
    pub exemplar_ids: Vec<String>,
    /// Products present in both sets.
    pub overlap: usize,
    /// `overlap / min(m, n)`
    pub overlap_fraction: f64,
    pub overlap_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSets {
    pub neutral: Vec<EmbeddingVector>,
    pub exemplar: Vec<EmbeddingVector>,
    pub provenance: ClassSetProvenance,
}

impl ClassSets {
    /// Class sets from raw vectors, without retrieval provenance.
    pub fn new(neutral: Vec<EmbeddingVector>, exemplar: Vec<EmbeddingVector>) -> Result<Self> {
        let provenance = ClassSetProvenance {
            neutral_prompt: None,
            exemplar_prompt: None,
            m: neutral.len(),
            n: exemplar.len(),
            neutral_ids: Vec::new(),
            exemplar_ids: Vec::new(),
            overlap: 0,
            overlap_fraction: 0.0,
            overlap_warning: false,
        };
        let sets = Self {
            neutral,
            exemplar,
            provenance,
        };
        sets.validate()?;
        Ok(sets)
    }

    pub fn dim(&self) -> usize {
        self.neutral[0].dim()
    }

    fn validate(&self) -> Result<()> {
        if self.neutral.len() < 2 || self.exemplar.len() < 2 {
            return Err(Error::InvalidArgument(
                "class sets need at least 2 vectors each".into(),
            ));
        }
        let dim = self.neutral[0].dim();
        for v in self.neutral.iter().chain(&self.exemplar) {
            if v.dim() != dim {
                return Err(Error::dim(dim, v.dim()));
            }
            if !v.is_unit() {
                return Err(Error::InvalidArgument(format!(
                    "class vector has norm {}",
                    v.norm()
                )));
            }
        }
        Ok(())
    }
}

pub fn build_class_sets(
    index: &KnnIndex,
    bank: &PromptBank,
    neutral_prompt: &str,
    exemplar_prompt: &str,
    m: usize,
    n: usize,
) -> Result<ClassSets> {
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "class sizes must be at least 2 (got m={m}, n={n})"
        )));
    }
    bank.check_dim(index.dim())?;
    // resolve both prompts before touching the catalog
    bank.get(neutral_prompt)?;
    bank.get(exemplar_prompt)?;
    let need = m.max(n);
    if index.len() < need {
        return Err(Error::InsufficientCatalog {
            requested: need,
            available: index.len(),
        });
    }
    let neutral_hits = index.retrieve_by_prompt(bank, neutral_prompt, m)?;
    let exemplar_hits = index.retrieve_by_prompt(bank, exemplar_prompt, n)?;

    let neutral_rows: HashSet<usize> = neutral_hits.iter().map(|h| h.row).collect();
    let overlap = exemplar_hits
        .iter()
        .filter(|h| neutral_rows.contains(&h.row))
        .count();
    let overlap_fraction = overlap as f64 / m.min(n) as f64;

    let vecs = |hits: &[crate::index::Neighbor]| -> Result<Vec<EmbeddingVector>> {
        hits.iter()
            .map(|h| EmbeddingVector::new(index.vector(h.row).to_vec()))
            .collect()
    };
    let sets = ClassSets {
        neutral: vecs(&neutral_hits)?,
        exemplar: vecs(&exemplar_hits)?,
        provenance: ClassSetProvenance {
            neutral_prompt: Some(neutral_prompt.to_string()),
            exemplar_prompt: Some(exemplar_prompt.to_string()),
            m,
            n,
            neutral_ids: neutral_hits.into_iter().map(|h| h.product_id).collect(),
            exemplar_ids: exemplar_hits.into_iter().map(|h| h.product_id).collect(),
            overlap,
            overlap_fraction,
            overlap_warning: overlap_fraction >= OVERLAP_WARN,
        },
    };
    sets.validate()?;
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionProvenance {
    pub class_sets: ClassSetProvenance,
    pub options: SnrOptions,
    #[serde(default)]
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionVector {
    pub v_c: EmbeddingVector,
    pub snr_raw: Vec<f64>,
    pub provenance: DirectionProvenance,
}

fn mean_std(vectors: &[&EmbeddingVector], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let count = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v.as_slice()) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, &x), m) in var.iter_mut().zip(v.as_slice()).zip(&mean) {
            let d = x as f64 - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / count).sqrt()).collect();
    (mean, std)
}

/// Per-channel signed SNR between the class means, scaled by the exemplar
/// (or pooled) spread.
pub fn channel_snr(sets: &ClassSets, options: &SnrOptions) -> Result<Vec<f64>> {
    let dim = sets.dim();
    options.validate(dim)?;
    let neutral: Vec<&EmbeddingVector> = sets.neutral.iter().collect();
    let exemplar: Vec<&EmbeddingVector> = sets.exemplar.iter().collect();
    let (mu_n, _) = mean_std(&neutral, dim);
    let (mu_e, std_e) = mean_std(&exemplar, dim);
    let noise = match options.noise {
        NoiseModel::Exemplar => std_e,
        NoiseModel::Pooled => {
            let both: Vec<&EmbeddingVector> = neutral.iter().chain(&exemplar).copied().collect();
            mean_std(&both, dim).1
        }
    };
    let mut snr: Vec<f64> = (0..dim)
        .map(|j| (mu_e[j] - mu_n[j]) / (noise[j] + options.epsilon))
        .collect();
    if let Some(q) = options.top_channels {
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| snr[b].abs().total_cmp(&snr[a].abs()).then(a.cmp(&b)));
        for &j in &order[q..] {
            snr[j] = 0.0;
        }
    }
    Ok(snr)
}

/// Unit direction parallel to `snr`; fails when the SNR vector is
/// numerically zero.
pub fn normalize_snr(snr: &[f64]) -> Result<EmbeddingVector> {
    let n = norm_f64(snr);
    if n.is_nan() || n < 1e-10 {
        return Err(Error::ZeroSignal(n));
    }
    let unit: Vec<f64> = snr.iter().map(|x| x / n).collect();
    Ok(EmbeddingVector::from_f64(&unit))
}

pub fn snr_direction(sets: &ClassSets, options: &SnrOptions) -> Result<DirectionVector> {
    let snr_raw = channel_snr(sets, options)?;
    let v_c = normalize_snr(&snr_raw)?;
    Ok(DirectionVector {
        v_c,
        snr_raw,
        provenance: DirectionProvenance {
            class_sets: sets.provenance.clone(),
            options: *options,
            inverted: false,
        },
    })
}

#[allow(clippy::too_many_arguments)]
pub fn build_direction(
    index: &KnnIndex,
    bank: &PromptBank,
    neutral_prompt: &str,
    exemplar_prompt: &str,
    m: usize,
    n: usize,
    options: &SnrOptions,
) -> Result<DirectionVector> {
    let sets = build_class_sets(index, bank, neutral_prompt, exemplar_prompt, m, n)?;
    snr_direction(&sets, options)
}

/// The opposite direction ("lighter" from "darker").
pub fn invert_direction(d: &DirectionVector) -> DirectionVector {
    let mut out = d.clone();
    out.v_c = d.v_c.negated();
    out.snr_raw = d.snr_raw.iter().map(|x| -x).collect();
    out.provenance.inverted = !d.provenance.inverted;
    out
}

impl DirectionVector {
    pub fn dim(&self) -> usize {
        self.v_c.dim()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("direction serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("direction JSON: {e}")))?;
        if d.v_c.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector("v_c".into()));
        }
        if !d.v_c.is_unit() {
            return Err(Error::InvalidArgument(format!(
                "v_c has norm {}",
                d.v_c.norm()
            )));
        }
        Ok(d)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, dim: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn zero_noise_closed_form() {
        let neutral = vec![EmbeddingVector::new(e(0, 4)).unwrap(); 3];
        let ex = EmbeddingVector::unit(vec![1.0, 0.2, 0.0, 0.0]).unwrap();
        let exemplar = vec![ex.clone(); 3];
        let sets = ClassSets::new(neutral, exemplar).unwrap();
        let d = snr_direction(&sets, &SnrOptions::default()).unwrap();
        // noise is zero everywhere, so snr ∝ exemplar − e1
        let diff: Vec<f64> = ex
            .as_slice()
            .iter()
            .zip(e(0, 4))
            .map(|(&a, b)| a as f64 - b as f64)
            .collect();
        let n = norm_f64(&diff);
        for (got, want) in d.v_c.as_slice().iter().zip(&diff) {
            assert!((*got as f64 - want / n).abs() < 1e-6);
        }
        assert!(d.v_c.as_slice()[1] > 0.9);
        assert!(d.v_c.as_slice()[0] < 0.0);
    }

    #[test]
    fn identical_sets_have_zero_signal() {
        let a = EmbeddingVector::unit(vec![1.0, 0.1, 0.0]).unwrap();
        let b = EmbeddingVector::unit(vec![0.9, 0.0, 0.3]).unwrap();
        let sets = ClassSets::new(vec![a.clone(), b.clone()], vec![a, b]).unwrap();
        assert!(matches!(
            snr_direction(&sets, &SnrOptions::default()),
            Err(Error::ZeroSignal(_))
        ));
    }

    #[test]
    fn single_vector_sets_rejected() {
        let a = EmbeddingVector::new(e(0, 3)).unwrap();
        assert!(matches!(
            ClassSets::new(vec![a.clone()], vec![a.clone(), a]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn invert_is_involution() {
        let sets = ClassSets::new(
            vec![EmbeddingVector::new(e(0, 3)).unwrap(); 2],
            vec![
                EmbeddingVector::unit(vec![1.0, 1.0, 0.0]).unwrap(),
                EmbeddingVector::unit(vec![1.0, 0.5, 0.2]).unwrap(),
            ],
        )
        .unwrap();
        let d = snr_direction(&sets, &SnrOptions::default()).unwrap();
        let inv = invert_direction(&d);
        assert!(inv.provenance.inverted);
        assert!((inv.v_c.cosine(&d.v_c).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(invert_direction(&inv), d);
    }

    #[test]
    fn top_channel_mask_and_pooled() {
        let sets = ClassSets::new(
            vec![
                EmbeddingVector::unit(vec![1.0, 0.0, 0.0, 0.1]).unwrap(),
                EmbeddingVector::unit(vec![1.0, 0.1, 0.0, 0.0]).unwrap(),
            ],
            vec![
                EmbeddingVector::unit(vec![0.5, 1.0, 0.3, 0.0]).unwrap(),
                EmbeddingVector::unit(vec![0.5, 1.0, 0.2, 0.1]).unwrap(),
            ],
        )
        .unwrap();
        let opts = SnrOptions {
            top_channels: Some(2),
            ..SnrOptions::default()
        };
        let snr = channel_snr(&sets, &opts).unwrap();
        assert_eq!(snr.iter().filter(|x| **x != 0.0).count(), 2);
        let pooled = SnrOptions {
            noise: NoiseModel::Pooled,
            ..SnrOptions::default()
        };
        let d = snr_direction(&sets, &pooled).unwrap();
        assert!(d.v_c.is_unit());
        assert!(channel_snr(&sets, &SnrOptions::with_epsilon(0.0)).is_err());
    }

    #[test]
    fn json_roundtrip_validates() {
        let sets = ClassSets::new(
            vec![EmbeddingVector::new(e(0, 3)).unwrap(); 2],
            vec![EmbeddingVector::new(e(1, 3)).unwrap(); 2],
        )
        .unwrap();
        let d = snr_direction(&sets, &SnrOptions::default()).unwrap();
        assert_eq!(DirectionVector::from_json(&d.to_json()).unwrap(), d);
        let bad = d.to_json().replacen("\"v_c\": [", "\"v_c\": [3.0, ", 1);
        assert!(DirectionVector::from_json(&bad).is_err());
    }
}
