//! Iterated traversal of the embedding space.
//!
//! One move is
//!
//! ```text
//! v' = v + (1 − ρ)·λ·v̂_c + ρ·knn_mean(v, k_reg)
//! ```
//!
//! optionally rescaled to unit length. After each move the `k_rec` nearest
//! products not yet shown are logged as recommendations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::direction::{DirectionProvenance, DirectionVector};
use crate::error::{Error, Result};
use crate::index::{KnnIndex, Neighbor};
use crate::vector::{norm, norm_f64, EmbeddingVector};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_RHO: f64 = 0.3;
pub const DEFAULT_K_REG: usize = 10;
pub const DEFAULT_K_REC: usize = 10;
pub const DEFAULT_MAX_STEPS: usize = 40;
pub const DEFAULT_STALE_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversalConfig {
    pub lambda: f64,
    pub rho: f64,
    pub k_reg: usize,
    pub k_rec: usize,
    pub max_steps: usize,
    pub renormalize: bool,
    pub stop_stale_steps: usize,
    /// Scale the neighbour mean to unit length before mixing it in.
    pub normalize_regularizer: bool,
    /// Replace each new position by its nearest catalog vector.
    pub snap_to_product: bool,
    /// Products less similar than this to the position are not recommended.
    pub min_similarity: Option<f64>,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            rho: DEFAULT_RHO,
            k_reg: DEFAULT_K_REG,
            k_rec: DEFAULT_K_REC,
            max_steps: DEFAULT_MAX_STEPS,
            renormalize: true,
            stop_stale_steps: DEFAULT_STALE_STEPS,
            normalize_regularizer: true,
            snap_to_product: false,
            min_similarity: None,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0, 1), got {}", self.rho));
        }
        if self.k_reg == 0 || self.k_rec == 0 {
            return bad("k_reg and k_rec must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.stop_stale_steps == 0 {
            return bad("stop_stale_steps must be at least 1".into());
        }
        if let Some(s) = self.min_similarity {
            if !(-1.0..=1.0).contains(&s) {
                return bad(format!("min_similarity must be in [-1, 1], got {s}"));
            }
        }
        Ok(())
    }
}

/// One application of the update rule.
pub fn step(
    v_t: &EmbeddingVector,
    v_c: &EmbeddingVector,
    index: &KnnIndex,
    cfg: &TraversalConfig,
) -> Result<EmbeddingVector> {
    cfg.validate()?;
    let dim = index.dim();
    if v_t.dim() != dim {
        return Err(Error::dim(dim, v_t.dim()));
    }
    if v_c.dim() != dim {
        return Err(Error::dim(dim, v_c.dim()));
    }
    let vc_norm = norm(v_c.as_slice());
    if vc_norm < 1e-12 {
        return Err(Error::InvalidArgument(
            "direction is the zero vector".into(),
        ));
    }

    let dir_coef = (1.0 - cfg.rho) * cfg.lambda;
    let mut next: Vec<f64> = v_t
        .as_slice()
        .iter()
        .zip(v_c.as_slice())
        .map(|(&v, &c)| v as f64 + dir_coef * (c as f64 / vc_norm))
        .collect();
    if cfg.rho > 0.0 {
        let mut mean = index.knn_mean_raw(v_t.as_slice(), cfg.k_reg)?;
        if cfg.normalize_regularizer {
            let n = norm_f64(&mean);
            mean.iter_mut().for_each(|x| *x /= n);
        }
        for (x, m) in next.iter_mut().zip(&mean) {
            *x += cfg.rho * m;
        }
    }

    let n = norm_f64(&next);
    if n.is_nan() || n < 1e-8 {
        return Err(Error::DegenerateStep(n));
    }
    if cfg.renormalize {
        next.iter_mut().for_each(|x| *x /= n);
    }
    let out = EmbeddingVector::from_f64(&next);
    if cfg.snap_to_product {
        let nearest = index.top_rows(out.as_slice(), 1, |_| false)?;
        return EmbeddingVector::new(index.vector(nearest[0].0).to_vec());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalStep {
    pub position: EmbeddingVector,
    pub recommendations: Vec<Neighbor>,
    /// Mean cosine distance from `position` to the whole catalog.
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxSteps,
    Stale,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalPath {
    pub seed_id: String,
    pub direction: DirectionProvenance,
    pub config: TraversalConfig,
    pub steps: Vec<TraversalStep>,
    pub stop_reason: StopReason,
}

/// Move once from `position`, then recommend up to `k_rec` products for
/// which `skip` is false.
pub(crate) fn advance_rows(
    position: &EmbeddingVector,
    v_c: &EmbeddingVector,
    index: &KnnIndex,
    cfg: &TraversalConfig,
    skip: impl Fn(usize) -> bool,
) -> Result<TraversalStep> {
    let next = step(position, v_c, index, cfg)?;
    let mut rows = index.top_rows(next.as_slice(), cfg.k_rec, skip)?;
    if let Some(floor) = cfg.min_similarity {
        rows.retain(|(_, s)| *s >= floor);
    }
    let recommendations = rows
        .into_iter()
        .map(|(row, similarity)| Neighbor {
            product_id: index.id_of(row).to_string(),
            similarity,
            row,
        })
        .collect();
    let drift = index.mean_cosine_distance(next.as_slice())?;
    Ok(TraversalStep {
        position: next,
        recommendations,
        drift,
    })
}

/// Result of one stateless move: the step plus whether nothing is left to
/// recommend.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: TraversalStep,
    pub exhausted: bool,
}

/// One move with a caller-held exclusion set. Replaying these from the seed,
/// adding each step's recommendations to `exclude`, reproduces [`traverse`].
pub fn advance(
    position: &EmbeddingVector,
    v_c: &EmbeddingVector,
    index: &KnnIndex,
    cfg: &TraversalConfig,
    exclude: &HashSet<String>,
) -> Result<StepOutcome> {
    let excluded: HashSet<usize> = exclude.iter().filter_map(|id| index.row_of(id)).collect();
    let step = advance_rows(position, v_c, index, cfg, |r| excluded.contains(&r))?;
    let exhausted = excluded.len() + step.recommendations.len() == index.len();
    Ok(StepOutcome { step, exhausted })
}

pub fn traverse(
    seed_id: &str,
    direction: &DirectionVector,
    index: &KnnIndex,
    cfg: &TraversalConfig,
) -> Result<TraversalPath> {
    cfg.validate()?;
    let seed = index
        .row_of(seed_id)
        .ok_or_else(|| Error::UnknownSeed(seed_id.to_string()))?;
    if direction.dim() != index.dim() {
        return Err(Error::dim(index.dim(), direction.dim()));
    }
    let mut seen = vec![false; index.len()];
    seen[seed] = true;
    let mut seen_count = 1;
    let mut position = EmbeddingVector::new(index.vector(seed).to_vec())?;
    let mut steps = Vec::new();
    let mut stale = 0;

    let stop_reason = loop {
        if seen_count == index.len() {
            break StopReason::Exhausted;
        }
        let st = advance_rows(&position, &direction.v_c, index, cfg, |r| seen[r])?;
        for n in &st.recommendations {
            seen[n.row] = true;
        }
        seen_count += st.recommendations.len();
        stale = if st.recommendations.is_empty() {
            stale + 1
        } else {
            0
        };
        position = st.position.clone();
        steps.push(st);

        if seen_count == index.len() {
            break StopReason::Exhausted;
        }
        if stale >= cfg.stop_stale_steps {
            break StopReason::Stale;
        }
        if steps.len() >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
    };

    Ok(TraversalPath {
        seed_id: seed_id.to_string(),
        direction: direction.provenance.clone(),
        config: *cfg,
        steps,
        stop_reason,
    })
}

pub fn drift_series(path: &TraversalPath) -> Vec<f64> {
    path.steps.iter().map(|s| s.drift).collect()
}

#[derive(Serialize)]
struct StepJson<'a> {
    step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    position: Option<&'a EmbeddingVector>,
    recommendations: &'a [Neighbor],
    drift: f64,
}

#[derive(Serialize)]
struct PathJson<'a> {
    seed_id: &'a str,
    direction: &'a DirectionProvenance,
    config: &'a TraversalConfig,
    stop_reason: StopReason,
    steps: Vec<StepJson<'a>>,
}

impl TraversalPath {
    /// Every recommended id, in step order then rank order.
    pub fn discovered(&self) -> Vec<String> {
        self.steps
            .iter()
            .flat_map(|s| s.recommendations.iter().map(|n| n.product_id.clone()))
            .collect()
    }

    pub fn to_json_value(&self, include_positions: bool) -> serde_json::Value {
        let view = PathJson {
            seed_id: &self.seed_id,
            direction: &self.direction,
            config: &self.config,
            stop_reason: self.stop_reason,
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| StepJson {
                    step: i,
                    position: include_positions.then_some(&s.position),
                    recommendations: &s.recommendations,
                    drift: s.drift,
                })
                .collect(),
        };
        serde_json::to_value(view).expect("path serializes")
    }

    pub fn to_json(&self, include_positions: bool) -> String {
        serde_json::to_string_pretty(&self.to_json_value(include_positions))
            .expect("path serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, ProductRecord};

    fn axis_index() -> KnnIndex {
        let products = (0..4)
            .map(|i| {
                let mut v = vec![0.0f32; 4];
                v[i] = 1.0;
                ProductRecord::new(format!("e{i}"), EmbeddingVector::new(v).unwrap())
            })
            .collect();
        KnnIndex::new(Catalog::new(4, products).unwrap())
    }

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_rho_zero() {
        let idx = axis_index();
        let cfg = TraversalConfig {
            lambda: 0.5,
            rho: 0.0,
            renormalize: false,
            ..Default::default()
        };
        let out = step(
            &v(&[1.0, 0.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0, 0.0]),
            &idx,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.5, 0.0, 0.0]);
        let cfg = TraversalConfig {
            renormalize: true,
            ..cfg
        };
        let out = step(
            &v(&[1.0, 0.0, 0.0, 0.0]),
            &v(&[0.0, 1.0, 0.0, 0.0]),
            &idx,
            &cfg,
        )
        .unwrap();
        assert!((out.as_slice()[0] - 0.894_427_2).abs() < 1e-6);
        assert!((out.as_slice()[1] - 0.447_213_6).abs() < 1e-6);
    }

    #[test]
    fn tiny_lambda_is_identity() {
        let idx = axis_index();
        let cfg = TraversalConfig {
            lambda: 1e-12,
            rho: 0.0,
            ..Default::default()
        };
        let start = v(&[0.0, 0.0, 1.0, 0.0]);
        let out = step(&start, &v(&[0.0, 1.0, 0.0, 0.0]), &idx, &cfg).unwrap();
        for (a, b) in out.as_slice().iter().zip(start.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn config_rejects_rho_one_and_zero_steps() {
        let cfg = TraversalConfig {
            rho: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TraversalConfig {
            max_steps: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TraversalConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn opposite_direction_collapses() {
        let idx = axis_index();
        let cfg = TraversalConfig {
            lambda: 1.0,
            rho: 0.0,
            ..Default::default()
        };
        let r = step(
            &v(&[1.0, 0.0, 0.0, 0.0]),
            &v(&[-1.0, 0.0, 0.0, 0.0]),
            &idx,
            &cfg,
        );
        assert!(matches!(r, Err(Error::DegenerateStep(_))));
    }

    #[test]
    fn min_similarity_makes_traversal_stale() {
        let idx = axis_index();
        let d = DirectionVector {
            v_c: v(&[0.0, 1.0, 0.0, 0.0]),
            snr_raw: vec![0.0, 1.0, 0.0, 0.0],
            provenance: DirectionProvenance {
                class_sets: crate::direction::ClassSetProvenance {
                    neutral_prompt: None,
                    exemplar_prompt: None,
                    m: 0,
                    n: 0,
                    neutral_ids: vec![],
                    exemplar_ids: vec![],
                    overlap: 0,
                    overlap_fraction: 0.0,
                    overlap_warning: false,
                },
                options: Default::default(),
                inverted: false,
            },
        };
        // λ=1 reaches cos(e1) ≈ 0.995 on the fourth move
        let cfg = TraversalConfig {
            lambda: 1.0,
            rho: 0.0,
            k_rec: 1,
            max_steps: 50,
            stop_stale_steps: 4,
            min_similarity: Some(0.99),
            ..Default::default()
        };
        let path = traverse("e0", &d, &idx, &cfg).unwrap();
        assert_eq!(path.stop_reason, StopReason::Stale);
        // the walk reaches e1 and then nothing else passes the floor
        assert_eq!(path.discovered(), vec!["e1".to_string()]);

        let open = TraversalConfig {
            min_similarity: None,
            ..cfg
        };
        let path = traverse("e0", &d, &idx, &open).unwrap();
        assert_eq!(path.stop_reason, StopReason::Exhausted);
        assert_eq!(path.discovered().len(), 3);
        assert!(matches!(
            traverse("zz", &d, &idx, &open),
            Err(Error::UnknownSeed(_))
        ));
    }
}
