//! Synthetic catalogs with planted attribute directions.
//!
//! Every product is `normalize(style + Σ_a α_a·d_a + ε)` where `style` is a
//! shared centroid of norm `style_scale`, the `d_a` are random orthonormal
//! directions (also orthogonal to the centroid), `α_a` takes one of
//! `intensity_levels` evenly spaced values in [-1, 1], and `ε` is isotropic
//! Gaussian noise with per-channel standard deviation `noise_sigma`. Levels
//! are balanced: each level gets `n_products / intensity_levels` products,
//! shuffled.
//!
//! The prompt for `(attribute, level)` encodes `normalize(style + α·d_a)`,
//! which stands in for a text encoder's output.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::catalog::{
    save_catalog, save_prompt_bank, with_ext, Catalog, ProductRecord, PromptBank, ORACLE_EXT,
    PROMPT_EXT,
};
use crate::error::{Error, Result};
use crate::vector::{norm_f64, EmbeddingVector};

pub const DEFAULT_STYLE_SCALE: f64 = 2.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n_products: usize,
    pub n_attributes: usize,
    pub intensity_levels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_style_scale")]
    pub style_scale: f64,
}

fn default_style_scale() -> f64 {
    DEFAULT_STYLE_SCALE
}

impl SyntheticSpec {
    /// 64-d, one attribute with three levels, σ = 0.05.
    pub fn standard(n_products: usize, seed: u64) -> Self {
        Self {
            dim: 64,
            n_products,
            n_attributes: 1,
            intensity_levels: 3,
            noise_sigma: 0.05,
            seed,
            style_scale: DEFAULT_STYLE_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.n_products == 0 {
            return bad("n_products must be positive");
        }
        if self.n_attributes == 0 {
            return bad("n_attributes must be at least 1");
        }
        if self.n_attributes >= self.dim {
            return bad("n_attributes must be smaller than dim");
        }
        if self.intensity_levels < 3 {
            return bad("intensity_levels must be at least 3");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(self.style_scale.is_finite() && self.style_scale > 0.0) {
            return bad("style_scale must be finite and positive");
        }
        Ok(())
    }

    /// Evenly spaced intensity values, lowest first.
    pub fn levels(&self) -> Vec<f64> {
        level_values(self.intensity_levels)
    }
}

pub fn level_values(n: usize) -> Vec<f64> {
    (0..n)
        .map(|l| -1.0 + 2.0 * l as f64 / (n - 1) as f64)
        .collect()
}

pub fn attribute_name(a: usize) -> String {
    format!("attr{a}")
}

/// Prompt string for one `(attribute, level)` pair, e.g. `attr0@-1.00`.
pub fn prompt_name(attribute: &str, alpha: f64) -> String {
    format!("{attribute}@{alpha:+.2}")
}

/// Ground truth the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub spec: SyntheticSpec,
    pub levels: Vec<f64>,
    pub attributes: Vec<String>,
    pub style_centroid: Vec<f64>,
    /// One unit vector per attribute, same order as `attributes`.
    pub directions: Vec<Vec<f64>>,
    /// product id → attribute → planted α
    pub alphas: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Oracle {
    pub fn alpha(&self, product_id: &str, attribute: &str) -> Option<f64> {
        self.alphas.get(product_id)?.get(attribute).copied()
    }

    /// product id → α for a single attribute.
    pub fn alpha_map(&self, attribute: &str) -> BTreeMap<String, f64> {
        self.alphas
            .iter()
            .filter_map(|(id, m)| m.get(attribute).map(|&a| (id.clone(), a)))
            .collect()
    }

    pub fn direction(&self, attribute: &str) -> Option<&[f64]> {
        let i = self.attributes.iter().position(|a| a == attribute)?;
        Some(&self.directions[i])
    }

    /// Prompts for an attribute, lowest level first.
    pub fn prompts(&self, attribute: &str) -> Vec<String> {
        self.levels
            .iter()
            .map(|&a| prompt_name(attribute, a))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCatalog {
    pub catalog: Catalog,
    pub prompts: PromptBank,
    pub oracle: Oracle,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCatalog> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    let basis = random_orthonormal(&mut rng, dim, spec.n_attributes + 1);
    let style: Vec<f64> = basis[0].iter().map(|x| x * spec.style_scale).collect();
    let directions = basis[1..].to_vec();
    let levels = spec.levels();
    let attributes: Vec<String> = (0..spec.n_attributes).map(attribute_name).collect();

    // assignment[a][i] = level index of product i for attribute a
    let assignment: Vec<Vec<usize>> = (0..spec.n_attributes)
        .map(|_| {
            let mut lv: Vec<usize> = (0..spec.n_products)
                .map(|i| i * spec.intensity_levels / spec.n_products)
                .collect();
            lv.shuffle(&mut rng);
            lv
        })
        .collect();

    let width = (spec.n_products.saturating_sub(1)).to_string().len().max(4);
    let mut products = Vec::with_capacity(spec.n_products);
    let mut alphas = BTreeMap::new();
    for i in 0..spec.n_products {
        let mut x = style.clone();
        let mut planted = BTreeMap::new();
        let mut attrs = BTreeMap::new();
        for (a, name) in attributes.iter().enumerate() {
            let alpha = levels[assignment[a][i]];
            for (xj, dj) in x.iter_mut().zip(&directions[a]) {
                *xj += alpha * dj;
            }
            planted.insert(name.clone(), alpha);
            attrs.insert(name.clone(), format!("{alpha:+.2}"));
        }
        for xj in x.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *xj += spec.noise_sigma * e;
        }
        let id = format!("p{i:0width$}");
        let vec = unit_f32(&x)?;
        let mut record = ProductRecord::new(id.clone(), vec);
        record.attributes = attrs;
        products.push(record);
        alphas.insert(id, planted);
    }
    let catalog = Catalog::new(dim, products)?;

    let mut prompts = PromptBank::new();
    for (a, name) in attributes.iter().enumerate() {
        for &alpha in &levels {
            let p: Vec<f64> = style
                .iter()
                .zip(&directions[a])
                .map(|(s, d)| s + alpha * d)
                .collect();
            prompts.insert(prompt_name(name, alpha), unit_f32(&p)?)?;
        }
    }

    Ok(SyntheticCatalog {
        catalog,
        prompts,
        oracle: Oracle {
            spec: spec.clone(),
            levels,
            attributes,
            style_centroid: basis[0].clone(),
            directions,
            alphas,
        },
    })
}

fn unit_f32(x: &[f64]) -> Result<EmbeddingVector> {
    let n = norm_f64(x);
    if n < 1e-12 {
        return Err(Error::InvalidSpec("generated a zero vector".into()));
    }
    let v: Vec<f64> = x.iter().map(|v| v / n).collect();
    Ok(EmbeddingVector::from_f64(&v))
}

/// `count` orthonormal vectors from Gaussian draws (Gram-Schmidt, applied
/// twice for numerical orthogonality).
fn random_orthonormal(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let n = norm_f64(&v);
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Writes `<base>.grvec`, `<base>.grmeta.jsonl`, `<base>.grprompt.jsonl` and
/// `<base>.oracle.json`.
pub fn write_synthetic(synth: &SyntheticCatalog, base: impl AsRef<Path>) -> Result<()> {
    let base = base.as_ref();
    save_catalog(&synth.catalog, base)?;
    save_prompt_bank(&synth.prompts, with_ext(base, PROMPT_EXT))?;
    let oracle_path = with_ext(base, ORACLE_EXT);
    let json = serde_json::to_string_pretty(&synth.oracle).expect("oracle serializes");
    std::fs::write(&oracle_path, json + "\n").map_err(|e| Error::io(&oracle_path, e))
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<Oracle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedMetadata(format!("oracle: {e}")))
}
