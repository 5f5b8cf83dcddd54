#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use gradrec::catalog::{Catalog, ProductRecord, PromptBank};
use gradrec::synth::{generate_synthetic, prompt_name, SyntheticCatalog, SyntheticSpec};
use gradrec::{EmbeddingVector, KnnIndex};

pub const ATTR: &str = "attr0";

pub fn prompt(alpha: f64) -> String {
    prompt_name(ATTR, alpha)
}

pub struct Setup {
    pub synth: SyntheticCatalog,
    pub index: KnnIndex,
}

impl Setup {
    pub fn new(n_products: usize, seed: u64) -> Self {
        let synth = generate_synthetic(&SyntheticSpec::standard(n_products, seed)).unwrap();
        let index = KnnIndex::new(synth.catalog.clone());
        Self { synth, index }
    }

    pub fn bank(&self) -> &PromptBank {
        &self.synth.prompts
    }

    pub fn alpha(&self) -> BTreeMap<String, f64> {
        self.synth.oracle.alpha_map(ATTR)
    }

    pub fn planted(&self) -> Vec<f64> {
        self.synth.oracle.direction(ATTR).unwrap().to_vec()
    }

    /// Top product retrieved for the prompt of level `alpha`.
    pub fn top_for(&self, alpha: f64) -> String {
        self.index
            .retrieve_by_prompt(self.bank(), &prompt(alpha), 1)
            .unwrap()[0]
            .product_id
            .clone()
    }
}

/// Five unit vectors in R^4 with a two-prompt bank.
pub fn toy() -> (Catalog, PromptBank) {
    let raw: [[f32; 4]; 5] = [
        [1.0, 0.0, 0.0, 0.0],
        [0.8, 0.6, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.6, 0.8, 0.0],
        [0.0, 0.0, 0.6, 0.8],
    ];
    let products = raw
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut p =
                ProductRecord::new(format!("t{i}"), EmbeddingVector::unit(v.to_vec()).unwrap());
            p.display_ref = Some(format!("img/t{i}.png"));
            p
        })
        .collect();
    let mut bank = PromptBank::new();
    bank.insert(
        "left",
        EmbeddingVector::unit(vec![1.0, 0.2, 0.0, 0.0]).unwrap(),
    )
    .unwrap();
    bank.insert(
        "mid",
        EmbeddingVector::unit(vec![0.3, 1.0, 0.1, 0.0]).unwrap(),
    )
    .unwrap();
    bank.insert(
        "right",
        EmbeddingVector::unit(vec![0.0, 0.1, 0.5, 0.8]).unwrap(),
    )
    .unwrap();
    (Catalog::new(4, products).unwrap(), bank)
}

// ---- independent oracles: plain loops, f64 throughout ----

pub fn cos64(a: &[f32], b: &[f32]) -> f64 {
    let mut d = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        d += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    d / (na.sqrt() * nb.sqrt())
}

pub fn cos_f64(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

/// Full-scan kNN: sort every (similarity, row) pair.
pub fn brute_knn(
    vectors: &[Vec<f32>],
    q: &[f32],
    k: usize,
    skip: &HashSet<usize>,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(i, v)| (i, cos64(v, q)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Ranks by counting, ties averaged.
fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(order: &[String], alpha: &BTreeMap<String, f64>) -> f64 {
    let pos: Vec<f64> = (0..order.len()).map(|i| i as f64).collect();
    let val: Vec<f64> = order.iter().map(|id| alpha[id]).collect();
    let (rx, ry) = (ranks(&pos), ranks(&val));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Window counts by direct enumeration of every window.
pub fn window_counts(traj: &[String], members: &[String], window: usize) -> Vec<usize> {
    let set: HashSet<&String> = members.iter().collect();
    if traj.len() < window {
        return Vec::new();
    }
    (0..=traj.len() - window)
        .map(|t| {
            traj[t..t + window]
                .iter()
                .filter(|id| set.contains(id))
                .count()
        })
        .collect()
}

/// Peak order check by enumeration: first argmax of each curve must be
/// strictly increasing in the order given, and each peak ≥ min_peak.
pub fn peaks_in_order(curves: &[Vec<usize>], min_peak: usize) -> bool {
    let mut last: Option<usize> = None;
    for c in curves {
        let Some(&max) = c.iter().max() else {
            return false;
        };
        if max < min_peak {
            return false;
        }
        let at = c.iter().position(|&x| x == max).unwrap();
        if let Some(l) = last {
            if at <= l {
                return false;
            }
        }
        last = Some(at);
    }
    true
}

/// Compares `actual` to `tests/golden/<name>`; with GRADREC_BLESS=1 the file
/// is rewritten instead.
pub fn golden(name: &str, actual: &str) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("GRADREC_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "golden {name}");
}

/// Writes the toy catalog and prompt bank under `dir` as bundle `toy`.
pub fn write_toy(dir: &std::path::Path) -> std::path::PathBuf {
    let (catalog, bank) = toy();
    let base = dir.join("toy");
    gradrec::save_catalog(&catalog, &base).unwrap();
    gradrec::catalog::save_prompt_bank(&bank, dir.join("toy.grprompt.jsonl")).unwrap();
    base
}
