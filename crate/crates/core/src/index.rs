//! Exact cosine k-nearest-neighbour search.
//!
//! Results are sorted by similarity descending, ties broken by ascending
//! catalog row, so every query has exactly one correct answer.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, PromptBank};
use crate::error::{Error, Result};
use crate::vector::{norm, norm_f64, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub product_id: String,
    pub similarity: f64,
    #[serde(skip)]
    pub row: usize,
}

/// Ranking order: higher similarity first, then lower row.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

#[derive(Debug)]
pub struct KnnIndex {
    catalog: Arc<Catalog>,
    matrix: Vec<f32>,
    inv_norms: Vec<f64>,
    rows: HashMap<String, usize>,
}

impl KnnIndex {
    pub fn new(catalog: impl Into<Arc<Catalog>>) -> Self {
        let catalog = catalog.into();
        let dim = catalog.dim();
        let mut matrix = Vec::with_capacity(catalog.len() * dim);
        let mut inv_norms = Vec::with_capacity(catalog.len());
        let mut rows = HashMap::with_capacity(catalog.len());
        for (i, p) in catalog.products().iter().enumerate() {
            let v = p.image_vec.as_slice();
            matrix.extend_from_slice(v);
            let n = norm(v);
            inv_norms.push(if n > 0.0 { 1.0 / n } else { 0.0 });
            rows.insert(p.id.clone(), i);
        }
        Self {
            catalog,
            matrix,
            inv_norms,
            rows,
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn dim(&self) -> usize {
        self.catalog.dim()
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows.get(id).copied()
    }

    pub fn id_of(&self, row: usize) -> &str {
        &self.catalog.products()[row].id
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        let d = self.dim();
        &self.matrix[row * d..(row + 1) * d]
    }

    fn check_query(&self, query: &[f32]) -> Result<f64> {
        if self.catalog.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        if query.len() != self.dim() {
            return Err(Error::dim(self.dim(), query.len()));
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector("query".into()));
        }
        Ok(norm(query))
    }

    /// Cosine similarity of `query` against every row.
    pub fn similarities(&self, query: &[f32]) -> Result<Vec<f64>> {
        let qn = self.check_query(query)?;
        let inv_q = if qn > 0.0 { 1.0 / qn } else { 0.0 };
        Ok(self
            .matrix
            .chunks_exact(self.dim())
            .zip(&self.inv_norms)
            .map(|(row, inv)| {
                let d: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                (d * inv * inv_q).clamp(-1.0, 1.0)
            })
            .collect())
    }

    /// Top `k` rows by cosine similarity, skipping rows for which `skip`
    /// returns true.
    pub fn top_rows(
        &self,
        query: &[f32],
        k: usize,
        skip: impl Fn(usize) -> bool,
    ) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let sims = self.similarities(query)?;
        let mut cand: Vec<(usize, f64)> = sims
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !skip(*i))
            .collect();
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, rank);
            cand.truncate(k);
        }
        cand.sort_unstable_by(rank);
        Ok(cand)
    }

    fn neighbors(&self, rows: Vec<(usize, f64)>) -> Vec<Neighbor> {
        rows.into_iter()
            .map(|(row, similarity)| Neighbor {
                product_id: self.id_of(row).to_string(),
                similarity,
                row,
            })
            .collect()
    }

    /// The `min(k, remaining)` products not in `exclude` most similar to
    /// `query`.
    pub fn knn(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<Neighbor>> {
        let excluded: HashSet<usize> = exclude.iter().filter_map(|id| self.row_of(id)).collect();
        let rows = self.top_rows(query.as_slice(), k, |r| excluded.contains(&r))?;
        Ok(self.neighbors(rows))
    }

    /// Mean of the `k` nearest image vectors, unnormalized, in f64.
    pub fn knn_mean_raw(&self, point: &[f32], k: usize) -> Result<Vec<f64>> {
        let rows = self.top_rows(point, k, |_| false)?;
        let mut mean = vec![0.0f64; self.dim()];
        for (r, _) in &rows {
            for (m, &x) in mean.iter_mut().zip(self.vector(*r)) {
                *m += x as f64;
            }
        }
        let count = rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        let n = norm_f64(&mean);
        if n < 1e-8 {
            return Err(Error::DegenerateMean(n));
        }
        Ok(mean)
    }

    /// Mean of the `k` nearest image vectors scaled to unit length. No
    /// exclusions apply here.
    pub fn knn_mean(&self, point: &EmbeddingVector, k: usize) -> Result<EmbeddingVector> {
        let mean = self.knn_mean_raw(point.as_slice(), k)?;
        let n = norm_f64(&mean);
        let unit: Vec<f64> = mean.iter().map(|x| x / n).collect();
        Ok(EmbeddingVector::from_f64(&unit))
    }

    /// Zero-shot retrieval: the `n` products nearest to the prompt's encoding.
    pub fn retrieve_by_prompt(
        &self,
        bank: &PromptBank,
        prompt: &str,
        n: usize,
    ) -> Result<Vec<Neighbor>> {
        let q = bank.get(prompt)?;
        self.knn(q, n, &HashSet::new())
    }

    /// Mean cosine distance from `point` to every catalog vector.
    pub fn mean_cosine_distance(&self, point: &[f32]) -> Result<f64> {
        let sims = self.similarities(point)?;
        let total: f64 = sims.iter().map(|s| (1.0 - s).clamp(0.0, 2.0)).sum();
        Ok(total / sims.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ProductRecord;

    fn index(vectors: &[[f32; 3]]) -> KnnIndex {
        let products = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                ProductRecord::new(format!("p{i}"), EmbeddingVector::unit(v.to_vec()).unwrap())
            })
            .collect();
        KnnIndex::new(Catalog::new(3, products).unwrap())
    }

    fn ids(n: &[Neighbor]) -> Vec<&str> {
        n.iter().map(|x| x.product_id.as_str()).collect()
    }

    #[test]
    fn self_match() {
        let idx = index(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.8, 0.0]]);
        let q = idx.catalog().products()[2].image_vec.clone();
        let r = idx.knn(&q, 1, &HashSet::new()).unwrap();
        assert_eq!(ids(&r), ["p2"]);
        assert!((r[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_break_by_row() {
        let idx = index(&[
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ]);
        let q = EmbeddingVector::unit(vec![1.0, 0.0, 0.0]).unwrap();
        let r = idx.knn(&q, 4, &HashSet::new()).unwrap();
        assert_eq!(ids(&r), ["p1", "p2", "p0", "p3"]);
    }

    #[test]
    fn k_larger_than_catalog_returns_all() {
        let idx = index(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let q = EmbeddingVector::unit(vec![0.1, 0.5, 0.9]).unwrap();
        let r = idx.knn(&q, 10, &HashSet::new()).unwrap();
        assert_eq!(ids(&r), ["p2", "p1", "p0"]);
    }

    #[test]
    fn exclusions_and_bad_input() {
        let idx = index(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let q = EmbeddingVector::unit(vec![1.0, 0.1, 0.0]).unwrap();
        let ex: HashSet<String> = ["p0".to_string(), "nope".to_string()].into();
        let r = idx.knn(&q, 3, &ex).unwrap();
        assert_eq!(r.len(), 2);
        assert!(!ids(&r).contains(&"p0"));
        let all: HashSet<String> = ["p0", "p1", "p2"].iter().map(|s| s.to_string()).collect();
        assert!(idx.knn(&q, 3, &all).unwrap().is_empty());
        assert!(matches!(
            idx.knn(&q, 0, &HashSet::new()),
            Err(Error::InvalidArgument(_))
        ));
        let wrong = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            idx.knn(&wrong, 1, &HashSet::new()),
            Err(Error::DimMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn knn_mean_k1_is_nearest() {
        let idx = index(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.8, 0.0]]);
        let q = EmbeddingVector::unit(vec![0.5, 0.9, 0.0]).unwrap();
        let m = idx.knn_mean(&q, 1).unwrap();
        assert_eq!(m.as_slice(), idx.vector(2));
    }

    #[test]
    fn antipodal_mean_is_degenerate() {
        let idx = index(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let q = EmbeddingVector::unit(vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(idx.knn_mean(&q, 2), Err(Error::DegenerateMean(_))));
    }

    #[test]
    fn retrieve_unknown_prompt() {
        let idx = index(&[[1.0, 0.0, 0.0]]);
        let bank = PromptBank::new();
        assert!(matches!(
            idx.retrieve_by_prompt(&bank, "shorts", 1),
            Err(Error::UnknownPrompt(_))
        ));
    }

    #[test]
    fn drift_zero_when_all_equal() {
        let idx = index(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(idx.mean_cosine_distance(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
    }
}
