use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::EmbeddingVector;

/// Two-component PCA fitted on `points`; `path` is projected with the same
/// mean and axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    pub path: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

pub fn project_2d(
    vectors: &[EmbeddingVector],
    path_positions: Option<&[EmbeddingVector]>,
) -> Result<Projection> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to project".into()))?;
    let dim = first.dim();
    for v in vectors.iter().chain(path_positions.unwrap_or(&[])) {
        if v.dim() != dim {
            return Err(Error::dim(dim, v.dim()));
        }
    }

    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v.as_slice()) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let centered = |v: &EmbeddingVector| -> Vec<f64> {
        v.as_slice()
            .iter()
            .zip(&mean)
            .map(|(&x, m)| x as f64 - m)
            .collect()
    };
    let rows: Vec<Vec<f64>> = vectors.iter().map(centered).collect();

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for r in &rows {
        for i in 0..dim {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += r[i] * r[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let c = cov[(i, j)] / n;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axis = |k: usize| -> (Vec<f64>, f64) {
        let Some(&col) = order.get(k) else {
            return (vec![0.0; dim], 0.0);
        };
        let mut c: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        // sign convention: the largest-magnitude loading is positive
        let pivot = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        (c, eig.eigenvalues[col].max(0.0))
    };
    let (pc1, var1) = axis(0);
    let (pc2, var2) = axis(1);

    let project = |r: &[f64]| -> [f64; 2] {
        let dot = |c: &[f64]| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        [dot(&pc1), dot(&pc2)]
    };
    let points = rows.iter().map(|r| project(r)).collect();
    let path = path_positions
        .unwrap_or(&[])
        .iter()
        .map(|v| project(&centered(v)))
        .collect();

    Ok(Projection {
        points,
        path,
        components: [pc1, pc2],
        explained_variance: [var1, var2],
    })
}
