//! RELIEF-F feature weighting for multi-class data.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliefRanking {
    /// Feature indices, most discriminative first.
    pub order: Vec<usize>,
    /// Weight per feature index.
    pub weights: Vec<f64>,
}

impl ReliefRanking {
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut sel: Vec<usize> = self.order.iter().take(k).copied().collect();
        sel.sort_unstable();
        sel
    }
}

/// Ranks features by how well they separate near neighbours of different
/// classes. Columns are standardised before distances are taken; neighbour
/// distance is Manhattan and per-feature differences are normalised by the
/// standardised range.
///
/// When `n_probes >= data.len()` every row is used as a probe, otherwise
/// `n_probes` distinct rows are drawn from `rng`.
pub fn relief_f_rank<R: Rng + ?Sized>(
    data: &[Vec<f64>],
    labels: &[String],
    k_neighbors: usize,
    n_probes: usize,
    rng: &mut R,
) -> Result<ReliefRanking> {
    if data.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            data.len(),
            labels.len()
        )));
    }
    if k_neighbors == 0 || n_probes == 0 {
        return Err(Error::InvalidInput("k_neighbors and n_probes must be positive".into()));
    }
    let n = data.len();
    let d = data.first().map_or(0, Vec::len);
    if let Some(row) = data.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: row.len(),
        });
    }

    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.as_str()).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::InsufficientData(
            "RELIEF-F needs at least two classes".into(),
        ));
    }

    // standardise columns
    let mut z = vec![vec![0.0; d]; n];
    let mut range = vec![0.0; d];
    for f in 0..d {
        let col: Vec<f64> = data.iter().map(|r| r[f]).collect();
        let m = crate::stats::mean(&col);
        let s = crate::stats::std_dev(&col);
        let s = if s > 0.0 { s } else { 1.0 };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, &v) in col.iter().enumerate() {
            let zv = (v - m) / s;
            z[i][f] = zv;
            lo = lo.min(zv);
            hi = hi.max(zv);
        }
        range[f] = hi - lo;
    }

    let probes: Vec<usize> = if n_probes >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, n_probes).into_vec()
    };
    let m = probes.len() as f64;
    let prior: BTreeMap<&str, f64> = classes
        .iter()
        .map(|(&c, idx)| (c, idx.len() as f64 / n as f64))
        .collect();

    let diff = |f: usize, a: usize, b: usize| -> f64 {
        if range[f] > 0.0 {
            (z[a][f] - z[b][f]).abs() / range[f]
        } else {
            0.0
        }
    };
    let dist = |a: usize, b: usize| -> f64 { (0..d).map(|f| (z[a][f] - z[b][f]).abs()).sum() };
    let nearest = |probe: usize, pool: &[usize], k: usize| -> Vec<usize> {
        let mut cand: Vec<(f64, usize)> = pool
            .iter()
            .filter(|&&j| j != probe)
            .map(|&j| (dist(probe, j), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.into_iter().take(k).map(|(_, j)| j).collect()
    };

    let mut weights = vec![0.0; d];
    for &r in &probes {
        let own = labels[r].as_str();
        let hits = nearest(r, &classes[own], k_neighbors);
        if !hits.is_empty() {
            let scale = m * hits.len() as f64;
            for &h in &hits {
                for (f, w) in weights.iter_mut().enumerate() {
                    *w -= diff(f, r, h) / scale;
                }
            }
        }
        for (&c, pool) in &classes {
            if c == own {
                continue;
            }
            let misses = nearest(r, pool, k_neighbors);
            if misses.is_empty() {
                continue;
            }
            let factor = prior[c] / (1.0 - prior[own]);
            let scale = m * misses.len() as f64;
            for &mi in &misses {
                for (f, w) in weights.iter_mut().enumerate() {
                    *w += factor * diff(f, r, mi) / scale;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    Ok(ReliefRanking { order, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_class_rejected() {
        let data = vec![vec![1.0], vec![2.0]];
        let labels = vec!["a".to_string(), "a".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            relief_f_rank(&data, &labels, 1, 10, &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn duplicate_columns_share_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = rng.random::<f64>() + if i % 2 == 0 { 1.0 } else { 0.0 };
                vec![x, rng.random(), x]
            })
            .collect();
        let labels: Vec<String> = (0..40).map(|i| (i % 2).to_string()).collect();
        let r = relief_f_rank(&data, &labels, 3, 100, &mut rng).unwrap();
        assert!((r.weights[0] - r.weights[2]).abs() < 1e-9);
        let mut sorted = r.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }
}
