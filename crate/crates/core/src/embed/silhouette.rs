use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette `(b − a) / max(a, b)` under Euclidean distance. Points in
/// singleton clusters score 0, as does any point with `a = b = 0`.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let n = points.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} points", labels.len())));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("silhouette needs at least 3 points, got {n}")));
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    labels.iter().for_each(|&l| *sizes.entry(l).or_default() += 1);
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least 2 classes".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        if sizes[&labels[i]] == 1 {
            continue;
        }
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for j in (0..n).filter(|&j| j != i) {
            *sums.entry(labels[j]).or_default() += dist(&points[i], &points[j]);
        }
        let a = sums[&labels[i]] / (sizes[&labels[i]] - 1) as f64;
        let b = sums
            .iter()
            .filter(|(&l, _)| l != labels[i])
            .map(|(l, s)| s / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
