use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 5 {
            return Err(Error::InvalidArgument(format!("t-SNE needs at least 5 points, got {n}")));
        }
        if !(self.perplexity > 1.0 && self.perplexity < n as f64 / 3.0) {
            return Err(Error::InvalidArgument(format!(
                "perplexity {} must lie in (1, N/3) = (1, {:.3}) for {n} points",
                self.perplexity,
                n as f64 / 3.0
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.early_exaggeration.is_nan() || self.early_exaggeration < 1.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive and early_exaggeration >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.final_momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Bandwidth and conditional row found by [`perplexity_calibration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub probs: Vec<f64>,
    pub perplexity: f64,
    pub iterations: usize,
}

/// Perplexity `2^H` (equivalently `e^H` in nats) of the Gaussian row at
/// precision `beta = 1/(2σ²)` over squared distances shifted by their minimum.
fn row_at(shifted: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let w: Vec<f64> = shifted.iter().map(|&d| (-beta * d).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean_d: f64 = w.iter().zip(shifted).map(|(w, d)| w * d).sum::<f64>() / z;
    let h = z.ln() + beta * mean_d;
    (w.into_iter().map(|v| v / z).collect(), h.exp())
}

/// Binary search on the Gaussian bandwidth over squared distances to the
/// neighbours of one point, until the row's perplexity is within `tol` of
/// `target` or 50 iterations have run.
pub fn perplexity_calibration(sq_distances: &[f64], target: f64, tol: f64) -> Result<Calibration> {
    let k = sq_distances.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("calibration needs at least 2 neighbours, got {k}")));
    }
    if !(target >= 1.0 && target <= k as f64) {
        return Err(Error::InvalidArgument(format!("target perplexity {target} outside [1, {k}]")));
    }
    if sq_distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Numeric("distances must be finite and non-negative".into()));
    }
    if sq_distances.iter().all(|&d| d == 0.0) {
        return Err(Error::InvalidArgument("all neighbour distances are zero".into()));
    }
    let min = sq_distances.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_distances.iter().map(|d| d - min).collect();
    let spread = shifted.iter().sum::<f64>() / k as f64;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let (mut probs, mut perp) = row_at(&shifted, beta);
    let mut iterations = 0;
    while iterations < 50 && (perp - target).abs() >= tol {
        iterations += 1;
        if perp > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
        (probs, perp) = row_at(&shifted, beta);
    }
    Ok(Calibration { sigma: (0.5 / beta).sqrt(), probs, perplexity: perp, iterations })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetrized joint probabilities `P = (P_{j|i} + P_{i|j}) / 2N`, row-major
/// `N × N` with a zero diagonal.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sq_dist(&x[i], &x[j])).collect();
            perplexity_calibration(&d, perplexity, 1e-5).map(|c| c.probs)
        })
        .collect::<Result<_>>()?;
    let mut cond = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        let mut it = row.iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = *it.next().expect("row length");
        }
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(p)
}

/// Student-t affinities `(1 + |y_i − y_j|²)⁻¹` and their total.
fn affinities(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let num: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                if i == j {
                    0.0
                } else {
                    let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                    1.0 / (1.0 + dx * dx + dy * dy)
                }
            })
        })
        .collect();
    let z = num.chunks(n).map(|r| r.iter().sum::<f64>()).sum();
    (num, z)
}

/// `KL(P ‖ Q)` for the embedding `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let (num, z) = affinities(y);
    p.iter()
        .zip(&num)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / (q / z).max(1e-300)).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
}

/// Exact t-SNE. Point `i` starts at a small Gaussian draw keyed by
/// `(seed, ids[i])`, and all arithmetic runs in id order, so permuting the
/// input rows permutes the output rows and nothing else.
pub fn tsne(x: &[Vec<f64>], ids: &[String], cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.len();
    cfg.validate(n)?;
    if ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} points", ids.len())));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Shape("rows must share one width and be finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    if order.windows(2).any(|w| ids[w[0]] == ids[w[1]]) {
        return Err(Error::InvalidArgument("point ids must be distinct".into()));
    }
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let p = joint_probabilities(&xs, cfg.perplexity)?;

    let mut y: Vec<[f64; 2]> = order
        .iter()
        .map(|&i| {
            let mut rng = RngStream::keyed(cfg.seed, &ids[i]);
            [1e-4 * rng.normal(), 1e-4 * rng.normal()]
        })
        .collect();
    let kl_initial = kl_divergence(&p, &y);
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < cfg.momentum_switch { cfg.momentum } else { cfg.final_momentum };
        let (num, z) = affinities(&y);
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    let k = i * n + j;
                    let m = (exaggeration * p[k] - num[k] / z) * num[k];
                    g[0] += m * (y[i][0] - y[j][0]);
                    g[1] += m * (y[i][1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - cfg.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        for d in 0..2 {
            let mean = y.iter().map(|v| v[d]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[d] -= mean);
        }
    }
    let kl_final = kl_divergence(&p, &y);
    if !kl_final.is_finite() {
        return Err(Error::Numeric(format!("t-SNE diverged (KL {kl_final})")));
    }
    let mut coords = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        coords[i] = y[k];
    }
    Ok(TsneResult { coords, kl_initial, kl_final })
}
