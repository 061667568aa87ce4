//! Exact t-SNE.

use crate::error::{Error, Result};
use crate::nn::RngStream;

const ENTROPY_TOL: f64 = 1e-5;
const MIN_PROB: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// KL(P‖Q) of the random starting layout.
    pub kl_initial: f64,
    /// KL(P‖Q) right after early exaggeration ends.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

/// Shannon entropy (nats) of a probability row.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

fn row_given_beta(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    // Shift by the smallest off-diagonal distance to avoid underflow.
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, &dj) in d.iter().enumerate() {
        let v = if j == i {
            0.0
        } else {
            (-(dj - dmin) * beta).exp()
        };
        out[j] = v;
        sum += v;
        weighted += v * (dj - dmin);
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Row-conditional affinities `p_{j|i}` (row-major `n × n`) whose entropies
/// equal `ln(perplexity)` within 1e-5, plus the precision `β_i` of each row.
/// A row whose nearest neighbours are tied so often that even `β → ∞` stays
/// above the target gets the uniform limit over those ties and `β_i = ∞`.
pub fn conditional_probabilities(
    dist2: &[f64],
    n: usize,
    perplexity: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if dist2.len() != n * n {
        return Err(Error::invalid("distance matrix must be n × n"));
    }
    if !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} must lie in (1, {}]",
            n - 1
        )));
    }
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut betas = vec![1.0; n];
    for i in 0..n {
        let d = &dist2[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[j])
            .fold(f64::INFINITY, f64::min);
        let ties = (0..n).filter(|&j| j != i && d[j] == dmin).count();
        if (ties as f64).ln() > target + ENTROPY_TOL {
            // Duplicated neighbours cap how peaked the row can get.
            log::warn!("point {i} has {ties} equidistant nearest neighbours; perplexity target unreachable");
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j != i && d[j] == dmin {
                    1.0 / ties as f64
                } else {
                    0.0
                };
            }
            betas[i] = f64::INFINITY;
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = row_given_beta(d, i, beta, row);
        for _ in 0..200 {
            let diff = h - target;
            if diff.abs() <= ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    0.5 * (beta + hi)
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = row_given_beta(d, i, beta, row);
        }
        if (h - target).abs() > ENTROPY_TOL {
            return Err(Error::invalid(format!(
                "bandwidth search for point {i} ended at entropy {h}, target {target}"
            )));
        }
        betas[i] = beta;
    }
    Ok((p, betas))
}

fn squared_distances(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Student-t affinities `q_ij` and their unnormalized kernels.
fn low_dim_affinities(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = k;
            num[j * n + i] = k;
            sum += 2.0 * k;
        }
    }
    let q = num.iter().map(|&k| (k / sum).max(MIN_PROB)).collect();
    (q, num)
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (q, _) = low_dim_affinities(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * (pij / q[i * n + j]).ln();
            }
        }
    }
    kl
}

/// Embeds `vectors` in two dimensions.
pub fn tsne(
    vectors: &[Vec<f64>],
    params: &TsneParams,
    stream: &mut RngStream,
) -> Result<TsneResult> {
    let n = vectors.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    if vectors.iter().any(|v| v.len() != vectors[0].len()) {
        return Err(Error::invalid("t-SNE inputs must share a length"));
    }
    let dist2 = squared_distances(vectors);
    if dist2.iter().all(|&d| d == 0.0) {
        return Err(Error::invalid("t-SNE inputs are all identical"));
    }
    let (cond, _) = conditional_probabilities(&dist2, n, params.perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] =
                    ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(MIN_PROB);
            }
        }
    }

    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [1e-2 * stream.next_normal(), 1e-2 * stream.next_normal()])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let kl_initial = kl_divergence(&p, &y);
    let mut kl_after_exaggeration = f64::NAN;
    for iter in 0..params.iterations {
        if iter == params.exaggeration_iterations {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
        let (exaggeration, momentum) = if iter < params.exaggeration_iterations {
            (params.exaggeration, params.initial_momentum)
        } else {
            (1.0, params.final_momentum)
        };
        let (q, num) = low_dim_affinities(&y);
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let m = (exaggeration * p[i * n + j] - q[i * n + j]) * num[i * n + j];
                grad[0] += 4.0 * m * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                gains[i][d] = if (grad[d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] =
                    momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[d];
            }
        }
        for i in 0..n {
            y[i][0] += update[i][0];
            y[i][1] += update[i][1];
        }
        let cx = y.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|v| v[1]).sum::<f64>() / n as f64;
        for v in &mut y {
            v[0] -= cx;
            v[1] -= cy;
        }
    }
    let kl_final = kl_divergence(&p, &y);
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = kl_final;
    }
    Ok(TsneResult {
        embedding: y,
        kl_initial,
        kl_after_exaggeration,
        kl_final,
    })
}
