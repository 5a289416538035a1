use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pca::pca;
use super::ProjectionParams;
use crate::error::{Error, Result};

const ENTROPY_TOL: f64 = 1e-5;

/// Row-conditional affinities with per-point precision found by bisection
/// so each row's entropy equals `ln(perplexity)`.
fn conditional_affinities(dist: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let m = dist.len();
    let target = perplexity.ln();
    let mut p = vec![vec![0.0; m]; m];
    for i in 0..m {
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..200 {
            let dmin = (0..m).filter(|&j| j != i).map(|j| dist[i][j]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in (0..m).filter(|&j| j != i) {
                let w = (-(dist[i][j] - dmin) * beta).exp();
                p[i][j] = w;
                sum += w;
                weighted += w * (dist[i][j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            p[i].iter_mut().for_each(|v| *v /= sum);
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
    }
    p
}

/// Exact t-SNE to two dimensions, started from the scaled PCA projection plus
/// a tiny seeded jitter (so coincident points can separate).
pub fn tsne(points: &[Vec<f64>], params: &ProjectionParams) -> Result<Vec<[f64; 2]>> {
    let m = points.len();
    if !(params.perplexity > 0.0) || params.iterations == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::Config("t-SNE needs positive perplexity, iterations and learning rate".into()));
    }
    if (m as f64) < 3.0 * params.perplexity {
        return Err(Error::InvalidInput(format!(
            "t-SNE with perplexity {} needs at least {} points, got {m}",
            params.perplexity,
            (3.0 * params.perplexity).ceil()
        )));
    }
    let init = pca(points)?;
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()).collect())
        .collect();
    let cond = conditional_affinities(&dist, params.perplexity);
    let p: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| ((cond[i][j] + cond[j][i]) / (2.0 * m as f64)).max(1e-12)).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let col0: Vec<f64> = init.scores.iter().map(|s| s[0]).collect();
    let mean0 = col0.iter().sum::<f64>() / m as f64;
    let std0 = (col0.iter().map(|v| (v - mean0).powi(2)).sum::<f64>() / m as f64).sqrt();
    let scale = if std0 > 0.0 { 1e-4 / std0 } else { 1.0 };
    let mut y: Vec<[f64; 2]> = init
        .scores
        .iter()
        .map(|s| {
            let second = s.get(1).copied().unwrap_or(0.0);
            [s[0] * scale + rng.gen_range(-1e-8..1e-8), second * scale + rng.gen_range(-1e-8..1e-8)]
        })
        .collect();

    let exaggerated = (params.iterations / 4).min(250);
    let mut velocity = vec![[0.0; 2]; m];
    let mut gains = vec![[1.0f64; 2]; m];
    let mut num = vec![vec![0.0; m]; m];
    for it in 0..params.iterations {
        let exag = if it < exaggerated { params.early_exaggeration } else { 1.0 };
        let momentum = if it < exaggerated { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    num[i][j] = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += num[i][j];
                }
            }
        }
        for i in 0..m {
            let mut grad = [0.0; 2];
            for j in (0..m).filter(|&j| j != i) {
                let w = 4.0 * (exag * p[i][j] - num[i][j] / z) * num[i][j];
                grad[0] += w * (y[i][0] - y[j][0]);
                grad[1] += w * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                gains[i][k] = if (grad[k] > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                velocity[i][k] = momentum * velocity[i][k] - params.learning_rate * gains[i][k] * grad[k];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        let cx = y.iter().map(|v| v[0]).sum::<f64>() / m as f64;
        let cy = y.iter().map(|v| v[1]).sum::<f64>() / m as f64;
        y.iter_mut().for_each(|v| {
            v[0] -= cx;
            v[1] -= cy;
        });
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("t-SNE diverged to non-finite coordinates".into()));
    }
    Ok(y)
}
