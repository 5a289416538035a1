use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal components of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Column `k` of the `d × d` matrix is the `k`-th component.
    pub components: DMatrix<f64>,
    /// Covariance eigenvalues, non-increasing.
    pub variances: Vec<f64>,
    /// Centered points in the component basis, `m × d`.
    pub scores: Vec<Vec<f64>>,
}

impl Pca {
    /// Maps scores back to centered coordinates.
    pub fn reconstruct_centered(&self) -> Vec<Vec<f64>> {
        let d = self.mean.len();
        self.scores
            .iter()
            .map(|s| (0..d).map(|j| (0..d).map(|k| self.components[(j, k)] * s[k]).sum()).collect())
            .collect()
    }
}

/// Exact PCA through the eigendecomposition of the sample covariance.
///
/// Components are ordered by variance (ties keep eigen-solver order) and each
/// is signed so its largest-magnitude loading is positive.
pub fn pca(points: &[Vec<f64>]) -> Result<Pca> {
    let m = points.len();
    if m < 3 {
        return Err(Error::InvalidInput(format!("PCA needs at least 3 points, got {m}")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("PCA points must share a non-zero dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("PCA input contains non-finite values".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / m as f64).collect();
    let x = DMatrix::from_fn(m, d, |i, j| points[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / (m - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(d, d);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = (0..d).fold(0, |best, j| if col[j].abs() > col[best].abs() { j } else { best });
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        components.set_column(k, &col);
    }
    let variances = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let s = &x * &components;
    let scores = (0..m).map(|i| s.row(i).iter().copied().collect()).collect();
    Ok(Pca {
        mean,
        components,
        variances,
        scores,
    })
}
