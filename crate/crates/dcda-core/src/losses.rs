//! Loss terms and assignment distributions.
//!
//! Covers the supervised and pseudo-labeled task losses, the domain
//! discrimination loss, the Student's-t soft cluster assignment, the
//! auxiliary target distribution with its square-root column sharpening,
//! pseudo-label mixing, the clustering cross-entropy and the cluster
//! balance regularizer. Every loss here comes with the analytic gradient
//! pieces the trainer chains through the network stacks.
//!
//! All are pure functions of their inputs.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::PROB_FLOOR;

/// Row-stochastic `N x K` matrix of assignment probabilities.
///
/// Invariant: entries lie in `[0, 1]` and each row sums to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix(Matrix);

impl AssignmentMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for r in 0..m.rows() {
            let mut sum = 0.0;
            for &v in m.row(r) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "assignment entry {v} at row {r} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "assignment row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(AssignmentMatrix(m))
    }

    /// Wraps a matrix that is row-stochastic by construction.
    pub(crate) fn from_stochastic(m: Matrix) -> Self {
        debug_assert!(AssignmentMatrix::new(m.clone()).is_ok());
        AssignmentMatrix(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.cols()
    }
}

fn check_labels(labels: &[usize], classes: usize, context: &str) -> Result<()> {
    for &l in labels {
        if l >= classes {
            return Err(Error::InvalidLabel {
                value: l,
                context: context.into(),
            });
        }
    }
    Ok(())
}

/// Mean cross-entropy of hard labels: `-(1/N) sum_i log p_i[y_i]`.
///
/// Used for the source task loss, the pseudo-labeled target task loss and
/// (with domain labels) the domain discrimination loss.
pub fn task_loss(probs: &AssignmentMatrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() == 0 || labels.is_empty() {
        return Err(Error::EmptyBatch("task_loss".into()));
    }
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    check_labels(labels, probs.cols(), "task_loss")?;
    let m = probs.matrix();
    let mut acc = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        acc -= m.get(r, y).max(PROB_FLOOR).ln();
    }
    Ok(acc / labels.len() as f64)
}

/// Gradient of [`task_loss`] w.r.t. the probabilities.
pub fn task_loss_grad(probs: &AssignmentMatrix, labels: &[usize]) -> Result<Matrix> {
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    check_labels(labels, probs.cols(), "task_loss_grad")?;
    let m = probs.matrix();
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(m.rows(), m.cols());
    for (r, &y) in labels.iter().enumerate() {
        grad.set(r, y, -1.0 / (n * m.get(r, y).max(PROB_FLOOR)));
    }
    Ok(grad)
}

/// Mean cross-entropy against soft targets: `-(1/N) sum_j sum_k t_jk log p_jk`.
///
/// With one-hot targets this reduces exactly to [`task_loss`].
pub fn soft_cross_entropy(targets: &AssignmentMatrix, probs: &AssignmentMatrix) -> Result<f64> {
    if targets.rows() == 0 {
        return Err(Error::EmptyBatch("soft_cross_entropy".into()));
    }
    if targets.rows() != probs.rows() || targets.cols() != probs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "targets {}x{} vs probs {}x{}",
            targets.rows(),
            targets.cols(),
            probs.rows(),
            probs.cols()
        )));
    }
    let (t, p) = (targets.matrix(), probs.matrix());
    let mut acc = 0.0;
    for (tv, pv) in t.data().iter().zip(p.data()) {
        if *tv != 0.0 {
            acc -= tv * pv.max(PROB_FLOOR).ln();
        }
    }
    Ok(acc / targets.rows() as f64)
}

/// Gradient of [`soft_cross_entropy`] w.r.t. the probabilities, targets
/// held constant: `-(1/N) t_jk / p_jk`.
pub fn soft_cross_entropy_grad(targets: &AssignmentMatrix, probs: &AssignmentMatrix) -> Result<Matrix> {
    if targets.rows() != probs.rows() || targets.cols() != probs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "targets {}x{} vs probs {}x{}",
            targets.rows(),
            targets.cols(),
            probs.rows(),
            probs.cols()
        )));
    }
    let (t, p) = (targets.matrix(), probs.matrix());
    let n = targets.rows() as f64;
    let mut grad = Matrix::zeros(p.rows(), p.cols());
    for i in 0..grad.data().len() {
        let tv = t.data()[i];
        if tv != 0.0 {
            grad.data_mut()[i] = -tv / (n * p.data()[i].max(PROB_FLOOR));
        }
    }
    Ok(grad)
}

/// Domain discrimination loss: mean cross-entropy over the concatenated
/// source (label 0) and target (label 1) batch.
///
/// Minimized over the discriminator; the feature extractor maximizes it
/// through the gradient reverse layer, never by negating this value.
pub fn domain_loss(domain_probs: &AssignmentMatrix, domain_labels: &[usize]) -> Result<f64> {
    if domain_probs.rows() == 0 {
        return Err(Error::EmptyBatch("domain_loss".into()));
    }
    task_loss(domain_probs, domain_labels)
}

/// Gradient of [`domain_loss`] w.r.t. the discriminator probabilities.
pub fn domain_loss_grad(domain_probs: &AssignmentMatrix, domain_labels: &[usize]) -> Result<Matrix> {
    task_loss_grad(domain_probs, domain_labels)
}

fn student_t_kernels(embeddings: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Matrix> {
    if embeddings.cols() != centroids.cols() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings width {} vs centroid width {}",
            embeddings.cols(),
            centroids.cols()
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
    }
    let exponent = -(alpha + 1.0) / 2.0;
    let mut kernels = Matrix::zeros(embeddings.rows(), centroids.rows());
    for j in 0..embeddings.rows() {
        for c in 0..centroids.rows() {
            let d = embeddings.row_sq_dist(j, centroids.row(c));
            kernels.set(j, c, (1.0 + d / alpha).powf(exponent));
        }
    }
    Ok(kernels)
}

/// Soft cluster assignment via the Student's-t kernel:
/// `p_jc = (1 + ||z_j - Z_c||^2 / alpha)^(-(alpha+1)/2)`, row-normalized.
///
/// Coincident centroids are allowed; equidistant points get equal mass.
pub fn student_t_assignment(
    embeddings: &Matrix,
    centroids: &Matrix,
    alpha: f64,
) -> Result<AssignmentMatrix> {
    let mut kernels = student_t_kernels(embeddings, centroids, alpha)?;
    let k = kernels.cols();
    for j in 0..kernels.rows() {
        let row = kernels.row_mut(j);
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for v in row.iter_mut() {
                *v /= sum;
            }
        } else {
            // All kernels underflowed; fall back to a uniform row.
            for v in row.iter_mut() {
                *v = 1.0 / k as f64;
            }
        }
    }
    Ok(AssignmentMatrix::from_stochastic(kernels))
}

/// Chains a gradient w.r.t. the Student's-t assignment back to the
/// embeddings and centroids.
pub fn student_t_backward(
    embeddings: &Matrix,
    centroids: &Matrix,
    alpha: f64,
    d_probs: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let kernels = student_t_kernels(embeddings, centroids, alpha)?;
    if d_probs.rows() != kernels.rows() || d_probs.cols() != kernels.cols() {
        return Err(Error::DimensionMismatch(format!(
            "d_probs {}x{} vs assignment {}x{}",
            d_probs.rows(),
            d_probs.cols(),
            kernels.rows(),
            kernels.cols()
        )));
    }
    let mut d_emb = Matrix::zeros(embeddings.rows(), embeddings.cols());
    let mut d_cent = Matrix::zeros(centroids.rows(), centroids.cols());
    let h = embeddings.cols();
    for j in 0..embeddings.rows() {
        let sum: f64 = kernels.row(j).iter().sum();
        if sum <= 0.0 {
            continue; // uniform-fallback row sits on a flat region
        }
        // dL/du_jl = (dL/dp_jl - sum_k dL/dp_jk p_jk) / sum
        let dot: f64 = d_probs
            .row(j)
            .iter()
            .zip(kernels.row(j))
            .map(|(g, u)| g * u / sum)
            .sum();
        for c in 0..centroids.rows() {
            let u = kernels.get(j, c);
            let d_u = (d_probs.get(j, c) - dot) / sum;
            let d = embeddings.row_sq_dist(j, centroids.row(c));
            // du/dd = -((alpha+1)/(2 alpha)) * u / (1 + d/alpha)
            let du_dd = -((alpha + 1.0) / (2.0 * alpha)) * u / (1.0 + d / alpha);
            let coeff = 2.0 * d_u * du_dd;
            for t in 0..h {
                let diff = embeddings.get(j, t) - centroids.get(c, t);
                d_emb.set(j, t, d_emb.get(j, t) + coeff * diff);
                d_cent.set(c, t, d_cent.get(c, t) - coeff * diff);
            }
        }
    }
    Ok((d_emb, d_cent))
}

/// Auxiliary target distribution: sharpen `p` by dividing each column by
/// the square root of its column sum, then row-normalize.
///
/// Accepts any non-negative matrix so the algebra can be exercised on
/// scaled inputs; in the training pipeline `p` is row-stochastic. A zero
/// column sum has its divisor floored at 1e-12 and raises the returned
/// degenerate-cluster flag.
pub fn auxiliary_distribution(p: &Matrix) -> Result<(AssignmentMatrix, bool)> {
    for &v in p.data() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "auxiliary_distribution input entry {v} must be finite and >= 0"
            )));
        }
    }
    let col_sums = p.col_sums();
    let mut degenerate = false;
    let divisors: Vec<f64> = col_sums
        .iter()
        .map(|&c| {
            if c <= 0.0 {
                degenerate = true;
                1e-12
            } else {
                c.sqrt()
            }
        })
        .collect();
    let mut q = Matrix::zeros(p.rows(), p.cols());
    for j in 0..p.rows() {
        let mut row_sum = 0.0;
        for k in 0..p.cols() {
            let w = p.get(j, k) / divisors[k];
            q.set(j, k, w);
            row_sum += w;
        }
        let row = q.row_mut(j);
        if row_sum > 0.0 {
            for v in row.iter_mut() {
                *v /= row_sum;
            }
        } else {
            for v in row.iter_mut() {
                *v = 1.0 / p.cols() as f64;
            }
        }
    }
    Ok((AssignmentMatrix::from_stochastic(q), degenerate))
}

/// Mixes the auxiliary distribution with one-hot pseudo-labels:
/// `q' = (1 - pseudo_weight) q + pseudo_weight onehot(label)`.
///
/// The contract default is `pseudo_weight = 0.5`, the equal-weight rule.
pub fn mix_pseudo(
    q: &AssignmentMatrix,
    pseudo_labels: &[usize],
    pseudo_weight: f64,
) -> Result<AssignmentMatrix> {
    if q.rows() != pseudo_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignment rows vs {} pseudo-labels",
            q.rows(),
            pseudo_labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&pseudo_weight) {
        return Err(Error::InvalidConfig(format!(
            "pseudo_weight must lie in [0,1], got {pseudo_weight}"
        )));
    }
    check_labels(pseudo_labels, q.cols(), "mix_pseudo")?;
    let mut out = q.matrix().scale(1.0 - pseudo_weight);
    for (j, &y) in pseudo_labels.iter().enumerate() {
        out.set(j, y, out.get(j, y) + pseudo_weight);
    }
    Ok(AssignmentMatrix::from_stochastic(out))
}

/// Clustering cross-entropy: `-(1/N) sum_j sum_k q_jk log p_jk` with `q`
/// held constant.
///
/// Its gradient w.r.t. anything producing `p` equals the gradient of
/// `KL(q || p)`; the two differ by the `p`-independent entropy of `q`.
pub fn clustering_loss(q: &AssignmentMatrix, p: &AssignmentMatrix) -> Result<f64> {
    soft_cross_entropy(q, p)
}

/// Gradient of [`clustering_loss`] w.r.t. `p`.
pub fn clustering_loss_grad(q: &AssignmentMatrix, p: &AssignmentMatrix) -> Result<Matrix> {
    soft_cross_entropy_grad(q, p)
}

/// Cluster balance term: `sum_k qhat_k log qhat_k` over column means
/// `qhat_k = (1/N) sum_j q_jk`.
///
/// Lies in `[-log K, 0]`; minimal exactly when cluster mass is uniform.
pub fn balance_regularizer(q: &AssignmentMatrix) -> Result<f64> {
    if q.rows() == 0 {
        return Err(Error::EmptyBatch("balance_regularizer".into()));
    }
    let n = q.rows() as f64;
    Ok(q.matrix()
        .col_sums()
        .iter()
        .map(|&s| {
            let mean = s / n;
            if mean > 0.0 {
                mean * mean.max(PROB_FLOOR).ln()
            } else {
                0.0
            }
        })
        .sum())
}

/// Gradient of [`balance_regularizer`] w.r.t. the assignment entries:
/// `(1/N) (log qhat_k + 1)`, constant down each column.
pub fn balance_regularizer_grad(q: &AssignmentMatrix) -> Result<Matrix> {
    if q.rows() == 0 {
        return Err(Error::EmptyBatch("balance_regularizer_grad".into()));
    }
    let n = q.rows() as f64;
    let col_grads: Vec<f64> = q
        .matrix()
        .col_sums()
        .iter()
        .map(|&s| ((s / n).max(PROB_FLOOR).ln() + 1.0) / n)
        .collect();
    let mut grad = Matrix::zeros(q.rows(), q.cols());
    for j in 0..q.rows() {
        grad.row_mut(j).copy_from_slice(&col_grads);
    }
    Ok(grad)
}
