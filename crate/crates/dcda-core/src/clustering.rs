//! K-means over embeddings, cluster-state initialization and the
//! epoch-end pseudo-label refresh.
//!
//! Distances are squared Euclidean throughout and every tie breaks to
//! class 0 (bona-fide), so the whole module is deterministic given its
//! inputs. K-means is plain Lloyd iteration seeded by the caller, with an
//! empty cluster reseeded to the point farthest from its assigned center.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

/// Learnable cluster centers (row 0 bona-fide, row 1 attack) plus the
/// current pseudo-label per target training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centroids: Matrix,
    pub pseudo_labels: Vec<usize>,
    pub last_update_epoch: usize,
}

/// Outcome of one k-means run.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, in order; non-increasing.
    pub inertia_trace: Vec<f64>,
}

fn nearest_center(point_row: &Matrix, r: usize, centers: &Matrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = point_row.row_sq_dist(r, centers.row(0));
    for c in 1..centers.rows() {
        let d = point_row.row_sq_dist(r, centers.row(c));
        // strict `<` keeps ties on the lowest index (class 0 first)
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// Per-class means of the labeled source embeddings, rows ordered
/// [bona-fide, attack]. Both classes must be present.
pub fn source_class_centers(embeddings: &Matrix, labels: &[usize]) -> Result<Matrix> {
    if embeddings.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows vs {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    let h = embeddings.cols();
    let mut centers = Matrix::zeros(2, h);
    let mut counts = [0usize; 2];
    for (r, &y) in labels.iter().enumerate() {
        if y > 1 {
            return Err(Error::InvalidLabel {
                value: y,
                context: "source_class_centers".into(),
            });
        }
        counts[y] += 1;
        let row = embeddings.row(r);
        for t in 0..h {
            centers.set(y, t, centers.get(y, t) + row[t]);
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::ClassAbsent {
                class: c,
                context: "source class centers need both classes".into(),
            });
        }
        for t in 0..h {
            centers.set(c, t, centers.get(c, t) / count as f64);
        }
    }
    Ok(centers)
}

/// Lloyd's algorithm from caller-supplied initial centers.
///
/// Stops at an assignment fixpoint, when the largest squared center shift
/// drops below `tol`, or after `max_iters`. Inertia is recorded after each
/// assignment step and checked non-increasing.
pub fn kmeans(
    points: &Matrix,
    init_centers: &Matrix,
    max_iters: usize,
    tol: f64,
) -> Result<KmeansResult> {
    let n = points.rows();
    let k = init_centers.rows();
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "k-means needs at least {k} points, got {n}"
        )));
    }
    if points.cols() != init_centers.cols() {
        return Err(Error::DimensionMismatch(format!(
            "points width {} vs centers width {}",
            points.cols(),
            init_centers.cols()
        )));
    }
    let h = points.cols();
    let mut centers = init_centers.clone();
    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;

        // assignment step
        let mut changed = false;
        let mut new_inertia = 0.0;
        for r in 0..n {
            let (best, d) = nearest_center(points, r, &centers);
            if labels[r] != best {
                labels[r] = best;
                changed = true;
            }
            new_inertia += d;
        }
        debug_assert!(
            new_inertia <= inertia * (1.0 + 1e-12) + 1e-12,
            "inertia increased: {inertia} -> {new_inertia}"
        );
        let converged_assignment = !changed && iterations > 1;
        inertia = new_inertia;
        inertia_trace.push(inertia);
        if converged_assignment {
            break;
        }

        // update step
        let mut sums = Matrix::zeros(k, h);
        let mut counts = vec![0usize; k];
        for r in 0..n {
            counts[labels[r]] += 1;
            let row = points.row(r);
            for t in 0..h {
                sums.set(labels[r], t, sums.get(labels[r], t) + row[t]);
            }
        }
        let mut max_shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                // reseed to the point farthest from its assigned center
                let mut far_r = 0;
                let mut far_d = -1.0;
                for r in 0..n {
                    let d = points.row_sq_dist(r, centers.row(labels[r]));
                    if d > far_d {
                        far_d = d;
                        far_r = r;
                    }
                }
                let target = points.row(far_r).to_vec();
                let shift = centers.row_sq_dist(c, &target);
                max_shift = max_shift.max(shift);
                centers.row_mut(c).copy_from_slice(&target);
            } else {
                for t in 0..h {
                    sums.set(c, t, sums.get(c, t) / counts[c] as f64);
                }
                let shift = centers.row_sq_dist(c, sums.row(c));
                max_shift = max_shift.max(shift);
                centers.row_mut(c).copy_from_slice(sums.row(c));
            }
        }
        if max_shift < tol {
            break;
        }
    }

    // final labels/inertia against the final centers
    let mut final_inertia = 0.0;
    for r in 0..n {
        let (best, d) = nearest_center(points, r, &centers);
        labels[r] = best;
        final_inertia += d;
    }
    Ok(KmeansResult {
        labels,
        centers,
        inertia: final_inertia,
        iterations,
        inertia_trace,
    })
}

/// Nearest-centroid assignment under squared Euclidean distance; ties go
/// to class 0.
pub fn update_pseudo_labels(target_embeddings: &Matrix, centroids: &Matrix) -> Result<Vec<usize>> {
    if target_embeddings.cols() != centroids.cols() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings width {} vs centroid width {}",
            target_embeddings.cols(),
            centroids.cols()
        )));
    }
    Ok((0..target_embeddings.rows())
        .map(|r| nearest_center(target_embeddings, r, centroids).0)
        .collect())
}

/// Initialization block: source class centers seed k-means on the target
/// embeddings; the stored centroids are the elementwise mean of the source
/// class centers and the target k-means centers, and the pseudo-labels are
/// the k-means labels.
pub fn init_cluster_state(
    source_embeddings: &Matrix,
    source_labels: &[usize],
    target_embeddings: &Matrix,
) -> Result<ClusterState> {
    let source_centers = source_class_centers(source_embeddings, source_labels)?;
    let km = kmeans(target_embeddings, &source_centers, KMEANS_MAX_ITERS, KMEANS_TOL)?;
    let centroids = source_centers.add(&km.centers)?.scale(0.5);
    Ok(ClusterState {
        centroids,
        pseudo_labels: km.labels,
        last_update_epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, h: usize, span: f64) -> Matrix {
        let mut m = Matrix::zeros(n, h);
        for v in m.data_mut() {
            *v = rng.gen_range(-span..span);
        }
        m
    }

    #[test]
    fn source_centers_single_sample_per_class() {
        let emb = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 4.0]]).unwrap();
        let centers = source_class_centers(&emb, &[0, 1]).unwrap();
        assert_eq!(centers.row(0), &[1.0, 2.0]);
        assert_eq!(centers.row(1), &[-3.0, 4.0]);
    }

    #[test]
    fn source_centers_mean_is_idempotent_under_duplication() {
        let emb = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![0.0, 5.0]]).unwrap();
        let base = source_class_centers(&emb, &[0, 0, 1]).unwrap();
        let dup = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![3.0, 2.0],
            vec![0.0, 5.0],
            vec![1.0, 0.0],
            vec![3.0, 2.0],
            vec![0.0, 5.0],
        ])
        .unwrap();
        let doubled = source_class_centers(&dup, &[0, 0, 1, 0, 0, 1]).unwrap();
        for i in 0..4 {
            assert!((base.data()[i] - doubled.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn source_centers_random_instance_matches_hand_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let emb = random_points(&mut rng, 10, 3, 2.0);
        let labels: Vec<usize> = vec![0, 1, 0, 0, 1, 1, 0, 1, 0, 1];
        let centers = source_class_centers(&emb, &labels).unwrap();
        for class in 0..2 {
            let rows: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            for t in 0..3 {
                let mean: f64 =
                    rows.iter().map(|&r| emb.get(r, t)).sum::<f64>() / rows.len() as f64;
                assert!((centers.get(class, t) - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn source_centers_reject_missing_class() {
        let emb = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            source_class_centers(&emb, &[0, 0]),
            Err(Error::ClassAbsent { class: 1, .. })
        ));
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        for _ in 0..20 {
            rows.push(vec![
                10.0 + rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]);
        }
        for _ in 0..20 {
            rows.push(vec![
                -10.0 + rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]);
        }
        let points = Matrix::from_rows(&rows).unwrap();
        let init = Matrix::from_rows(&[vec![8.0, 0.0], vec![-8.0, 0.0]]).unwrap();
        let result = kmeans(&points, &init, 100, 1e-6).unwrap();
        assert!(result.labels[..20].iter().all(|&l| l == 0));
        assert!(result.labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn kmeans_k1_center_is_global_mean() {
        let points =
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.0]]).unwrap();
        let init = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let result = kmeans(&points, &init, 100, 1e-12).unwrap();
        assert!((result.centers.get(0, 0) - 3.0).abs() < 1e-14);
        assert!((result.centers.get(0, 1) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kmeans_inertia_trace_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let points = random_points(&mut rng, 30, 2, 5.0);
            let init = random_points(&mut rng, 2, 2, 5.0);
            let result = kmeans(&points, &init, 100, 0.0).unwrap();
            for w in result.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "inertia rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    // Exhaustive oracle: N = 8 points, all 2^8 binary partitions. Seeding
    // Lloyd from the optimal partition's means must converge to exactly
    // the brute-force optimum.
    #[test]
    fn kmeans_matches_exhaustive_partition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let points = random_points(&mut rng, 8, 2, 3.0);
            let mut best_inertia = f64::INFINITY;
            let mut best_centers = Matrix::zeros(2, 2);
            for mask in 0u32..256 {
                let mut sums = [[0.0f64; 2]; 2];
                let mut counts = [0usize; 2];
                for r in 0..8 {
                    let c = ((mask >> r) & 1) as usize;
                    counts[c] += 1;
                    sums[c][0] += points.get(r, 0);
                    sums[c][1] += points.get(r, 1);
                }
                if counts[0] == 0 || counts[1] == 0 {
                    continue;
                }
                let centers = [
                    [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64],
                    [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64],
                ];
                // inertia measured against the nearest center, matching
                // the k-means objective
                let mut inertia = 0.0;
                for r in 0..8 {
                    let d0 = (points.get(r, 0) - centers[0][0]).powi(2)
                        + (points.get(r, 1) - centers[0][1]).powi(2);
                    let d1 = (points.get(r, 0) - centers[1][0]).powi(2)
                        + (points.get(r, 1) - centers[1][1]).powi(2);
                    inertia += d0.min(d1);
                }
                if inertia < best_inertia {
                    best_inertia = inertia;
                    best_centers = Matrix::from_rows(&[
                        centers[0].to_vec(),
                        centers[1].to_vec(),
                    ])
                    .unwrap();
                }
            }
            let result = kmeans(&points, &best_centers, 100, 0.0).unwrap();
            assert!(
                result.inertia <= best_inertia + 1e-9,
                "{} vs optimum {}",
                result.inertia,
                best_inertia
            );
            assert!(
                (result.inertia - best_inertia).abs() < 1e-9,
                "seeded from the optimum, Lloyd must stay at it"
            );
        }
    }

    #[test]
    fn kmeans_reseeds_empty_cluster() {
        // both initial centers on top of one blob; the second must escape
        let points = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![9.0, 9.0],
            vec![9.1, 9.0],
        ])
        .unwrap();
        let init = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.05, 0.05]]).unwrap();
        let result = kmeans(&points, &init, 100, 1e-9).unwrap();
        let mut counts = [0usize; 2];
        for &l in &result.labels {
            counts[l] += 1;
        }
        assert!(counts[0] > 0 && counts[1] > 0, "labels {:?}", result.labels);
    }

    #[test]
    fn pseudo_labels_nearest_and_tie_rule() {
        let centroids = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let emb = Matrix::from_rows(&[
            vec![1.0, 0.0],  // exactly at centroid 0
            vec![-2.0, 0.0], // nearer centroid 1
            vec![0.0, 5.0],  // equidistant: tie goes to class 0
        ])
        .unwrap();
        let labels = update_pseudo_labels(&emb, &centroids).unwrap();
        assert_eq!(labels, vec![0, 1, 0]);
    }

    #[test]
    fn pseudo_labels_match_brute_force_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let emb = random_points(&mut rng, 20, 4, 3.0);
        let centroids = random_points(&mut rng, 2, 4, 3.0);
        let labels = update_pseudo_labels(&emb, &centroids).unwrap();
        for r in 0..20 {
            let d0 = emb.row_sq_dist(r, centroids.row(0));
            let d1 = emb.row_sq_dist(r, centroids.row(1));
            let expected = if d1 < d0 { 1 } else { 0 };
            assert_eq!(labels[r], expected, "row {r}: d0={d0} d1={d1}");
        }
    }

    // Euclidean isometry: rotating points and centroids together leaves
    // the assignment unchanged.
    #[test]
    fn pseudo_labels_invariant_under_joint_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let emb = random_points(&mut rng, 15, 2, 2.0);
        let centroids = random_points(&mut rng, 2, 2, 2.0);
        let base = update_pseudo_labels(&emb, &centroids).unwrap();
        let theta: f64 = 0.7;
        let rotate = |m: &Matrix| -> Matrix {
            let mut out = m.clone();
            for r in 0..m.rows() {
                let (x, y) = (m.get(r, 0), m.get(r, 1));
                out.set(r, 0, theta.cos() * x - theta.sin() * y);
                out.set(r, 1, theta.sin() * x + theta.cos() * y);
            }
            out
        };
        let rotated = update_pseudo_labels(&rotate(&emb), &rotate(&centroids)).unwrap();
        assert_eq!(base, rotated);
    }

    #[test]
    fn init_state_degenerate_coincidence() {
        let source = Matrix::from_rows(&[vec![2.0, 0.0], vec![-2.0, 0.0]]).unwrap();
        let target = Matrix::from_rows(&[vec![2.0, 0.0], vec![-2.0, 0.0]]).unwrap();
        let state = init_cluster_state(&source, &[0, 1], &target).unwrap();
        assert_eq!(state.pseudo_labels, vec![0, 1]);
        assert_eq!(state.centroids.row(0), &[2.0, 0.0]);
        assert_eq!(state.centroids.row(1), &[-2.0, 0.0]);
    }

    #[test]
    fn init_state_constant_shift_halves_into_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // two tight, well-separated class blobs with a shift small enough
        // that the seeded k-means stays in the per-class basins
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..6 {
            rows.push(vec![5.0 + rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
            labels.push(0);
            rows.push(vec![-5.0 + rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
            labels.push(1);
        }
        let source = Matrix::from_rows(&rows).unwrap();
        let shift = [0.5, -0.3];
        let mut target = source.clone();
        for r in 0..target.rows() {
            target.set(r, 0, target.get(r, 0) + shift[0]);
            target.set(r, 1, target.get(r, 1) + shift[1]);
        }
        let state = init_cluster_state(&source, &labels, &target).unwrap();
        let src_centers = source_class_centers(&source, &labels).unwrap();
        // target k-means seeded at source centers converges onto the
        // shifted class blobs, so centroids = source centers + shift/2
        for c in 0..2 {
            for t in 0..2 {
                let expected = src_centers.get(c, t) + shift[t] / 2.0;
                assert!(
                    (state.centroids.get(c, t) - expected).abs() < 1e-9,
                    "centroid[{c}][{t}]"
                );
            }
        }
    }

    // Scripted oracle: replay the initialization block step by step with
    // independent arithmetic and compare every output.
    #[test]
    fn init_state_matches_scripted_execution() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let source = random_points(&mut rng, 10, 2, 2.0);
        let labels: Vec<usize> = vec![0, 1, 1, 0, 1, 0, 0, 1, 1, 0];
        let target = random_points(&mut rng, 9, 2, 2.0);
        let state = init_cluster_state(&source, &labels, &target).unwrap();

        // script: class means
        let mut means = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for r in 0..10 {
            means[labels[r]][0] += source.get(r, 0);
            means[labels[r]][1] += source.get(r, 1);
            counts[labels[r]] += 1;
        }
        for c in 0..2 {
            means[c][0] /= counts[c] as f64;
            means[c][1] /= counts[c] as f64;
        }
        // script: lloyd to fixpoint
        let mut centers = means;
        let mut assign = vec![0usize; 9];
        loop {
            let mut changed = false;
            for r in 0..9 {
                let d0 = (target.get(r, 0) - centers[0][0]).powi(2)
                    + (target.get(r, 1) - centers[0][1]).powi(2);
                let d1 = (target.get(r, 0) - centers[1][0]).powi(2)
                    + (target.get(r, 1) - centers[1][1]).powi(2);
                let a = if d1 < d0 { 1 } else { 0 };
                if assign[r] != a {
                    assign[r] = a;
                    changed = true;
                }
            }
            let mut sums = [[0.0f64; 2]; 2];
            let mut cnt = [0usize; 2];
            for r in 0..9 {
                sums[assign[r]][0] += target.get(r, 0);
                sums[assign[r]][1] += target.get(r, 1);
                cnt[assign[r]] += 1;
            }
            for c in 0..2 {
                if cnt[c] > 0 {
                    centers[c][0] = sums[c][0] / cnt[c] as f64;
                    centers[c][1] = sums[c][1] / cnt[c] as f64;
                }
            }
            if !changed {
                break;
            }
        }
        assert_eq!(state.pseudo_labels, assign);
        for c in 0..2 {
            for t in 0..2 {
                let expected = (means[c][t] + centers[c][t]) / 2.0;
                assert!((state.centroids.get(c, t) - expected).abs() < 1e-12);
            }
        }
    }

    // target identical to source distribution: centroids equal the source
    // class centers.
    #[test]
    fn init_state_identical_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..15 {
            rows.push(vec![5.0 + rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)]);
            labels.push(0);
        }
        for _ in 0..15 {
            rows.push(vec![-5.0 + rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)]);
            labels.push(1);
        }
        let source = Matrix::from_rows(&rows).unwrap();
        let state = init_cluster_state(&source, &labels, &source).unwrap();
        let centers = source_class_centers(&source, &labels).unwrap();
        for i in 0..4 {
            assert!((state.centroids.data()[i] - centers.data()[i]).abs() < 1e-9);
        }
    }
}
