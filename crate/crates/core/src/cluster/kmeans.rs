//! Lloyd's algorithm with k-means++ seeding, plus the COP variant that
//! respects must-link / can't-link constraints during assignment.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterError;
use crate::constraints::{ConstraintKind, ConstraintSet};
use crate::nn::{read_f64, read_u32, Matrix};

const KMEANS_MAGIC: &[u8; 6] = b"FMKMN\x01";
const SHIFT_TOLERANCE: f64 = 1e-4;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ClusterError> {
        w.write_all(KMEANS_MAGIC)?;
        w.write_all(&(self.centroids.rows() as u32).to_le_bytes())?;
        w.write_all(&(self.centroids.cols() as u32).to_le_bytes())?;
        for v in self.centroids.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.inertia.to_le_bytes())?;
        w.write_all(&(self.iterations as u32).to_le_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ClusterError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != KMEANS_MAGIC {
            return Err(ClusterError::MalformedCheckpoint("bad magic/version tag".to_string()));
        }
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let mut centroids = Matrix::zeros(rows, cols);
        for v in centroids.as_mut_slice() {
            *v = read_f64(r)?;
        }
        let inertia = read_f64(r)?;
        let iterations = read_u32(r)? as usize;
        Ok(KMeansModel { centroids, inertia, iterations })
    }
}

/// Nearest centroid for one point; ties go to the lower centroid index.
fn nearest_centroid(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = centroids.row_distance_sq(c, point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut dist2: Vec<f64> = (0..n).map(|i| x.row_distance_sq(i, x.row(chosen[0]))).collect();

    while chosen.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate coordinates); fall back to
            // a uniform draw over the indices not yet chosen.
            let unchosen: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unchosen[rng.random_range(0..unchosen.len())]
        };
        chosen.push(next);
        for (i, d) in dist2.iter_mut().enumerate() {
            let nd = x.row_distance_sq(i, x.row(next));
            if nd < *d {
                *d = nd;
            }
        }
    }
    x.select_rows(&chosen)
}

/// Moves the point farthest from its centroid into each empty cluster.
/// Only points that leave a non-singleton cluster and (for the constrained
/// variant) do not break a constraint are eligible.
fn fill_empty_clusters(
    assignments: &mut [usize],
    dists: &[f64],
    counts: &mut [usize],
    eligible: impl Fn(usize, usize, &[usize]) -> bool,
) -> Result<(), ClusterError> {
    for cluster in 0..counts.len() {
        if counts[cluster] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, &d) in dists.iter().enumerate() {
            if counts[assignments[i]] <= 1 || !eligible(i, cluster, assignments) {
                continue;
            }
            let better = match pick {
                Some((_, best)) => d > best,
                None => true,
            };
            if better && d > 0.0 {
                pick = Some((i, d));
            }
        }
        match pick {
            Some((i, _)) => {
                counts[assignments[i]] -= 1;
                assignments[i] = cluster;
                counts[cluster] += 1;
            }
            None => {
                return Err(ClusterError::DegenerateData(format!(
                    "cannot reseed empty cluster {cluster}; no movable point with positive distance"
                )))
            }
        }
    }
    Ok(())
}

fn update_centroids(x: &Matrix, assignments: &[usize], k: usize) -> Matrix {
    let d = x.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        let row = x.row(i);
        let acc = sums.row_mut(a);
        for (s, &v) in acc.iter_mut().zip(row) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for v in sums.row_mut(c) {
                *v *= inv;
            }
        }
    }
    sums
}

fn max_centroid_shift(old: &Matrix, new: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..old.rows() {
        let shift = old.row_distance_sq(c, new.row(c)).sqrt();
        if shift > worst {
            worst = shift;
        }
    }
    worst
}

/// Lloyd iterations from k-means++ seeding; stops once the largest centroid
/// move drops below 1e-4 or after 300 iterations.
pub fn kmeans_fit(x: &Matrix, k: usize, seed: u64) -> Result<KMeansModel, ClusterError> {
    kmeans_fit_traced(x, k, seed).map(|(model, _)| model)
}

/// Like [`kmeans_fit`] but also returns the per-iteration inertia sequence
/// (sum of squared distances at each assignment step).
pub fn kmeans_fit_traced(
    x: &Matrix,
    k: usize,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>), ClusterError> {
    lloyd(x, k, seed, None).map(|(model, history, _)| (model, history))
}

/// COP-k-means: every point takes the nearest centroid that contradicts no
/// constraint given the points already assigned in the current pass.
///
/// Returns the model together with the final constrained training assignment
/// (nearest-centroid prediction would not reflect constraint overrides).
pub fn cop_kmeans_fit(
    x: &Matrix,
    k: usize,
    constraints: &ConstraintSet,
    seed: u64,
) -> Result<(KMeansModel, Vec<usize>), ClusterError> {
    for c in &constraints.constraints {
        for idx in [c.i, c.j] {
            if idx >= x.rows() {
                return Err(ClusterError::IndexOutOfBounds { index: idx, len: x.rows() });
            }
        }
    }
    lloyd(x, k, seed, Some(constraints)).map(|(model, _, labels)| (model, labels))
}

fn lloyd(
    x: &Matrix,
    k: usize,
    seed: u64,
    constraints: Option<&ConstraintSet>,
) -> Result<(KMeansModel, Vec<f64>, Vec<usize>), ClusterError> {
    let n = x.rows();
    if n < k || k == 0 {
        return Err(ClusterError::DegenerateData(format!("{n} points cannot form {k} clusters")));
    }

    // Adjacency lists per point, empty when unconstrained.
    let mut ml_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cl_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    if let Some(cs) = constraints {
        for c in &cs.constraints {
            match c.kind {
                ConstraintKind::MustLink => {
                    ml_adj[c.i].push(c.j);
                    ml_adj[c.j].push(c.i);
                }
                ConstraintKind::CantLink => {
                    cl_adj[c.i].push(c.j);
                    cl_adj[c.j].push(c.i);
                }
            }
        }
    }
    let allowed = |i: usize, cluster: usize, assigned: &[Option<usize>]| -> bool {
        ml_adj[i]
            .iter()
            .all(|&j| assigned[j].is_none_or(|cj| cj == cluster))
            && cl_adj[i].iter().all(|&j| assigned[j] != Some(cluster))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(x, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let mut inertia = 0.0;
        let mut counts = vec![0usize; k];
        let mut dists = vec![0.0f64; n];

        if constraints.is_some() {
            let mut pending: Vec<Option<usize>> = vec![None; n];
            for i in 0..n {
                let mut order: Vec<(f64, usize)> = (0..k)
                    .map(|c| (centroids.row_distance_sq(c, x.row(i)), c))
                    .collect();
                order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let slot = order
                    .iter()
                    .find(|&&(_, c)| allowed(i, c, &pending))
                    .ok_or(ClusterError::Infeasible { point: i })?;
                pending[i] = Some(slot.1);
                dists[i] = slot.0;
                inertia += slot.0;
            }
            for (a, p) in assignments.iter_mut().zip(&pending) {
                *a = p.expect("every point assigned");
            }
        } else {
            for i in 0..n {
                let (c, d) = nearest_centroid(&centroids, x.row(i));
                assignments[i] = c;
                dists[i] = d;
                inertia += d;
            }
        }
        for &a in &assignments {
            counts[a] += 1;
        }
        history.push(inertia);

        let constraint_safe = |i: usize, cluster: usize, current: &[usize]| -> bool {
            match constraints {
                None => true,
                Some(_) => {
                    ml_adj[i].iter().all(|&j| j == i || current[j] == cluster)
                        && cl_adj[i].iter().all(|&j| current[j] != cluster)
                }
            }
        };
        fill_empty_clusters(&mut assignments, &dists, &mut counts, constraint_safe)?;

        let new_centroids = update_centroids(x, &assignments, k);
        let shift = max_centroid_shift(&centroids, &new_centroids);
        centroids = new_centroids;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    // Final inertia against the converged centroids.
    let mut inertia = 0.0;
    if constraints.is_some() {
        let mut pending: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            let mut order: Vec<(f64, usize)> = (0..k)
                .map(|c| (centroids.row_distance_sq(c, x.row(i)), c))
                .collect();
            order.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            let slot = order
                .iter()
                .find(|&&(_, c)| allowed(i, c, &pending))
                .ok_or(ClusterError::Infeasible { point: i })?;
            pending[i] = Some(slot.1);
            inertia += slot.0;
        }
        for (a, p) in assignments.iter_mut().zip(&pending) {
            *a = p.expect("every point assigned");
        }
    } else {
        for (i, slot) in assignments.iter_mut().enumerate() {
            let (c, d) = nearest_centroid(&centroids, x.row(i));
            *slot = c;
            inertia += d;
        }
    }

    Ok((KMeansModel { centroids, inertia, iterations }, history, assignments))
}

/// Nearest-centroid assignment; ties to the lower centroid index.
pub fn kmeans_predict(model: &KMeansModel, x: &Matrix) -> Result<Vec<usize>, ClusterError> {
    if x.cols() != model.centroids.cols() {
        return Err(ClusterError::ShapeMismatch {
            context: "kmeans_predict",
            expected: format!("width {}", model.centroids.cols()),
            found: format!("width {}", x.cols()),
        });
    }
    Ok((0..x.rows()).map(|i| nearest_centroid(&model.centroids, x.row(i)).0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Constraint, ConstraintParams};

    fn constraint_set(constraints: Vec<Constraint>) -> ConstraintSet {
        ConstraintSet {
            constraints,
            params: ConstraintParams { ml_pct: 0.0, cl_pct: 0.0, frac_11: 0.0, seed: 0 },
        }
    }

    fn two_blobs() -> Matrix {
        Matrix::from_rows(&[
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![0.05, 0.05],
            vec![5.0, 5.1],
            vec![5.1, 5.0],
            vec![5.05, 4.95],
        ])
    }

    #[test]
    fn separated_blobs_get_one_centroid_each() {
        let x = two_blobs();
        let model = kmeans_fit(&x, 2, 0).unwrap();
        let mut in_low = 0;
        let mut in_high = 0;
        for c in 0..2 {
            let row = model.centroids.row(c);
            if row[0] < 1.0 && row[1] < 1.0 {
                in_low += 1;
            }
            if row[0] > 4.0 && row[1] > 4.0 {
                in_high += 1;
            }
        }
        assert_eq!((in_low, in_high), (1, 1));
        let labels = kmeans_predict(&model, &x).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[3], labels[4]);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn n_equals_k_gives_zero_inertia() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]]);
        let model = kmeans_fit(&x, 3, 5).unwrap();
        assert!(model.inertia.abs() < 1e-12);
        let labels = kmeans_predict(&model, &x).unwrap();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2], "each point its own centroid");
    }

    #[test]
    fn inertia_non_increasing() {
        // A spread-out instance that needs several Lloyd iterations.
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin() * 3.0 + t * 0.05, (t * 1.3).cos() * 2.0]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let (_, history) = kmeans_fit_traced(&x, 3, 11).unwrap();
        assert!(history.len() > 1, "expected multiple iterations");
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn small_instance_matches_brute_force_partition() {
        // Exhaustive best 2-partition over all assignments.
        fn brute_force_inertia(x: &Matrix) -> f64 {
            let n = x.rows();
            let mut best = f64::INFINITY;
            for mask in 1..(1u32 << n) - 1 {
                let assignment: Vec<usize> =
                    (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
                let centroids = update_centroids(x, &assignment, 2);
                let inertia: f64 = (0..n)
                    .map(|i| centroids.row_distance_sq(assignment[i], x.row(i)))
                    .sum();
                if inertia < best {
                    best = inertia;
                }
            }
            best
        }
        for seed in [1u64, 2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 100 + 7);
            let n = 6 + (seed as usize % 3);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let offset = if i % 2 == 0 { 0.0 } else { 3.0 };
                    vec![
                        rng.random_range(0.0..1.0) + offset,
                        rng.random_range(0.0..1.0),
                    ]
                })
                .collect();
            let x = Matrix::from_rows(&rows);
            let model = kmeans_fit(&x, 2, seed).unwrap();
            let want = brute_force_inertia(&x);
            assert!(
                (model.inertia - want).abs() < 1e-9,
                "seed {seed}: lloyd {} vs brute force {want}",
                model.inertia
            );
        }
    }

    #[test]
    fn predict_ties_go_to_lower_index() {
        let model = KMeansModel {
            centroids: Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]),
            inertia: 0.0,
            iterations: 1,
        };
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(kmeans_predict(&model, &x).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn predict_matches_per_point_recomputation() {
        let x = two_blobs();
        let model = kmeans_fit(&x, 2, 9).unwrap();
        let labels = kmeans_predict(&model, &x).unwrap();
        for (i, &label) in labels.iter().enumerate() {
            let d0 = model.centroids.row_distance_sq(0, x.row(i));
            let d1 = model.centroids.row_distance_sq(1, x.row(i));
            let want = if d1 < d0 { 1 } else { 0 };
            assert_eq!(label, want);
        }
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let model = kmeans_fit(&two_blobs(), 2, 0).unwrap();
        let bad = Matrix::zeros(1, 3);
        assert!(matches!(
            kmeans_predict(&model, &bad),
            Err(ClusterError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn identical_points_with_k2_is_degenerate() {
        let x = Matrix::from_rows(&vec![vec![1.0, 1.0]; 5]);
        assert!(matches!(kmeans_fit(&x, 2, 0), Err(ClusterError::DegenerateData(_))));
    }

    #[test]
    fn cop_reduces_to_kmeans_without_constraints() {
        let x = two_blobs();
        let (cop_model, cop_labels) = cop_kmeans_fit(&x, 2, &constraint_set(vec![]), 4).unwrap();
        let plain = kmeans_fit(&x, 2, 4).unwrap();
        assert_eq!(cop_model.centroids, plain.centroids);
        assert_eq!(cop_labels, kmeans_predict(&plain, &x).unwrap());
    }

    #[test]
    fn cant_link_separates_identical_points() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
            vec![2.1, 2.0],
        ]);
        let cs = constraint_set(vec![Constraint {
            kind: ConstraintKind::CantLink,
            i: 0,
            j: 1,
        }]);
        let (_, labels) = cop_kmeans_fit(&x, 2, &cs, 3).unwrap();
        assert_ne!(labels[0], labels[1], "identical coordinates forced apart");
    }

    #[test]
    fn must_link_chain_shares_one_label() {
        // Points 0 and 3 sit in opposite blobs; chaining 0-1, 1-3 must drag
        // all three into one cluster.
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![5.0, 5.0],
            vec![5.2, 5.0],
            vec![0.1, 0.1],
            vec![5.1, 5.1],
        ]);
        let cs = constraint_set(vec![
            Constraint { kind: ConstraintKind::MustLink, i: 0, j: 1 },
            Constraint { kind: ConstraintKind::MustLink, i: 1, j: 3 },
        ]);
        let (_, labels) = cop_kmeans_fit(&x, 2, &cs, 1).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[1], labels[3]);
    }

    #[test]
    fn infeasible_constraints_report_the_blocking_point() {
        // Three mutual can't-links cannot be 2-colored.
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let cs = constraint_set(vec![
            Constraint { kind: ConstraintKind::CantLink, i: 0, j: 1 },
            Constraint { kind: ConstraintKind::CantLink, i: 1, j: 2 },
            Constraint { kind: ConstraintKind::CantLink, i: 0, j: 2 },
        ]);
        match cop_kmeans_fit(&x, 2, &cs, 0) {
            Err(ClusterError::Infeasible { point }) => assert_eq!(point, 2),
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn cop_rejects_out_of_bounds_constraints() {
        let x = two_blobs();
        let cs = constraint_set(vec![Constraint { kind: ConstraintKind::MustLink, i: 0, j: 99 }]);
        assert!(matches!(
            cop_kmeans_fit(&x, 2, &cs, 0),
            Err(ClusterError::IndexOutOfBounds { index: 99, .. })
        ));
    }

    #[test]
    fn kmeans_checkpoint_round_trip() {
        let model = kmeans_fit(&two_blobs(), 2, 8).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = KMeansModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(model, back);
    }
}
