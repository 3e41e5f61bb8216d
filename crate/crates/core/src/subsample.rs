//! Cluster-proportional subsampling.
//!
//! Records are clustered with k-means on their features (never the target);
//! each subsample then takes from every cluster a share proportional to the
//! cluster's size, drawing without replacement from a pool shared by all
//! subsamples of the plan so that no record lands in two of them.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{largest_remainder, split_indices, SplitIndices};
use crate::seed::{mix, stream_rng};
use crate::{Error, Matrix, Result};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `k × d` centroid matrix.
    pub centroids: Matrix,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    /// Inertia after every assignment step, first to last.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Nearest centroid of each row of `x`; ties go to the lower index.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        assign(x, &self.centroids).0
    }
}

fn row_dist2(x: &Matrix, r: usize, c: &Matrix, k: usize) -> f64 {
    x.row(r).iter().zip(c.row(k).iter()).map(|(a, b)| (a - b).powi(2)).sum()
}

fn assign(x: &Matrix, centroids: &Matrix) -> (Vec<usize>, f64) {
    let mut labels = Vec::with_capacity(x.nrows());
    let mut inertia = 0.0;
    for r in 0..x.nrows() {
        let (best, d) = (0..centroids.nrows())
            .map(|k| (k, row_dist2(x, r, centroids, k)))
            .fold((0, f64::INFINITY), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc });
        labels.push(best);
        inertia += d;
    }
    (labels, inertia)
}

fn plus_plus_init(x: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = x.nrows();
    let mut rng = stream_rng(seed, 0);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|r| x.row(r).iter().zip(x.row(chosen[0]).iter()).map(|(a, b)| (a - b).powi(2)).sum())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // Every remaining point coincides with a centroid.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (r, d) in d2.iter_mut().enumerate() {
            let e: f64 = x.row(r).iter().zip(x.row(next).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            *d = d.min(e);
        }
    }
    x.select_rows(&chosen)
}

/// Lloyd iterations from a seeded k-means++ start, until the assignment
/// stops changing or 300 iterations. A cluster left empty by an update is
/// reseeded at the point farthest from its current centroid.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<(ClusterModel, Vec<usize>)> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kmeans input"));
    }
    let d = x.ncols();
    let mut centroids = plus_plus_init(x, k, seed);
    let (mut labels, inertia) = assign(x, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (r, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += x.row(r);
        }
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.copy_from(&(sums.row(c) / counts[c] as f64));
            } else {
                let far = (0..n)
                    .filter(|r| !taken.contains(r))
                    .map(|r| (r, row_dist2(x, r, &centroids, labels[r])))
                    .fold((0, f64::NEG_INFINITY), |acc, (r, d)| if d > acc.1 { (r, d) } else { acc })
                    .0;
                taken.push(far);
                let mut row = centroids.row_mut(c);
                row.copy_from(&x.row(far));
            }
        }
        let (next, inertia) = assign(x, &centroids);
        history.push(inertia);
        let done = next == labels;
        labels = next;
        if done {
            break;
        }
    }

    let inertia = *history.last().expect("at least one assignment");
    Ok((
        ClusterModel {
            centroids,
            inertia,
            inertia_history: history,
            iterations,
        },
        labels,
    ))
}

/// Disjoint record subsets, one per subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub subsample_size: usize,
    pub n_subsamples: usize,
    /// Record indices of each subsample, ascending.
    pub subsamples: Vec<Vec<usize>>,
    /// Target per-cluster counts of a subsample (identical for all of them).
    pub allocation: Vec<usize>,
    /// Cluster labels matching `allocation`.
    pub clusters: Vec<usize>,
    /// Subsamples whose cluster quota had to be topped up from other clusters.
    pub fallbacks: Vec<String>,
    /// Number of disjoint rounds; more than one means the request exceeded
    /// the record count and records repeat across (never within) rounds.
    pub rounds: usize,
}

#[derive(Serialize)]
struct IdPlan<'a> {
    subsample_size: usize,
    n_subsamples: usize,
    rounds: usize,
    subsamples: Vec<Vec<&'a str>>,
}

impl SubsamplePlan {
    /// JSON listing each subsample as an array of record ids.
    pub fn to_id_json(&self, record_ids: &[String]) -> Result<String> {
        let doc = IdPlan {
            subsample_size: self.subsample_size,
            n_subsamples: self.n_subsamples,
            rounds: self.rounds,
            subsamples: self
                .subsamples
                .iter()
                .map(|s| s.iter().map(|&i| record_ids[i].as_str()).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Draws `n_subsamples` disjoint subsamples of `subsample_size` records with
/// per-cluster quotas from largest-remainder apportionment of the cluster
/// sizes (ties to the lower cluster label).
pub fn make_subsamples(
    assignments: &[usize],
    n_subsamples: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<SubsamplePlan> {
    let n = assignments.len();
    let requested = n_subsamples * subsample_size;
    if requested > n {
        return Err(Error::PoolExhausted {
            requested,
            available: n,
        });
    }
    if subsample_size == 0 {
        return Err(Error::InvalidConfig("subsample_size must be positive".into()));
    }
    let mut clusters: Vec<usize> = assignments.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut rng = stream_rng(seed, 0);
    let mut queues: Vec<Vec<usize>> = clusters
        .iter()
        .map(|&c| {
            let mut members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            members.shuffle(&mut rng);
            members.reverse();
            members
        })
        .collect();
    let sizes: Vec<usize> = queues.iter().map(Vec::len).collect();
    let allocation = largest_remainder(subsample_size, &sizes);

    let mut subsamples = Vec::with_capacity(n_subsamples);
    let mut fallbacks = Vec::new();
    for s in 0..n_subsamples {
        let mut picked = Vec::with_capacity(subsample_size);
        let mut deficit = 0;
        for (q, &want) in queues.iter_mut().zip(&allocation) {
            let take = want.min(q.len());
            deficit += want - take;
            for _ in 0..take {
                picked.push(q.pop().expect("length checked"));
            }
        }
        if deficit > 0 {
            let mut pool: Vec<(usize, usize)> = queues
                .iter()
                .enumerate()
                .flat_map(|(c, q)| q.iter().map(move |&i| (c, i)))
                .collect();
            pool.sort_unstable();
            pool.shuffle(&mut rng);
            for &(c, i) in &pool[..deficit] {
                queues[c].retain(|&x| x != i);
                picked.push(i);
            }
            fallbacks.push(format!(
                "subsample {s}: {deficit} records drawn from the global pool after cluster quotas ran out"
            ));
        }
        picked.sort_unstable();
        subsamples.push(picked);
    }
    Ok(SubsamplePlan {
        subsample_size,
        n_subsamples,
        subsamples,
        allocation,
        clusters,
        fallbacks,
        rounds: 1,
    })
}

/// Like [`make_subsamples`], but when the request exceeds the number of
/// records the subsamples are drawn in consecutive disjoint rounds, each
/// from the full pool. Subsamples within one round never share records.
pub fn make_subsamples_in_rounds(
    assignments: &[usize],
    n_subsamples: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<SubsamplePlan> {
    let n = assignments.len();
    if n_subsamples * subsample_size <= n {
        return make_subsamples(assignments, n_subsamples, subsample_size, seed);
    }
    let per_round = n / subsample_size.max(1);
    if per_round == 0 {
        return Err(Error::PoolExhausted {
            requested: subsample_size,
            available: n,
        });
    }
    let mut merged: Option<SubsamplePlan> = None;
    let mut remaining = n_subsamples;
    let mut round = 0;
    while remaining > 0 {
        let count = remaining.min(per_round);
        let part = make_subsamples(assignments, count, subsample_size, mix(seed, round as u64))?;
        match merged.as_mut() {
            None => merged = Some(part),
            Some(m) => {
                let offset = m.subsamples.len();
                m.fallbacks
                    .extend(part.fallbacks.iter().map(|f| format!("round {round} (offset {offset}): {f}")));
                m.subsamples.extend(part.subsamples);
            }
        }
        remaining -= count;
        round += 1;
    }
    let mut plan = merged.expect("at least one round");
    plan.n_subsamples = n_subsamples;
    plan.rounds = round;
    Ok(plan)
}

/// Train/test split of the records in `indices`, stratified by their
/// cluster labels. Returned indices are record indices, ascending.
pub fn stratified_split(
    indices: &[usize],
    assignments: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if indices.is_empty() {
        return Err(Error::Empty("subsample indices"));
    }
    let strata: Vec<usize> = indices.iter().map(|&i| assignments[i]).collect();
    let local = split_indices(indices.len(), test_fraction, Some(&strata), seed)?;
    let mut train: Vec<usize> = local.train.iter().map(|&p| indices[p]).collect();
    let mut test: Vec<usize> = local.test.iter().map(|&p| indices[p]).collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        test,
        fallback: local.fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blobs() -> Matrix {
        // 20 points near (0,0) and 20 near (100,100); spread < 1.
        Matrix::from_fn(40, 2, |i, j| {
            let base = if i < 20 { 0.0 } else { 100.0 };
            base + ((i * 7 + j * 3) % 10) as f64 * 0.1
        })
    }

    #[test]
    fn separated_blobs() {
        let x = blobs();
        let (model, labels) = kmeans(&x, 2, 11).unwrap();
        assert!(labels[..20].iter().all(|&l| l == labels[0]));
        assert!(labels[20..].iter().all(|&l| l == labels[20]));
        assert_ne!(labels[0], labels[20]);
        // brute-force nearest-centroid check
        for r in 0..40 {
            let d: Vec<f64> = (0..2).map(|k| row_dist2(&x, r, &model.centroids, k)).collect();
            assert!(d[labels[r]] <= d[1 - labels[r]]);
        }
        assert_eq!(kmeans(&x, 2, 11).unwrap().1, labels);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let x = Matrix::from_fn(7, 3, |i, j| (i * i) as f64 - j as f64);
        let (model, labels) = kmeans(&x, 1, 0).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        for j in 0..3 {
            let mean = x.column(j).sum() / 7.0;
            assert!((model.centroids[(0, j)] - mean).abs() < 1e-12);
        }
        assert!(kmeans(&x, 8, 0).is_err());
        assert!(kmeans(&x, 0, 0).is_err());
    }

    #[test]
    fn duplicate_points_do_not_break_init() {
        let x = Matrix::from_element(5, 2, 1.0);
        let (model, _) = kmeans(&x, 3, 0).unwrap();
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn proportional_allocation() {
        let assignments: Vec<usize> = (0..100).map(|i| if i < 60 { 0 } else { 1 }).collect();
        let plan = make_subsamples(&assignments, 1, 10, 3).unwrap();
        let from0 = plan.subsamples[0].iter().filter(|&&i| i < 60).count();
        assert_eq!((from0, 10 - from0), (6, 4));
        assert_eq!(plan.allocation, [6, 4]);
    }

    #[test]
    fn five_by_hundred_is_disjoint() {
        let assignments: Vec<usize> = (0..1000).map(|i| (i * 31 % 7) % 5).collect();
        let plan = make_subsamples(&assignments, 5, 100, 1).unwrap();
        let mut all: Vec<usize> = plan.subsamples.concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 500);
        assert!(make_subsamples(&assignments, 11, 100, 1).is_err());
    }

    #[test]
    fn single_cluster_is_simple_random_sampling() {
        let assignments = vec![0; 50];
        let plan = make_subsamples(&assignments, 3, 10, 2).unwrap();
        assert_eq!(plan.allocation, [10]);
        assert!(plan.fallbacks.is_empty());
        assert!(plan.subsamples.iter().all(|s| s.len() == 10));
    }

    #[test]
    fn quota_shortfall_tops_up_from_global_pool() {
        // Quotas [3, 1] per subsample; cluster 1 has only 2 records.
        let assignments = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1];
        let plan = make_subsamples(&assignments, 3, 4, 0).unwrap();
        assert_eq!(plan.allocation, [3, 1]);
        assert_eq!(plan.fallbacks.len(), 1);
        let mut all = plan.subsamples.concat();
        all.sort_unstable();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn rounds_when_request_exceeds_pool() {
        let assignments: Vec<usize> = (0..500).map(|i| i % 4).collect();
        assert!(make_subsamples(&assignments, 5, 200, 0).is_err());
        let plan = make_subsamples_in_rounds(&assignments, 5, 200, 0).unwrap();
        assert_eq!(plan.subsamples.len(), 5);
        assert_eq!(plan.rounds, 3);
        assert!(plan.subsamples.iter().all(|s| s.len() == 200));
        for round in plan.subsamples.chunks(2) {
            let mut all = round.concat();
            let len = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), len);
        }
    }

    #[test]
    fn stratified_split_examples() {
        let assignments: Vec<usize> = (0..200).map(|i| i % 3).collect();
        let indices: Vec<usize> = (0..200).step_by(2).collect();
        let s = stratified_split(&indices, &assignments, 0.25, 4).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (75, 25));
        assert_eq!(s, stratified_split(&indices, &assignments, 0.25, 4).unwrap());
        // strata among the even indices: 34 / 33 / 33 → quotas 8.5 / 8.25 / 8.25
        let sizes = [34, 33, 33];
        let expected = largest_remainder(25, &sizes);
        for c in 0..3 {
            let got = s.test.iter().filter(|&&i| assignments[i] == c).count();
            assert_eq!(got, expected[c]);
        }
        assert!(s.test.iter().all(|i| indices.contains(i)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn plans_are_disjoint(n in 20usize..300, k in 1usize..6, count in 1usize..5, seed: u64) {
            let assignments: Vec<usize> = (0..n).map(|i| (i * 17 + i / 3) % k).collect();
            let size = n / (count + 1);
            prop_assume!(size > 0);
            let plan = make_subsamples(&assignments, count, size, seed).unwrap();
            let mut all = plan.subsamples.concat();
            prop_assert_eq!(all.len(), count * size);
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), count * size);
        }

        #[test]
        fn inertia_is_nonincreasing(seed: u64, k in 1usize..6) {
            let x = Matrix::from_fn(60, 3, |i, j| ((i * 37 + j * 11 + (seed % 13) as usize) % 23) as f64);
            let (model, _) = kmeans(&x, k, seed).unwrap();
            for w in model.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
