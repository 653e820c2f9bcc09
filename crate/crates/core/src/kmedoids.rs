//! K-medoids on tree distances.
//!
//! [`pam`] runs the greedy BUILD initialization followed by best-improvement
//! SWAP. All ties are broken towards the lowest node id, so results depend
//! only on the set of ids and their distances. [`brute_force_medoids`]
//! enumerates every medoid set and is meant for small reference instances.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{CorpusError, CorpusTree, NodeId};

/// Largest `C(n, k)` accepted by [`brute_force_medoids`].
pub const BRUTE_FORCE_LIMIT: u128 = 100_000;

#[derive(Debug, Error)]
pub enum KMedoidsError {
    #[error("k = {k} is out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error("C({n}, {k}) = {combinations} medoid sets is too many to enumerate")]
    TooLarge { n: usize, k: usize, combinations: u128 },
    #[error("distance matrix is {rows} rows for {ids} ids")]
    Shape { ids: usize, rows: usize },
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(NodeId, NodeId),
    #[error("distance matrix has a non-zero diagonal at {0}")]
    NonZeroDiagonal(NodeId),
    #[error("duplicate id {0} in distance matrix")]
    DuplicateId(NodeId),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Symmetric integer distances between a set of node ids, ascending by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    ids: Vec<NodeId>,
    d: Vec<u32>,
}

impl DistanceMatrix {
    /// `rows[i][j]` is the distance between `ids[i]` and `ids[j]`. The ids are
    /// sorted, and the matrix permuted to match.
    pub fn new(ids: Vec<NodeId>, rows: Vec<Vec<u32>>) -> Result<Self, KMedoidsError> {
        let n = ids.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(KMedoidsError::Shape { ids: n, rows: rows.len() });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| ids[i]);
        if let Some(w) = order.windows(2).find(|w| ids[w[0]] == ids[w[1]]) {
            return Err(KMedoidsError::DuplicateId(ids[w[0]]));
        }
        let mut d = Vec::with_capacity(n * n);
        for &i in &order {
            for &j in &order {
                if rows[i][j] != rows[j][i] {
                    return Err(KMedoidsError::NotSymmetric(ids[i], ids[j]));
                }
                d.push(rows[i][j]);
            }
            if rows[i][i] != 0 {
                return Err(KMedoidsError::NonZeroDiagonal(ids[i]));
            }
        }
        let ids = order.iter().map(|&i| ids[i]).collect();
        Ok(Self { ids, d })
    }

    /// Tree distances between the distinct nodes in `ids`.
    pub fn from_tree(t: &CorpusTree, ids: &[NodeId]) -> Result<Self, KMedoidsError> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let n = ids.len();
        let mut d = vec![0; n * n];
        for i in 0..n {
            t.node(ids[i])?;
            for j in i + 1..n {
                let dist = t.tree_distance(ids[i], ids[j])?;
                d[i * n + j] = dist;
                d[j * n + i] = dist;
            }
        }
        Ok(Self { ids, d })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Distance by position.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.ids.len() + j]
    }

    /// Distance by node id.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Option<u32> {
        let i = self.ids.binary_search(&a).ok()?;
        let j = self.ids.binary_search(&b).ok()?;
        Some(self.get(i, j))
    }

    fn position(&self, id: NodeId) -> usize {
        self.ids.binary_search(&id).expect("id from this matrix")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Ascending.
    pub medoids: Vec<NodeId>,
    /// Every id to its medoid.
    pub assignment: BTreeMap<NodeId, NodeId>,
    /// Sum of member-to-medoid distances.
    pub cost: u64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.medoids.len()
    }

    /// `(medoid, members)` per cluster, both ascending.
    pub fn clusters(&self) -> Vec<(NodeId, Vec<NodeId>)> {
        let mut by_medoid: BTreeMap<NodeId, Vec<NodeId>> =
            self.medoids.iter().map(|&m| (m, Vec::new())).collect();
        for (&id, &m) in &self.assignment {
            by_medoid.entry(m).or_default().push(id);
        }
        by_medoid.into_iter().collect()
    }
}

/// Assigns each point to its nearest medoid. `medoids` holds positions in
/// ascending order, so the first minimum is the lowest id.
fn assign(dm: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, u64) {
    let mut cost = 0u64;
    let owners = (0..dm.len())
        .map(|j| {
            let (best, dist) = medoids
                .iter()
                .map(|&m| (m, dm.get(j, m)))
                .min_by_key(|&(m, d)| (d, m))
                .expect("at least one medoid");
            cost += u64::from(dist);
            best
        })
        .collect();
    (owners, cost)
}

fn cost_of(dm: &DistanceMatrix, medoids: &[usize]) -> u64 {
    (0..dm.len())
        .map(|j| medoids.iter().map(|&m| u64::from(dm.get(j, m))).min().unwrap_or(0))
        .sum()
}

fn clustering_from(dm: &DistanceMatrix, medoids: &[usize]) -> Clustering {
    let mut medoids = medoids.to_vec();
    medoids.sort_unstable();
    let (owners, cost) = assign(dm, &medoids);
    Clustering {
        medoids: medoids.iter().map(|&m| dm.ids[m]).collect(),
        assignment: owners
            .iter()
            .enumerate()
            .map(|(j, &m)| (dm.ids[j], dm.ids[m]))
            .collect(),
        cost,
    }
}

fn check_k(dm: &DistanceMatrix, k: usize) -> Result<(), KMedoidsError> {
    if k == 0 || k > dm.len() {
        return Err(KMedoidsError::KOutOfRange { k, n: dm.len() });
    }
    Ok(())
}

/// PAM clustering with `k` medoids.
pub fn pam(dm: &DistanceMatrix, k: usize) -> Result<Clustering, KMedoidsError> {
    pam_trace(dm, k).map(|(c, _)| c)
}

/// [`pam`] plus the cost after BUILD and after each accepted swap.
pub fn pam_trace(dm: &DistanceMatrix, k: usize) -> Result<(Clustering, Vec<u64>), KMedoidsError> {
    check_k(dm, k)?;
    let n = dm.len();

    // BUILD
    let first = (0..n)
        .min_by_key(|&i| ((0..n).map(|j| u64::from(dm.get(i, j))).sum::<u64>(), i))
        .expect("n >= 1");
    let mut medoids = vec![first];
    let mut nearest: Vec<u32> = (0..n).map(|j| dm.get(j, first)).collect();
    while medoids.len() < k {
        let (pick, _) = (0..n)
            .filter(|c| !medoids.contains(c))
            .map(|c| {
                let gain: u64 = (0..n)
                    .map(|j| u64::from(nearest[j].saturating_sub(dm.get(j, c))))
                    .sum();
                (c, gain)
            })
            .max_by_key(|&(c, gain)| (gain, std::cmp::Reverse(c)))
            .expect("k <= n leaves a candidate");
        medoids.push(pick);
        for (j, near) in nearest.iter_mut().enumerate() {
            *near = (*near).min(dm.get(j, pick));
        }
    }
    medoids.sort_unstable();
    let mut cost = cost_of(dm, &medoids);
    let mut trace = vec![cost];

    // SWAP
    loop {
        let mut best: Option<(u64, usize, usize)> = None;
        for slot in 0..medoids.len() {
            for h in (0..n).filter(|h| !medoids.contains(h)) {
                let mut trial = medoids.clone();
                trial[slot] = h;
                let c = cost_of(dm, &trial);
                if best.is_none_or(|(b, _, _)| c < b) {
                    best = Some((c, slot, h));
                }
            }
        }
        match best {
            Some((c, slot, h)) if c < cost => {
                medoids[slot] = h;
                medoids.sort_unstable();
                cost = c;
                trace.push(cost);
            }
            _ => break,
        }
    }
    Ok((clustering_from(dm, &medoids), trace))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Globally optimal `k` medoids by enumeration. Among optimal sets the
/// lexicographically smallest (by id) wins.
pub fn brute_force_medoids(dm: &DistanceMatrix, k: usize) -> Result<Clustering, KMedoidsError> {
    check_k(dm, k)?;
    let n = dm.len();
    let combinations = binomial(n, k);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(KMedoidsError::TooLarge { n, k, combinations });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (cost_of(dm, &idx), idx.clone());
    // Next combination in lexicographic order.
    while let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) {
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        let c = cost_of(dm, &idx);
        if c < best.0 {
            best = (c, idx.clone());
        }
    }
    Ok(clustering_from(dm, &best.1))
}

/// Mean silhouette of a clustering over `dm`. Points in singleton clusters
/// contribute 0, and a single cluster scores 0.
pub fn silhouette(dm: &DistanceMatrix, c: &Clustering) -> f64 {
    let clusters = c.clusters();
    if clusters.len() < 2 || dm.is_empty() {
        return 0.0;
    }
    let members: Vec<Vec<usize>> = clusters
        .iter()
        .map(|(_, m)| m.iter().map(|&id| dm.position(id)).collect())
        .collect();
    let mean_to = |j: usize, group: &[usize]| {
        let others: Vec<usize> = group.iter().copied().filter(|&x| x != j).collect();
        others.iter().map(|&x| f64::from(dm.get(j, x))).sum::<f64>() / others.len() as f64
    };
    let mut total = 0.0;
    for (ci, group) in members.iter().enumerate() {
        if group.len() < 2 {
            continue;
        }
        for &j in group {
            let a = mean_to(j, group);
            let b = members
                .iter()
                .enumerate()
                .filter(|&(cj, g)| cj != ci && !g.is_empty())
                .map(|(_, g)| mean_to(j, g))
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / dm.len() as f64
}

/// Runs [`pam`] for `k = 1..=min(max_k, n)` and keeps the clustering with the
/// highest mean silhouette; ties go to the smaller `k`.
pub fn select_k(dm: &DistanceMatrix, max_k: usize) -> Result<Clustering, KMedoidsError> {
    let top = max_k.min(dm.len());
    check_k(dm, top)?;
    let mut best = (0.0, pam(dm, 1)?);
    for k in 2..=top {
        let c = pam(dm, k)?;
        let s = silhouette(dm, &c);
        if s > best.0 + 1e-12 {
            best = (s, c);
        }
    }
    Ok(best.1)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut x = x;
        while self.0[x] != root {
            let next = self.0[x];
            self.0[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
        true
    }
}

/// Merges clusters whose medoids are closer than `eta` in the tree.
///
/// Merged clusters get the member with the smallest within-cluster distance
/// sum as medoid (lowest id on ties). Merging repeats until no two medoids
/// are closer than `eta`, so applying it again changes nothing.
pub fn merge_clusters(t: &CorpusTree, c: &Clustering, eta: u32) -> Result<Clustering, CorpusError> {
    let mut current = c.clone();
    loop {
        let clusters = current.clusters();
        let mut uf = UnionFind((0..clusters.len()).collect());
        let mut merged = false;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if t.tree_distance(clusters[i].0, clusters[j].0)? < eta {
                    merged |= uf.union(i, j);
                }
            }
        }
        if !merged {
            return Ok(current);
        }
        let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for (i, (_, members)) in clusters.iter().enumerate() {
            groups.entry(uf.find(i)).or_default().extend(members);
        }
        let mut next = Clustering {
            medoids: Vec::new(),
            assignment: BTreeMap::new(),
            cost: 0,
        };
        for mut members in groups.into_values() {
            members.sort_unstable();
            let mut best: Option<(u64, NodeId)> = None;
            for &m in &members {
                let mut sum = 0u64;
                for &x in &members {
                    sum += u64::from(t.tree_distance(m, x)?);
                }
                if best.is_none_or(|(b, _)| sum < b) {
                    best = Some((sum, m));
                }
            }
            let (sum, medoid) = best.expect("clusters are non-empty");
            next.medoids.push(medoid);
            next.cost += sum;
            next.assignment.extend(members.iter().map(|&x| (x, medoid)));
        }
        next.medoids.sort_unstable();
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusBuilder;
    use crate::sample::SampleSet;
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<u32>>) -> DistanceMatrix {
        let ids = (0..rows.len()).collect();
        DistanceMatrix::new(ids, rows).unwrap()
    }

    fn random_matrix(n: usize, seed: u64) -> DistanceMatrix {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let mut rows = vec![vec![0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = rng.random_range(1..=9);
                rows[i][j] = d;
                rows[j][i] = d;
            }
        }
        matrix(rows)
    }

    // Two groups of three: distance 2 inside a group, 6 across.
    fn two_groups() -> DistanceMatrix {
        let rows = (0..6)
            .map(|i| {
                (0..6)
                    .map(|j| match (i == j, i / 3 == j / 3) {
                        (true, _) => 0,
                        (false, true) => 2,
                        (false, false) => 6,
                    })
                    .collect()
            })
            .collect();
        matrix(rows)
    }

    #[test]
    fn k_equal_n_is_free() {
        let dm = random_matrix(5, 1);
        let c = pam(&dm, 5).unwrap();
        assert_eq!(c.cost, 0);
        assert_eq!(c.medoids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn separated_groups_are_recovered() {
        let dm = two_groups();
        let c = pam(&dm, 2).unwrap();
        assert_eq!(c, brute_force_medoids(&dm, 2).unwrap());
        let groups: Vec<Vec<NodeId>> = c.clusters().into_iter().map(|(_, m)| m).collect();
        assert_eq!(groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(c.cost, 8);
        assert_eq!(select_k(&dm, 5).unwrap().k(), 2);
    }

    #[test]
    fn toy_five_point_optimum() {
        // Points on a line at 0, 1, 2, 10, 11.
        let pos = [0i32, 1, 2, 10, 11];
        let rows = pos
            .iter()
            .map(|a| pos.iter().map(|b| a.abs_diff(*b)).collect())
            .collect();
        let dm = matrix(rows);
        // k=2: medoids {1, 3} or {1, 4} cost 1+1+1 = 3; lexicographic pick is {1, 3}.
        let c = brute_force_medoids(&dm, 2).unwrap();
        assert_eq!((c.medoids.clone(), c.cost), (vec![1, 3], 3));
        // k=1: sums are 24, 21, 20, 28, 31.
        assert_eq!(brute_force_medoids(&dm, 1).unwrap().medoids, vec![2]);
        assert_eq!(pam(&dm, 2).unwrap().cost, 3);
    }

    #[test]
    fn two_points_two_medoids() {
        let dm = matrix(vec![vec![0, 3], vec![3, 0]]);
        assert_eq!(brute_force_medoids(&dm, 2).unwrap().cost, 0);
    }

    #[test]
    fn rejects_bad_input() {
        let dm = random_matrix(4, 2);
        assert!(matches!(pam(&dm, 0), Err(KMedoidsError::KOutOfRange { k: 0, n: 4 })));
        assert!(matches!(pam(&dm, 5), Err(KMedoidsError::KOutOfRange { k: 5, n: 4 })));
        assert!(matches!(
            DistanceMatrix::new(vec![0, 1], vec![vec![0, 1], vec![2, 0]]),
            Err(KMedoidsError::NotSymmetric(..))
        ));
        assert!(matches!(
            DistanceMatrix::new(vec![0, 1], vec![vec![1, 1], vec![1, 0]]),
            Err(KMedoidsError::NonZeroDiagonal(0))
        ));
        assert!(matches!(
            DistanceMatrix::new(vec![4, 4], vec![vec![0, 1], vec![1, 0]]),
            Err(KMedoidsError::DuplicateId(4))
        ));
        let big = random_matrix(40, 3);
        assert!(matches!(brute_force_medoids(&big, 5), Err(KMedoidsError::TooLarge { .. })));
    }

    #[test]
    fn ids_are_sorted_with_their_rows() {
        let dm = DistanceMatrix::new(
            vec![9, 2, 5],
            vec![vec![0, 4, 1], vec![4, 0, 3], vec![1, 3, 0]],
        )
        .unwrap();
        assert_eq!(dm.ids(), &[2, 5, 9]);
        assert_eq!(dm.distance(9, 2), Some(4));
        assert_eq!(dm.distance(5, 2), Some(3));
        assert_eq!(dm.distance(9, 5), Some(1));
    }

    // root(0) -> a(1), b(2); a -> 3, 4, 5; b -> 6, 7, 8
    fn two_branch_tree() -> CorpusTree {
        let mut b = CorpusBuilder::new("root");
        let a = b.add_child(0, "a");
        let bb = b.add_child(0, "b");
        for parent in [a, a, a, bb, bb, bb] {
            let leaf = b.add_child(parent, "x");
            b.set_samples(leaf, SampleSet::new(vec![1], vec![0.5]).unwrap());
        }
        b.build().unwrap()
    }

    #[test]
    fn merging_follows_eta() {
        let t = two_branch_tree();
        let dm = DistanceMatrix::from_tree(&t, &[3, 4, 5, 6, 7, 8]).unwrap();
        let singletons = pam(&dm, 6).unwrap();
        assert_eq!(merge_clusters(&t, &singletons, 0).unwrap(), singletons);

        let all = merge_clusters(&t, &singletons, 5).unwrap();
        assert_eq!(all.medoids, vec![3]);
        assert_eq!(all.cost, 2 + 2 + 4 + 4 + 4);

        // Medoids 3, 4, 6: d(3,4) = 2, d(3,6) = d(4,6) = 4. eta = 4 merges 3 and 4 only.
        let mut assignment = BTreeMap::new();
        for (id, m) in [(3, 3), (4, 4), (5, 4), (6, 6), (7, 6), (8, 6)] {
            assignment.insert(id, m);
        }
        let c = Clustering {
            medoids: vec![3, 4, 6],
            assignment,
            cost: 2 + 2 + 2,
        };
        let merged = merge_clusters(&t, &c, 4).unwrap();
        assert_eq!(merged.medoids, vec![3, 6]);
        assert_eq!(merged.clusters()[0].1, vec![3, 4, 5]);
        assert_eq!(merge_clusters(&t, &merged, 4).unwrap(), merged);
    }

    proptest! {
        #[test]
        fn swap_never_raises_cost(n in 2usize..9, seed in 0u64..1000, k in 1usize..4) {
            let dm = random_matrix(n, seed);
            let k = k.min(n);
            let (c, trace) = pam_trace(&dm, k).unwrap();
            prop_assert!(trace.windows(2).all(|w| w[1] < w[0]));
            prop_assert_eq!(*trace.last().unwrap(), c.cost);
            prop_assert!(c.cost <= 2 * brute_force_medoids(&dm, k).unwrap().cost.max(1));
            let recount: u64 = c.assignment.iter().map(|(&j, &m)| u64::from(dm.distance(j, m).unwrap())).sum();
            prop_assert_eq!(recount, c.cost);
            for (&j, &m) in &c.assignment {
                let best = c.medoids.iter().map(|&x| dm.distance(j, x).unwrap()).min().unwrap();
                prop_assert_eq!(dm.distance(j, m).unwrap(), best);
            }
        }

        #[test]
        fn permuting_input_rows_changes_nothing(n in 2usize..8, seed in 0u64..1000, k in 1usize..4) {
            let dm = random_matrix(n, seed);
            let k = k.min(n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            let rows = perm.iter().map(|&i| perm.iter().map(|&j| dm.get(i, j)).collect()).collect();
            let shuffled = DistanceMatrix::new(perm.clone(), rows).unwrap();
            prop_assert_eq!(&shuffled, &dm);
            prop_assert_eq!(pam(&shuffled, k).unwrap(), pam(&dm, k).unwrap());
        }

        #[test]
        fn merge_is_idempotent(k in 1usize..6, eta in 0u32..7) {
            let t = two_branch_tree();
            let dm = DistanceMatrix::from_tree(&t, &[3, 4, 5, 6, 7, 8]).unwrap();
            let c = pam(&dm, k).unwrap();
            let once = merge_clusters(&t, &c, eta).unwrap();
            prop_assert_eq!(merge_clusters(&t, &once, eta).unwrap(), once.clone());
            prop_assert!(once.k() <= c.k());
        }
    }
}
