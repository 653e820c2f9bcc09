#![allow(dead_code)]

use std::collections::VecDeque;

use domain_scope::{CorpusBuilder, CorpusTree, SampleSet};
use rand::Rng;

/// Random tree on `n` nodes: node `i > 0` hangs under a uniform pick from
/// `0..i`. Leaves get `1..=max_samples` flat samples of length 2.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, max_samples: usize) -> CorpusTree {
    let mut b = CorpusBuilder::new("n0");
    let mut has_child = vec![false; n];
    for i in 1..n {
        let p = rng.random_range(0..i);
        let id = b.add_child(p, format!("n{i}"));
        assert_eq!(id, i);
        has_child[p] = true;
    }
    for (id, inner) in has_child.iter().enumerate() {
        if !inner {
            let count = rng.random_range(1..=max_samples);
            let data = (0..count * 2).map(|_| rng.random::<f32>()).collect();
            b.set_samples(id, SampleSet::new(vec![2], data).unwrap());
        }
    }
    b.build().unwrap()
}

/// All-pairs edge distances by breadth-first search from every node.
pub fn bfs_distances(t: &CorpusTree) -> Vec<Vec<u32>> {
    let n = t.len();
    let mut adj = vec![Vec::new(); n];
    for node in t.nodes() {
        if let Some(p) = node.parent {
            adj[node.id].push(p);
            adj[p].push(node.id);
        }
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![u32::MAX; n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == u32::MAX {
                        dist[w] = dist[v] + 1;
                        q.push_back(w);
                    }
                }
            }
            dist
        })
        .collect()
}

/// `floor(mean(x) * n)` clamped to `[0, n)`, written out independently of
/// the crate's mock rule.
pub fn mean_bin(x: &[f32], n: usize) -> usize {
    let mut sum = 0.0f64;
    for &v in x {
        sum += v as f64;
    }
    let b = (sum / x.len() as f64 * n as f64).floor();
    if b < 0.0 {
        0
    } else if b as usize >= n {
        n - 1
    } else {
        b as usize
    }
}
