//! HDBSCAN: core distances, mutual-reachability MST (Prim), single-linkage
//! dendrogram, condensed tree and excess-of-mass cluster selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterError, Points};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

/// Cluster nodes are labelled from `n_points` upward; the root is `n_points`.
/// Children smaller than that label are individual points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub edges: Vec<CondensedEdge>,
    pub stability: BTreeMap<usize, f64>,
    pub selected: Vec<usize>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn child_clusters(&self, cluster: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.parent == cluster && e.child >= self.n_points).map(|e| e.child).collect()
    }
}

#[derive(Debug, Clone)]
pub struct HdbscanResult {
    /// `-1` for noise, otherwise `0..num_clusters` ordered by condensed label.
    pub labels: Vec<i64>,
    pub num_clusters: usize,
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub tree: CondensedTree,
}

fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(1e-300)
}

/// Distance to the `min_samples`-th nearest point, counting the point itself
/// (so `min_samples = 1` gives 0). Clamped to the farthest point when
/// `min_samples > n`.
pub fn core_distances(points: Points<'_>, min_samples: usize) -> Vec<f64> {
    let n = points.len();
    let k = min_samples.clamp(1, n) - 1;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { points.dist(i, j) }).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k, f64::total_cmp);
            *kth
        })
        .collect()
}

pub fn mutual_reachability(points: Points<'_>, core: &[f64], a: usize, b: usize) -> f64 {
    points.dist(a, b).max(core[a]).max(core[b])
}

/// Prim's algorithm on the complete mutual-reachability graph. Distances are
/// computed on the fly so memory stays O(n). Ties pick the lowest index.
pub fn mutual_reachability_mst(points: Points<'_>, core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| (j, mutual_reachability(points, core, current, j)))
            .collect();
        for (j, d) in updates {
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge { a: from[next], b: next, weight: best[next] });
        current = next;
    }
    edges
}

struct Dendrogram {
    n: usize,
    /// Row `k` describes node `n + k`: (left, right, distance, size).
    merges: Vec<(usize, usize, f64, usize)>,
}

impl Dendrogram {
    fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].3
        }
    }

    fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                let (l, r, _, _) = self.merges[x - self.n];
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn single_linkage(n: usize, mst: &[MstEdge]) -> Dendrogram {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight));
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut sizes = vec![1usize; 2 * n - 1];
    for (k, e) in edges.iter().enumerate() {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        let node = n + k;
        let size = sizes[ra] + sizes[rb];
        merges.push((ra, rb, e.weight, size));
        sizes[node] = size;
        parent[ra] = node;
        parent[rb] = node;
    }
    Dendrogram { n, merges }
}

fn condense(dendro: &Dendrogram, min_cluster_size: usize) -> Vec<CondensedEdge> {
    let n = dendro.n;
    let root = 2 * n - 2;
    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut ignore = vec![false; 2 * n - 1];
    let mut edges = Vec::new();

    let mut order = vec![root];
    let mut head = 0;
    while head < order.len() {
        let node = order[head];
        head += 1;
        if node >= n {
            let (l, r, _, _) = dendro.merges[node - n];
            order.push(l);
            order.push(r);
        }
    }

    let drop_subtree = |sub: usize, parent: usize, lambda: f64, edges: &mut Vec<CondensedEdge>, ignore: &mut [bool]| {
        for p in dendro.leaves(sub) {
            edges.push(CondensedEdge { parent, child: p, lambda, child_size: 1 });
        }
        let mut stack = vec![sub];
        while let Some(x) = stack.pop() {
            ignore[x] = true;
            if x >= n {
                let (l, r, _, _) = dendro.merges[x - n];
                stack.push(l);
                stack.push(r);
            }
        }
    };

    for &node in &order {
        if ignore[node] || node < n {
            continue;
        }
        let (l, r, dist, _) = dendro.merges[node - n];
        let lambda = lambda_of(dist);
        let (ls, rs) = (dendro.size(l), dendro.size(r));
        let parent = relabel[node];
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(l, ls), (r, rs)] {
                    relabel[child] = next_label;
                    edges.push(CondensedEdge { parent, child: next_label, lambda, child_size: size });
                    next_label += 1;
                }
            }
            (false, false) => {
                drop_subtree(l, parent, lambda, &mut edges, &mut ignore);
                drop_subtree(r, parent, lambda, &mut edges, &mut ignore);
            }
            (false, true) => {
                relabel[r] = parent;
                drop_subtree(l, parent, lambda, &mut edges, &mut ignore);
            }
            (true, false) => {
                relabel[l] = parent;
                drop_subtree(r, parent, lambda, &mut edges, &mut ignore);
            }
        }
    }
    edges
}

fn stabilities(n: usize, edges: &[CondensedEdge]) -> BTreeMap<usize, f64> {
    let mut birth: BTreeMap<usize, f64> = BTreeMap::new();
    birth.insert(n, 0.0);
    for e in edges.iter().filter(|e| e.child >= n) {
        birth.insert(e.child, e.lambda);
    }
    let mut stability: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for e in edges {
        *stability.get_mut(&e.parent).expect("parent is a cluster") +=
            (e.lambda - birth[&e.parent]) * e.child_size as f64;
    }
    stability
}

/// Excess-of-mass selection. A cluster is kept when its own stability is
/// strictly greater than the best achievable from its descendants. The root
/// is only a candidate when it never splits.
fn select_clusters(tree: &CondensedTree) -> Vec<usize> {
    let n = tree.n_points;
    let children: BTreeMap<usize, Vec<usize>> = tree.stability.keys().map(|&c| (c, tree.child_clusters(c))).collect();
    let root_candidate = children[&n].is_empty();
    let mut subtree = BTreeMap::new();
    let mut selected = BTreeMap::new();
    for (&c, &stab) in tree.stability.iter().rev() {
        if c == n && !root_candidate {
            continue;
        }
        let child_sum: f64 = children[&c].iter().map(|k| subtree[k]).sum();
        if stab > child_sum {
            selected.insert(c, true);
            subtree.insert(c, stab);
            let mut stack = children[&c].clone();
            while let Some(k) = stack.pop() {
                selected.insert(k, false);
                stack.extend(children[&k].iter().copied());
            }
        } else {
            subtree.insert(c, child_sum);
        }
    }
    selected.into_iter().filter(|&(_, s)| s).map(|(c, _)| c).collect()
}

pub fn hdbscan_fit(
    points: Points<'_>,
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<HdbscanResult, ClusterError> {
    let n = points.len();
    if min_cluster_size < 2 {
        return Err(ClusterError::InvalidParams("min_cluster_size must be at least 2".into()));
    }
    if min_samples < 1 {
        return Err(ClusterError::InvalidParams("min_samples must be at least 1".into()));
    }
    if n < min_cluster_size {
        return Err(ClusterError::TooFewRows { need: min_cluster_size, got: n });
    }
    let core = core_distances(points, min_samples);
    let mst = mutual_reachability_mst(points, &core);
    let dendro = single_linkage(n, &mst);
    let edges = condense(&dendro, min_cluster_size);
    let stability = stabilities(n, &edges);
    let mut tree = CondensedTree { n_points: n, edges, stability, selected: Vec::new() };
    tree.selected = select_clusters(&tree);

    let mut parent_of = BTreeMap::new();
    let mut point_parent = vec![n; n];
    for e in &tree.edges {
        if e.child >= n {
            parent_of.insert(e.child, e.parent);
        } else {
            point_parent[e.child] = e.parent;
        }
    }
    let label_of: BTreeMap<usize, i64> = tree.selected.iter().enumerate().map(|(i, &c)| (c, i as i64)).collect();
    let labels = point_parent
        .iter()
        .map(|&start| {
            let mut c = start;
            loop {
                if let Some(&l) = label_of.get(&c) {
                    return l;
                }
                match parent_of.get(&c) {
                    Some(&p) => c = p,
                    None => return -1,
                }
            }
        })
        .collect();
    Ok(HdbscanResult { labels, num_clusters: tree.selected.len(), core_distances: core, mst, tree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn mst_weight(edges: &[MstEdge]) -> f64 {
        edges.iter().map(|e| e.weight).sum()
    }

    #[test]
    fn three_point_line() {
        let data = [0.0, 1.0, 3.0];
        let pts = Points::new(&data, 1);
        let core = core_distances(pts, 2);
        assert_eq!(core, vec![1.0, 1.0, 2.0]);
        let mst = mutual_reachability_mst(pts, &core);
        assert_eq!(mst.len(), 2);
        assert_eq!(mst_weight(&mst), 3.0);
    }

    /// Minimum over every spanning tree, enumerated via Prüfer sequences.
    fn brute_force_mst_weight(w: &[Vec<f64>]) -> f64 {
        let n = w.len();
        if n == 2 {
            return w[0][1];
        }
        let total = n.pow((n - 2) as u32);
        let mut best = f64::INFINITY;
        for code in 0..total {
            let mut seq = Vec::new();
            let mut c = code;
            for _ in 0..n - 2 {
                seq.push(c % n);
                c /= n;
            }
            let mut degree = vec![1usize; n];
            seq.iter().for_each(|&s| degree[s] += 1);
            let mut sum = 0.0;
            for &s in &seq {
                let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
                sum += w[leaf][s];
                degree[leaf] -= 1;
                degree[s] -= 1;
            }
            let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
            sum += w[rest[0]][rest[1]];
            best = best.min(sum);
        }
        best
    }

    #[test]
    fn mst_matches_exhaustive_search() {
        let mut rng = SeededRng::new(11);
        for n in 2..=7 {
            for min_samples in [1, 2, 3] {
                let data: Vec<f64> = (0..n * 2).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
                let pts = Points::new(&data, 2);
                let core = core_distances(pts, min_samples);
                let w: Vec<Vec<f64>> =
                    (0..n).map(|i| (0..n).map(|j| mutual_reachability(pts, &core, i, j)).collect()).collect();
                let mst = mutual_reachability_mst(pts, &core);
                assert_eq!(mst.len(), n - 1);
                let expect = brute_force_mst_weight(&w);
                assert!((mst_weight(&mst) - expect).abs() < 1e-12, "n={n}");
            }
        }
    }

    fn blob(rng: &mut SeededRng, cx: f64, cy: f64, n: usize, spread: f64, out: &mut Vec<f64>) {
        for _ in 0..n {
            out.push(cx + spread * rng.normal());
            out.push(cy + spread * rng.normal());
        }
    }

    #[test]
    fn separated_blobs_and_scattered_noise() {
        let mut rng = SeededRng::new(3);
        let mut data = Vec::new();
        blob(&mut rng, 0.0, 0.0, 40, 0.3, &mut data);
        blob(&mut rng, 20.0, 0.0, 40, 0.3, &mut data);
        blob(&mut rng, 0.0, 20.0, 40, 0.3, &mut data);
        let noise = [(60.0, 60.0), (-40.0, -40.0), (60.0, -40.0), (-40.0, 60.0), (10.0, 60.0)];
        for (x, y) in noise {
            data.push(x);
            data.push(y);
        }
        let res = hdbscan_fit(Points::new(&data, 2), 10, 10).unwrap();
        assert_eq!(res.num_clusters, 3);
        for b in 0..3 {
            let first = res.labels[b * 40];
            assert!(first >= 0);
            assert!(res.labels[b * 40..(b + 1) * 40].iter().all(|&l| l == first));
        }
        assert!(res.labels[120..].iter().all(|&l| l == -1));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let data = vec![0.5; 15 * 3];
        let res = hdbscan_fit(Points::new(&data, 3), 15, 15).unwrap();
        assert_eq!(res.num_clusters, 1);
        assert!(res.labels.iter().all(|&l| l == 0));
        assert!(res.core_distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn condensed_tree_sizes_are_consistent() {
        let mut rng = SeededRng::new(5);
        let mut data = Vec::new();
        blob(&mut rng, 0.0, 0.0, 30, 1.0, &mut data);
        blob(&mut rng, 6.0, 0.0, 30, 1.0, &mut data);
        let res = hdbscan_fit(Points::new(&data, 2), 5, 5).unwrap();
        let tree = &res.tree;
        // Every point falls out exactly once.
        let mut seen = vec![0; 60];
        for e in tree.edges.iter().filter(|e| e.child < 60) {
            seen[e.child] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        // A cluster's size equals the sizes of the edges leaving it.
        for &c in tree.stability.keys() {
            let out: usize = tree.edges.iter().filter(|e| e.parent == c).map(|e| e.child_size).sum();
            let size = if c == tree.root() { 60 } else { tree.edges.iter().find(|e| e.child == c).unwrap().child_size };
            assert_eq!(out, size);
        }
        assert!(tree.stability.values().all(|&s| s >= 0.0));
    }

    #[test]
    fn invalid_params() {
        let data = [0.0, 1.0];
        assert!(hdbscan_fit(Points::new(&data, 1), 1, 1).is_err());
        assert!(matches!(hdbscan_fit(Points::new(&data, 1), 3, 3), Err(ClusterError::TooFewRows { .. })));
    }
}
