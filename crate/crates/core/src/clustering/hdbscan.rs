use std::collections::VecDeque;

use super::Label;
use crate::Scalar;

fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

/// Distance from each point to its `min_samples`-th nearest neighbour,
/// counting the point itself as the first neighbour.
pub fn core_distances<T: Scalar>(points: &[Vec<T>], min_samples: usize) -> Vec<T> {
    let n = points.len();
    let k = min_samples.clamp(1, n.max(1));
    points
        .iter()
        .map(|p| {
            let mut d: Vec<T> = points.iter().map(|q| euclidean(p, q)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            d[k - 1]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Edge<T> {
    a: usize,
    b: usize,
    w: T,
}

/// Prim's algorithm over the complete mutual-reachability graph. Ties pick
/// the lowest vertex index.
fn mutual_reachability_mst<T: Scalar>(points: &[Vec<T>], core: &[T]) -> Vec<Edge<T>> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(&points[current], &points[j]).max(core[current]).max(core[j]);
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
        edges.push(Edge { a: from[next], b: next, w: best[next] });
        current = next;
    }
    edges.sort_by(|x, y| {
        x.w.partial_cmp(&y.w)
            .expect("finite weights")
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    edges
}

/// Internal node `n + i` of the single-linkage dendrogram.
struct Merge<T> {
    left: usize,
    right: usize,
    distance: T,
    size: usize,
}

fn single_linkage<T: Scalar>(n: usize, edges: &[Edge<T>]) -> Vec<Merge<T>> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let l = find(&mut parent, e.a);
        let r = find(&mut parent, e.b);
        let node = n + i;
        let s = size[l] + size[r];
        parent[l] = node;
        parent[r] = node;
        size[node] = s;
        merges.push(Merge { left: l, right: r, distance: e.w, size: s });
    }
    merges
}

/// A row of the condensed tree: `child` is a point index (`< n`) or a
/// cluster id (`>= n`); the root cluster is `n`.
#[derive(Debug, Clone, Copy)]
struct Condensed<T> {
    parent: usize,
    child: usize,
    lambda: T,
    size: usize,
}

fn condense<T: Scalar>(n: usize, merges: &[Merge<T>], min_cluster_size: usize) -> Vec<Condensed<T>> {
    let root = 2 * n - 2;
    let node_size = |x: usize| if x < n { 1 } else { merges[x - n].size };
    let leaves_under = |x: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([x]);
        while let Some(y) = queue.pop_front() {
            if y < n {
                out.push(y);
            } else {
                queue.push_back(merges[y - n].left);
                queue.push_back(merges[y - n].right);
            }
        }
        out
    };
    let mut relabel = vec![0usize; 2 * n];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut rows = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = &merges[node - n];
        let lambda = if m.distance > T::zero() { T::one() / m.distance } else { T::infinity() };
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let parent = relabel[node];
        let spill = |child: usize, rows: &mut Vec<Condensed<T>>| {
            for p in leaves_under(child) {
                rows.push(Condensed { parent, child: p, lambda, size: 1 });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    relabel[child] = next_label;
                    rows.push(Condensed { parent, child: next_label, lambda, size });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                spill(m.left, &mut rows);
                spill(m.right, &mut rows);
            }
            (true, false) => {
                relabel[m.left] = parent;
                queue.push_back(m.left);
                spill(m.right, &mut rows);
            }
            (false, true) => {
                relabel[m.right] = parent;
                queue.push_back(m.right);
                spill(m.left, &mut rows);
            }
        }
    }
    rows
}

fn cluster_count<T>(n: usize, rows: &[Condensed<T>]) -> usize {
    rows.iter().map(|r| r.parent.max(r.child)).filter(|&c| c >= n).max().map_or(1, |m| m - n + 1)
}

/// Excess-of-mass selection. The root is never selected.
fn select_clusters<T: Scalar>(n: usize, rows: &[Condensed<T>]) -> Vec<usize> {
    let n_clusters = cluster_count(n, rows);
    let mut birth = vec![T::zero(); n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for r in rows.iter().filter(|r| r.child >= n) {
        birth[r.child - n] = r.lambda;
        children[r.parent - n].push(r.child - n);
    }
    let mut stability = vec![T::zero(); n_clusters];
    for r in rows {
        let c = r.parent - n;
        let size = T::from_usize(r.size).expect("usize fits");
        stability[c] = stability[c] + (r.lambda - birth[c]) * size;
    }
    let mut selected = vec![true; n_clusters];
    selected[0] = false;
    for c in (1..n_clusters).rev() {
        let subtree: T = children[c].iter().map(|&k| stability[k]).sum();
        if subtree > stability[c] {
            selected[c] = false;
            stability[c] = subtree;
        } else {
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(children[k].iter().copied());
            }
        }
    }
    (1..n_clusters).filter(|&c| selected[c]).collect()
}

/// Density-based clustering of `points` (HDBSCAN with excess-of-mass
/// selection). Cluster labels are numbered `0..K` in order of the selected
/// clusters' position in the condensed tree.
pub fn hdbscan<T: Scalar>(points: &[Vec<T>], min_cluster_size: usize, min_samples: usize) -> Vec<Label> {
    let n = points.len();
    if n < 2 || n < min_cluster_size {
        return vec![Label::Noise; n];
    }
    let core = core_distances(points, min_samples);
    let edges = mutual_reachability_mst(points, &core);
    let merges = single_linkage(n, &edges);
    let rows = condense(n, &merges, min_cluster_size.max(2));
    let selected = select_clusters(n, &rows);

    let n_clusters = cluster_count(n, rows.as_slice());
    let mut up = vec![usize::MAX; n_clusters];
    for r in rows.iter().filter(|r| r.child >= n) {
        up[r.child - n] = r.parent - n;
    }
    let mut label_of_cluster = vec![None; n_clusters];
    for (k, &c) in selected.iter().enumerate() {
        label_of_cluster[c] = Some(k as u32);
    }
    let mut labels = vec![Label::Noise; n];
    for r in rows.iter().filter(|r| r.child < n) {
        let mut c = r.parent - n;
        while c != 0 && label_of_cluster[c].is_none() {
            c = up[c];
        }
        labels[r.child] = label_of_cluster[c].map_or(Label::Noise, Label::Cluster);
    }
    labels
}
