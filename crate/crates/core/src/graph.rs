//! User–item bipartite graph and modularity clustering.
//!
//! Nodes are numbered users first (sorted by id), then items (sorted by id).
//! Modularity uses the bipartite null model `P_ij = k_i·d_j / E`:
//!
//! ```text
//! Q = (1/E) Σ_{user i, item j} (A_ij − k_i·d_j/E) · δ(c_i, c_j)
//!   = (1/E) Σ_c (e_c − K_c·D_c/E)
//! ```
//!
//! where `e_c` counts edges inside cluster `c` and `K_c`, `D_c` sum user and
//! item degrees in `c`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_jsonl, write_jsonl, BehaviorEvent, EmbeddingTable};
use crate::linalg::dot;
use crate::{Error, Result};

/// Gains at or below this are not improvements.
const GAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    users: Vec<String>,
    items: Vec<String>,
    user_adj: Vec<Vec<usize>>,
    item_adj: Vec<Vec<usize>>,
    edges: usize,
}

impl BipartiteGraph {
    /// One unweighted edge per distinct `(user, item)` pair.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let set: BTreeSet<(&str, &str)> = pairs.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Validation("cannot build a graph from no events".into()));
        }
        let users: Vec<String> = set
            .iter()
            .map(|p| p.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let items: Vec<String> = set
            .iter()
            .map(|p| p.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let uidx: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let iidx: HashMap<&str, usize> = items.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut user_adj = vec![Vec::new(); users.len()];
        let mut item_adj = vec![Vec::new(); items.len()];
        for (u, i) in &set {
            let (u, i) = (uidx[u], iidx[i]);
            user_adj[u].push(i);
            item_adj[i].push(u);
        }
        item_adj.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self {
            users,
            items,
            user_adj,
            item_adj,
            edges: set.len(),
        })
    }

    pub fn from_events(events: &[BehaviorEvent]) -> Result<Self> {
        Self::from_pairs(events.iter().map(|e| (e.user_id.as_str(), e.item_id.as_str())))
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn num_nodes(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_adj[u].len()
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_adj[i].len()
    }

    /// Item indices adjacent to user `u`, ascending.
    pub fn user_neighbors(&self, u: usize) -> &[usize] {
        &self.user_adj[u]
    }

    /// User indices adjacent to item `i`, ascending.
    pub fn item_neighbors(&self, i: usize) -> &[usize] {
        &self.item_adj[i]
    }

    pub fn item_node(&self, i: usize) -> usize {
        self.users.len() + i
    }
}

pub fn build_graph(events: &[BehaviorEvent]) -> Result<BipartiteGraph> {
    BipartiteGraph::from_events(events)
}

/// Cluster label per node, dense in `[0, count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    num_users: usize,
    count: usize,
}

impl ClusterAssignment {
    pub fn singletons(g: &BipartiteGraph) -> Self {
        Self::from_labels(g, (0..g.num_nodes()).collect())
    }

    /// Relabels densely: clusters are numbered by first appearance scanning
    /// items, then users, so clusters holding items come first.
    pub fn from_labels(g: &BipartiteGraph, labels: Vec<usize>) -> Self {
        assert_eq!(labels.len(), g.num_nodes(), "one label per node");
        let nu = g.users.len();
        let mut map = HashMap::new();
        let order = (nu..labels.len()).chain(0..nu);
        for n in order {
            let next = map.len();
            map.entry(labels[n]).or_insert(next);
        }
        let count = map.len();
        Self {
            labels: labels.iter().map(|l| map[l]).collect(),
            num_users: nu,
            count,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn node_label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn user_cluster(&self, u: usize) -> usize {
        self.labels[u]
    }

    pub fn item_cluster(&self, i: usize) -> usize {
        self.labels[self.num_users + i]
    }

    /// Number of distinct clusters that contain at least one item.
    pub fn item_cluster_count(&self) -> usize {
        self.labels[self.num_users..].iter().collect::<BTreeSet<_>>().len()
    }
}

pub fn modularity(g: &BipartiteGraph, c: &ClusterAssignment) -> Result<f64> {
    if g.edges == 0 {
        return Err(Error::Numerical("modularity undefined for E = 0".into()));
    }
    let e = g.edges as f64;
    let mut inside = vec![0.0; c.count];
    let mut k = vec![0.0; c.count];
    let mut d = vec![0.0; c.count];
    for (u, adj) in g.user_adj.iter().enumerate() {
        let cu = c.user_cluster(u);
        k[cu] += adj.len() as f64;
        inside[cu] += adj.iter().filter(|&&i| c.item_cluster(i) == cu).count() as f64;
    }
    for (i, adj) in g.item_adj.iter().enumerate() {
        d[c.item_cluster(i)] += adj.len() as f64;
    }
    let q: f64 = (0..c.count).map(|x| inside[x] - k[x] * d[x] / e).sum();
    Ok(q / e)
}

/// One accepted local move, reported to [`louvain_traced`] observers.
#[derive(Debug, Clone, PartialEq)]
pub struct LouvainMove<'a> {
    /// Aggregation level; 0 moves single graph nodes.
    pub level: usize,
    pub pass: usize,
    /// Node of the current level's graph.
    pub node: usize,
    pub from: usize,
    pub to: usize,
    /// Modularity increase computed incrementally.
    pub gain: f64,
    /// Raw (not yet relabeled) cluster of every graph node after the move.
    pub labels: &'a [usize],
}

pub fn louvain(g: &BipartiteGraph, seed: u64, max_passes: usize) -> ClusterAssignment {
    louvain_traced(g, seed, max_passes, |_| {})
}

/// A level of the Louvain hierarchy: nodes carry user-side (`k`) and
/// item-side (`d`) degree mass and weighted links to other nodes.
struct Level {
    k: Vec<f64>,
    d: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Level {
    fn from_graph(g: &BipartiteGraph) -> Self {
        let nu = g.users.len();
        let n = g.num_nodes();
        let mut k = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut adj = vec![Vec::new(); n];
        for u in 0..nu {
            k[u] = g.user_degree(u) as f64;
            adj[u] = g.user_neighbors(u).iter().map(|&i| (nu + i, 1.0)).collect();
        }
        for i in 0..g.items.len() {
            d[nu + i] = g.item_degree(i) as f64;
            adj[nu + i] = g.item_neighbors(i).iter().map(|&u| (u, 1.0)).collect();
        }
        Self { k, d, adj }
    }

    fn len(&self) -> usize {
        self.k.len()
    }

    /// Collapses each cluster into one node; `labels` must be dense.
    fn aggregate(&self, labels: &[usize], count: usize) -> Self {
        let mut k = vec![0.0; count];
        let mut d = vec![0.0; count];
        let mut w: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        for v in 0..self.len() {
            let c = labels[v];
            k[c] += self.k[v];
            d[c] += self.d[v];
            for &(m, x) in &self.adj[v] {
                let cm = labels[m];
                if cm != c {
                    *w[c].entry(cm).or_insert(0.0) += x;
                }
            }
        }
        let adj = w.into_iter().map(|m| m.into_iter().collect()).collect();
        Self { k, d, adj }
    }
}

/// Louvain modularity maximization from singletons.
///
/// Each level scans its nodes in ascending id and moves a node to the
/// neighboring (or a fresh empty) cluster with the largest strictly positive
/// modularity gain; equal gains are broken by a `seed`-driven choice. A level
/// ends after a pass with no move or after `max_passes`; clusters are then
/// collapsed into nodes and the next level starts. Stops when a level makes
/// no move.
pub fn louvain_traced<F: FnMut(&LouvainMove<'_>)>(
    g: &BipartiteGraph,
    seed: u64,
    max_passes: usize,
    mut on_move: F,
) -> ClusterAssignment {
    let e = g.edges as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(g);
    // level node of every graph node
    let mut membership: Vec<usize> = (0..g.num_nodes()).collect();
    let mut node_labels = membership.clone();

    for depth in 0.. {
        let n = level.len();
        let mut labels: Vec<usize> = (0..n).collect();
        let mut size = vec![1usize; n];
        let mut k_sum = level.k.clone();
        let mut d_sum = level.d.clone();
        let mut empty: Vec<usize> = Vec::new();
        let mut links = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;

        for pass in 0..max_passes {
            let mut moved = false;
            for node in 0..n {
                let (ks, ds) = (level.k[node], level.d[node]);
                let from = labels[node];
                for &(m, w) in &level.adj[node] {
                    let c = labels[m];
                    if links[c] == 0.0 {
                        touched.push(c);
                    }
                    links[c] += w;
                }
                let links_from = links[from];
                let k_from = k_sum[from] - ks;
                let d_from = d_sum[from] - ds;
                let gain_to = |links_c: f64, k_c: f64, d_c: f64| {
                    (links_c - links_from) / e - (ks * (d_c - d_from) + ds * (k_c - k_from)) / (e * e)
                };

                touched.sort_unstable();
                let mut best = 0.0;
                let mut ties: Vec<(usize, f64)> = Vec::new();
                let mut consider = |c: usize, gain: f64| {
                    if gain <= GAIN_TOL {
                        return;
                    }
                    if ties.is_empty() || gain > best + GAIN_TOL {
                        best = gain;
                        ties.clear();
                        ties.push((c, gain));
                    } else if gain >= best - GAIN_TOL {
                        ties.push((c, gain));
                    }
                };
                for &c in touched.iter().filter(|&&c| c != from) {
                    consider(c, gain_to(links[c], k_sum[c], d_sum[c]));
                }
                if size[from] > 1 {
                    let fresh = *empty.last().expect("a non-singleton cluster leaves a free id");
                    consider(fresh, gain_to(0.0, 0.0, 0.0));
                }
                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();

                let Some(&(to, gain)) = ties.choose(&mut rng) else {
                    continue;
                };
                if empty.last() == Some(&to) {
                    empty.pop();
                }
                labels[node] = to;
                size[from] -= 1;
                size[to] += 1;
                k_sum[from] -= ks;
                k_sum[to] += ks;
                d_sum[from] -= ds;
                d_sum[to] += ds;
                if size[from] == 0 {
                    empty.push(from);
                }
                moved = true;
                for (nl, &m) in node_labels.iter_mut().zip(&membership) {
                    *nl = labels[m];
                }
                on_move(&LouvainMove {
                    level: depth,
                    pass,
                    node,
                    from,
                    to,
                    gain,
                    labels: &node_labels,
                });
            }
            any_move |= moved;
            if !moved {
                break;
            }
        }
        if !any_move {
            break;
        }
        let mut dense = vec![usize::MAX; n];
        let mut count = 0;
        for &l in &labels {
            if dense[l] == usize::MAX {
                dense[l] = count;
                count += 1;
            }
        }
        let labels: Vec<usize> = labels.iter().map(|&l| dense[l]).collect();
        level = level.aggregate(&labels, count);
        for m in membership.iter_mut() {
            *m = labels[*m];
        }
        if count == 1 {
            break;
        }
    }
    ClusterAssignment::from_labels(g, membership)
}

/// Mean item embedding per item-bearing cluster, keyed by cluster id.
pub fn cluster_centroids(
    g: &BipartiteGraph,
    c: &ClusterAssignment,
    table: &EmbeddingTable,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut acc: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, id) in g.items.iter().enumerate() {
        let emb = table
            .embedding(id)
            .ok_or_else(|| Error::Validation(format!("item '{id}' has no embedding")))?;
        let entry = acc
            .entry(c.item_cluster(i))
            .or_insert_with(|| (vec![0.0; emb.len()], 0));
        entry.0.iter_mut().zip(emb).for_each(|(a, x)| *a += x);
        entry.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(id, (sum, n))| (id, sum.into_iter().map(|x| x / n as f64).collect()))
        .collect())
}

/// Nearest centroid by dot product; ties go to the lowest cluster id.
pub fn assign_new_items(embeddings: &[&[f64]], centroids: &BTreeMap<usize, Vec<f64>>) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::Validation("no clusters to assign items to".into()));
    }
    embeddings
        .iter()
        .map(|e| {
            let mut best: Option<(usize, f64)> = None;
            for (&id, c) in centroids {
                if c.len() != e.len() {
                    return Err(Error::shape(format!(
                        "item dim {} vs centroid dim {}",
                        e.len(),
                        c.len()
                    )));
                }
                let s = dot(e, c);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((id, s));
                }
            }
            Ok(best.unwrap().0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemClusterLine {
    pub item_id: String,
    pub cluster_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserClusterLine {
    pub user_id: String,
    pub cluster_id: u32,
}

/// Item cluster file, ordered by `item_id`.
pub fn write_item_clusters(path: &Path, g: &BipartiteGraph, c: &ClusterAssignment) -> Result<()> {
    let lines: Vec<ItemClusterLine> = g
        .items
        .iter()
        .enumerate()
        .map(|(i, id)| ItemClusterLine {
            item_id: id.clone(),
            cluster_id: c.item_cluster(i) as u32,
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn write_user_clusters(path: &Path, g: &BipartiteGraph, c: &ClusterAssignment) -> Result<()> {
    let lines: Vec<UserClusterLine> = g
        .users
        .iter()
        .enumerate()
        .map(|(u, id)| UserClusterLine {
            user_id: id.clone(),
            cluster_id: c.user_cluster(u) as u32,
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn read_item_clusters(path: &Path) -> Result<BTreeMap<String, u32>> {
    Ok(read_jsonl::<ItemClusterLine>(path)?
        .into_iter()
        .map(|(_, l)| (l.item_id, l.cluster_id))
        .collect())
}
