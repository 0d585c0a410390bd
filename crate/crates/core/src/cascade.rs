//! Diffusion cascades on preferential-attachment graphs: graph generation,
//! independent-cascade spread, partial masking, Laplacian positional
//! encodings and the rumor-center source estimator.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::bernoulli;

pub const SENTINEL: i32 = -1;
pub const DEFAULT_NODES: usize = 1000;
pub const DEFAULT_EDGES_PER_NODE: usize = 5;
pub const DEFAULT_INFECTION_PROB: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: u32 = 15;
pub const DEFAULT_MASK_FRACTION: f64 = 0.2;
pub const DEFAULT_PE_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub model: String,
    /// How the attachment process starts and samples targets.
    pub variant: String,
    pub m: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetGraph {
    pub adjacency: Vec<Vec<u32>>,
    pub meta: GraphMeta,
}

impl NetGraph {
    /// Builds an undirected graph from an edge list, dropping self-loops and
    /// duplicate edges.
    pub fn from_edges(n: usize, edges: &[(u32, u32)], meta: GraphMeta) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Parameter(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u != v {
                adjacency[u as usize].push(v);
                adjacency[v as usize].push(u);
            }
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Ok(NetGraph { adjacency, meta })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v as usize > u).map(move |&v| (u as u32, v)))
    }

    /// Connected components as a per-node label and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.len()];
        let mut count = 0;
        for start in 0..self.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if label[v as usize] == usize::MAX {
                        label[v as usize] = count;
                        queue.push_back(v as usize);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn bfs_distances(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v as usize].is_none() {
                    dist[v as usize] = Some(d + 1);
                    queue.push_back(v as usize);
                }
            }
        }
        dist
    }

    /// One `u v` line per edge with `u < v`, ascending.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list(text: &str, meta: GraphMeta) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<u32>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => {
                    n = n.max(u.max(v) as usize + 1);
                    edges.push((u, v));
                }
                _ => return Err(Error::Schema(format!("edge list line {}: `{line}`", line_no + 1))),
            }
        }
        Self::from_edges(n, &edges, meta)
    }
}

/// Preferential attachment: a clique on the first `m` nodes, then each new
/// node links to `m` distinct existing nodes drawn with probability
/// proportional to degree (duplicates redrawn). Has `C(m,2) + m(n-m)` edges.
pub fn generate_ba_graph<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<NetGraph> {
    if m == 0 || n <= m {
        return Err(Error::Parameter(format!("preferential attachment needs n > m >= 1 (n={n}, m={m})")));
    }
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // Every edge endpoint once: sampling an entry is degree-proportional.
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m as u32 {
        for v in u + 1..m as u32 {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut targets: Vec<u32> = Vec::with_capacity(m);
    for new in m as u32..n as u32 {
        targets.clear();
        if endpoints.is_empty() {
            // m = 1: the seed node has no edges yet.
            targets.push(0);
        }
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, new));
            endpoints.extend([t, new]);
        }
    }
    NetGraph::from_edges(
        n,
        &edges,
        GraphMeta {
            model: "barabasi_albert".into(),
            variant: "clique start on m nodes; m distinct degree-proportional targets per new node".into(),
            m,
            seed: None,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub source: u32,
    /// Step at which each node was infected; `SENTINEL` for never infected or
    /// masked.
    pub infection_time: Vec<i32>,
    /// False only for infected nodes whose time was hidden.
    pub observed_mask: Vec<bool>,
    pub p: f64,
    pub max_steps: u32,
}

impl Cascade {
    pub fn infected_observed(&self) -> Vec<u32> {
        (0..self.infection_time.len() as u32)
            .filter(|&v| self.infection_time[v as usize] != SENTINEL)
            .collect()
    }

    pub fn infected_count(&self) -> usize {
        self.infection_time.iter().zip(&self.observed_mask).filter(|(&t, &o)| t != SENTINEL || !o).count()
    }

    pub fn source_masked(&self) -> bool {
        !self.observed_mask[self.source as usize]
    }
}

/// Discrete-time independent cascade: nodes activated at step `t` each get a
/// single Bernoulli(p) attempt on every still-susceptible neighbour, which if
/// successful activates it at `t + 1`. Stops at `max_steps` or quiescence.
pub fn simulate_ic<R: Rng + ?Sized>(g: &NetGraph, source: u32, p: f64, max_steps: u32, rng: &mut R) -> Result<Cascade> {
    if source as usize >= g.len() {
        return Err(Error::Parameter(format!("source {source} not in graph of {} nodes", g.len())));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("infection probability {p} outside [0, 1]")));
    }
    let mut time = vec![SENTINEL; g.len()];
    time[source as usize] = 0;
    let mut frontier = vec![source];
    let mut next = Vec::new();
    let mut step = 0u32;
    while !frontier.is_empty() && step < max_steps {
        step += 1;
        for &u in &frontier {
            for &v in &g.adjacency[u as usize] {
                if time[v as usize] == SENTINEL && bernoulli(rng, p) {
                    time[v as usize] = step as i32;
                    next.push(v);
                }
            }
        }
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
    }
    Ok(Cascade {
        source,
        observed_mask: vec![true; g.len()],
        infection_time: time,
        p,
        max_steps,
    })
}

/// Hides the infection time of a uniformly chosen subset of infected nodes
/// (source included in the draw). The subset size is `frac * |infected|`
/// rounded stochastically (floor, plus one with probability equal to the
/// fractional part), so every infected node, the source in particular, is
/// hidden with probability exactly `frac`.
pub fn mask_cascade<R: Rng + ?Sized>(c: &Cascade, frac: f64, rng: &mut R) -> Result<Cascade> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::Parameter(format!("mask fraction {frac} outside [0, 1]")));
    }
    let mut infected = c.infected_observed();
    let exact = frac * infected.len() as f64;
    let whole = exact.floor();
    let count = whole as usize + usize::from(bernoulli(rng, exact - whole));
    // Partial Fisher-Yates: the first `count` entries form a uniform subset.
    for i in 0..count {
        let j = rng.random_range(i..infected.len());
        infected.swap(i, j);
    }
    let mut out = c.clone();
    for &v in &infected[..count] {
        out.infection_time[v as usize] = SENTINEL;
        out.observed_mask[v as usize] = false;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapPEFeatures {
    /// Row-major `n x k`; column `j` is the eigenvector of the `j`-th smallest
    /// nonzero eigenvalue.
    pub values: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

impl LapPEFeatures {
    pub fn get(&self, node: usize, j: usize) -> f64 {
        self.values[node * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Eigenvectors of `L = D - A` for the `k` smallest nonzero eigenvalues, each
/// signed so its first entry with magnitude above 1e-10 is positive.
pub fn laplacian_pe(g: &NetGraph, k: usize) -> Result<LapPEFeatures> {
    let n = g.len();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("need 0 < k < n (k={k}, n={n})")));
    }
    let (_, components) = g.components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for (u, ns) in g.adjacency.iter().enumerate() {
        lap[(u, u)] = ns.len() as f64;
        for &v in ns {
            lap[(u, v as usize)] = -1.0;
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    // The first entry is the null space of a connected graph.
    let chosen = &order[1..=k];
    let mut values = vec![0.0; n * k];
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &col) in chosen.iter().enumerate() {
        let v = eig.eigenvectors.column(col);
        let sign = v.iter().find(|x| x.abs() > 1e-10).map_or(1.0, |x| x.signum());
        for i in 0..n {
            values[i * k + j] = sign * v[i];
        }
        eigenvalues.push(eig.eigenvalues[col]);
    }
    Ok(LapPEFeatures {
        values,
        eigenvalues,
        n,
        k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RumorRanking {
    /// `(node, log rumor centrality)`, best first, ties by ascending id.
    pub ranked: Vec<(u32, f64)>,
    /// True when the infected set was not connected and only its largest
    /// component was ranked.
    pub used_largest_component: bool,
}

impl RumorRanking {
    pub fn rank_of(&self, node: u32) -> Option<usize> {
        self.ranked.iter().position(|&(v, _)| v == node)
    }
}

/// Rumor centrality of every node in the infected subgraph,
/// `log(n!) - sum_u log T_u`, where `T_u` is the size of `u`'s subtree when the
/// subgraph is laid out breadth-first from the candidate. On a tree this is
/// the exact formula. Where a node has several parents one level up, its
/// subtree is split equally between them, which keeps scores independent of
/// node labels.
pub fn rumor_center(g: &NetGraph, infected: &[u32]) -> Result<RumorRanking> {
    if infected.is_empty() {
        return Err(Error::Parameter("rumor center needs at least one infected node".into()));
    }
    let mut local = vec![u32::MAX; g.len()];
    let mut nodes: Vec<u32> = infected.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    for (i, &v) in nodes.iter().enumerate() {
        if v as usize >= g.len() {
            return Err(Error::Parameter(format!("infected node {v} not in graph")));
        }
        local[v as usize] = i as u32;
    }
    let sub: Vec<Vec<u32>> = nodes
        .iter()
        .map(|&v| {
            g.adjacency[v as usize]
                .iter()
                .filter_map(|&w| (local[w as usize] != u32::MAX).then_some(local[w as usize]))
                .collect()
        })
        .collect();
    let sub_graph = NetGraph {
        adjacency: sub,
        meta: g.meta.clone(),
    };
    let (labels, count) = sub_graph.components();
    let keep: Vec<usize> = if count > 1 {
        let mut sizes = vec![0usize; count];
        for &l in &labels {
            sizes[l] += 1;
        }
        // Largest component; ties go to the one holding the smallest node id.
        let best = (0..count).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        (0..nodes.len()).filter(|&i| labels[i] == best).collect()
    } else {
        (0..nodes.len()).collect()
    };

    let size = keep.len();
    let log_n_fact: f64 = (1..=size).map(|i| (i as f64).ln()).sum();
    let mut ranked: Vec<(u32, f64)> = keep
        .iter()
        .map(|&root| (nodes[root], log_n_fact - bfs_log_subtree_sum(&sub_graph, root)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RumorRanking {
        ranked,
        used_largest_component: count > 1,
    })
}

/// `sum_u log T_u` over the breadth-first layering from `root`.
fn bfs_log_subtree_sum(g: &NetGraph, root: usize) -> f64 {
    let n = g.len();
    let mut dist = vec![u32::MAX; n];
    dist[root] = 0;
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &g.adjacency[u] {
            if dist[v as usize] == u32::MAX {
                dist[v as usize] = dist[u] + 1;
                queue.push_back(v as usize);
            }
        }
    }
    let mut subtree = vec![1.0f64; n];
    let mut total = 0.0;
    for &u in order.iter().rev() {
        total += subtree[u].ln();
        if u == root {
            continue;
        }
        let parents: Vec<usize> = g.adjacency[u]
            .iter()
            .map(|&w| w as usize)
            .filter(|&w| dist[w] + 1 == dist[u])
            .collect();
        let share = subtree[u] / parents.len() as f64;
        for p in parents {
            subtree[p] += share;
        }
    }
    total
}
