//! Undirected follow graph, homophilic preferential attachment and
//! network-level well-being measures.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::seq::index::sample_weighted;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub type UserId = usize;

/// Simple undirected graph over `0..n`. Neighbor lists are kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<UserId>>,
    edge_count: usize,
}

impl SocialGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    /// Builds a graph from an edge list; self-loops are rejected and
    /// duplicate edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (UserId, UserId)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                g.insert_unchecked(a, b);
            }
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, v: UserId) -> bool {
        v < self.adjacency.len()
    }

    fn check(&self, v: UserId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::NotFound(format!(
                "user {v} (graph has {} nodes)",
                self.node_count()
            )))
        }
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: UserId) -> &[UserId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: UserId) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: UserId, b: UserId) -> bool {
        self.contains(a) && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Adds the undirected edge `a–b`. Returns `false` when it already exists.
    pub fn add_edge(&mut self, a: UserId, b: UserId) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(Error::InvalidInput(format!("self-loop on user {a}")));
        }
        if self.has_edge(a, b) {
            return Ok(false);
        }
        self.insert_unchecked(a, b);
        Ok(true)
    }

    fn insert_unchecked(&mut self, a: UserId, b: UserId) {
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.adjacency[x];
            if let Err(pos) = list.binary_search(&y) {
                list.insert(pos, y);
            }
        }
        self.edge_count += 1;
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    /// Unweighted BFS distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: UserId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or_default();
            for &w in &self.adjacency[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Edge-list text: one `a b` pair per line, 0-based ids, `a < b`.
    pub fn to_edgelist(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    /// Parses the edge-list format. Node count is `n` if given, otherwise
    /// one more than the largest id seen.
    pub fn read_edgelist<R: Read>(reader: R, n: Option<usize>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io("<edgelist>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<UserId> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::InvalidInput(format!("edge list line {}: `{line}`", lineno + 1))
                })
            };
            let a = parse(parts.next())?;
            let b = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::InvalidInput(format!(
                    "edge list line {}: expected two ids",
                    lineno + 1
                )));
            }
            pairs.push((a, b));
        }
        let n = n.unwrap_or_else(|| pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
        Self::from_edges(n, pairs)
    }
}

/// Node attribute sidecar, `id,opinion,resilience`.
pub fn node_attributes_csv(opinions: &[f64], resilience: &[f64]) -> String {
    let mut out = String::from("id,opinion,resilience\n");
    for (id, (o, r)) in opinions.iter().zip(resilience).enumerate() {
        let _ = writeln!(out, "{id},{o},{r}");
    }
    out
}

fn check_opinions(opinions: &[f64], n: usize) -> Result<()> {
    if opinions.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} opinions, got {}",
            opinions.len()
        )));
    }
    if let Some((i, o)) = opinions
        .iter()
        .enumerate()
        .find(|(_, o)| !o.is_finite() || o.abs() > 1.0)
    {
        return Err(Error::InvalidInput(format!(
            "opinion of user {i} is {o}, must be finite and in [-1, 1]"
        )));
    }
    Ok(())
}

/// Attachment weight of an arriving node toward an existing node.
#[inline]
pub fn attachment_weight(delta: f64, bandwidth: f64) -> f64 {
    (-delta.abs() / bandwidth).exp()
}

/// Preferential attachment where the pull of an existing node depends on
/// opinion distance rather than degree.
///
/// Nodes `0..=m` form a clique. Each later node `i` links to `m` distinct
/// nodes among `0..i`, drawn without replacement with probability
/// proportional to `exp(-|o_i - o_j| / h)`.
pub fn generate_homophily_pa<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    opinions: &[f64],
    h: f64,
    rng: &mut R,
) -> Result<SocialGraph> {
    if m == 0 {
        return Err(Error::InvalidConfig("edges per arrival m must be >= 1".into()));
    }
    if n <= m {
        return Err(Error::InvalidConfig(format!(
            "node count n = {n} must exceed edges per arrival m = {m}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth h = {h} must be positive")));
    }
    check_opinions(opinions, n)?;

    let mut g = SocialGraph::complete(m + 1);
    g.adjacency.resize(n, Vec::new());
    for i in (m + 1)..n {
        let oi = opinions[i];
        let chosen = sample_weighted(rng, i, |j| attachment_weight(oi - opinions[j], h), m)
            .map_err(|e| Error::InvalidInput(format!("attachment weights: {e}")))?;
        let mut targets = chosen.into_vec();
        // Weights underflowing to zero can leave the sample short.
        if targets.len() < m {
            let have = targets.clone();
            targets.extend((0..i).filter(|j| !have.contains(j)).take(m - have.len()));
        }
        targets.sort_unstable();
        for j in targets {
            g.insert_unchecked(i, j);
        }
    }
    Ok(g)
}

/// Closed-form edge count of [`generate_homophily_pa`].
pub fn expected_pa_edges(n: usize, m: usize) -> usize {
    m * (m + 1) / 2 + m * (n - m - 1)
}

pub fn common_neighbors(g: &SocialGraph, a: UserId, b: UserId) -> Result<usize> {
    g.check(a)?;
    g.check(b)?;
    if a == b {
        return Err(Error::InvalidInput(format!("common neighbors of {a} with itself")));
    }
    Ok(sorted_intersection_len(g.neighbors(a), g.neighbors(b)))
}

pub(crate) fn sorted_intersection_len(xs: &[usize], ys: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < xs.len() && j < ys.len() {
        match xs[i].cmp(&ys[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Closeness of `v` within its connected component: `(k - 1) / Σ d(v, u)`.
pub fn closeness(g: &SocialGraph, v: UserId) -> Result<f64> {
    g.check(v)?;
    let (reached, total) = g
        .bfs_distances(v)
        .into_iter()
        .flatten()
        .fold((0usize, 0usize), |(k, s), d| (k + 1, s + d));
    if reached < 2 {
        return Err(Error::UndefinedMeasure(format!(
            "closeness of isolated user {v}"
        )));
    }
    Ok((reached - 1) as f64 / total as f64)
}

/// Closeness of every node; isolated nodes are `None`.
pub fn closeness_all(g: &SocialGraph, exec: Execution) -> Vec<Option<f64>> {
    par::map_indexed(g.node_count(), exec, |v| closeness(g, v).ok())
}

/// Gini coefficient of the degree sequence.
pub fn degree_gini(g: &SocialGraph) -> Result<f64> {
    let mut degrees = g.degrees();
    let n = degrees.len();
    let total: usize = degrees.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedMeasure("degree Gini of a graph without edges".into()));
    }
    degrees.sort_unstable();
    // Σ_{i,j} |d_i - d_j| = 2 Σ_i (2i - n + 1) d_(i) over the ascending order.
    let pair_sum: f64 = degrees
        .iter()
        .enumerate()
        .map(|(i, &d)| (2.0 * i as f64 - n as f64 + 1.0) * d as f64)
        .sum::<f64>()
        * 2.0;
    let mean = total as f64 / n as f64;
    Ok(pair_sum / (2.0 * (n * n) as f64 * mean))
}

/// `1 - mean |o_a - o_b| / 2` over edges.
pub fn homophily_index(g: &SocialGraph, opinions: &[f64]) -> Result<f64> {
    check_opinions(opinions, g.node_count())?;
    if g.edge_count() == 0 {
        return Err(Error::UndefinedMeasure("homophily of a graph without edges".into()));
    }
    let sum: f64 = g
        .edges()
        .map(|(a, b)| (opinions[a] - opinions[b]).abs() / 2.0)
        .sum();
    Ok(1.0 - sum / g.edge_count() as f64)
}

/// Closeness-weighted mean of per-user threat scores.
pub fn centrality_weighted_threat(
    g: &SocialGraph,
    per_user_threat: &[f64],
    exec: Execution,
) -> Result<f64> {
    if per_user_threat.len() != g.node_count() {
        return Err(Error::InvalidInput(format!(
            "expected {} threat scores, got {}",
            g.node_count(),
            per_user_threat.len()
        )));
    }
    if per_user_threat.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite threat score".into()));
    }
    weighted_by_closeness(&closeness_all(g, exec), per_user_threat)
}

fn weighted_by_closeness(closeness: &[Option<f64>], values: &[f64]) -> Result<f64> {
    let (num, den) = closeness
        .iter()
        .zip(values)
        .filter_map(|(c, t)| c.map(|c| (c * t, c)))
        .fold((0.0, 0.0), |(n, d), (ct, c)| (n + ct, d + c));
    if den == 0.0 {
        return Err(Error::UndefinedMeasure(
            "closeness undefined for every node".into(),
        ));
    }
    Ok(num / den)
}

/// Network-level summary. Undefined entries are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkMeasures {
    pub degree_gini: Option<f64>,
    pub closeness: Vec<Option<f64>>,
    pub homophily_index: Option<f64>,
    /// Aspect name → closeness-weighted threat.
    pub centrality_weighted_threat: Vec<(String, Option<f64>)>,
}

impl NetworkMeasures {
    pub fn compute(
        g: &SocialGraph,
        opinions: &[f64],
        threats: &[(String, Vec<f64>)],
        exec: Execution,
    ) -> Self {
        let closeness = closeness_all(g, exec);
        let centrality_weighted_threat = threats
            .iter()
            .map(|(name, t)| {
                let value = (t.len() == closeness.len())
                    .then(|| weighted_by_closeness(&closeness, t).ok())
                    .flatten();
                (name.clone(), value)
            })
            .collect();
        Self {
            degree_gini: degree_gini(g).ok(),
            homophily_index: homophily_index(g, opinions).ok(),
            closeness,
            centrality_weighted_threat,
        }
    }
}
