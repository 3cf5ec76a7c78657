//! Weighted undirected graphs, random generation and switching schedules.
//!
//! An edge is stored once as `(i, j, w)` with `i < j`, so `W_ij = W_ji` holds
//! structurally.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    Unit,
    /// Uniform on `(0, 1]`.
    UniformRandom,
}

impl WeightedGraph {
    /// Builds a graph from unordered edges. Endpoints are normalized to `i < j`
    /// and the edge list is sorted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        for (a, b, w) in edges {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if i == j || j >= n || !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::InvalidEdge { i: a, j: b, w });
            }
            if map.insert((i, j), w).is_some() {
                return Err(GraphError::DuplicateEdge(i, j));
            }
        }
        Ok(WeightedGraph {
            n,
            edges: map.into_iter().map(|((i, j), w)| Edge { i, j, w }).collect(),
        })
    }

    pub fn empty(n: usize) -> Self {
        WeightedGraph { n, edges: Vec::new() }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| Edge { i, j, w: 1.0 }))
            .collect();
        WeightedGraph { n, edges }
    }

    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|j| Edge { i: j - 1, j, w: 1.0 }).collect();
        WeightedGraph { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .ok()
            .map(|k| self.edges[k].w)
    }

    /// Dense symmetric adjacency matrix (row-major, `n * n`).
    pub fn adjacency(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n * self.n];
        for e in &self.edges {
            w[e.i * self.n + e.j] = e.w;
            w[e.j * self.n + e.i] = e.w;
        }
        w
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for e in &self.edges {
            d[e.i] += 1;
            d[e.j] += 1;
        }
        d
    }

    /// Same graph with agents relabeled: agent `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        if perm.len() != self.n {
            return Err(GraphError::SizeMismatch(self.n, perm.len()));
        }
        WeightedGraph::new(self.n, self.edges.iter().map(|e| (perm[e.i], perm[e.j], e.w)))
    }
}

/// G(n, p) random graph: every unordered pair is drawn independently with
/// probability `p`, in lexicographic pair order, from a ChaCha8 stream seeded
/// with `seed`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64, weights: WeightScheme) -> Result<WeightedGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    erdos_renyi_with(n, p, &mut rng, weights)
}

pub fn erdos_renyi_with<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    weights: WeightScheme,
) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewAgents { n, min: 2 });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                let w = match weights {
                    WeightScheme::Unit => 1.0,
                    WeightScheme::UniformRandom => 1.0 - rng.gen::<f64>(),
                };
                edges.push(Edge { i, j, w });
            }
        }
    }
    Ok(WeightedGraph { n, edges })
}

/// True iff the graph, ignoring weights, has a single connected component.
pub fn is_connected(g: &WeightedGraph) -> bool {
    if g.n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); g.n];
    for e in &g.edges {
        adj[e.i].push(e.j);
        adj[e.j].push(e.i);
    }
    let mut seen = vec![false; g.n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == g.n
}

/// Edge-set union; weights of an edge present in several inputs are summed.
pub fn union_graph<'a>(gs: impl IntoIterator<Item = &'a WeightedGraph>) -> Result<WeightedGraph, GraphError> {
    let mut iter = gs.into_iter();
    let first = iter.next().ok_or(GraphError::Empty)?;
    let n = first.n;
    let mut map: BTreeMap<(usize, usize), f64> = first.edges.iter().map(|e| ((e.i, e.j), e.w)).collect();
    for g in iter {
        if g.n != n {
            return Err(GraphError::SizeMismatch(n, g.n));
        }
        for e in &g.edges {
            *map.entry((e.i, e.j)).or_insert(0.0) += e.w;
        }
    }
    Ok(WeightedGraph {
        n,
        edges: map.into_iter().map(|((i, j), w)| Edge { i, j, w }).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchPolicy {
    Static,
    RoundRobin,
}

/// Time-indexed sequence of graphs. Each graph is active for `dwell` time
/// units (seconds in continuous mode, steps in discrete mode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSchedule {
    graphs: Vec<WeightedGraph>,
    dwell: f64,
    policy: SwitchPolicy,
}

impl GraphSchedule {
    pub fn new(graphs: Vec<WeightedGraph>, dwell: f64, policy: SwitchPolicy) -> Result<Self, GraphError> {
        let first = graphs.first().ok_or(GraphError::Empty)?;
        if let Some(g) = graphs.iter().find(|g| g.n != first.n) {
            return Err(GraphError::SizeMismatch(first.n, g.n));
        }
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(GraphError::InvalidDwell(dwell));
        }
        if policy == SwitchPolicy::Static && graphs.len() != 1 {
            return Err(GraphError::SizeMismatch(1, graphs.len()));
        }
        Ok(GraphSchedule { graphs, dwell, policy })
    }

    pub fn fixed(g: WeightedGraph) -> Self {
        GraphSchedule {
            graphs: vec![g],
            dwell: 1.0,
            policy: SwitchPolicy::Static,
        }
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n
    }

    pub fn graphs(&self) -> &[WeightedGraph] {
        &self.graphs
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn policy(&self) -> SwitchPolicy {
        self.policy
    }

    /// Index of the graph active at time `t >= 0`.
    pub fn active_index(&self, t: f64) -> usize {
        match self.policy {
            SwitchPolicy::Static => 0,
            SwitchPolicy::RoundRobin => {
                // the relative nudge keeps t = k * dwell from landing one slot early
                let slot = (t / self.dwell * (1.0 + 1e-12) + 1e-12).floor();
                if slot <= 0.0 {
                    0
                } else {
                    (slot as u64 % self.graphs.len() as u64) as usize
                }
            }
        }
    }

    pub fn active_at(&self, t: f64) -> &WeightedGraph {
        &self.graphs[self.active_index(t)]
    }
}

/// True iff the union over every window of `window` consecutive dwell slots
/// is connected. Round-robin windows wrap around the schedule.
pub fn is_uniformly_connected(s: &GraphSchedule, window: usize) -> Result<bool, GraphError> {
    if window == 0 {
        return Err(GraphError::InvalidWindow);
    }
    match s.policy {
        SwitchPolicy::Static => Ok(is_connected(&s.graphs[0])),
        SwitchPolicy::RoundRobin => {
            let m = s.graphs.len();
            let span = window.min(m);
            for start in 0..m {
                let u = union_graph((0..span).map(|k| &s.graphs[(start + k) % m]))?;
                if !is_connected(&u) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Connected G(n, p) graph: redraws from successive ChaCha8 streams of `seed`
/// until the draw is connected.
pub fn connected_erdos_renyi(
    n: usize,
    p: f64,
    seed: u64,
    weights: WeightScheme,
    max_attempts: usize,
) -> Result<WeightedGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..max_attempts {
        rng.set_stream(attempt as u64);
        rng.set_word_pos(0);
        let g = erdos_renyi_with(n, p, &mut rng, weights)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(GraphError::ConstructionFailed(max_attempts))
}

/// Round-robin schedule of `count` graphs, each a G(n, p) draw with all edges
/// across a random bisection of the agents removed, so that every snapshot is
/// disconnected. Redraws the whole schedule until the union is connected.
pub fn partitioned_schedule(
    n: usize,
    p: f64,
    count: usize,
    dwell: f64,
    seed: u64,
    weights: WeightScheme,
    max_attempts: usize,
) -> Result<GraphSchedule, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewAgents { n, min: 2 });
    }
    if count == 0 {
        return Err(GraphError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..max_attempts {
        rng.set_stream(attempt as u64);
        rng.set_word_pos(0);
        let mut graphs = Vec::with_capacity(count);
        for _ in 0..count {
            let full = erdos_renyi_with(n, p, &mut rng, weights)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut side = vec![false; n];
            for &v in &order[..n / 2] {
                side[v] = true;
            }
            let edges = full.edges.into_iter().filter(|e| side[e.i] == side[e.j]).collect();
            graphs.push(WeightedGraph { n, edges });
        }
        let schedule = GraphSchedule::new(graphs, dwell, SwitchPolicy::RoundRobin)?;
        if is_uniformly_connected(&schedule, count)? {
            return Ok(schedule);
        }
    }
    Err(GraphError::ConstructionFailed(max_attempts))
}

/// Round-robin schedule of `count` independent G(n, p) draws whose union is
/// connected (snapshots may or may not be).
pub fn switching_schedule(
    n: usize,
    p: f64,
    count: usize,
    dwell: f64,
    seed: u64,
    weights: WeightScheme,
    max_attempts: usize,
) -> Result<GraphSchedule, GraphError> {
    if count == 0 {
        return Err(GraphError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..max_attempts {
        rng.set_stream(attempt as u64);
        rng.set_word_pos(0);
        let graphs = (0..count)
            .map(|_| erdos_renyi_with(n, p, &mut rng, weights))
            .collect::<Result<Vec<_>, _>>()?;
        let schedule = GraphSchedule::new(graphs, dwell, SwitchPolicy::RoundRobin)?;
        if is_uniformly_connected(&schedule, count)? {
            return Ok(schedule);
        }
    }
    Err(GraphError::ConstructionFailed(max_attempts))
}

/// Edge-list text: a header line `n <count>` followed by one `i j w` triple per
/// line. Blank lines and `#` comments are ignored.
pub fn parse_edge_list(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut n = None;
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| GraphError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match (n, fields.as_slice()) {
            (None, ["n", count]) => n = Some(count.parse::<usize>().map_err(|_| err("bad agent count"))?),
            (None, _) => return Err(err("expected header `n <count>`")),
            (Some(_), [i, j, w]) => edges.push((
                i.parse::<usize>().map_err(|_| err("bad endpoint"))?,
                j.parse::<usize>().map_err(|_| err("bad endpoint"))?,
                w.parse::<f64>().map_err(|_| err("bad weight"))?,
            )),
            (Some(_), _) => return Err(err("expected `i j w`")),
        }
    }
    let n = n.ok_or(GraphError::Parse {
        line: 0,
        msg: "missing header".to_string(),
    })?;
    WeightedGraph::new(n, edges)
}

pub fn format_edge_list(g: &WeightedGraph) -> String {
    let mut out = format!("n {}\n", g.n);
    for e in &g.edges {
        let _ = writeln!(out, "{} {} {:?}", e.i, e.j, e.w);
    }
    out
}

pub fn read_edge_list(path: &Path) -> Result<WeightedGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        let g = erdos_renyi(12, 0.0, 1, WeightScheme::Unit).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = erdos_renyi(12, 1.0, 1, WeightScheme::Unit).unwrap();
        assert_eq!(g.edge_count(), 66);
        assert!(erdos_renyi(1, 0.5, 1, WeightScheme::Unit).is_err());
        assert!(erdos_renyi(5, 1.5, 1, WeightScheme::Unit).is_err());
        assert!(erdos_renyi(5, -0.1, 1, WeightScheme::Unit).is_err());
    }

    #[test]
    fn er_edge_count_within_binomial_band() {
        // Binomial(1225, 0.2): mean 245, sd sqrt(1225 * 0.2 * 0.8) = 14
        for seed in 0..20 {
            let g = erdos_renyi(50, 0.2, seed, WeightScheme::Unit).unwrap();
            let dev = (g.edge_count() as f64 - 245.0).abs();
            assert!(dev <= 4.0 * 14.0, "seed {seed}: {} edges", g.edge_count());
        }
    }

    #[test]
    fn er_random_weights_in_unit_interval() {
        let g = erdos_renyi(30, 0.5, 9, WeightScheme::UniformRandom).unwrap();
        assert!(g.edges().iter().all(|e| e.w > 0.0 && e.w <= 1.0 && e.i < e.j));
    }

    #[test]
    fn er_is_deterministic() {
        let a = erdos_renyi(40, 0.3, 77, WeightScheme::UniformRandom).unwrap();
        let b = erdos_renyi(40, 0.3, 77, WeightScheme::UniformRandom).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, erdos_renyi(40, 0.3, 78, WeightScheme::UniformRandom).unwrap());
    }

    #[test]
    fn connectivity_examples() {
        assert!(is_connected(&WeightedGraph::complete(6)));
        assert!(!is_connected(&WeightedGraph::empty(4)));
        assert!(is_connected(&WeightedGraph::empty(1)));
        let path = WeightedGraph::path(6);
        assert!(is_connected(&path));
        let cut = WeightedGraph::new(6, path.edges().iter().filter(|e| e.i != 2).map(|e| (e.i, e.j, e.w))).unwrap();
        assert!(!is_connected(&cut));
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert!(matches!(WeightedGraph::new(3, [(1, 1, 1.0)]), Err(GraphError::InvalidEdge { .. })));
        assert!(matches!(WeightedGraph::new(3, [(0, 3, 1.0)]), Err(GraphError::InvalidEdge { .. })));
        assert!(matches!(WeightedGraph::new(3, [(0, 1, 0.0)]), Err(GraphError::InvalidEdge { .. })));
        assert!(matches!(
            WeightedGraph::new(3, [(0, 1, 1.0), (1, 0, 2.0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        ));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = erdos_renyi(20, 0.4, 3, WeightScheme::UniformRandom).unwrap();
        let w = g.adjacency();
        for i in 0..20 {
            assert_eq!(w[i * 20 + i], 0.0);
            for j in 0..20 {
                assert_eq!(w[i * 20 + j].to_bits(), w[j * 20 + i].to_bits());
            }
        }
        let e = g.edges()[0];
        assert_eq!(g.weight(e.j, e.i), Some(e.w));
    }

    #[test]
    fn union_examples() {
        let g = erdos_renyi(10, 0.3, 4, WeightScheme::UniformRandom).unwrap();
        assert_eq!(union_graph([&g, &WeightedGraph::empty(10)]).unwrap(), g);
        let even = WeightedGraph::new(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let odd = WeightedGraph::new(4, [(1, 2, 1.0), (0, 1, 2.0)]).unwrap();
        let u = union_graph([&even, &odd]).unwrap();
        assert_eq!(u.edge_count(), 3);
        assert_eq!(u.weight(0, 1), Some(3.0));
        assert!(is_connected(&u));
        assert!(union_graph(std::iter::empty::<&WeightedGraph>()).is_err());
        assert!(union_graph([&even, &WeightedGraph::empty(5)]).is_err());
    }

    #[test]
    fn uniform_connectivity_examples() {
        let s = GraphSchedule::fixed(WeightedGraph::complete(5));
        assert!(is_uniformly_connected(&s, 1).unwrap());
        let s = GraphSchedule::fixed(WeightedGraph::empty(5));
        assert!(!is_uniformly_connected(&s, 3).unwrap());
        assert!(is_uniformly_connected(&s, 0).is_err());

        let s = partitioned_schedule(50, 0.2, 6, 1.0, 17, WeightScheme::Unit, 100).unwrap();
        assert_eq!(s.graphs().len(), 6);
        for g in s.graphs() {
            assert!(!is_connected(g));
        }
        assert!(is_connected(&union_graph(s.graphs()).unwrap()));
        assert!(is_uniformly_connected(&s, 6).unwrap());
        // single snapshots are never enough
        assert!(!is_uniformly_connected(&s, 1).unwrap());
    }

    #[test]
    fn round_robin_activation() {
        let gs = vec![WeightedGraph::empty(3), WeightedGraph::path(3), WeightedGraph::complete(3)];
        let s = GraphSchedule::new(gs, 1.0, SwitchPolicy::RoundRobin).unwrap();
        assert_eq!(s.active_index(0.0), 0);
        assert_eq!(s.active_index(0.999), 0);
        assert_eq!(s.active_index(1.0), 1);
        assert_eq!(s.active_index(1000.0 * 0.001), 1);
        assert_eq!(s.active_index(2.5), 2);
        assert_eq!(s.active_index(3.0), 0);
        let steps = GraphSchedule::new(vec![WeightedGraph::empty(3), WeightedGraph::path(3)], 5.0, SwitchPolicy::RoundRobin).unwrap();
        assert_eq!(steps.active_index(4.0), 0);
        assert_eq!(steps.active_index(5.0), 1);
        assert!(GraphSchedule::new(vec![WeightedGraph::empty(3), WeightedGraph::empty(4)], 1.0, SwitchPolicy::RoundRobin).is_err());
        assert!(GraphSchedule::new(vec![WeightedGraph::empty(3)], 0.0, SwitchPolicy::RoundRobin).is_err());
    }

    #[test]
    fn edge_list_parse_and_format() {
        let g = erdos_renyi(8, 0.5, 2, WeightScheme::UniformRandom).unwrap();
        let text = format_edge_list(&g);
        assert_eq!(parse_edge_list(&text).unwrap(), g);
        let g = parse_edge_list("# fixture\nn 3\n0 1 1.0\n2 1 0.5 # reversed\n").unwrap();
        assert_eq!(g.weight(1, 2), Some(0.5));
        assert!(parse_edge_list("0 1 1\n").is_err());
        assert!(parse_edge_list("n 3\n0 1\n").is_err());
        assert!(parse_edge_list("n 3\n0 5 1\n").is_err());
    }
}
