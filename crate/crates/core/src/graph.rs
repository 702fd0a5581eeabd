//! Weighted graphs of reversible chains: the symmetric kernel `mu`, the
//! measure `m(x) = sum_z mu(x, z)`, regions and their edge boundaries.
//!
//! External vertex labels are arbitrary `i64`s; internally vertices are dense
//! indices into compressed adjacency arrays. A graph may carry a *frame*: a
//! set of absorbing exterior vertices that the walk can step into but that
//! never belong to a region.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::{exact_sum, Scalar};

/// Dense internal vertex index.
pub type Vertex = usize;

#[derive(Debug, Clone)]
pub struct WeightedGraph<S> {
    labels: Vec<i64>,
    index: HashMap<i64, Vertex>,
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
    weights: Vec<S>,
    measure: Vec<S>,
    frame: Vec<bool>,
    root: Vertex,
}

impl<S: Scalar> WeightedGraph<S> {
    /// Builds a graph from an edge list. Duplicate pairs (in either
    /// orientation) are merged by summing their weights, zero-weight edges
    /// are dropped, and vertices left without any positive edge disappear.
    pub fn build<I>(edges: I, root: i64, frame: &[i64]) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, i64, S)>,
    {
        let mut merged: BTreeMap<(i64, i64), S> = BTreeMap::new();
        for (u, v, w) in edges {
            if w < S::zero() {
                return Err(Error::NegativeWeight {
                    u,
                    v,
                    weight: w.to_f64_lossy(),
                });
            }
            let key = if u <= v { (u, v) } else { (v, u) };
            *merged.entry(key).or_insert_with(S::zero) += w;
        }
        merged.retain(|_, w| *w > S::zero());

        let mut labels: Vec<i64> = merged.keys().flat_map(|&(u, v)| [u, v]).collect();
        labels.sort_unstable();
        labels.dedup();
        let index: HashMap<i64, Vertex> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

        let root = *index.get(&root).ok_or(Error::RootIsolated(root))?;
        let mut is_frame = vec![false; labels.len()];
        for f in frame {
            if let Some(&v) = index.get(f) {
                is_frame[v] = true;
            }
        }
        if is_frame[root] {
            return Err(Error::RootInFrame(labels[root]));
        }

        let n = labels.len();
        let mut degree = vec![0usize; n];
        for &(u, v) in merged.keys() {
            degree[index[&u]] += 1;
            if u != v {
                degree[index[&v]] += 1;
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0; offsets[n]];
        let mut weights = vec![S::zero(); offsets[n]];
        for (&(u, v), &w) in &merged {
            let (a, b) = (index[&u], index[&v]);
            targets[cursor[a]] = b;
            weights[cursor[a]] = w;
            cursor[a] += 1;
            if a != b {
                targets[cursor[b]] = a;
                weights[cursor[b]] = w;
                cursor[b] += 1;
            }
        }
        let measure = (0..n)
            .map(|x| exact_sum(weights[offsets[x]..offsets[x + 1]].iter().copied()))
            .collect();

        Ok(WeightedGraph {
            labels,
            index,
            offsets,
            targets,
            weights,
            measure,
            frame: is_frame,
            root,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> Vertex {
        self.root
    }

    pub fn label(&self, v: Vertex) -> i64 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn vertex(&self, label: i64) -> Option<Vertex> {
        self.index.get(&label).copied()
    }

    pub fn vertex_or_err(&self, label: i64) -> Result<Vertex> {
        self.vertex(label).ok_or(Error::UnknownVertex(label))
    }

    pub fn is_frame(&self, v: Vertex) -> bool {
        self.frame[v]
    }

    pub fn frame_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.num_vertices()).filter(|&v| self.frame[v])
    }

    pub fn interior_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.num_vertices()).filter(|&v| !self.frame[v])
    }

    /// Reversible measure `m(x)`.
    pub fn measure(&self, v: Vertex) -> S {
        self.measure[v]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbors of `v` with the kernel weight `mu(v, y)`; a self-loop
    /// appears once.
    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = (Vertex, S)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn weight(&self, u: Vertex, v: Vertex) -> S {
        self.neighbors(u)
            .find(|&(y, _)| y == v)
            .map_or_else(S::zero, |(_, w)| w)
    }

    /// Transition probability `p(x, y) = mu(x, y) / m(x)`.
    pub fn transition(&self, x: Vertex, y: Vertex) -> S {
        self.weight(x, y) / self.measure[x]
    }

    /// Each unordered edge once, as `(u, v, mu)` with `u <= v`.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex, S)> + '_ {
        (0..self.num_vertices()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| u <= v)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges().count()
    }

    /// Converts the kernel to another scalar type through `f64`.
    pub fn convert<T: Scalar>(&self) -> WeightedGraph<T> {
        WeightedGraph {
            labels: self.labels.clone(),
            index: self.index.clone(),
            offsets: self.offsets.clone(),
            targets: self.targets.clone(),
            weights: self.weights.iter().map(|w| T::from_f64_lossy(w.to_f64_lossy())).collect(),
            measure: self.measure.iter().map(|w| T::from_f64_lossy(w.to_f64_lossy())).collect(),
            frame: self.frame.clone(),
            root: self.root,
        }
    }

    /// Same kernel, different root.
    pub fn with_root(&self, root: Vertex) -> Result<Self> {
        if self.frame[root] {
            return Err(Error::RootInFrame(self.labels[root]));
        }
        let mut g = self.clone();
        g.root = root;
        Ok(g)
    }

    /// Writes the edge-list exchange format: `#root`, `#frame`, then one
    /// `u v weight` line per unordered pair sorted by label.
    pub fn write_edge_list<W: Write>(&self, mut out: W, extra_headers: &[String]) -> Result<()> {
        for h in extra_headers {
            writeln!(out, "#{h}")?;
        }
        writeln!(out, "#root {}", self.labels[self.root])?;
        let mut frame: Vec<i64> = self.frame_vertices().map(|v| self.labels[v]).collect();
        frame.sort_unstable();
        if !frame.is_empty() {
            let list: Vec<String> = frame.iter().map(i64::to_string).collect();
            writeln!(out, "#frame {}", list.join(" "))?;
        }
        let mut rows: Vec<(i64, i64, S)> = self
            .edges()
            .map(|(u, v, w)| {
                let (a, b) = (self.labels[u], self.labels[v]);
                (a.min(b), a.max(b), w)
            })
            .collect();
        rows.sort_by_key(|&(a, b, _)| (a, b));
        for (a, b, w) in rows {
            writeln!(out, "{a} {b} {w}")?;
        }
        Ok(())
    }
}

/// Parsed contents of an edge-list file.
#[derive(Debug, Clone)]
pub struct EdgeList<S> {
    pub edges: Vec<(i64, i64, S)>,
    pub root: Option<i64>,
    pub frame: Vec<i64>,
    /// `#key value` header lines other than root and frame.
    pub headers: Vec<(String, String)>,
}

impl<S: Scalar> EdgeList<S> {
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut list = EdgeList {
            edges: Vec::new(),
            root: None,
            frame: Vec::new(),
            headers: Vec::new(),
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = i + 1;
            let bad = |msg: &str| Error::Parse {
                line: lineno,
                msg: msg.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let mut parts = header.trim().splitn(2, char::is_whitespace);
                let key = parts.next().unwrap_or_default();
                let rest = parts.next().unwrap_or_default().trim();
                match key {
                    "root" => {
                        list.root = Some(rest.parse().map_err(|_| bad("bad root id"))?);
                    }
                    "frame" => {
                        for tok in rest.split_whitespace() {
                            list.frame.push(tok.parse().map_err(|_| bad("bad frame id"))?);
                        }
                    }
                    _ => list.headers.push((key.to_string(), rest.to_string())),
                }
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(bad("expected `u v weight`"));
            }
            let u = toks[0].parse().map_err(|_| bad("bad vertex id"))?;
            let v = toks[1].parse().map_err(|_| bad("bad vertex id"))?;
            let w = toks[2].parse::<S>().map_err(|_| bad("bad weight"))?;
            list.edges.push((u, v, w));
        }
        Ok(list)
    }

    pub fn header(&self, key: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn into_graph(self) -> Result<WeightedGraph<S>> {
        let root = self.root.ok_or(Error::Parse {
            line: 0,
            msg: "missing #root header".into(),
        })?;
        WeightedGraph::build(self.edges, root, &self.frame)
    }
}

/// A finite vertex set of non-frame vertices with cached measure and
/// connectivity.
#[derive(Debug, Clone)]
pub struct Region<S> {
    members: Vec<Vertex>,
    mask: Vec<bool>,
    measure: S,
    connected: bool,
}

impl<S: Scalar> Region<S> {
    pub fn new(g: &WeightedGraph<S>, members: impl IntoIterator<Item = Vertex>) -> Result<Self> {
        let mut mask = vec![false; g.num_vertices()];
        let mut list = Vec::new();
        for v in members {
            if g.is_frame(v) {
                return Err(Error::FrameInRegion(g.label(v)));
            }
            if !mask[v] {
                mask[v] = true;
                list.push(v);
            }
        }
        list.sort_unstable();
        let measure = exact_sum(list.iter().map(|&v| g.measure(v)));
        let connected = connected_within(g, &list, &mask);
        Ok(Region {
            members: list,
            mask,
            measure,
            connected,
        })
    }

    pub fn from_labels(g: &WeightedGraph<S>, labels: &[i64]) -> Result<Self> {
        let vs = labels
            .iter()
            .map(|&l| g.vertex_or_err(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(g, vs)
    }

    pub fn empty(g: &WeightedGraph<S>) -> Self {
        Region {
            members: Vec::new(),
            mask: vec![false; g.num_vertices()],
            measure: S::zero(),
            connected: true,
        }
    }

    /// All non-frame vertices.
    pub fn interior(g: &WeightedGraph<S>) -> Self {
        Self::new(g, g.interior_vertices()).expect("interior has no frame vertices")
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.mask.get(v).copied().unwrap_or(false)
    }

    pub fn members(&self) -> &[Vertex] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `m(A)`.
    pub fn measure(&self) -> S {
        self.measure
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn labels(&self, g: &WeightedGraph<S>) -> Vec<i64> {
        let mut l: Vec<i64> = self.members.iter().map(|&v| g.label(v)).collect();
        l.sort_unstable();
        l
    }
}

/// Positive-weight pairs `(x in A, y not in A)` and their total weight.
#[derive(Debug, Clone)]
pub struct BoundaryEdges<S> {
    pub pairs: Vec<(Vertex, Vertex, S)>,
    pub total: S,
}

pub fn boundary<S: Scalar>(g: &WeightedGraph<S>, a: &Region<S>) -> BoundaryEdges<S> {
    let mut pairs = Vec::new();
    for &x in a.members() {
        for (y, w) in g.neighbors(x) {
            if !a.contains(y) && w > S::zero() {
                pairs.push((x, y, w));
            }
        }
    }
    let total = exact_sum(pairs.iter().map(|p| p.2));
    BoundaryEdges { pairs, total }
}

/// `mu(dA)` without materializing the pair list.
pub fn boundary_measure<S: Scalar>(g: &WeightedGraph<S>, a: &Region<S>) -> S {
    exact_sum(
        a.members()
            .iter()
            .flat_map(|&x| g.neighbors(x).filter(|&(y, _)| !a.contains(y)).map(|(_, w)| w)),
    )
}

pub fn is_connected<S: Scalar>(g: &WeightedGraph<S>, a: &Region<S>) -> bool {
    connected_within(g, a.members(), &a.mask)
}

fn connected_within<S: Scalar>(g: &WeightedGraph<S>, members: &[Vertex], mask: &[bool]) -> bool {
    let Some(&start) = members.first() else {
        return true;
    };
    let mut seen = vec![false; g.num_vertices()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for (y, w) in g.neighbors(x) {
            if mask[y] && !seen[y] && w > S::zero() {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count == members.len()
}

/// Breadth-first hop distances from `from`; `None` marks unreachable vertices.
pub fn hop_distances<S: Scalar>(g: &WeightedGraph<S>, from: Vertex) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_vertices()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x].unwrap_or_default();
        for (y, w) in g.neighbors(x) {
            if dist[y].is_none() && w > S::zero() {
                dist[y] = Some(dx + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

pub fn hop_distance<S: Scalar>(g: &WeightedGraph<S>, x: Vertex, y: Vertex) -> Result<usize> {
    hop_distances(g, x)[y].ok_or(Error::Unreachable(g.label(x), g.label(y)))
}
