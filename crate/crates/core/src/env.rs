//! i.i.d. conductance environments on lattice boxes and the open cluster of
//! the origin under Bernoulli percolation.
//!
//! Each edge draws its value from its own ChaCha stream selected by the
//! box-independent edge key, so an environment on a larger box agrees with
//! the smaller one on their common edges.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeList, WeightedGraph};
use crate::lattice::{pack, LatticeBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentLaw {
    /// Uniform on `(0, 1]`.
    Uniform01,
    /// 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    /// Discrete law: `(probability, value)` pairs.
    Quantile { table: Vec<(f64, f64)> },
}

impl EnvironmentLaw {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("bernoulli p={p} outside [0, 1]")));
        }
        Ok(EnvironmentLaw::Bernoulli { p })
    }

    pub fn quantile(table: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = table.iter().map(|t| t.0).sum();
        let ok = !table.is_empty()
            && table.iter().all(|&(p, v)| p >= 0.0 && (0.0..=1.0).contains(&v))
            && (total - 1.0).abs() < 1e-9;
        if !ok {
            return Err(Error::InvalidParameter(
                "quantile law needs probabilities summing to 1 and values in [0, 1]".into(),
            ));
        }
        Ok(EnvironmentLaw::Quantile { table })
    }

    /// True iff the law puts no mass on zero.
    pub fn all_positive(&self) -> bool {
        match self {
            EnvironmentLaw::Uniform01 => true,
            EnvironmentLaw::Bernoulli { p } => *p >= 1.0,
            EnvironmentLaw::Quantile { table } => table.iter().all(|&(p, v)| p == 0.0 || v > 0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            EnvironmentLaw::Uniform01 => 0.5,
            EnvironmentLaw::Bernoulli { p } => *p,
            EnvironmentLaw::Quantile { table } => table.iter().map(|&(p, v)| p * v).sum(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            EnvironmentLaw::Uniform01 => 1.0 - rng.random::<f64>(),
            EnvironmentLaw::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            EnvironmentLaw::Quantile { table } => {
                let mut u = rng.random::<f64>();
                for &(p, v) in table {
                    if u < p {
                        return v;
                    }
                    u -= p;
                }
                table.last().expect("nonempty table").1
            }
        }
    }
}

impl fmt::Display for EnvironmentLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvironmentLaw::Uniform01 => write!(f, "uniform01"),
            EnvironmentLaw::Bernoulli { p } => write!(f, "bernoulli:{p}"),
            EnvironmentLaw::Quantile { table } => {
                let parts: Vec<String> = table.iter().map(|(p, v)| format!("{p}@{v}")).collect();
                write!(f, "quantile:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for EnvironmentLaw {
    type Err = Error;

    /// `uniform01`, `bernoulli:P`, or `quantile:P@V,P@V,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown environment law `{s}`"));
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        match name.trim() {
            "uniform01" | "uniform" => Ok(EnvironmentLaw::Uniform01),
            "bernoulli" => EnvironmentLaw::bernoulli(arg.trim().parse().map_err(|_| bad())?),
            "quantile" => {
                let table = arg
                    .split(',')
                    .map(|pair| {
                        let (p, v) = pair.split_once('@').ok_or_else(bad)?;
                        Ok((p.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                EnvironmentLaw::quantile(table)
            }
            _ => Err(bad()),
        }
    }
}

/// Conductances of a box, aligned with [`LatticeBox::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub law: EnvironmentLaw,
    pub lattice: LatticeBox,
    pub seed: u64,
    pub conductances: Vec<f64>,
}

fn edge_rng(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

pub fn sample_environment(law: &EnvironmentLaw, lattice: LatticeBox, seed: u64) -> Environment {
    let conductances = lattice
        .edges()
        .par_iter()
        .map(|e| law.draw(&mut edge_rng(seed, e.key())))
        .collect();
    Environment {
        law: law.clone(),
        lattice,
        seed,
        conductances,
    }
}

impl Environment {
    pub fn mean_conductance(&self) -> f64 {
        self.conductances.iter().sum::<f64>() / self.conductances.len() as f64
    }

    /// Header lines identifying the environment in an edge-list dump.
    pub fn headers(&self) -> Vec<String> {
        vec![
            format!("law {}", self.law),
            format!("seed {}", self.seed),
            format!("box d={} n={}", self.lattice.d, self.lattice.n),
        ]
    }

    /// Writes the environment graph with `#law`, `#seed` and `#box` headers.
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        environment_graph(self)?.write_edge_list(out, &self.headers())
    }
}

/// The walk in the environment: `mu = omega` edge for edge, zero edges
/// dropped, the box shell absorbing.
pub fn environment_graph(env: &Environment) -> Result<WeightedGraph<f64>> {
    env.lattice.graph_with(&env.conductances)
}

/// Reads a dump written by [`Environment::write`]: the graph plus the law,
/// seed and box recorded in its headers.
pub fn read_environment<R: BufRead>(input: R) -> Result<(WeightedGraph<f64>, Option<Environment>)> {
    let list = EdgeList::<f64>::parse(input)?;
    let meta = match (list.header("law"), list.header("seed"), list.header("box")) {
        (Some(law), Some(seed), Some(lattice)) => {
            let law: EnvironmentLaw = law.parse()?;
            let seed: u64 = seed
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad seed `{seed}`")))?;
            let lattice = parse_box(lattice)?;
            Some(sample_environment(&law, lattice, seed))
        }
        _ => None,
    };
    Ok((list.into_graph()?, meta))
}

/// Parses `d=D n=N` (also accepts commas).
pub fn parse_box(spec: &str) -> Result<LatticeBox> {
    let (mut d, mut n) = (None, None);
    for tok in spec.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("bad box spec `{spec}`")))?;
        let parsed: i64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad box spec `{spec}`")))?;
        match k.trim() {
            "d" => d = Some(parsed as usize),
            "n" => n = Some(parsed),
            _ => return Err(Error::InvalidParameter(format!("bad box spec `{spec}`"))),
        }
    }
    match (d, n) {
        (Some(d), Some(n)) => LatticeBox::new(d, n),
        _ => Err(Error::InvalidParameter(format!("box spec `{spec}` needs d and n"))),
    }
}

#[derive(Debug, Clone)]
pub struct PercolationCluster {
    /// Open edges of the cluster; shell vertices reached by an open edge
    /// form the frame.
    pub graph: WeightedGraph<f64>,
    /// Number of interior sites in the cluster.
    pub size: usize,
    /// Whether the cluster reaches the box shell (the stand-in for an
    /// infinite cluster).
    pub spans: bool,
}

/// The open cluster of the origin, with `m(x)` the open degree.
pub fn percolation_cluster(env: &Environment) -> Result<PercolationCluster> {
    if !matches!(env.law, EnvironmentLaw::Bernoulli { .. }) {
        return Err(Error::InvalidParameter("percolation needs a Bernoulli environment".into()));
    }
    let lattice = env.lattice;
    let edges = lattice.edges();
    let mut adjacency: std::collections::HashMap<i64, Vec<i64>> = std::collections::HashMap::new();
    for (e, &w) in edges.iter().zip(&env.conductances) {
        if w > 0.0 {
            let (a, b) = (pack(&e.lower), pack(&e.upper()));
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
    }
    let origin = pack(&lattice.origin());
    let shell: std::collections::HashSet<i64> = lattice.shell_labels().into_iter().collect();
    let mut seen = std::collections::HashSet::from([origin]);
    let mut queue = VecDeque::from([origin]);
    let mut cluster_edges = Vec::new();
    let mut frame = Vec::new();
    let mut size = 0;
    while let Some(x) = queue.pop_front() {
        size += 1;
        for &y in adjacency.get(&x).map(Vec::as_slice).unwrap_or_default() {
            if shell.contains(&y) {
                cluster_edges.push((x, y, 1.0));
                frame.push(y);
            } else {
                // Both ends end up in the cluster; add the edge once.
                if x < y {
                    cluster_edges.push((x, y, 1.0));
                }
                if seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
    }
    frame.sort_unstable();
    frame.dedup();
    let spans = !frame.is_empty();
    let graph = WeightedGraph::build(cluster_edges, origin, &frame)?;
    Ok(PercolationCluster { graph, size, spans })
}
