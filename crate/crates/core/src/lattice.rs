//! Boxes `[-n, n]^d` of the nearest-neighbor lattice with an absorbing
//! exterior shell, and the coordinate <-> label packing shared with the
//! random environments.

use crate::error::{Error, Result};
use crate::graph::{Region, Vertex, WeightedGraph};
use crate::scalar::Scalar;

pub type Coord = Vec<i64>;

/// Box of side `2n + 1` centered at the origin. The shell at sup-distance
/// `n + 1` (faces only) is the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeBox {
    pub d: usize,
    pub n: i64,
}

/// A nearest-neighbor edge stored as its lower endpoint and axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeEdge {
    pub lower: Coord,
    pub axis: usize,
}

impl LatticeEdge {
    pub fn upper(&self) -> Coord {
        let mut c = self.lower.clone();
        c[self.axis] += 1;
        c
    }

    /// Box-independent key: identical edges get identical keys in every box.
    pub fn key(&self) -> u64 {
        let d = self.lower.len();
        pack(&self.lower) as u64 * d as u64 + self.axis as u64
    }
}

fn bits_per_axis(d: usize) -> u32 {
    let tag_bits = usize::BITS - (d.max(2) - 1).leading_zeros();
    ((63 - tag_bits) / d as u32).min(20)
}

/// Packs coordinates into a non-negative label, identical across boxes.
pub fn pack(c: &[i64]) -> i64 {
    let bits = bits_per_axis(c.len());
    let offset = 1i64 << (bits - 1);
    c.iter()
        .enumerate()
        .map(|(i, &x)| {
            debug_assert!(x.abs() < offset, "coordinate {x} out of packing range");
            (x + offset) << (bits * i as u32)
        })
        .sum()
}

pub fn unpack(label: i64, d: usize) -> Coord {
    let bits = bits_per_axis(d);
    let offset = 1i64 << (bits - 1);
    let mask = (1i64 << bits) - 1;
    (0..d)
        .map(|i| ((label >> (bits * i as u32)) & mask) - offset)
        .collect()
}

impl LatticeBox {
    pub fn new(d: usize, n: i64) -> Result<Self> {
        if d == 0 || n < 0 {
            return Err(Error::InvalidParameter(format!("box d={d}, n={n}")));
        }
        if (n + 2) >= 1i64 << (bits_per_axis(d) - 1) {
            return Err(Error::InvalidParameter(format!("box n={n} too large for d={d}")));
        }
        Ok(LatticeBox { d, n })
    }

    pub fn origin(&self) -> Coord {
        vec![0; self.d]
    }

    pub fn side(&self) -> i64 {
        2 * self.n + 1
    }

    pub fn contains(&self, c: &[i64]) -> bool {
        c.iter().all(|x| x.abs() <= self.n)
    }

    fn is_shell(&self, c: &[i64]) -> bool {
        let outside = c.iter().filter(|x| x.abs() > self.n).count();
        outside == 1 && c.iter().all(|x| x.abs() <= self.n + 1)
    }

    /// Interior sites in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Coord> + '_ {
        let side = self.side();
        let total = (side as u64).pow(self.d as u32);
        (0..total).map(move |mut k| {
            let mut c = vec![0; self.d];
            for x in c.iter_mut() {
                *x = (k % side as u64) as i64 - self.n;
                k /= side as u64;
            }
            c
        })
    }

    pub fn num_sites(&self) -> usize {
        (self.side() as usize).pow(self.d as u32)
    }

    /// Every edge with at least one interior endpoint, the other endpoint
    /// being interior or on the shell.
    pub fn edges(&self) -> Vec<LatticeEdge> {
        let mut out = Vec::with_capacity(self.num_sites() * self.d + 2 * self.d);
        for x in self.sites() {
            for axis in 0..self.d {
                if x[axis] == -self.n {
                    let mut lower = x.clone();
                    lower[axis] -= 1;
                    out.push(LatticeEdge { lower, axis });
                }
                out.push(LatticeEdge {
                    lower: x.clone(),
                    axis,
                });
            }
        }
        out
    }

    pub fn shell_labels(&self) -> Vec<i64> {
        let mut out = Vec::new();
        for x in self.sites() {
            for axis in 0..self.d {
                for step in [-1, 1] {
                    let mut y = x.clone();
                    y[axis] += step;
                    if self.is_shell(&y) {
                        out.push(pack(&y));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Graph of the box with the given per-edge conductances (aligned with
    /// [`LatticeBox::edges`]); the origin is the root, the shell the frame.
    pub fn graph_with<S: Scalar>(&self, conductances: &[S]) -> Result<WeightedGraph<S>> {
        let edges = self.edges();
        assert_eq!(edges.len(), conductances.len());
        let list = edges
            .iter()
            .zip(conductances)
            .map(|(e, &w)| (pack(&e.lower), pack(&e.upper()), w));
        WeightedGraph::build(list, pack(&self.origin()), &self.shell_labels())
    }

    /// Simple random walk on the box: all conductances one.
    pub fn unit_graph<S: Scalar>(&self) -> WeightedGraph<S> {
        let ones = vec![S::one(); self.edges().len()];
        self.graph_with(&ones).expect("unit box graph is valid")
    }

    pub fn coords<S: Scalar>(&self, g: &WeightedGraph<S>, v: Vertex) -> Coord {
        unpack(g.label(v), self.d)
    }
}

/// Interior vertices of `g` at Euclidean distance at most `radius` from the
/// origin (the lattice is read off the packed labels).
pub fn ball<S: Scalar>(g: &WeightedGraph<S>, d: usize, radius: f64) -> Result<Region<S>> {
    let r2 = radius * radius;
    let members = g.interior_vertices().filter(|&v| {
        let c = unpack(g.label(v), d);
        c.iter().map(|&x| (x * x) as f64).sum::<f64>() <= r2 + 1e-9
    });
    Region::new(g, members)
}

/// Connected component of the root inside `region`.
pub fn root_component<S: Scalar>(g: &WeightedGraph<S>, region: &Region<S>) -> Result<Region<S>> {
    if !region.contains(g.root()) {
        return Err(Error::RootNotInRegion);
    }
    let mut seen = vec![false; g.num_vertices()];
    let mut stack = vec![g.root()];
    seen[g.root()] = true;
    let mut members = Vec::new();
    while let Some(x) = stack.pop() {
        members.push(x);
        for (y, _) in g.neighbors(x) {
            if region.contains(y) && !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    Region::new(g, members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_roundtrip() {
        for d in 1..=5 {
            let c: Coord = (0..d as i64).map(|i| i * 7 - 11).collect();
            assert_eq!(unpack(pack(&c), d), c);
        }
    }

    #[test]
    fn unit_box_measures() {
        let b = LatticeBox::new(2, 3).unwrap();
        let g = b.unit_graph::<f64>();
        assert_eq!(g.interior_vertices().count(), 49);
        assert_eq!(g.frame_vertices().count(), 4 * 7);
        for v in g.interior_vertices() {
            assert_eq!(g.measure(v), 4.0);
        }
        assert_eq!(g.label(g.root()), pack(&[0, 0]));
        assert_eq!(b.edges().len(), g.num_edges());
    }

    #[test]
    fn edge_keys_are_box_independent() {
        let small = LatticeBox::new(3, 2).unwrap().edges();
        let big = LatticeBox::new(3, 4).unwrap().edges();
        let keys: std::collections::HashSet<u64> = big.iter().map(LatticeEdge::key).collect();
        assert_eq!(keys.len(), big.len());
        assert!(small.iter().all(|e| keys.contains(&e.key())));
    }

    #[test]
    fn ball_counts() {
        let g = LatticeBox::new(2, 5).unwrap().unit_graph::<f64>();
        assert_eq!(ball(&g, 2, 1.0).unwrap().len(), 5);
        assert_eq!(ball(&g, 2, 2.0).unwrap().len(), 13);
        let g3 = LatticeBox::new(3, 3).unwrap().unit_graph::<f64>();
        assert_eq!(ball(&g3, 3, 2.0).unwrap().len(), 33);
    }
}
