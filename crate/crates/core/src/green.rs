//! Green functions of the walk killed on leaving a region, and the exact
//! identities built on them.
//!
//! `G^A(x)` is the expected number of visits to `x` by the killed walk from
//! the root, divided by `m(x)`. It solves the symmetric system
//! `(diag(m) - mu) G = delta_root` on `A` and vanishes outside `A`.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{boundary_measure, Region, Vertex, WeightedGraph};
use crate::scalar::{exact_sum, Scalar};
use crate::solver::{solve_spd, SolverChoice, SymMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GreenField<S> {
    region: Region<S>,
    values: Vec<S>,
    root: Vertex,
    residual: f64,
}

impl<S: Scalar> GreenField<S> {
    pub fn region(&self) -> &Region<S> {
        &self.region
    }

    pub fn root(&self) -> Vertex {
        self.root
    }

    /// `G^A(x)`; zero outside the region.
    pub fn value(&self, x: Vertex) -> S {
        self.values[x]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// `G^A(root)`, the maximum of the field.
    pub fn max_value(&self) -> S {
        self.values[self.root]
    }

    /// Max-norm of `G(x) - sum_y p(x, y) G(y) - delta_root(x) / m(root)` over the
    /// region, as achieved by the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Short stable digest of the member labels.
    pub fn region_hash(&self, g: &WeightedGraph<S>) -> String {
        let mut h = Sha256::new();
        for l in self.region.labels(g) {
            h.update(l.to_le_bytes());
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// CSV dump `vertex,G` sorted by vertex label.
    pub fn write_csv<W: Write>(&self, g: &WeightedGraph<S>, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# region {} root {} residual {:e}",
            self.region_hash(g),
            g.label(self.root),
            self.residual
        )?;
        writeln!(out, "vertex,G")?;
        let mut rows: Vec<(i64, S)> = self
            .region
            .members()
            .iter()
            .map(|&v| (g.label(v), self.values[v]))
            .collect();
        rows.sort_by_key(|r| r.0);
        for (l, v) in rows {
            writeln!(out, "{l},{v}")?;
        }
        Ok(())
    }
}

/// Killed Green field of `region` with the default solver policy.
pub fn green_killed<S: Scalar>(g: &WeightedGraph<S>, region: &Region<S>, tol: f64) -> Result<GreenField<S>> {
    green_killed_with(g, region, tol, SolverChoice::Auto)
}

pub fn green_killed_with<S: Scalar>(
    g: &WeightedGraph<S>,
    region: &Region<S>,
    tol: f64,
    choice: SolverChoice,
) -> Result<GreenField<S>> {
    let root = g.root();
    if !region.contains(root) {
        return Err(Error::RootNotInRegion);
    }
    if !region.is_connected() {
        return Err(Error::NotConnected);
    }
    if boundary_measure(g, region) <= S::zero() {
        return Err(Error::NoExit);
    }
    let members = region.members();
    let mut local = vec![usize::MAX; g.num_vertices()];
    for (i, &v) in members.iter().enumerate() {
        local[v] = i;
    }
    let mut diag = Vec::with_capacity(members.len());
    let mut rows = Vec::with_capacity(members.len());
    for &x in members {
        let mut d = g.measure(x);
        let mut row = Vec::new();
        for (y, w) in g.neighbors(x) {
            if y == x {
                d -= w;
            } else if region.contains(y) {
                row.push((local[y], -w));
            }
        }
        diag.push(d);
        rows.push(row);
    }
    let a = SymMatrix::from_rows(diag, rows);
    let mut b = vec![S::zero(); members.len()];
    b[local[root]] = S::one();
    let solved = solve_spd(&a, &b, tol, choice)?;

    let mut values = vec![S::zero(); g.num_vertices()];
    for (i, &v) in members.iter().enumerate() {
        values[v] = solved.x[i];
    }
    let mut field = GreenField {
        region: region.clone(),
        values,
        root,
        residual: 0.0,
    };
    field.residual = equation_residual(g, &field, true);
    Ok(field)
}

fn equation_residual<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, include_root: bool) -> f64 {
    let root = gf.root;
    let source = S::one() / g.measure(root);
    gf.region
        .members()
        .iter()
        .filter(|&&x| include_root || x != root)
        .map(|&x| {
            let mx = g.measure(x);
            let avg = exact_sum(g.neighbors(x).map(|(y, w)| w * gf.values[y]));
            let mut r = gf.values[x] - avg / mx;
            if x == root {
                r -= source;
            }
            r.abs().to_f64_lossy()
        })
        .fold(0.0, f64::max)
}

/// Max over `A \ {root}` of `|G(x) - sum_y p(x, y) G(y)|`.
pub fn harmonic_residual<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> f64 {
    equation_residual(g, gf, false)
}

/// Net flow of `G` out through the edge boundary of `b`:
/// `sum_{x in B, y not in B} mu(x, y) (G(x) - G(y))`. Equals one when `B`
/// holds the root and zero otherwise.
pub fn flow_through<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, b: &Region<S>) -> S {
    exact_sum(b.members().iter().flat_map(|&x| {
        g.neighbors(x)
            .filter(|&(y, _)| !b.contains(y))
            .map(move |(y, w)| w * (gf.values[x] - gf.values[y]))
    }))
}

/// `A_s = {x : G(x) >= s}`. Float fields compare with a relative slack of
/// the scalar's tie tolerance times `G(root)`.
pub fn level_set<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, s: S) -> Region<S> {
    let slack = S::tie_tolerance() * gf.max_value();
    let members = gf
        .region
        .members()
        .iter()
        .copied()
        .filter(|&x| gf.values[x] >= s - slack);
    Region::new(g, members).expect("level sets avoid the frame")
}

/// Level set that failed to be connected or to contain the root.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetIssue {
    pub level: f64,
    pub size: usize,
    pub contains_root: bool,
    pub connected: bool,
}

/// Checks every distinct level set of the field.
pub fn check_level_sets<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> Vec<LevelSetIssue> {
    let mut issues = Vec::new();
    for s in crate::levelset::level_values(gf) {
        if s <= S::zero() {
            continue;
        }
        let a = level_set(g, gf, s);
        if a.is_empty() {
            continue;
        }
        let contains_root = a.contains(gf.root);
        if !contains_root || !a.is_connected() {
            issues.push(LevelSetIssue {
                level: s.to_f64_lossy(),
                size: a.len(),
                contains_root,
                connected: a.is_connected(),
            });
        }
    }
    issues
}

/// `E_root(tau_A) = sum_{x in A} m(x) G^A(x)`.
pub fn exit_time_exact<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> S {
    mass_weighted_sum(g, gf, gf.region.members())
}

/// `sum_{x in subset} m(x) G(x)`.
pub fn mass_weighted_sum<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, subset: &[Vertex]) -> S {
    exact_sum(subset.iter().map(|&x| g.measure(x) * gf.values[x]))
}

/// Occupation values `sum_{x in A} m(x) G^{B_R}(x)` over a growing family of
/// killed boxes.
#[derive(Debug, Clone)]
pub struct OccupationSequence<S> {
    pub values: Vec<(u32, S)>,
}

impl<S: Scalar> OccupationSequence<S> {
    /// `(v_k - v_{k-1}) / v_{k-1}` for consecutive radii.
    pub fn relative_increments(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].1.to_f64_lossy(), w[1].1.to_f64_lossy());
                if a > 0.0 {
                    (b - a) / a
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn last(&self) -> Option<S> {
        self.values.last().map(|v| v.1)
    }

    /// Richardson extrapolation of the last two values assuming an error of
    /// order `R^{-order}`.
    pub fn extrapolated(&self, order: f64) -> Option<f64> {
        let n = self.values.len();
        if n < 2 {
            return self.last().map(|v| v.to_f64_lossy());
        }
        let (r1, v1) = (f64::from(self.values[n - 2].0), self.values[n - 2].1.to_f64_lossy());
        let (r2, v2) = (f64::from(self.values[n - 1].0), self.values[n - 1].1.to_f64_lossy());
        let ratio = (r2 / r1).powf(order);
        Some(v2 + (v2 - v1) / (ratio - 1.0))
    }
}

/// Builds the killed field of each box in the family and sums `m G` over the
/// target set. `family(R)` returns the box graph (frame at its edge) and the
/// target set inside it.
pub fn occupation_truncated<S, F>(radii: &[u32], tol: f64, mut family: F) -> Result<OccupationSequence<S>>
where
    S: Scalar,
    F: FnMut(u32) -> Result<(WeightedGraph<S>, Region<S>)>,
{
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let (g, target) = family(r)?;
        if target.is_empty() {
            values.push((r, S::zero()));
            continue;
        }
        let ambient = Region::interior(&g);
        if target.members().iter().any(|&x| !ambient.contains(x)) {
            return Err(Error::RegionNotContained);
        }
        let gf = green_killed(&g, &ambient, tol)?;
        values.push((r, mass_weighted_sum(&g, &gf, target.members())));
    }
    Ok(OccupationSequence { values })
}
