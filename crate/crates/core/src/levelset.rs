//! The linearized level-set profile
//!
//! ```text
//! u(s) = sum_{x in A_s, y} mu(x, y) (G(x) - max{s, G(y)}) / (G(x) - G(y))
//! ```
//!
//! and its occupation variant `u~`, which restricts `x` to a target set and
//! reads an ambient field. Each ordered pair `(x, y)` contributes `mu` on
//! `(0, G(y)]`, decays linearly to zero on `(G(y), G(x)]` and vanishes
//! above; pairs with `G(y) >= G(x)` (ties, self-loops, uphill neighbors)
//! contribute a constant `mu` up to `G(x)` and then drop. The profile is
//! therefore piecewise linear with downward jumps, left-continuous, and is
//! stored exactly by its values and slopes at the distinct field values.
//!
//! Float fields are first snapped: values within the scalar's tie tolerance
//! (relative to `G(root)`) are merged, so harmonic dead ends that tie with
//! their attachment point stay in the same level set.

use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{Region, Vertex, WeightedGraph};
use crate::green::GreenField;
use crate::ode::ProfileFunction;
use crate::scalar::{exact_sum, Accumulator, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `u` of a killed field over its own region.
    Standard,
    /// `u~` of an ambient field restricted to a target set.
    Occupation,
}

/// Field values with near-ties merged (max of each group); zero outside
/// the region.
pub fn snapped_values<S: Scalar>(gf: &GreenField<S>) -> Vec<S> {
    let mut out = gf.values().to_vec();
    let members = gf.region().members();
    let mut order: Vec<Vertex> = members.to_vec();
    order.sort_by(|&a, &b| out[b].partial_cmp(&out[a]).expect("finite field"));
    let slack = S::tie_tolerance() * gf.max_value();
    let mut prev: Option<S> = None;
    let mut leader = S::zero();
    for v in order {
        let x = out[v];
        match prev {
            Some(p) if p - x <= slack => {}
            _ => leader = x,
        }
        prev = Some(x);
        out[v] = leader;
    }
    out
}

/// Distinct positive (snapped) field values, ascending.
pub fn level_values<S: Scalar>(gf: &GreenField<S>) -> Vec<S> {
    let snapped = snapped_values(gf);
    let mut vals: Vec<S> = gf.region().members().iter().map(|&v| snapped[v]).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite field"));
    vals.dedup();
    vals
}

/// Level sets `{x : G(x) >= b}` for every distinct positive value `b`,
/// ascending in `b` (so descending in size), computed on snapped values.
pub fn level_sets<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> Vec<(S, Region<S>)> {
    let snapped = snapped_values(gf);
    let mut order: Vec<Vertex> = gf.region().members().to_vec();
    order.sort_by(|&a, &b| snapped[b].partial_cmp(&snapped[a]).expect("finite field"));
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let b = snapped[order[i]];
        while i < order.len() && snapped[order[i]] == b {
            i += 1;
        }
        out.push((b, Region::new(g, order[..i].iter().copied()).expect("no frame in region")));
    }
    out.reverse();
    out
}

#[derive(Debug, Clone)]
pub struct LevelProfile<S> {
    kind: ProfileKind,
    /// `b_0 = 0 < b_1 < ... < b_K`.
    breakpoints: Vec<S>,
    /// `slopes[k]` is the slope on `(b_{k-1}, b_k]`; `slopes[0]` is unused.
    slopes: Vec<S>,
    /// `u(b_k)`.
    at: Vec<S>,
    /// `u(b_k+)`.
    right: Vec<S>,
    /// Measure of `{x : G(x) >= b_k}` within the summation set.
    level_mass: Vec<S>,
    mass: S,
}

impl<S: Scalar> LevelProfile<S> {
    fn empty(kind: ProfileKind) -> Self {
        LevelProfile {
            kind,
            breakpoints: vec![S::zero()],
            slopes: vec![S::zero()],
            at: vec![S::zero()],
            right: vec![S::zero()],
            level_mass: vec![S::zero()],
            mass: S::zero(),
        }
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn breakpoints(&self) -> &[S] {
        &self.breakpoints
    }

    /// Number of linear segments.
    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Measure of the summation set (`u(0)`).
    pub fn mass(&self) -> S {
        self.mass
    }

    pub fn top(&self) -> S {
        *self.breakpoints.last().expect("nonempty")
    }

    /// Index `k` with `b_{k-1} < s <= b_k`, or `None` above the top.
    fn segment_of(&self, s: S) -> Option<usize> {
        if s > self.top() {
            return None;
        }
        let k = self.breakpoints.partition_point(|&b| b < s);
        Some(k.max(1).min(self.segments().max(1)))
    }

    pub fn eval(&self, s: S) -> S {
        if s <= S::zero() {
            return self.at[0];
        }
        match self.segment_of(s) {
            None => S::zero(),
            Some(k) if self.segments() == 0 => {
                let _ = k;
                S::zero()
            }
            Some(k) => self.at[k] + self.slopes[k] * (s - self.breakpoints[k]),
        }
    }

    /// Left derivative `u'(s)`; zero above the top value.
    pub fn left_derivative(&self, s: S) -> S {
        if self.segments() == 0 {
            return S::zero();
        }
        match self.segment_of(s) {
            None => S::zero(),
            Some(k) => self.slopes[k],
        }
    }

    /// `(b_k, u(b_k), u(b_k+), slope on (b_{k-1}, b_k], m(A_{b_k}))`.
    pub fn knots(&self) -> impl Iterator<Item = (S, S, S, S, S)> + '_ {
        (0..self.breakpoints.len()).map(move |k| {
            (
                self.breakpoints[k],
                self.at[k],
                self.right[k],
                self.slopes[k],
                self.level_mass[k],
            )
        })
    }

    /// Exact integral of the piecewise-linear profile over `[0, inf)`.
    pub fn integral(&self) -> S {
        let two = S::one() + S::one();
        exact_sum((1..self.breakpoints.len()).map(|k| {
            let len = self.breakpoints[k] - self.breakpoints[k - 1];
            (self.right[k - 1] + self.at[k]) * len / two
        }))
    }

    /// CSV dump `s,u,left_derivative` at the breakpoints (empty derivative at 0).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,u,left_derivative")?;
        for k in 0..self.breakpoints.len() {
            if k == 0 {
                writeln!(out, "{},{},", self.breakpoints[0], self.at[0])?;
            } else {
                writeln!(out, "{},{},{}", self.breakpoints[k], self.at[k], self.slopes[k])?;
            }
        }
        Ok(())
    }
}

fn build_profile<S: Scalar>(
    g: &WeightedGraph<S>,
    values: &[S],
    xs: &[Vertex],
    kind: ProfileKind,
) -> LevelProfile<S> {
    if xs.is_empty() {
        return LevelProfile::empty(kind);
    }
    let mut breakpoints = vec![S::zero()];
    for &x in xs {
        breakpoints.push(values[x]);
        breakpoints.extend(g.neighbors(x).map(|(y, _)| values[y]));
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite field"));
    breakpoints.dedup();
    let kk = breakpoints.len() - 1;
    let idx = |v: S| {
        breakpoints
            .binary_search_by(|b| b.partial_cmp(&v).expect("finite field"))
            .expect("value is a breakpoint")
    };

    let mut jump = vec![S::Sum::default(); kk + 1];
    let mut starts: Vec<Vec<S>> = vec![Vec::new(); kk + 1];
    let mut ends: Vec<Vec<S>> = vec![Vec::new(); kk + 1];
    let mut level_mass = vec![S::Sum::default(); kk + 1];
    let mut mass = S::Sum::default();
    for &x in xs {
        let ix = idx(values[x]);
        level_mass[ix].add(g.measure(x));
        mass.add(g.measure(x));
        for (y, w) in g.neighbors(x) {
            let iy = idx(values[y]);
            if iy >= ix {
                jump[ix].add(w);
            } else {
                let rate = w / (breakpoints[ix] - breakpoints[iy]);
                starts[ix].push(rate);
                ends[iy].push(rate);
            }
        }
    }

    let mut slopes = vec![S::zero(); kk + 1];
    let mut at = vec![S::zero(); kk + 1];
    let mut right = vec![S::zero(); kk + 1];
    let mut masses = vec![S::zero(); kk + 1];
    let mut rate = S::Sum::default();
    let mut u = S::Sum::default();
    let mut m_level = S::Sum::default();
    for k in (0..=kk).rev() {
        right[k] = u.value();
        u.add(jump[k].value());
        at[k] = u.value();
        m_level.add(level_mass[k].value());
        masses[k] = m_level.value();
        if k == 0 {
            break;
        }
        for &r in &starts[k] {
            rate.add(r);
        }
        for &r in &ends[k] {
            rate.add(-r);
        }
        let active = rate.value();
        slopes[k] = -active;
        u.add(active * (breakpoints[k] - breakpoints[k - 1]));
    }
    // The segment (b_0, b_1] starts at u(0+), which equals u(0) exactly.
    LevelProfile {
        kind,
        breakpoints,
        slopes,
        at,
        right,
        level_mass: masses,
        mass: mass.value(),
    }
}

/// Profile `u` of a killed field over its own region.
pub fn profile_u<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> LevelProfile<S> {
    let values = snapped_values(gf);
    build_profile(g, &values, gf.region().members(), ProfileKind::Standard)
}

/// Occupation profile `u~` of the ambient field with `x` restricted to `a`.
pub fn profile_u_occupation<S: Scalar>(
    g: &WeightedGraph<S>,
    ambient: &GreenField<S>,
    a: &Region<S>,
) -> Result<LevelProfile<S>> {
    if a.members().iter().any(|&x| !ambient.region().contains(x)) {
        return Err(Error::RegionNotContained);
    }
    let values = snapped_values(ambient);
    Ok(build_profile(g, &values, a.members(), ProfileKind::Occupation))
}

/// Direct evaluation of the defining sum at `s` (no profile structure).
pub fn u_direct<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, xs: &[Vertex], s: S) -> S {
    let values = snapped_values(gf);
    exact_sum(xs.iter().filter(|&&x| values[x] >= s).flat_map(|&x| {
        let values = &values;
        g.neighbors(x).map(move |(y, w)| {
            let (gx, gy) = (values[x], values[y]);
            if gy >= s || gy >= gx {
                w
            } else {
                w * (gx - s) / (gx - gy)
            }
        })
    }))
}

/// Left derivative from the boundary of the level set:
/// `-sum_{(x, y) in dA_s} mu(x, y) / (G(x) - G(y))`.
pub fn left_derivative_from_boundary<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, s: S) -> S {
    let values = snapped_values(gf);
    // A_t for t slightly below s: all x with G(x) >= s.
    -exact_sum(
        gf.region()
            .members()
            .iter()
            .filter(|&&x| values[x] >= s)
            .flat_map(|&x| {
                let values = &values;
                g.neighbors(x)
                    .filter(move |&(y, _)| values[y] < s)
                    .map(move |(y, w)| w / (values[x] - values[y]))
            }),
    )
}

/// `sum_{x in A, y} mu(x, y) min{G(x), (G(x) + G(y)) / 2}`.
pub fn integral_closed_form<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>) -> S {
    let two = S::one() + S::one();
    exact_sum(gf.region().members().iter().flat_map(|&x| {
        let gx = gf.value(x);
        g.neighbors(x)
            .map(move |(y, w)| w * gx.min_of((gx + gf.value(y)) / two))
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct IntegralCheck<S> {
    pub integral: S,
    pub closed_form: S,
}

impl<S: Scalar> IntegralCheck<S> {
    pub fn relative_gap(&self) -> f64 {
        let a = self.integral.to_f64_lossy();
        let b = self.closed_form.to_f64_lossy();
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }
}

/// Breakpoint integral of `u` next to the closed form.
pub fn integral_u<S: Scalar>(g: &WeightedGraph<S>, gf: &GreenField<S>, lp: &LevelProfile<S>) -> IntegralCheck<S> {
    IntegralCheck {
        integral: lp.integral(),
        closed_form: integral_closed_form(g, gf),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FactorTwoReport<S> {
    /// `sum_{x in A} m(x) G(x)`.
    pub exit_time: S,
    /// `2 * integral of u`.
    pub twice_integral: S,
    pub slack: S,
    pub holds: bool,
}

pub fn factor_two_check<S: Scalar>(
    g: &WeightedGraph<S>,
    gf: &GreenField<S>,
    lp: &LevelProfile<S>,
) -> FactorTwoReport<S> {
    let exit_time = crate::green::exit_time_exact(g, gf);
    let twice_integral = (S::one() + S::one()) * lp.integral();
    FactorTwoReport {
        exit_time,
        twice_integral,
        slack: twice_integral - exit_time,
        holds: exit_time <= twice_integral,
    }
}

/// Default relative slack of [`check_edu`] for float profiles.
pub const EDU_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EduViolation {
    /// Right end `b_k` of the offending segment.
    pub s: f64,
    /// Largest profile value on the segment, `u(b_{k-1}+)`.
    pub u: f64,
    pub derivative: f64,
    /// `-(C F(u))^2`.
    pub required: f64,
    /// `required - derivative`; negative for a violation.
    pub margin: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EduReport {
    pub checked: usize,
    pub violations: Vec<EduViolation>,
    /// Smallest `margin / |required|` over checked segments.
    pub min_relative_margin: f64,
}

impl EduReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `u'(s) <= -(C F(u(s)))^2` on every segment where `u > 0`. On a
/// segment the slope is constant and `F(u)` is largest at the segment's
/// lower end, so that end (the right limit `u(b_{k-1}+)`) is tested. A
/// segment fails when its margin is below `-slack * (C F(u))^2`.
pub fn check_edu<S: Scalar>(lp: &LevelProfile<S>, f: &ProfileFunction, c: f64, slack: f64) -> EduReport {
    let mut report = EduReport {
        min_relative_margin: f64::INFINITY,
        ..Default::default()
    };
    for k in 1..lp.breakpoints.len() {
        let u = lp.right[k - 1].to_f64_lossy();
        if u <= 0.0 {
            continue;
        }
        report.checked += 1;
        let derivative = lp.slopes[k].to_f64_lossy();
        let cf = c * f.eval(u);
        let required = -(cf * cf);
        let margin = required - derivative;
        if required != 0.0 {
            report.min_relative_margin = report.min_relative_margin.min(margin / required.abs());
        }
        if margin < -slack * required.abs() {
            report.violations.push(EduViolation {
                s: lp.breakpoints[k].to_f64_lossy(),
                u,
                derivative,
                required,
                margin,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::green_killed;
    use crate::scalar::Rational;

    fn q(a: i128, b: i128) -> Rational {
        Rational::new(a, b)
    }

    fn instance(labels: &[i64]) -> (WeightedGraph<Rational>, GreenField<Rational>) {
        let g = WeightedGraph::build((-1..3).map(|i| (i, i + 1, q(1, 1))), 0, &[-1, 3]).unwrap();
        let a = Region::from_labels(&g, labels).unwrap();
        let gf = green_killed(&g, &a, 0.0).unwrap();
        (g, gf)
    }

    #[test]
    fn two_vertex_profile_values() {
        let (g, gf) = instance(&[0, 1]);
        let lp = profile_u(&g, &gf);
        assert_eq!(lp.eval(q(0, 1)), q(4, 1));
        assert_eq!(lp.eval(q(1, 2)), q(3, 4));
        assert_eq!(lp.eval(q(2, 3)), q(0, 1));
        assert_eq!(lp.eval(q(7, 10)), q(0, 1));
        assert_eq!(lp.eval(q(1, 3)), q(5, 2));
        assert_eq!(lp.left_derivative(q(1, 2)), q(-9, 2));
        assert_eq!(lp.left_derivative(q(1, 6)), q(-9, 2));
        assert_eq!(lp.left_derivative(q(1, 1)), q(0, 1));
        assert_eq!(lp.breakpoints(), [q(0, 1), q(1, 3), q(2, 3)]);
        for s in [q(1, 6), q(1, 3), q(1, 2), q(2, 3)] {
            assert_eq!(lp.eval(s), u_direct(&g, &gf, gf.region().members(), s));
            assert_eq!(lp.left_derivative(s), left_derivative_from_boundary(&g, &gf, s));
        }
    }

    #[test]
    fn two_vertex_integral_and_factor_two() {
        let (g, gf) = instance(&[0, 1]);
        let lp = profile_u(&g, &gf);
        let ic = integral_u(&g, &gf, &lp);
        assert_eq!(ic.integral, q(4, 3));
        assert_eq!(ic.closed_form, q(4, 3));
        let f2 = factor_two_check(&g, &gf, &lp);
        assert_eq!(f2.exit_time, q(2, 1));
        assert_eq!(f2.twice_integral, q(8, 3));
        assert!(f2.holds);
    }

    #[test]
    fn single_vertex_equality_case() {
        let (g, gf) = instance(&[0]);
        let lp = profile_u(&g, &gf);
        let ic = integral_u(&g, &gf, &lp);
        assert_eq!(ic.integral, q(1, 2));
        assert_eq!(ic.closed_form, q(1, 2));
        let f2 = factor_two_check(&g, &gf, &lp);
        assert_eq!(f2.exit_time, f2.twice_integral);
        assert!(f2.holds);
        assert_eq!(f2.slack, q(0, 1));
    }

    #[test]
    fn empty_profile() {
        let (g, gf) = instance(&[0, 1]);
        let lp = profile_u_occupation(&g, &gf, &Region::empty(&g)).unwrap();
        assert_eq!(lp.integral(), q(0, 1));
        assert_eq!(lp.eval(q(1, 10)), q(0, 1));
        assert_eq!(lp.left_derivative(q(1, 10)), q(0, 1));
    }

    #[test]
    fn occupation_profile_of_whole_region_is_u() {
        let (g, gf) = instance(&[0, 1]);
        let lp = profile_u(&g, &gf);
        let lt = profile_u_occupation(&g, &gf, gf.region()).unwrap();
        assert_eq!(lp.breakpoints(), lt.breakpoints());
        for s in lp.breakpoints() {
            assert_eq!(lp.eval(*s), lt.eval(*s));
        }
        assert_eq!(lt.kind(), ProfileKind::Occupation);
    }

    #[test]
    fn occupation_target_must_be_inside() {
        let (g, gf) = instance(&[0]);
        let outside = Region::from_labels(&g, &[1]).unwrap();
        assert!(matches!(
            profile_u_occupation(&g, &gf, &outside),
            Err(Error::RegionNotContained)
        ));
    }

    #[test]
    fn csv_rows() {
        let (g, gf) = instance(&[0, 1]);
        let mut out = Vec::new();
        profile_u(&g, &gf).write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "s,u,left_derivative\n0,4,\n1/3,5/2,-9/2\n2/3,0,-9/2\n");
    }

    #[test]
    fn snapping_merges_float_ties() {
        // A dangling vertex ties with its attachment point.
        let g = WeightedGraph::build(
            [(-1, 0, 1.0), (0, 1, 1.0), (1, 2, 1.0), (1, 5, 0.3), (2, 3, 1.0)],
            0,
            &[-1, 3],
        )
        .unwrap();
        let gf = green_killed(&g, &Region::interior(&g), 1e-12).unwrap();
        let snapped = snapped_values(&gf);
        let (v1, v5) = (g.vertex(1).unwrap(), g.vertex(5).unwrap());
        assert_eq!(snapped[v1], snapped[v5]);
        assert!(crate::green::check_level_sets(&g, &gf).is_empty());
        for (_, set) in level_sets(&g, &gf) {
            assert!(set.is_connected() && set.contains(g.root()));
        }
    }
}
