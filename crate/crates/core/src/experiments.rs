//! Pipelines shared by the command-line runner and the acceptance suite:
//! the bound chain per region, log-log scaling fits, and occupation
//! sequences over growing boxes.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{environment_graph, sample_environment, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::graph::{Region, WeightedGraph};
use crate::green::{exit_time_exact, green_killed, mass_weighted_sum, occupation_truncated, OccupationSequence};
use crate::isoperimetry::cis_levelsets;
use crate::lattice::{ball, LatticeBox};
use crate::levelset::{check_edu, factor_two_check, profile_u, profile_u_occupation, LevelProfile, EDU_SLACK};
use crate::ode::{bound_exit, bound_occupation, solve_bound_curve, BoundCurve, ProfileFunction};
use crate::scalar::Scalar;

/// Relative slack for the float comparisons `2 int u <= bound` and
/// `u <= v`.
pub const CHAIN_SLACK: f64 = 1e-9;

/// `F` with the floor convention at the root measure, unless a floor is set.
pub fn floored_at_root<S: Scalar>(f: &ProfileFunction, g: &WeightedGraph<S>) -> ProfileFunction {
    if f.floor > 0.0 {
        f.clone()
    } else {
        f.clone().with_floor(g.measure(g.root()).to_f64_lossy())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub name: String,
    pub m_a: f64,
    /// `sum_{x in A} m(x) G^A(x)`.
    pub exact: f64,
    pub twice_integral_u: f64,
    pub bound: f64,
    pub c_levelset: f64,
    pub edu_checked: usize,
    pub edu_violations: usize,
    /// Knots where the profile exceeds the comparison curve.
    pub comparison_violations: usize,
    pub factor_two_holds: bool,
    pub ok: bool,
}

/// Knots of `lp` where `u > cap(v)` beyond the relative slack.
fn comparison_violations<S: Scalar>(lp: &LevelProfile<S>, curve: &BoundCurve, cap: f64) -> usize {
    lp.knots()
        .filter(|&(s, at, right, _, _)| {
            let s = s.to_f64_lossy();
            let limit = if s == 0.0 && curve.is_transient() {
                cap
            } else {
                curve.v_plus_capped(s, cap)
            };
            let limit = limit * (1.0 + CHAIN_SLACK) + 1e-300;
            at.to_f64_lossy() > limit || right.to_f64_lossy() > limit
        })
        .count()
}

/// Green field, profile, level-set constant, differential inequation,
/// comparison curve and exit bound for one region.
pub fn verify_bounds_row<S: Scalar>(
    g: &WeightedGraph<S>,
    region: &Region<S>,
    name: &str,
    f: &ProfileFunction,
    tol: f64,
) -> Result<BoundRow> {
    let f = floored_at_root(f, g);
    let gf = green_killed(g, region, tol)?;
    let lp = profile_u(g, &gf);
    let f2 = factor_two_check(g, &gf, &lp);
    let iso = cis_levelsets(g, &gf, &f);
    let c = iso.constant;
    let edu = check_edu(&lp, &f, c, EDU_SLACK);
    let m_a = region.measure().to_f64_lossy();
    let curve = solve_bound_curve(&f, c, Some(m_a))?;
    let bound = bound_exit(&curve);
    let comparison = comparison_violations(&lp, &curve, f64::INFINITY);
    let twice = f2.twice_integral.to_f64_lossy();
    let ok = f2.holds && twice <= bound * (1.0 + CHAIN_SLACK) && edu.ok() && comparison == 0;
    Ok(BoundRow {
        name: name.to_string(),
        m_a,
        exact: exit_time_exact(g, &gf).to_f64_lossy(),
        twice_integral_u: twice,
        bound,
        c_levelset: c,
        edu_checked: edu.checked,
        edu_violations: edu.violations.len(),
        comparison_violations: comparison,
        factor_two_holds: f2.holds,
        ok,
    })
}

/// [`verify_bounds_row`] over a list of named regions, in order.
pub fn verify_bounds<S: Scalar>(
    g: &WeightedGraph<S>,
    regions: &[(String, Region<S>)],
    f: &ProfileFunction,
    tol: f64,
) -> Result<Vec<BoundRow>> {
    regions
        .par_iter()
        .map(|(name, region)| verify_bounds_row(g, region, name, f, tol))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationRow {
    pub name: String,
    pub m_a: f64,
    /// `sum_{x in A} m(x) G(x)` in the ambient box.
    pub exact: f64,
    pub twice_integral_u: f64,
    pub bound: f64,
    pub c_levelset: f64,
    pub edu_violations: usize,
    pub comparison_violations: usize,
    pub ok: bool,
}

/// The occupation chain in one ambient box (its whole interior killed at
/// the shell): the ambient profile satisfies the differential inequation,
/// `u~ <= min(v_+, m(A))` for the transient curve, and
/// `sum_A m G <= 2 int u~ <= 2 int v_{+A}`.
pub fn verify_occupation_row<S: Scalar>(
    g: &WeightedGraph<S>,
    target: &Region<S>,
    name: &str,
    f: &ProfileFunction,
    tol: f64,
) -> Result<OccupationRow> {
    let f = floored_at_root(f, g);
    let ambient = Region::interior(g);
    let gf = green_killed(g, &ambient, tol)?;
    let lp = profile_u(g, &gf);
    let c = cis_levelsets(g, &gf, &f).constant;
    let edu = check_edu(&lp, &f, c, EDU_SLACK);
    let curve = solve_bound_curve(&f, c, None)?;
    let lt = profile_u_occupation(g, &gf, target)?;
    let m_a = target.measure().to_f64_lossy();
    let bound = bound_occupation(&curve, m_a)?;
    let comparison = comparison_violations(&lp, &curve, f64::INFINITY) + comparison_violations(&lt, &curve, m_a);
    let exact_s = mass_weighted_sum(g, &gf, target.members());
    let twice_s = (S::one() + S::one()) * lt.integral();
    let twice = twice_s.to_f64_lossy();
    let ok = exact_s <= twice_s && twice <= bound * (1.0 + CHAIN_SLACK) && edu.ok() && comparison == 0;
    Ok(OccupationRow {
        name: name.to_string(),
        m_a,
        exact: exact_s.to_f64_lossy(),
        twice_integral_u: twice,
        bound,
        c_levelset: c,
        edu_violations: edu.violations.len(),
        comparison_violations: comparison,
        ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// `log y - (intercept + slope log x)` per point.
    pub residuals: Vec<f64>,
}

/// Least-squares line through `(log x, log y)`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs matching positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if lx.len() < 2 || sxx <= 1e-24 {
        return Err(Error::DegenerateRegression);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    Ok(LogLogFit {
        slope,
        intercept,
        residuals,
    })
}

/// Where the scaling graphs come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Medium {
    /// All conductances one.
    Lattice,
    /// i.i.d. conductances, coupled across box sizes.
    Environment { law: EnvironmentLaw, seed: u64 },
}

impl Medium {
    /// The box of half-width `n` in this medium.
    pub fn graph(&self, d: usize, n: i64) -> Result<WeightedGraph<f64>> {
        let lattice = LatticeBox::new(d, n)?;
        match self {
            Medium::Lattice => Ok(lattice.unit_graph()),
            Medium::Environment { law, seed } => environment_graph(&sample_environment(law, lattice, *seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub radius: f64,
    pub m_a: f64,
    pub value: f64,
    /// Box half-widths behind an extrapolated occupation value.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub d: usize,
    pub quantity: &'static str,
    pub points: Vec<ScalingPoint>,
    pub fit: LogLogFit,
}

/// Exact exit times of balls of the given radii, all cut from one box just
/// large enough to hold the largest.
pub fn exit_scaling(medium: &Medium, d: usize, radii: &[f64], tol: f64) -> Result<ScalingReport> {
    let n = radii.iter().fold(1.0f64, |a, &b| a.max(b)).ceil() as i64 + 1;
    let g = medium.graph(d, n)?;
    let points = radii
        .par_iter()
        .map(|&r| {
            let region = ball(&g, d, r)?;
            let gf = green_killed(&g, &region, tol)?;
            Ok(ScalingPoint {
                radius: r,
                m_a: region.measure(),
                value: exit_time_exact(&g, &gf),
                boxes: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.m_a).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
    let fit = loglog_fit(&xs, &ys)?;
    Ok(ScalingReport {
        d,
        quantity: "exit",
        points,
        fit,
    })
}

/// Occupation of the ball of radius `r` in boxes of half-width
/// `factors * r`, extrapolated in the box size with error order 1.
pub fn converged_occupation(
    medium: &Medium,
    d: usize,
    r: f64,
    factors: &[u32],
    tol: f64,
) -> Result<(OccupationSequence<f64>, f64, f64)> {
    let radii: Vec<u32> = factors.iter().map(|k| (k * r.ceil() as u32).max(r.ceil() as u32 + 1)).collect();
    let mut m_a = 0.0;
    let seq = occupation_truncated(&radii, tol, |n| {
        let g = medium.graph(d, i64::from(n))?;
        let target = ball(&g, d, r)?;
        m_a = target.measure();
        Ok((g, target))
    })?;
    let value = seq.extrapolated(1.0).expect("at least one box");
    Ok((seq, value, m_a))
}

/// Default box multiples for [`occupation_scaling`].
pub const OCCUPATION_FACTORS: [u32; 2] = [3, 4];

/// Converged occupation times of balls against their measure.
pub fn occupation_scaling(medium: &Medium, d: usize, radii: &[f64], factors: &[u32], tol: f64) -> Result<ScalingReport> {
    let points = radii
        .par_iter()
        .map(|&r| {
            let (seq, value, m_a) = converged_occupation(medium, d, r, factors, tol)?;
            Ok(ScalingPoint {
                radius: r,
                m_a,
                value,
                boxes: seq.values.iter().map(|v| v.0).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.m_a).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
    let fit = loglog_fit(&xs, &ys)?;
    Ok(ScalingReport {
        d,
        quantity: "occupation",
        points,
        fit,
    })
}

/// `m(o) G^{B_R}(o)` for the boxes `[-R, R]^d` (or the segment for `d = 1`).
pub fn origin_occupation(medium: &Medium, d: usize, radii: &[u32], tol: f64) -> Result<OccupationSequence<f64>> {
    occupation_truncated(radii, tol, |n| {
        let g = medium.graph(d, i64::from(n))?;
        let target = Region::new(&g, [g.root()])?;
        Ok((g, target))
    })
}
