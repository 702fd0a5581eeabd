use std::fmt::Write as _;

use awlab_core::experiments::{
    exit_scaling, floored_at_root, occupation_scaling, origin_occupation, verify_bounds as bound_rows, verify_occupation_row,
    Medium,
    OCCUPATION_FACTORS,
};
use awlab_core::green::{exit_time_exact, mass_weighted_sum};
use awlab_core::isoperimetry::{
    cis_exhaustive, cis_levelsets, cis_sampled, verify_betac, BetacConfig, Growth, DEFAULT_BUDGET,
};
use awlab_core::levelset::{factor_two_check, integral_u, profile_u};
use awlab_core::ode::transience_diagnostic;
use awlab_core::walker::{
    regular_tree_depth_law, simulate_displacement, simulate_exit, simulate_occupation, GraphWalk, RegularTree,
};
use awlab_core::{green_killed, ProfileFunction, Region};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::input::{self, Input, Loaded};
use crate::{CliError, Outcome, Run};

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> awlab_core::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("writers emit UTF-8"))
}

/// `F` from the spec, or `x^{1-1/d}` for lattice inputs.
fn resolve_f(spec: &mut Option<String>, floor: Option<f64>, loaded: &Loaded) -> Result<ProfileFunction, CliError> {
    if spec.is_none() {
        let d = loaded
            .d
            .ok_or_else(|| CliError::Config("--F is required for graph inputs".into()))?;
        *spec = Some(format!("power:{d}"));
    }
    input::profile_function(spec.as_deref().expect("set above"), floor)
}

/// The value in `slot`, after storing `default` there if it was empty.
fn text(slot: &mut Option<String>, default: &str) -> String {
    slot.get_or_insert_with(|| default.into()).clone()
}

fn single_region(spec: &mut Option<String>, loaded: &Loaded) -> Result<Region<f64>, CliError> {
    let mut list = input::regions(&text(spec, "interior"), loaded)?;
    if list.len() != 1 {
        return Err(CliError::Config("this command takes a single region".into()));
    }
    Ok(list.remove(0).1)
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenEnv {}

pub fn gen_env(run: &Run, input: &Input, _: &mut GenEnv) -> Result<Outcome, CliError> {
    if input.env.is_none() {
        return Err(CliError::Config("gen-env needs --env".into()));
    }
    let loaded = input.load(run.seed)?;
    let env = loaded.env.as_ref().expect("environment input");
    let dump = csv_bytes(|out| loaded.graph.write_edge_list(out, &env.headers()))?;
    let mut result = json!({
        "law": env.law.to_string(),
        "box": { "d": env.lattice.d, "n": env.lattice.n },
        "edges": env.conductances.len(),
        "mean_conductance": env.mean_conductance(),
        "graph_vertices": loaded.graph.num_vertices(),
    });
    if let Some((size, spans)) = loaded.cluster {
        result["cluster"] = json!({ "size": size, "spans": spans });
    }
    Ok(Outcome {
        ok: true,
        result,
        files: vec![("environment.txt".into(), dump)],
    })
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenArgs {
    /// `interior`, `ball:R` or `list:L1,L2,...`.
    #[arg(long)]
    pub region: Option<String>,
}

pub fn green(run: &Run, input: &Input, args: &mut GreenArgs) -> Result<Outcome, CliError> {
    let loaded = input.load(run.seed)?;
    let g = &loaded.graph;
    let region = single_region(&mut args.region, &loaded)?;
    let gf = green_killed(g, &region, run.tol())?;
    let lp = profile_u(g, &gf);
    let integral = integral_u(g, &gf, &lp);
    let f2 = factor_two_check(g, &gf, &lp);
    let result = json!({
        "region_hash": gf.region_hash(g),
        "vertices": region.len(),
        "m_a": region.measure(),
        "root_value": gf.value(g.root()),
        "exit_time": exit_time_exact(g, &gf),
        "residual": gf.residual(),
        "integral_u": integral.integral,
        "integral_closed_form": integral.closed_form,
        "twice_integral_u": f2.twice_integral,
        "factor_two_holds": f2.holds,
    });
    Ok(Outcome {
        ok: f2.holds,
        result,
        files: vec![
            ("green.csv".into(), csv_bytes(|out| gf.write_csv(g, out))?),
            ("profile.csv".into(), csv_bytes(|out| lp.write_csv(out))?),
        ],
    })
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBounds {
    /// `interior`, `ball:A..B`, `ball:R1,R2` or `list:...;...`.
    #[arg(long)]
    pub region: Option<String>,
    /// `power:D`, `id`, `linear` or `custom:X@Y,...`; lattice default `power:d`.
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub f: Option<String>,
    /// Floor of F; defaults to the root measure.
    #[arg(long)]
    pub floor: Option<f64>,
    /// `exit` (regions killed on exit) or `occupation` (regions inside the
    /// ambient box).
    #[arg(long)]
    pub mode: Option<String>,
}

pub fn verify_bounds(run: &Run, input: &Input, args: &mut VerifyBounds) -> Result<Outcome, CliError> {
    let loaded = input.load(run.seed)?;
    let g = &loaded.graph;
    let f = resolve_f(&mut args.f, args.floor, &loaded)?;
    let regions = input::regions(text(&mut args.region, "interior").as_str(), &loaded)?;
    let mut csv = String::new();
    match text(&mut args.mode, "exit").as_str() {
        "exit" => {
            let rows = bound_rows(g, &regions, &f, run.tol())?;
            csv.push_str("name,m_a,exact,twice_integral_u,bound,c_levelset,edu_violations,comparison_violations,ok\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    r.name,
                    r.m_a,
                    r.exact,
                    r.twice_integral_u,
                    r.bound,
                    r.c_levelset,
                    r.edu_violations,
                    r.comparison_violations,
                    r.ok
                );
            }
            Ok(Outcome {
                ok: rows.iter().all(|r| r.ok),
                result: json!({ "mode": "exit", "rows": rows }),
                files: vec![("bounds.csv".into(), csv)],
            })
        }
        "occupation" => {
            let rows = regions
                .iter()
                .map(|(name, target)| verify_occupation_row(g, target, name, &f, run.tol()))
                .collect::<awlab_core::Result<Vec<_>>>()?;
            csv.push_str("name,m_a,exact,twice_integral_u,bound,c_levelset,edu_violations,comparison_violations,ok\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    r.name,
                    r.m_a,
                    r.exact,
                    r.twice_integral_u,
                    r.bound,
                    r.c_levelset,
                    r.edu_violations,
                    r.comparison_violations,
                    r.ok
                );
            }
            Ok(Outcome {
                ok: rows.iter().all(|r| r.ok),
                result: json!({ "mode": "occupation", "rows": rows }),
                files: vec![("bounds.csv".into(), csv)],
            })
        }
        other => Err(CliError::Config(format!("unknown mode `{other}`"))),
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scaling {
    /// `exit` or `occupation`.
    #[arg(long)]
    pub quantity: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Ball radii, `A..B` or a comma list.
    #[arg(long)]
    pub radii: Option<String>,
    /// Box half-widths for occupation, as multiples of the radius.
    #[arg(long)]
    pub factors: Option<String>,
    /// Expected slope; the run fails when the fit is further than `width`.
    #[arg(long)]
    pub expect: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
}

fn medium(run: &Run, input: &Input) -> Result<Medium, CliError> {
    if input.graph.is_some() || input.percolation {
        return Err(CliError::Config("box sweeps take a lattice or an --env law".into()));
    }
    match &input.env {
        None => Ok(Medium::Lattice),
        Some(law) => Ok(Medium::Environment {
            law: input::law(law)?,
            seed: run
                .seed
                .ok_or_else(|| CliError::Config("environment scenarios need --seed".into()))?,
        }),
    }
}

fn dimension(d: Option<usize>, input: &Input) -> Result<usize, CliError> {
    match (d, &input.lattice) {
        (Some(d), _) => Ok(d),
        (None, Some(spec)) => Ok(awlab_core::env::parse_box(spec)?.d),
        (None, None) => Err(CliError::Config("--d is required".into())),
    }
}

pub fn scaling(run: &Run, input: &Input, args: &mut Scaling) -> Result<Outcome, CliError> {
    let medium = medium(run, input)?;
    let d = dimension(args.d, input)?;
    let radii = input::numbers(
        args.radii
            .as_deref()
            .ok_or_else(|| CliError::Config("--radii is required".into()))?,
    )?;
    let report = match text(&mut args.quantity, "exit").as_str() {
        "exit" => exit_scaling(&medium, d, &radii, run.tol())?,
        "occupation" => {
            let factors = match &args.factors {
                Some(s) => input::integers(s)?,
                None => OCCUPATION_FACTORS.to_vec(),
            };
            occupation_scaling(&medium, d, &radii, &factors, run.tol())?
        }
        other => return Err(CliError::Config(format!("unknown quantity `{other}`"))),
    };
    let width = *args.width.get_or_insert(0.15);
    let ok = args.expect.is_none_or(|e| (report.fit.slope - e).abs() <= width);
    let mut csv = String::from("radius,m_a,value\n");
    for p in &report.points {
        let _ = writeln!(csv, "{},{},{}", p.radius, p.m_a, p.value);
    }
    Ok(Outcome {
        ok,
        result: json!({ "medium": medium, "report": report }),
        files: vec![("scaling.csv".into(), csv)],
    })
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Transience {
    #[arg(long)]
    pub d: Option<usize>,
    /// Box half-widths, `A..B` or a comma list.
    #[arg(long)]
    pub radii: Option<String>,
    /// `transient` (last relative increment below `threshold`, default 1%)
    /// or `recurrent` (all increments above `threshold`, default 10%).
    #[arg(long)]
    pub expect: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Profile function for the integral test.
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub f: Option<String>,
    #[arg(long)]
    pub floor: Option<f64>,
    /// Isoperimetric constant for the uniform bound on G.
    #[arg(long = "C")]
    #[serde(rename = "C")]
    pub c: Option<f64>,
    /// Smallest vertex measure.
    #[arg(long)]
    pub inf_m: Option<f64>,
    /// Largest region measure for the bounded variant.
    #[arg(long)]
    pub m_max: Option<f64>,
}

pub fn transience(run: &Run, input: &Input, args: &mut Transience) -> Result<Outcome, CliError> {
    let medium = medium(run, input)?;
    let d = dimension(args.d, input)?;
    let radii = input::integers(
        args.radii
            .as_deref()
            .ok_or_else(|| CliError::Config("--radii is required".into()))?,
    )?;
    let seq = origin_occupation(&medium, d, &radii, run.tol())?;
    let increments = seq.relative_increments();
    let ok = match args.expect.as_deref() {
        None => true,
        Some("transient") => {
            let t = *args.threshold.get_or_insert(0.01);
            increments.last().is_some_and(|&x| x < t)
        }
        Some("recurrent") => {
            let t = *args.threshold.get_or_insert(0.10);
            !increments.is_empty() && increments.iter().all(|&x| x > t)
        }
        Some(other) => return Err(CliError::Config(format!("unknown expectation `{other}`"))),
    };
    let diagnostic = args
        .f
        .as_ref()
        .map(|spec| {
            let f = input::profile_function(spec, args.floor)?;
            let c = *args.c.get_or_insert(1.0);
            if !(c > 0.0) {
                return Err(CliError::Config("--C must be positive".into()));
            }
            Ok(transience_diagnostic(&f, c, *args.inf_m.get_or_insert(1.0), *args.m_max.get_or_insert(1e6)))
        })
        .transpose()?;
    let mut csv = String::from("R,value,increment\n");
    for (k, (r, v)) in seq.values.iter().enumerate() {
        let inc = if k == 0 { String::new() } else { increments[k - 1].to_string() };
        let _ = writeln!(csv, "{r},{v},{inc}");
    }
    Ok(Outcome {
        ok,
        result: json!({
            "medium": medium,
            "values": seq.values,
            "increments": increments,
            "nondecreasing": seq.is_nondecreasing(),
            "diagnostic": diagnostic,
        }),
        files: vec![("occupation.csv".into(), csv)],
    })
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Isoperimetry {
    /// `levelsets`, `exhaustive`, `sampled` or `betac`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    pub f: Option<String>,
    #[arg(long)]
    pub floor: Option<f64>,
    /// Region whose Green level sets are used (`levelsets`).
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub max_vertices: Option<usize>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub max_measure: Option<f64>,
    /// `boundary_weighted` or `uniform`.
    #[arg(long, value_parser = parse_growth)]
    pub growth: Option<Growth>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub n0: Option<f64>,
    /// Exponent `d` in `m(A)^{1-1/d}` (`betac`).
    #[arg(long)]
    pub d: Option<f64>,
}

fn parse_growth(s: &str) -> Result<Growth, String> {
    match s {
        "boundary_weighted" => Ok(Growth::BoundaryWeighted),
        "uniform" => Ok(Growth::Uniform),
        _ => Err(format!("unknown growth `{s}`")),
    }
}

pub fn isoperimetry(run: &Run, input: &Input, args: &mut Isoperimetry) -> Result<Outcome, CliError> {
    let loaded = input.load(run.seed)?;
    let g = &loaded.graph;
    let f = floored_at_root(&resolve_f(&mut args.f, args.floor, &loaded)?, g);
    let growth = *args.growth.get_or_insert_default();
    match text(&mut args.method, "levelsets").as_str() {
        "levelsets" => {
            let region = single_region(&mut args.region, &loaded)?;
            let gf = green_killed(g, &region, run.tol())?;
            Ok(Outcome {
                ok: true,
                result: json!(cis_levelsets(g, &gf, &f)),
                files: vec![],
            })
        }
        "exhaustive" => {
            let report = cis_exhaustive(
                g,
                &f,
                *args.max_vertices.get_or_insert(10),
                *args.budget.get_or_insert(DEFAULT_BUDGET),
            )?;
            Ok(Outcome {
                ok: true,
                result: json!(report),
                files: vec![],
            })
        }
        "sampled" => {
            let report = cis_sampled(
                g,
                &f,
                *args.samples.get_or_insert(1000),
                args.max_measure.unwrap_or(f64::INFINITY),
                run.seed()?,
                growth,
            )?;
            Ok(Outcome {
                ok: true,
                result: json!(report),
                files: vec![],
            })
        }
        "betac" => {
            let need = |x: Option<f64>, name: &str| x.ok_or_else(|| CliError::Config(format!("betac needs --{name}")));
            let cfg = BetacConfig {
                beta0: need(args.beta0, "beta0")?,
                n0: need(args.n0, "n0")?,
                samples: *args.samples.get_or_insert(1000),
                max_measure: args.max_measure,
                d: match (args.d, loaded.d) {
                    (Some(d), _) => d,
                    (None, Some(d)) => d as f64,
                    (None, None) => return Err(CliError::Config("betac needs --d".into())),
                },
                seed: run.seed()?,
                growth,
            };
            let report = verify_betac(g, &cfg)?;
            let mut csv = String::from("sample,size,measure,boundary,ratio\n");
            for v in &report.violations {
                let _ = writeln!(csv, "{},{},{},{},{}", v.sample, v.size, v.measure, v.boundary, v.ratio);
            }
            Ok(Outcome {
                ok: report.violation_count == 0,
                result: json!(report),
                files: vec![("violations.csv".into(), csv)],
            })
        }
        other => Err(CliError::Config(format!("unknown method `{other}`"))),
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulate {
    /// `exit`, `occupation` or `displacement`.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Steps per displacement trial.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Walk on the infinite regular tree of this degree instead of the input.
    #[arg(long)]
    pub tree: Option<u32>,
    /// Fail unless the estimate is within `sigmas` standard errors of the
    /// exact value.
    #[arg(long)]
    pub check: bool,
    #[arg(long)]
    pub sigmas: Option<f64>,
}

fn sample_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

pub fn simulate(run: &Run, input: &Input, args: &mut Simulate) -> Result<Outcome, CliError> {
    let seed = run.seed()?;
    let trials = *args.trials.get_or_insert(10_000);
    let sigmas = *args.sigmas.get_or_insert(4.0);
    let kind = text(&mut args.kind, "exit");
    let kind = kind.as_str();
    if let Some(q) = args.tree {
        if kind != "displacement" {
            return Err(CliError::Config("--tree only supports displacement".into()));
        }
        if q < 2 {
            return Err(CliError::Config("--tree needs degree at least 2".into()));
        }
        let steps = *args.steps.get_or_insert(1000);
        let samples = simulate_displacement(&RegularTree { q }, steps, trials, seed);
        let (mean, se) = sample_stats(&samples);
        let law = regular_tree_depth_law(q, steps as usize);
        let exact = law.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() / steps.max(1) as f64;
        return Ok(Outcome {
            ok: !args.check || (mean - exact).abs() <= sigmas * se,
            result: json!({ "kind": kind, "tree": q, "steps": steps, "trials": trials, "mean": mean, "se": se, "exact": exact }),
            files: vec![],
        });
    }
    let loaded = input.load(Some(seed))?;
    let g = &loaded.graph;
    match kind {
        "exit" | "occupation" => {
            let region = single_region(&mut args.region, &loaded)?;
            let horizon = *args.horizon.get_or_insert(1_000_000);
            let (est, exact) = if kind == "exit" {
                let est = simulate_exit(g, &region, trials, horizon, seed)?;
                let exact = args
                    .check
                    .then(|| green_killed(g, &region, run.tol()).map(|gf| exit_time_exact(g, &gf)))
                    .transpose()?;
                (est, exact)
            } else {
                let est = simulate_occupation(g, &region, trials, horizon, seed)?;
                let exact = args
                    .check
                    .then(|| {
                        green_killed(g, &Region::interior(g), run.tol())
                            .map(|gf| mass_weighted_sum(g, &gf, region.members()))
                    })
                    .transpose()?;
                (est, exact)
            };
            Ok(Outcome {
                ok: exact.is_none_or(|x| est.within(x, sigmas)),
                result: json!({ "kind": kind, "estimate": est, "exact": exact }),
                files: vec![],
            })
        }
        "displacement" => {
            let steps = *args.steps.get_or_insert(1000);
            let samples = simulate_displacement(&GraphWalk::new(g), steps, trials, seed);
            let (mean, se) = sample_stats(&samples);
            Ok(Outcome {
                ok: true,
                result: json!({ "kind": kind, "steps": steps, "trials": trials, "mean": mean, "se": se }),
                files: vec![],
            })
        }
        other => Err(CliError::Config(format!("unknown kind `{other}`"))),
    }
}
