//! Graph, region and profile-function specs.

use std::fs::File;
use std::io::BufReader;

use awlab_core::env::{environment_graph, parse_box, percolation_cluster, read_environment, sample_environment, Environment};
use awlab_core::lattice::ball;
use awlab_core::{Graph, ProfileFunction, Region};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Input {
    /// Lattice box, e.g. `d=2,n=12`.
    #[arg(long, global = true)]
    pub lattice: Option<String>,
    /// Edge-list file (`u v w` lines, `#root`, `#frame` headers).
    #[arg(long, global = true)]
    pub graph: Option<String>,
    /// Conductance law on the lattice box: `uniform01`, `bernoulli:P`,
    /// `quantile:P@V,...`. Needs `--seed`.
    #[arg(long, global = true)]
    pub env: Option<String>,
    /// Use the open cluster of the origin (Bernoulli laws).
    #[arg(long, global = true)]
    pub percolation: bool,
}

pub struct Loaded {
    pub graph: Graph,
    /// Lattice dimension when known.
    pub d: Option<usize>,
    pub env: Option<Environment>,
    pub cluster: Option<(usize, bool)>,
}

pub fn law(spec: &str) -> Result<awlab_core::env::EnvironmentLaw, CliError> {
    spec.parse().map_err(CliError::from)
}

impl Input {
    pub fn load(&self, seed: Option<u64>) -> Result<Loaded, CliError> {
        match (&self.graph, &self.lattice) {
            (Some(_), Some(_)) => Err(CliError::Config("give either --graph or --lattice".into())),
            (Some(path), None) => {
                if self.env.is_some() || self.percolation {
                    return Err(CliError::Config("--env and --percolation need --lattice".into()));
                }
                let file = File::open(path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
                let (graph, env) = read_environment(BufReader::new(file))?;
                Ok(Loaded {
                    graph,
                    d: env.as_ref().map(|e| e.lattice.d),
                    env,
                    cluster: None,
                })
            }
            (None, Some(spec)) => {
                let lattice = parse_box(spec)?;
                let Some(law_spec) = &self.env else {
                    if self.percolation {
                        return Err(CliError::Config("--percolation needs --env bernoulli:P".into()));
                    }
                    return Ok(Loaded {
                        graph: lattice.unit_graph(),
                        d: Some(lattice.d),
                        env: None,
                        cluster: None,
                    });
                };
                let seed = seed.ok_or_else(|| CliError::Config("environment scenarios need --seed".into()))?;
                let env = sample_environment(&law(law_spec)?, lattice, seed);
                let (graph, cluster) = if self.percolation {
                    let c = percolation_cluster(&env)?;
                    (c.graph, Some((c.size, c.spans)))
                } else {
                    (environment_graph(&env)?, None)
                };
                Ok(Loaded {
                    graph,
                    d: Some(lattice.d),
                    env: Some(env),
                    cluster,
                })
            }
            (None, None) => Err(CliError::Config("no input: give --lattice or --graph".into())),
        }
    }
}

fn number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad {what} `{s}`")))
}

/// `a..b` (integer steps) or a comma list.
pub fn numbers(spec: &str) -> Result<Vec<f64>, CliError> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (i64, i64) = (number(a, "range")?, number(b, "range")?);
        if a > b {
            return Err(CliError::Config(format!("empty range `{spec}`")));
        }
        Ok((a..=b).map(|x| x as f64).collect())
    } else {
        spec.split(',').map(|x| number(x, "number")).collect()
    }
}

pub fn integers(spec: &str) -> Result<Vec<u32>, CliError> {
    numbers(spec)?
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) {
                Ok(x as u32)
            } else {
                Err(CliError::Config(format!("`{x}` is not a non-negative integer")))
            }
        })
        .collect()
}

/// `interior`, `ball:R`, `ball:A..B`, `ball:R1,R2`, or `list:L1,L2;L3,...`
/// (sets of vertex labels separated by `;`).
pub fn regions(spec: &str, loaded: &Loaded) -> Result<Vec<(String, Region<f64>)>, CliError> {
    let g = &loaded.graph;
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind.trim() {
        "interior" => Ok(vec![("interior".into(), Region::interior(g))]),
        "ball" => {
            let d = loaded
                .d
                .ok_or_else(|| CliError::Config("ball regions need a lattice input".into()))?;
            numbers(arg)?
                .into_iter()
                .map(|r| Ok((format!("ball:{r}"), ball(g, d, r)?)))
                .collect()
        }
        "list" => arg
            .split(';')
            .map(|set| {
                let labels: Vec<i64> = set.split(',').map(|l| number(l, "label")).collect::<Result<_, _>>()?;
                Ok((format!("list:{set}"), Region::from_labels(g, &labels)?))
            })
            .collect(),
        _ => Err(CliError::Config(format!("unknown region `{spec}`"))),
    }
}

/// `power:D`, `id` / `linear`, or `custom:X@Y,X@Y,...`.
pub fn profile_function(spec: &str, floor: Option<f64>) -> Result<ProfileFunction, CliError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let f = match kind.trim() {
        "power" => ProfileFunction::power(number(arg, "dimension")?)?,
        "id" | "linear" => ProfileFunction::linear(),
        "custom" => {
            let table = arg
                .split(',')
                .map(|pair| {
                    let (x, y) = pair
                        .split_once('@')
                        .ok_or_else(|| CliError::Config(format!("bad custom point `{pair}`")))?;
                    Ok((number(x, "point")?, number(y, "point")?))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            ProfileFunction::custom(table)?
        }
        _ => return Err(CliError::Config(format!("unknown F `{spec}`"))),
    };
    Ok(match floor {
        Some(x) => f.with_floor(x),
        None => f,
    })
}
