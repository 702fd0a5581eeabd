//! Seeded Monte Carlo for the walk `p(x, y) = mu(x, y) / m(x)`: exit
//! times, occupation times, and displacement.
//!
//! Trial `i` uses ChaCha stream `i` of the run seed and the tallies are
//! integer sums, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{hop_distances, Region, Vertex, WeightedGraph};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub se: f64,
    pub trials: u64,
    pub truncated: u64,
    pub horizon: u64,
    pub seed: u64,
}

impl EstimateReport {
    /// `|mean - target| <= k se`; an exact match passes when `se = 0`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Cumulative transition weights per vertex.
#[derive(Debug, Clone)]
pub struct StepTable {
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
    cumulative: Vec<f64>,
    absorbing: Vec<bool>,
}

impl StepTable {
    pub fn new<S: Scalar>(g: &WeightedGraph<S>) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut cumulative = Vec::new();
        for x in 0..g.num_vertices() {
            let mut acc = 0.0;
            for (y, w) in g.neighbors(x) {
                acc += w.to_f64_lossy();
                targets.push(y);
                cumulative.push(acc);
            }
            offsets.push(targets.len());
        }
        StepTable {
            offsets,
            targets,
            cumulative,
            absorbing: (0..g.num_vertices()).map(|v| g.is_frame(v)).collect(),
        }
    }

    pub fn is_absorbing(&self, x: Vertex) -> bool {
        self.absorbing[x]
    }

    /// One step from `x`.
    pub fn sample<R: Rng>(&self, x: Vertex, rng: &mut R) -> Vertex {
        let (lo, hi) = (self.offsets[x], self.offsets[x + 1]);
        let cum = &self.cumulative[lo..hi];
        let u = rng.random::<f64>() * cum[cum.len() - 1];
        let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.targets[lo + i]
    }
}

/// A walk with a notion of distance from its start.
pub trait Walk: Sync {
    type State: Clone + Send;
    fn start(&self) -> Self::State;
    /// Advances one step; returns false if the walk is absorbed and stays put.
    fn step(&self, state: &mut Self::State, rng: &mut ChaCha8Rng) -> bool;
    fn distance(&self, state: &Self::State) -> usize;
}

/// Walk on a weighted graph from its root, absorbed on the frame.
pub struct GraphWalk {
    table: StepTable,
    root: Vertex,
    dist: Vec<Option<usize>>,
}

impl GraphWalk {
    pub fn new<S: Scalar>(g: &WeightedGraph<S>) -> Self {
        GraphWalk {
            table: StepTable::new(g),
            root: g.root(),
            dist: hop_distances(g, g.root()),
        }
    }
}

impl Walk for GraphWalk {
    type State = Vertex;

    fn start(&self) -> Vertex {
        self.root
    }

    fn step(&self, state: &mut Vertex, rng: &mut ChaCha8Rng) -> bool {
        if self.table.is_absorbing(*state) {
            return false;
        }
        *state = self.table.sample(*state, rng);
        true
    }

    fn distance(&self, state: &Vertex) -> usize {
        self.dist[*state].expect("walk stays in the root component")
    }
}

/// The infinite `q`-regular tree; the state is the path of child indices
/// from the root.
pub struct RegularTree {
    pub q: u32,
}

impl Walk for RegularTree {
    type State = Vec<u32>;

    fn start(&self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&self, path: &mut Vec<u32>, rng: &mut ChaCha8Rng) -> bool {
        // The root has q children; other vertices a parent and q - 1 children.
        let k = rng.random_range(0..self.q);
        if path.is_empty() {
            path.push(k);
        } else if k == 0 {
            path.pop();
        } else {
            path.push(k - 1);
        }
        true
    }

    fn distance(&self, path: &Vec<u32>) -> usize {
        path.len()
    }
}

/// Exact law of the depth after `steps` steps of the walk on the
/// `q`-regular tree, by the birth-death chain of the depth.
pub fn regular_tree_depth_law(q: u32, steps: usize) -> Vec<f64> {
    let up = 1.0 / q as f64;
    let mut law = vec![0.0; steps + 2];
    law[0] = 1.0;
    for n in 0..steps {
        let mut next = vec![0.0; steps + 2];
        for d in 0..=n.min(steps) {
            let p = law[d];
            if p == 0.0 {
                continue;
            }
            if d == 0 {
                next[1] += p;
            } else {
                next[d - 1] += p * up;
                next[d + 1] += p * (1.0 - up);
            }
        }
        law = next;
    }
    law.truncate(steps + 1);
    law
}

fn check_trials(trials: u64, horizon: u64) -> Result<()> {
    if trials == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("trials and horizon must be positive".into()));
    }
    Ok(())
}

fn tally(samples: &[(u64, bool)], horizon: u64, seed: u64) -> Result<EstimateReport> {
    let n = samples.len() as u128;
    let (mut sum, mut sumsq, mut truncated) = (0u128, 0u128, 0u64);
    for &(x, t) in samples {
        sum += x as u128;
        sumsq += (x as u128) * (x as u128);
        truncated += t as u64;
    }
    let trials = samples.len() as u64;
    if truncated * 10 > trials {
        return Err(Error::ExcessiveTruncation { truncated, trials });
    }
    let mean = sum as f64 / n as f64;
    let se = if n > 1 {
        let spread = n * sumsq - sum * sum;
        let var = spread as f64 / (n * (n - 1)) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(EstimateReport {
        mean,
        se,
        trials,
        truncated,
        horizon,
        seed,
    })
}

fn run_trials<F>(trials: u64, seed: u64, trial: F) -> Vec<(u64, bool)>
where
    F: Fn(&mut ChaCha8Rng) -> (u64, bool) + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| trial(&mut trial_rng(seed, i)))
        .collect()
}

/// Exit time of `region` from the root, capped at `horizon` steps.
pub fn simulate_exit<S: Scalar>(
    g: &WeightedGraph<S>,
    region: &Region<S>,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<EstimateReport> {
    check_trials(trials, horizon)?;
    if !region.contains(g.root()) {
        return Err(Error::RootNotInRegion);
    }
    let table = StepTable::new(g);
    let samples = run_trials(trials, seed, |rng| {
        let mut x = g.root();
        for k in 1..=horizon {
            x = table.sample(x, rng);
            if !region.contains(x) {
                return (k, false);
            }
        }
        (horizon, true)
    });
    tally(&samples, horizon, seed)
}

/// Visits to `region` over the first `horizon` steps (or until the walk is
/// absorbed on the frame).
pub fn simulate_occupation<S: Scalar>(
    g: &WeightedGraph<S>,
    region: &Region<S>,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<EstimateReport> {
    check_trials(trials, horizon)?;
    if !region.contains(g.root()) {
        return Err(Error::RootNotInRegion);
    }
    let table = StepTable::new(g);
    let samples = run_trials(trials, seed, |rng| {
        let mut x = g.root();
        let mut visits = 0;
        for _ in 0..horizon {
            if table.is_absorbing(x) {
                return (visits, false);
            }
            if region.contains(x) {
                visits += 1;
            }
            x = table.sample(x, rng);
        }
        (visits, !table.is_absorbing(x))
    });
    tally(&samples, horizon, seed)
}

/// `d(o, X_steps) / steps` per trial, in trial order.
pub fn simulate_displacement<W: Walk>(walk: &W, steps: u64, trials: u64, seed: u64) -> Vec<f64> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            if steps == 0 {
                return 0.0;
            }
            let mut rng = trial_rng(seed, i);
            let mut state = walk.start();
            for _ in 0..steps {
                if !walk.step(&mut state, &mut rng) {
                    break;
                }
            }
            walk.distance(&state) as f64 / steps as f64
        })
        .collect()
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(n: i64) -> WeightedGraph<f64> {
        WeightedGraph::build((-1..n).map(|i| (i, i + 1, 1.0)), 0, &[-1, n]).unwrap()
    }

    #[test]
    fn single_vertex_exits_in_one_step() {
        let g = segment(3);
        let a = Region::from_labels(&g, &[0]).unwrap();
        let r = simulate_exit(&g, &a, 1000, 10, 1).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.se, 0.0);
        assert_eq!(r.truncated, 0);
    }

    #[test]
    fn step_law() {
        let g = WeightedGraph::build([(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0), (0, 0, 4.0)], 0, &[]).unwrap();
        let table = StepTable::new(&g);
        let mut rng = trial_rng(5, 0);
        let mut counts = std::collections::HashMap::new();
        let n = 1_000_000;
        for _ in 0..n {
            *counts.entry(g.label(table.sample(g.root(), &mut rng))).or_insert(0u64) += 1;
        }
        for (label, w) in [(0, 4.0), (1, 1.0), (2, 2.0), (3, 3.0)] {
            let p = w / 10.0;
            let expected = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[&label] as f64 - expected).abs() <= 4.0 * sd, "{label}");
        }
    }

    #[test]
    fn occupation_of_interior_is_exit() {
        let g = segment(5);
        let a = Region::interior(&g);
        let e = simulate_exit(&g, &a, 2000, 10_000, 9).unwrap();
        let o = simulate_occupation(&g, &a, 2000, 10_000, 9).unwrap();
        assert_eq!(e, o);
    }

    #[test]
    fn truncation_is_reported() {
        let g = segment(40);
        let a = Region::interior(&g);
        assert!(matches!(
            simulate_exit(&g, &a, 100, 5, 1),
            Err(Error::ExcessiveTruncation { .. })
        ));
        let r = simulate_occupation(&g, &Region::from_labels(&g, &[0]).unwrap(), 1, 50, 3).unwrap();
        assert_eq!(r, simulate_occupation(&g, &Region::from_labels(&g, &[0]).unwrap(), 1, 50, 3).unwrap());
    }

    #[test]
    fn zero_steps() {
        let g = segment(3);
        let d = simulate_displacement(&GraphWalk::new(&g), 0, 10, 1);
        assert_eq!(d, vec![0.0; 10]);
    }

    #[test]
    fn tree_depth_law() {
        let law = regular_tree_depth_law(3, 2);
        for (got, want) in law.iter().zip([1.0 / 3.0, 0.0, 2.0 / 3.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let law = regular_tree_depth_law(3, 500);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
