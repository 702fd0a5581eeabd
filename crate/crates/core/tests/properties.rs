use awlab_core::env::{environment_graph, sample_environment, EnvironmentLaw};
use awlab_core::graph::{boundary, boundary_measure};
use awlab_core::green::{level_set, DEFAULT_TOL};
use awlab_core::isoperimetry::{cis_exhaustive, cis_levelsets, cis_sampled, iso_ratio, Growth, DEFAULT_BUDGET};
use awlab_core::levelset::{profile_u, profile_u_occupation};
use awlab_core::ode::{bound_exit, bound_occupation, solve_bound_curve};
use awlab_core::{green_killed, ExactGraph, Graph, LatticeBox, ProfileFunction, Rational, Region, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Edge list of a connected random graph on `0..k` with frame `k..k+f`.
fn random_edges(seed: u64, k: i64) -> (Vec<(i64, i64, u32)>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 1..k {
        edges.push((rng.random_range(0..i), i, rng.random_range(1..=6)));
    }
    for _ in 0..rng.random_range(0..=k) {
        edges.push((rng.random_range(0..k), rng.random_range(0..k), rng.random_range(1..=6)));
    }
    let f = rng.random_range(1..=3);
    for v in k..k + f {
        edges.push((rng.random_range(0..k), v, rng.random_range(1..=6)));
    }
    (edges, (k..k + f).collect())
}

fn build<S: Scalar>(seed: u64, k: i64, scale: impl Fn(u32) -> S) -> awlab_core::WeightedGraph<S> {
    let (edges, frame) = random_edges(seed, k);
    awlab_core::WeightedGraph::build(edges.into_iter().map(|(a, b, w)| (a, b, scale(w))), 0, &frame).unwrap()
}

fn float_graph(seed: u64, k: i64) -> Graph {
    build(seed, k, |w| f64::from(w) * 0.37)
}

fn exact_graph(seed: u64, k: i64) -> ExactGraph {
    build(seed, k, |w| Rational::new(i128::from(w), 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversibility(seed in any::<u64>(), k in 2i64..40) {
        let g = float_graph(seed, k);
        for (x, y, _) in g.edges() {
            let (a, b) = (g.measure(x) * g.transition(x, y), g.measure(y) * g.transition(y, x));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn boundary_ignores_edge_order(seed in any::<u64>(), k in 2i64..30, shuffle in any::<u64>()) {
        let (mut edges, frame) = random_edges(seed, k);
        let g1 = ExactGraph::build(edges.iter().map(|&(a, b, w)| (a, b, Rational::from_integer(w.into()))), 0, &frame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..edges.len()).rev() {
            edges.swap(i, rng.random_range(0..=i));
        }
        let g2 = ExactGraph::build(edges.iter().map(|&(a, b, w)| (b, a, Rational::from_integer(w.into()))), 0, &frame).unwrap();
        let labels: Vec<i64> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
        let a1 = Region::from_labels(&g1, &labels).unwrap();
        let a2 = Region::from_labels(&g2, &labels).unwrap();
        prop_assert_eq!(boundary(&g1, &a1).total, boundary(&g2, &a2).total);
    }

    #[test]
    fn cut_is_symmetric(seed in any::<u64>(), k in 2i64..30, pick in any::<u64>()) {
        let g = exact_graph(seed, k);
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        let inside: Vec<usize> = g.interior_vertices().filter(|_| rng.random_bool(0.5)).collect();
        let a = Region::new(&g, inside.clone()).unwrap();
        let rest = Region::new(&g, g.interior_vertices().filter(|v| !inside.contains(v))).unwrap();
        let cut = |from: &Region<Rational>, to: &Region<Rational>| {
            boundary(&g, from).pairs.iter().filter(|p| to.contains(p.1)).map(|p| p.2).sum::<Rational>()
        };
        prop_assert_eq!(cut(&a, &rest), cut(&rest, &a));
    }

    #[test]
    fn green_field_structure(seed in any::<u64>(), k in 2i64..60) {
        let g = float_graph(seed, k);
        let gf = green_killed(&g, &Region::interior(&g), DEFAULT_TOL).unwrap();
        let top = gf.value(g.root());
        prop_assert!(gf.values().iter().all(|&v| v <= top * (1.0 + 1e-12)));
        for i in 1..=25 {
            let a = level_set(&g, &gf, top * f64::from(i) / 25.0);
            prop_assert!(a.contains(g.root()) && a.is_connected());
        }
    }

    #[test]
    fn exact_profile_top(seed in any::<u64>(), k in 2i64..8) {
        let g = exact_graph(seed, k);
        let a = Region::interior(&g);
        let gf = green_killed(&g, &a, DEFAULT_TOL).unwrap();
        prop_assert_eq!(profile_u(&g, &gf).eval(Rational::from_integer(0)), a.measure());
    }

    #[test]
    fn profile_shape(seed in any::<u64>(), k in 2i64..60, probe in any::<u64>()) {
        let g = float_graph(seed, k);
        let a = Region::interior(&g);
        let gf = green_killed(&g, &a, DEFAULT_TOL).unwrap();
        let lp = profile_u(&g, &gf);
        let top = gf.value(g.root());
        for (_, at, right, slope, _) in lp.knots() {
            prop_assert!(right <= at * (1.0 + 1e-12) + 1e-300);
            prop_assert!(slope <= 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(probe);
        let eps = 1e-9 * top;
        let mut probes = 0;
        while probes < 20 {
            let s = rng.random_range(2.0 * eps..top);
            if lp.breakpoints().iter().any(|&b| (b - s).abs() < 2.0 * eps) {
                continue;
            }
            probes += 1;
            let fd = (lp.eval(s) - lp.eval(s - eps)) / eps;
            let d = lp.left_derivative(s);
            prop_assert!((fd - d).abs() <= 1e-4 * d.abs().max(1e-12), "s={} fd={} d={}", s, fd, d);
        }
        let sub: Vec<usize> = a.members().iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let sub = Region::new(&g, sub).unwrap();
        let ut = profile_u_occupation(&g, &gf, &sub).unwrap();
        for &s in lp.breakpoints() {
            let level = level_set(&g, &gf, s).measure();
            prop_assert!(ut.eval(s) <= lp.eval(s) * (1.0 + 1e-12));
            prop_assert!(lp.eval(s) <= level * (1.0 + 1e-12));
            prop_assert!(level <= a.measure());
        }
    }

    #[test]
    fn exhaustive_orderings(seed in any::<u64>(), k in 2i64..10, relabel in any::<u64>()) {
        let g = float_graph(seed, k);
        let f = ProfileFunction::power(2.0).unwrap().with_floor(1.0);
        let n = g.interior_vertices().count();
        let exact = cis_exhaustive(&g, &f, n, DEFAULT_BUDGET).unwrap();
        let witness = Region::from_labels(&g, &exact.witness).unwrap();
        prop_assert_eq!(iso_ratio(&g, &witness, &f), exact.constant);
        prop_assert_eq!(boundary_measure(&g, &witness), exact.witness_boundary);

        let gf = green_killed(&g, &Region::interior(&g), DEFAULT_TOL).unwrap();
        prop_assert!(cis_levelsets(&g, &gf, &f).constant >= exact.constant);
        let sampled = cis_sampled(&g, &f, 200, f64::INFINITY, seed, Growth::default()).unwrap();
        prop_assert!(sampled.constant >= exact.constant);

        // Relabel the interior by a random permutation.
        let mut perm: Vec<i64> = (0..k).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(relabel);
        for i in (2..perm.len()).rev() {
            perm.swap(i, rng.random_range(1..=i));
        }
        let (edges, frame) = random_edges(seed, k);
        let map = |v: i64| if v < k { perm[v as usize] } else { v };
        let h = Graph::build(edges.into_iter().map(|(a, b, w)| (map(a), map(b), f64::from(w) * 0.37)), 0, &frame).unwrap();
        let other = cis_exhaustive(&h, &f, n, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(other.constant, exact.constant);
    }

    #[test]
    fn bounds_are_monotone(d in 1.0f64..6.0, c in 0.1f64..3.0, m in 1.0f64..1e4, dc in 0.01f64..1.0, dm in 0.01f64..100.0) {
        let f = ProfileFunction::power(d).unwrap().with_floor(1.0);
        let exit = |c: f64, m: f64| bound_exit(&solve_bound_curve(&f, c, Some(m)).unwrap());
        prop_assert!(exit(c + dc, m) <= exit(c, m) * (1.0 + 1e-12));
        prop_assert!(exit(c, m + dm) >= exit(c, m) * (1.0 - 1e-12));
        let lin = ProfileFunction::linear().with_floor(1.0);
        let occ = |c: f64, m: f64| bound_occupation(&solve_bound_curve(&lin, c, None).unwrap(), m).unwrap();
        prop_assert!(occ(c + dc, m) <= occ(c, m) * (1.0 + 1e-12));
        prop_assert!(occ(c, m + dm) >= occ(c, m) * (1.0 - 1e-12));
    }

    #[test]
    fn environment_mass(seed in any::<u64>(), n in 1i64..8, d in 1usize..4) {
        let env = sample_environment(&EnvironmentLaw::Uniform01, LatticeBox::new(d, n).unwrap(), seed);
        let g = environment_graph(&env).unwrap();
        let total: f64 = (0..g.num_vertices()).map(|v| g.measure(v)).sum();
        let edges: f64 = env.conductances.iter().sum();
        prop_assert!((total - 2.0 * edges).abs() <= 1e-9 * total);
    }
}
