//! Symmetric positive definite solves for the killed Laplacian
//! `diag(m) - mu` restricted to a region.
//!
//! Two routes: an envelope (skyline) `LDL^T` factorization after reverse
//! Cuthill-McKee reordering, which needs no square roots and therefore runs
//! in exact arithmetic too, and Jacobi-preconditioned conjugate gradients
//! for large floating-point systems.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::{exact_sum, Scalar};

/// Regions with fewer vertices than this use the direct factorization.
pub const DIRECT_LIMIT: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Auto,
    Direct,
    Iterative,
}

/// Symmetric sparse matrix stored as full rows (both triangles).
#[derive(Debug, Clone)]
pub struct SymMatrix<S> {
    n: usize,
    diag: Vec<S>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    /// `rows[i]` lists the off-diagonal entries of row `i`; the caller
    /// supplies both `(i, j)` and `(j, i)`.
    pub fn from_rows(diag: Vec<S>, rows: Vec<Vec<(usize, S)>>) -> Self {
        let n = diag.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        SymMatrix {
            n,
            diag,
            offsets,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[S] {
        &self.diag
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn mul(&self, x: &[S], out: &mut [S]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[i] * x[i];
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *o = acc;
        }
    }

    /// `b - A x`, with each entry summed by the scalar's accumulator.
    pub fn residual(&self, x: &[S], b: &[S]) -> Vec<S> {
        (0..self.n)
            .map(|i| {
                let terms = std::iter::once(b[i])
                    .chain(std::iter::once(-(self.diag[i] * x[i])))
                    .chain(self.row(i).map(|(j, v)| -(v * x[j])));
                exact_sum(terms)
            })
            .collect()
    }
}

/// Reverse Cuthill-McKee ordering, started from a pseudo-peripheral vertex
/// of each connected component.
pub fn rcm_order<S: Scalar>(a: &SymMatrix<S>) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.offsets[i + 1] - a.offsets[i]).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, placed: &[bool]| -> (usize, usize) {
        // returns (last vertex of the deepest level, eccentricity)
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut last = start;
        while let Some(x) = queue.pop_front() {
            last = x;
            for (y, _) in a.row(x) {
                if !placed[y] && dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        (last, dist[last])
    };
    for seed in 0..n {
        if placed[seed] {
            continue;
        }
        let mut start = seed;
        let (mut far, mut ecc) = bfs_levels(start, &placed);
        for _ in 0..4 {
            let (f2, e2) = bfs_levels(far, &placed);
            if e2 <= ecc {
                break;
            }
            start = far;
            far = f2;
            ecc = e2;
        }
        let _ = far;
        let begin = order.len();
        placed[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let x = order[head];
            head += 1;
            let mut next: Vec<usize> = a.row(x).map(|(y, _)| y).filter(|&y| !placed[y]).collect();
            next.sort_by_key(|&y| (degree[y], y));
            next.dedup();
            for y in next {
                if !placed[y] {
                    placed[y] = true;
                    order.push(y);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope `LDL^T` factor of a permuted SPD matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl<S> {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<S>,
    d: Vec<S>,
}

impl<S: Scalar> EnvelopeLdl<S> {
    pub fn factor(a: &SymMatrix<S>) -> Result<Self> {
        let n = a.n;
        let perm = rcm_order(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0; n];
        for (i, f) in first.iter_mut().enumerate() {
            let old = perm[i];
            *f = a.row(old).map(|(j, _)| inv[j]).filter(|&j| j < i).min().unwrap_or(i);
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut lower = vec![S::zero(); start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let j = inv[j];
                if j < i {
                    lower[start[i] + j - first[i]] = v;
                }
            }
        }
        let mut d = vec![S::zero(); n];
        for i in 0..n {
            let fi = first[i];
            // Row i currently holds A(i, fi..i); turn it into L(i, ..) in place.
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut t = lower[start[i] + j - fi];
                for k in lo..j {
                    t -= lower[start[i] + k - fi] * lower[start[j] + k - fj];
                }
                lower[start[i] + j - fi] = t;
            }
            // Row entries now hold L(i,j) * d(j); divide and accumulate d(i).
            let mut di = a.diag[perm[i]];
            for j in fi..i {
                let w = lower[start[i] + j - fi];
                let l = w / d[j];
                di -= l * w;
                lower[start[i] + j - fi] = l;
            }
            if di <= S::zero() {
                return Err(Error::SolverFailed {
                    residual: f64::INFINITY,
                    target: 0.0,
                });
            }
            d[i] = di;
        }
        Ok(EnvelopeLdl {
            perm,
            first,
            start,
            lower,
            d,
        })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.d.len();
        let mut y: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut t = y[i];
            for j in fi..i {
                t -= self.lower[self.start[i] + j - fi] * y[j];
            }
            y[i] = t;
        }
        for (yi, di) in y.iter_mut().zip(&self.d) {
            *yi /= *di;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            for j in fi..i {
                let l = self.lower[self.start[i] + j - fi];
                y[j] -= l * yi;
            }
        }
        let mut x = vec![S::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Number of stored subdiagonal entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }
}

/// Solution together with the achieved scaled residual.
#[derive(Debug, Clone)]
pub struct Solve<S> {
    pub x: Vec<S>,
    /// `max_i |b - A x|_i / A_ii`.
    pub residual: f64,
    pub iterations: usize,
}

fn scaled_residual<S: Scalar>(a: &SymMatrix<S>, x: &[S], b: &[S]) -> f64 {
    a.residual(x, b)
        .iter()
        .zip(a.diag())
        .map(|(r, d)| (*r / *d).abs().to_f64_lossy())
        .fold(0.0, f64::max)
}

/// Solves `A x = b` to `max_i |b - A x|_i / A_ii <= tol`.
pub fn solve_spd<S: Scalar>(a: &SymMatrix<S>, b: &[S], tol: f64, choice: SolverChoice) -> Result<Solve<S>> {
    let direct = match choice {
        SolverChoice::Direct => true,
        SolverChoice::Iterative => false,
        SolverChoice::Auto => S::EXACT || a.n < DIRECT_LIMIT,
    };
    if direct {
        solve_direct(a, b, tol)
    } else {
        solve_cg(a, b, tol, 20 * a.n + 1000)
    }
}

fn solve_direct<S: Scalar>(a: &SymMatrix<S>, b: &[S], tol: f64) -> Result<Solve<S>> {
    let f = EnvelopeLdl::factor(a)?;
    let mut x = f.solve(b);
    let mut residual = scaled_residual(a, &x, b);
    let mut iterations = 0;
    // A few rounds of iterative refinement for the float types.
    while !S::EXACT && residual > tol && iterations < 5 {
        let r = a.residual(&x, b);
        let dx = f.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        residual = scaled_residual(a, &x, b);
        iterations += 1;
    }
    if residual > tol {
        return Err(Error::SolverFailed { residual, target: tol });
    }
    Ok(Solve { x, residual, iterations })
}

fn solve_cg<S: Scalar>(a: &SymMatrix<S>, b: &[S], tol: f64, max_iter: usize) -> Result<Solve<S>> {
    let n = a.n;
    let dot = |u: &[S], v: &[S]| exact_sum(u.iter().zip(v).map(|(&x, &y)| x * y));
    let mut x = vec![S::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<S> = r.iter().zip(&a.diag).map(|(&ri, &d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![S::zero(); n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let check = |r: &[S]| {
        r.iter()
            .zip(&a.diag)
            .map(|(ri, d)| (*ri / *d).abs().to_f64_lossy())
            .fold(0.0, f64::max)
    };
    // Stop a little below tol so the recomputed residual still passes.
    let target = 0.25 * tol;
    let mut residual = check(&r);
    while residual > target && iterations < max_iter {
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= S::zero() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        // Periodic true-residual replacement limits drift.
        if iterations % 200 == 0 {
            r = a.residual(&x, b);
        }
        for i in 0..n {
            z[i] = r[i] / a.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = check(&r);
    }
    let residual = scaled_residual(a, &x, b);
    if residual > tol {
        return Err(Error::SolverFailed { residual, target: tol });
    }
    Ok(Solve { x, residual, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn path_laplacian<S: Scalar>(n: usize) -> SymMatrix<S> {
        let two = S::one() + S::one();
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                if i > 0 {
                    r.push((i - 1, -S::one()));
                }
                if i + 1 < n {
                    r.push((i + 1, -S::one()));
                }
                r
            })
            .collect();
        SymMatrix::from_rows(vec![two; n], rows)
    }

    #[test]
    fn exact_path_solve() {
        // Killed walk on {0..n-1} with exits at both ends: G(0) = n / (n + 1).
        let a = path_laplacian::<Rational>(4);
        let mut b = vec![Rational::from_integer(0); 4];
        b[0] = Rational::from_integer(1);
        let s = solve_spd(&a, &b, 0.0, SolverChoice::Direct).unwrap();
        assert_eq!(s.x[0], Rational::new(4, 5));
        assert_eq!(s.x[3], Rational::new(1, 5));
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn direct_and_cg_agree() {
        let a = path_laplacian::<f64>(300);
        let b: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let d = solve_spd(&a, &b, 1e-10, SolverChoice::Direct).unwrap();
        let c = solve_spd(&a, &b, 1e-10, SolverChoice::Iterative).unwrap();
        for (x, y) in d.x.iter().zip(&c.x) {
            assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = path_laplacian::<f64>(17);
        let mut o = rcm_order(&a);
        o.sort_unstable();
        assert_eq!(o, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn singular_system_is_reported() {
        // Pure Neumann Laplacian of an edge: singular.
        let rows = vec![vec![(1, -1.0)], vec![(0, -1.0)]];
        let a = SymMatrix::from_rows(vec![1.0, 1.0], rows);
        assert!(EnvelopeLdl::factor(&a).is_err());
    }
}
