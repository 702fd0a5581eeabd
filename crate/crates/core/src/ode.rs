//! The comparison equation `v' = -(C F(v))^2`, its closed forms, an
//! adaptive RK4 fallback, and the exit and occupation bounds `2 int v_+`
//! and `2 int v_{+A}`.
//!
//! Every supported `F` is a piecewise power law (a table is interpolated
//! log-log and extrapolated with its end exponents), so the integrals of
//! `1 / F^2` and `w / F^2` that govern the curve are available exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FKind {
    /// `F(x) = x^{1 - 1/d}`.
    Power { d: f64 },
    /// `F(x) = x`.
    Linear,
    /// Nondecreasing table of `(x, F(x))` with `x > 0`, `F > 0`.
    Custom { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFunction {
    #[serde(flatten)]
    pub kind: FKind,
    /// `F(x) = F(floor)` for `x <= floor`; zero disables the convention.
    #[serde(default)]
    pub floor: f64,
}

/// `F(w) = c w^p` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    c: f64,
    p: f64,
}

/// `int_a^b w^q dw` for `0 <= a <= b <= inf`.
fn int_pow(q: f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let e = q + 1.0;
    if e.abs() < 1e-14 {
        return if a == 0.0 || b.is_infinite() { f64::INFINITY } else { (b / a).ln() };
    }
    if b.is_infinite() && e > 0.0 || a == 0.0 && e < 0.0 {
        return f64::INFINITY;
    }
    let top = if b.is_infinite() { 0.0 } else { b.powf(e) };
    let bottom = if a == 0.0 { 0.0 } else { a.powf(e) };
    (top - bottom) / e
}

impl ProfileFunction {
    pub fn power(d: f64) -> Result<Self> {
        if !(d >= 1.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("power profile needs d >= 1, got {d}")));
        }
        Ok(ProfileFunction {
            kind: FKind::Power { d },
            floor: 0.0,
        })
    }

    pub fn linear() -> Self {
        ProfileFunction {
            kind: FKind::Linear,
            floor: 0.0,
        }
    }

    pub fn custom(mut table: Vec<(f64, f64)>) -> Result<Self> {
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bad = table.len() < 2
            || table.iter().any(|&(x, f)| !(x > 0.0 && f > 0.0 && x.is_finite() && f.is_finite()))
            || table.windows(2).any(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1);
        if bad {
            return Err(Error::InvalidParameter(
                "profile table needs >= 2 points, x > 0 distinct, F > 0 nondecreasing".into(),
            ));
        }
        Ok(ProfileFunction {
            kind: FKind::Custom { table },
            floor: 0.0,
        })
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor.max(0.0);
        self
    }

    /// Dimension of a power profile.
    pub fn dimension(&self) -> Option<f64> {
        match self.kind {
            FKind::Power { d } => Some(d),
            _ => None,
        }
    }

    fn pieces(&self) -> Vec<Piece> {
        match &self.kind {
            FKind::Power { d } => vec![Piece {
                lo: 0.0,
                hi: f64::INFINITY,
                c: 1.0,
                p: 1.0 - 1.0 / d,
            }],
            FKind::Linear => vec![Piece {
                lo: 0.0,
                hi: f64::INFINITY,
                c: 1.0,
                p: 1.0,
            }],
            FKind::Custom { table } => {
                let n = table.len();
                (0..n - 1)
                    .map(|i| {
                        let (x0, f0) = table[i];
                        let (x1, f1) = table[i + 1];
                        let p = (f1 / f0).ln() / (x1 / x0).ln();
                        Piece {
                            lo: if i == 0 { 0.0 } else { x0 },
                            hi: if i == n - 2 { f64::INFINITY } else { x1 },
                            c: f0 / x0.powf(p),
                            p,
                        }
                    })
                    .collect()
            }
        }
    }

    fn raw(&self, x: f64) -> f64 {
        match &self.kind {
            FKind::Power { d } => x.powf(1.0 - 1.0 / d),
            FKind::Linear => x,
            FKind::Custom { .. } => {
                let pieces = self.pieces();
                let pc = pieces
                    .iter()
                    .find(|pc| x <= pc.hi)
                    .unwrap_or_else(|| pieces.last().expect("nonempty"));
                pc.c * x.powf(pc.p)
            }
        }
    }

    /// `F(max(x, floor))`.
    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x.max(self.floor))
    }

    /// `int_a^b w^k / F(w)^2 dw` with the floor applied (`k` is 0 or 1).
    fn moment(&self, k: i32, a: f64, b: f64) -> f64 {
        if a >= b {
            return 0.0;
        }
        let mut total = 0.0;
        if a < self.floor {
            let top = b.min(self.floor);
            let ff = self.raw(self.floor);
            let span = if k == 0 {
                top - a
            } else {
                (top * top - a * a) / 2.0
            };
            total += span / (ff * ff);
        }
        let lo = a.max(self.floor);
        for pc in self.pieces() {
            let (x0, x1) = (lo.max(pc.lo), b.min(pc.hi));
            if x0 < x1 {
                total += int_pow(k as f64 - 2.0 * pc.p, x0, x1) / (pc.c * pc.c);
            }
        }
        total
    }

    /// `int_a^b ds / F(s)^2`, possibly infinite (`b` may be infinite).
    pub fn inverse_square_integral(&self, a: f64, b: f64) -> f64 {
        self.moment(0, a, b)
    }

    /// `int_a^b s / F(s)^2 ds`.
    pub fn first_moment_integral(&self, a: f64, b: f64) -> f64 {
        self.moment(1, a, b)
    }
}

/// Bound selector for [`closed_form_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Exit,
    Occupation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveForm {
    /// `v^{-a} = m^{-a} + a C^2 s`, `a = (d - 2) / d`.
    Power,
    /// `v = m e^{-C^2 s}` (the `d = 2` power case).
    Exponential,
    /// `1/v = 1/m + C^2 s`.
    Reciprocal,
    /// Adaptive RK4 grid with Hermite dense output.
    Numeric,
}

/// Local error target of the RK4 fallback, relative to `v`.
pub const RK4_TOL: f64 = 1e-9;

const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone)]
pub struct BoundCurve {
    f: ProfileFunction,
    c: f64,
    /// `v(0)`; `None` for the transient curve with `v(0) = inf`.
    start: Option<f64>,
    form: CurveForm,
    /// Time at which the curve enters the floor phase (`inf` if never).
    s_floor: f64,
    /// Value at `s_floor`.
    v_floor: f64,
    /// `C^2 F(floor)^2`, the constant decay rate in the floor phase.
    floor_rate: f64,
    /// Numeric form: `(s, v, v')` knots.
    grid: Vec<(f64, f64, f64)>,
    /// Numeric form: `int v ds` from the first knot to each knot.
    grid_area: Vec<f64>,
    /// Numeric form: the grid reached `v = 0`.
    grid_closed: bool,
}

impl BoundCurve {
    pub fn form(&self) -> CurveForm {
        self.form
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn profile(&self) -> &ProfileFunction {
        &self.f
    }

    /// `v(0)`, or `None` for a transient curve.
    pub fn initial_mass(&self) -> Option<f64> {
        self.start
    }

    pub fn is_transient(&self) -> bool {
        self.start.is_none()
    }

    /// Number of RK4 knots (zero for closed forms).
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    fn c2(&self) -> f64 {
        self.c * self.c
    }

    fn rhs(&self, v: f64) -> f64 {
        let cf = self.c * self.f.eval(v.max(0.0));
        -cf * cf
    }

    /// Time for the curve to descend from `hi` to `lo`.
    fn travel(&self, lo: f64, hi: f64) -> f64 {
        self.f.inverse_square_integral(lo, hi) / self.c2()
    }

    /// The value reached after running the curve for time `dt` from `from`
    /// (which may be infinite), by bisection on the travel time.
    fn advance(&self, from: f64, dt: f64) -> f64 {
        if dt <= 0.0 {
            return from;
        }
        let to_zero = self.travel(0.0, from);
        if to_zero <= dt {
            return -(dt - to_zero) * self.floor_rate;
        }
        let mut hi = from;
        if !from.is_finite() {
            hi = 1.0;
            while self.travel(hi, from) > dt {
                hi *= 2.0;
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..400 {
            let mid = if lo > 0.0 { (lo * hi).sqrt() } else { hi / 2.0 };
            if self.travel(mid, from) > dt {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Closed-form value before the floor phase.
    fn closed(&self, s: f64) -> f64 {
        let c2 = self.c2();
        match (self.form, self.start) {
            (CurveForm::Exponential, Some(m)) => m * (-c2 * s).exp(),
            (CurveForm::Reciprocal, Some(m)) => 1.0 / (1.0 / m + c2 * s),
            (CurveForm::Reciprocal, None) => 1.0 / (c2 * s),
            (CurveForm::Power, start) => {
                let d = self.f.dimension().expect("power form");
                let a = (d - 2.0) / d;
                let base = start.map_or(0.0, |m| m.powf(-a)) + a * c2 * s;
                if base <= 0.0 {
                    0.0
                } else {
                    base.powf(-1.0 / a)
                }
            }
            _ => unreachable!("closed form requested for {:?}", self.form),
        }
    }

    fn numeric(&self, s: f64) -> f64 {
        let first = self.grid[0];
        if s < first.0 {
            return self.advance(f64::INFINITY, s);
        }
        let last = *self.grid.last().expect("nonempty grid");
        if s >= last.0 {
            return if self.grid_closed {
                last.1 + last.2 * (s - last.0)
            } else {
                self.advance(last.1, s - last.0)
            };
        }
        let i = self.grid.partition_point(|k| k.0 <= s) - 1;
        let (s0, v0, d0) = self.grid[i];
        let (s1, v1, d1) = self.grid[i + 1];
        let h = s1 - s0;
        let t = (s - s0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * h * d1
    }

    /// `v(s)` (may be negative once the curve has crossed zero).
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            if let Some(m) = self.start {
                return m;
            }
            if s == 0.0 {
                return f64::INFINITY;
            }
        }
        if self.form == CurveForm::Numeric {
            return self.numeric(s);
        }
        if s >= self.s_floor {
            self.v_floor - self.floor_rate * (s - self.s_floor)
        } else {
            self.closed(s)
        }
    }

    pub fn v_plus(&self, s: f64) -> f64 {
        self.eval(s).max(0.0)
    }

    /// `min(max(v, 0), cap)`.
    pub fn v_plus_capped(&self, s: f64, cap: f64) -> f64 {
        self.v_plus(s).min(cap)
    }

    /// Time at which the curve passes the value `w`.
    pub fn time_to(&self, w: f64) -> f64 {
        match self.start {
            Some(m) if w >= m => 0.0,
            Some(m) => self.travel(w.max(0.0), m),
            None => self.travel(w.max(0.0), f64::INFINITY),
        }
    }

    /// `int_0^inf v_+ ds` from the RK4 grid, with the exact remainder past
    /// the last knot.
    fn numeric_integral(&self) -> f64 {
        let mut total = *self.grid_area.last().expect("nonempty grid");
        if !self.grid_closed {
            let last = self.grid.last().expect("nonempty grid");
            total += self.f.first_moment_integral(0.0, last.1) / self.c2();
        }
        total
    }

    /// CSV dump `s,v,v_plus,v_plusA` at the given times.
    pub fn write_csv<W: Write>(&self, mut out: W, times: &[f64], cap: f64) -> Result<()> {
        writeln!(out, "s,v,v_plus,v_plusA")?;
        for &s in times {
            writeln!(
                out,
                "{},{},{},{}",
                s,
                self.eval(s),
                self.v_plus(s),
                self.v_plus_capped(s, cap)
            )?;
        }
        Ok(())
    }
}

fn validate(c: f64, start: Option<f64>) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("constant C must be positive, got {c}")));
    }
    if let Some(m) = start {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial mass must be positive, got {m}")));
        }
    }
    Ok(())
}

fn transient_check(f: &ProfileFunction) -> Result<()> {
    let tail = f.inverse_square_integral(1.0, f64::INFINITY);
    if !tail.is_finite() {
        return Err(Error::TransientUnsupported(format!(
            "int 1/F^2 diverges at infinity for {:?}",
            f.kind
        )));
    }
    // An unfloored curve starting at infinity keeps mass forever near zero
    // when int s/F(s)^2 diverges at the origin (F = id).
    if !f.first_moment_integral(0.0, 1.0).is_finite() {
        return Err(Error::TransientUnsupported(format!(
            "{:?} needs a positive floor for a transient curve",
            f.kind
        )));
    }
    Ok(())
}

fn skeleton(f: &ProfileFunction, c: f64, start: Option<f64>, form: CurveForm) -> BoundCurve {
    let mut curve = BoundCurve {
        f: f.clone(),
        c,
        start,
        form,
        s_floor: f64::INFINITY,
        v_floor: 0.0,
        floor_rate: 0.0,
        grid: Vec::new(),
        grid_area: Vec::new(),
        grid_closed: false,
    };
    if f.floor > 0.0 {
        let cf = c * f.eval(f.floor);
        curve.floor_rate = cf * cf;
        let top = start.unwrap_or(f64::INFINITY);
        curve.v_floor = top.min(f.floor);
        curve.s_floor = curve.travel(curve.v_floor, top);
    }
    curve
}

/// Solves `v' = -(C F(v))^2` from `v(0) = m_a`, or from `v(0+) = inf` when
/// `m_a` is `None`. Power and linear profiles use closed forms.
pub fn solve_bound_curve(f: &ProfileFunction, c: f64, m_a: Option<f64>) -> Result<BoundCurve> {
    validate(c, m_a)?;
    if m_a.is_none() {
        transient_check(f)?;
    }
    let form = match f.kind {
        FKind::Power { d: 2.0 } => CurveForm::Exponential,
        FKind::Power { .. } => CurveForm::Power,
        FKind::Linear => CurveForm::Reciprocal,
        FKind::Custom { .. } => return solve_bound_curve_numeric(f, c, m_a),
    };
    Ok(skeleton(f, c, m_a, form))
}

/// Adaptive RK4 with step doubling, local error `<= 1e-9 v`, for any profile.
pub fn solve_bound_curve_numeric(f: &ProfileFunction, c: f64, m_a: Option<f64>) -> Result<BoundCurve> {
    validate(c, m_a)?;
    if m_a.is_none() {
        transient_check(f)?;
    }
    let mut curve = skeleton(f, c, m_a, CurveForm::Numeric);
    let (mut s, mut v) = match m_a {
        Some(m) => (0.0, m),
        None => {
            // Start on the exact solution at a large value.
            let scale = match &f.kind {
                FKind::Custom { table } => table.last().expect("table").0,
                _ => 1.0,
            };
            let v0 = 1e6 * scale.max(f.floor).max(1.0);
            (curve.travel(v0, f64::INFINITY), v0)
        }
    };
    let stop = 1e-12 * v;
    // RK4 on (v, I) with I' = v, so the running integral gets the same
    // error control as the curve.
    let step = |v: f64, h: f64| {
        let k1 = curve.rhs(v);
        let v2 = v + 0.5 * h * k1;
        let k2 = curve.rhs(v2);
        let v3 = v + 0.5 * h * k2;
        let k3 = curve.rhs(v3);
        let v4 = v + h * k3;
        let k4 = curve.rhs(v4);
        (
            v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
        )
    };
    let mut grid = vec![(s, v, curve.rhs(v))];
    let mut area = vec![0.0];
    let mut total = 0.0;
    let mut h = 1e-3 * v / curve.rhs(v).abs();
    let mut closed = false;
    for _ in 0..MAX_STEPS {
        if f.floor > 0.0 && v <= f.floor {
            // Constant slope from here: the zero crossing is exact.
            let end = s + v / curve.floor_rate;
            grid.push((end, 0.0, -curve.floor_rate));
            total += 0.5 * v * (end - s);
            area.push(total);
            closed = true;
            break;
        }
        if v <= stop {
            break;
        }
        let (big, big_area) = step(v, h);
        let (mid, first) = step(v, 0.5 * h);
        let (half, second) = step(mid, 0.5 * h);
        let half_area = first + second;
        if !(half.is_finite() && big.is_finite()) || half < 0.0 {
            h *= 0.25;
            continue;
        }
        let err = (half - big).abs() / 15.0;
        let tol = RK4_TOL * v;
        let factor = if err == 0.0 { 4.0 } else { 0.9 * (tol / err).powf(0.2) };
        if err <= tol {
            s += h;
            v = half + (half - big) / 15.0;
            total += half_area + (half_area - big_area) / 15.0;
            grid.push((s, v, curve.rhs(v)));
            area.push(total);
            h *= factor.min(4.0);
        } else {
            h *= factor.max(0.1);
        }
    }
    curve.grid = grid;
    curve.grid_area = area;
    curve.grid_closed = closed;
    Ok(curve)
}

/// `2 int_0^inf v_+ ds`; infinite for a transient curve or when the
/// unfloored profile makes the integral diverge.
pub fn bound_exit(curve: &BoundCurve) -> f64 {
    let Some(m) = curve.start else {
        return f64::INFINITY;
    };
    if curve.form == CurveForm::Numeric {
        return 2.0 * curve.numeric_integral();
    }
    2.0 * curve.f.first_moment_integral(0.0, m) / curve.c2()
}

/// `2 int_0^inf min(v_+, m_a) ds` for a transient curve: the rectangle up to
/// the time the curve comes down to `m_a`, plus the exit bound from `m_a`.
pub fn bound_occupation(curve: &BoundCurve, m_a: f64) -> Result<f64> {
    if !curve.is_transient() {
        return Err(Error::TransientUnsupported("occupation bound needs a transient curve".into()));
    }
    if m_a <= 0.0 {
        return Ok(0.0);
    }
    let c2 = curve.c2();
    let rect = m_a * curve.travel(m_a, f64::INFINITY);
    Ok(2.0 * (rect + curve.f.first_moment_integral(0.0, m_a) / c2))
}

/// The explicit constants for the power and linear families.
pub fn closed_form_bound(kind: BoundKind, f: &ProfileFunction, c: f64, m_a: f64, m_o: f64) -> Result<f64> {
    let c2 = c * c;
    match (kind, &f.kind) {
        (BoundKind::Exit, FKind::Power { d }) => Ok(d / c2 * m_a.powf(2.0 / d)),
        (BoundKind::Occupation, FKind::Power { d }) if *d > 2.0 => Ok(d * d / (c2 * (d - 2.0)) * m_a.powf(2.0 / d)),
        (BoundKind::Exit, FKind::Linear) => Ok((1.0 + 2.0 * (m_a / m_o).ln()) / c2),
        (BoundKind::Occupation, FKind::Linear) => Ok((3.0 + 2.0 * (m_a / m_o).ln()) / c2),
        (kind, other) => Err(Error::UnsupportedCombination(format!("{kind:?} bound for {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransienceVerdict {
    /// `int_1^inf ds / F(s)^2 < inf`.
    pub finite: bool,
    /// `int_1^inf ds / F(s)^2`.
    pub tail: f64,
    /// `int_{inf m}^1 ds / F(s)^2` (zero when `inf m >= 1`).
    pub head: f64,
    /// Uniform bound on `G` over all regions, when `finite`.
    pub t0: Option<f64>,
    /// The same bound restricted to regions of measure at most `m_max`.
    pub t0_bounded: f64,
}

/// From `int_{u(t)}^{u(0)} ds/F^2 >= C^2 t`: once `C^2 t >= 2 int_1^inf`,
/// `int_{u(t)}^1 ds/F^2 >= C^2 t / 2`, which forces `u(t) < inf m` as soon
/// as `C^2 t / 2 > int_{inf m}^1`. So `t0 = 2 max(tail, head) / C^2`.
pub fn transience_diagnostic(f: &ProfileFunction, c: f64, inf_m: f64, m_max: f64) -> TransienceVerdict {
    let tail = f.inverse_square_integral(1.0, f64::INFINITY);
    let head = f.inverse_square_integral(inf_m.min(1.0), 1.0);
    let bounded_tail = f.inverse_square_integral(1.0, m_max.max(1.0));
    let finite = tail.is_finite();
    let c2 = c * c;
    TransienceVerdict {
        finite,
        tail,
        head,
        t0: finite.then(|| 2.0 * tail.max(head) / c2),
        t0_bounded: 2.0 * bounded_tail.max(head) / c2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn floor_convention() {
        assert_eq!(ProfileFunction::power(2.0).unwrap().with_floor(1.0).eval(4.0), 2.0);
        assert_eq!(ProfileFunction::linear().with_floor(2.0).eval(0.5), 2.0);
        assert!(close(ProfileFunction::power(3.0).unwrap().eval(8.0), 4.0, 1e-15));
    }

    #[test]
    fn custom_table_interpolates_log_log() {
        let f = ProfileFunction::custom(vec![(1.0, 1.0), (4.0, 2.0), (16.0, 8.0)]).unwrap();
        assert!(close(f.eval(2.0), 2f64.sqrt(), 1e-14));
        assert!(close(f.eval(8.0), 4.0, 1e-14));
        assert!(close(f.eval(64.0), 32.0, 1e-14));
        assert!(close(f.eval(0.25), 0.5, 1e-14));
        assert!(ProfileFunction::custom(vec![(1.0, 2.0), (2.0, 1.0)]).is_err());
        assert!(ProfileFunction::custom(vec![(1.0, 2.0)]).is_err());
    }

    #[test]
    fn moments() {
        let f3 = ProfileFunction::power(3.0).unwrap();
        assert!(close(f3.inverse_square_integral(1.0, f64::INFINITY), 3.0, 1e-14));
        let f2 = ProfileFunction::power(2.0).unwrap();
        assert!(f2.inverse_square_integral(1.0, f64::INFINITY).is_infinite());
        assert!(close(f2.inverse_square_integral(1.0, std::f64::consts::E), 1.0, 1e-14));
        let lin = ProfileFunction::linear().with_floor(2.0);
        // [0, 2] at F = 2, then 1/s^2 on [2, 4].
        assert!(close(lin.inverse_square_integral(0.0, 4.0), 0.5 + 0.25, 1e-14));
        assert!(close(lin.first_moment_integral(0.0, 4.0), 0.5 + 2f64.ln(), 1e-14));
    }

    #[test]
    fn closed_form_curves() {
        let e = std::f64::consts::E;
        let lin = ProfileFunction::linear().with_floor(1.0);
        let curve = solve_bound_curve(&lin, 1.0, Some(e)).unwrap();
        assert_eq!(curve.form(), CurveForm::Reciprocal);
        for s in [0.0, 0.1, 0.3, 0.6] {
            assert!(close(curve.eval(s), 1.0 / (1.0 / e + s), 1e-14));
        }
        let exp = solve_bound_curve(&ProfileFunction::power(2.0).unwrap(), 1.0, Some(10.0)).unwrap();
        for s in [0.0, 0.5, 3.0, 20.0] {
            assert!(close(exp.eval(s), 10.0 * (-s).exp(), 1e-14));
        }
        assert!(close(bound_exit(&exp), 20.0, 1e-14));
        assert!(close(bound_exit(&curve), 3.0, 1e-14));
    }

    #[test]
    fn floored_linear_phase_reaches_zero() {
        let lin = ProfileFunction::linear().with_floor(1.0);
        let curve = solve_bound_curve(&lin, 1.0, Some(std::f64::consts::E)).unwrap();
        let s_floor = 1.0 - 1.0 / std::f64::consts::E;
        assert!(close(curve.eval(s_floor), 1.0, 1e-14));
        assert!(close(curve.eval(s_floor + 0.5), 0.5, 1e-14));
        assert_eq!(curve.v_plus(s_floor + 2.0), 0.0);
        assert!(curve.eval(s_floor + 2.0) < 0.0);
    }

    #[test]
    fn smallest_region_bound_is_finite() {
        let lin = ProfileFunction::linear().with_floor(2.0);
        let b = bound_exit(&solve_bound_curve(&lin, 0.7, Some(2.0)).unwrap());
        assert!(b > 0.0 && b.is_finite());
        assert!(close(b, 1.0 / 0.49, 1e-14));
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let cases = [
            (ProfileFunction::power(3.0).unwrap(), 0.5, 100.0),
            (ProfileFunction::power(2.0).unwrap(), 0.8, 50.0),
            (ProfileFunction::linear().with_floor(1.0), 1.3, 40.0),
            (ProfileFunction::power(3.0).unwrap().with_floor(2.0), 0.6, 30.0),
        ];
        for (f, c, m) in cases {
            let exact = solve_bound_curve(&f, c, Some(m)).unwrap();
            let num = solve_bound_curve_numeric(&f, c, Some(m)).unwrap();
            let horizon = 10.0 / (c * c);
            for i in 0..=1000 {
                let s = horizon * i as f64 / 1000.0;
                let (a, b) = (exact.v_plus(s), num.v_plus(s));
                assert!(
                    (a - b).abs() <= 1e-6 * a.max(1e-300) || (a - b).abs() < 1e-12 * m,
                    "{f:?} s={s}: {a} vs {b}"
                );
            }
            assert!(close(bound_exit(&exact), bound_exit(&num), 1e-8), "{f:?} {} {}", bound_exit(&exact), bound_exit(&num));
        }
    }

    #[test]
    fn transient_power_curve() {
        let f = ProfileFunction::power(3.0).unwrap();
        let c = 0.7;
        let curve = solve_bound_curve(&f, c, None).unwrap();
        assert!(curve.is_transient());
        let s = 2.0;
        assert!(close(curve.eval(s), (c * c * s / 3.0).powf(-3.0), 1e-14));
        for m in [1.0, 7.0, 300.0] {
            let occ = bound_occupation(&curve, m).unwrap();
            let formula = closed_form_bound(BoundKind::Occupation, &f, c, m, 1.0).unwrap();
            assert!(close(occ, formula, 1e-12));
            let exit = bound_exit(&solve_bound_curve(&f, c, Some(m)).unwrap());
            assert!(occ >= exit);
        }
        assert!(bound_occupation(&curve, 1e-15).unwrap() < 1e-8);
    }

    #[test]
    fn transient_linear_needs_floor() {
        let c = 1.0;
        assert!(matches!(
            solve_bound_curve(&ProfileFunction::linear(), c, None),
            Err(Error::TransientUnsupported(_))
        ));
        assert!(matches!(
            solve_bound_curve(&ProfileFunction::power(2.0).unwrap(), c, None),
            Err(Error::TransientUnsupported(_))
        ));
        let f = ProfileFunction::linear().with_floor(1.0);
        let curve = solve_bound_curve(&f, c, None).unwrap();
        let occ = bound_occupation(&curve, 1.0).unwrap();
        assert!(close(occ, 3.0, 1e-14));
        let occ = bound_occupation(&curve, 5.0).unwrap();
        assert!(close(occ, closed_form_bound(BoundKind::Occupation, &f, c, 5.0, 1.0).unwrap(), 1e-14));
    }

    #[test]
    fn transient_numeric_curve() {
        let f = ProfileFunction::custom(vec![(1.0, 1.0), (8.0, 4.0), (64.0, 16.0)]).unwrap();
        // The table is exactly x^{2/3}, the three-dimensional power profile.
        let p = ProfileFunction::power(3.0).unwrap();
        let num = solve_bound_curve(&f, 0.9, None).unwrap();
        let exact = solve_bound_curve(&p, 0.9, None).unwrap();
        assert_eq!(num.form(), CurveForm::Numeric);
        for s in [1e-3, 0.1, 1.0, 10.0, 100.0] {
            assert!(close(num.eval(s), exact.eval(s), 1e-6), "s={s}");
        }
        assert!(close(
            bound_occupation(&num, 20.0).unwrap(),
            bound_occupation(&exact, 20.0).unwrap(),
            1e-10
        ));
    }

    #[test]
    fn closed_form_constants() {
        let p2 = ProfileFunction::power(2.0).unwrap();
        assert_eq!(closed_form_bound(BoundKind::Exit, &p2, 1.0, 100.0, 1.0).unwrap(), 200.0);
        let lin = ProfileFunction::linear();
        assert_eq!(closed_form_bound(BoundKind::Occupation, &lin, 1.0, 4.0, 4.0).unwrap(), 3.0);
        assert!(matches!(
            closed_form_bound(BoundKind::Occupation, &p2, 1.0, 4.0, 1.0),
            Err(Error::UnsupportedCombination(_))
        ));
    }

    #[test]
    fn exit_bound_matches_constants() {
        for d in [2.0, 3.0, 4.5] {
            let f = ProfileFunction::power(d).unwrap();
            for (c, m) in [(1.0, 1.0), (0.3, 17.0), (2.0, 1e5)] {
                let b = bound_exit(&solve_bound_curve(&f, c, Some(m)).unwrap());
                let k = closed_form_bound(BoundKind::Exit, &f, c, m, 1.0).unwrap();
                assert!(close(b, k, 1e-12));
            }
        }
        for (c, m, mo) in [(1.0, std::f64::consts::E, 1.0), (0.4, 1000.0, 4.0), (1.7, 6.0, 6.0)] {
            let f = ProfileFunction::linear().with_floor(mo);
            let b = bound_exit(&solve_bound_curve(&f, c, Some(m)).unwrap());
            let k = closed_form_bound(BoundKind::Exit, &f, c, m, mo).unwrap();
            assert!(close(b, k, 1e-12));
        }
    }

    #[test]
    fn monotone_in_c_and_mass() {
        let families = [
            ProfileFunction::power(2.0).unwrap().with_floor(1.0),
            ProfileFunction::power(3.0).unwrap().with_floor(1.0),
            ProfileFunction::linear().with_floor(1.0),
        ];
        for f in &families {
            let mut prev_c = f64::INFINITY;
            for c in [0.2, 0.5, 1.0, 2.0] {
                let b = bound_exit(&solve_bound_curve(f, c, Some(50.0)).unwrap());
                assert!(b <= prev_c);
                prev_c = b;
            }
            let mut prev_m = 0.0;
            for m in [0.5, 1.0, 3.0, 50.0, 400.0] {
                let b = bound_exit(&solve_bound_curve(f, 0.7, Some(m)).unwrap());
                assert!(b >= prev_m);
                prev_m = b;
            }
        }
    }

    #[test]
    fn transience_verdicts() {
        let v = transience_diagnostic(&ProfileFunction::power(3.0).unwrap(), 1.0, 2.0, 1e4);
        assert!(v.finite);
        assert!(close(v.tail, 3.0, 1e-14));
        assert!(close(v.t0.unwrap(), 6.0, 1e-14));
        let v = transience_diagnostic(&ProfileFunction::power(2.0).unwrap(), 1.0, 2.0, 1e4);
        assert!(!v.finite && v.t0.is_none());
        assert!(v.t0_bounded.is_finite());
        let v = transience_diagnostic(&ProfileFunction::linear(), 0.5, 0.5, 1e4);
        assert!(v.finite);
        assert!(close(v.tail, 1.0, 1e-14));
        assert!(close(v.head, 1.0, 1e-14));
        assert!(close(v.t0.unwrap(), 8.0, 1e-14));
    }

    #[test]
    fn csv_header() {
        let curve = solve_bound_curve(&ProfileFunction::power(2.0).unwrap(), 1.0, Some(1.0)).unwrap();
        let mut out = Vec::new();
        curve.write_csv(&mut out, &[0.0], 1.0).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "s,v,v_plus,v_plusA\n0,1,1,1\n");
    }
}
