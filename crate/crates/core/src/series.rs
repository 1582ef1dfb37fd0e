//! Coefficient tables `p_n`, `q_n` and the measure-theoretic trigonometric
//! functions built from them.
//!
//! With `p_0 = q_0 = 1`,
//!
//! ```text
//! p_n = ∫₀ˣ p_{n-1} dμ (n odd),   ∫₀ˣ p_{n-1} dt (n even)
//! q_n = ∫₀ˣ q_{n-1} dt (n odd),   ∫₀ˣ q_{n-1} dμ (n even)
//! ```
//!
//! and `sinp(z) = Σ (-1)^n z^{2n+1} p_{2n+1}(1)`, `sinq` with `q_{2n+1}`,
//! `cosp` with `p_{2n}`, `cosq` with `q_{2n}`.
//!
//! # Truncation certificates
//!
//! Write `T f = ∫₀ˣ ∫₀ᵗ f dr dμ` and `S f = ∫₀ˣ ∫₀ᵗ f dμ dr`. Then
//! `p_{2n+1} = T p_{2n-1}`, `q_{2n} = T q_{2n-2}`, `q_{2n+1} = S q_{2n-1}` and
//! `p_{2n} = S p_{2n-2}`, so `T^k 1 = q_{2k}` and `S^k 1 = p_{2k}`. Both
//! operators have nonnegative kernels supported on `r <= x`, hence for a
//! nonnegative nondecreasing `f`, `T^k f(x) <= f(x) q_{2k}(x)` (and likewise
//! for `S`). For the sine series this gives
//!
//! ```text
//! Σ_{n>N} |z|^{2n+1} p_{2n+1}(1) <= |z|^{2N+1} p_{2N+1}(1) · Σ_{k>=1} z^{2k} q_{2k}(1)
//! ```
//!
//! and the last sum is bounded either from the stored coefficients through
//! `q_{2(j+k)}(1) <= q_{2j}(1) q_{2k}(1)`, or through
//! `q_{2k}(1) <= D^k / (2k)!` with `D` the largest density. The factorial
//! bounds `p_{2n+1} <= q_2^n / n!` are reported alongside as
//! `factorial_bound`; they are valid but far too loose to drive the order.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::measures::Measure;
use crate::polyalg::{dd, ldexp, Dd, Grid, PiecewisePolynomial};

/// Tail tolerance used when a table is sized automatically.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-16;

/// Tables beyond this order fail with a resource error.
pub const MAX_ORDER: usize = 1500;

/// Per-operation relative rounding unit used by the rounding estimate.
const DD_UNIT: f64 = 1.0 / (1u128 << 102) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigFn {
    Sinp,
    Sinq,
    Cosp,
    Cosq,
}

impl TrigFn {
    pub const ALL: [TrigFn; 4] = [TrigFn::Sinp, TrigFn::Sinq, TrigFn::Cosp, TrigFn::Cosq];

    /// Power of `z` in term `n`.
    fn power(self, n: usize) -> usize {
        match self {
            TrigFn::Sinp | TrigFn::Sinq => 2 * n + 1,
            TrigFn::Cosp | TrigFn::Cosq => 2 * n,
        }
    }

    /// Coefficient family and index for term `n`.
    fn coefficient(self, n: usize) -> (Family, usize) {
        match self {
            TrigFn::Sinp => (Family::P, 2 * n + 1),
            TrigFn::Sinq => (Family::Q, 2 * n + 1),
            TrigFn::Cosp => (Family::P, 2 * n),
            TrigFn::Cosq => (Family::Q, 2 * n),
        }
    }

    /// Family whose even members bound the growth of the tail.
    fn chain(self) -> Family {
        match self {
            TrigFn::Sinp | TrigFn::Cosq => Family::Q,
            TrigFn::Sinq | TrigFn::Cosp => Family::P,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    P,
    Q,
}

/// Rigorous bound on the discarded tail plus an estimate of the rounding
/// error of the retained partial sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationCertificate {
    pub z: f64,
    pub order: usize,
    pub tail_bound: f64,
    pub rounding_bound: f64,
    /// Tail bound from the `g^n / n!` factorial estimates; may be infinite.
    pub factorial_bound: f64,
}

impl TruncationCertificate {
    pub fn total(&self) -> f64 {
        self.tail_bound + self.rounding_bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub certificate: TruncationCertificate,
}

/// `m · 2^e`. The coefficients decay like `1/n!` and the powers of `z` grow
/// geometrically; both leave the `f64` exponent range at orders that large
/// `z` needs, so they are carried with a separate binary exponent.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    m: Dd,
    e: i32,
}

impl Scaled {
    const ONE: Scaled = Scaled { m: TwoFloat::from_f64(1.0), e: 0 };

    fn new(m: Dd, e: i32) -> Self {
        let h = m.hi();
        if h == 0.0 || !h.is_finite() {
            return Scaled { m, e: 0 };
        }
        let k = h.abs().log2().floor() as i32;
        Scaled { m: ldexp(m, -k), e: e + k }
    }

    fn mul(self, other: Scaled) -> Self {
        Scaled::new(self.m * other.m, self.e + other.e)
    }

    fn value(self) -> Dd {
        ldexp(self.m, self.e)
    }

    fn ln_abs(self) -> f64 {
        self.m.hi().abs().ln() + self.e as f64 * std::f64::consts::LN_2
    }

    fn is_zero(self) -> bool {
        self.m.hi() == 0.0
    }
}

/// Coefficient functions `p_0 … p_{2N+1}`, `q_0 … q_{2N+1}` for one measure.
///
/// Each function is stored as `f̂ · 2^e` with `f̂(1)` in `[1, 2)`.
#[derive(Debug)]
pub struct TrigTable {
    measure: Measure,
    grid: Arc<Grid>,
    order: usize,
    p: Vec<PiecewisePolynomial>,
    q: Vec<PiecewisePolynomial>,
    p_exp: Vec<i32>,
    q_exp: Vec<i32>,
    p_one: Vec<Scaled>,
    q_one: Vec<Scaled>,
    max_density: f64,
    tolerance: f64,
}

/// Builds the table truncated after term `order` (so indices up to
/// `2·order + 1`), with degree cap `2·order + 2`.
pub fn build_table(mu: &Measure, order: usize) -> Result<TrigTable> {
    if order < 1 {
        return Err(Error::Config("series order must be at least 1".into()));
    }
    if order > MAX_ORDER {
        return Err(Error::Resource(format!("series order {order} exceeds {MAX_ORDER}")));
    }
    let mut b = Builder::new(mu);
    b.extend_to(order)?;
    Ok(b.finish(DEFAULT_TAIL_TOLERANCE))
}

struct Builder {
    measure: Measure,
    grid: Arc<Grid>,
    p: Vec<PiecewisePolynomial>,
    q: Vec<PiecewisePolynomial>,
    p_exp: Vec<i32>,
    q_exp: Vec<i32>,
}

/// Rescales `f` so that `f(1)` lies in `[1, 2)` and returns the exponent
/// taken out.
fn normalize(f: &mut PiecewisePolynomial) -> i32 {
    let v = f.value_at_one().hi().abs();
    if v == 0.0 || !v.is_finite() {
        return 0;
    }
    let k = v.log2().floor() as i32;
    f.scale_pow2(-k);
    k
}

impl Builder {
    fn new(mu: &Measure) -> Self {
        let grid = Grid::from_measure(mu);
        let one = PiecewisePolynomial::constant(grid.clone(), 1.0, 0);
        Self {
            measure: mu.clone(),
            grid,
            p: vec![one.clone()],
            q: vec![one],
            p_exp: vec![0],
            q_exp: vec![0],
        }
    }

    fn order(&self) -> usize {
        (self.p.len() / 2).saturating_sub(1)
    }

    fn extend_to(&mut self, order: usize) -> Result<()> {
        let cap = 2 * order + 2;
        let last = 2 * order + 1;
        for seq in [&mut self.p, &mut self.q] {
            let tip = seq.pop().expect("nonempty");
            seq.push(tip.with_degree_cap(cap)?);
        }
        while self.p.len() <= last {
            let n = self.p.len();
            let (mut pn, mut qn) = {
                let (pp, qq) = (&self.p[n - 1], &self.q[n - 1]);
                if n % 2 == 1 {
                    (pp.integrate_dmu(&self.measure)?, qq.integrate_dt()?)
                } else {
                    (pp.integrate_dt()?, qq.integrate_dmu(&self.measure)?)
                }
            };
            let (kp, kq) = (normalize(&mut pn), normalize(&mut qn));
            self.p_exp.push(self.p_exp[n - 1] + kp);
            self.q_exp.push(self.q_exp[n - 1] + kq);
            self.p.push(pn);
            self.q.push(qn);
        }
        Ok(())
    }

    fn finish(self, tolerance: f64) -> TrigTable {
        let order = self.order();
        let at_one = |fs: &[PiecewisePolynomial], es: &[i32]| {
            fs.iter().zip(es).map(|(f, &e)| Scaled { m: f.value_at_one(), e }).collect()
        };
        TrigTable {
            max_density: self.measure.max_density(),
            p_one: at_one(&self.p, &self.p_exp),
            q_one: at_one(&self.q, &self.q_exp),
            measure: self.measure,
            grid: self.grid,
            order,
            p: self.p,
            q: self.q,
            p_exp: self.p_exp,
            q_exp: self.q_exp,
            tolerance,
        }
    }
}

fn abs_dd(x: Dd) -> Dd {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

/// `Σ_{k>K} a^{2k}/(2k)!` computed term by term in log space.
fn even_exp_tail(a: f64, from_k: usize) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let la = a.ln();
    let mut k = from_k + 1;
    let mut log_term = 2.0 * k as f64 * la - ln_factorial(2 * k);
    let mut total = 0.0;
    loop {
        if log_term > 700.0 {
            return f64::INFINITY;
        }
        let t = log_term.exp();
        total += t;
        let ratio = a * a / ((2 * k + 1) as f64 * (2 * k + 2) as f64);
        if ratio < 0.5 && t <= total * 1e-20 {
            // geometric remainder
            return total + t * ratio / (1.0 - ratio);
        }
        log_term += ratio.ln();
        k += 1;
        if k > 1_000_000 {
            return f64::INFINITY;
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

impl TrigTable {
    /// Smallest table whose tails (values and first derivatives of all four
    /// functions) stay below `tolerance` for every `|z| <= z_max`.
    pub fn for_range(mu: &Measure, z_max: f64) -> Result<Self> {
        Self::for_range_with_tolerance(mu, z_max, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn for_range_with_tolerance(mu: &Measure, z_max: f64, tolerance: f64) -> Result<Self> {
        if !(z_max.is_finite() && z_max >= 0.0) {
            return Err(Error::Config(format!("invalid z range {z_max}")));
        }
        if !(tolerance > 0.0) {
            return Err(Error::Config(format!("invalid tail tolerance {tolerance}")));
        }
        let mut b = Builder::new(mu);
        let mut lo = 0;
        let mut order = (1.5 * z_max).ceil() as usize + 8;
        let table = loop {
            if order > MAX_ORDER {
                return Err(Error::Resource(format!(
                    "z range {z_max} needs series order above {MAX_ORDER}"
                )));
            }
            b.extend_to(order)?;
            // cheap to finish and re-check; the polynomials are moved back
            let table = b.finish(tolerance);
            if table.covers(z_max) {
                break table;
            }
            lo = order;
            b = table.into_builder();
            order += (order / 2).max(8);
        };
        // smallest covering order in (lo, order]
        let mut hi = order;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if table.truncated_covers(mid, z_max) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(if hi == order { table } else { table.truncated(hi)? })
    }

    fn into_builder(self) -> Builder {
        Builder {
            measure: self.measure,
            grid: self.grid,
            p: self.p,
            q: self.q,
            p_exp: self.p_exp,
            q_exp: self.q_exp,
        }
    }

    /// The same table cut back to `order`.
    fn truncated(self, order: usize) -> Result<Self> {
        let tolerance = self.tolerance;
        let mut b = self.into_builder();
        let len = 2 * order + 2;
        for v in [&mut b.p, &mut b.q] {
            v.truncate(len);
            let tip = v.pop().expect("nonempty");
            v.push(tip.with_degree_cap(len)?);
        }
        b.p_exp.truncate(len);
        b.q_exp.truncate(len);
        Ok(b.finish(tolerance))
    }

    fn truncated_covers(&self, order: usize, z: f64) -> bool {
        TrigFn::ALL.iter().all(|&f| {
            let (t0, t1) = self.tail_bounds_at(order, f, z.abs(), None);
            t0 <= self.tolerance && t1 <= self.tolerance
        })
    }

    /// Rebuilds for a larger range, keeping the tolerance.
    pub fn extended(&self, z_max: f64) -> Result<Self> {
        Self::for_range_with_tolerance(&self.measure, z_max, self.tolerance)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Whether every tail at `|z|` is within the tolerance.
    pub fn covers(&self, z: f64) -> bool {
        TrigFn::ALL.iter().all(|&f| {
            let (t0, t1) = self.tail_bounds(f, z.abs(), None);
            t0 <= self.tolerance && t1 <= self.tolerance
        })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// `p_n` for `n <= 2·order + 1`. Coefficients below the `f64` range
    /// come out as zero.
    pub fn p_fun(&self, n: usize) -> PiecewisePolynomial {
        let mut f = self.p[n].clone();
        f.scale_pow2(self.p_exp[n]);
        f
    }

    pub fn q_fun(&self, n: usize) -> PiecewisePolynomial {
        let mut f = self.q[n].clone();
        f.scale_pow2(self.q_exp[n]);
        f
    }

    pub fn p_one(&self, n: usize) -> f64 {
        self.p_one[n].value().hi()
    }

    pub fn q_one(&self, n: usize) -> f64 {
        self.q_one[n].value().hi()
    }

    /// `p_n(1)` in double-double; zero below the `f64` range.
    pub fn p_one_dd(&self, n: usize) -> Dd {
        self.p_one[n].value()
    }

    pub fn q_one_dd(&self, n: usize) -> Dd {
        self.q_one[n].value()
    }

    /// Number of stored coefficient indices (`2·order + 2`).
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn at_one(&self, family: Family, n: usize) -> Scaled {
        match family {
            Family::P => self.p_one[n],
            Family::Q => self.q_one[n],
        }
    }

    /// Normalized function and its exponent.
    fn function(&self, family: Family, n: usize) -> (&PiecewisePolynomial, i32) {
        match family {
            Family::P => (&self.p[n], self.p_exp[n]),
            Family::Q => (&self.q[n], self.q_exp[n]),
        }
    }

    /// Upper bounds on `C0 = Σ_{k>=1} z^{2k} f_{2k}(1)` and
    /// `C1 = Σ_{k>=1} k z^{2k} f_{2k}(1)` for the chain family.
    fn chain_sums(&self, n: usize, family: Family, z: f64) -> (f64, f64) {
        let z2 = Scaled::new(dd(z) * dd(z), 0);
        let mut pow = Scaled::ONE;
        let mut s0 = dd(0.0);
        let mut s1 = dd(0.0);
        let mut last = dd(0.0);
        for k in 1..=n {
            pow = pow.mul(z2);
            last = pow.mul(self.at_one(family, 2 * k)).value();
            s0 += last;
            s1 += last * k as f64;
        }
        let inflate = 1.0 + 1e-12;
        let (s0, s1, eps) = (s0.hi() * inflate, s1.hi() * inflate, last.hi() * inflate);
        let (mut c0, mut c1) = (f64::INFINITY, f64::INFINITY);
        if eps < 1.0 {
            c0 = s0 / (1.0 - eps);
            c1 = (s1 + eps * n as f64 * c0) / (1.0 - eps);
        }
        let a = z * self.max_density.sqrt();
        if a < 700.0 {
            c0 = c0.min(a.cosh() - 1.0);
            c1 = c1.min(0.5 * a * a.sinh());
        }
        (c0, c1)
    }

    /// Tail bounds for the value and the z-derivative. `head` overrides the
    /// coefficient of the last retained term (used for evaluation at `x`).
    fn tail_bounds(&self, f: TrigFn, z: f64, head: Option<Scaled>) -> (f64, f64) {
        self.tail_bounds_at(self.order, f, z, head)
    }

    /// [`Self::tail_bounds`] for the table truncated after term `n`.
    fn tail_bounds_at(&self, n: usize, f: TrigFn, z: f64, head: Option<Scaled>) -> (f64, f64) {
        let (family, idx) = f.coefficient(n);
        let a = head.unwrap_or_else(|| self.at_one(family, idx));
        if z == 0.0 || a.is_zero() {
            return (0.0, 0.0);
        }
        let (c0, c1) = self.chain_sums(n, f.chain(), z);
        let pw = f.power(n) as f64;
        // in log space: the head can be far below the f64 range
        let ln_lead = a.ln_abs() + (pw - 1.0) * z.ln() + 1e-12;
        let value = (ln_lead + z.ln() + c0.ln()).exp();
        let deriv = (ln_lead + (pw * c0 + 2.0 * c1).ln()).exp();
        (value, deriv)
    }

    /// Tail of the factorial comparison series `Σ_{n>N} power·z^{...} g^n/n!`.
    fn factorial_bound(&self, f: TrigFn, z: f64, derivative: bool) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let g = match f {
            TrigFn::Sinp | TrigFn::Cosq => self.q_one(2),
            TrigFn::Sinq | TrigFn::Cosp => self.p_one(2),
        };
        let lz = z.ln();
        let lg = g.ln();
        let mut total = 0.0;
        let mut n = self.order + 1;
        loop {
            let pw = f.power(n) as f64;
            let mut log_term = n as f64 * lg - ln_factorial(n);
            if derivative {
                log_term += pw.ln() + (pw - 1.0) * lz;
            } else {
                log_term += pw * lz;
            }
            if log_term > 700.0 {
                return f64::INFINITY;
            }
            let t = log_term.exp();
            total += t;
            if (n as f64) > 2.0 * g * z * z + 2.0 && t <= total * 1e-20 {
                return total;
            }
            n += 1;
            if n > 1_000_000 {
                return f64::INFINITY;
            }
        }
    }

    /// Order that the a-priori bound `f_{2k}(1) <= D^k/(2k)!` certifies for `z`.
    fn sufficient_order(&self, f: TrigFn, z: f64, derivative: bool) -> usize {
        let n = self.order;
        let (family, idx) = f.coefficient(n);
        let pw = f.power(n) as i32;
        let ln_head = self.at_one(family, idx).ln_abs() + (if derivative { pw - 1 } else { pw }) as f64 * z.ln();
        let d = z * self.max_density.sqrt();
        let ln_tol = self.tolerance.ln();
        for extra in 1..=MAX_ORDER {
            let factor = if derivative { (pw as f64 + 2.0 * extra as f64 + 2.0) * 2.0 } else { 1.0 };
            if ln_head + factor.ln() + even_exp_tail(d, extra).ln() <= ln_tol {
                return n + extra;
            }
        }
        MAX_ORDER + 1
    }

    fn check(&self, f: TrigFn, z: f64, tail: f64, derivative: bool) -> Result<()> {
        if tail <= self.tolerance {
            Ok(())
        } else {
            Err(Error::OrderTooLow {
                order: self.order,
                z,
                tolerance: self.tolerance,
                tail,
                needed: self.sufficient_order(f, z.abs(), derivative),
            })
        }
    }

    /// Partial sum with coefficients `coeff(n)`, or its z-derivative.
    fn partial_sum(&self, f: TrigFn, z: f64, coeff: impl Fn(usize) -> Scaled, derivative: bool) -> (Dd, f64) {
        let zz = dd(z);
        let z2 = Scaled::new(zz * zz, 0);
        let mut sum = dd(0.0);
        let mut abs_err = 0.0;
        // z^{power(n)} or, for the derivative, power(n)·z^{power(n)-1}
        let mut zpow = match (f.power(0), derivative) {
            (0, _) => Scaled::ONE,
            (_, false) => Scaled::new(zz, 0),
            (_, true) => Scaled::ONE,
        };
        for n in 0..=self.order {
            if n > 0 {
                zpow = zpow.mul(z2);
            }
            let pw = f.power(n);
            let mut term = zpow.mul(coeff(n)).value();
            if derivative {
                if pw == 0 {
                    continue;
                }
                if f.power(0) == 0 {
                    // d/dz z^{2n} = 2n z^{2n-1}
                    term = term / zz * pw as f64;
                } else {
                    term *= pw as f64;
                }
            }
            if n % 2 == 1 {
                term = -term;
            }
            abs_err += abs_dd(term).hi() * ((pw + 4) * (pw + 4)) as f64;
            sum += term;
        }
        (sum, abs_err * DD_UNIT)
    }

    fn evaluate(&self, f: TrigFn, z: f64, x: Option<f64>, derivative: bool) -> Result<Evaluation> {
        if !z.is_finite() {
            return Err(Error::Config(format!("z = {z} is not finite")));
        }
        if derivative && z == 0.0 && f.power(0) == 0 {
            // cosp'(0) = cosq'(0) = 0; avoids dividing by z below
            let certificate = TruncationCertificate {
                z,
                order: self.order,
                tail_bound: 0.0,
                rounding_bound: 0.0,
                factorial_bound: 0.0,
            };
            return Ok(Evaluation { value: 0.0, certificate });
        }
        let (sum, rounding) = match x {
            None => self.partial_sum(f, z, |n| {
                let (fam, idx) = f.coefficient(n);
                self.at_one(fam, idx)
            }, derivative),
            Some(x) => {
                Error::check_unit("x", x)?;
                let vals: Vec<Scaled> = (0..=self.order)
                    .map(|n| {
                        let (fam, idx) = f.coefficient(n);
                        let (g, e) = self.function(fam, idx);
                        Ok(Scaled::new(g.eval_dd(x)?, e))
                    })
                    .collect::<Result<_>>()?;
                self.partial_sum(f, z, |n| vals[n], derivative)
            }
        };
        let head = match x {
            None => None,
            Some(x) => {
                let (fam, idx) = f.coefficient(self.order);
                let (g, e) = self.function(fam, idx);
                Some(Scaled::new(g.eval_dd(x)?, e))
            }
        };
        let (t0, t1) = self.tail_bounds(f, z.abs(), head);
        let tail = if derivative { t1 } else { t0 };
        self.check(f, z, tail, derivative)?;
        Ok(Evaluation {
            value: sum.hi() + sum.lo(),
            certificate: TruncationCertificate {
                z,
                order: self.order,
                tail_bound: tail,
                rounding_bound: rounding,
                factorial_bound: self.factorial_bound(f, z.abs(), derivative),
            },
        })
    }

    /// Value of `f` at `z` (the `x = 1` series).
    pub fn eval(&self, f: TrigFn, z: f64) -> Result<Evaluation> {
        self.evaluate(f, z, None, false)
    }

    /// Termwise z-derivative of `f` at `z`.
    pub fn eval_prime(&self, f: TrigFn, z: f64) -> Result<Evaluation> {
        self.evaluate(f, z, None, true)
    }

    /// The x-dependent series (`sp_z`, `sq_z`, `cp_z`, `cq_z`) at `x`.
    pub fn eval_at(&self, f: TrigFn, z: f64, x: f64) -> Result<Evaluation> {
        self.evaluate(f, z, Some(x), false)
    }

    pub fn sinp(&self, z: f64) -> Result<Evaluation> {
        self.eval(TrigFn::Sinp, z)
    }

    pub fn sinq(&self, z: f64) -> Result<Evaluation> {
        self.eval(TrigFn::Sinq, z)
    }

    pub fn cosp(&self, z: f64) -> Result<Evaluation> {
        self.eval(TrigFn::Cosp, z)
    }

    pub fn cosq(&self, z: f64) -> Result<Evaluation> {
        self.eval(TrigFn::Cosq, z)
    }

    pub fn sinp_prime(&self, z: f64) -> Result<Evaluation> {
        self.eval_prime(TrigFn::Sinp, z)
    }

    pub fn sinq_prime(&self, z: f64) -> Result<Evaluation> {
        self.eval_prime(TrigFn::Sinq, z)
    }

    pub fn cosp_prime(&self, z: f64) -> Result<Evaluation> {
        self.eval_prime(TrigFn::Cosp, z)
    }

    pub fn cosq_prime(&self, z: f64) -> Result<Evaluation> {
        self.eval_prime(TrigFn::Cosq, z)
    }

    /// `cp_z(x) = Σ (-1)^n z^{2n} p_{2n}(x)`, the Neumann eigenfunction shape.
    pub fn cp_eval(&self, z: f64, x: f64) -> Result<Evaluation> {
        self.eval_at(TrigFn::Cosp, z, x)
    }

    /// `sq_z(x) = Σ (-1)^n z^{2n+1} q_{2n+1}(x)`, the Dirichlet eigenfunction
    /// shape.
    pub fn sq_eval(&self, z: f64, x: f64) -> Result<Evaluation> {
        self.eval_at(TrigFn::Sinq, z, x)
    }

    /// The x-dependent series of `f` at fixed `z` collapsed into one piecewise
    /// polynomial, together with the tail bound factor: the tail at `x` is at
    /// most `factor · head(x)`, where `head` is the last retained coefficient
    /// function.
    pub(crate) fn collapse(&self, f: TrigFn, z: f64) -> Result<CollapsedSeries> {
        let zz = dd(z);
        let z2 = Scaled::new(zz * zz, 0);
        let mut zpow = if f.power(0) == 0 { Scaled::ONE } else { Scaled::new(zz, 0) };
        let mut fs = Vec::with_capacity(self.order + 1);
        let mut weights = Vec::with_capacity(self.order + 1);
        for n in 0..=self.order {
            if n > 0 {
                zpow = zpow.mul(z2);
            }
            let (fam, idx) = f.coefficient(n);
            let (g, e) = self.function(fam, idx);
            let w = zpow.mul(Scaled { m: dd(1.0), e }).value();
            fs.push(g);
            weights.push(if n % 2 == 1 { -w } else { w });
        }
        let poly = PiecewisePolynomial::weighted_sum(&fs, &weights);
        let (fam, idx) = f.coefficient(self.order);
        let (head, e) = self.function(fam, idx);
        // bound per unit of the normalized head function
        let (t0, _) = self.tail_bounds(f, z.abs(), Some(Scaled { m: dd(1.0), e }));
        // the worst case over x is attained with the head at x = 1
        let worst = t0 * head.value_at_one().hi();
        self.check(f, z, worst, false)?;
        let magnitude = fs
            .iter()
            .zip(&weights)
            .map(|(g, w)| abs_dd(*w).hi() * g.value_at_one().hi())
            .sum::<f64>();
        Ok(CollapsedSeries {
            poly,
            head: head.clone(),
            tail_factor: t0,
            rounding: magnitude * DD_UNIT * ((2 * self.order + 6) * (2 * self.order + 6)) as f64,
            order: self.order,
            z,
        })
    }

    /// `n, p_n(1), q_n(1)` rows for every stored index.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "p_n(1)", "q_n(1)"])?;
        for n in 0..self.len() {
            w.write_record([n.to_string(), fmt_f64(self.p_one(n)), fmt_f64(self.q_one(n))])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A trigonometric series at fixed `z` as a single piecewise polynomial in `x`.
#[derive(Debug, Clone)]
pub(crate) struct CollapsedSeries {
    poly: PiecewisePolynomial,
    head: PiecewisePolynomial,
    tail_factor: f64,
    rounding: f64,
    order: usize,
    z: f64,
}

impl CollapsedSeries {
    pub(crate) fn eval(&self, x: f64) -> Result<Evaluation> {
        let v = self.poly.eval_dd(x)?;
        let head = self.head.eval(x)?;
        Ok(Evaluation {
            value: v.hi() + v.lo(),
            certificate: TruncationCertificate {
                z: self.z,
                order: self.order,
                tail_bound: self.tail_factor * head.abs(),
                rounding_bound: self.rounding,
                factorial_bound: f64::NAN,
            },
        })
    }

    pub(crate) fn poly(&self) -> &PiecewisePolynomial {
        &self.poly
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<TrigTable>();
    is::<TwoFloat>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cantor_approximant, CantorLevel, WeightVector};
    use std::f64::consts::PI;

    fn mu1() -> Measure {
        cantor_approximant(CantorLevel::new(WeightVector::uniform(), 1)).unwrap()
    }

    #[test]
    fn lebesgue_coefficients_are_inverse_factorials() {
        let t = build_table(&Measure::lebesgue(), 10).unwrap();
        let mut fact = 1.0f64;
        for n in 0..t.len() {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((t.p_one(n) * fact - 1.0).abs() < 1e-15, "p_{n}");
            assert!((t.q_one(n) * fact - 1.0).abs() < 1e-15, "q_{n}");
        }
    }

    #[test]
    fn first_coefficient_is_total_mass() {
        for m in [Measure::lebesgue(), mu1()] {
            let t = build_table(&m, 2).unwrap();
            assert!((t.p_one(1) - 1.0).abs() < 1e-15);
            assert_eq!(t.p_one(0), 1.0);
            assert_eq!(t.q_one(0), 1.0);
        }
    }

    #[test]
    fn order_zero_is_rejected() {
        assert!(matches!(build_table(&Measure::lebesgue(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn values_at_zero() {
        let t = TrigTable::for_range(&mu1(), 4.0).unwrap();
        assert_eq!(t.sinp(0.0).unwrap().value, 0.0);
        assert_eq!(t.sinq(0.0).unwrap().value, 0.0);
        assert_eq!(t.cosp(0.0).unwrap().value, 1.0);
        assert_eq!(t.cosq(0.0).unwrap().value, 1.0);
        assert!((t.sinp_prime(0.0).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(t.cosp_prime(0.0).unwrap().value, 0.0);
    }

    #[test]
    fn lebesgue_reduces_to_sin_and_cos() {
        let t = TrigTable::for_range(&Measure::lebesgue(), 12.0).unwrap();
        let v = t.sinp(PI).unwrap();
        assert!(v.value.abs() < 1e-12 + v.certificate.total());
        for k in 0..=120 {
            let z = k as f64 * 0.1;
            for (f, exact) in [
                (TrigFn::Sinp, z.sin()),
                (TrigFn::Sinq, z.sin()),
                (TrigFn::Cosp, z.cos()),
                (TrigFn::Cosq, z.cos()),
            ] {
                let e = t.eval(f, z).unwrap();
                assert!((e.value - exact).abs() <= 1e-10 + e.certificate.total(), "{f:?} at {z}");
            }
            let d = t.sinp_prime(z).unwrap();
            assert!((d.value - z.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn coefficients_below_f64_range_stay_usable() {
        let t = TrigTable::for_range(&Measure::lebesgue(), 60.0).unwrap();
        // 1/n! underflows for n > 170
        assert!(t.len() > 180);
        for k in 0..=60 {
            let z = k as f64;
            let e = t.sinp(z).unwrap();
            assert!(e.value.is_finite() && e.certificate.total().is_finite());
            assert!((e.value - z.sin()).abs() <= 1e-11 + e.certificate.total(), "z = {z}");
            let c = t.cp_eval(z, 0.5).unwrap();
            assert!((c.value - (0.5 * z).cos()).abs() <= 1e-11 + c.certificate.total());
        }
    }

    #[test]
    fn range_sizing_is_monotone() {
        let mut last = 0;
        for z in [5.0, 10.0, 20.0, 30.0, 41.5, 50.0, 60.0] {
            let order = TrigTable::for_range(&Measure::lebesgue(), z).unwrap().order();
            assert!(order >= last, "{z}: {order} < {last}");
            last = order;
        }
    }

    #[test]
    fn low_order_reports_sufficient_order() {
        let t = build_table(&Measure::lebesgue(), 3).unwrap();
        match t.sinp(10.0) {
            Err(Error::OrderTooLow { order, needed, .. }) => {
                assert_eq!(order, 3);
                assert!(needed > 3);
                let bigger = build_table(&Measure::lebesgue(), needed).unwrap();
                assert!(bigger.sinp(10.0).is_ok());
            }
            other => panic!("expected OrderTooLow, got {other:?}"),
        }
    }

    #[test]
    fn x_series_endpoints() {
        let t = TrigTable::for_range(&mu1(), 6.0).unwrap();
        for z in [0.5, 2.0, 5.5] {
            assert_eq!(t.cp_eval(z, 0.0).unwrap().value, 1.0);
            assert_eq!(t.sq_eval(z, 0.0).unwrap().value, 0.0);
            let at_one = t.eval_at(TrigFn::Sinp, z, 1.0).unwrap().value;
            assert!((at_one - t.sinp(z).unwrap().value).abs() < 1e-13);
        }
    }

    #[test]
    fn certificates_dominate_factorial_free_tail_on_lebesgue() {
        // the exact tail of sin(z) beyond the retained terms
        let t = build_table(&Measure::lebesgue(), 12).unwrap().with_tolerance(1e-6);
        let z = 4.0;
        let e = t.sinp(z).unwrap();
        assert!((e.value - z.sin()).abs() <= e.certificate.total());
        assert!(e.certificate.factorial_bound >= e.certificate.tail_bound);
    }

    #[test]
    fn coefficient_csv() {
        let t = build_table(&Measure::lebesgue(), 2).unwrap();
        let mut buf = Vec::new();
        t.write_coefficients_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,p_n(1),q_n(1)");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[3].starts_with("2,5.0000000000000000e-1,"));
    }
}
