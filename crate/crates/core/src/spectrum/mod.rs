//! Neumann and Dirichlet spectra as zeros of `sinp` and `sinq`.
//!
//! The Neumann eigenvalues are `λ = z²` for the zeros `z > 0` of `sinp`,
//! preceded by `λ_0 = 0`; the Dirichlet eigenvalues come from the positive
//! zeros of `sinq`. All zeros are simple, so each one shows up as a sign
//! change during an upward scan in `z`.

mod fem;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::measures::Measure;
use crate::series::{CollapsedSeries, Evaluation, TrigFn, TrigTable};

pub use fem::{fem_oracle, FemMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

impl Boundary {
    pub const BOTH: [Boundary; 2] = [Boundary::Neumann, Boundary::Dirichlet];

    /// Function whose zeros are the eigenfrequencies.
    pub fn sine(self) -> TrigFn {
        match self {
            Boundary::Neumann => TrigFn::Sinp,
            Boundary::Dirichlet => TrigFn::Sinq,
        }
    }

    /// Function whose x-series is the eigenfunction.
    pub fn shape(self) -> TrigFn {
        match self {
            Boundary::Neumann => TrigFn::Cosp,
            Boundary::Dirichlet => TrigFn::Sinq,
        }
    }

    pub fn first_index(self) -> usize {
        match self {
            Boundary::Neumann => 0,
            Boundary::Dirichlet => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Neumann => "neumann",
            Boundary::Dirichlet => "dirichlet",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neumann" | "n" => Ok(Boundary::Neumann),
            "dirichlet" | "d" => Ok(Boundary::Dirichlet),
            _ => Err(Error::Config(format!("unknown boundary type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueRecord {
    pub index: usize,
    pub boundary: Boundary,
    /// Zero of the sine function.
    pub z: f64,
    pub lambda: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// `|sine(z)|` at the returned root.
    pub residual: f64,
    /// Bound on `|z - z_true|`: bracket width plus the certificate divided by
    /// the slope.
    pub error_bound: f64,
}

impl EigenvalueRecord {
    fn trivial_neumann() -> Self {
        Self {
            index: 0,
            boundary: Boundary::Neumann,
            z: 0.0,
            lambda: 0.0,
            bracket_lo: 0.0,
            bracket_hi: 0.0,
            residual: 0.0,
            error_bound: 0.0,
        }
    }
}

pub const RECORD_CSV_HEADER: [&str; 8] = [
    "boundary",
    "m",
    "z",
    "lambda",
    "bracket_lo",
    "bracket_hi",
    "residual",
    "error_bound",
];

/// Writes records in the column order of [`RECORD_CSV_HEADER`].
pub fn write_records_csv<W: Write>(records: &[EigenvalueRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.boundary.as_str().to_string(),
            r.index.to_string(),
            fmt_f64(r.z),
            fmt_f64(r.lambda),
            fmt_f64(r.bracket_lo),
            fmt_f64(r.bracket_hi),
            fmt_f64(r.residual),
            fmt_f64(r.error_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RootOptions {
    /// Absolute tolerance on `z`.
    pub tol: f64,
    /// Largest `z` the scan may reach.
    pub scan_ceiling: f64,
    /// Check each eigenfunction's zero count and rescan with a finer step on
    /// mismatch.
    pub verify_zero_counts: bool,
    pub max_rescans: usize,
    pub zero_count_resolution: usize,
    /// Extend the table when the scan outruns its order; otherwise report
    /// the order error.
    pub allow_growth: bool,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            scan_ceiling: 1e3,
            verify_zero_counts: true,
            max_rescans: 4,
            zero_count_resolution: 16,
            allow_growth: true,
        }
    }
}

impl RootOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Eigenvalues of one boundary type together with the table used.
#[derive(Debug, Clone)]
pub struct Spectrum {
    table: Arc<TrigTable>,
    boundary: Boundary,
    records: Vec<EigenvalueRecord>,
}

impl Spectrum {
    pub fn table(&self) -> &Arc<TrigTable> {
        &self.table
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn records(&self) -> &[EigenvalueRecord] {
        &self.records
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }

    /// Record with eigenvalue index `m`.
    pub fn record(&self, m: usize) -> Result<&EigenvalueRecord> {
        self.records
            .iter()
            .find(|r| r.index == m)
            .ok_or_else(|| Error::Config(format!("no {} eigenvalue with index {m}", self.boundary)))
    }

    pub fn eigenfunction(&self, m: usize) -> Result<Eigenfunction> {
        Eigenfunction::new(*self.record(m)?, self.table.clone())
    }
}

/// Solves on `mu` with an automatically sized table.
pub fn solve(mu: &Measure, boundary: Boundary, count: usize, tol: f64) -> Result<Spectrum> {
    let guess = 1.2 * std::f64::consts::PI * (count + 1) as f64;
    let table = Arc::new(TrigTable::for_range(mu, guess)?);
    find_eigenvalues_with(table, boundary, count, &RootOptions::with_tol(tol))
}

/// First `count` eigenvalues (Neumann: indices `0..count`, Dirichlet:
/// `1..=count`).
pub fn find_eigenvalues(table: Arc<TrigTable>, boundary: Boundary, count: usize, tol: f64) -> Result<Spectrum> {
    find_eigenvalues_with(table, boundary, count, &RootOptions::with_tol(tol))
}

pub fn find_eigenvalues_with(
    table: Arc<TrigTable>,
    boundary: Boundary,
    count: usize,
    opts: &RootOptions,
) -> Result<Spectrum> {
    if count == 0 {
        return Err(Error::Config("eigenvalue count must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("root tolerance {} must be positive", opts.tol)));
    }
    let positive = match boundary {
        Boundary::Neumann => count - 1,
        Boundary::Dirichlet => count,
    };
    let mut scale = 1.0;
    let mut attempt = 0;
    loop {
        let mut scanner = Scanner {
            table: table.clone(),
            f: boundary.sine(),
            opts,
            step_scale: scale,
        };
        let roots = scanner.scan(positive)?;
        let mut records = Vec::with_capacity(count);
        if boundary == Boundary::Neumann {
            records.push(EigenvalueRecord::trivial_neumann());
        }
        for (k, root) in roots.into_iter().enumerate() {
            records.push(EigenvalueRecord {
                index: k + 1,
                boundary,
                z: root.z,
                lambda: root.z * root.z,
                bracket_lo: root.lo,
                bracket_hi: root.hi,
                residual: root.residual,
                error_bound: root.error_bound,
            });
        }
        let spectrum = Spectrum {
            table: scanner.table,
            boundary,
            records,
        };
        if !opts.verify_zero_counts {
            return Ok(spectrum);
        }
        match zero_count_mismatch(&spectrum, opts.zero_count_resolution)? {
            None => return Ok(spectrum),
            Some(msg) if attempt >= opts.max_rescans => {
                return Err(Error::Inconsistent(format!(
                    "{msg} after {attempt} rescans; roots may be missing"
                )))
            }
            Some(_) => {
                attempt += 1;
                scale *= 0.5;
            }
        }
    }
}

/// Sturm oscillation check: eigenfunction `m` must have the zero count
/// belonging to index `m`.
fn zero_count_mismatch(spectrum: &Spectrum, resolution: usize) -> Result<Option<String>> {
    for r in spectrum.records() {
        let ef = Eigenfunction::new(*r, spectrum.table.clone())?;
        let zeros = ef.count_zeros(resolution)?;
        let expected = expected_zero_count(r.boundary, r.index);
        if zeros != expected {
            return Ok(Some(format!(
                "{} eigenfunction {} has {zeros} zeros, expected {expected}",
                r.boundary, r.index
            )));
        }
    }
    Ok(None)
}

/// Zeros of eigenfunction `m`: `m` sign changes for Neumann, `m + 1` zeros
/// counting both endpoints for Dirichlet.
pub fn expected_zero_count(boundary: Boundary, m: usize) -> usize {
    match boundary {
        Boundary::Neumann => m,
        Boundary::Dirichlet => m + 1,
    }
}

struct Root {
    z: f64,
    lo: f64,
    hi: f64,
    residual: f64,
    error_bound: f64,
}

struct Scanner<'a> {
    table: Arc<TrigTable>,
    f: TrigFn,
    opts: &'a RootOptions,
    step_scale: f64,
}

struct Sample {
    z: f64,
    value: f64,
    noise: f64,
}

impl Sample {
    fn sign(&self) -> i8 {
        if self.value > self.noise {
            1
        } else if self.value < -self.noise {
            -1
        } else {
            0
        }
    }
}

impl Scanner<'_> {
    fn grow(&mut self, z: f64) -> Result<()> {
        let target = (1.5 * z).max(z + 4.0);
        self.table = Arc::new(self.table.extended(target)?);
        Ok(())
    }

    fn eval(&mut self, z: f64) -> Result<Sample> {
        loop {
            match self.table.eval(self.f, z) {
                Ok(e) => {
                    return Ok(Sample {
                        z,
                        value: e.value,
                        noise: e.certificate.total(),
                    })
                }
                Err(e @ Error::OrderTooLow { .. }) if !self.opts.allow_growth => return Err(e),
                Err(Error::OrderTooLow { .. }) => self.grow(z)?,
                Err(e) => return Err(e),
            }
        }
    }

    fn eval_prime(&mut self, z: f64) -> Result<Evaluation> {
        loop {
            match self.table.eval_prime(self.f, z) {
                Ok(e) => return Ok(e),
                Err(e @ Error::OrderTooLow { .. }) if !self.opts.allow_growth => return Err(e),
                Err(Error::OrderTooLow { .. }) => self.grow(z)?,
                Err(e) => return Err(e),
            }
        }
    }

    /// Base step `π/4`, shrunk once `q_2(1)·z` exceeds one.
    fn step(&self, z: f64) -> f64 {
        let q2 = self.table.q_one(2);
        self.step_scale * std::f64::consts::FRAC_PI_4 / (q2 * z).max(1.0)
    }

    fn scan(&mut self, count: usize) -> Result<Vec<Root>> {
        let mut roots = Vec::with_capacity(count);
        if count == 0 {
            return Ok(roots);
        }
        let min_step = 1e-3 * self.step(0.0);
        // sine(z) = z + O(z³) > 0 just above zero
        let mut prev = Sample {
            z: 0.0,
            value: 0.0,
            noise: 0.0,
        };
        let mut prev_sign: i8 = 1;
        let mut h = self.step(0.0);
        while roots.len() < count {
            let z = prev.z + h;
            if z > self.opts.scan_ceiling {
                return Err(Error::ScanCeiling {
                    found: roots.len(),
                    requested: count,
                    ceiling: self.opts.scan_ceiling,
                });
            }
            let s = self.eval(z)?;
            match s.sign() {
                0 => {
                    if h * 0.5 < min_step {
                        return Err(Error::Precision(format!(
                            "|{:?}({z})| = {:e} is below its certificate {:e} without a sign \
                             change; raise the series tolerance",
                            self.f, s.value, s.noise
                        )));
                    }
                    h *= 0.5;
                    continue;
                }
                sg if sg != prev_sign => {
                    roots.push(self.refine(&prev, prev_sign, &s)?);
                }
                _ => {
                    if s.value.abs() < 10.0 * s.noise && h * 0.5 >= min_step {
                        h *= 0.5;
                        continue;
                    }
                }
            }
            prev_sign = s.sign();
            prev = s;
            h = self.step(prev.z);
        }
        Ok(roots)
    }

    /// Bisection down to a bracket of 1e-3, then Illinois-type regula falsi
    /// with a bisection step whenever an iteration fails to halve the bracket.
    fn refine(&mut self, lo: &Sample, lo_sign: i8, hi: &Sample) -> Result<Root> {
        let tol = self.opts.tol;
        let (mut a, mut fa) = (lo.z, if lo.z == 0.0 { f64::MIN_POSITIVE } else { lo.value });
        let (mut b, mut fb) = (hi.z, hi.value);
        // unscaled endpoint values for the final interpolation
        let (mut ya, mut yb) = (fa, fb);
        debug_assert!(lo_sign != 0);
        let mut best: Option<f64> = None;
        let mut last_width = b - a;
        let mut side = 0i8;
        let mut iterations = 0;
        while b - a > tol {
            iterations += 1;
            if iterations > 400 {
                break;
            }
            let width = b - a;
            let use_secant = width < 1e-3 && width < 0.5 * last_width.max(width * 2.0 - f64::EPSILON);
            let mut c = if use_secant {
                a - fa * (b - a) / (fb - fa)
            } else {
                0.5 * (a + b)
            };
            if !(c > a && c < b) {
                c = 0.5 * (a + b);
            }
            last_width = width;
            let s = self.eval(c)?;
            if s.sign() == 0 {
                best = Some(c);
                break;
            }
            if (s.value > 0.0) == (fa > 0.0) {
                a = c;
                fa = s.value;
                ya = s.value;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = s.value;
                yb = s.value;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
            // fall back to plain bisection when the bracket shrinks slowly
            if b - a > 0.5 * width {
                let m = 0.5 * (a + b);
                let sm = self.eval(m)?;
                if sm.sign() == 0 {
                    best = Some(m);
                    break;
                }
                if (sm.value > 0.0) == (fa > 0.0) {
                    a = m;
                    fa = sm.value;
                    ya = sm.value;
                } else {
                    b = m;
                    fb = sm.value;
                    yb = sm.value;
                }
                side = 0;
            }
        }
        let z = best.unwrap_or_else(|| {
            let c = a - ya * (b - a) / (yb - ya);
            if c >= a && c <= b {
                c
            } else {
                0.5 * (a + b)
            }
        });
        let at = self.eval(z)?;
        let slope = self.eval_prime(z)?;
        let tail = slope.certificate.total().max(at.noise);
        if slope.value.abs() < 10.0 * tail {
            return Err(Error::Precision(format!(
                "root at z = {z} is not certified simple: |{:?}'| = {:e}, certificate {:e}",
                self.f,
                slope.value.abs(),
                tail
            )));
        }
        Ok(Root {
            z,
            lo: a,
            hi: b,
            residual: at.value.abs(),
            error_bound: (b - a) + at.noise / slope.value.abs(),
        })
    }
}

/// Eigenfunction `cp_{√λ}` (Neumann) or `sq_{√λ}` (Dirichlet), normalised by
/// `f(0) = 1` resp. `f'(0) = z`.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    record: EigenvalueRecord,
    table: Arc<TrigTable>,
    series: CollapsedSeries,
}

impl Eigenfunction {
    pub fn new(record: EigenvalueRecord, table: Arc<TrigTable>) -> Result<Self> {
        let series = table.collapse(record.boundary.shape(), record.z)?;
        Ok(Self { record, table, series })
    }

    pub fn record(&self) -> &EigenvalueRecord {
        &self.record
    }

    pub fn table(&self) -> &Arc<TrigTable> {
        &self.table
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.series.eval(x)?.value)
    }

    pub fn eval_certified(&self, x: f64) -> Result<Evaluation> {
        self.series.eval(x)
    }

    /// `‖f‖_{L²(μ)} = sqrt(cosp(z)·sinp'(z)/2)`; Neumann with `m >= 1` only.
    pub fn l2_norm(&self) -> Result<f64> {
        if self.record.boundary != Boundary::Neumann || self.record.index == 0 {
            return Err(Error::Config(
                "the cosp·sinp' norm identity applies to Neumann eigenfunctions with m >= 1".into(),
            ));
        }
        let z = self.record.z;
        let c = self.table.cosp(z)?;
        let d = self.table.sinp_prime(z)?;
        let product = 0.5 * c.value * d.value;
        let slack = c.certificate.total() * d.value.abs() + d.certificate.total() * c.value.abs();
        if product <= slack {
            return Err(Error::Inconsistent(format!(
                "cosp·sinp'/2 = {product:e} is not positive at z = {z}; the root is inaccurate"
            )));
        }
        Ok(product.sqrt())
    }

    /// `f / ‖f‖_{L²(μ)}` at `x`, using [`Self::l2_norm`].
    pub fn eval_l2_normalized(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)? / self.l2_norm()?)
    }

    /// Sign of the eigenfunction at `x`, or at a point within `step / 4` of
    /// it if the value at `x` is not certified.
    fn certified_sign(&self, x: f64, step: f64) -> Result<i8> {
        let mut last = None;
        for t in [0.0, 0.125, -0.125, 0.25, -0.25] {
            let e = self.series.eval((x + t * step).clamp(0.0, 1.0))?;
            let noise = e.certificate.total();
            if e.value.abs() > noise {
                return Ok(if e.value > 0.0 { 1 } else { -1 });
            }
            last = Some((e.value, noise));
        }
        let (v, noise) = last.expect("at least one sample");
        Err(Error::Precision(format!(
            "eigenfunction value {v:e} near x = {x} is within its certificate {noise:e}"
        )))
    }

    /// Sign changes on `(0, 1)` for Neumann; for Dirichlet, sign changes on
    /// `(0, 1)` plus the two boundary zeros. Each grid piece is sampled at
    /// `resolution` points at least, more where the local frequency is high.
    pub fn count_zeros(&self, resolution: usize) -> Result<usize> {
        let resolution = resolution.max(2);
        let grid = self.series.poly().grid().clone();
        let mu = self.table.measure();
        let z = self.record.z.abs();
        let dirichlet = self.record.boundary == Boundary::Dirichlet;
        // samples sit off the rational points where symmetric eigenfunctions
        // have exact nodes; a sample inside its certificate is nudged
        const OFFSET: f64 = 0.381_966_011_250_105;
        let mut changes = 0;
        let mut prev: i8 = 0;
        for w in grid.knots().windows(2) {
            let d = mu.density_at(0.5 * (w[0] + w[1]));
            let len = w[1] - w[0];
            let k = resolution.max((4.0 * z * d.sqrt() * len / std::f64::consts::PI).ceil() as usize + 2);
            let step = len / k as f64;
            for j in 0..k {
                let x = w[0] + step * (j as f64 + OFFSET);
                let s = self.certified_sign(x, step)?;
                if prev != 0 && s != prev {
                    changes += 1;
                }
                prev = s;
            }
        }
        if !dirichlet {
            let s = self.certified_sign(1.0, 0.0)?;
            if s != prev {
                changes += 1;
            }
        }
        Ok(if dirichlet { changes + 2 } else { changes })
    }
}
