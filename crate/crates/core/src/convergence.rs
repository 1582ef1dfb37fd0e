//! Convergence of eigenvalues and eigenfunctions along the Cantor
//! approximants, measured through differences between consecutive levels,
//! and an audit of the proven inequalities between tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::measures::{cantor_approximant, cdf_sup_distance, CantorLevel, Measure, WeightVector};
use crate::series::{CollapsedSeries, TrigFn, TrigTable};
use crate::spectrum::{solve, Boundary, Eigenfunction, Spectrum};

/// Least-squares slope of `ln(gap)` against the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RateFit {
    Fitted { slope: f64, intercept: f64, points: usize },
    /// Fewer than two gaps rise above their noise floor.
    ConvergedBelowTolerance,
}

impl RateFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            RateFit::Fitted { slope, .. } => Some(*slope),
            RateFit::ConvergedBelowTolerance => None,
        }
    }
}

/// Fits `ln(gap_i) ≈ a + slope·n_i` using only gaps above `floor_i`.
pub fn fit_log_slope(ns: &[f64], gaps: &[f64], floors: &[f64]) -> RateFit {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(gaps)
        .zip(floors)
        .filter(|((_, g), f)| **g > **f && g.is_finite())
        .map(|((n, g), _)| (*n, g.ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit::ConvergedBelowTolerance;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return RateFit::ConvergedBelowTolerance;
    }
    let slope = sxy / sxx;
    RateFit::Fitted {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    }
}

fn check_levels(levels: &[u32]) -> Result<()> {
    if levels.len() < 3 {
        return Err(Error::Config(format!(
            "a rate fit needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("levels must be strictly ascending".into()));
    }
    Ok(())
}

fn approximants(w: WeightVector, levels: &[u32]) -> Result<Vec<Measure>> {
    levels
        .iter()
        .map(|&n| cantor_approximant(CantorLevel::new(w, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub weights: WeightVector,
    pub boundary: Boundary,
    pub indices: Vec<usize>,
    pub levels: Vec<u32>,
    /// `lambdas[i][j]`: eigenvalue `indices[i]` at level `levels[j]`.
    pub lambdas: Vec<Vec<f64>>,
    /// `w₂ⁿ/w₁` per level.
    pub cdf_dist_bounds: Vec<f64>,
    /// `successive_gaps[i][j] = |λ(levels[j+1]) - λ(levels[j])|`.
    pub successive_gaps: Vec<Vec<f64>>,
    /// Gaps at or below these values are not resolved by the solver.
    pub gap_floors: Vec<Vec<f64>>,
    pub fitted_rate_per_m: Vec<RateFit>,
    /// The same fit with the deepest gap dropped.
    pub fit_without_deepest: Vec<RateFit>,
    /// `ln w₂`.
    pub reference_slope: f64,
}

impl RateReport {
    /// One row per `(m, level)`: `m, level, lambda, gap_to_next, cdf_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["boundary", "m", "level", "lambda", "gap_to_next", "cdf_bound"])?;
        for (i, &m) in self.indices.iter().enumerate() {
            for (j, &n) in self.levels.iter().enumerate() {
                let gap = self.successive_gaps[i].get(j).map(|&g| fmt_f64(g)).unwrap_or_default();
                w.write_record([
                    self.boundary.as_str().to_string(),
                    m.to_string(),
                    n.to_string(),
                    fmt_f64(self.lambdas[i][j]),
                    gap,
                    fmt_f64(self.cdf_dist_bounds[j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text table of fitted slopes against `ln w₂`.
    pub fn slope_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>4} {:>12} {:>12} {:>12}\n",
            "boundary", "m", "slope", "ln w2", "difference"
        );
        for (m, fit) in self.indices.iter().zip(&self.fitted_rate_per_m) {
            match fit.slope() {
                Some(k) => s.push_str(&format!(
                    "{:<10} {:>4} {:>12.6} {:>12.6} {:>12.6}\n",
                    self.boundary.as_str(),
                    m,
                    k,
                    self.reference_slope,
                    k - self.reference_slope
                )),
                None => s.push_str(&format!(
                    "{:<10} {:>4} converged below tolerance\n",
                    self.boundary.as_str(),
                    m
                )),
            }
        }
        s
    }
}

fn solve_levels(
    measures: &[Measure],
    boundary: Boundary,
    count: usize,
    tol: f64,
) -> Result<Vec<Spectrum>> {
    measures
        .par_iter()
        .map(|mu| solve(mu, boundary, count, tol))
        .collect()
}

/// Eigenvalues `first_index..=m_max` on each level and the decay of their
/// consecutive differences.
pub fn eigenvalue_rate_experiment(
    w: WeightVector,
    levels: &[u32],
    boundary: Boundary,
    m_max: usize,
    tol: f64,
) -> Result<RateReport> {
    check_levels(levels)?;
    if m_max < boundary.first_index().max(1) {
        return Err(Error::Config(format!("m_max = {m_max} selects no eigenvalues")));
    }
    let measures = approximants(w, levels)?;
    let count = m_max + 1 - boundary.first_index();
    let spectra = solve_levels(&measures, boundary, count, tol)?;
    let indices: Vec<usize> = (boundary.first_index()..=m_max).collect();
    let ns: Vec<f64> = levels[..levels.len() - 1].iter().map(|&n| n as f64).collect();
    let mut lambdas = Vec::new();
    let mut gaps = Vec::new();
    let mut floors = Vec::new();
    let mut fits = Vec::new();
    let mut fits_short = Vec::new();
    for &m in &indices {
        let recs: Vec<_> = spectra.iter().map(|s| *s.record(m).unwrap()).collect();
        let row: Vec<f64> = recs.iter().map(|r| r.lambda).collect();
        let g: Vec<f64> = row.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
        let f: Vec<f64> = recs
            .windows(2)
            .map(|p| {
                let a = 2.0 * p[0].z * p[0].error_bound + 2.0 * p[1].z * p[1].error_bound;
                a + 4.0 * f64::EPSILON * p[0].lambda.max(p[1].lambda)
            })
            .collect();
        fits.push(fit_log_slope(&ns, &g, &f));
        let k = g.len() - 1;
        fits_short.push(fit_log_slope(&ns[..k], &g[..k], &f[..k]));
        lambdas.push(row);
        gaps.push(g);
        floors.push(f);
    }
    Ok(RateReport {
        weights: w,
        boundary,
        indices,
        levels: levels.to_vec(),
        lambdas,
        cdf_dist_bounds: levels.iter().map(|&n| w.w2().powi(n as i32) / w.w1()).collect(),
        successive_gaps: gaps,
        gap_floors: floors,
        fitted_rate_per_m: fits,
        fit_without_deepest: fits_short,
        reference_slope: w.w2().ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionRateReport {
    pub weights: WeightVector,
    pub boundary: Boundary,
    pub m: usize,
    pub levels: Vec<u32>,
    /// `sup_x |f_m(levels[j+1]) - f_m(levels[j])|` on the shared grid.
    pub sup_gaps: Vec<f64>,
    pub grid_sizes: Vec<usize>,
    pub fit: RateFit,
    pub fit_without_deepest: RateFit,
    pub reference_slope: f64,
}

impl EigenfunctionRateReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["boundary", "m", "level", "next_level", "sup_gap", "grid_points"])?;
        for (j, g) in self.sup_gaps.iter().enumerate() {
            w.write_record([
                self.boundary.as_str().to_string(),
                self.m.to_string(),
                self.levels[j].to_string(),
                self.levels[j + 1].to_string(),
                fmt_f64(*g),
                self.grid_sizes[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Breakpoints of `fine` plus `per_interval` uniform points inside each of
/// its intervals.
pub fn gap_grid(fine: &Measure, per_interval: usize) -> Vec<f64> {
    let bps = fine.breakpoints();
    let mut xs = Vec::with_capacity(bps.len() * (per_interval + 1));
    for w in bps.windows(2) {
        xs.push(w[0]);
        for j in 1..=per_interval {
            xs.push(w[0] + (w[1] - w[0]) * j as f64 / (per_interval + 1) as f64);
        }
    }
    xs.push(1.0);
    xs
}

/// `|a(x) - b(x)|` on `xs`. Dirichlet eigenfunctions are pinned to zero at
/// both endpoints.
pub fn eigenfunction_gap_profile(a: &Eigenfunction, b: &Eigenfunction, xs: &[f64]) -> Result<Vec<f64>> {
    let pinned = a.record().boundary == Boundary::Dirichlet;
    xs.iter()
        .map(|&x| {
            if pinned && (x == 0.0 || x == 1.0) {
                Ok(0.0)
            } else {
                Ok((a.eval(x)? - b.eval(x)?).abs())
            }
        })
        .collect()
}

pub const GAP_GRID_POINTS_PER_INTERVAL: usize = 16;

/// Sup-norm differences of eigenfunction `m` between consecutive levels.
pub fn eigenfunction_rate_experiment(
    w: WeightVector,
    levels: &[u32],
    boundary: Boundary,
    m: usize,
    tol: f64,
) -> Result<EigenfunctionRateReport> {
    check_levels(levels)?;
    if m < boundary.first_index() {
        return Err(Error::Config(format!("{boundary} eigenfunctions start at m = {}", boundary.first_index())));
    }
    let measures = approximants(w, levels)?;
    let count = m + 1 - boundary.first_index();
    let spectra = solve_levels(&measures, boundary, count, tol)?;
    let efs: Vec<Eigenfunction> = spectra
        .iter()
        .map(|s| s.eigenfunction(m))
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64, usize)> = (0..levels.len() - 1)
        .into_par_iter()
        .map(|j| {
            let xs = gap_grid(&measures[j + 1], GAP_GRID_POINTS_PER_INTERVAL);
            let profile = eigenfunction_gap_profile(&efs[j + 1], &efs[j], &xs)?;
            let sup = profile.iter().cloned().fold(0.0, f64::max);
            let mut noise: f64 = 0.0;
            for &x in &xs {
                let a = efs[j].eval_certified(x)?.certificate.total();
                let b = efs[j + 1].eval_certified(x)?.certificate.total();
                noise = noise.max(a + b);
            }
            let rec = (efs[j].record(), efs[j + 1].record());
            // a root error δz moves the eigenfunction by at most about δz
            noise += rec.0.error_bound + rec.1.error_bound + 1e-14;
            Ok((sup, noise, xs.len()))
        })
        .collect::<Result<_>>()?;
    let ns: Vec<f64> = levels[..levels.len() - 1].iter().map(|&n| n as f64).collect();
    let gaps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let floors: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let k = gaps.len() - 1;
    Ok(EigenfunctionRateReport {
        weights: w,
        boundary,
        m,
        levels: levels.to_vec(),
        fit: fit_log_slope(&ns, &gaps, &floors),
        fit_without_deepest: fit_log_slope(&ns[..k], &gaps[..k], &floors[..k]),
        sup_gaps: gaps,
        grid_sizes: pairs.iter().map(|p| p.2).collect(),
        reference_slope: w.w2().ln(),
    })
}

/// Frequencies used by [`bound_audit`] when none are given.
pub const DEFAULT_AUDIT_Z: [f64; 10] = [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0];

/// Worst case of one audited inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub bound: String,
    pub checks: usize,
    pub violations: usize,
    /// Largest `actual / limit`.
    pub worst_ratio: f64,
    /// Smallest `limit - actual`.
    pub min_slack: f64,
    pub worst_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfAuditRow {
    pub n: u32,
    pub n_prime: u32,
    pub distance: f64,
    /// `Σ_{j=n}^{n'-1} w₂ʲ`.
    pub telescoping_bound: f64,
    /// `w₂ⁿ / w₁`.
    pub geometric_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub weights: WeightVector,
    pub levels: Vec<u32>,
    pub z_values: Vec<f64>,
    pub total_checks: usize,
    pub violations: usize,
    pub bounds: Vec<AuditSummary>,
    /// Comparisons that are reported but not required to hold.
    pub observations: Vec<AuditSummary>,
    pub cdf: Vec<CdfAuditRow>,
}

impl AuditReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "bound", "checks", "violations", "worst_ratio", "min_slack", "worst_at"])?;
        for (kind, rows) in [("bound", &self.bounds), ("observation", &self.observations)] {
            for r in rows {
                w.write_record([
                    kind.to_string(),
                    r.bound.clone(),
                    r.checks.to_string(),
                    r.violations.to_string(),
                    fmt_f64(r.worst_ratio),
                    fmt_f64(r.min_slack),
                    r.worst_at.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct Tracker {
    rows: BTreeMap<&'static str, AuditSummary>,
}

impl Tracker {
    /// Records `actual <= limit`; `slack` absorbs rounding and certificates.
    fn record(&mut self, bound: &'static str, actual: f64, limit: f64, slack: f64, at: impl FnOnce() -> String) {
        let e = self.rows.entry(bound).or_insert_with(|| AuditSummary {
            bound: bound.to_string(),
            checks: 0,
            violations: 0,
            worst_ratio: 0.0,
            min_slack: f64::INFINITY,
            worst_at: String::new(),
        });
        e.checks += 1;
        if !(actual <= limit + slack) {
            e.violations += 1;
        }
        let ratio = if limit > 0.0 {
            actual / limit
        } else if actual > slack {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > e.worst_ratio || e.worst_at.is_empty() {
            e.worst_ratio = ratio;
            e.worst_at = at();
        }
        e.min_slack = e.min_slack.min(limit - actual);
    }

    fn merge(&mut self, other: Tracker) {
        for (k, v) in other.rows {
            match self.rows.get_mut(k) {
                None => {
                    self.rows.insert(k, v);
                }
                Some(e) => {
                    e.checks += v.checks;
                    e.violations += v.violations;
                    if v.worst_ratio > e.worst_ratio {
                        e.worst_ratio = v.worst_ratio;
                        e.worst_at = v.worst_at;
                    }
                    e.min_slack = e.min_slack.min(v.min_slack);
                }
            }
        }
    }

    fn into_rows(self) -> Vec<AuditSummary> {
        self.rows.into_values().collect()
    }
}

const REL_SLACK: f64 = 1e-12;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Coefficient gap limit `2·d·xⁿ/(n-1)!` for index `j ∈ {2n, 2n+1}`, `n >= 1`.
fn coefficient_gap_limit(j: usize, d: f64, x: f64) -> f64 {
    let n = j / 2;
    2.0 * d * x.powi(n as i32) / factorial(n - 1)
}

/// Sup-norm gap constants `c(z)` per function, from summing the coefficient
/// gap limits over the series.
pub fn trig_gap_constant(f: TrigFn, z: f64) -> f64 {
    let z = z.abs();
    let e = (z * z).exp();
    match f {
        TrigFn::Cosq | TrigFn::Cosp => 2.0 * z * z * e,
        TrigFn::Sinq => 2.0 * z * z * z * e,
        TrigFn::Sinp => z + 2.0 * z * z * z * e,
    }
}

/// `2·Σ_{n>=1} (2n+1) z^{2n}/(n-1)! = 2z²(2z²+3)e^{z²}`.
pub fn derivative_gap_constant(z: f64) -> f64 {
    let y = z * z;
    2.0 * y * (2.0 * y + 3.0) * y.exp()
}

fn coefficient_points(mu: &Measure) -> Vec<f64> {
    let mut xs = Vec::new();
    for w in mu.breakpoints().windows(2) {
        xs.push(w[0]);
        xs.push(0.5 * (w[0] + w[1]));
    }
    xs.push(1.0);
    xs
}

fn audit_factorial(table: &TrigTable, level: u32, xs: &[f64]) -> Result<Tracker> {
    let mut t = Tracker::default();
    for &x in xs {
        let p2 = table.p_fun(2).eval(x)?;
        let q2 = table.q_fun(2).eval(x)?;
        for j in 1..table.len() {
            let n = j / 2;
            let (p_base, q_base) = if j % 2 == 1 { (q2, p2) } else { (p2, q2) };
            let p = table.p_fun(j).eval(x)?;
            let q = table.q_fun(j).eval(x)?;
            let lp = p_base.powi(n as i32) / factorial(n);
            let lq = q_base.powi(n as i32) / factorial(n);
            t.record("factorial_coefficient", p, lp, REL_SLACK * lp + 1e-300, || {
                format!("level {level}, p_{j}({x})")
            });
            t.record("factorial_coefficient", q, lq, REL_SLACK * lq + 1e-300, || {
                format!("level {level}, q_{j}({x})")
            });
        }
    }
    Ok(t)
}

struct LevelData {
    level: u32,
    measure: Measure,
    table: Arc<TrigTable>,
    /// `series[z_index][function_index]`.
    series: Vec<Vec<CollapsedSeries>>,
}

fn audit_pair(a: &LevelData, b: &LevelData, z_values: &[f64]) -> Result<Tracker> {
    let mut t = Tracker::default();
    let d = cdf_sup_distance(&a.measure, &b.measure);
    let (na, nb) = (a.level, b.level);
    let xs = coefficient_points(&a.measure);
    let len = a.table.len().min(b.table.len());
    for &x in &xs {
        for j in 2..len {
            let lim = coefficient_gap_limit(j, d, x);
            for (name, fa, fb) in [
                ("p", a.table.p_fun(j), b.table.p_fun(j)),
                ("q", a.table.q_fun(j), b.table.q_fun(j)),
            ] {
                let (u, v) = (fa.eval(x)?, fb.eval(x)?);
                let gap = (u - v).abs();
                t.record("coefficient_gap", gap, lim, REL_SLACK * (lim + u.abs() + v.abs()), || {
                    format!("levels {na}/{nb}, {name}_{j}({x})")
                });
            }
        }
    }
    let grid = gap_grid(&b.measure, 4);
    for (zi, &z) in z_values.iter().enumerate() {
        for (fi, &f) in TrigFn::ALL.iter().enumerate() {
            let (sa, sb) = (&a.series[zi][fi], &b.series[zi][fi]);
            let mut sup: f64 = 0.0;
            let mut noise: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for &x in &grid {
                let (u, v) = (sa.eval(x)?, sb.eval(x)?);
                sup = sup.max((u.value - v.value).abs());
                noise = noise.max(u.certificate.total() + v.certificate.total());
                scale = scale.max(u.value.abs() + v.value.abs());
            }
            let slack = noise + REL_SLACK * scale;
            let at = || format!("levels {na}/{nb}, {f:?}, z = {z}");
            let lim = trig_gap_constant(f, z) * d;
            let name = match f {
                TrigFn::Cosq => "cq_gap",
                TrigFn::Cosp => "cp_gap",
                TrigFn::Sinq => "sq_gap",
                TrigFn::Sinp => "sp_gap",
            };
            t.record(name, sup, lim, slack, at);
        }
        for (f, name) in [(TrigFn::Sinp, "sinp_prime_gap"), (TrigFn::Sinq, "sinq_prime_gap")] {
            let (u, v) = (a.table.eval_prime(f, z)?, b.table.eval_prime(f, z)?);
            let gap = (u.value - v.value).abs();
            let lim = derivative_gap_constant(z) * d;
            let slack = u.certificate.total() + v.certificate.total() + REL_SLACK * (u.value.abs() + v.value.abs());
            t.record(name, gap, lim, slack, || format!("levels {na}/{nb}, z = {z}"));
        }
    }
    Ok(t)
}

/// Observation: the `cq` constant `2z²e^{z²}` applied to all four functions.
fn observe_uniform_constant(a: &LevelData, b: &LevelData, z_values: &[f64]) -> Result<Tracker> {
    let mut t = Tracker::default();
    let d = cdf_sup_distance(&a.measure, &b.measure);
    let grid = gap_grid(&b.measure, 4);
    for (zi, &z) in z_values.iter().enumerate() {
        let lim = trig_gap_constant(TrigFn::Cosq, z) * d;
        for (fi, &f) in TrigFn::ALL.iter().enumerate() {
            let mut sup: f64 = 0.0;
            let mut noise: f64 = 0.0;
            for &x in &grid {
                let (u, v) = (a.series[zi][fi].eval(x)?, b.series[zi][fi].eval(x)?);
                sup = sup.max((u.value - v.value).abs());
                noise = noise.max(u.certificate.total() + v.certificate.total());
            }
            t.record("uniform_cq_constant", sup, lim, noise + 1e-15, || {
                format!("levels {}/{}, {f:?}, z = {z}", a.level, b.level)
            });
        }
    }
    Ok(t)
}

/// Checks every proven inequality on all level pairs and frequencies without
/// failing on violations.
pub fn audit_bounds(w: WeightVector, levels: &[u32], z_values: &[f64]) -> Result<AuditReport> {
    if levels.is_empty() || levels.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Config("levels must be non-empty and strictly ascending".into()));
    }
    if z_values.iter().any(|z| !z.is_finite() || *z < 0.0) {
        return Err(Error::Config("audit frequencies must be finite and nonnegative".into()));
    }
    let z_max = z_values.iter().cloned().fold(1.0, f64::max);
    let data: Vec<LevelData> = levels
        .par_iter()
        .map(|&level| {
            let measure = cantor_approximant(CantorLevel::new(w, level))?;
            let table = Arc::new(TrigTable::for_range(&measure, z_max)?);
            let series = z_values
                .iter()
                .map(|&z| TrigFn::ALL.iter().map(|&f| table.collapse(f, z)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok(LevelData {
                level,
                measure,
                table,
                series,
            })
        })
        .collect::<Result<_>>()?;

    let mut bounds = Tracker::default();
    let mut observations = Tracker::default();
    let mut cdf = Vec::new();
    let (w1, w2) = (w.w1(), w.w2());
    for (i, a) in data.iter().enumerate() {
        for b in &data[i..] {
            let (n, np) = (a.level, b.level);
            let d = cdf_sup_distance(&a.measure, &b.measure);
            let tele: f64 = (n..np).map(|j| w2.powi(j as i32)).sum();
            let geo = w2.powi(n as i32) / w1;
            let at = || format!("levels {n}/{np}");
            if np == n + 1 {
                bounds.record("cdf_step", d, w2.powi(n as i32), REL_SLACK, at);
            }
            bounds.record("cdf_telescoping", d, tele, REL_SLACK, at);
            bounds.record("cdf_geometric", d, geo, REL_SLACK, at);
            cdf.push(CdfAuditRow {
                n,
                n_prime: np,
                distance: d,
                telescoping_bound: tele,
                geometric_bound: geo,
            });
        }
    }
    let per_level: Vec<Tracker> = data
        .par_iter()
        .map(|l| audit_factorial(&l.table, l.level, &coefficient_points(&l.measure)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..data.len())
        .flat_map(|i| (i + 1..data.len()).map(move |j| (i, j)))
        .collect();
    let per_pair: Vec<(Tracker, Tracker)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            Ok((
                audit_pair(&data[i], &data[j], z_values)?,
                observe_uniform_constant(&data[i], &data[j], z_values)?,
            ))
        })
        .collect::<Result<_>>()?;
    for t in per_level {
        bounds.merge(t);
    }
    for (t, o) in per_pair {
        bounds.merge(t);
        observations.merge(o);
    }
    let bounds = bounds.into_rows();
    Ok(AuditReport {
        weights: w,
        levels: levels.to_vec(),
        z_values: z_values.to_vec(),
        total_checks: bounds.iter().map(|b| b.checks).sum(),
        violations: bounds.iter().map(|b| b.violations).sum(),
        bounds,
        observations: observations.into_rows(),
        cdf,
    })
}

/// [`audit_bounds`] that fails on the first violated inequality.
pub fn bound_audit(w: WeightVector, levels: &[u32], z_values: &[f64]) -> Result<AuditReport> {
    let report = audit_bounds(w, levels, z_values)?;
    if let Some(b) = report.bounds.iter().find(|b| b.violations > 0) {
        return Err(Error::BoundViolation(format!(
            "{}: {} of {} checks fail, worst ratio {} at {}",
            b.bound, b.violations, b.checks, b.worst_ratio, b.worst_at
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_geometric_sequence() {
        let ns = [1.0, 2.0, 3.0, 4.0];
        let gaps: Vec<f64> = ns.iter().map(|n| 3.0 * 0.5f64.powf(*n)).collect();
        let fit = fit_log_slope(&ns, &gaps, &[0.0; 4]);
        let k = fit.slope().unwrap();
        assert!((k - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn flat_sequence_is_converged() {
        let fit = fit_log_slope(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &[1e-14; 3]);
        assert_eq!(fit, RateFit::ConvergedBelowTolerance);
        assert!(fit.slope().is_none());
    }

    #[test]
    fn too_few_levels() {
        let w = WeightVector::uniform();
        assert!(matches!(
            eigenvalue_rate_experiment(w, &[1, 2], Boundary::Neumann, 1, 1e-10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn neumann_ground_state_is_flat() {
        let w = WeightVector::uniform();
        let r = eigenvalue_rate_experiment(w, &[0, 1, 2], Boundary::Neumann, 1, 1e-12).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        assert_eq!(r.fitted_rate_per_m[0], RateFit::ConvergedBelowTolerance);
        assert!(r.successive_gaps[0].iter().all(|g| *g == 0.0));
        let ef = eigenfunction_rate_experiment(w, &[0, 1, 2], Boundary::Neumann, 0, 1e-12).unwrap();
        assert!(ef.sup_gaps.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn dirichlet_profile_pins_endpoints() {
        let w = WeightVector::uniform();
        let a = solve(&cantor_approximant(CantorLevel::new(w, 1)).unwrap(), Boundary::Dirichlet, 1, 1e-12).unwrap();
        let b = solve(&cantor_approximant(CantorLevel::new(w, 2)).unwrap(), Boundary::Dirichlet, 1, 1e-12).unwrap();
        let (fa, fb) = (a.eigenfunction(1).unwrap(), b.eigenfunction(1).unwrap());
        let prof = eigenfunction_gap_profile(&fa, &fb, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(prof[0], 0.0);
        assert_eq!(prof[2], 0.0);
        assert!(prof[1] > 0.0);
    }

    #[test]
    fn derivative_constant_matches_series() {
        let z: f64 = 1.3;
        let direct: f64 = (1..60)
            .map(|n| 2.0 * (2 * n + 1) as f64 * z.powi(2 * n as i32) / factorial(n - 1))
            .sum();
        assert!((derivative_gap_constant(z) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn small_audit_passes() {
        let r = bound_audit(WeightVector::uniform(), &[0, 1, 2], &[0.5, 2.0]).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.total_checks > 100);
        let step = r.cdf.iter().find(|c| c.n == 0 && c.n_prime == 1).unwrap();
        assert!((step.distance - 1.0 / 6.0).abs() < 1e-15);
    }
}
