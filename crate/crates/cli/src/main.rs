//! `krein`: eigenvalues, eigenfunctions and convergence experiments for
//! Krein-Feller operators on Cantor-type measures.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use krein_core::convergence::{
    audit_bounds, eigenfunction_rate_experiment, eigenvalue_rate_experiment, DEFAULT_AUDIT_Z,
};
use krein_core::format::fmt_f64;
use krein_core::measures::{cantor_approximant_capped, CantorLevel, Measure, WeightVector};
use krein_core::series::{build_table, TrigTable};
use krein_core::spectrum::{
    fem_oracle, find_eigenvalues_with, write_records_csv, Boundary, RootOptions, Spectrum,
};
use krein_core::{Error, Result};

use output::{fail, write_atomic, Format};

#[derive(Parser, Debug)]
#[command(name = "krein", version, about = "Spectra of Krein-Feller operators on Cantor-type measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues with brackets and error bounds.
    Eigvals(Common),
    /// Eigenfunction samples on a uniform x-grid.
    Eigfun {
        #[command(flatten)]
        common: Common,
        /// Number of sample points on [0, 1].
        #[arg(long, default_value_t = 1001)]
        points: usize,
        /// Divide Neumann eigenfunctions (m >= 1) by their L2(μ) norm.
        #[arg(long)]
        l2_normalize: bool,
    },
    /// sinp and sinq sampled on [z-min, z-max].
    Sincurve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        z_min: f64,
        #[arg(long, default_value_t = 12.0)]
        z_max: f64,
        #[arg(long, default_value_t = 1201)]
        points: usize,
    },
    /// Convergence of eigenvalues or eigenfunctions across levels.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1:6")]
        levels: LevelRange,
        #[arg(long, value_enum, default_value_t = RateKind::Eigenvalues)]
        kind: RateKind,
        /// Eigenfunction index for `--kind eigenfunctions`.
        #[arg(long, default_value_t = 1)]
        m: usize,
    },
    /// Checks the proven coefficient, trigonometric and CDF inequalities.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1:5")]
        levels: LevelRange,
        /// Largest frequency included in the audit grid.
        #[arg(long, default_value_t = 12.0)]
        z_max: f64,
    },
    /// Series eigenvalues next to finite-element eigenvalues.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        /// Mesh width of the finite-element oracle.
        #[arg(long, default_value_t = 1.0 / 729.0)]
        h: f64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// First weight w1 of the Cantor measure (w2 = 1 - w1).
    #[arg(long, default_value_t = 0.5)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    level: u32,
    #[arg(long, default_value_t = 10)]
    level_cap: u32,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Neumann)]
    boundary: BoundaryArg,
    /// Largest eigenvalue index.
    #[arg(long, default_value_t = 6)]
    m_max: usize,
    /// Root tolerance in z.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Series order, or `auto` to size it from the frequency range.
    #[arg(long, default_value = "auto")]
    order: Order,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write `n, p_n(1), q_n(1)` of the coefficient table to this file.
    #[arg(long)]
    dump_coeffs: Option<PathBuf>,
    /// Write one coefficient polynomial, e.g. `p3=poly.csv`.
    #[arg(long)]
    dump_poly: Vec<PolyDump>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    Neumann,
    Dirichlet,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Neumann => Boundary::Neumann,
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum RateKind {
    Eigenvalues,
    Eigenfunctions,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Order {
    Auto,
    Fixed(usize),
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Order::Auto);
        }
        s.parse()
            .map(Order::Fixed)
            .map_err(|_| format!("expected `auto` or a positive integer, got {s:?}"))
    }
}

#[derive(Clone, Debug)]
struct LevelRange(Vec<u32>);

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
        let a: u32 = a.trim().parse().map_err(|_| format!("bad level {a:?}"))?;
        let b: u32 = b.trim().parse().map_err(|_| format!("bad level {b:?}"))?;
        if a > b {
            return Err(format!("empty level range {s}"));
        }
        Ok(LevelRange((a..=b).collect()))
    }
}

#[derive(Clone, Debug)]
struct PolyDump {
    family: char,
    index: usize,
    path: PathBuf,
}

impl FromStr for PolyDump {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
        let mut chars = name.chars();
        let family = chars.next().filter(|c| *c == 'p' || *c == 'q');
        let index = chars.as_str().parse().ok();
        match (family, index) {
            (Some(family), Some(index)) if !path.is_empty() => Ok(PolyDump {
                family,
                index,
                path: PathBuf::from(path),
            }),
            _ => Err(format!("expected p<N>=PATH or q<N>=PATH, got {s:?}")),
        }
    }
}

const TOL_RANGE: (f64, f64) = (1e-14, 1e-4);

impl Common {
    fn validate(&self) -> Result<()> {
        if !(self.tol >= TOL_RANGE.0 && self.tol <= TOL_RANGE.1) {
            return Err(Error::Config(format!(
                "--tol {} is outside [{:e}, {:e}]",
                self.tol, TOL_RANGE.0, TOL_RANGE.1
            )));
        }
        self.check_level(self.level)?;
        if let Order::Fixed(0) = self.order {
            return Err(Error::Config("--order must be at least 1".into()));
        }
        Ok(())
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level > self.level_cap {
            return Err(Error::Config(format!(
                "level {level} exceeds the level cap {}",
                self.level_cap
            )));
        }
        Ok(())
    }

    fn weights(&self) -> Result<WeightVector> {
        WeightVector::new(self.w)
    }

    fn measure(&self) -> Result<Measure> {
        cantor_approximant_capped(CantorLevel::new(self.weights()?, self.level), self.level_cap)
    }

    fn boundary(&self) -> Boundary {
        self.boundary.into()
    }

    fn count(&self) -> Result<usize> {
        let b = self.boundary();
        if self.m_max < b.first_index().max(1) {
            return Err(Error::Config(format!("--m-max {} selects no eigenvalues", self.m_max)));
        }
        Ok(self.m_max + 1 - b.first_index())
    }

    fn table(&self, mu: &Measure, z_max: f64) -> Result<TrigTable> {
        match self.order {
            Order::Auto => TrigTable::for_range(mu, z_max),
            Order::Fixed(n) => build_table(mu, n),
        }
    }

    fn root_options(&self) -> RootOptions {
        RootOptions {
            allow_growth: self.order == Order::Auto,
            ..RootOptions::with_tol(self.tol)
        }
    }

    fn spectrum(&self) -> Result<Spectrum> {
        let mu = self.measure()?;
        let count = self.count()?;
        let guess = 1.2 * std::f64::consts::PI * (count + 1) as f64;
        let table = Arc::new(self.table(&mu, guess)?);
        let spec = find_eigenvalues_with(table, self.boundary(), count, &self.root_options())?;
        self.dump(spec.table())?;
        Ok(spec)
    }

    fn dump(&self, table: &TrigTable) -> Result<()> {
        if let Some(path) = &self.dump_coeffs {
            write_atomic(Some(path), |w| table.write_coefficients_csv(w))?;
        }
        for d in &self.dump_poly {
            if d.index >= table.len() {
                return Err(Error::Config(format!(
                    "{}{} is not stored (table holds indices below {})",
                    d.family,
                    d.index,
                    table.len()
                )));
            }
            let poly = if d.family == 'p' { table.p_fun(d.index) } else { table.q_fun(d.index) };
            write_atomic(Some(&d.path), |w| poly.write_csv(w))?;
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        write_atomic(self.out.as_ref(), |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }
}

fn eigvals(c: &Common) -> Result<()> {
    let spec = c.spectrum()?;
    match c.format {
        Format::Csv => write_atomic(c.out.as_ref(), |w| write_records_csv(spec.records(), w)),
        Format::Json => c.emit_json(&spec.records()),
    }
}

#[derive(Serialize)]
struct EigfunSamples {
    boundary: Boundary,
    indices: Vec<usize>,
    lambdas: Vec<f64>,
    l2_normalized: bool,
    x: Vec<f64>,
    /// `values[i][j]`: eigenfunction `indices[i]` at `x[j]`.
    values: Vec<Vec<f64>>,
}

fn eigfun(c: &Common, points: usize, l2: bool) -> Result<()> {
    if points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    if l2 && c.boundary() == Boundary::Dirichlet {
        return Err(Error::Config("--l2-normalize applies to Neumann eigenfunctions".into()));
    }
    let spec = c.spectrum()?;
    let xs: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
    let mut indices = Vec::new();
    let mut lambdas = Vec::new();
    let mut values = Vec::new();
    for r in spec.records() {
        let ef = spec.eigenfunction(r.index)?;
        let scale = if l2 && r.index > 0 { ef.l2_norm()? } else { 1.0 };
        let col = xs.iter().map(|&x| Ok(ef.eval(x)? / scale)).collect::<Result<Vec<f64>>>()?;
        indices.push(r.index);
        lambdas.push(r.lambda);
        values.push(col);
    }
    let samples = EigfunSamples {
        boundary: spec.boundary(),
        indices,
        lambdas,
        l2_normalized: l2,
        x: xs,
        values,
    };
    match c.format {
        Format::Json => c.emit_json(&samples),
        Format::Csv => write_atomic(c.out.as_ref(), |w| {
            let mut out = csv::Writer::from_writer(w);
            let mut header = vec!["x".to_string()];
            header.extend(samples.indices.iter().map(|m| format!("f_{m}")));
            out.write_record(&header)?;
            for (j, x) in samples.x.iter().enumerate() {
                let mut row = vec![fmt_f64(*x)];
                row.extend(samples.values.iter().map(|col| fmt_f64(col[j])));
                out.write_record(&row)?;
            }
            out.flush()?;
            Ok(())
        }),
    }
}

#[derive(Serialize)]
struct SineCurve {
    z: Vec<f64>,
    sinp: Vec<f64>,
    sinq: Vec<f64>,
}

fn sincurve(c: &Common, z_min: f64, z_max: f64, points: usize) -> Result<()> {
    if !(z_min.is_finite() && z_max.is_finite() && z_min < z_max) || points < 2 {
        return Err(Error::Config("need finite z-min < z-max and at least 2 points".into()));
    }
    let mu = c.measure()?;
    let table = c.table(&mu, z_min.abs().max(z_max.abs()))?;
    c.dump(&table)?;
    let z: Vec<f64> = (0..points)
        .map(|j| z_min + (z_max - z_min) * j as f64 / (points - 1) as f64)
        .collect();
    let sinp = z.iter().map(|&t| Ok(table.sinp(t)?.value)).collect::<Result<Vec<_>>>()?;
    let sinq = z.iter().map(|&t| Ok(table.sinq(t)?.value)).collect::<Result<Vec<_>>>()?;
    let curve = SineCurve { z, sinp, sinq };
    match c.format {
        Format::Json => c.emit_json(&curve),
        Format::Csv => write_atomic(c.out.as_ref(), |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["z", "sinp", "sinq"])?;
            for j in 0..curve.z.len() {
                out.write_record([fmt_f64(curve.z[j]), fmt_f64(curve.sinp[j]), fmt_f64(curve.sinq[j])])?;
            }
            out.flush()?;
            Ok(())
        }),
    }
}

fn rates(c: &Common, levels: &[u32], kind: RateKind, m: usize) -> Result<()> {
    for &n in levels {
        c.check_level(n)?;
    }
    let w = c.weights()?;
    match kind {
        RateKind::Eigenvalues => {
            let report = eigenvalue_rate_experiment(w, levels, c.boundary(), c.m_max, c.tol)?;
            eprint!("{}", report.slope_table());
            match c.format {
                Format::Json => c.emit_json(&report),
                Format::Csv => write_atomic(c.out.as_ref(), |out| report.write_csv(out)),
            }
        }
        RateKind::Eigenfunctions => {
            let report = eigenfunction_rate_experiment(w, levels, c.boundary(), m, c.tol)?;
            match c.format {
                Format::Json => c.emit_json(&report),
                Format::Csv => write_atomic(c.out.as_ref(), |out| report.write_csv(out)),
            }
        }
    }
}

fn audit(c: &Common, levels: &[u32], z_max: f64) -> Result<()> {
    for &n in levels {
        c.check_level(n)?;
    }
    if !(z_max >= 0.0 && z_max.is_finite()) {
        return Err(Error::Config("--z-max must be finite and nonnegative".into()));
    }
    let zs: Vec<f64> = DEFAULT_AUDIT_Z.iter().copied().filter(|z| *z <= z_max).collect();
    let report = audit_bounds(c.weights()?, levels, &zs)?;
    eprintln!(
        "{} checks, {} violations",
        report.total_checks, report.violations
    );
    match c.format {
        Format::Json => c.emit_json(&report)?,
        Format::Csv => write_atomic(c.out.as_ref(), |out| report.write_csv(out))?,
    }
    if report.violations > 0 {
        let b = report.bounds.iter().find(|b| b.violations > 0).unwrap();
        return Err(Error::BoundViolation(format!(
            "{}: worst ratio {} at {}",
            b.bound, b.worst_ratio, b.worst_at
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    boundary: Boundary,
    m: usize,
    lambda_series: f64,
    lambda_fem: f64,
    rel_gap: f64,
}

fn oracle_compare(c: &Common, h: f64) -> Result<()> {
    let spec = c.spectrum()?;
    let fem = fem_oracle(spec.table().measure(), h, spec.records().len(), c.boundary())?;
    let rows: Vec<OracleRow> = spec
        .records()
        .iter()
        .zip(&fem)
        .map(|(r, &f)| OracleRow {
            boundary: r.boundary,
            m: r.index,
            lambda_series: r.lambda,
            lambda_fem: f,
            rel_gap: if r.lambda > 0.0 { (f - r.lambda).abs() / r.lambda } else { (f - r.lambda).abs() },
        })
        .collect();
    match c.format {
        Format::Json => c.emit_json(&rows),
        Format::Csv => write_atomic(c.out.as_ref(), |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["boundary", "m", "lambda_series", "lambda_fem", "rel_gap"])?;
            for r in &rows {
                out.write_record([
                    r.boundary.as_str().to_string(),
                    r.m.to_string(),
                    fmt_f64(r.lambda_series),
                    fmt_f64(r.lambda_fem),
                    fmt_f64(r.rel_gap),
                ])?;
            }
            out.flush()?;
            Ok(())
        }),
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Eigvals(c) => {
            c.validate()?;
            eigvals(c)
        }
        Command::Eigfun { common, points, l2_normalize } => {
            common.validate()?;
            eigfun(common, *points, *l2_normalize)
        }
        Command::Sincurve { common, z_min, z_max, points } => {
            common.validate()?;
            sincurve(common, *z_min, *z_max, *points)
        }
        Command::Rates { common, levels, kind, m } => {
            common.validate()?;
            rates(common, &levels.0, *kind, *m)
        }
        Command::Audit { common, levels, z_max } => {
            common.validate()?;
            audit(common, &levels.0, *z_max)
        }
        Command::OracleCompare { common, h } => {
            common.validate()?;
            oracle_compare(common, *h)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return output::clap_error(e),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
