//! Piecewise polynomials on a breakpoint grid and the two integration
//! operators `f ↦ ∫₀ˣ f dt` and `f ↦ ∫₀ˣ f dμ`.
//!
//! Each piece is stored in the local variable `s = x - t_{i-1}` with
//! double-double coefficients. The recursions that build the trigonometric
//! series feed on each other a hundred times or more, and the resulting
//! coefficients are later combined in alternating sums with large
//! intermediate terms; plain `f64` loses too many digits on that path.

use std::io::Write;
use std::sync::Arc;

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::measures::Measure;

/// Double-double scalar.
pub type Dd = TwoFloat;

/// Refinements producing more coefficients than this fail with a resource
/// error.
pub const MAX_COEFFICIENTS: usize = 50_000_000;

pub(crate) fn dd(x: f64) -> Dd {
    TwoFloat::from(x)
}

/// `x · 2^k`, in steps that keep the factor representable.
pub(crate) fn ldexp(mut x: Dd, mut k: i32) -> Dd {
    while k != 0 {
        let step = k.clamp(-1000, 1000);
        x *= 2f64.powi(step);
        k -= step;
    }
    x
}

/// Strictly increasing knots `0 = t_0 < … < t_K = 1` with exact widths.
#[derive(Debug, PartialEq)]
pub struct Grid {
    knots: Vec<f64>,
    widths: Vec<Dd>,
}

impl Grid {
    pub fn new(knots: Vec<f64>) -> Result<Arc<Grid>> {
        if knots.len() < 2 || knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
            return Err(Error::Config("grid must run from 0 to 1".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("grid knots must be strictly increasing".into()));
        }
        // the difference of two doubles is exact as a double-double
        let widths = knots.windows(2).map(|w| TwoFloat::new_sub(w[1], w[0])).collect();
        Ok(Arc::new(Grid { knots, widths }))
    }

    pub fn from_measure(mu: &Measure) -> Arc<Grid> {
        Grid::new(mu.breakpoints().to_vec()).expect("measure grids are valid")
    }

    /// Union of the knots of two grids.
    pub fn merged(a: &Grid, b: &Grid) -> Arc<Grid> {
        let mut knots: Vec<f64> = a.knots.iter().chain(&b.knots).copied().collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        Grid::new(knots).expect("union of valid grids")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_pieces(&self) -> usize {
        self.widths.len()
    }

    pub fn width(&self, i: usize) -> Dd {
        self.widths[i]
    }

    /// Piece containing `x`; interior knots belong to the piece on their right.
    pub fn locate(&self, x: f64) -> usize {
        let k = self.knots.partition_point(|&t| t <= x);
        k.clamp(1, self.num_pieces()) - 1
    }

    fn contains_all(&self, other: &Grid) -> bool {
        other
            .knots
            .iter()
            .all(|t| self.knots.binary_search_by(|k| k.total_cmp(t)).is_ok())
    }
}

/// A continuous function on `[0, 1]` that is a polynomial on every piece of
/// its grid.
#[derive(Debug, Clone)]
pub struct PiecewisePolynomial {
    grid: Arc<Grid>,
    /// `pieces[i][j]` multiplies `(x - t_i)^j`
    pieces: Vec<Vec<Dd>>,
    degree_cap: usize,
}

fn horner(coeffs: &[Dd], s: Dd) -> Dd {
    coeffs.iter().rev().fold(dd(0.0), |acc, &c| acc * s + c)
}

/// Re-expands `Σ c_j s^j` in `s' = s - delta`.
fn taylor_shift(coeffs: &[Dd], delta: Dd) -> Vec<Dd> {
    let mut c = coeffs.to_vec();
    let n = c.len();
    for k in 0..n {
        for j in (k..n - 1).rev() {
            let t = c[j + 1] * delta;
            c[j] += t;
        }
    }
    c
}

impl PiecewisePolynomial {
    pub fn constant(grid: Arc<Grid>, value: f64, degree_cap: usize) -> Self {
        let pieces = vec![vec![dd(value)]; grid.num_pieces()];
        Self {
            grid,
            pieces,
            degree_cap,
        }
    }

    /// Builds from local `f64` coefficients. Continuity is not enforced here;
    /// see [`Self::max_jump`].
    pub fn from_pieces(grid: Arc<Grid>, pieces: Vec<Vec<f64>>, degree_cap: usize) -> Result<Self> {
        if pieces.len() != grid.num_pieces() {
            return Err(Error::Config(format!(
                "{} pieces for a grid of {} intervals",
                pieces.len(),
                grid.num_pieces()
            )));
        }
        let pieces: Vec<Vec<Dd>> = pieces
            .into_iter()
            .map(|p| {
                if p.is_empty() {
                    vec![dd(0.0)]
                } else {
                    p.into_iter().map(dd).collect()
                }
            })
            .collect();
        let out = Self {
            grid,
            pieces,
            degree_cap,
        };
        out.check_cap()?;
        Ok(out)
    }

    fn check_cap(&self) -> Result<()> {
        let degree = self.degree();
        if degree > self.degree_cap {
            Err(Error::DegreeCap {
                degree,
                cap: self.degree_cap,
            })
        } else {
            Ok(())
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn pieces(&self) -> &[Vec<Dd>] {
        &self.pieces
    }

    pub fn degree(&self) -> usize {
        self.pieces.iter().map(|p| p.len() - 1).max().unwrap_or(0)
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn with_degree_cap(mut self, cap: usize) -> Result<Self> {
        self.degree_cap = cap;
        self.check_cap()?;
        Ok(self)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.eval_dd(x)?.hi())
    }

    pub fn eval_dd(&self, x: f64) -> Result<Dd> {
        Error::check_unit("x", x)?;
        let i = self.grid.locate(x);
        let s = TwoFloat::new_sub(x, self.grid.knots[i]);
        Ok(horner(&self.pieces[i], s))
    }

    /// Value of piece `i` at its right end.
    pub fn right_value(&self, i: usize) -> Dd {
        horner(&self.pieces[i], self.grid.widths[i])
    }

    /// Value at `x = 1`.
    pub fn value_at_one(&self) -> Dd {
        self.right_value(self.pieces.len() - 1)
    }

    /// Largest relative mismatch between neighbouring pieces at shared knots.
    pub fn max_jump(&self) -> f64 {
        (1..self.pieces.len())
            .map(|i| {
                let left = self.right_value(i - 1).hi();
                let right = self.pieces[i][0].hi();
                (left - right).abs() / left.abs().max(right.abs()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// `x ↦ ∫₀ˣ f(t) dt`.
    pub fn integrate_dt(&self) -> Result<Self> {
        self.integrate_with(|_| 1.0)
    }

    /// `x ↦ ∫₀ˣ f(t) dμ(t)`. If the grids differ, `f` is first re-expanded
    /// on their common refinement.
    pub fn integrate_dmu(&self, mu: &Measure) -> Result<Self> {
        if self.grid.knots == mu.breakpoints() {
            return self.integrate_with(|i| mu.densities()[i]);
        }
        let mu_grid = Grid::from_measure(mu);
        let grid = Grid::merged(&self.grid, &mu_grid);
        let refined = self.refine(&grid)?;
        let densities: Vec<f64> = grid
            .knots
            .windows(2)
            .map(|w| mu.density_at(0.5 * (w[0] + w[1])))
            .collect();
        refined.integrate_with(|i| densities[i])
    }

    fn integrate_with(&self, density: impl Fn(usize) -> f64) -> Result<Self> {
        let mut acc = dd(0.0);
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let d = density(i);
            let piece = if d == 0.0 {
                vec![acc]
            } else {
                let mut q = Vec::with_capacity(p.len() + 1);
                q.push(acc);
                q.extend(p.iter().enumerate().map(|(j, &c)| c * d / (j + 1) as f64));
                q
            };
            acc = horner(&piece, self.grid.widths[i]);
            pieces.push(piece);
        }
        let out = Self {
            grid: self.grid.clone(),
            pieces,
            degree_cap: self.degree_cap,
        };
        out.check_cap()?;
        Ok(out)
    }

    /// Re-expands on a finer grid that contains every current knot.
    pub fn refine(&self, grid: &Arc<Grid>) -> Result<Self> {
        if Arc::ptr_eq(grid, &self.grid) || grid.knots == self.grid.knots {
            return Ok(self.clone());
        }
        if !grid.contains_all(&self.grid) {
            return Err(Error::Config("target grid does not refine the current grid".into()));
        }
        let need = grid.num_pieces() * (self.degree() + 1);
        if need > MAX_COEFFICIENTS {
            return Err(Error::Resource(format!(
                "refinement needs {need} coefficients (cap {MAX_COEFFICIENTS})"
            )));
        }
        let pieces = grid
            .knots
            .windows(2)
            .map(|w| {
                let i = self.grid.locate(w[0]);
                let delta = TwoFloat::new_sub(w[0], self.grid.knots[i]);
                if delta == 0.0 {
                    self.pieces[i].clone()
                } else {
                    taylor_shift(&self.pieces[i], delta)
                }
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            pieces,
            degree_cap: self.degree_cap,
        })
    }

    /// `a·self + b·other`, on the common refinement of both grids.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        let grid = if self.grid.knots == other.grid.knots {
            self.grid.clone()
        } else {
            Grid::merged(&self.grid, &other.grid)
        };
        let f = self.refine(&grid)?;
        let g = other.refine(&grid)?;
        let pieces = f
            .pieces
            .iter()
            .zip(&g.pieces)
            .map(|(p, q)| {
                (0..p.len().max(q.len()))
                    .map(|j| {
                        let x = p.get(j).map_or(dd(0.0), |&c| c * a);
                        let y = q.get(j).map_or(dd(0.0), |&c| c * b);
                        x + y
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            pieces,
            degree_cap: self.degree_cap.max(other.degree_cap),
        })
    }

    /// Multiplies by `2^k`; exact unless a coefficient leaves the normal range.
    pub(crate) fn scale_pow2(&mut self, k: i32) {
        for p in &mut self.pieces {
            for c in p.iter_mut() {
                *c = ldexp(*c, k);
            }
        }
    }

    /// `Σ_k weights[k]·fs[k]`, all on the same grid. Coefficients are
    /// accumulated in double-double in ascending `k`.
    pub(crate) fn weighted_sum(fs: &[&Self], weights: &[Dd]) -> Self {
        let grid = fs[0].grid.clone();
        let pieces = (0..grid.num_pieces())
            .map(|i| {
                let len = fs.iter().map(|f| f.pieces[i].len()).max().unwrap_or(1);
                let mut out = vec![dd(0.0); len];
                for (f, &w) in fs.iter().zip(weights) {
                    debug_assert!(Arc::ptr_eq(&f.grid, &grid));
                    for (o, &c) in out.iter_mut().zip(&f.pieces[i]) {
                        *o += c * w;
                    }
                }
                out
            })
            .collect();
        Self {
            grid,
            pieces,
            degree_cap: fs.iter().map(|f| f.degree_cap).max().unwrap_or(0),
        }
    }

    /// Debug dump: one row `piece,left,power,coefficient` per stored
    /// coefficient (leading part of the double-double).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["piece", "left", "power", "coefficient"])?;
        for (i, p) in self.pieces.iter().enumerate() {
            for (j, c) in p.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    fmt_f64(self.grid.knots[i]),
                    j.to_string(),
                    fmt_f64(c.hi()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cantor_approximant, CantorLevel, WeightVector};
    use approx::assert_abs_diff_eq;

    fn unit_grid() -> Arc<Grid> {
        Grid::new(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn integrate_constant_and_linear() {
        let one = PiecewisePolynomial::constant(unit_grid(), 1.0, 8);
        let x = one.integrate_dt().unwrap();
        assert_eq!(x.eval(0.3).unwrap(), 0.3);
        let half_x2 = x.integrate_dt().unwrap();
        assert_eq!(half_x2.eval(1.0).unwrap(), 0.5);
        assert_eq!(half_x2.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn integrate_step_function() {
        let grid = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let step = PiecewisePolynomial::from_pieces(grid, vec![vec![1.0], vec![0.0]], 4).unwrap();
        let f = step.integrate_dt().unwrap();
        assert_abs_diff_eq!(f.eval(0.25).unwrap(), 0.25, epsilon = 1e-16);
        assert_abs_diff_eq!(f.eval(0.5).unwrap(), 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(f.eval(0.9).unwrap(), 0.5, epsilon = 1e-16);
    }

    #[test]
    fn integrate_dmu_examples() {
        let leb = Measure::lebesgue();
        let one = PiecewisePolynomial::constant(unit_grid(), 1.0, 8);
        assert_eq!(one.integrate_dmu(&leb).unwrap().eval(0.7).unwrap(), 0.7);

        let mu1 = cantor_approximant(CantorLevel::new(WeightVector::uniform(), 1)).unwrap();
        // grids differ, so this exercises the automatic refinement
        let cdf = one.integrate_dmu(&mu1).unwrap();
        for t in [0.0, 0.1, 1.0 / 3.0, 0.5, 0.8, 1.0] {
            assert_abs_diff_eq!(cdf.eval(t).unwrap(), mu1.cdf(t).unwrap(), epsilon = 1e-15);
        }
        // 3/2 ∫_0^{1/3} t dt + 3/2 ∫_{2/3}^1 t dt = 1/12 + 5/12
        let x = one.integrate_dt().unwrap();
        assert_abs_diff_eq!(x.integrate_dmu(&mu1).unwrap().eval(1.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_density_pieces_are_constant() {
        let mu1 = cantor_approximant(CantorLevel::new(WeightVector::uniform(), 1)).unwrap();
        let g = PiecewisePolynomial::constant(Grid::from_measure(&mu1), 1.0, 4)
            .integrate_dt()
            .unwrap()
            .integrate_dmu(&mu1)
            .unwrap();
        assert_eq!(g.pieces()[1].len(), 1);
        assert!(g.max_jump() < 1e-15);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let mut f = PiecewisePolynomial::constant(unit_grid(), 1.0, 2);
        f = f.integrate_dt().unwrap().integrate_dt().unwrap();
        assert!(matches!(f.integrate_dt(), Err(Error::DegreeCap { degree: 3, cap: 2 })));
    }

    #[test]
    fn eval_rejects_outside_domain() {
        let f = PiecewisePolynomial::constant(unit_grid(), 1.0, 2);
        assert!(f.eval(1.0 + 1e-12).is_err());
        assert!(f.eval(-1e-300).is_err());
    }

    #[test]
    fn refinement_preserves_values() {
        let grid = Grid::new(vec![0.0, 0.3, 1.0]).unwrap();
        let f = PiecewisePolynomial::from_pieces(grid, vec![vec![1.0, 2.0, -3.0], vec![1.33, 0.2, 4.0, 1.0]], 6)
            .unwrap();
        let fine = Grid::new(vec![0.0, 0.1, 0.3, 0.45, 0.9, 1.0]).unwrap();
        let g = f.refine(&fine).unwrap();
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            assert_abs_diff_eq!(f.eval(x).unwrap(), g.eval(x).unwrap(), epsilon = 1e-14);
        }
        let coarse = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(f.refine(&coarse).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_coefficient() {
        let f = PiecewisePolynomial::constant(unit_grid(), 1.0, 4).integrate_dt().unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("piece,left,power,coefficient\n"));
    }
}
