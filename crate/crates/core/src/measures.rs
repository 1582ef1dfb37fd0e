//! Probability measures on `[0, 1]` with piecewise-constant density.
//!
//! Every measure here is absolutely continuous, so its CDF is continuous and
//! piecewise linear. The weighted ternary Cantor approximants are built by
//! [`cantor_approximant`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;

/// Levels above this are rejected by [`cantor_approximant`] (2^20 support
/// intervals).
pub const DEFAULT_MAX_CANTOR_LEVEL: u32 = 20;

const MASS_TOLERANCE: f64 = 1e-12;

/// Weight vector `(w1, w2)` of the two-map ternary IFS, stored canonically
/// with `w1 <= w2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w1: f64,
    w2: f64,
    swapped: bool,
}

impl WeightVector {
    /// Builds `(w1, 1 - w1)`, swapping the entries if `w1 > 1/2`.
    pub fn new(w1: f64) -> Result<Self> {
        if !(w1 > 0.0 && w1 < 1.0) {
            return Err(Error::Config(format!("weight w1 = {w1} must lie in (0, 1)")));
        }
        let (w1, swapped) = if w1 > 0.5 { (1.0 - w1, true) } else { (w1, false) };
        Ok(Self {
            w1,
            w2: 1.0 - w1,
            swapped,
        })
    }

    pub fn uniform() -> Self {
        Self {
            w1: 0.5,
            w2: 0.5,
            swapped: false,
        }
    }

    /// The smaller weight.
    pub fn w1(&self) -> f64 {
        self.w1
    }

    /// The larger weight; it governs every geometric rate.
    pub fn w2(&self) -> f64 {
        self.w2
    }

    /// Whether the caller's weights were given in the opposite order. The
    /// measure built from the canonical weights is the mirror image of the
    /// requested one, which has the same spectrum.
    pub fn swapped(&self) -> bool {
        self.swapped
    }
}

/// Level `n` of the Cantor approximation for a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantorLevel {
    pub weights: WeightVector,
    pub level: u32,
}

impl CantorLevel {
    pub fn new(weights: WeightVector, level: u32) -> Self {
        Self { weights, level }
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

/// A Borel probability measure on `[0, 1]` with constant density on each
/// interval of a breakpoint grid. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
    /// `cumulative[i] = F(breakpoints[i])`
    cumulative: Vec<f64>,
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        Measure::new(r.breakpoints, r.densities)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        MeasureRepr {
            breakpoints: m.breakpoints,
            densities: m.densities,
        }
    }
}

impl Measure {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidMeasure("need at least two breakpoints".into()));
        }
        if densities.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} breakpoints need {} densities, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                densities.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::InvalidMeasure("grid must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMeasure("breakpoints must be strictly increasing".into()));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidMeasure("densities must be finite and nonnegative".into()));
        }
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        cumulative.push(0.0);
        let mut acc = NeumaierSum::default();
        for (w, d) in breakpoints.windows(2).zip(&densities) {
            acc.add(d * (w[1] - w[0]));
            cumulative.push(acc.value());
        }
        let total = acc.value();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {total} is not 1")));
        }
        Ok(Self {
            breakpoints,
            densities,
            cumulative,
        })
    }

    /// Lebesgue measure on `[0, 1]`.
    pub fn lebesgue() -> Self {
        Self::new(vec![0.0, 1.0], vec![1.0]).expect("valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn num_intervals(&self) -> usize {
        self.densities.len()
    }

    /// `(left, right, density)` of interval `i`.
    pub fn interval(&self, i: usize) -> (f64, f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1], self.densities[i])
    }

    pub fn max_density(&self) -> f64 {
        self.densities.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the interval containing `t`; breakpoints belong to the
    /// interval on their right, except `1`.
    pub(crate) fn locate(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.clamp(1, self.num_intervals()) - 1
    }

    /// `F(t) = μ[0, t]`.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        Error::check_unit("t", t)?;
        Ok(self.cdf_unchecked(t))
    }

    fn cdf_unchecked(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let (a, _, d) = self.interval(i);
        self.cumulative[i] + d * (t - a)
    }

    /// CDF extended by 0 below the interval and 1 above it.
    pub fn cdf_extended(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else {
            self.cdf_unchecked(s)
        }
    }

    /// Density on the interval containing `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        self.densities[self.locate(x)]
    }

    /// Merges neighbouring intervals of equal density, giving the canonical
    /// representation of the same measure.
    pub fn normalized(&self) -> Measure {
        let mut bps = vec![0.0];
        let mut ds: Vec<f64> = Vec::new();
        for i in 0..self.num_intervals() {
            let (_, b, d) = self.interval(i);
            if ds.last() == Some(&d) {
                *bps.last_mut().unwrap() = b;
            } else {
                ds.push(d);
                bps.push(b);
            }
        }
        Measure::new(bps, ds).expect("merging preserves validity")
    }
}

/// Builds `μ_n^w`: density `3^n ∏ w_{x_i}` on each of the `2^n` level-`n`
/// Cantor intervals and zero on the gaps between them.
pub fn cantor_approximant(spec: CantorLevel) -> Result<Measure> {
    cantor_approximant_capped(spec, DEFAULT_MAX_CANTOR_LEVEL)
}

pub fn cantor_approximant_capped(spec: CantorLevel, max_level: u32) -> Result<Measure> {
    let n = spec.level;
    if n > max_level || n > 33 {
        return Err(Error::Resource(format!(
            "Cantor level {n} would need 2^{n} intervals (cap: level {max_level})"
        )));
    }
    let (w1, w2) = (spec.weights.w1(), spec.weights.w2());
    // (left numerator over 3^k, mass) for every level-k interval, in order
    let mut cells: Vec<(u64, f64)> = vec![(0, 1.0)];
    for _ in 0..n {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for &(a, m) in &cells {
            next.push((3 * a, m * w1));
            next.push((3 * a + 2, m * w2));
        }
        cells = next;
    }
    let scale = 3u64.pow(n);
    let denom = scale as f64;
    let mut bps = vec![0.0];
    let mut ds = Vec::with_capacity(2 * cells.len());
    let mut cursor = 0u64;
    for &(a, m) in &cells {
        if a > cursor {
            bps.push(a as f64 / denom);
            ds.push(0.0);
        }
        bps.push((a + 1) as f64 / denom);
        ds.push(m * denom);
        cursor = a + 1;
    }
    debug_assert_eq!(cursor, scale);
    Measure::new(bps, ds)
}

/// `sup_t |F_a(t) - F_b(t)|`. Both CDFs are piecewise linear, so the sup is
/// attained on the merged breakpoint grid.
pub fn cdf_sup_distance(a: &Measure, b: &Measure) -> f64 {
    let mut best: f64 = 0.0;
    for &t in a.breakpoints().iter().chain(b.breakpoints()) {
        best = best.max((a.cdf_unchecked(t) - b.cdf_unchecked(t)).abs());
    }
    best
}

/// Largest defect of `μ_n[0,y] = w1 μ_{n-1}[0,3y] + w2 μ_{n-1}[0,3y-2]` over
/// the sample points.
pub fn verify_refinement_identity(spec: CantorLevel, samples: &[f64]) -> Result<f64> {
    if spec.level == 0 {
        return Err(Error::Config("refinement identity needs level >= 1".into()));
    }
    let fine = cantor_approximant(spec)?;
    let coarse = cantor_approximant(CantorLevel::new(spec.weights, spec.level - 1))?;
    let (w1, w2) = (spec.weights.w1(), spec.weights.w2());
    let mut worst: f64 = 0.0;
    for &y in samples {
        Error::check_unit("y", y)?;
        let rhs = w1 * coarse.cdf_extended(3.0 * y) + w2 * coarse.cdf_extended(3.0 * y - 2.0);
        worst = worst.max((fine.cdf_unchecked(y) - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn level(w1: f64, n: u32) -> Measure {
        cantor_approximant(CantorLevel::new(WeightVector::new(w1).unwrap(), n)).unwrap()
    }

    #[test]
    fn level_zero_is_lebesgue() {
        let m = level(0.5, 0);
        assert_eq!(m.breakpoints(), &[0.0, 1.0]);
        assert_eq!(m.densities(), &[1.0]);
        assert_eq!(m, Measure::lebesgue());
    }

    #[test]
    fn level_one_uniform_weights() {
        let m = level(0.5, 1);
        assert_eq!(m.breakpoints(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(m.densities(), &[1.5, 0.0, 1.5]);
    }

    #[test]
    fn level_one_skewed_weights() {
        let m = level(1.0 / 3.0, 1);
        assert_abs_diff_eq!(m.cdf(1.0 / 3.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 - m.cdf(2.0 / 3.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn interval_count_and_lengths() {
        let m = level(0.25, 4);
        let support: Vec<_> = (0..m.num_intervals())
            .map(|i| m.interval(i))
            .filter(|iv| iv.2 > 0.0)
            .collect();
        assert_eq!(support.len(), 16);
        for (a, b, _) in support {
            assert_abs_diff_eq!(b - a, 1.0 / 81.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(Measure::lebesgue().cdf(0.25).unwrap(), 0.25);
        assert_abs_diff_eq!(level(0.5, 1).cdf(1.0 / 3.0).unwrap(), 0.5, epsilon = 1e-15);
        // 3^2 * w1^2 * (1/9) with w1 = 1/3
        assert_abs_diff_eq!(level(1.0 / 3.0, 2).cdf(1.0 / 9.0).unwrap(), 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn cdf_rejects_outside_unit_interval() {
        let m = Measure::lebesgue();
        assert!(matches!(m.cdf(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(m.cdf(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn sup_distance_examples() {
        let m1 = level(0.5, 1);
        assert_eq!(cdf_sup_distance(&m1, &m1), 0.0);
        assert_abs_diff_eq!(
            cdf_sup_distance(&Measure::lebesgue(), &m1),
            1.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn refinement_identity_examples() {
        let w = WeightVector::uniform();
        let d = verify_refinement_identity(CantorLevel::new(w, 1), &[1.0 / 3.0, 1.0]).unwrap();
        assert!(d <= 1e-15);
        let w = WeightVector::new(1.0 / 3.0).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        assert!(verify_refinement_identity(CantorLevel::new(w, 2), &grid).unwrap() <= 1e-12);
        assert!(verify_refinement_identity(CantorLevel::new(w, 0), &grid).is_err());
    }

    #[test]
    fn weights_are_canonicalized() {
        let w = WeightVector::new(0.75).unwrap();
        assert!(w.swapped());
        assert_eq!(w.w1(), 0.25);
        assert_eq!(w.w2(), 0.75);
        assert!(WeightVector::new(0.0).is_err());
        assert!(WeightVector::new(1.0).is_err());
        assert!(WeightVector::new(f64::NAN).is_err());
    }

    #[test]
    fn level_cap_is_a_resource_error() {
        let spec = CantorLevel::new(WeightVector::uniform(), 12);
        assert!(matches!(cantor_approximant_capped(spec, 10), Err(Error::Resource(_))));
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(Measure::new(vec![0.0, 0.5, 1.0], vec![1.0]).is_err());
        assert!(Measure::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Measure::new(vec![0.0, 1.0], vec![2.0]).is_err());
        assert!(Measure::new(vec![0.0, 0.5, 1.0], vec![-1.0, 3.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = level(1.0 / 3.0, 3);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with("{\"breakpoints\":["));
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Measure>(r#"{"breakpoints":[0,1],"densities":[3]}"#).is_err());
    }

    #[test]
    fn normalization_merges_equal_neighbours() {
        let m = Measure::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.normalized(), Measure::lebesgue());
    }
}
