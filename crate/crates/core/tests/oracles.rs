#![allow(clippy::excessive_precision)]

//! Comparisons against values computed independently of the series code:
//! closed forms, Gauss-Legendre quadrature, finite differences, and exact
//! per-piece transfer matrices of the first-order system evaluated in
//! 40-digit arithmetic (frozen below).

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use krein_core::measures::{cantor_approximant, CantorLevel, Measure, WeightVector};
use krein_core::series::{build_table, TrigTable};
use krein_core::spectrum::{fem_oracle, find_eigenvalues, solve, Boundary};

fn level(w1: f64, n: u32) -> Measure {
    cantor_approximant(CantorLevel::new(WeightVector::new(w1).unwrap(), n)).unwrap()
}

fn gl(n: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(n).unwrap())
}

/// `∫ f dμ` piece by piece.
fn integrate_mu(mu: &Measure, nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let rule = gl(nodes);
    (0..mu.num_intervals())
        .map(|i| {
            let (a, b, d) = mu.interval(i);
            if d == 0.0 {
                0.0
            } else {
                d * rule.integrate(a, b, &f)
            }
        })
        .sum()
}

const MU1_SINP_2: f64 = 0.691_298_334_106_581_133_6;
const MU1_SINQ_2: f64 = 1.127_532_222_737_720_755_7;
const MU1_COSQ_1: f64 = 0.536_022_801_406_544_677_7;
const MU1_SINP_PRIME_3: f64 = -1.603_172_307_581_101_561_7;
const MU1_NORM_SQ_1: f64 = 0.693_811_310_931_181_490_1;

const MU2_NEUMANN: [f64; 6] = [
    7.067_983_952_703_687_719,
    41.747_672_966_222_688_97,
    58.801_423_799_770_453_42,
    355.305_758_439_216_910_3,
    374.931_154_193_875_914_1,
    477.928_811_464_934_509_2,
];
const MU2_DIRICHLET: [f64; 6] = [
    14.392_726_579_549_359_23,
    34.639_770_288_936_965_88,
    139.369_475_112_957_753_7,
    145.425_141_587_134_450_1,
    417.876_632_610_658_523_5,
    458.734_816_015_548_392_8,
];
const MU2_THIRD_NEUMANN: [f64; 3] = [7.707_428_559_104_092_333, 44.537_738_282_766_658_19, 80.028_661_206_720_862_01];
const MU2_THIRD_DIRICHLET: [f64; 3] = [15.792_340_152_319_363_61, 37.360_642_908_988_145_30, 90.480_673_946_134_883_84];

#[test]
fn q2_at_one_matches_double_quadrature() {
    let mu = level(0.5, 1);
    let t = build_table(&mu, 2).unwrap();
    // q_2(1) = ∫_0^1 ∫_0^t dr dμ(t)
    let inner = |t: f64| gl(8).integrate(0.0, t, |_| 1.0);
    let oracle = integrate_mu(&mu, 16, inner);
    assert!((t.q_one(2) - oracle).abs() < 1e-10, "{} vs {oracle}", t.q_one(2));
    assert!((oracle - 0.5).abs() < 1e-14);
}

#[test]
fn trig_values_match_transfer_matrices() {
    let mu = level(0.5, 1);
    let t = TrigTable::for_range(&mu, 4.0).unwrap();
    assert!((t.sinp(2.0).unwrap().value - MU1_SINP_2).abs() < 1e-9);
    assert!((t.sinq(2.0).unwrap().value - MU1_SINQ_2).abs() < 1e-9);
    assert!((t.cosq(1.0).unwrap().value - MU1_COSQ_1).abs() < 1e-9);
    assert!((t.cosp(1.0).unwrap().value - MU1_COSQ_1).abs() < 1e-9);
    assert!((t.sinp_prime(3.0).unwrap().value - MU1_SINP_PRIME_3).abs() < 1e-9);
}

#[test]
fn derivatives_match_central_differences() {
    let mu = level(0.5, 1);
    let t = TrigTable::for_range(&mu, 10.0).unwrap();
    let h = 1e-5;
    // O(h²) truncation plus cancellation of ~1e-16 / 1e-5
    assert!((t.sinp_prime(3.0).unwrap().value - (t.sinp(3.0 + h).unwrap().value - t.sinp(3.0 - h).unwrap().value) / (2.0 * h)).abs() < 1e-7);
    for k in 0..=18 {
        let z = 0.5 * k as f64;
        for (f, d) in [
            (TrigTable::sinp as fn(&TrigTable, f64) -> _, TrigTable::sinp_prime as fn(&TrigTable, f64) -> _),
            (TrigTable::sinq, TrigTable::sinq_prime),
            (TrigTable::cosp, TrigTable::cosp_prime),
            (TrigTable::cosq, TrigTable::cosq_prime),
        ] {
            let fd = (f(&t, z + h).unwrap().value - f(&t, z - h).unwrap().value) / (2.0 * h);
            let exact = d(&t, z).unwrap().value;
            assert!((fd - exact).abs() < 1e-6, "z = {z}: {fd} vs {exact}");
        }
    }
}

#[test]
fn lebesgue_eigenfunctions_are_cosines_and_sines() {
    let mu = Measure::lebesgue();
    let n = solve(&mu, Boundary::Neumann, 6, 1e-13).unwrap();
    let d = solve(&mu, Boundary::Dirichlet, 5, 1e-13).unwrap();
    for m in 1..=5 {
        let fn_ = n.eigenfunction(m).unwrap();
        let fd = d.eigenfunction(m).unwrap();
        for j in 0..=200 {
            let x = j as f64 / 200.0;
            let k = m as f64 * PI;
            assert!((fn_.eval(x).unwrap() - (k * x).cos()).abs() < 1e-9);
            assert!((fd.eval(x).unwrap() - (k * x).sin()).abs() < 1e-9);
        }
    }
}

#[test]
fn level_two_spectra_match_transfer_matrix_roots() {
    let mu = level(0.5, 2);
    let n = solve(&mu, Boundary::Neumann, 7, 1e-12).unwrap();
    for (r, e) in n.records()[1..].iter().zip(MU2_NEUMANN) {
        assert!((r.lambda - e).abs() < 1e-10 * e, "{} vs {e}", r.lambda);
    }
    let d = solve(&mu, Boundary::Dirichlet, 6, 1e-12).unwrap();
    for (r, e) in d.records().iter().zip(MU2_DIRICHLET) {
        assert!((r.lambda - e).abs() < 1e-10 * e, "{} vs {e}", r.lambda);
    }
    let mu = level(1.0 / 3.0, 2);
    let n = solve(&mu, Boundary::Neumann, 4, 1e-12).unwrap();
    for (r, e) in n.records()[1..].iter().zip(MU2_THIRD_NEUMANN) {
        assert!((r.lambda - e).abs() < 1e-10 * e);
    }
    let d = solve(&mu, Boundary::Dirichlet, 3, 1e-12).unwrap();
    for (r, e) in d.records().iter().zip(MU2_THIRD_DIRICHLET) {
        assert!((r.lambda - e).abs() < 1e-10 * e);
    }
}

#[test]
fn level_two_neumann_agrees_with_fem() {
    let mu = level(0.5, 2);
    let s = solve(&mu, Boundary::Neumann, 6, 1e-10).unwrap();
    let fem = fem_oracle(&mu, 1.0 / 2187.0, 6, Boundary::Neumann).unwrap();
    assert!(fem[0].abs() < 1e-10);
    for (r, f) in s.records()[1..].iter().zip(&fem[1..]) {
        assert!((r.lambda - f).abs() <= 1e-4 * r.lambda, "{} vs {f}", r.lambda);
    }
}

#[test]
fn fem_brackets_series_within_refinement_estimate() {
    let mu = level(0.5, 1);
    let s = solve(&mu, Boundary::Neumann, 3, 1e-12).unwrap();
    let fine = fem_oracle(&mu, 1.0 / 729.0, 3, Boundary::Neumann).unwrap();
    let coarse = fem_oracle(&mu, 1.0 / 243.0, 3, Boundary::Neumann).unwrap();
    for k in 1..3 {
        let lam = s.records()[k].lambda;
        // Ritz values approach from above at second order in h
        let estimate = (coarse[k] - fine[k]) / 8.0;
        assert!(fine[k] >= lam);
        assert!(fine[k] - lam <= 2.0 * estimate, "{} {lam} {estimate}", fine[k]);
    }
}

#[test]
fn lebesgue_fem_is_second_order() {
    let fem = fem_oracle(&Measure::lebesgue(), 1.0 / 512.0, 3, Boundary::Dirichlet).unwrap();
    for (k, v) in fem.iter().enumerate() {
        let e = ((k + 1) as f64 * PI).powi(2);
        assert!((v - e).abs() / e < 1e-3);
    }
}

#[test]
fn norm_identity_matches_quadrature() {
    let mu = level(0.5, 1);
    let s = solve(&mu, Boundary::Neumann, 4, 1e-12).unwrap();
    let ef = s.eigenfunction(1).unwrap();
    let norm = ef.l2_norm().unwrap();
    assert!((norm * norm - MU1_NORM_SQ_1).abs() < 1e-10);
    let quad = integrate_mu(&mu, 40, |x| ef.eval(x).unwrap().powi(2));
    assert!((norm * norm - quad).abs() < 1e-7 * quad);
    assert!((norm - 0.5f64.sqrt()).abs() > 1e-3);
}

#[test]
fn dirichlet_boundary_condition_at_computed_root() {
    let mu = level(0.5, 1);
    let tol = 1e-12;
    let s = solve(&mu, Boundary::Dirichlet, 3, tol).unwrap();
    for r in s.records() {
        let ef = s.eigenfunction(r.index).unwrap();
        assert_eq!(ef.eval(0.0).unwrap(), 0.0);
        let slope = s.table().sinq_prime(r.z).unwrap().value.abs();
        assert!(ef.eval(1.0).unwrap().abs() <= tol * slope + 1e-14);
        let sq = s.table().sq_eval(r.z, 1.0).unwrap();
        assert!(sq.value.abs() <= tol * slope + sq.certificate.total() + 1e-14);
    }
}

#[test]
fn zero_counts_on_level_two() {
    let mu = level(0.5, 2);
    let s = solve(&mu, Boundary::Neumann, 7, 1e-12).unwrap();
    assert_eq!(s.eigenfunction(4).unwrap().count_zeros(16).unwrap(), 4);
}

#[test]
fn fixed_order_table_reports_needed_order() {
    let mu = level(0.5, 2);
    let table = Arc::new(build_table(&mu, 6).unwrap());
    let opts = krein_core::spectrum::RootOptions {
        allow_growth: false,
        ..Default::default()
    };
    let err = krein_core::spectrum::find_eigenvalues_with(table.clone(), Boundary::Neumann, 6, &opts).unwrap_err();
    match err {
        krein_core::Error::OrderTooLow { order, needed, .. } => {
            assert_eq!(order, 6);
            assert!(needed > 6);
        }
        other => panic!("unexpected {other:?}"),
    }
    // with growth allowed the same table suffices as a starting point
    let s = find_eigenvalues(table, Boundary::Neumann, 6, 1e-12).unwrap();
    assert!(s.table().order() > 6);
}
