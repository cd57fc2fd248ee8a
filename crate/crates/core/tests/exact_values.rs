use pi_stop::exact_values::*;
use pi_stop::pi_process::{LogTime, ProcessState};
use proptest::prelude::*;

fn state(u: f64, n: u64) -> ProcessState {
    ProcessState::new(u, n).unwrap()
}

fn tol() -> Tolerance {
    Tolerance::default()
}

#[test]
fn f_j_examples() {
    assert!((f_j(1, 0.5, &tol()).unwrap() - 2f64.ln()).abs() <= 1e-12);
    let t = Tolerance::new(1e-15, 10_000_000).unwrap();
    assert!((f_j(1, 0.5, &t).unwrap() - 2f64.ln()).abs() < 1e-13);
    for x in [0.1f64, 0.5, 0.9] {
        let expected = -(1.0 - x).ln() - x;
        assert!((f_j(2, x, &t).unwrap() - expected).abs() < 1e-12);
    }
    assert!((f_j(3, 0.5, &t).unwrap() - 0.0681471805599453094).abs() < 1e-13);
    assert!(f_j(1, 1.0, &t).is_err());
    assert!(f_j(0, 0.5, &t).is_err());
}

#[test]
fn horizon_values() {
    for n in [1u64, 2, 17, 300] {
        assert_eq!(pi_record_is_best(state(0.0, n)).unwrap(), 1.0);
        assert_eq!(threshold_rule_value(state(0.0, n), &tol()).unwrap(), 0.0);
    }
    let near = pi_record_is_best(state(-1e-9, 5)).unwrap();
    assert!(near > 1.0 - 1e-7);
}

#[test]
fn n_one_closed_forms_on_grid() {
    for u in [-3.0, -2.0, -1.0, -0.5, -0.1, -1e-3] {
        let lt = LogTime::new(u).unwrap();
        let pi = pi_record_is_best(state(u, 1)).unwrap();
        assert!((pi - pi_one_closed_form(lt)).abs() < 1e-10, "u = {u}");
        let v = threshold_rule_value(state(u, 1), &tol()).unwrap();
        assert!((v - threshold_value_one_closed_form(lt)).abs() < 1e-10, "u = {u}");
        assert!((gap_n1(lt).unwrap() - (pi - v)).abs() < 1e-10, "u = {u}");
    }
    assert!(gap_n1(LogTime::HORIZON).is_err());
}

#[test]
fn twice_at_one_over_e() {
    let pi = pi_record_is_best(state(-1.0, 1)).unwrap();
    let v = threshold_rule_value(state(-1.0, 1), &tol()).unwrap();
    assert!((pi - 2.0 * v).abs() < 1e-12);
}

#[test]
fn large_count_limit() {
    // 40-digit reference values of pi~_200 at t = 0.2, 0.5, 1/e
    let cases = [
        (0.2f64, 0.200802400744436964),
        (0.5, 0.501249984375781167),
        ((-1.0f64).exp(), 0.369043686596366062),
    ];
    for (t, reference) in cases {
        let pi = pi_record_is_best(state(t.ln(), 200)).unwrap();
        assert!((pi - reference).abs() < 1e-12, "t = {t}");
        assert!((pi - t).abs() < 0.01, "t = {t}");
    }
}

#[test]
fn gap_at_one_hundred() {
    let s = state(-1.0, 100);
    let gap = pi_record_is_best(s).unwrap() - threshold_rule_value(s, &tol()).unwrap();
    assert!((gap - 0.00234621422170839352).abs() < 1e-12);
}

#[test]
fn monotone_grid() {
    let ts: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let rows: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| pi_record_is_best_row(LogTime::new(t.ln()).unwrap(), 200))
        .collect();
    for n in 1..=200 {
        for k in 1..ts.len() {
            assert!(rows[k][n] > rows[k - 1][n], "t at n = {n}, k = {k}");
        }
        if n > 1 {
            for row in &rows {
                assert!(row[n] <= row[n - 1], "n = {n}");
            }
        }
    }
}

#[test]
fn truncation_bounds_are_reported() {
    let s = state(-2.0, 30);
    let pi = pi_series(s, &tol()).unwrap();
    assert!(pi.bound <= 1e-12);
    let v = threshold_rule_value_bounded(s, &tol()).unwrap();
    assert!(v.bound <= 1e-12);
    let tight = Tolerance::new(1e-14, 10_000_000).unwrap();
    let w = threshold_rule_value_bounded(s, &tight).unwrap();
    assert!((w.value - v.value).abs() <= v.bound + w.bound + 1e-15);
}

#[test]
fn term_limit_is_an_error() {
    let starved = Tolerance::new(1e-12, 5).unwrap();
    assert!(threshold_rule_value(state(-3.0, 50), &starved).is_err());
    assert!(Tolerance::new(0.0, 10).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_and_quadrature_agree(u in -4.0f64..-1e-4, n in 1u64..250) {
        let s = state(u, n);
        let series = pi_series(s, &tol()).unwrap().value;
        let quad = pi_quadrature(s, &tol()).unwrap();
        prop_assert!((series - quad).abs() <= DUAL_ROUTE_TOLERANCE, "{} vs {}", series, quad);
        let row = pi_record_is_best_row(LogTime::new(u).unwrap(), n as usize);
        prop_assert!((row[n as usize] - series).abs() <= DUAL_ROUTE_TOLERANCE);
    }

    #[test]
    fn probabilities_in_unit_interval(u in -5.0f64..0.0, n in 1u64..300) {
        let s = state(u, n);
        let pi = pi_record_is_best(s).unwrap();
        let v = threshold_rule_value(s, &tol()).unwrap();
        prop_assert!((0.0..=1.0).contains(&pi));
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn record_beats_waiting_at_one_over_e(n in 1u64..400) {
        let s = state(-1.0, n);
        prop_assert!(pi_record_is_best(s).unwrap() > threshold_rule_value(s, &tol()).unwrap());
    }

    #[test]
    fn increasing_in_time(u in -4.0f64..-0.01, du in 1e-3f64..0.5, n in 1u64..200) {
        let hi = (u + du).min(0.0);
        let a = pi_record_is_best(state(u, n)).unwrap();
        let b = pi_record_is_best(state(hi, n)).unwrap();
        prop_assert!(b > a);
    }
}
