//! Asymptotic orders on step-size windows past the pre-asymptotic and
//! roundoff regimes of the fixed acceptance windows.

use lincons::harness::{convergence_study, ExperimentConfig};
use lincons::IterationMode;

fn steps(list: std::ops::RangeInclusive<u32>) -> Vec<String> {
    list.map(|n| format!("T/{}", 1u32 << n)).collect()
}

#[test]
fn gauss2_pair_reaches_order_four() {
    let cfg = ExperimentConfig {
        pair: Some("prk-gauss2".into()),
        h_list: steps(8..=11),
        ..Default::default()
    };
    let slope = convergence_study(&cfg).unwrap().slope("prk").unwrap();
    assert!((slope - 4.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn kepler_explicit_two_updates_reach_order_three() {
    let cfg = ExperimentConfig {
        problem: "kepler:e=0.01".into(),
        predictor: "euler".into(),
        mode: IterationMode::Explicit,
        k: vec![2],
        h_list: steps(10..=13),
        ..Default::default()
    };
    let slope = convergence_study(&cfg).unwrap().slope("k=2").unwrap();
    assert!((slope - 3.0).abs() <= 0.4, "slope {slope}");
}

#[test]
fn kepler_explicit_order_three_at_larger_eccentricity() {
    let cfg = ExperimentConfig {
        problem: "kepler:e=0.6".into(),
        predictor: "euler".into(),
        mode: IterationMode::Explicit,
        k: vec![2],
        h_list: steps(6..=10),
        ..Default::default()
    };
    let slope = convergence_study(&cfg).unwrap().slope("k=2").unwrap();
    assert!((slope - 3.0).abs() <= 0.4, "slope {slope}");
}

#[test]
fn kdv_order_six_above_roundoff() {
    let cfg = ExperimentConfig {
        problem: "kdv:d=16".into(),
        predictor: "cerk".into(),
        k: vec![6],
        h_list: steps(5..=7),
        ..Default::default()
    };
    let slope = convergence_study(&cfg).unwrap().slope("k=6").unwrap();
    assert!((slope - 6.0).abs() <= 0.5, "slope {slope}");
}
