use mecmfg::models::{
    build_red_chain, build_yg_chain, red_aoi, red_aoi_closed_form, yg_aoi, ChainParams,
};
use mecmfg::shs::{moment_residual, solve_aoi, solve_stationary};
use proptest::prelude::*;

fn yg(
    arrival: f64,
    p: f64,
    same: f64,
    high: f64,
    high_local: f64,
    mu0: f64,
    mu: f64,
) -> ChainParams {
    ChainParams {
        arrival,
        local_prob: p,
        same_class: same,
        higher_es: high,
        higher_local: high_local,
        local_rate: mu0,
        es_rate: mu,
    }
}

#[test]
fn red_stationary_law_matches_transient_limit() {
    let spec = build_red_chain(&ChainParams::red(1.0, 0.6, 2.0, 1.0, 5.0)).unwrap();
    let pi = solve_stationary(&spec).unwrap();
    let q = spec.generator();
    let p_t = (q * 1e4).exp();
    for s in 0..spec.num_states {
        let limit = p_t[(0, s)];
        assert!(
            (pi.probabilities()[s] - limit).abs() < 1e-10,
            "state {s}: {} vs {limit}",
            pi.probabilities()[s]
        );
    }
    let rows: f64 = (0..spec.num_states)
        .map(|s| p_t[(spec.num_states - 1, s)])
        .sum();
    assert!((rows - 1.0).abs() < 1e-9);
}

#[test]
fn red_moments_satisfy_balance() {
    let spec = build_red_chain(&ChainParams::red(1.0, 0.6, 2.0, 1.0, 5.0)).unwrap();
    let sol = solve_aoi(&spec).unwrap();
    assert!(moment_residual(&spec, &sol.stationary, &sol.moments) <= 1e-9);
}

#[test]
fn red_interior_fixture() {
    let a = red_aoi(&ChainParams::red(1.0, 0.6, 2.0, 1.0, 5.0)).unwrap();
    let b = red_aoi_closed_form(&ChainParams::red(1.0, 0.6, 2.0, 1.0, 5.0)).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
    assert!((a - 1529.0 / 884.0).abs() < 1e-12, "{a}");
}

#[test]
fn yellow_chain_shape() {
    let spec = build_yg_chain(&yg(3.0, 0.5, 2.0, 1.0, 0.6, 0.7, 10.0)).unwrap();
    assert_eq!(spec.num_states, 7);
    for out in spec.outflow() {
        assert!((out - 17.3).abs() < 1e-12);
    }
}

#[test]
fn yellow_green_moments_nonnegative() {
    let spec = build_yg_chain(&yg(3.0, 0.5, 2.0, 1.0, 0.6, 0.7, 10.0)).unwrap();
    let sol = solve_aoi(&spec).unwrap();
    for s in 0..spec.num_states {
        assert!(sol.moments.row(s).iter().all(|&x| x >= -1e-12));
    }
    assert!(moment_residual(&spec, &sol.stationary, &sol.moments) <= 1e-9);
}

#[test]
fn more_higher_priority_traffic_never_helps() {
    let mut last = 0.0;
    for high in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let a = yg_aoi(&yg(3.0, 0.5, 2.0, high, 0.6, 0.7, 10.0)).unwrap();
        assert!(a >= last - 1e-12, "{high}: {a} < {last}");
        last = a;
    }
}

fn rate() -> impl Strategy<Value = f64> {
    0.1f64..20.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_matches_pipeline(l in rate(), p in 0.0f64..=1.0, lm in rate(), m0 in rate(), m in rate()) {
        let params = ChainParams::red(l, p, lm, m0, m);
        let a = red_aoi_closed_form(&params).unwrap();
        let b = red_aoi(&params).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn yellow_green_without_higher_traffic_is_red(l in rate(), p in 0.0f64..=1.0, le in rate(), m0 in rate(), m in rate()) {
        let a = yg_aoi(&yg(l, p, le, 0.0, 0.0, m0, m)).unwrap();
        let b = red_aoi_closed_form(&ChainParams::red(l, p, le, m0, m)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn age_is_at_least_interarrival(l in rate(), p in 0.0f64..=1.0, le in rate(), h in 0.0f64..20.0, hl in 0.0f64..20.0, m0 in rate(), m in rate()) {
        prop_assert!(red_aoi(&ChainParams::red(l, p, le, m0, m)).unwrap() >= 1.0 / l);
        prop_assert!(yg_aoi(&yg(l, p, le, h, hl, m0, m)).unwrap() >= 1.0 / l);
    }

    #[test]
    fn boundary_reductions(l in rate(), m0 in rate(), m in rate()) {
        let local = red_aoi_closed_form(&ChainParams::red(l, 1.0, 0.0, m0, m)).unwrap();
        let offload = red_aoi_closed_form(&ChainParams::red(l, 0.0, 0.0, m0, m)).unwrap();
        prop_assert!((local - (1.0 / l + 1.0 / m0)).abs() <= 1e-12 * local);
        prop_assert!((offload - (1.0 / l + 1.0 / m)).abs() <= 1e-12 * offload);
    }
}
