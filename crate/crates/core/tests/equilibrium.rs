use mecmfg::mfg::{
    best_response, deploy, deviation_gain, exploitability, fd_partial, mf_from_policies, solve_mfe,
    InitialState, PolicyVector, SolverSettings,
};
use mecmfg::models::{
    busy_bracket, busy_fractions, cost_finite, cost_meanfield, evaluate_finite, evaluate_meanfield,
    ClassMap, MeanField, Policy, SystemConfig, UeProfile,
};
use proptest::prelude::*;

fn profile() -> UeProfile {
    UeProfile {
        arrival_rates: ClassMap::new(1.0, 3.0, 6.0),
        eta: 1.0,
        f_max: 2.0,
        weight: 1.0,
    }
}

fn system(num_ues: usize, es_rate: f64) -> SystemConfig {
    SystemConfig {
        num_ues,
        es_rate,
        scalarization: 10.0,
        aoi_weights: ClassMap::new(20.0, 5.0, 2.0),
        profiles: vec![profile()],
    }
}

fn start() -> Policy {
    Policy::new(0.6, 0.5, 0.6, 0.7)
}

fn in_box(p: &Policy, f_max: f64) -> bool {
    p.p.to_array().iter().all(|x| (0.0..=1.0).contains(x)) && p.mu0 >= 1e-6 && p.mu0 <= f_max
}

proptest! {
    #[test]
    fn power_bracket_is_a_probability(
        pr in 0.0f64..=1.0, py in 0.0f64..=1.0, pg in 0.0f64..=1.0, mu0 in 0.0f64..=4.0,
        lr in 0.1f64..20.0, ly in 0.1f64..20.0, lg in 0.1f64..20.0,
    ) {
        let prof = UeProfile { arrival_rates: ClassMap::new(lr, ly, lg), ..profile() };
        let b = busy_bracket(&busy_fractions(&Policy::new(pr, py, pg, mu0), &prof));
        prop_assert!((0.0..=1.0).contains(&b));
    }
}

#[test]
fn mean_field_matches_symmetric_population() {
    for n in [10, 100, 1000] {
        let sys = system(n, n as f64);
        let rho = mf_from_policies(&[start()], &sys.profiles, sys.es_rate);
        let finite = evaluate_finite(&deploy(&sys, &[start()]), 0, &sys).unwrap();
        let mf = evaluate_meanfield(&start(), &rho, &profile(), &sys).unwrap();
        assert!(
            (finite.cost - mf.cost).abs() <= 1e-12 * finite.cost,
            "N={n}"
        );
    }
}

#[test]
fn local_rate_derivative_matches_five_point_stencil() {
    let sys = system(10, 10.0);
    let rho = mf_from_policies(&[start()], &sys.profiles, sys.es_rate);
    let mut cost = |x: &PolicyVector| cost_meanfield(&x.to_policy(), &rho, &profile(), &sys);
    let x = PolicyVector::from(start());
    let d = fd_partial(&mut cost, &x, 3, 1e-5, 2.0).unwrap();
    let h = 1e-3;
    let at = |dx: f64| {
        let mut y = x;
        y[3] += dx;
        cost_meanfield(&y.to_policy(), &rho, &profile(), &sys).unwrap()
    };
    let stencil = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
    assert!(
        (d - stencil).abs() <= 1e-4 * stencil.abs(),
        "{d} vs {stencil}"
    );
}

#[test]
fn all_local_without_edge_traffic_matches_single_device() {
    let sys = system(10, 10.0);
    let policy = Policy::new(1.0, 1.0, 1.0, 2.0);
    let isolated = evaluate_finite(
        &[(policy, profile())],
        0,
        &SystemConfig {
            num_ues: 1,
            ..sys.clone()
        },
    )
    .unwrap();
    let mf = evaluate_meanfield(&policy, &MeanField::default(), &profile(), &sys).unwrap();
    assert!((isolated.cost - mf.cost).abs() <= 1e-12 * mf.cost);
    assert!((mf.aoi.per_class.red - 1.5).abs() < 1e-12);
}

#[test]
fn solve_is_deterministic_and_feasible() {
    let sys = system(10, 10.0);
    let s = SolverSettings::default();
    let init = InitialState::symmetric(&sys, start());
    let a = solve_mfe(&sys, &s, &init).unwrap();
    let b = solve_mfe(&sys, &s, &init).unwrap();
    assert_eq!(a, b);
    assert!(a.converged);
    for entry in &a.trace {
        assert!(entry.policies.iter().all(|p| in_box(p, 2.0)));
    }
    assert!(a.fixed_point_residual(&sys) <= 2.0 * s.eps_rho / s.gamma_mf);
}

#[test]
fn inner_descent_never_increases_cost() {
    let sys = system(10, 10.0);
    let rho = mf_from_policies(&[start()], &sys.profiles, sys.es_rate);
    let mut cost = |x: &PolicyVector| cost_meanfield(&x.to_policy(), &rho, &profile(), &sys);
    let br = best_response(&mut cost, start().into(), &SolverSettings::default(), 2.0).unwrap();
    for w in br.cost_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn undamped_restart_at_equilibrium_stops_at_once() {
    let sys = system(10, 10.0);
    let s = SolverSettings::default();
    let eq = solve_mfe(&sys, &s, &InitialState::symmetric(&sys, start())).unwrap();
    let again = solve_mfe(
        &sys,
        &SolverSettings { gamma_mf: 1.0, ..s },
        &InitialState {
            mean_field: eq.mean_field,
            policies: eq.policies.clone(),
        },
    )
    .unwrap();
    assert!(again.converged);
    assert_eq!(again.outer_iterations, 1);
}

#[test]
fn random_starts_reach_the_same_mean_field() {
    let sys = system(10, 10.0);
    let s = SolverSettings::default();
    let fields: Vec<MeanField> = (0..5)
        .map(|seed| {
            let r = solve_mfe(&sys, &s, &InitialState::random(&sys, seed)).unwrap();
            assert!(r.converged, "start {seed} did not converge");
            r.mean_field
        })
        .collect();
    for f in &fields[1..] {
        let d = f.sup_distance(&fields[0]);
        assert!(
            d <= 1e-2,
            "starts diverge: {:?} vs {:?} ({d})",
            f.rho,
            fields[0].rho
        );
    }
}

/// Own red and yellow offloads count as higher-priority edge traffic, so only
/// the green and local-rate partials coincide.
#[test]
fn single_device_gap_comes_from_own_priority_traffic() {
    let sys = system(1, 1.0);
    let s = SolverSettings::default();
    let eq = solve_mfe(&sys, &s, &InitialState::symmetric(&sys, start())).unwrap();
    assert!(eq.converged);
    let rho = eq.mean_field;
    let x = PolicyVector::from(eq.policies[0]);
    let mut mf = |x: &PolicyVector| cost_meanfield(&x.to_policy(), &rho, &profile(), &sys);
    let mut fin = |x: &PolicyVector| cost_finite(&[(x.to_policy(), profile())], 0, &sys);
    for i in [2, 3] {
        let a = fd_partial(&mut mf, &x, i, 1e-5, 2.0).unwrap();
        let b = fd_partial(&mut fin, &x, i, 1e-5, 2.0).unwrap();
        assert!(
            (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
            "coordinate {i}: {a} vs {b}"
        );
    }
    let ex = exploitability(&eq, &sys, &s).unwrap();
    assert!(ex.max_gap >= 0.0);
    assert!(ex.max_normalized_gap < 1e-3, "{ex:?}");
}

#[test]
fn deviating_to_own_policy_gains_nothing() {
    let sys = system(10, 10.0);
    let deployment = deploy(&sys, &[start()]);
    assert_eq!(deviation_gain(&deployment, 3, start(), &sys).unwrap(), 0.0);
}
