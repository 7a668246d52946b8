//! Power, exogenous rates, weighted age and the per-device costs.

use serde::{Deserialize, Serialize};

use super::chains::{red_aoi_closed_form, yg_aoi, ChainParams};
use super::types::{
    AoiBreakdown, ClassMap, ExogenousRates, MeanField, Policy, SystemConfig, TaskClass, UeProfile,
};
use crate::error::{Error, Result};

/// Per-class busy fraction `t_a = λ_a p_a / (λ_a p_a + μ0)`, with `0/0 := 0`.
pub fn busy_fractions(policy: &Policy, profile: &UeProfile) -> ClassMap<f64> {
    ClassMap::from_fn(|c| {
        let load = profile.arrival_rates[c] * policy.p[c];
        if load == 0.0 {
            0.0
        } else {
            load / (load + policy.mu0)
        }
    })
}

/// Exact long-run fraction of time the local processor serves each class
/// when a lower-priority arrival is turned away by a busy processor. With
/// `S_a` the local load of classes at or above `a`, the processor holds such
/// a class a fraction `S_a / (S_a + μ0)` of the time.
pub fn local_occupancy(policy: &Policy, profile: &UeProfile) -> ClassMap<f64> {
    let mut cumulative = 0.0;
    let mut below = 0.0;
    ClassMap::from_fn(|c| {
        cumulative += profile.arrival_rates[c] * policy.p[c];
        let held = if cumulative == 0.0 {
            0.0
        } else {
            cumulative / (cumulative + policy.mu0)
        };
        let t = held - below;
        below = held;
        t
    })
}

/// `t_r + (1 - t_r) t_y + (1 - t_r)(1 - t_y) t_g`.
pub fn busy_bracket(t: &ClassMap<f64>) -> f64 {
    t.red + (1.0 - t.red) * t.yellow + (1.0 - t.red) * (1.0 - t.yellow) * t.green
}

pub fn local_power(policy: &Policy, profile: &UeProfile) -> f64 {
    busy_bracket(&busy_fractions(policy, profile)) * profile.eta * policy.mu0.powi(3)
}

fn own_high_local(policy: &Policy, profile: &UeProfile) -> ClassMap<f64> {
    let local = |c: TaskClass| profile.arrival_rates[c] * policy.p[c];
    ClassMap::new(
        0.0,
        local(TaskClass::Red),
        local(TaskClass::Red) + local(TaskClass::Yellow),
    )
}

/// Exogenous rates of device `self_index` in a finite population.
pub fn exogenous_rates_finite(
    all: &[(Policy, UeProfile)],
    self_index: usize,
) -> Result<ExogenousRates> {
    let (own_policy, own_profile) = all.get(self_index).ok_or(Error::IndexOutOfRange {
        index: self_index,
        len: all.len(),
    })?;
    let offloaded = |(policy, profile): &(Policy, UeProfile), c: TaskClass| {
        profile.arrival_rates[c] * policy.offload(c)
    };
    let mut lambda_minus = ClassMap::splat(0.0);
    let mut total = ClassMap::splat(0.0);
    for (j, ue) in all.iter().enumerate() {
        for c in TaskClass::ALL {
            let r = offloaded(ue, c);
            total[c] += r;
            if j != self_index {
                lambda_minus[c] += r;
            }
        }
    }
    Ok(ExogenousRates {
        lambda_minus,
        high_total: ClassMap::new(0.0, total.red, total.red + total.yellow),
        high_local: own_high_local(own_policy, own_profile),
    })
}

/// Exogenous rates under the mean-field substitution
/// `λ_{-a} ≈ (N - 1) μ ρ_a`, `λ^a ≈ N μ ρ_a`.
pub fn exogenous_rates_meanfield(
    rho: &MeanField,
    num_ues: usize,
    es_rate: f64,
    policy: &Policy,
    profile: &UeProfile,
) -> ExogenousRates {
    let n = num_ues as f64;
    let r = &rho.rho;
    ExogenousRates {
        lambda_minus: r.map(|_, x| (n - 1.0) * es_rate * x),
        high_total: ClassMap::new(0.0, n * es_rate * r.red, n * es_rate * (r.red + r.yellow)),
        high_local: own_high_local(policy, profile),
    }
}

/// Chain parameters for class `c` of one device.
pub fn chain_params(
    c: TaskClass,
    rates: &ExogenousRates,
    policy: &Policy,
    profile: &UeProfile,
    es_rate: f64,
) -> ChainParams {
    ChainParams {
        arrival: profile.arrival_rates[c],
        local_prob: policy.p[c],
        same_class: rates.lambda_minus[c],
        higher_es: if c == TaskClass::Red {
            0.0
        } else {
            rates.high_total[c]
        },
        higher_local: if c == TaskClass::Red {
            0.0
        } else {
            rates.high_local[c]
        },
        local_rate: policy.mu0,
        es_rate,
    }
}

pub fn class_aoi(c: TaskClass, params: &ChainParams) -> Result<f64> {
    match c {
        TaskClass::Red => red_aoi_closed_form(params),
        TaskClass::Yellow | TaskClass::Green => yg_aoi(params),
    }
}

pub fn weighted_aoi(
    rates: &ExogenousRates,
    policy: &Policy,
    profile: &UeProfile,
    config: &SystemConfig,
) -> Result<AoiBreakdown> {
    let mut per_class = ClassMap::splat(0.0);
    for c in TaskClass::ALL {
        per_class[c] = class_aoi(c, &chain_params(c, rates, policy, profile, config.es_rate))?;
    }
    let weighted = TaskClass::ALL
        .iter()
        .map(|&c| config.aoi_weights[c] * per_class[c])
        .sum();
    Ok(AoiBreakdown {
        per_class,
        weighted,
    })
}

/// Cost together with its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub power: f64,
    pub aoi: AoiBreakdown,
    pub cost: f64,
}

fn combine(power: f64, aoi: AoiBreakdown, config: &SystemConfig) -> CostBreakdown {
    CostBreakdown {
        power,
        aoi,
        cost: power + config.scalarization * aoi.weighted,
    }
}

pub fn evaluate_finite(
    all: &[(Policy, UeProfile)],
    self_index: usize,
    config: &SystemConfig,
) -> Result<CostBreakdown> {
    let rates = exogenous_rates_finite(all, self_index)?;
    let (policy, profile) = &all[self_index];
    let aoi = weighted_aoi(&rates, policy, profile, config)?;
    Ok(combine(local_power(policy, profile), aoi, config))
}

/// Finite-population cost `J_i = P_i + V Δ_i`.
pub fn cost_finite(
    all: &[(Policy, UeProfile)],
    self_index: usize,
    config: &SystemConfig,
) -> Result<f64> {
    Ok(evaluate_finite(all, self_index, config)?.cost)
}

pub fn evaluate_meanfield(
    policy: &Policy,
    rho: &MeanField,
    profile: &UeProfile,
    config: &SystemConfig,
) -> Result<CostBreakdown> {
    let rates = exogenous_rates_meanfield(rho, config.num_ues, config.es_rate, policy, profile);
    let aoi = weighted_aoi(&rates, policy, profile, config)?;
    Ok(combine(local_power(policy, profile), aoi, config))
}

/// Generic-device cost against a fixed mean field.
pub fn cost_meanfield(
    policy: &Policy,
    rho: &MeanField,
    profile: &UeProfile,
    config: &SystemConfig,
) -> Result<f64> {
    Ok(evaluate_meanfield(policy, rho, profile, config)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> UeProfile {
        UeProfile {
            arrival_rates: ClassMap::new(1.0, 3.0, 6.0),
            eta: 1.0,
            f_max: 2.0,
            weight: 1.0,
        }
    }

    #[test]
    fn busy_fraction_examples() {
        let t = busy_fractions(
            &Policy::new(0.6, 0.0, 0.0, 1.0),
            &UeProfile {
                arrival_rates: ClassMap::new(1.0, 1.0, 1.0),
                ..profile()
            },
        );
        assert!((t.red - 0.375).abs() < 1e-15);
        assert_eq!(
            busy_fractions(&Policy::new(0.0, 0.0, 0.0, 1.0), &profile()),
            ClassMap::splat(0.0)
        );
        assert_eq!(
            busy_fractions(&Policy::new(0.5, 0.0, 0.0, 0.0), &profile()).red,
            1.0
        );
    }

    #[test]
    fn occupancy_matches_formula_for_red_only() {
        let policy = Policy::new(0.6, 0.5, 0.6, 0.7);
        let occ = local_occupancy(&policy, &profile());
        let t = busy_fractions(&policy, &profile());
        assert!((occ.red - t.red).abs() < 1e-15);
        let total: f64 = occ.to_array().iter().sum();
        assert!((total - 5.7 / 6.4).abs() < 1e-15);
        assert!(occ.yellow < t.yellow);
    }

    #[test]
    fn power_examples() {
        assert_eq!(
            local_power(&Policy::new(0.6, 0.5, 0.6, 0.0), &profile()),
            0.0
        );
        assert_eq!(
            local_power(&Policy::new(0.0, 0.0, 0.0, 1.5), &profile()),
            0.0
        );
        let t = ClassMap::new(0.6 / 1.3, 1.5 / 2.2, 3.6 / 4.3);
        let expected = busy_bracket(&t) * 0.343;
        let got = local_power(&Policy::new(0.6, 0.5, 0.6, 0.7), &profile());
        assert!((got - expected).abs() < 1e-15);
        // 1 - (0.7/1.3)(0.7/2.2)(0.7/4.3), times 0.7^3.
        assert!((got - 0.333_433_485_119_531_6).abs() < 1e-12, "{got}");
    }

    #[test]
    fn finite_rates_two_identical_ues() {
        let ue = (
            Policy::new(0.6, 0.5, 0.6, 0.7),
            UeProfile {
                arrival_rates: ClassMap::new(1.0, 3.0, 6.0),
                ..profile()
            },
        );
        let r = exogenous_rates_finite(&[ue, ue], 0).unwrap();
        assert!((r.lambda_minus.red - 0.4).abs() < 1e-15);
        assert!((r.high_total.yellow - 0.8).abs() < 1e-15);
        assert!((r.high_total.green - (0.8 + 3.0)).abs() < 1e-15);
        assert!((r.high_local.yellow - 0.6).abs() < 1e-15);
        assert!((r.high_local.green - 2.1).abs() < 1e-15);
        let single = exogenous_rates_finite(&[ue], 0).unwrap();
        assert_eq!(single.lambda_minus, ClassMap::splat(0.0));
        assert_eq!(
            exogenous_rates_finite(&[ue], 1).unwrap_err(),
            Error::IndexOutOfRange { index: 1, len: 1 }
        );
    }

    #[test]
    fn meanfield_rates() {
        let policy = Policy::new(0.6, 0.5, 0.6, 0.7);
        let zero = exogenous_rates_meanfield(&MeanField::default(), 10, 10.0, &policy, &profile());
        assert_eq!(zero.lambda_minus, ClassMap::splat(0.0));
        assert_eq!(zero.high_total, ClassMap::splat(0.0));
        let r = exogenous_rates_meanfield(
            &MeanField::new(0.04, 0.0, 0.0),
            10,
            10.0,
            &policy,
            &profile(),
        );
        assert!((r.lambda_minus.red - 3.6).abs() < 1e-12);
        assert!((r.high_total.yellow - 4.0).abs() < 1e-12);
    }

    fn config() -> SystemConfig {
        SystemConfig {
            num_ues: 2,
            es_rate: 10.0,
            scalarization: 10.0,
            aoi_weights: ClassMap::new(20.0, 5.0, 2.0),
            profiles: vec![profile()],
        }
    }

    #[test]
    fn weights_select_and_scale() {
        let policy = Policy::new(0.6, 0.5, 0.6, 0.7);
        let rates = exogenous_rates_finite(&[(policy, profile()), (policy, profile())], 0).unwrap();
        let mut cfg = config();
        cfg.aoi_weights = ClassMap::new(1.0, 0.0, 0.0);
        let b = weighted_aoi(&rates, &policy, &profile(), &cfg).unwrap();
        assert_eq!(b.weighted, b.per_class.red);
        let base = weighted_aoi(&rates, &policy, &profile(), &config()).unwrap();
        cfg.aoi_weights = ClassMap::new(60.0, 15.0, 6.0);
        let scaled = weighted_aoi(&rates, &policy, &profile(), &cfg).unwrap();
        assert_eq!(scaled.per_class, base.per_class);
        assert!((scaled.weighted - 3.0 * base.weighted).abs() < 1e-12 * scaled.weighted);
    }

    #[test]
    fn zero_scalarization_is_power_and_symmetry() {
        let policy = Policy::new(0.6, 0.5, 0.6, 0.7);
        let all = [(policy, profile()), (policy, profile())];
        let mut cfg = config();
        cfg.scalarization = 0.0;
        assert_eq!(
            cost_finite(&all, 0, &cfg).unwrap(),
            local_power(&policy, &profile())
        );
        let cfg = config();
        assert_eq!(
            cost_finite(&all, 0, &cfg).unwrap(),
            cost_finite(&all, 1, &cfg).unwrap()
        );
    }
}
