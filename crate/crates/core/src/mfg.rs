//! Mean-field equilibrium of the offloading game.
//!
//! The outer loop is a damped fixed-point iteration on the edge-server
//! loading `ρ`; each type's policy is updated by projected coordinate descent
//! against the mean-field cost at the current `ρ`.

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::cost::{cost_finite, cost_meanfield};
use crate::models::types::{ClassMap, MeanField, Policy, SystemConfig, UeProfile};

/// Lower clamp of the local frequency seen by the optimizer.
pub const MU_FLOOR: f64 = 1e-6;

/// Halvings of the step before a coordinate is declared stuck.
const MAX_BACKTRACK: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub eps_rho: f64,
    pub eps_policy: f64,
    pub gamma_mf: f64,
    pub gamma_step: f64,
    pub fd_step: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rng_seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_rho: 1e-6,
            eps_policy: 1e-6,
            gamma_mf: 0.5,
            gamma_step: 1e-2,
            fd_step: 1e-5,
            max_outer: 500,
            max_inner: 200,
            rng_seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| {
            Err(Error::InvalidParameter {
                name,
                value,
                reason,
            })
        };
        for (name, value) in [
            ("eps_rho", self.eps_rho),
            ("eps_policy", self.eps_policy),
            ("gamma_step", self.gamma_step),
            ("fd_step", self.fd_step),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return bad(name, value, "must be positive");
            }
        }
        if !(self.gamma_mf > 0.0 && self.gamma_mf <= 1.0) {
            return bad("gamma_mf", self.gamma_mf, "must lie in (0, 1]");
        }
        if self.max_outer == 0 {
            return bad("max_outer", 0.0, "must be positive");
        }
        if self.max_inner == 0 {
            return bad("max_inner", 0.0, "must be positive");
        }
        Ok(())
    }
}

/// `(p_r, p_y, p_g, μ0)` as a flat coordinate vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyVector(pub [f64; 4]);

impl PolicyVector {
    pub const DIM: usize = 4;

    pub fn to_policy(self) -> Policy {
        let [p_r, p_y, p_g, mu0] = self.0;
        Policy::new(p_r, p_y, p_g, mu0)
    }

    pub fn max_abs_diff(&self, other: &PolicyVector) -> f64 {
        (0..Self::DIM)
            .map(|i| (self[i] - other[i]).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Policy> for PolicyVector {
    fn from(p: Policy) -> Self {
        Self([p.p.red, p.p.yellow, p.p.green, p.mu0])
    }
}

impl From<PolicyVector> for Policy {
    fn from(v: PolicyVector) -> Self {
        v.to_policy()
    }
}

impl Index<usize> for PolicyVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for PolicyVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Feasible interval of coordinate `i`.
pub fn bounds(i: usize, f_max: f64) -> (f64, f64) {
    if i < 3 {
        (0.0, 1.0)
    } else {
        (MU_FLOOR.min(f_max), f_max)
    }
}

pub fn project(x: PolicyVector, f_max: f64) -> PolicyVector {
    let mut out = x;
    for i in 0..PolicyVector::DIM {
        let (lo, hi) = bounds(i, f_max);
        out[i] = x[i].clamp(lo, hi);
    }
    out
}

/// Finite-difference partial derivative of `cost` along coordinate `i`.
/// Central when `x ± h` stays in the box, one-sided otherwise.
pub fn fd_partial<F>(cost: &mut F, x: &PolicyVector, i: usize, h: f64, f_max: f64) -> Result<f64>
where
    F: FnMut(&PolicyVector) -> Result<f64>,
{
    let (lo, hi) = bounds(i, f_max);
    let at = |v: f64| {
        let mut y = *x;
        y[i] = v;
        y
    };
    let xi = x[i];
    let (a, b) = match (xi - h >= lo, xi + h <= hi) {
        (true, true) => (xi - h, xi + h),
        (false, true) => (xi, xi + h),
        (true, false) => (xi - h, xi),
        (false, false) => (lo, hi),
    };
    if b <= a {
        return Ok(0.0);
    }
    Ok((cost(&at(b))? - cost(&at(a))?) / (b - a))
}

/// `‖x − P(x − γ ∇J)‖∞`, the projected gradient in units of one step.
pub fn projected_step_norm(grad: &[f64; 4], x: &PolicyVector, gamma: f64, f_max: f64) -> f64 {
    let mut moved = *x;
    for i in 0..PolicyVector::DIM {
        moved[i] -= gamma * grad[i];
    }
    project(moved, f_max).max_abs_diff(x)
}

pub fn fd_gradient<F>(cost: &mut F, x: &PolicyVector, h: f64, f_max: f64) -> Result<[f64; 4]>
where
    F: FnMut(&PolicyVector) -> Result<f64>,
{
    let mut g = [0.0; 4];
    for (i, gi) in g.iter_mut().enumerate() {
        *gi = fd_partial(cost, x, i, h, f_max)?;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub point: PolicyVector,
    pub cost: f64,
    /// Cost after every accepted coordinate step, starting with the cost at `x0`.
    pub cost_trace: Vec<f64>,
    pub passes: usize,
    pub projected_step_norm: f64,
}

/// Projected coordinate descent on `cost` from `x0`, with backtracking so
/// that no accepted step increases the cost.
pub fn best_response<F>(
    cost: &mut F,
    x0: PolicyVector,
    settings: &SolverSettings,
    f_max: f64,
) -> Result<BestResponse>
where
    F: FnMut(&PolicyVector) -> Result<f64>,
{
    let eps = settings.eps_policy;
    let mut x = project(x0, f_max);
    let mut fx = cost(&x)?;
    let mut cost_trace = vec![fx];
    let mut passes = 0;
    while passes < settings.max_inner {
        passes += 1;
        let mut pass_move = 0.0_f64;
        let mut any_accepted = false;
        for i in 0..PolicyVector::DIM {
            for _ in 0..settings.max_inner {
                let g = fd_partial(cost, &x, i, settings.fd_step, f_max)?;
                let mut step = settings.gamma_step;
                let mut accepted = None;
                for _ in 0..=MAX_BACKTRACK {
                    let mut cand = x;
                    cand[i] -= step * g;
                    cand = project(cand, f_max);
                    if cand[i] == x[i] {
                        break;
                    }
                    let fc = cost(&cand)?;
                    if fc <= fx {
                        accepted = Some((cand, fc));
                        break;
                    }
                    step *= 0.5;
                }
                let Some((cand, fc)) = accepted else { break };
                let moved = (cand[i] - x[i]).abs();
                x = cand;
                fx = fc;
                cost_trace.push(fx);
                any_accepted = true;
                pass_move = pass_move.max(moved);
                if moved <= eps {
                    break;
                }
            }
        }
        if !any_accepted {
            let g = fd_gradient(cost, &x, settings.fd_step, f_max)?;
            let norm = projected_step_norm(&g, &x, settings.gamma_step, f_max);
            if norm > 10.0 * eps {
                return Err(Error::StalledDescent { grad_norm: norm });
            }
            break;
        }
        if pass_move <= eps {
            break;
        }
    }
    let g = fd_gradient(cost, &x, settings.fd_step, f_max)?;
    Ok(BestResponse {
        point: x,
        cost: fx,
        cost_trace,
        passes,
        projected_step_norm: projected_step_norm(&g, &x, settings.gamma_step, f_max),
    })
}

/// Consistency map: `ρ_a = (1/μ) Σ_φ P(φ) λ_{φ,a} (1 − p_{φ,a})`.
pub fn mf_from_policies(policies: &[Policy], profiles: &[UeProfile], es_rate: f64) -> MeanField {
    let total: f64 = profiles.iter().map(|p| p.weight).sum();
    let rho = ClassMap::from_fn(|c| {
        policies
            .iter()
            .zip(profiles)
            .map(|(pol, prof)| prof.weight / total * prof.arrival_rates[c] * pol.offload(c))
            .sum::<f64>()
            / es_rate
    });
    MeanField { rho }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub mean_field: MeanField,
    /// One policy per profile.
    pub policies: Vec<Policy>,
}

impl InitialState {
    /// The same policy for every type, with `ρ` consistent with it.
    pub fn symmetric(config: &SystemConfig, policy: Policy) -> Self {
        let policies = vec![policy; config.profiles.len()];
        Self {
            mean_field: mf_from_policies(&policies, &config.profiles, config.es_rate),
            policies,
        }
    }

    /// Independent uniform draws from each type's feasible box.
    pub fn random(config: &SystemConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policies: Vec<Policy> = config
            .profiles
            .iter()
            .map(|prof| {
                let (lo, hi) = bounds(3, prof.f_max);
                Policy::new(
                    rng.random(),
                    rng.random(),
                    rng.random(),
                    rng.random_range(lo..=hi),
                )
            })
            .collect();
        Self {
            mean_field: mf_from_policies(&policies, &config.profiles, config.es_rate),
            policies,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub rho: MeanField,
    pub policies: Vec<Policy>,
    pub costs: Vec<f64>,
    /// `‖ρ^(k) − ρ^(k−1)‖∞`.
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    /// One policy per profile, in profile order.
    pub policies: Vec<Policy>,
    pub costs: Vec<f64>,
    pub mean_field: MeanField,
    /// Last outer step `‖ρ^(k) − ρ^(k−1)‖∞`.
    pub mf_residual: f64,
    pub outer_iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl EquilibriumResult {
    /// `‖ρ − Ψ2(policies)‖∞`.
    pub fn fixed_point_residual(&self, config: &SystemConfig) -> f64 {
        self.mean_field.sup_distance(&mf_from_policies(
            &self.policies,
            &config.profiles,
            config.es_rate,
        ))
    }
}

fn check_system(config: &SystemConfig) -> Result<()> {
    let bad = |name, value, reason| {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    };
    if config.num_ues == 0 {
        return bad("num_ues", 0.0, "must be positive");
    }
    if !(config.es_rate > 0.0) {
        return bad("es_rate", config.es_rate, "must be positive");
    }
    if config.profiles.is_empty() {
        return bad("profiles", 0.0, "at least one profile is required");
    }
    Ok(())
}

/// Damped fixed-point iteration over the mean field with per-type best
/// responses.
pub fn solve_mfe(
    config: &SystemConfig,
    settings: &SolverSettings,
    init: &InitialState,
) -> Result<EquilibriumResult> {
    settings.validate()?;
    check_system(config)?;
    if init.policies.len() != config.profiles.len() {
        return Err(Error::InvalidParameter {
            name: "policies",
            value: init.policies.len() as f64,
            reason: "need exactly one initial policy per profile",
        });
    }
    let mut rho = init.mean_field;
    let mut policies: Vec<Policy> = init
        .policies
        .iter()
        .zip(&config.profiles)
        .map(|(p, prof)| project(PolicyVector::from(*p), prof.f_max).to_policy())
        .collect();
    let mut costs = vec![f64::NAN; policies.len()];
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=settings.max_outer {
        iterations = k;
        for (t, profile) in config.profiles.iter().enumerate() {
            let current = rho;
            let mut cost = |x: &PolicyVector| {
                let j = cost_meanfield(&x.to_policy(), &current, profile, config)?;
                if j.is_finite() {
                    Ok(j)
                } else {
                    Err(Error::NonFinite {
                        iteration: k,
                        type_id: t,
                        policy: x.0,
                    })
                }
            };
            let br = best_response(&mut cost, policies[t].into(), settings, profile.f_max)?;
            policies[t] = br.point.to_policy();
            costs[t] = br.cost;
        }
        let target = mf_from_policies(&policies, &config.profiles, config.es_rate);
        let g = settings.gamma_mf;
        let next = MeanField {
            rho: ClassMap::from_fn(|c| (1.0 - g) * rho.rho[c] + g * target.rho[c]),
        };
        residual = next.sup_distance(&rho);
        rho = next;
        log::debug!(
            "outer {k}: rho = {:?}, step = {residual:e}",
            rho.rho.to_array()
        );
        trace.push(TraceEntry {
            iteration: k,
            rho,
            policies: policies.clone(),
            costs: costs.clone(),
            step: residual,
        });
        if residual <= settings.eps_rho {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("no convergence after {iterations} outer iterations, last step {residual:e}");
    }
    Ok(EquilibriumResult {
        policies,
        costs,
        mean_field: rho,
        mf_residual: residual,
        outer_iterations: iterations,
        trace,
        converged,
    })
}

/// Every device of the finite population paired with its type's policy.
pub fn deploy(config: &SystemConfig, policies: &[Policy]) -> Vec<(Policy, UeProfile)> {
    config
        .assign_types()
        .into_iter()
        .map(|t| (policies[t], config.profiles[t]))
        .collect()
}

/// Cost reduction available to device `ue` by switching to `deviation`
/// while everyone else keeps `deployment`.
pub fn deviation_gain(
    deployment: &[(Policy, UeProfile)],
    ue: usize,
    deviation: Policy,
    config: &SystemConfig,
) -> Result<f64> {
    let base = cost_finite(deployment, ue, config)?;
    let mut deviated = deployment.to_vec();
    deviated
        .get_mut(ue)
        .ok_or(Error::IndexOutOfRange {
            index: ue,
            len: deployment.len(),
        })?
        .0 = deviation;
    Ok(base - cost_finite(&deviated, ue, config)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploitability {
    /// Per type: finite-population cost at the equilibrium policy.
    pub base_costs: Vec<f64>,
    /// Per type: cost reduction of the best unilateral deviation found.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    /// Largest gap relative to its base cost.
    pub max_normalized_gap: f64,
}

/// Largest finite-population gain one device can get by deviating from the
/// equilibrium while all others keep it. Deviations are found by
/// [`best_response`] on the finite cost, so the figure is a lower bound.
pub fn exploitability(
    result: &EquilibriumResult,
    config: &SystemConfig,
    settings: &SolverSettings,
) -> Result<Exploitability> {
    check_system(config)?;
    let deployment = deploy(config, &result.policies);
    let types = config.assign_types();
    let mut base_costs = Vec::new();
    let mut gaps = Vec::new();
    for (t, profile) in config.profiles.iter().enumerate() {
        let Some(ue) = types.iter().position(|&x| x == t) else {
            base_costs.push(f64::NAN);
            gaps.push(0.0);
            continue;
        };
        let base = cost_finite(&deployment, ue, config)?;
        let mut scratch = deployment.clone();
        let mut cost = |x: &PolicyVector| {
            scratch[ue].0 = x.to_policy();
            cost_finite(&scratch, ue, config)
        };
        let br = best_response(
            &mut cost,
            result.policies[t].into(),
            settings,
            profile.f_max,
        )?;
        base_costs.push(base);
        gaps.push(base - br.cost);
    }
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_normalized_gap = gaps
        .iter()
        .zip(&base_costs)
        .filter(|(_, b)| b.is_finite())
        .map(|(g, b)| g / b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Exploitability {
        base_costs,
        gaps,
        max_gap,
        max_normalized_gap,
    })
}
