//! Concrete age models of the offloading system and the device costs.

pub mod chains;
pub mod cost;
pub mod reference;
pub mod types;

pub use chains::{
    build_red_chain, build_yg_chain, red_aoi, red_aoi_closed_form, red_chain_unreduced, yg_aoi,
    yg_chain_unreduced, ChainParams, RateSymbol,
};
pub use cost::{
    busy_bracket, busy_fractions, chain_params, class_aoi, cost_finite, cost_meanfield,
    evaluate_finite, evaluate_meanfield, exogenous_rates_finite, exogenous_rates_meanfield,
    local_occupancy, local_power, weighted_aoi, CostBreakdown,
};
pub use reference::{reference_diff, DiffReport, Discrepancy};
pub use types::{
    AoiBreakdown, ClassMap, ExogenousRates, MeanField, Policy, SystemConfig, TaskClass, UeProfile,
};
