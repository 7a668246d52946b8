//! The two Markov chains that describe one device's age process.
//!
//! States are named by what the local processor (server 1) and the edge
//! server (server 2) hold, from the point of view of one task class of one
//! device. Idle servers are modelled as serving a fake packet whose age equals
//! that of the packet that just left, so the state space stays finite.
//!
//! Red chain:
//!
//! | state | local        | edge         |
//! |-------|--------------|--------------|
//! | s1    | freshest     | 2nd freshest |
//! | s2    | 2nd freshest | freshest     |
//! | s3    | freshest     | class 2      |
//!
//! Yellow/green chain adds higher-priority ("class h") occupancy:
//!
//! | state | local        | edge         |
//! |-------|--------------|--------------|
//! | s1    | freshest     | 2nd freshest |
//! | s2    | 2nd freshest | freshest     |
//! | s3    | freshest     | class h      |
//! | s4    | freshest     | class 2      |
//! | s5    | class h      | freshest     |
//! | s6    | class h      | class h      |
//! | s7    | class h      | class 2      |
//!
//! Age coordinates are `x0` (delivered age at the device), `x1` (packet at the
//! local processor) and `x2` (packet at the edge server).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shs::{solve_aoi, CtmcSpec, ResetMap, Transition};

/// Symbolic transition intensity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RateSymbol {
    /// Own arrivals routed to the local processor, `λ p`.
    OwnLocal,
    /// Own arrivals offloaded to the edge server, `λ (1 - p)`.
    OwnOffload,
    /// Same-class traffic of other devices at the edge server.
    SameClass,
    /// Higher-priority traffic of all devices at the edge server.
    HigherEs,
    /// Own higher-priority traffic at the local processor.
    HigherLocal,
    /// Local service rate `μ0`.
    LocalService,
    /// Edge service rate `μ`.
    EsService,
}

impl RateSymbol {
    pub const ALL: [RateSymbol; 7] = [
        RateSymbol::OwnLocal,
        RateSymbol::OwnOffload,
        RateSymbol::SameClass,
        RateSymbol::HigherEs,
        RateSymbol::HigherLocal,
        RateSymbol::LocalService,
        RateSymbol::EsService,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            RateSymbol::OwnLocal => "λp",
            RateSymbol::OwnOffload => "λp̄",
            RateSymbol::SameClass => "λe",
            RateSymbol::HigherEs => "λh",
            RateSymbol::HigherLocal => "λLh",
            RateSymbol::LocalService => "μ0",
            RateSymbol::EsService => "μ",
        }
    }

    pub fn value(self, params: &ChainParams) -> f64 {
        match self {
            RateSymbol::OwnLocal => params.arrival * params.local_prob,
            RateSymbol::OwnOffload => params.arrival * (1.0 - params.local_prob),
            RateSymbol::SameClass => params.same_class,
            RateSymbol::HigherEs => params.higher_es,
            RateSymbol::HigherLocal => params.higher_local,
            RateSymbol::LocalService => params.local_rate,
            RateSymbol::EsService => params.es_rate,
        }
    }
}

/// One row of a transition table: zero-based states, reset as column sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub from: usize,
    pub rate: RateSymbol,
    pub to: usize,
    pub reset: [Option<usize>; 3],
}

const fn row(from: usize, rate: RateSymbol, to: usize, reset: [Option<usize>; 3]) -> TableRow {
    TableRow {
        from: from - 1,
        rate,
        to: to - 1,
        reset,
    }
}

use RateSymbol::*;
const X0: Option<usize> = Some(0);
const X1: Option<usize> = Some(1);
const X2: Option<usize> = Some(2);
const O: Option<usize> = None;

pub const RED_STATES: usize = 3;
pub const YG_STATES: usize = 7;

#[rustfmt::skip]
pub const RED_TABLE: [TableRow; 15] = [
    row(1, OwnLocal, 1, [X0, O, X2]),
    row(1, OwnOffload, 2, [X0, X1, O]),
    row(1, SameClass, 3, [X0, X1, X0]),
    row(1, LocalService, 1, [X1, X1, X1]),
    row(1, EsService, 1, [X2, X1, X2]),

    row(2, OwnLocal, 1, [X0, O, X2]),
    row(2, OwnOffload, 2, [X0, X1, O]),
    row(2, SameClass, 3, [X0, X1, X0]),
    row(2, LocalService, 2, [X1, X1, X2]),
    row(2, EsService, 2, [X2, X2, X2]),

    row(3, OwnLocal, 3, [X0, O, X2]),
    row(3, OwnOffload, 2, [X0, X1, O]),
    row(3, SameClass, 3, [X0, X1, X0]),
    row(3, LocalService, 3, [X1, X1, X1]),
    row(3, EsService, 3, [X2, X1, X2]),
];

#[rustfmt::skip]
pub const YG_TABLE: [TableRow; 49] = [
    row(1, OwnLocal, 1, [X0, O, X2]),
    row(1, OwnOffload, 2, [X0, X1, O]),
    row(1, HigherLocal, 5, [X0, X0, X2]),
    row(1, HigherEs, 3, [X0, X1, X0]),
    row(1, SameClass, 4, [X0, X1, X0]),
    row(1, LocalService, 1, [X1, X1, X1]),
    row(1, EsService, 1, [X2, X1, X2]),

    row(2, OwnLocal, 1, [X0, O, X2]),
    row(2, OwnOffload, 2, [X0, X1, O]),
    row(2, HigherLocal, 5, [X0, X0, X2]),
    row(2, HigherEs, 3, [X0, X1, X0]),
    row(2, SameClass, 4, [X0, X1, X0]),
    row(2, LocalService, 2, [X1, X1, X2]),
    row(2, EsService, 2, [X2, X2, X2]),

    row(3, OwnLocal, 3, [X0, O, X2]),
    row(3, OwnOffload, 3, [X0, X1, X2]),
    row(3, HigherLocal, 6, [X0, X0, X2]),
    row(3, HigherEs, 3, [X0, X1, X0]),
    row(3, SameClass, 3, [X0, X1, X2]),
    row(3, LocalService, 3, [X1, X1, X1]),
    row(3, EsService, 4, [X2, X1, X2]),

    row(4, OwnLocal, 4, [X0, O, X2]),
    row(4, OwnOffload, 2, [X0, X1, O]),
    row(4, HigherLocal, 7, [X0, X0, X2]),
    row(4, HigherEs, 3, [X0, X1, X0]),
    row(4, SameClass, 4, [X0, X1, X0]),
    row(4, LocalService, 4, [X1, X1, X1]),
    row(4, EsService, 4, [X2, X1, X2]),

    row(5, OwnLocal, 5, [X0, X1, X2]),
    row(5, OwnOffload, 5, [X0, X1, O]),
    row(5, HigherLocal, 5, [X0, X0, X2]),
    row(5, HigherEs, 6, [X0, X1, X0]),
    row(5, SameClass, 7, [X0, X1, X0]),
    row(5, LocalService, 2, [X1, X1, X2]),
    row(5, EsService, 5, [X2, X2, X2]),

    row(6, OwnLocal, 6, [X0, X1, X2]),
    row(6, OwnOffload, 6, [X0, X1, X2]),
    row(6, HigherLocal, 6, [X0, X0, X2]),
    row(6, HigherEs, 6, [X0, X1, X0]),
    row(6, SameClass, 6, [X0, X1, X2]),
    row(6, LocalService, 3, [X1, X1, X2]),
    row(6, EsService, 7, [X2, X1, X2]),

    row(7, OwnLocal, 7, [X0, X1, X2]),
    row(7, OwnOffload, 5, [X0, X1, O]),
    row(7, HigherLocal, 7, [X0, X0, X2]),
    row(7, HigherEs, 6, [X0, X1, X0]),
    row(7, SameClass, 7, [X0, X1, X0]),
    row(7, LocalService, 2, [X1, X1, X2]),
    row(7, EsService, 7, [X2, X1, X2]),
];

/// Numeric values for the rate symbols of one class of one device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Own arrival rate of the class, `λ`.
    pub arrival: f64,
    /// Local-service probability `p`.
    pub local_prob: f64,
    /// Same-class traffic of other devices at the edge server.
    pub same_class: f64,
    /// Higher-priority traffic at the edge server (zero for red).
    pub higher_es: f64,
    /// Own higher-priority traffic at the local processor (zero for red).
    pub higher_local: f64,
    /// Local frequency `μ0`.
    pub local_rate: f64,
    /// Edge service rate `μ`.
    pub es_rate: f64,
}

impl ChainParams {
    pub fn red(
        arrival: f64,
        local_prob: f64,
        same_class: f64,
        local_rate: f64,
        es_rate: f64,
    ) -> Self {
        Self {
            arrival,
            local_prob,
            same_class,
            higher_es: 0.0,
            higher_local: 0.0,
            local_rate,
            es_rate,
        }
    }

    /// Sum of all rate symbols; equals the outflow of every chain state.
    pub fn total_rate(&self) -> f64 {
        self.arrival
            + self.same_class
            + self.higher_es
            + self.higher_local
            + self.local_rate
            + self.es_rate
    }

    fn check(&self) -> Result<()> {
        let bad = |name, value, reason| {
            Err(Error::InvalidParameter {
                name,
                value,
                reason,
            })
        };
        let fields = [
            ("arrival", self.arrival),
            ("local_prob", self.local_prob),
            ("same_class", self.same_class),
            ("higher_es", self.higher_es),
            ("higher_local", self.higher_local),
            ("local_rate", self.local_rate),
            ("es_rate", self.es_rate),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return bad(name, value, "must be finite");
            }
            if value < 0.0 {
                return bad(name, value, "must be nonnegative");
            }
        }
        if self.arrival <= 0.0 {
            return bad("arrival", self.arrival, "must be positive");
        }
        if self.es_rate <= 0.0 {
            return bad("es_rate", self.es_rate, "must be positive");
        }
        if self.local_prob > 1.0 {
            return bad("local_prob", self.local_prob, "must be at most 1");
        }
        Ok(())
    }
}

fn instantiate(table: &[TableRow], num_states: usize, params: &ChainParams) -> Result<CtmcSpec> {
    let (reduced, _) = instantiate_unreduced(table, num_states, params)?.closed_class_from(0)?;
    Ok(reduced)
}

fn instantiate_unreduced(
    table: &[TableRow],
    num_states: usize,
    params: &ChainParams,
) -> Result<CtmcSpec> {
    params.check()?;
    let transitions = table
        .iter()
        .filter_map(|r| {
            let rate = r.rate.value(params);
            (rate > 0.0).then(|| Transition {
                from: r.from,
                to: r.to,
                rate,
                reset: ResetMap::from(r.reset),
            })
        })
        .collect();
    let mut spec = CtmcSpec::with_unit_growth(num_states, 3, transitions);
    spec.names = (1..=num_states).map(|s| format!("s{s}")).collect();
    Ok(spec)
}

/// Red chain with zero-intensity rows dropped but no state reduction. May be
/// reducible at boundary parameters.
pub fn red_chain_unreduced(params: &ChainParams) -> Result<CtmcSpec> {
    instantiate_unreduced(
        &RED_TABLE,
        RED_STATES,
        &ChainParams {
            higher_es: 0.0,
            higher_local: 0.0,
            ..*params
        },
    )
}

pub fn yg_chain_unreduced(params: &ChainParams) -> Result<CtmcSpec> {
    instantiate_unreduced(&YG_TABLE, YG_STATES, params)
}

/// Red-task chain. Rows with zero intensity are dropped and, at boundary
/// parameters, the chain is reduced to the closed class reachable from `s1`.
pub fn build_red_chain(params: &ChainParams) -> Result<CtmcSpec> {
    instantiate(
        &RED_TABLE,
        RED_STATES,
        &ChainParams {
            higher_es: 0.0,
            higher_local: 0.0,
            ..*params
        },
    )
}

/// Yellow/green-task chain, same reduction rules as [`build_red_chain`].
pub fn build_yg_chain(params: &ChainParams) -> Result<CtmcSpec> {
    instantiate(&YG_TABLE, YG_STATES, params)
}

/// Closed-form average age of red tasks.
pub fn red_aoi_closed_form(params: &ChainParams) -> Result<f64> {
    params.check()?;
    let l = params.arrival;
    let p = params.local_prob;
    let pb = 1.0 - p;
    let lm = params.same_class;
    let m0 = params.local_rate;
    let m = params.es_rate;
    if p == 1.0 && m0 == 0.0 {
        return Err(Error::NoServicePath);
    }
    let den = l * (m + (l + lm) * p) * (m0 * (lm + m + m0) + l * (m + m0) * pb);
    let num = m0 * (lm + m) * (lm + m + m0)
        + l.powi(3) * p * pb
        + l * l * (m + m0 + lm * p * (2.0 - p))
        + l * ((m + m0).powi(2) + lm * lm * p + lm * (m * (1.0 + p) + 2.0 * m0));
    Ok(num / den)
}

/// Average age of red tasks from the generic linear-solve pipeline.
pub fn red_aoi(params: &ChainParams) -> Result<f64> {
    Ok(solve_aoi(&build_red_chain(params)?)?.average_aoi)
}

/// Average age of yellow or green tasks; the linear-solve pipeline is the
/// definition, there is no closed form.
pub fn yg_aoi(params: &ChainParams) -> Result<f64> {
    Ok(solve_aoi(&build_yg_chain(params)?)?.average_aoi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn red_chain_full_table() {
        let spec = build_red_chain(&ChainParams::red(1.0, 0.6, 2.0, 1.0, 5.0)).unwrap();
        assert_eq!(spec.num_states, 3);
        assert_eq!(spec.transitions.len(), 15);
        for out in spec.outflow() {
            assert!((out - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn red_chain_all_local_collapses_to_s1() {
        let spec = build_red_chain(&ChainParams::red(1.0, 1.0, 0.0, 2.0, 5.0)).unwrap();
        assert_eq!(spec.num_states, 1);
        assert_eq!(spec.names, vec!["s1".to_string()]);
        assert!(spec.transitions.iter().all(|t| t.from == 0 && t.to == 0));
    }

    #[test]
    fn red_chain_split_rates_from_s1() {
        let spec = red_chain_unreduced(&ChainParams::red(1.0, 0.0, 1.0, 2.0, 5.0)).unwrap();
        let from_s1: Vec<_> = spec
            .transitions
            .iter()
            .filter(|t| t.from == 0 && t.to != 0)
            .map(|t| (spec.names[t.to].clone(), t.rate))
            .collect();
        assert_eq!(
            from_s1,
            vec![("s2".to_string(), 1.0), ("s3".to_string(), 1.0)]
        );
        // Without local routing s1 is transient and the solver sees {s2, s3}.
        let reduced = build_red_chain(&ChainParams::red(1.0, 0.0, 1.0, 2.0, 5.0)).unwrap();
        assert_eq!(reduced.names, vec!["s2".to_string(), "s3".to_string()]);
    }

    #[test]
    fn yg_chain_outflow() {
        let params = ChainParams {
            arrival: 3.0,
            local_prob: 0.5,
            same_class: 2.0,
            higher_es: 1.0,
            higher_local: 0.6,
            local_rate: 0.7,
            es_rate: 10.0,
        };
        let spec = build_yg_chain(&params).unwrap();
        assert_eq!(spec.num_states, 7);
        assert_eq!(spec.transitions.len(), 49);
        for out in spec.outflow() {
            assert!((out - 17.3).abs() < 1e-12);
        }
        let s3_mu: Vec<_> = spec
            .transitions
            .iter()
            .filter(|t| t.from == 2 && t.rate == 10.0)
            .map(|t| t.to)
            .collect();
        assert_eq!(s3_mu, vec![3]);
    }

    #[test]
    fn boundary_reductions_exact() {
        let local = red_aoi_closed_form(&ChainParams::red(1.0, 1.0, 0.0, 2.0, 5.0)).unwrap();
        let edge = red_aoi_closed_form(&ChainParams::red(1.0, 0.0, 0.0, 2.0, 5.0)).unwrap();
        assert!((local - 1.5).abs() <= 1e-12);
        assert!((edge - 1.2).abs() <= 1e-12);
        let local = red_aoi(&ChainParams::red(1.0, 1.0, 0.0, 2.0, 5.0)).unwrap();
        let edge = red_aoi(&ChainParams::red(1.0, 0.0, 0.0, 2.0, 5.0)).unwrap();
        assert!((local - 1.5).abs() <= 1e-12);
        assert!((edge - 1.2).abs() <= 1e-12);
    }

    #[test]
    fn no_service_path() {
        assert_eq!(
            red_aoi_closed_form(&ChainParams::red(1.0, 1.0, 0.5, 0.0, 5.0)).unwrap_err(),
            Error::NoServicePath
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            build_red_chain(&ChainParams::red(0.0, 0.5, 1.0, 1.0, 5.0)),
            Err(Error::InvalidParameter {
                name: "arrival",
                ..
            })
        ));
        assert!(matches!(
            build_red_chain(&ChainParams::red(1.0, 1.5, 1.0, 1.0, 5.0)),
            Err(Error::InvalidParameter {
                name: "local_prob",
                ..
            })
        ));
    }
}
