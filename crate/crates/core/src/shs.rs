//! Stochastic hybrid system engine for piecewise-linear age processes.
//!
//! A [`CtmcSpec`] describes a finite continuous-time Markov chain whose
//! transitions carry a linear reset of the age vector. Every age coordinate
//! grows at unit rate (or stays frozen) between transitions. From that
//! description the engine assembles and solves two dense linear systems:
//!
//! * the stationary balance equations for `π`, with the balance row of the
//!   highest-index state replaced by `Σ π = 1`;
//! * the balance equations for the stationary conditional age moments
//!   `v_s = E[x · 1{state = s}]`:
//!
//!   ```text
//!   v_s · Σ_{m ∈ out(s)} q_m = u_s π_s + Σ_{m ∈ in(s)} q_m · v_{src(m)} A_m
//!   ```
//!
//! The average age is `Σ_s v_{s0}`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where one coordinate of the post-jump age vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeSource {
    Zero,
    Copy(usize),
}

/// Binary reset matrix stored column-wise: output coordinate `k` is either
/// zero or a copy of input coordinate `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResetMap(Vec<AgeSource>);

impl ResetMap {
    pub fn new(sources: Vec<AgeSource>) -> Self {
        Self(sources)
    }

    pub fn identity(dim: usize) -> Self {
        Self((0..dim).map(AgeSource::Copy).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn sources(&self) -> &[AgeSource] {
        &self.0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0
            .iter()
            .map(|s| match *s {
                AgeSource::Zero => 0.0,
                AgeSource::Copy(j) => x[j],
            })
            .collect()
    }
}

/// Shorthand used by the chain tables: `None` is a zero column.
impl From<[Option<usize>; 3]> for ResetMap {
    fn from(cols: [Option<usize>; 3]) -> Self {
        Self(
            cols.iter()
                .map(|c| c.map_or(AgeSource::Zero, AgeSource::Copy))
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    pub reset: ResetMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtmcSpec {
    pub num_states: usize,
    pub age_dim: usize,
    /// `growth[s][k]` is the drift of age coordinate `k` in state `s` (0 or 1).
    pub growth: Vec<Vec<f64>>,
    pub transitions: Vec<Transition>,
    /// Display names, one per state. May be empty.
    #[serde(default)]
    pub names: Vec<String>,
}

impl CtmcSpec {
    /// Spec with unit growth on every coordinate of every state.
    pub fn with_unit_growth(
        num_states: usize,
        age_dim: usize,
        transitions: Vec<Transition>,
    ) -> Self {
        Self {
            num_states,
            age_dim,
            growth: vec![vec![1.0; age_dim]; num_states],
            transitions,
            names: Vec::new(),
        }
    }

    pub fn state_name(&self, s: usize) -> String {
        self.names
            .get(s)
            .cloned()
            .unwrap_or_else(|| format!("state {s}"))
    }

    /// Total outgoing rate of every state, self-loops included.
    pub fn outflow(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for t in &self.transitions {
            out[t.from] += t.rate;
        }
        out
    }

    /// Generator matrix `Q` (self-loops cancel).
    pub fn generator(&self) -> DMatrix<f64> {
        let c = self.num_states;
        let mut q = DMatrix::zeros(c, c);
        for t in &self.transitions {
            q[(t.from, t.to)] += t.rate;
            q[(t.from, t.from)] -= t.rate;
        }
        q
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_states];
        for t in &self.transitions {
            if t.rate > 0.0 && t.from < self.num_states && t.to < self.num_states {
                adj[t.from].push(t.to);
            }
        }
        adj
    }

    /// Restricts the chain to the unique closed communicating class reachable
    /// from `start`. Returns the reduced spec and, for each retained state, its
    /// index in `self`.
    pub fn closed_class_from(&self, start: usize) -> Result<(CtmcSpec, Vec<usize>)> {
        let adj = self.successors();
        let reach: Vec<BTreeSet<usize>> =
            (0..self.num_states).map(|s| reachable(&adj, s)).collect();
        let mut classes: Vec<&BTreeSet<usize>> = Vec::new();
        for &s in &reach[start] {
            let closed = reach[s].iter().all(|&t| reach[t].contains(&s));
            if closed && !classes.contains(&&reach[s]) {
                classes.push(&reach[s]);
            }
        }
        if classes.len() != 1 {
            return Err(Error::DegenerateChain(classes.len()));
        }
        let keep: Vec<usize> = classes[0].iter().copied().collect();
        if keep.len() == self.num_states {
            return Ok((self.clone(), keep));
        }
        let mut index = vec![usize::MAX; self.num_states];
        for (new, &old) in keep.iter().enumerate() {
            index[old] = new;
        }
        let transitions = self
            .transitions
            .iter()
            .filter(|t| index[t.from] != usize::MAX)
            .map(|t| Transition {
                from: index[t.from],
                to: index[t.to],
                rate: t.rate,
                reset: t.reset.clone(),
            })
            .collect();
        let spec = CtmcSpec {
            num_states: keep.len(),
            age_dim: self.age_dim,
            growth: keep.iter().map(|&s| self.growth[s].clone()).collect(),
            transitions,
            names: if self.names.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&s| self.names[s].clone()).collect()
            },
        };
        Ok((spec, keep))
    }
}

fn reachable(adj: &[Vec<usize>], start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for &t in &adj[s] {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    seen
}

/// A broken [`CtmcSpec`] invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoStates,
    NoAgeCoordinates,
    GrowthShape {
        state: usize,
        len: usize,
    },
    GrowthEntry {
        state: usize,
        coord: usize,
        value: f64,
    },
    StateOutOfRange {
        transition: usize,
        state: usize,
    },
    NonPositiveRate {
        transition: usize,
        rate: f64,
    },
    ResetDimension {
        transition: usize,
        len: usize,
    },
    ResetSourceOutOfRange {
        transition: usize,
        coord: usize,
        source: usize,
    },
    Unreachable {
        state: usize,
        name: String,
    },
    CannotReturn {
        state: usize,
        name: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "chain has no states"),
            Violation::NoAgeCoordinates => write!(f, "age vector has no coordinates"),
            Violation::GrowthShape { state, len } => {
                write!(f, "growth vector of state {state} has length {len}")
            }
            Violation::GrowthEntry {
                state,
                coord,
                value,
            } => {
                write!(f, "growth[{state}][{coord}] = {value} is not 0 or 1")
            }
            Violation::StateOutOfRange { transition, state } => {
                write!(
                    f,
                    "transition {transition} references state {state} out of range"
                )
            }
            Violation::NonPositiveRate { transition, rate } => {
                write!(f, "transition {transition} has non-positive rate {rate}")
            }
            Violation::ResetDimension { transition, len } => {
                write!(f, "transition {transition} reset map has {len} coordinates")
            }
            Violation::ResetSourceOutOfRange {
                transition,
                coord,
                source,
            } => write!(
                f,
                "transition {transition} copies coordinate {source} into {coord}, out of range"
            ),
            Violation::Unreachable { name, .. } => {
                write!(f, "{name} is not reachable from the initial state")
            }
            Violation::CannotReturn { name, .. } => {
                write!(f, "{name} cannot return to the initial state")
            }
        }
    }
}

/// Lists every broken invariant; empty iff the spec is valid. Irreducibility is
/// checked as forward and backward reachability from state 0.
pub fn validate_spec(spec: &CtmcSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let c = spec.num_states;
    let n = spec.age_dim;
    if c == 0 {
        out.push(Violation::NoStates);
    }
    if n == 0 {
        out.push(Violation::NoAgeCoordinates);
    }
    if spec.growth.len() != c {
        out.push(Violation::GrowthShape {
            state: spec.growth.len(),
            len: 0,
        });
    }
    for (s, g) in spec.growth.iter().enumerate() {
        if g.len() != n {
            out.push(Violation::GrowthShape {
                state: s,
                len: g.len(),
            });
        }
        for (k, &value) in g.iter().enumerate() {
            if value != 0.0 && value != 1.0 {
                out.push(Violation::GrowthEntry {
                    state: s,
                    coord: k,
                    value,
                });
            }
        }
    }
    for (i, t) in spec.transitions.iter().enumerate() {
        for state in [t.from, t.to] {
            if state >= c {
                out.push(Violation::StateOutOfRange {
                    transition: i,
                    state,
                });
            }
        }
        if !(t.rate > 0.0) || !t.rate.is_finite() {
            out.push(Violation::NonPositiveRate {
                transition: i,
                rate: t.rate,
            });
        }
        if t.reset.dim() != n {
            out.push(Violation::ResetDimension {
                transition: i,
                len: t.reset.dim(),
            });
        }
        for (k, src) in t.reset.sources().iter().enumerate() {
            if let AgeSource::Copy(j) = *src {
                if j >= n {
                    out.push(Violation::ResetSourceOutOfRange {
                        transition: i,
                        coord: k,
                        source: j,
                    });
                }
            }
        }
    }
    if c > 0 {
        let fwd = spec.successors();
        let mut rev = vec![Vec::new(); c];
        for (s, next) in fwd.iter().enumerate() {
            for &t in next {
                rev[t].push(s);
            }
        }
        let from0 = reachable(&fwd, 0);
        let to0 = reachable(&rev, 0);
        for s in 0..c {
            if !from0.contains(&s) {
                out.push(Violation::Unreachable {
                    state: s,
                    name: spec.state_name(s),
                });
            } else if !to0.contains(&s) {
                out.push(Violation::CannotReturn {
                    state: s,
                    name: spec.state_name(s),
                });
            }
        }
    }
    out
}

/// Residual tolerances applied to every solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub stationary: f64,
    pub moments: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stationary: 1e-12,
            moments: 1e-9,
        }
    }
}

/// Pivots smaller than this fraction of the largest matrix entry count as zero.
const PIVOT_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDistribution(Vec<f64>);

impl StationaryDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMoments {
    age_dim: usize,
    values: Vec<f64>,
}

impl ConditionalMoments {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let age_dim = rows.first().map_or(0, Vec::len);
        Self {
            age_dim,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        if self.age_dim == 0 {
            0
        } else {
            self.values.len() / self.age_dim
        }
    }

    pub fn age_dim(&self) -> usize {
        self.age_dim
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.age_dim..(s + 1) * self.age_dim]
    }

    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values[s * self.age_dim + k]
    }
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax();
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().amin();
    if !(scale > 0.0) || min_pivot <= PIVOT_FLOOR * scale {
        return None;
    }
    lu.solve(&b)
}

pub fn solve_stationary(spec: &CtmcSpec) -> Result<StationaryDistribution> {
    solve_stationary_with(spec, &Tolerances::default())
}

pub fn solve_stationary_with(spec: &CtmcSpec, tol: &Tolerances) -> Result<StationaryDistribution> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    let c = spec.num_states;
    let mut a = spec.generator().transpose();
    for j in 0..c {
        a[(c - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(c);
    b[c - 1] = 1.0;
    let x = solve_dense(a, b).ok_or(Error::SingularChain)?;
    let pi = StationaryDistribution(
        x.iter()
            .map(|&p| if p < 0.0 && p > -1e-15 { 0.0 } else { p })
            .collect(),
    );
    let residual = stationary_residual(spec, &pi);
    if !(residual <= tol.stationary) {
        return Err(Error::Residual {
            what: "stationary",
            residual,
            tolerance: tol.stationary,
        });
    }
    Ok(pi)
}

/// Largest relative violation of the balance equations or the normalization.
pub fn stationary_residual(spec: &CtmcSpec, pi: &StationaryDistribution) -> f64 {
    let p = pi.probabilities();
    let out = spec.outflow();
    let mut inflow = vec![0.0; spec.num_states];
    for t in &spec.transitions {
        inflow[t.to] += t.rate * p[t.from];
    }
    let scale = (0..spec.num_states)
        .map(|s| (p[s] * out[s]).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let balance = (0..spec.num_states)
        .map(|s| (p[s] * out[s] - inflow[s]).abs() / scale)
        .fold(0.0, f64::max);
    let norm = (p.iter().sum::<f64>() - 1.0).abs();
    balance.max(norm)
}

pub fn solve_conditional_moments(
    spec: &CtmcSpec,
    pi: &StationaryDistribution,
) -> Result<ConditionalMoments> {
    solve_conditional_moments_with(spec, pi, &Tolerances::default())
}

pub fn solve_conditional_moments_with(
    spec: &CtmcSpec,
    pi: &StationaryDistribution,
    tol: &Tolerances,
) -> Result<ConditionalMoments> {
    let c = spec.num_states;
    let n = spec.age_dim;
    let p = pi.probabilities();
    let out = spec.outflow();
    let mut a = DMatrix::zeros(c * n, c * n);
    let mut b = DVector::zeros(c * n);
    for s in 0..c {
        for k in 0..n {
            a[(s * n + k, s * n + k)] += out[s];
            b[s * n + k] = spec.growth[s][k] * p[s];
        }
    }
    for t in &spec.transitions {
        for (k, src) in t.reset.sources().iter().enumerate() {
            if let AgeSource::Copy(j) = *src {
                a[(t.to * n + k, t.from * n + j)] -= t.rate;
            }
        }
    }
    let x = solve_dense(a, b).ok_or(Error::SingularMomentSystem)?;
    let values: Vec<f64> = x
        .iter()
        .map(|&v| if v < 0.0 && v > -1e-15 { 0.0 } else { v })
        .collect();
    if values.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::SingularMomentSystem);
    }
    let moments = ConditionalMoments { age_dim: n, values };
    let residual = moment_residual(spec, pi, &moments);
    if !(residual <= tol.moments) {
        return Err(Error::Residual {
            what: "moment",
            residual,
            tolerance: tol.moments,
        });
    }
    Ok(moments)
}

/// Largest per-row relative residual of the moment balance equations. Each row
/// is scaled by the sum of the magnitudes of its terms.
pub fn moment_residual(
    spec: &CtmcSpec,
    pi: &StationaryDistribution,
    v: &ConditionalMoments,
) -> f64 {
    let c = spec.num_states;
    let n = spec.age_dim;
    let p = pi.probabilities();
    let out = spec.outflow();
    let mut lhs = vec![0.0; c * n];
    let mut rhs = vec![0.0; c * n];
    let mut mag = vec![0.0; c * n];
    for s in 0..c {
        for k in 0..n {
            let i = s * n + k;
            lhs[i] = v.get(s, k) * out[s];
            rhs[i] = spec.growth[s][k] * p[s];
            mag[i] = lhs[i].abs() + rhs[i].abs();
        }
    }
    for t in &spec.transitions {
        for (k, src) in t.reset.sources().iter().enumerate() {
            if let AgeSource::Copy(j) = *src {
                let term = t.rate * v.get(t.from, j);
                rhs[t.to * n + k] += term;
                mag[t.to * n + k] += term.abs();
            }
        }
    }
    (0..c * n)
        .map(|i| {
            if mag[i] == 0.0 {
                0.0
            } else {
                (lhs[i] - rhs[i]).abs() / mag[i]
            }
        })
        .fold(0.0, f64::max)
}

/// `Σ_s v_{s0}`.
pub fn average_aoi(moments: &ConditionalMoments) -> f64 {
    (0..moments.num_states()).map(|s| moments.get(s, 0)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AoiSolution {
    pub stationary: StationaryDistribution,
    pub moments: ConditionalMoments,
    pub average_aoi: f64,
}

/// Runs the full pipeline: stationary law, conditional moments, average age.
pub fn solve_aoi(spec: &CtmcSpec) -> Result<AoiSolution> {
    let stationary = solve_stationary(spec)?;
    let moments = solve_conditional_moments(spec, &stationary)?;
    let average_aoi = average_aoi(&moments);
    Ok(AoiSolution {
        stationary,
        moments,
        average_aoi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z() -> AgeSource {
        AgeSource::Zero
    }
    fn cp(j: usize) -> AgeSource {
        AgeSource::Copy(j)
    }

    fn two_state(a: f64, b: f64) -> CtmcSpec {
        CtmcSpec::with_unit_growth(
            2,
            1,
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    rate: a,
                    reset: ResetMap::identity(1),
                },
                Transition {
                    from: 1,
                    to: 0,
                    rate: b,
                    reset: ResetMap::identity(1),
                },
            ],
        )
    }

    #[test]
    fn two_state_detailed_balance() {
        let pi = solve_stationary(&two_state(2.0, 3.0)).unwrap();
        assert!((pi.probabilities()[0] - 0.6).abs() < 1e-15);
        assert!((pi.probabilities()[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn single_state_lcfs_bookkeeping() {
        // One Poisson stream of rate λ, x0 tracks x1, x1 resets to zero.
        let lambda = 2.5;
        let spec = CtmcSpec::with_unit_growth(
            1,
            2,
            vec![Transition {
                from: 0,
                to: 0,
                rate: lambda,
                reset: ResetMap::new(vec![cp(1), z()]),
            }],
        );
        let sol = solve_aoi(&spec).unwrap();
        let v = &sol.moments;
        assert!((v.get(0, 0) - 2.0 / lambda).abs() < 1e-14);
        assert!((v.get(0, 1) - 1.0 / lambda).abs() < 1e-14);
        // v01 · λ = π
        assert!((v.get(0, 1) * lambda - 1.0).abs() < 1e-14);
    }

    #[test]
    fn average_aoi_sums_column_zero() {
        let m = ConditionalMoments::from_rows(&[vec![0.5, 9.0], vec![0.7, 9.0], vec![0.3, 9.0]]);
        assert!((average_aoi(&m) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn unreachable_state_is_named() {
        let mut spec = two_state(1.0, 1.0);
        spec.num_states = 3;
        spec.growth.push(vec![1.0]);
        spec.transitions.push(Transition {
            from: 2,
            to: 0,
            rate: 1.0,
            reset: ResetMap::identity(1),
        });
        let v = validate_spec(&spec);
        assert_eq!(
            v,
            vec![Violation::Unreachable {
                state: 2,
                name: "state 2".into()
            }]
        );
        assert_eq!(solve_stationary(&spec).unwrap_err(), Error::InvalidSpec(v));
    }

    #[test]
    fn zero_rate_is_one_violation() {
        let mut spec = two_state(1.0, 1.0);
        spec.transitions.push(Transition {
            from: 0,
            to: 0,
            rate: 0.0,
            reset: ResetMap::identity(1),
        });
        let v = validate_spec(&spec);
        assert_eq!(
            v,
            vec![Violation::NonPositiveRate {
                transition: 2,
                rate: 0.0
            }]
        );
    }

    #[test]
    fn bad_reset_dimension_and_source() {
        let mut spec = two_state(1.0, 1.0);
        spec.transitions[0].reset = ResetMap::new(vec![cp(3), z()]);
        let v = validate_spec(&spec);
        assert!(v.contains(&Violation::ResetDimension {
            transition: 0,
            len: 2
        }));
        assert!(v.contains(&Violation::ResetSourceOutOfRange {
            transition: 0,
            coord: 0,
            source: 3
        }));
    }

    #[test]
    fn closed_class_reduction() {
        // 0 -> 1, 1 <-> 2, 0 transient.
        let spec = CtmcSpec::with_unit_growth(
            3,
            1,
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    rate: 1.0,
                    reset: ResetMap::identity(1),
                },
                Transition {
                    from: 1,
                    to: 2,
                    rate: 1.0,
                    reset: ResetMap::identity(1),
                },
                Transition {
                    from: 2,
                    to: 1,
                    rate: 2.0,
                    reset: ResetMap::identity(1),
                },
            ],
        );
        let (reduced, keep) = spec.closed_class_from(0).unwrap();
        assert_eq!(keep, vec![1, 2]);
        assert_eq!(reduced.num_states, 2);
        assert!(validate_spec(&reduced).is_empty());
    }

    #[test]
    fn two_closed_classes_are_degenerate() {
        let spec = CtmcSpec::with_unit_growth(
            3,
            1,
            vec![
                Transition {
                    from: 0,
                    to: 1,
                    rate: 1.0,
                    reset: ResetMap::identity(1),
                },
                Transition {
                    from: 0,
                    to: 2,
                    rate: 1.0,
                    reset: ResetMap::identity(1),
                },
            ],
        );
        assert_eq!(
            spec.closed_class_from(0).unwrap_err(),
            Error::DegenerateChain(2)
        );
    }

    #[test]
    fn frozen_age_makes_moments_singular() {
        // x0 never resets, so its stationary mean is infinite.
        let spec = CtmcSpec::with_unit_growth(
            1,
            1,
            vec![Transition {
                from: 0,
                to: 0,
                rate: 1.0,
                reset: ResetMap::identity(1),
            }],
        );
        let pi = solve_stationary(&spec).unwrap();
        assert_eq!(
            solve_conditional_moments(&spec, &pi).unwrap_err(),
            Error::SingularMomentSystem
        );
    }
}
