//! Hand-transcribed balance systems for the red and yellow/green chains, and a
//! symbol-level diff against the systems assembled from the transition tables.
//!
//! The transition tables are the source of truth for every computation; the
//! transcriptions here exist only to cross-check them. Coefficients are kept
//! as integer combinations of [`RateSymbol`]s, so the comparison is exact.

use std::collections::BTreeMap;
use std::fmt;

use super::chains::{RateSymbol, TableRow, RED_STATES, RED_TABLE, YG_STATES, YG_TABLE};
use RateSymbol::*;

/// Integer combination of rate symbols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Coef([i32; 7]);

impl Coef {
    pub fn of(symbols: &[RateSymbol]) -> Self {
        let mut c = Coef::default();
        for s in symbols {
            c.0[s.index()] += 1;
        }
        c
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    fn add(&mut self, other: Coef) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

impl fmt::Display for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = RateSymbol::ALL
            .iter()
            .filter(|s| self.0[s.index()] != 0)
            .map(|s| match self.0[s.index()] {
                1 => s.label().to_string(),
                k => format!("{k}{}", s.label()),
            })
            .collect();
        if terms.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&terms.join(" + "))
        }
    }
}

/// Source of a moment term: (source state, source coordinate), zero-based.
type MomentKey = (usize, usize);

/// Right-hand sides of both balance systems, keyed by source, with the common
/// left-hand outflow coefficient of each state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalanceSystem {
    pub outflow: Vec<Coef>,
    pub stationary: Vec<BTreeMap<usize, Coef>>,
    pub moments: Vec<[BTreeMap<MomentKey, Coef>; 3]>,
}

impl BalanceSystem {
    fn empty(num_states: usize) -> Self {
        Self {
            outflow: vec![Coef::default(); num_states],
            stationary: vec![BTreeMap::new(); num_states],
            moments: vec![Default::default(); num_states],
        }
    }

    /// Mechanical assembly from a transition table.
    pub fn assemble(table: &[TableRow], num_states: usize) -> Self {
        let mut sys = Self::empty(num_states);
        for r in table {
            let c = Coef::of(&[r.rate]);
            sys.outflow[r.from].add(c);
            sys.stationary[r.to].entry(r.from).or_default().add(c);
            for (k, src) in r.reset.iter().enumerate() {
                if let Some(j) = *src {
                    sys.moments[r.to][k].entry((r.from, j)).or_default().add(c);
                }
            }
        }
        sys.prune();
        sys
    }

    fn prune(&mut self) {
        for m in &mut self.stationary {
            m.retain(|_, c| !c.is_zero());
        }
        for row in &mut self.moments {
            for m in row.iter_mut() {
                m.retain(|_, c| !c.is_zero());
            }
        }
    }

    // Builders below take one-based state numbers to mirror the written form.

    fn pi(&mut self, state: usize, coef: Coef, sources: &[usize]) {
        for &s in sources {
            self.stationary[state - 1]
                .entry(s - 1)
                .or_default()
                .add(coef);
        }
    }

    fn v(&mut self, state: usize, coef: Coef, source: usize, pattern: [Option<usize>; 3]) {
        for (k, j) in pattern.iter().enumerate() {
            if let Some(j) = *j {
                self.moments[state - 1][k]
                    .entry((source - 1, j))
                    .or_default()
                    .add(coef);
            }
        }
    }
}

/// One disagreement between the assembled and the transcribed system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Discrepancy {
    pub system: &'static str,
    pub equation: String,
    pub term: String,
    pub assembled: Coef,
    pub transcribed: Coef,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: term {} assembled as [{}], transcribed as [{}]",
            self.system, self.equation, self.term, self.assembled, self.transcribed
        )
    }
}

fn diff_maps<K: Ord + Copy>(
    out: &mut Vec<Discrepancy>,
    system: &'static str,
    equation: &str,
    a: &BTreeMap<K, Coef>,
    b: &BTreeMap<K, Coef>,
    name: impl Fn(K) -> String,
) {
    let keys: std::collections::BTreeSet<K> = a.keys().chain(b.keys()).copied().collect();
    for k in keys {
        let x = a.get(&k).copied().unwrap_or_default();
        let y = b.get(&k).copied().unwrap_or_default();
        if x != y {
            out.push(Discrepancy {
                system,
                equation: equation.to_string(),
                term: name(k),
                assembled: x,
                transcribed: y,
            });
        }
    }
}

/// Symbol-level diff. Empty when both systems agree term for term.
pub fn diff(
    system: &'static str,
    assembled: &BalanceSystem,
    transcribed: &BalanceSystem,
) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    let n = assembled.outflow.len().max(transcribed.outflow.len());
    let get = |v: &Vec<Coef>, s: usize| v.get(s).copied().unwrap_or_default();
    for s in 0..n {
        let (a, b) = (get(&assembled.outflow, s), get(&transcribed.outflow, s));
        if a != b {
            out.push(Discrepancy {
                system,
                equation: format!("outflow of s{}", s + 1),
                term: format!("π{}", s + 1),
                assembled: a,
                transcribed: b,
            });
        }
    }
    let empty = BTreeMap::new();
    for s in 0..n {
        let a = assembled.stationary.get(s).unwrap_or(&empty);
        let b = transcribed.stationary.get(s).unwrap_or(&empty);
        diff_maps(&mut out, system, &format!("π{}", s + 1), a, b, |j| {
            format!("π{}", j + 1)
        });
    }
    let empty_row: [BTreeMap<MomentKey, Coef>; 3] = Default::default();
    for s in 0..n {
        let a = assembled.moments.get(s).unwrap_or(&empty_row);
        let b = transcribed.moments.get(s).unwrap_or(&empty_row);
        for k in 0..3 {
            diff_maps(
                &mut out,
                system,
                &format!("v{}{}", s + 1, k),
                &a[k],
                &b[k],
                |(j, i)| format!("v{}{}", j + 1, i),
            );
        }
    }
    out
}

const X0: Option<usize> = Some(0);
const X1: Option<usize> = Some(1);
const X2: Option<usize> = Some(2);
const O: Option<usize> = None;

fn c(symbols: &[RateSymbol]) -> Coef {
    Coef::of(symbols)
}

/// `λ` in total, i.e. both routing branches.
const LAMBDA: [RateSymbol; 2] = [OwnLocal, OwnOffload];

/// Red-chain balance equations as written out by hand.
pub fn red_transcribed() -> BalanceSystem {
    let mut sys = BalanceSystem::empty(RED_STATES);
    let rho = c(&[OwnLocal, OwnOffload, SameClass, LocalService, EsService]);
    sys.outflow = vec![rho; RED_STATES];

    sys.pi(1, c(&[OwnLocal, LocalService, EsService]), &[1]);
    sys.pi(1, c(&[OwnLocal]), &[2]);
    sys.pi(2, c(&[OwnOffload, LocalService, EsService]), &[2]);
    sys.pi(2, c(&[OwnOffload]), &[1, 3]);
    sys.pi(3, c(&[OwnLocal, SameClass, LocalService, EsService]), &[3]);
    sys.pi(3, c(&[SameClass]), &[1, 2]);

    sys.v(1, c(&[OwnLocal]), 1, [X0, O, X2]);
    sys.v(1, c(&[LocalService]), 1, [X1, X1, X1]);
    sys.v(1, c(&[EsService]), 1, [X2, X1, X2]);
    sys.v(1, c(&[OwnLocal]), 2, [X0, O, X2]);

    sys.v(2, c(&[OwnOffload]), 2, [X0, X1, O]);
    sys.v(2, c(&[LocalService]), 2, [X1, X1, X2]);
    sys.v(2, c(&[EsService]), 2, [X2, X2, X2]);
    sys.v(2, c(&[OwnOffload]), 1, [X0, X1, O]);
    sys.v(2, c(&[OwnOffload]), 3, [X0, X1, O]);

    sys.v(3, c(&[OwnLocal]), 3, [X0, O, X2]);
    sys.v(3, c(&[SameClass]), 3, [X0, X1, X0]);
    sys.v(3, c(&[EsService]), 3, [X2, X1, X2]);
    sys.v(3, c(&[SameClass]), 1, [X0, X1, X0]);
    sys.v(3, c(&[SameClass]), 2, [X0, X1, X0]);
    sys.v(3, c(&[LocalService]), 3, [X1, X1, X1]);
    sys.prune();
    sys
}

/// Yellow/green-chain balance equations as written out by hand.
pub fn yg_transcribed() -> BalanceSystem {
    let mut sys = BalanceSystem::empty(YG_STATES);
    let rho = c(&[
        OwnLocal,
        OwnOffload,
        SameClass,
        LocalService,
        EsService,
        HigherEs,
        HigherLocal,
    ]);
    sys.outflow = vec![rho; YG_STATES];
    let with_lambda = |extra: &[RateSymbol]| {
        let mut v = LAMBDA.to_vec();
        v.extend_from_slice(extra);
        c(&v)
    };

    sys.pi(1, c(&[OwnLocal, LocalService, EsService]), &[1]);
    sys.pi(1, c(&[OwnLocal]), &[2]);
    sys.pi(2, c(&[OwnOffload, LocalService, EsService]), &[2]);
    sys.pi(2, c(&[OwnOffload]), &[1, 4]);
    sys.pi(2, c(&[LocalService]), &[5, 7]);
    sys.pi(3, with_lambda(&[HigherEs, SameClass, LocalService]), &[3]);
    sys.pi(3, c(&[HigherEs]), &[1, 2, 4]);
    sys.pi(3, c(&[LocalService]), &[6]);
    sys.pi(4, c(&[OwnLocal, LocalService, EsService, SameClass]), &[4]);
    sys.pi(4, c(&[SameClass]), &[1, 2]);
    sys.pi(4, c(&[EsService]), &[3]);
    sys.pi(5, with_lambda(&[HigherLocal, EsService]), &[5]);
    sys.pi(5, c(&[HigherLocal]), &[1, 2]);
    sys.pi(5, c(&[OwnOffload]), &[7]);
    sys.pi(6, with_lambda(&[HigherLocal, HigherEs, SameClass]), &[6]);
    sys.pi(6, c(&[HigherLocal]), &[3]);
    sys.pi(6, c(&[HigherEs]), &[5, 7]);
    sys.pi(7, c(&[OwnLocal, SameClass, HigherLocal, EsService]), &[7]);
    sys.pi(7, c(&[HigherLocal]), &[4]);
    sys.pi(7, c(&[SameClass]), &[5]);
    sys.pi(7, c(&[EsService]), &[6]);

    let all = [X0, X1, X2];

    sys.v(1, c(&[OwnLocal]), 1, [X0, O, X2]);
    sys.v(1, c(&[LocalService]), 1, [X1, X1, X1]);
    sys.v(1, c(&[EsService]), 1, [X2, X1, X2]);
    sys.v(1, c(&[OwnLocal]), 2, [X0, O, X2]);

    sys.v(2, c(&[OwnOffload]), 2, [X0, X1, O]);
    sys.v(2, c(&[EsService]), 2, [X2, X2, X2]);
    sys.v(2, c(&[OwnOffload]), 1, [X0, X1, O]);
    sys.v(2, c(&[OwnOffload]), 4, [X0, X1, O]);
    sys.v(2, c(&[LocalService]), 2, [X1, X1, X2]);
    sys.v(2, c(&[LocalService]), 5, [X1, X1, X2]);
    sys.v(2, c(&[LocalService]), 7, [X1, X1, X2]);

    sys.v(3, c(&[OwnLocal]), 3, [X0, O, X2]);
    sys.v(3, c(&[OwnOffload]), 3, all);
    sys.v(3, c(&[SameClass]), 3, all);
    sys.v(3, c(&[LocalService]), 3, [X1, X1, X1]);
    sys.v(3, c(&[HigherEs]), 3, [X0, X1, X0]);
    sys.v(3, c(&[HigherEs]), 1, [X0, X1, X0]);
    sys.v(3, c(&[HigherEs]), 2, [X0, X1, X0]);
    sys.v(3, c(&[HigherEs]), 4, [X0, X1, X0]);
    sys.v(3, c(&[LocalService]), 6, [X1, X1, X2]);

    sys.v(4, c(&[OwnLocal]), 4, [X0, O, X2]);
    sys.v(4, c(&[EsService]), 4, [X2, X1, X2]);
    sys.v(4, c(&[LocalService]), 4, [X1, X1, X1]);
    sys.v(4, c(&[SameClass]), 4, [X0, X1, X0]);
    sys.v(4, c(&[SameClass]), 1, [X0, X1, X0]);
    sys.v(4, c(&[SameClass]), 2, [X0, X1, X0]);
    sys.v(4, c(&[EsService]), 3, [X2, X1, X2]);

    sys.v(5, c(&[OwnLocal]), 5, all);
    sys.v(5, c(&[OwnOffload]), 5, [X0, X1, O]);
    sys.v(5, c(&[HigherLocal]), 5, [X0, X0, X2]);
    sys.v(5, c(&[EsService]), 5, [X2, X2, X2]);
    sys.v(5, c(&[HigherLocal]), 1, [X0, X0, X2]);
    sys.v(5, c(&[HigherLocal]), 2, [X0, X0, X2]);
    sys.v(5, c(&[OwnOffload]), 7, [X0, X1, O]);

    sys.v(6, c(&LAMBDA), 6, all);
    sys.v(6, c(&[HigherLocal]), 6, [X0, X0, X2]);
    sys.v(6, c(&[HigherEs]), 6, [X0, X1, X0]);
    sys.v(6, c(&[SameClass]), 6, all);
    sys.v(6, c(&[HigherLocal]), 3, [X0, X0, X2]);
    sys.v(6, c(&[HigherEs]), 5, [X0, X1, X0]);
    sys.v(6, c(&[HigherEs]), 7, [X0, X1, X0]);

    sys.v(7, c(&[OwnLocal]), 7, all);
    sys.v(7, c(&[HigherLocal]), 7, [X0, X0, X2]);
    sys.v(7, c(&[SameClass]), 7, [X0, X1, X0]);
    sys.v(7, c(&[EsService]), 7, [X2, X1, X2]);
    sys.v(7, c(&[HigherLocal]), 4, [X0, X0, X2]);
    sys.v(7, c(&[SameClass]), 5, [X0, X1, X0]);
    sys.v(7, c(&[EsService]), 6, [X2, X1, X2]);
    sys.prune();
    sys
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiffReport {
    pub discrepancies: Vec<Discrepancy>,
}

impl DiffReport {
    pub fn is_clean(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.discrepancies.is_empty() {
            return writeln!(f, "assembled and transcribed systems agree term for term");
        }
        for d in &self.discrepancies {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Diffs both chains' assembled systems against their transcriptions.
pub fn reference_diff() -> DiffReport {
    let mut discrepancies = diff(
        "red",
        &BalanceSystem::assemble(&RED_TABLE, RED_STATES),
        &red_transcribed(),
    );
    discrepancies.extend(diff(
        "yellow/green",
        &BalanceSystem::assemble(&YG_TABLE, YG_STATES),
        &yg_transcribed(),
    ));
    DiffReport { discrepancies }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_chains_match_their_transcriptions() {
        let report = reference_diff();
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn a_dropped_term_is_reported() {
        let assembled = BalanceSystem::assemble(&RED_TABLE, RED_STATES);
        let mut written = red_transcribed();
        written.moments[2][0].remove(&(1, 0));
        let d = diff("red", &assembled, &written);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].equation, "v30");
        assert_eq!(d[0].term, "v20");
        assert_eq!(d[0].assembled, Coef::of(&[SameClass]));
        assert!(d[0].transcribed.is_zero());
    }

    #[test]
    fn coefficient_display() {
        assert_eq!(
            Coef::of(&[OwnLocal, LocalService, LocalService]).to_string(),
            "λp + 2μ0"
        );
        assert_eq!(Coef::default().to_string(), "0");
    }
}
