//! Pairwise preference construction and supervision accounting.

mod human;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use human::{Candidate, CandidateSample, HumanBridge, HumanVerdict, SubmitAck, SubmitError};

use crate::error::{Error, Result};

pub type ScoreFn = Arc<dyn Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync>;
pub type ClassifyFn = Arc<dyn Fn(ArrayView1<'_, f64>) -> bool + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    First,
    Second,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Oracle,
    Human,
    Implicit,
}

/// `preferred ≻ other`, both given as row indices into the sample pool the
/// pair was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub preferred: usize,
    pub other: usize,
    pub source: PairSource,
    /// Protocol id for human-labeled pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
}

#[derive(Clone)]
pub enum OracleKind {
    /// `x1 ≻ x2` iff `f(x1) > f(x2)`; desired iff `f(x) > threshold`.
    Score { score: ScoreFn, threshold: f64 },
    /// Desired ≻ undesired; same class is a tie.
    Labels { classify: ClassifyFn },
    Human { bridge: HumanBridge, timeout: Duration },
}

impl fmt::Debug for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::Score { threshold, .. } => {
                f.debug_struct("Score").field("threshold", threshold).finish()
            }
            OracleKind::Labels { .. } => f.write_str("Labels"),
            OracleKind::Human { timeout, .. } => {
                f.debug_struct("Human").field("timeout", timeout).finish()
            }
        }
    }
}

/// A source of pairwise verdicts with a query budget.
#[derive(Debug, Clone)]
pub struct PreferenceOracle {
    kind: OracleKind,
    budget: Option<u64>,
    used: u64,
    round: u64,
}

impl PreferenceOracle {
    pub fn new(kind: OracleKind) -> Self {
        Self {
            kind,
            budget: None,
            used: 0,
            round: 0,
        }
    }

    pub fn score(score: ScoreFn, threshold: f64) -> Self {
        Self::new(OracleKind::Score { score, threshold })
    }

    pub fn labels(classify: ClassifyFn) -> Self {
        Self::new(OracleKind::Labels { classify })
    }

    pub fn human(bridge: HumanBridge, timeout: Duration) -> Self {
        Self::new(OracleKind::Human { bridge, timeout })
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.budget = budget;
        self
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn is_human(&self) -> bool {
        matches!(self.kind, OracleKind::Human { .. })
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn queries_used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.used))
    }

    pub fn exhausted(&self) -> bool {
        self.remaining() == Some(0)
    }

    fn charge(&mut self) -> Result<()> {
        if let Some(budget) = self.budget {
            if self.used >= budget {
                return Err(Error::BudgetExhausted {
                    used: self.used,
                    budget,
                });
            }
        }
        self.used += 1;
        Ok(())
    }

    /// One comparison; costs one query. Human oracles cannot answer
    /// arbitrary comparisons synchronously and report
    /// [`Error::PreferencePending`] instead of guessing.
    pub fn compare(&mut self, x1: ArrayView1<'_, f64>, x2: ArrayView1<'_, f64>) -> Result<Comparison> {
        if self.is_human() {
            return Err(Error::PreferencePending);
        }
        self.charge()?;
        Ok(match &self.kind {
            OracleKind::Score { score, .. } => {
                let (a, b) = (score(x1), score(x2));
                if a > b {
                    Comparison::First
                } else if b > a {
                    Comparison::Second
                } else {
                    Comparison::Tie
                }
            }
            OracleKind::Labels { classify } => match (classify(x1), classify(x2)) {
                (true, false) => Comparison::First,
                (false, true) => Comparison::Second,
                _ => Comparison::Tie,
            },
            OracleKind::Human { .. } => unreachable!(),
        })
    }

    /// Desired/undesired verdict for one sample; costs one query.
    pub fn classify(&mut self, x: ArrayView1<'_, f64>) -> Result<bool> {
        if self.is_human() {
            return Err(Error::InvalidArgument(
                "a human oracle only answers pairwise comparisons".into(),
            ));
        }
        self.charge()?;
        Ok(match &self.kind {
            OracleKind::Score { score, threshold } => score(x) > *threshold,
            OracleKind::Labels { classify } => classify(x),
            OracleKind::Human { .. } => unreachable!(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<PreferencePair>,
    /// The budget ran out before `n_s` pairs were built.
    pub budget_exhausted: bool,
    /// Human mode: fewer verdicts arrived than candidates were offered.
    pub timed_out: bool,
}

/// Draws at most this many candidate pairs per requested pair before giving
/// up on ties.
const ATTEMPTS_PER_PAIR: usize = 100;

fn draw_candidates<R: Rng + ?Sized>(n: usize, want: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let distinct = n * (n - 1) / 2;
    let want = want.min(distinct);
    let mut seen = HashSet::with_capacity(want);
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if seen.insert((i.min(j), i.max(j))) {
            out.push((i, j));
        }
    }
    out
}

/// Samples random pairs from `samples` and asks the oracle about each, until
/// `n_s` non-tie pairs exist. Ties consume budget and yield nothing.
pub fn build_pairs<R: Rng + ?Sized>(
    samples: ArrayView2<'_, f64>,
    oracle: &mut PreferenceOracle,
    n_s: usize,
    rng: &mut R,
) -> Result<PairSet> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples to build pairs, got {n}"
        )));
    }
    if n_s == 0 {
        return Ok(PairSet::default());
    }
    if oracle.is_human() {
        return build_pairs_human(samples, oracle, n_s, rng);
    }

    let mut set = PairSet::default();
    for (i, j) in draw_candidates(n, n_s * ATTEMPTS_PER_PAIR, rng) {
        if set.pairs.len() == n_s {
            break;
        }
        let verdict = match oracle.compare(samples.row(i), samples.row(j)) {
            Ok(v) => v,
            Err(Error::BudgetExhausted { .. }) => {
                set.budget_exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (preferred, other) = match verdict {
            Comparison::First => (i, j),
            Comparison::Second => (j, i),
            Comparison::Tie => continue,
        };
        set.pairs.push(PreferencePair {
            preferred,
            other,
            source: PairSource::Oracle,
            pair_id: None,
        });
    }
    Ok(set)
}

fn build_pairs_human<R: Rng + ?Sized>(
    samples: ArrayView2<'_, f64>,
    oracle: &mut PreferenceOracle,
    n_s: usize,
    rng: &mut R,
) -> Result<PairSet> {
    let (bridge, timeout) = match &oracle.kind {
        OracleKind::Human { bridge, timeout } => (bridge.clone(), *timeout),
        _ => unreachable!(),
    };
    let mut set = PairSet::default();
    let want = match oracle.remaining() {
        Some(0) => {
            set.budget_exhausted = true;
            return Ok(set);
        }
        Some(r) => n_s.min(r as usize),
        None => n_s,
    };
    oracle.round += 1;
    let round = oracle.round;
    let candidates: Vec<(String, usize, usize)> = draw_candidates(samples.nrows(), want, rng)
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| (format!("r{round}-{k}"), i, j))
        .collect();
    bridge.offer(
        candidates
            .iter()
            .map(|(id, i, j)| Candidate {
                pair_id: id.clone(),
                a: CandidateSample {
                    id: *i as u64,
                    coords: samples.row(*i).to_vec(),
                },
                b: CandidateSample {
                    id: *j as u64,
                    coords: samples.row(*j).to_vec(),
                },
            })
            .collect(),
    );
    let verdicts = bridge.wait_for_verdicts(candidates.len(), timeout);
    bridge.withdraw();
    set.timed_out = verdicts.len() < candidates.len();
    for (pair_id, verdict) in verdicts {
        let Some((_, i, j)) = candidates.iter().find(|(id, _, _)| *id == pair_id) else {
            continue;
        };
        oracle.charge()?;
        let (preferred, other) = match verdict {
            HumanVerdict::A => (*i, *j),
            HumanVerdict::B => (*j, *i),
            HumanVerdict::Skip => continue,
        };
        set.pairs.push(PreferencePair {
            preferred,
            other,
            source: PairSource::Human,
            pair_id: Some(pair_id),
        });
    }
    set.budget_exhausted = oracle.exhausted() && set.pairs.len() < n_s;
    Ok(set)
}

/// Effective pairs used by the differential critic:
/// `n_e` corrections, `n_i` iterations each, `n_s` pairs per iteration.
pub fn ep_dicgan(n_e: u64, n_i: u64, n_s: u64) -> u64 {
    n_e * n_i * n_s
}

/// Implicit pairs of a feedback loop: desired × undesired generations, summed
/// over epochs.
pub fn ep_fbgan(per_epoch: &[(u64, u64)]) -> u64 {
    per_epoch.iter().map(|&(gd, gu)| gd * gu).sum()
}

/// Per-epoch effective-pair counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisionLedger {
    pub per_epoch: Vec<u64>,
    pub total: u64,
}

impl SupervisionLedger {
    pub fn record(&mut self, pairs: u64) {
        self.per_epoch.push(pairs);
        self.total += pairs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::radial_score;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn radial_oracle() -> PreferenceOracle {
        PreferenceOracle::score(Arc::new(radial_score), -1.5)
    }

    fn label_oracle() -> PreferenceOracle {
        PreferenceOracle::labels(Arc::new(|x: ArrayView1<'_, f64>| x.dot(&x).sqrt() < 1.5))
    }

    #[test]
    fn score_oracle_prefers_smaller_radius() {
        let mut o = radial_oracle();
        let a = array![1.0, 0.0];
        let b = array![0.0, 2.0];
        assert_eq!(o.compare(a.view(), b.view()).unwrap(), Comparison::First);
        assert_eq!(o.compare(b.view(), a.view()).unwrap(), Comparison::Second);
        assert_eq!(o.compare(a.view(), a.view()).unwrap(), Comparison::Tie);
        assert_eq!(o.queries_used(), 3);
    }

    #[test]
    fn label_oracle_is_antisymmetric() {
        let mut o = label_oracle();
        let d = array![0.9, 0.2];
        let u = array![-2.0, 0.1];
        assert_eq!(o.compare(d.view(), u.view()).unwrap(), Comparison::First);
        assert_eq!(o.compare(u.view(), d.view()).unwrap(), Comparison::Second);
        let d2 = array![0.0, -1.0];
        assert_eq!(o.compare(d.view(), d2.view()).unwrap(), Comparison::Tie);
    }

    #[test]
    fn budget_is_enforced() {
        let mut o = radial_oracle().with_budget(Some(2));
        let a = array![1.0, 0.0];
        o.compare(a.view(), a.view()).unwrap();
        o.classify(a.view()).unwrap();
        assert!(matches!(
            o.compare(a.view(), a.view()),
            Err(Error::BudgetExhausted { used: 2, budget: 2 })
        ));
        assert_eq!(o.queries_used(), 2);
        assert!(o.exhausted());
    }

    #[test]
    fn human_oracle_never_fabricates_a_verdict() {
        let mut o = PreferenceOracle::human(HumanBridge::new(), Duration::from_millis(1));
        let a = array![1.0, 0.0];
        assert!(matches!(
            o.compare(a.view(), a.view()),
            Err(Error::PreferencePending)
        ));
        assert_eq!(o.queries_used(), 0);
    }

    #[test]
    fn build_pairs_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = radial_oracle();
        let samples = array![[1.0, 0.0], [0.0, 2.0], [0.5, 0.5]];
        assert!(build_pairs(samples.view(), &mut o, 0, &mut rng).unwrap().pairs.is_empty());
        assert!(build_pairs(array![[1.0, 0.0]].view(), &mut o, 3, &mut rng).is_err());

        let same = Array2::from_elem((10, 2), 0.7);
        let set = build_pairs(same.view(), &mut o, 5, &mut rng).unwrap();
        assert!(set.pairs.is_empty());
        assert!(!set.budget_exhausted);
    }

    #[test]
    fn label_pairs_put_desired_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        for k in 0..20 {
            let theta = k as f64 * 0.7;
            let r = if k % 2 == 0 { 1.0 } else { 2.0 };
            rows.extend([r * theta.cos(), r * theta.sin()]);
        }
        let samples = Array2::from_shape_vec((20, 2), rows).unwrap();
        let mut o = label_oracle();
        let set = build_pairs(samples.view(), &mut o, 25, &mut rng).unwrap();
        assert!(!set.pairs.is_empty());
        for p in &set.pairs {
            assert_eq!(p.preferred % 2, 0, "{p:?}");
            assert_eq!(p.other % 2, 1, "{p:?}");
            assert_ne!(p.preferred, p.other);
        }
    }

    #[test]
    fn budget_exhaustion_mid_build_keeps_partial_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = Array2::from_shape_fn((30, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let mut o = radial_oracle().with_budget(Some(7));
        let set = build_pairs(samples.view(), &mut o, 20, &mut rng).unwrap();
        assert_eq!(set.pairs.len(), 7);
        assert!(set.budget_exhausted);
        assert_eq!(o.queries_used(), 7);
    }

    #[test]
    fn human_pairs_come_from_posted_verdicts() {
        let bridge = HumanBridge::new();
        let mut o = PreferenceOracle::human(bridge.clone(), Duration::from_secs(5));
        let samples = array![[1.0, 0.0], [0.0, 2.0], [0.5, 0.5], [3.0, 1.0]];
        let client = bridge.clone();
        let handle = std::thread::spawn(move || {
            let mut answered = 0;
            while answered < 2 {
                if let Some(c) = client.next_pending() {
                    let v = if answered == 0 { HumanVerdict::B } else { HumanVerdict::Skip };
                    client.submit(&c.pair_id, v).unwrap();
                    answered += 1;
                } else {
                    std::thread::sleep(Duration::from_millis(1));
                }
            }
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = build_pairs(samples.view(), &mut o, 2, &mut rng).unwrap();
        handle.join().unwrap();
        assert_eq!(set.pairs.len(), 1);
        assert_eq!(set.pairs[0].source, PairSource::Human);
        assert!(set.pairs[0].pair_id.as_deref().unwrap().starts_with("r1-"));
        assert_eq!(o.queries_used(), 2);
        assert!(!set.timed_out);
    }

    #[test]
    fn human_pairs_time_out_with_nothing() {
        let mut o = PreferenceOracle::human(HumanBridge::new(), Duration::from_millis(5));
        let samples = array![[1.0, 0.0], [0.0, 2.0], [0.5, 0.5]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = build_pairs(samples.view(), &mut o, 2, &mut rng).unwrap();
        assert!(set.pairs.is_empty());
        assert!(set.timed_out);
        assert_eq!(o.queries_used(), 0);
    }

    #[test]
    fn ep_formulas() {
        assert_eq!(ep_dicgan(2, 3, 25), 150);
        assert_eq!(ep_dicgan(0, 3, 25), 0);
        assert_eq!(ep_dicgan(2, 0, 25), 0);
        assert_eq!(ep_dicgan(2, 3, 0), 0);
        assert_eq!(ep_fbgan(&[(3, 4), (0, 7)]), 12);
        assert_eq!(ep_fbgan(&[(5, 0), (9, 0)]), 0);
        let mut ledger = SupervisionLedger::default();
        ledger.record(3);
        ledger.record(0);
        ledger.record(9);
        assert_eq!(ledger.total, ledger.per_epoch.iter().sum::<u64>());
    }

    proptest! {
        #[test]
        fn score_pairs_are_strictly_ordered_and_budget_conserved(
            coords in prop::collection::vec(-3.0f64..3.0, 8..60),
            n_s in 0usize..20,
            seed in 0u64..1000,
            budget in prop::option::of(0u64..40),
        ) {
            let n = coords.len() / 2;
            let samples = Array2::from_shape_vec((n, 2), coords[..2 * n].to_vec()).unwrap();
            let mut o = radial_oracle().with_budget(budget);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = build_pairs(samples.view(), &mut o, n_s, &mut rng).unwrap();
            prop_assert!(set.pairs.len() <= n_s);
            if let Some(b) = budget {
                prop_assert!(o.queries_used() <= b);
            }
            prop_assert!(o.queries_used() >= set.pairs.len() as u64);
            for p in &set.pairs {
                prop_assert!(radial_score(samples.row(p.preferred)) > radial_score(samples.row(p.other)));
            }
        }

        #[test]
        fn score_oracle_antisymmetry(a in prop::array::uniform2(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0)) {
            let mut o = radial_oracle();
            let (a, b) = (array![a[0], a[1]], array![b[0], b[1]]);
            let ab = o.compare(a.view(), b.view()).unwrap();
            let ba = o.compare(b.view(), a.view()).unwrap();
            let expected = match ab {
                Comparison::First => Comparison::Second,
                Comparison::Second => Comparison::First,
                Comparison::Tie => Comparison::Tie,
            };
            prop_assert_eq!(ba, expected);
            prop_assert_eq!(o.queries_used(), 2);
        }
    }
}
