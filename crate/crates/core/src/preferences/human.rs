//! Hand-off between the training thread and a human labeling frontend.
//!
//! The trainer publishes candidate pairs with [`HumanBridge::offer`] and
//! collects verdicts with [`HumanBridge::wait_for_verdicts`]. The server side
//! reads [`HumanBridge::next_pending`] and records answers with
//! [`HumanBridge::submit`]. Verdicts flow through a single FIFO queue.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanVerdict {
    A,
    B,
    Skip,
}

/// One side of a candidate pair as shown to the human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub id: u64,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pair_id: String,
    pub a: CandidateSample,
    pub b: CandidateSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub accepted: bool,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown pair_id `{0}`")]
    UnknownPair(String),
    #[error("pair `{0}` already answered with a different verdict")]
    Conflicting(String),
}

#[derive(Debug, Default)]
struct BridgeState {
    /// Offered and not yet answered, in offer order.
    pending: VecDeque<Candidate>,
    /// Answers of the current round, for duplicate detection.
    answered: HashMap<String, HumanVerdict>,
    verdicts: VecDeque<(String, HumanVerdict)>,
    round: u64,
    closed: bool,
}

#[derive(Debug, Default)]
struct Shared {
    state: Mutex<BridgeState>,
    cond: Condvar,
}

#[derive(Debug, Clone, Default)]
pub struct HumanBridge {
    shared: Arc<Shared>,
}

impl HumanBridge {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new labeling round; candidates of earlier rounds are withdrawn
    /// and their unconsumed verdicts dropped.
    pub fn offer(&self, candidates: Vec<Candidate>) -> u64 {
        let mut st = self.shared.state.lock().expect("bridge lock");
        st.round += 1;
        if st.closed {
            return st.round;
        }
        st.pending = candidates.into();
        st.answered.clear();
        st.verdicts.clear();
        self.shared.cond.notify_all();
        st.round
    }

    /// Withdraws all outstanding candidates.
    pub fn withdraw(&self) {
        let mut st = self.shared.state.lock().expect("bridge lock");
        st.pending.clear();
        self.shared.cond.notify_all();
    }

    /// Stops all current and future waits; used on shutdown.
    pub fn close(&self) {
        let mut st = self.shared.state.lock().expect("bridge lock");
        st.closed = true;
        st.pending.clear();
        self.shared.cond.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.shared.state.lock().expect("bridge lock").closed
    }

    pub fn next_pending(&self) -> Option<Candidate> {
        let st = self.shared.state.lock().expect("bridge lock");
        st.pending.front().cloned()
    }

    pub fn pending_count(&self) -> usize {
        self.shared.state.lock().expect("bridge lock").pending.len()
    }

    /// Records a verdict. Re-posting an identical verdict is acknowledged
    /// as a duplicate and changes nothing.
    pub fn submit(&self, pair_id: &str, verdict: HumanVerdict) -> Result<SubmitAck, SubmitError> {
        let mut st = self.shared.state.lock().expect("bridge lock");
        if let Some(&previous) = st.answered.get(pair_id) {
            if previous == verdict {
                return Ok(SubmitAck {
                    accepted: false,
                    duplicate: true,
                });
            }
            return Err(SubmitError::Conflicting(pair_id.to_string()));
        }
        let Some(pos) = st.pending.iter().position(|c| c.pair_id == pair_id) else {
            return Err(SubmitError::UnknownPair(pair_id.to_string()));
        };
        st.pending.remove(pos);
        st.answered.insert(pair_id.to_string(), verdict);
        st.verdicts.push_back((pair_id.to_string(), verdict));
        self.shared.cond.notify_all();
        Ok(SubmitAck {
            accepted: true,
            duplicate: false,
        })
    }

    /// Pops one recorded verdict, if any.
    pub fn try_dequeue(&self) -> Option<(String, HumanVerdict)> {
        self.shared
            .state
            .lock()
            .expect("bridge lock")
            .verdicts
            .pop_front()
    }

    /// Blocks until `want` verdicts are queued, no candidate is pending, or
    /// `timeout` elapses; then drains and returns up to `want` verdicts.
    pub fn wait_for_verdicts(&self, want: usize, timeout: Duration) -> Vec<(String, HumanVerdict)> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.state.lock().expect("bridge lock");
        while st.verdicts.len() < want && !st.pending.is_empty() && !st.closed {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            st = self
                .shared
                .cond
                .wait_timeout(st, deadline - now)
                .expect("bridge lock")
                .0;
        }
        let take = want.min(st.verdicts.len());
        st.verdicts.drain(..take).collect()
    }
}
