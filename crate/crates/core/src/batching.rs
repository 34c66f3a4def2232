//! Batch schedules for the four training schemes and the store that carries
//! detached hidden states between segments.
//!
//! Segment ids are indices into a temporally ordered segment list. A state edge
//! `(a, b)` means the final hidden state of segment `a` initializes segment `b`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Augmentation;
use crate::error::{Error, Result};
use crate::gru::HiddenState;

pub type SegmentId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanKind {
    /// Random mini-batches, zero initial state.
    Rmb,
    /// Stateful: positionally aligned streams, state passed between batches.
    Smb,
    /// Sequential stateful: temporally ordered batches, state chained through
    /// every segment.
    Ssmb,
    /// Conditional: shuffled like RMB over initial-value-augmented inputs.
    Cmb,
}

/// One epoch of batches.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub kind: PlanKind,
    pub batches: Vec<Vec<SegmentId>>,
    pub state_edges: Vec<(SegmentId, SegmentId)>,
    pub reshuffle_each_epoch: bool,
}

impl BatchPlan {
    /// Number of segments scheduled in this epoch.
    pub fn segments_used(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    /// `to -> from` lookup of the state edges.
    pub fn state_sources(&self) -> HashMap<SegmentId, SegmentId> {
        self.state_edges.iter().map(|&(a, b)| (b, a)).collect()
    }

    /// Segments whose final state feeds another segment.
    pub fn state_targets(&self) -> HashMap<SegmentId, SegmentId> {
        self.state_edges.iter().copied().collect()
    }

    /// Every scheduled id is distinct and ids `0..segments_used()` are all
    /// present; every edge stays inside the schedule; edges form simple chains
    /// that only run forward in time; a source always runs in an earlier batch
    /// or earlier in the same batch (stateful execution order).
    pub fn validate(&self) -> Result<()> {
        let used = self.segments_used();
        let mut position = vec![None; used];
        for (k, batch) in self.batches.iter().enumerate() {
            for (j, &id) in batch.iter().enumerate() {
                if id >= used || position[id].is_some() {
                    return Err(Error::config(format!("segment {id} scheduled twice or out of range")));
                }
                position[id] = Some((k, j));
            }
        }
        let mut out_deg = vec![0u8; used];
        let mut in_deg = vec![0u8; used];
        for &(a, b) in &self.state_edges {
            if a >= used || b >= used || a >= b {
                return Err(Error::config(format!("state edge {a}->{b} is not forward in time")));
            }
            out_deg[a] += 1;
            in_deg[b] += 1;
            if out_deg[a] > 1 || in_deg[b] > 1 {
                return Err(Error::config(format!("state edge {a}->{b} branches")));
            }
            if position[a] >= position[b] {
                return Err(Error::config(format!("state edge {a}->{b} runs backwards")));
            }
        }
        Ok(())
    }
}

fn shuffled_plan(kind: PlanKind, n_segments: usize, bs: usize, rng: &mut impl Rng) -> Result<BatchPlan> {
    if bs == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order: Vec<SegmentId> = (0..n_segments).collect();
    order.shuffle(rng);
    Ok(BatchPlan {
        kind,
        batches: order.chunks(bs).map(<[usize]>::to_vec).collect(),
        state_edges: Vec::new(),
        reshuffle_each_epoch: true,
    })
}

/// Random permutation chunked into batches of `bs`; the last batch may be short.
pub fn plan_rmb(n_segments: usize, bs: usize, rng: &mut impl Rng) -> Result<BatchPlan> {
    shuffled_plan(PlanKind::Rmb, n_segments, bs, rng)
}

/// Same layout as [`plan_rmb`]; the inputs must carry the initial-value column.
pub fn plan_cmb(
    n_segments: usize,
    bs: usize,
    augmentation: Augmentation,
    rng: &mut impl Rng,
) -> Result<BatchPlan> {
    if augmentation != Augmentation::InitialValue {
        return Err(Error::config(
            "conditional batches need inputs augmented with the initial target value",
        ));
    }
    shuffled_plan(PlanKind::Cmb, n_segments, bs, rng)
}

/// `bs` contiguous streams of `L = N / bs` segments; batch `k` holds the k-th
/// segment of every stream. Segments past `L * bs` are dropped.
pub fn plan_smb(n_segments: usize, bs: usize) -> Result<BatchPlan> {
    if bs == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if n_segments < bs {
        return Err(Error::config(format!(
            "stateful batches need at least bs={bs} segments, got {n_segments}"
        )));
    }
    let len = n_segments / bs;
    let batches = (0..len)
        .map(|k| (0..bs).map(|j| j * len + k).collect())
        .collect();
    let state_edges = (0..len.saturating_sub(1))
        .flat_map(|k| (0..bs).map(move |j| (j * len + k, j * len + k + 1)))
        .collect();
    Ok(BatchPlan {
        kind: PlanKind::Smb,
        batches,
        state_edges,
        reshuffle_each_epoch: false,
    })
}

/// Consecutive runs of `bs` segments in temporal order, with state chained
/// through every consecutive pair (inside and across batches).
pub fn plan_ssmb(n_segments: usize, bs: usize) -> Result<BatchPlan> {
    if bs == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let ids: Vec<SegmentId> = (0..n_segments).collect();
    Ok(BatchPlan {
        kind: PlanKind::Ssmb,
        batches: ids.chunks(bs).map(<[usize]>::to_vec).collect(),
        state_edges: (1..n_segments).map(|i| (i - 1, i)).collect(),
        reshuffle_each_epoch: false,
    })
}

/// Detached hidden states keyed by the segment they will initialize.
#[derive(Debug, Clone)]
pub struct HiddenStateRegistry {
    hidden_size: usize,
    states: HashMap<SegmentId, HiddenState>,
}

impl HiddenStateRegistry {
    pub fn new(hidden_size: usize) -> Self {
        HiddenStateRegistry {
            hidden_size,
            states: HashMap::new(),
        }
    }

    pub fn put(&mut self, key: SegmentId, state: &HiddenState) {
        assert_eq!(state.len(), self.hidden_size, "hidden state has the wrong length");
        self.states.insert(key, state.clone());
    }

    /// Remove and return the state for `key`, or the zero state.
    pub fn take(&mut self, key: SegmentId) -> HiddenState {
        self.states
            .remove(&key)
            .unwrap_or_else(|| HiddenState::zeros(self.hidden_size))
    }

    pub fn reset_all(&mut self) {
        self.states.clear();
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}
