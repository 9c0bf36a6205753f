//! Proportional prioritized replay over a sum tree.

use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// One experience record. Priorities live in the buffer, not here.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    pub done: bool,
}

/// Binary tree of partial sums over a power-of-two number of leaves.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    /// Node 1 is the root; leaf `i` lives at `leaves + i`.
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.leaves + leaf]
    }

    pub fn set(&mut self, leaf: usize, priority: f64) {
        debug_assert!(priority >= 0.0 && priority.is_finite());
        let mut i = self.leaves + leaf;
        self.nodes[i] = priority;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf whose cumulative interval `[prefix, prefix + p)` contains `mass`.
    /// Never returns a zero-priority leaf while the total is positive.
    pub fn find(&self, mass: f64) -> usize {
        let mut c = mass.clamp(0.0, self.total());
        let mut i = 1;
        while i < self.leaves {
            let left = 2 * i;
            let right = left + 1;
            if c < self.nodes[left] || self.nodes[right] <= 0.0 {
                i = left;
                c = c.min(self.nodes[left]);
            } else {
                c -= self.nodes[left];
                i = right;
            }
        }
        let leaf = i - self.leaves;
        if self.nodes[i] > 0.0 {
            leaf
        } else {
            // rounding at a right edge: step back to the nearest occupied leaf
            (0..leaf).rev().find(|&l| self.get(l) > 0.0).unwrap_or(leaf)
        }
    }

    /// Largest relative discrepancy between any internal node and the sum
    /// of its children.
    pub fn max_inconsistency(&self) -> f64 {
        (1..self.leaves)
            .map(|i| {
                let s = self.nodes[2 * i] + self.nodes[2 * i + 1];
                (self.nodes[i] - s).abs() / s.abs().max(1e-300)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerConfig {
    pub capacity: usize,
    /// Priority exponent; 0 gives uniform replay.
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Priority floor added to `|delta|`.
    pub eps: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            capacity: 100_000,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            eps: 0.01,
        }
    }
}

impl PerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(config_err("replay.capacity", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(config_err("replay.alpha", "must lie in [0, 1]"));
        }
        for (k, b) in [("beta_start", self.beta_start), ("beta_end", self.beta_end)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(config_err(format!("replay.{k}"), "must lie in [0, 1]"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(config_err("replay.eps", "must be positive"));
        }
        Ok(())
    }

    /// IS exponent linearly annealed over `progress` in `[0, 1]`.
    pub fn beta_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.beta_start + (self.beta_end - self.beta_start) * p
    }

    pub fn priority(&self, abs_td: f64) -> f64 {
        (abs_td.abs() + self.eps).powf(self.alpha)
    }
}

/// Handle to a sampled slot; goes stale once the slot is overwritten.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafId {
    pub slot: usize,
    generation: u64,
}

#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub ids: Vec<LeafId>,
    /// Importance-sampling weights normalized by the batch maximum.
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplayStats {
    pub size: usize,
    pub root_sum: f64,
    pub mean_priority: f64,
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    cfg: PerConfig,
    tree: SumTree,
    slots: Vec<Option<(Transition, u64)>>,
    cursor: usize,
    size: usize,
    inserted: u64,
    max_priority: f64,
    obs_dim: Option<usize>,
}

impl PrioritizedReplay {
    pub fn new(cfg: PerConfig) -> Self {
        let tree = SumTree::new(cfg.capacity);
        Self {
            slots: vec![None; cfg.capacity],
            tree,
            cfg,
            cursor: 0,
            size: 0,
            inserted: 0,
            max_priority: 1.0,
            obs_dim: None,
        }
    }

    pub fn config(&self) -> &PerConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    /// Total insertions since creation, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn stats(&self) -> ReplayStats {
        let root_sum = self.tree.total();
        ReplayStats {
            size: self.size,
            root_sum,
            mean_priority: if self.size == 0 { 0.0 } else { root_sum / self.size as f64 },
        }
    }

    fn check_shape(&mut self, t: &Transition) -> Result<()> {
        let dim = *self.obs_dim.get_or_insert(t.state.len());
        if t.state.len() != dim || t.next.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: t.state.len().max(t.next.len()),
            });
        }
        if !t.reward.is_finite() {
            return Err(crate::error::domain("non-finite reward"));
        }
        Ok(())
    }

    fn store(&mut self, t: Transition, priority: f64) -> LeafId {
        let slot = self.cursor;
        self.inserted += 1;
        self.slots[slot] = Some((t, self.inserted));
        self.tree.set(slot, priority);
        self.max_priority = self.max_priority.max(priority);
        self.cursor = (self.cursor + 1) % self.cfg.capacity;
        self.size = (self.size + 1).min(self.cfg.capacity);
        LeafId {
            slot,
            generation: self.inserted,
        }
    }

    /// Stores `t` with priority `(|delta| + eps)^alpha`, evicting the oldest
    /// entry when full.
    pub fn insert(&mut self, t: Transition, abs_td: f64) -> Result<LeafId> {
        self.check_shape(&t)?;
        let p = self.cfg.priority(abs_td);
        Ok(self.store(t, p))
    }

    /// Stores `t` at the largest priority seen so far.
    pub fn push(&mut self, t: Transition) -> Result<LeafId> {
        self.check_shape(&t)?;
        let p = if self.cfg.alpha == 0.0 { 1.0 } else { self.max_priority };
        Ok(self.store(t, p))
    }

    pub fn probability(&self, slot: usize) -> f64 {
        self.tree.get(slot) / self.tree.total()
    }

    /// Stratified proportional sampling: the total mass is cut into
    /// `batch_size` equal segments with one uniform draw per segment.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        if batch_size == 0 || self.size < batch_size {
            return Err(Error::Underfilled {
                size: self.size,
                requested: batch_size,
            });
        }
        let total = self.tree.total();
        let seg = total / batch_size as f64;
        let n = self.size as f64;
        let mut transitions = Vec::with_capacity(batch_size);
        let mut ids = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let mass = seg * (i as f64 + rng.gen::<f64>());
            let slot = self.tree.find(mass);
            let (t, generation) = self.slots[slot]
                .as_ref()
                .expect("positive-priority leaves are always occupied");
            transitions.push(t.clone());
            ids.push(LeafId {
                slot,
                generation: *generation,
            });
            weights.push((n * self.tree.get(slot) / total).powf(-beta));
        }
        let wmax = weights.iter().cloned().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= wmax);
        Ok(SampledBatch {
            transitions,
            ids,
            weights,
        })
    }

    /// Refreshes priorities from new `|delta|` values. Ids whose slot has
    /// been overwritten since sampling are skipped. Returns how many were
    /// applied.
    pub fn update_priorities(&mut self, ids: &[LeafId], abs_td: &[f64]) -> Result<usize> {
        if ids.len() != abs_td.len() {
            return Err(Error::Shape {
                expected: ids.len(),
                got: abs_td.len(),
            });
        }
        let mut applied = 0;
        for (id, td) in ids.iter().zip(abs_td) {
            match &self.slots[id.slot] {
                Some((_, g)) if *g == id.generation => {
                    let p = self.cfg.priority(*td);
                    self.tree.set(id.slot, p);
                    self.max_priority = self.max_priority.max(p);
                    applied += 1;
                }
                _ => {}
            }
        }
        Ok(applied)
    }
}

/// Buffer shared between rollout workers and the learner. Every operation
/// takes the lock for its full duration.
pub type SharedReplay = Arc<Mutex<PrioritizedReplay>>;

pub fn shared(cfg: PerConfig) -> SharedReplay {
    Arc::new(Mutex::new(PrioritizedReplay::new(cfg)))
}
