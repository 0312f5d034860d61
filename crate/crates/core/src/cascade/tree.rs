use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::environment::{CriticalPoint, EnvironmentModel};
use crate::error::{Error, Result};
use crate::rng::{Purpose, SlotRng, StreamKey};

/// Stream slots reserved per sibling pair; a Gaussian pair needs two unless
/// the ziggurat rejects.
const SLOTS_PER_PAIR: u64 = 4;

/// Hard ceiling for tree depth: heap indices of depth-`n` vertices need
/// `n + 1` bits.
pub const MAX_DEPTH: u32 = 62;

/// A vertex of the binary tree, stored as its heap index: the root is 1 and
/// the children of `i` are `2i` (left) and `2i + 1` (right). The path from
/// the root is the binary expansion below the leading one, so numeric order
/// among vertices of equal depth is lexicographic order of paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(u64);

impl NodeId {
    pub const ROOT: NodeId = NodeId(1);

    /// Vertex reached from the root by the `depth` lowest bits of `path`,
    /// most significant first; bit value 1 means "right".
    pub fn from_path(depth: u32, path: u64) -> Self {
        assert!(depth <= MAX_DEPTH, "depth {depth} exceeds {MAX_DEPTH}");
        assert!(depth == 64 || path >> depth == 0, "path has bits above depth");
        NodeId((1u64 << depth) | path)
    }

    #[inline]
    pub fn from_heap_index(index: u64) -> Self {
        assert!(index >= 1, "heap indices start at 1");
        NodeId(index)
    }

    #[inline]
    pub fn heap_index(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn depth(self) -> u32 {
        63 - self.0.leading_zeros()
    }

    /// Path bits below the leading one.
    #[inline]
    pub fn path(self) -> u64 {
        self.0 ^ (1u64 << self.depth())
    }

    #[inline]
    pub fn child(self, right: bool) -> NodeId {
        NodeId((self.0 << 1) | right as u64)
    }

    #[inline]
    pub fn parent(self) -> Option<NodeId> {
        (self.0 > 1).then_some(NodeId(self.0 >> 1))
    }

    #[inline]
    pub fn is_right_child(self) -> bool {
        self.0 > 1 && self.0 & 1 == 1
    }

    /// Left/right choices from the root, `false` = left.
    pub fn turns(self) -> Vec<bool> {
        let d = self.depth();
        (0..d).rev().map(|i| (self.path() >> i) & 1 == 1).collect()
    }
}

impl fmt::Display for NodeId {
    /// Path as a string of `L`/`R` turns; the root prints as `o`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.depth() == 0 {
            return f.write_str("o");
        }
        for right in self.turns() {
            f.write_str(if right { "R" } else { "L" })?;
        }
        Ok(())
    }
}

/// Supplies the normalized-energy increments `V(child) - V(parent)` of the
/// two children of a vertex. Must be a pure function of `parent`.
pub trait EnergySource: Sync {
    fn child_increments(&self, parent: NodeId) -> [f64; 2];

    /// Increments below the consecutive parents `first, first + 1, ...` (in
    /// heap order), one pair per entry of `out`.
    fn level_increments(&self, first: NodeId, out: &mut [[f64; 2]]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.child_increments(NodeId::from_heap_index(first.heap_index() + i as u64));
        }
    }
}

/// Work caps for exhaustive traversals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub enumerate_cap: u32,
    pub gibbs_cap: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            enumerate_cap: 30,
            gibbs_cap: 24,
        }
    }
}

impl Budget {
    /// Caps lifted to the representable maximum.
    pub fn forced() -> Self {
        Budget {
            enumerate_cap: MAX_DEPTH,
            gibbs_cap: MAX_DEPTH,
        }
    }

    pub fn check_enumerate(&self, n: u32) -> Result<()> {
        check_cap("enumeration", n, self.enumerate_cap)
    }

    pub fn check_gibbs(&self, n: u32) -> Result<()> {
        check_cap("gibbs sampling", n, self.gibbs_cap)
    }
}

fn check_cap(operation: &'static str, n: u32, cap: u32) -> Result<()> {
    if n > cap.min(MAX_DEPTH) {
        return Err(Error::BudgetExceeded {
            operation,
            n,
            cap: cap.min(MAX_DEPTH),
        });
    }
    Ok(())
}

/// One disordered tree truncated at generation `n`. The noise at every
/// vertex is a pure function of `(master_seed, replica_index, vertex)`.
#[derive(Debug, Clone)]
pub struct TreeSpec {
    model: EnvironmentModel,
    cp: CriticalPoint,
    n: u32,
    master_seed: u64,
    replica_index: u64,
    budget: Budget,
    key: StreamKey,
    shift: f64,
}

impl TreeSpec {
    pub fn new(
        model: EnvironmentModel,
        cp: CriticalPoint,
        n: u32,
        master_seed: u64,
        replica_index: u64,
    ) -> Result<Self> {
        model.validate()?;
        if n > MAX_DEPTH {
            return Err(Error::domain("n", format!("must not exceed {MAX_DEPTH}")));
        }
        Ok(TreeSpec {
            model,
            cp,
            n,
            master_seed,
            replica_index,
            budget: Budget::default(),
            key: StreamKey::for_purpose(master_seed, Purpose::TreeNoise).child(replica_index),
            shift: cp.shift(),
        })
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    /// Same environment, different truncation depth. Trees sharing seed and
    /// replica are nested: the depth-`m` tree is a prefix of the depth-`n`
    /// one.
    pub fn at_depth(&self, n: u32) -> Result<Self> {
        let mut t = Self::new(self.model, self.cp, n, self.master_seed, self.replica_index)?;
        t.budget = self.budget;
        Ok(t)
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }
    pub fn critical_point(&self) -> &CriticalPoint {
        &self.cp
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
    pub fn replica_index(&self) -> u64 {
        self.replica_index
    }
    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Noise of both children of `parent`: slots `4p .. 4p + 4` of the
    /// replica stream for parent heap index `p`, then a stream keyed by the
    /// pair if those run out.
    #[inline(always)]
    pub fn child_noise(&self, parent: NodeId) -> [f64; 2] {
        let mut rng = SlotRng::new(self.key, SLOTS_PER_PAIR * parent.heap_index(), SLOTS_PER_PAIR);
        let left = self.model.sample(&mut rng);
        let right = self.model.sample(&mut rng);
        [left, right]
    }
}

impl TreeSpec {
    #[inline(always)]
    fn fill_level<F: Fn(&mut SlotRng) -> f64>(&self, first: NodeId, out: &mut [[f64; 2]], draw: F) {
        let b = self.cp.beta_c;
        let base = SLOTS_PER_PAIR * first.heap_index();
        for (i, slot) in out.iter_mut().enumerate() {
            let mut rng = SlotRng::new(self.key, base + SLOTS_PER_PAIR * i as u64, SLOTS_PER_PAIR);
            let l = draw(&mut rng);
            let r = draw(&mut rng);
            *slot = [self.shift - b * l, self.shift - b * r];
        }
    }
}

impl EnergySource for TreeSpec {
    #[inline(always)]
    fn child_increments(&self, parent: NodeId) -> [f64; 2] {
        let [l, r] = self.child_noise(parent);
        let b = self.cp.beta_c;
        [self.shift - b * l, self.shift - b * r]
    }

    fn level_increments(&self, first: NodeId, out: &mut [[f64; 2]]) {
        // one dispatch per level instead of per draw; the draws must match
        // `EnvironmentModel::sample` exactly
        match *self.model() {
            EnvironmentModel::Gaussian { mean, std_dev } => self.fill_level(first, out, |rng| {
                let z: f64 = rng.sample(StandardNormal);
                mean + std_dev * z
            }),
            model => self.fill_level(first, out, |rng| model.sample(rng)),
        }
    }
}

/// `omega(v)`. The root carries no noise; asking for it returns 0.
pub fn node_noise(spec: &TreeSpec, id: NodeId) -> Result<f64> {
    if id.depth() > spec.n() {
        return Err(Error::domain("node", format!("depth {} exceeds n = {}", id.depth(), spec.n())));
    }
    Ok(match id.parent() {
        None => 0.0,
        Some(p) => spec.child_noise(p)[id.is_right_child() as usize],
    })
}

/// A tree with explicitly listed increments, indexed by heap index of the
/// child (entry 0 and 1 unused). Handy for hand-built examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitTree {
    increments: Vec<f64>,
}

impl ExplicitTree {
    /// `increments[i]` is `V(i) - V(parent(i))` for heap index `i >= 2`;
    /// the length must be `2^(depth+1)`.
    pub fn new(increments: Vec<f64>) -> Result<Self> {
        let len = increments.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::domain("increments", "length must be 2^(depth+1)"));
        }
        Ok(ExplicitTree { increments })
    }

    /// Depth-1 tree with the given two leaf energies.
    pub fn two_leaves(left: f64, right: f64) -> Self {
        ExplicitTree {
            increments: vec![0.0, 0.0, left, right],
        }
    }

    pub fn depth(&self) -> u32 {
        self.increments.len().trailing_zeros() - 1
    }
}

impl EnergySource for ExplicitTree {
    fn child_increments(&self, parent: NodeId) -> [f64; 2] {
        let i = 2 * parent.heap_index() as usize;
        [self.increments[i], self.increments[i + 1]]
    }
}
