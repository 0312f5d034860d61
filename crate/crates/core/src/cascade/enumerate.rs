//! Exhaustive traversal of a subtree with pairwise log-domain accumulation.
//!
//! The bottom `BLOCK_HEIGHT` levels are expanded breadth-first into a flat
//! buffer and reduced by pairwise halving relative to the energy of the
//! block root. Above that, block roots are visited depth-first with the
//! energies along the current path in a stack indexed by depth, and block
//! sums are merged like a binary counter: the sum of a completed left
//! subtree waits at its level until its right sibling completes. Every sum
//! is therefore formed pairwise bottom-up and memory stays
//! `O(2^BLOCK_HEIGHT + height * channels)`.

use serde::{Deserialize, Serialize};

use super::tree::{EnergySource, NodeId, TreeSpec};
use crate::error::{Error, Result};
use crate::logsum::{exp_bounded, LogSum};

const BLOCK_HEIGHT: u32 = 8;

/// Block sums are formed in linear scale only when every exponent relative
/// to the block root stays within this bound.
const LINEAR_RANGE: f64 = 700.0;

/// Observable `f` in a channel `sum_v f(V(v)) exp(-V(v))`.
pub type Observable<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// What to accumulate over the leaves of a traversal.
#[derive(Clone, Copy, Default)]
pub struct Channels<'a> {
    /// `sum exp(-theta V)` per entry.
    pub thetas: &'a [f64],
    /// `sum exp(-V) 1{lo <= V <= hi}` per entry.
    pub windows: &'a [(f64, f64)],
    /// `sum f(V) exp(-V)` per entry.
    pub observables: &'a [Observable<'a>],
}

impl<'a> Channels<'a> {
    pub fn thetas(thetas: &'a [f64]) -> Self {
        Channels {
            thetas,
            ..Default::default()
        }
    }

    fn len(&self) -> usize {
        self.thetas.len() + self.windows.len() + self.observables.len()
    }
}

/// Result of one traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeSums {
    pub theta: Vec<LogSum>,
    pub window: Vec<LogSum>,
    pub observable: Vec<LogSum>,
    pub min_v: f64,
    pub max_v: f64,
    /// Lexicographically smallest leaf attaining `min_v`.
    pub argmin: NodeId,
}

/// Pairwise sum of a power-of-two length buffer, destroying it.
#[inline]
fn halving_sum(buf: &mut [f64]) -> f64 {
    let mut w = buf.len();
    while w > 1 {
        w /= 2;
        let (lo, hi) = buf.split_at_mut(w);
        for (a, b) in lo.iter_mut().zip(&hi[..w]) {
            *a += *b;
        }
    }
    buf[0]
}

/// Log-domain pairwise sum of per-leaf terms; used when linear scale could
/// overflow or underflow.
fn log_domain_sum(len: usize, term: impl Fn(usize) -> LogSum) -> LogSum {
    let mut level: Vec<LogSum> = (0..len).map(term).collect();
    while level.len() > 1 {
        level = level.chunks(2).map(|p| p[0].merge(p[1])).collect();
    }
    level[0]
}

struct Block {
    energies: Vec<f64>,
    scratch: Vec<f64>,
    pairs: Vec<[f64; 2]>,
}

impl Block {
    fn new(height: u32) -> Self {
        Block {
            energies: vec![0.0; 1 << height],
            scratch: vec![0.0; 1 << height],
            pairs: vec![[0.0; 2]; 1 << height.saturating_sub(1)],
        }
    }

    /// Absolute leaf energies below `root`, accumulated top-down exactly as
    /// a path walk would.
    fn fill<S: EnergySource + ?Sized>(&mut self, source: &S, root: NodeId, v_root: f64, height: u32) {
        let e = &mut self.energies;
        e[0] = v_root;
        let base = root.heap_index();
        for level in 0..height {
            let width = 1usize << level;
            let pairs = &mut self.pairs[..width];
            source.level_increments(NodeId::from_heap_index(base << level), pairs);
            for i in (0..width).rev() {
                let [l, r] = pairs[i];
                let v = e[i];
                e[2 * i] = v + l;
                e[2 * i + 1] = v + r;
            }
        }
    }

    /// Accumulate every channel over the filled block into `out`.
    fn reduce(&mut self, v_root: f64, lo_rel: f64, hi_rel: f64, channels: &Channels<'_>, out: &mut [LogSum]) {
        let nt = channels.thetas.len();
        let nw = channels.windows.len();
        let energies = &self.energies;
        let tmp = &mut self.scratch;
        let linear = |scale: f64| scale * hi_rel < LINEAR_RANGE && scale * lo_rel > -LINEAR_RANGE;

        for (slot, &theta) in out[..nt].iter_mut().zip(channels.thetas) {
            let s = if linear(theta) {
                for (t, &v) in tmp.iter_mut().zip(energies) {
                    *t = exp_bounded(-theta * (v - v_root));
                }
                halving_sum(tmp)
            } else {
                f64::NAN
            };
            *slot = if s.is_finite() {
                LogSum::term(-theta * v_root, s)
            } else {
                log_domain_sum(energies.len(), |i| LogSum::term(-theta * energies[i], 1.0))
            };
        }
        let inside = |v: f64, lo: f64, hi: f64| lo <= v && v <= hi;
        for (slot, &(lo, hi)) in out[nt..nt + nw].iter_mut().zip(channels.windows) {
            let s = if linear(1.0) {
                for (t, &v) in tmp.iter_mut().zip(energies) {
                    *t = if inside(v, lo, hi) { exp_bounded(v_root - v) } else { 0.0 };
                }
                halving_sum(tmp)
            } else {
                f64::NAN
            };
            *slot = if s.is_finite() {
                LogSum::term(-v_root, s)
            } else {
                log_domain_sum(energies.len(), |i| {
                    let v = energies[i];
                    if inside(v, lo, hi) {
                        LogSum::term(-v, 1.0)
                    } else {
                        LogSum::EMPTY
                    }
                })
            };
        }
        for (slot, f) in out[nt + nw..].iter_mut().zip(channels.observables) {
            let s = if linear(1.0) {
                for (t, &v) in tmp.iter_mut().zip(energies) {
                    *t = f(v) * (v_root - v).exp();
                }
                halving_sum(tmp)
            } else {
                f64::NAN
            };
            *slot = if s.is_finite() {
                LogSum::term(-v_root, s)
            } else {
                log_domain_sum(energies.len(), |i| LogSum::term(-energies[i], f(energies[i])))
            };
        }
    }
}

/// Traverse all `2^height` descendants of `root` at relative depth
/// `height`, where `v_root` is the energy of `root` itself.
pub fn sum_subtree<S: EnergySource + ?Sized>(
    source: &S,
    root: NodeId,
    v_root: f64,
    height: u32,
    channels: &Channels<'_>,
) -> SubtreeSums {
    let nt = channels.thetas.len();
    let nw = channels.windows.len();
    let k = channels.len();
    let b = height.min(BLOCK_HEIGHT);
    // depth-first part runs down to the block roots
    let h = (height - b) as usize;

    let mut block = Block::new(b);
    let mut acc = vec![LogSum::EMPTY; k];
    let mut pending = vec![LogSum::EMPTY; (h + 1) * k];
    let mut occupied: u64 = 0;

    let mut v = vec![0.0f64; h + 1];
    let mut right_cache = vec![0.0f64; h + 1];
    v[0] = v_root;
    let node_at = |d: usize, j: u64| -> NodeId {
        NodeId::from_heap_index((root.heap_index() << d) | (j >> (h - d)))
    };
    for d in 1..=h {
        let [l, r] = source.child_increments(node_at(d - 1, 0));
        right_cache[d] = r;
        v[d] = v[d - 1] + l;
    }

    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let mut argmin = NodeId::ROOT;

    for j in 0..1u64 << h {
        if j > 0 {
            // block root j differs from j-1 in its lowest `changed` path bits
            let changed = (j - 1).trailing_ones() as usize + 1;
            let top = h + 1 - changed;
            v[top] = v[top - 1] + right_cache[top];
            for d in top + 1..=h {
                let [l, r] = source.child_increments(node_at(d - 1, j));
                right_cache[d] = r;
                v[d] = v[d - 1] + l;
            }
        }
        let block_root = node_at(h, j);
        let vb = v[h];
        block.fill(source, block_root, vb, b);

        let (mut lo, mut hi, mut at) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for (i, &e) in block.energies.iter().enumerate() {
            if e < lo {
                lo = e;
                at = i;
            }
            hi = hi.max(e);
        }
        if lo < min_v {
            min_v = lo;
            argmin = NodeId::from_heap_index((block_root.heap_index() << b) | at as u64);
        }
        max_v = max_v.max(hi);
        if k > 0 {
            block.reduce(vb, lo - vb, hi - vb, channels, &mut acc);
        }

        let mut level = 0usize;
        while occupied & (1u64 << level) != 0 {
            let waiting = &pending[level * k..(level + 1) * k];
            for (a, &left) in acc.iter_mut().zip(waiting) {
                *a = left.merge(*a);
            }
            occupied &= !(1u64 << level);
            level += 1;
        }
        pending[level * k..(level + 1) * k].copy_from_slice(&acc);
        occupied |= 1u64 << level;
    }

    debug_assert_eq!(occupied, 1u64 << h);
    let total = &pending[h * k..(h + 1) * k];
    SubtreeSums {
        theta: total[..nt].to_vec(),
        window: total[nt..nt + nw].to_vec(),
        observable: total[nt + nw..].to_vec(),
        min_v,
        max_v,
        argmin,
    }
}

/// Sums over generation `n` of a whole tree.
pub fn sum_generation<S: EnergySource + ?Sized>(source: &S, n: u32, channels: &Channels<'_>) -> SubtreeSums {
    sum_subtree(source, NodeId::ROOT, 0.0, n, channels)
}

fn validate_thetas(thetas: &[f64]) -> Result<()> {
    if let Some(bad) = thetas.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::domain("theta", format!("exponents must be positive, got {bad}")));
    }
    Ok(())
}

/// `log sum_{|v|=n} exp(-theta V(v))` for every requested exponent, plus
/// extremal energies. The exponent 1 is always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub n: u32,
    pub thetas: Vec<f64>,
    pub log_sums: Vec<f64>,
    pub min_v: f64,
    pub max_v: f64,
    pub argmin: NodeId,
}

impl Enumeration {
    pub fn log_sum(&self, theta: f64) -> Option<f64> {
        self.thetas
            .iter()
            .position(|&t| t == theta)
            .map(|i| self.log_sums[i])
    }

    pub fn log_wn(&self) -> f64 {
        self.log_sums[0]
    }
}

pub fn enumerate_partition(spec: &TreeSpec, exponents: &[f64]) -> Result<Enumeration> {
    spec.budget().check_enumerate(spec.n())?;
    enumerate_source(spec, spec.n(), exponents)
}

/// [`enumerate_partition`] for an arbitrary energy source, without budget
/// checks.
pub fn enumerate_source<S: EnergySource + ?Sized>(source: &S, n: u32, exponents: &[f64]) -> Result<Enumeration> {
    validate_thetas(exponents)?;
    let mut thetas = vec![1.0];
    thetas.extend(exponents.iter().copied().filter(|&t| t != 1.0));
    let sums = sum_generation(source, n, &Channels::thetas(&thetas));
    Ok(Enumeration {
        n,
        log_sums: sums.theta.iter().map(|s| s.ln()).collect(),
        thetas,
        min_v: sums.min_v,
        max_v: sums.max_v,
        argmin: sums.argmin,
    })
}

/// One replica's partition functions at generation `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSample {
    pub replica_index: u64,
    pub n: u32,
    pub log_wn: f64,
    /// `log W_n^{-,delta}`; present when a perturbation size was requested.
    pub log_wn_minus_delta: Option<f64>,
    /// `log W_n^{+,delta}`.
    pub log_wn_plus_delta: Option<f64>,
    /// `(gamma, log W_{n,gamma})` per requested gamma.
    pub log_wn_gamma: Vec<(f64, f64)>,
    pub min_v: f64,
    pub max_v: f64,
    /// Gibbs mass of an energy window, when one was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_mass: Option<f64>,
}

/// Direction of the exponent perturbation `1 + sign * n^-delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(Sign::Plus),
            "minus" | "-" => Ok(Sign::Minus),
            other => Err(Error::domain("sign", format!("expected plus or minus, got {other:?}"))),
        }
    }
}

/// `W_n^{+,delta}` or `W_n^{-,delta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub delta: f64,
    pub sign: Sign,
}

impl Perturbation {
    pub fn new(delta: f64, sign: Sign) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::domain("delta", "must be positive"));
        }
        Ok(Perturbation { delta, sign })
    }

    /// Exponent `1 +- n^-delta` applied to `V` at generation `n`.
    pub fn exponent(&self, n: u32) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("n", "perturbations need n >= 1"));
        }
        let theta = 1.0 + self.sign.factor() * (n as f64).powf(-self.delta);
        if !(theta > 0.0) {
            return Err(Error::domain("delta", "1 - n^-delta must be positive (needs n >= 2)"));
        }
        Ok(theta)
    }
}

/// `log sum_{|v|=n} exp(-theta V(v))` alone: one channel, so the cheapest
/// traversal for a single partition function.
pub fn log_partition(spec: &TreeSpec, theta: f64) -> Result<f64> {
    validate_thetas(&[theta])?;
    spec.budget().check_enumerate(spec.n())?;
    Ok(sum_generation(spec, spec.n(), &Channels::thetas(&[theta])).theta[0].ln())
}

/// Perturbation exponents `1 -+ n^-delta`.
pub fn perturbed_exponents(n: u32, delta: f64) -> (f64, f64) {
    let eps = (n as f64).powf(-delta);
    (1.0 - eps, 1.0 + eps)
}

impl PartitionSample {
    pub fn compute(spec: &TreeSpec, delta: Option<f64>, gammas: &[f64]) -> Result<Self> {
        Self::compute_with_window(spec, delta, gammas, None)
    }

    /// [`PartitionSample::compute`] that also measures the Gibbs mass of
    /// `lo <= V <= hi` in the same traversal.
    pub fn compute_with_window(
        spec: &TreeSpec,
        delta: Option<f64>,
        gammas: &[f64],
        window: Option<(f64, f64)>,
    ) -> Result<Self> {
        if let Some(d) = delta {
            if !(d > 0.0) {
                return Err(Error::domain("delta", "must be positive"));
            }
            if spec.n() == 0 {
                return Err(Error::domain("n", "perturbations need n >= 1"));
            }
        }
        validate_thetas(gammas)?;
        let mut thetas = vec![1.0];
        if let Some(d) = delta {
            let (minus, plus) = perturbed_exponents(spec.n(), d);
            if !(minus > 0.0) {
                // n = 1 gives exponent 0 for the negative perturbation
                return Err(Error::domain("delta", "1 - n^-delta must be positive (needs n >= 2)"));
            }
            thetas.push(minus);
            thetas.push(plus);
        }
        thetas.extend_from_slice(gammas);
        spec.budget().check_enumerate(spec.n())?;
        let windows: Vec<(f64, f64)> = window.into_iter().collect();
        let sums = sum_generation(
            spec,
            spec.n(),
            &Channels {
                thetas: &thetas,
                windows: &windows,
                observables: &[],
            },
        );
        let logs: Vec<f64> = sums.theta.iter().map(|s| s.ln()).collect();
        let offset = if delta.is_some() { 3 } else { 1 };
        Ok(PartitionSample {
            replica_index: spec.replica_index(),
            n: spec.n(),
            log_wn: logs[0],
            log_wn_minus_delta: delta.map(|_| logs[1]),
            log_wn_plus_delta: delta.map(|_| logs[2]),
            log_wn_gamma: gammas.iter().copied().zip(logs[offset..].iter().copied()).collect(),
            min_v: sums.min_v,
            max_v: sums.max_v,
            window_mass: window.map(|(lo, hi)| {
                if lo > hi {
                    0.0
                } else {
                    (sums.window[0].ln() - logs[0]).exp().clamp(0.0, 1.0)
                }
            }),
        })
    }
}

/// Energies of all `2^n` generation-`n` vertices in path order. Memory is
/// `O(2^n)`, so this shares the Gibbs budget.
pub fn leaf_energies(spec: &TreeSpec) -> Result<Vec<f64>> {
    spec.budget().check_gibbs(spec.n())?;
    Ok(source_leaf_energies(spec, spec.n()))
}

pub fn source_leaf_energies<S: EnergySource + ?Sized>(source: &S, n: u32) -> Vec<f64> {
    let mut level = vec![0.0];
    let mut pairs = Vec::new();
    for depth in 0..n {
        pairs.resize(level.len(), [0.0; 2]);
        source.level_increments(NodeId::from_heap_index(1 << depth), &mut pairs);
        level = level
            .iter()
            .zip(&pairs)
            .flat_map(|(v, [l, r])| [v + l, v + r])
            .collect();
    }
    level
}

/// Gibbs mass of generation-`n` vertices with `lo <= V <= hi`.
pub fn window_mass<S: EnergySource + ?Sized>(source: &S, n: u32, lo: f64, hi: f64) -> f64 {
    if lo > hi {
        return 0.0;
    }
    let windows = [(lo, hi)];
    let sums = sum_generation(
        source,
        n,
        &Channels {
            thetas: &[1.0],
            windows: &windows,
            observables: &[],
        },
    );
    let ratio = (sums.window[0].ln() - sums.theta[0].ln()).exp();
    ratio.clamp(0.0, 1.0)
}

/// Energy window `[n^(1/2 - eps), n^(1/2 + eps')]`.
pub fn critical_window(n: u32, eps: f64, eps_prime: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain("eps", "must lie in (0, 1/2)"));
    }
    if !(eps_prime > 0.0) {
        return Err(Error::domain("eps_prime", "must be positive"));
    }
    let n = n as f64;
    Ok((n.powf(0.5 - eps), n.powf(0.5 + eps_prime)))
}

/// Critical Gibbs mass of the window `[n^(1/2 - eps), n^(1/2 + eps')]`.
pub fn gibbs_window_mass(spec: &TreeSpec, eps: f64, eps_prime: f64) -> Result<f64> {
    spec.budget().check_enumerate(spec.n())?;
    let (lo, hi) = critical_window(spec.n(), eps, eps_prime)?;
    Ok(window_mass(spec, spec.n(), lo, hi))
}

/// Exact minimum of `V` over generation `n` and the lexicographically
/// smallest vertex attaining it.
pub fn min_energy_stats(spec: &TreeSpec) -> Result<(f64, NodeId)> {
    spec.budget().check_enumerate(spec.n())?;
    let s = sum_generation(spec, spec.n(), &Channels::default());
    Ok((s.min_v, s.argmin))
}
