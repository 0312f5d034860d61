//! Exact sampling from the critical polymer measure `exp(-V(v)) / W_n` by
//! top-down descent. Both child-subtree partition sums are recomputed from
//! the noise at every step, so nothing is stored.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::enumerate::{sum_subtree, Channels};
use super::tree::{EnergySource, NodeId, TreeSpec};
use crate::error::Result;
use crate::rng::open01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsPath {
    pub leaf: NodeId,
    /// `V(xi_1), ..., V(xi_n)` along the sampled path.
    pub energies: Vec<f64>,
}

/// Probability of branching left given the log-partition sums of the two
/// child subtrees.
#[inline]
pub fn left_probability(log_left: f64, log_right: f64) -> f64 {
    let d = log_right - log_left;
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

pub fn gibbs_sample_path<R: RngCore + ?Sized>(spec: &TreeSpec, rng: &mut R) -> Result<GibbsPath> {
    spec.budget().check_gibbs(spec.n())?;
    Ok(sample_path(spec, spec.n(), rng))
}

/// Descent on an arbitrary energy source, without budget checks.
pub fn sample_path<S: EnergySource + ?Sized, R: RngCore + ?Sized>(source: &S, n: u32, rng: &mut R) -> GibbsPath {
    let thetas = [1.0];
    let channels = Channels::thetas(&thetas);
    let mut node = NodeId::ROOT;
    let mut v = 0.0;
    let mut energies = Vec::with_capacity(n as usize);
    for depth in 0..n {
        let [inc_l, inc_r] = source.child_increments(node);
        let (v_l, v_r) = (v + inc_l, v + inc_r);
        let below = n - depth - 1;
        let log_l = sum_subtree(source, node.child(false), v_l, below, &channels).theta[0].ln();
        let log_r = sum_subtree(source, node.child(true), v_r, below, &channels).theta[0].ln();
        let go_right = open01(rng.next_u64()) >= left_probability(log_l, log_r);
        node = node.child(go_right);
        v = if go_right { v_r } else { v_l };
        energies.push(v);
    }
    GibbsPath { leaf: node, energies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::tree::ExplicitTree;
    use crate::environment::{solve_beta_c, EnvironmentModel};
    use crate::error::Error;
    use crate::rng::{Purpose, StreamKey};

    #[test]
    fn branching_probabilities() {
        // V(L) = 0, V(R) = log 3
        assert!((left_probability(0.0, -(3f64.ln())) - 0.75).abs() < 1e-15);
        assert_eq!(left_probability(-2.0, -2.0), 0.5);
        assert!(left_probability(-800.0, 0.0) >= 0.0);
        assert!(left_probability(0.0, -800.0) <= 1.0);
    }

    #[test]
    fn one_level_frequencies() {
        let t = ExplicitTree::two_leaves(0.0, 3f64.ln());
        let mut rng = StreamKey::for_purpose(1, Purpose::Test).stream();
        let draws = 40_000;
        let left = (0..draws)
            .filter(|_| !sample_path(&t, 1, &mut rng).leaf.is_right_child())
            .count() as f64
            / draws as f64;
        let se = (0.75f64 * 0.25 / draws as f64).sqrt();
        assert!((left - 0.75).abs() < 4.0 * se);
    }

    #[test]
    fn path_energies_are_consistent() {
        let m = EnvironmentModel::standard_gaussian();
        let spec = TreeSpec::new(m, solve_beta_c(&m).unwrap(), 8, 3, 3).unwrap();
        let mut rng = StreamKey::for_purpose(3, Purpose::GibbsDescent).stream();
        let p = gibbs_sample_path(&spec, &mut rng).unwrap();
        assert_eq!(p.leaf.depth(), 8);
        assert_eq!(p.energies.len(), 8);
        let mut node = NodeId::ROOT;
        let mut v = 0.0;
        for (right, &e) in p.leaf.turns().into_iter().zip(&p.energies) {
            v += spec.child_increments(node)[right as usize];
            node = node.child(right);
            assert_eq!(v, e);
        }
    }

    #[test]
    fn gibbs_budget() {
        let m = EnvironmentModel::standard_gaussian();
        let spec = TreeSpec::new(m, solve_beta_c(&m).unwrap(), 25, 3, 3).unwrap();
        let mut rng = StreamKey::new(0).stream();
        assert!(matches!(gibbs_sample_path(&spec, &mut rng), Err(Error::BudgetExceeded { .. })));
    }
}
