//! The weighted binary tree: counter-keyed vertex noise, exhaustive
//! log-domain enumeration, exact Gibbs sampling and extremal energies.

mod enumerate;
mod gibbs;
mod tree;

pub use enumerate::{
    critical_window, enumerate_partition, enumerate_source, gibbs_window_mass, leaf_energies, log_partition,
    min_energy_stats, perturbed_exponents, sum_generation, sum_subtree, window_mass, Channels, Enumeration, Observable,
    PartitionSample, Perturbation, Sign, SubtreeSums, source_leaf_energies,
};
pub use gibbs::{gibbs_sample_path, left_probability, sample_path, GibbsPath};
pub use tree::{node_noise, Budget, EnergySource, ExplicitTree, NodeId, TreeSpec, MAX_DEPTH};
