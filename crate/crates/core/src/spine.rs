//! The size-biased measure: tilted spine increments, spine random walks and
//! many-to-one estimators.
//!
//! Under the size-biased law the energies along the marked ray form a
//! random walk whose increment has the law of `V_0 = -beta_c omega +
//! lambda(beta_c) + log 2` reweighted by `2 exp(-V_0)`. This turns
//! `E[sum_{|v|=n} f(V(v)) exp(-V(v))]` into `E_Q[f(S_n)]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{sum_generation, Channels, TreeSpec};
use crate::environment::{CriticalPoint, EnvironmentModel};
use crate::error::Result;
use crate::replicas::{run_replicas, try_run_replicas};
use crate::rng::StreamKey;
use crate::stats::MeanEstimate;

/// Law of one spine increment `S_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineIncrementDist {
    pub model: EnvironmentModel,
    pub cp: CriticalPoint,
}

impl SpineIncrementDist {
    pub fn new(model: EnvironmentModel, cp: CriticalPoint) -> Self {
        SpineIncrementDist { model, cp }
    }

    /// `S_1 = -beta_c omega + lambda_c + log 2` for a tilted `omega`.
    #[inline]
    pub fn map_noise(&self, omega: f64) -> f64 {
        self.cp.shift() - self.cp.beta_c * omega
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.map_noise(self.model.sample_tilted(self.cp.beta_c, rng))
    }

    /// `Var_Q(S_1) = beta_c^2 lambda''(beta_c)`.
    pub fn variance(&self) -> f64 {
        self.cp.sigma_sq
    }

    /// Atoms `(s, Q(S_1 = s))` when the environment is discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        let q = self.model.tilted_plus_probability(self.cp.beta_c)?;
        Some(vec![(self.map_noise(1.0), q), (self.map_noise(-1.0), 1.0 - q)])
    }

    /// `E_Q[F(S_1)] = 2 E[F(V_0) exp(-V_0)]`, integrated against the base law
    /// of the environment rather than sampled.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, rel_tol: f64) -> Result<f64> {
        self.model.expectation(
            |omega| {
                let v = self.map_noise(omega);
                2.0 * f(v) * (-v).exp()
            },
            rel_tol,
        )
    }
}

pub fn sample_spine_increment<R: Rng + ?Sized>(dist: &SpineIncrementDist, rng: &mut R) -> f64 {
    dist.sample(rng)
}

/// `S_0 = 0, S_1, ..., S_n` with its running minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineWalk {
    pub trajectory: Vec<f64>,
    /// `min_{0 <= j <= n} S_j`; never positive since `S_0 = 0`.
    pub running_min: f64,
}

impl SpineWalk {
    pub fn n(&self) -> usize {
        self.trajectory.len() - 1
    }

    pub fn end(&self) -> f64 {
        *self.trajectory.last().expect("trajectory holds S_0")
    }
}

pub fn sample_spine_walk<R: Rng + ?Sized>(dist: &SpineIncrementDist, n: usize, rng: &mut R) -> SpineWalk {
    let mut trajectory = Vec::with_capacity(n + 1);
    trajectory.push(0.0);
    let mut s = 0.0;
    let mut running_min = 0.0f64;
    for _ in 0..n {
        s += dist.sample(rng);
        running_min = running_min.min(s);
        trajectory.push(s);
    }
    SpineWalk { trajectory, running_min }
}

/// Endpoint and running minimum of a walk, drawing exactly the increments
/// [`sample_spine_walk`] would but without storing them.
pub fn sample_walk_end_and_min<R: Rng + ?Sized>(dist: &SpineIncrementDist, n: usize, rng: &mut R) -> (f64, f64) {
    let mut s = 0.0;
    let mut low = 0.0f64;
    for _ in 0..n {
        s += dist.sample(rng);
        low = low.min(s);
    }
    (s, low)
}

/// Monte Carlo `E_Q[f(S_n)]`; replica `r` draws from `key.child(r)`.
pub fn many_to_one<F>(dist: &SpineIncrementDist, n: usize, f: F, replicas: u64, key: StreamKey, workers: usize) -> MeanEstimate
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let values = run_replicas(replicas, workers, |r| {
        let mut rng = key.child(r).stream();
        let (end, _) = sample_walk_end_and_min(dist, n, &mut rng);
        f(end)
    });
    MeanEstimate::from_samples(&values)
}

/// Monte Carlo `E[sum_{|v|=n} f(V(v)) exp(-V(v))]` over independent trees
/// `(seed, 0..replicas)`, each summed exactly: the other side of the
/// many-to-one identity.
pub fn many_to_one_cascade<F>(
    model: EnvironmentModel,
    cp: CriticalPoint,
    n: u32,
    f: F,
    replicas: u64,
    seed: u64,
    workers: usize,
) -> Result<MeanEstimate>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let values = try_run_replicas(replicas, workers, |r| {
        let spec = TreeSpec::new(model, cp, n, seed, r)?;
        spec.budget().check_enumerate(n)?;
        let obs: [&(dyn Fn(f64) -> f64 + Sync); 1] = [&f];
        let sums = sum_generation(
            &spec,
            n,
            &Channels {
                thetas: &[],
                windows: &[],
                observables: &obs,
            },
        );
        Ok(sums.observable[0].value())
    })?;
    Ok(MeanEstimate::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::solve_beta_c;
    use crate::rng::Purpose;
    use std::f64::consts::LN_2;

    fn dist(model: EnvironmentModel) -> SpineIncrementDist {
        SpineIncrementDist::new(model, solve_beta_c(&model).unwrap())
    }

    fn models() -> [EnvironmentModel; 3] {
        [
            EnvironmentModel::standard_gaussian(),
            EnvironmentModel::TwoPoint { p_plus: 0.25 },
            EnvironmentModel::Uniform01,
        ]
    }

    #[test]
    fn tilted_law_has_unit_mass_and_zero_mean() {
        for m in models() {
            let d = dist(m);
            let mass = d.expectation(|_| 1.0, 1e-12).unwrap();
            let mean = d.expectation(|s| s, 1e-12).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{m:?} mass {mass}");
            assert!(mean.abs() < 1e-8, "{m:?} mean {mean}");
        }
    }

    #[test]
    fn tilted_variance_matches_sigma_sq() {
        for m in models() {
            let d = dist(m);
            let var = d.expectation(|s| s * s, 1e-12).unwrap();
            assert!((var - d.variance()).abs() < 1e-8, "{m:?} {var} vs {}", d.variance());
        }
    }

    #[test]
    fn gaussian_increments_mean_and_variance() {
        let d = dist(EnvironmentModel::standard_gaussian());
        let mut rng = StreamKey::for_purpose(11, Purpose::Test).stream();
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_spine_increment(&d, &mut rng)).collect();
        let est = MeanEstimate::from_samples(&xs);
        assert!(est.mean.abs() < 3.0 * est.stderr, "{est:?}");
        let var = xs.iter().map(|x| (x - est.mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var / (2.0 * LN_2) - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn two_point_tilt_frequency() {
        let model = EnvironmentModel::TwoPoint { p_plus: 0.25 };
        let d = dist(model);
        let atoms = d.atoms().unwrap();
        let (up_step, q) = atoms[0];
        // tilt formula p e^b / (p e^b + (1 - p) e^-b)
        let b = d.cp.beta_c;
        let oracle = 0.25 * b.exp() / (0.25 * b.exp() + 0.75 * (-b).exp());
        assert!((q - oracle).abs() < 1e-14);
        let mut rng = StreamKey::for_purpose(12, Purpose::Test).stream();
        let draws = 200_000;
        let hits = (0..draws).filter(|_| d.sample(&mut rng) == up_step).count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - q).abs() < 3.0 * (q * (1.0 - q) / draws as f64).sqrt(), "{freq} vs {q}");
        // mean zero of the atoms
        assert!((atoms[0].0 * atoms[0].1 + atoms[1].0 * atoms[1].1).abs() < 1e-12);
    }

    #[test]
    fn uniform_increment_variance_by_sampling() {
        let d = dist(EnvironmentModel::Uniform01);
        let mut rng = StreamKey::for_purpose(13, Purpose::Test).stream();
        let xs: Vec<f64> = (0..400_000).map(|_| d.sample(&mut rng)).collect();
        let est = MeanEstimate::from_samples(&xs);
        assert!(est.mean.abs() < 3.0 * est.stderr);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let v = MeanEstimate::from_samples(&sq);
        assert!((v.mean - d.variance()).abs() < 3.0 * v.stderr + 1e-3 * d.variance());
    }

    #[test]
    fn walk_shapes() {
        let d = dist(EnvironmentModel::standard_gaussian());
        let mut rng = StreamKey::new(1).stream();
        let w = sample_spine_walk(&d, 0, &mut rng);
        assert_eq!(w.trajectory, vec![0.0]);
        assert_eq!(w.running_min, 0.0);
        let w = sample_spine_walk(&d, 50, &mut rng);
        assert_eq!(w.n(), 50);
        let min = w.trajectory.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(w.running_min, min);

        let mut a = StreamKey::new(2).stream();
        let mut b = StreamKey::new(2).stream();
        let full = sample_spine_walk(&d, 30, &mut a);
        let (end, low) = sample_walk_end_and_min(&d, 30, &mut b);
        assert_eq!(end, full.end());
        assert_eq!(low, full.running_min);
    }

    #[test]
    fn one_step_walk_is_one_increment() {
        let d = dist(EnvironmentModel::Uniform01);
        let mut a = StreamKey::new(3).stream();
        let mut b = StreamKey::new(3).stream();
        assert_eq!(sample_spine_walk(&d, 1, &mut a).trajectory[1], sample_spine_increment(&d, &mut b));
    }

    #[test]
    fn positivity_probability_decays_like_inverse_root() {
        let d = dist(EnvironmentModel::standard_gaussian());
        let reps = 40_000u64;
        let ns = [16usize, 64, 256, 1024];
        let key = StreamKey::for_purpose(21, Purpose::Test);
        let logs: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let hits = run_replicas(reps, 1, |r| {
                    let mut rng = key.child(n as u64).child(r).stream();
                    (sample_walk_end_and_min(&d, n, &mut rng).1 >= 0.0) as u64
                })
                .into_iter()
                .sum::<u64>();
                ((n as f64).ln(), (hits as f64 / reps as f64).ln())
            })
            .collect();
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((-0.65..=-0.35).contains(&slope), "slope {slope}");
    }

    #[test]
    fn constant_function_is_exact() {
        let d = dist(EnvironmentModel::standard_gaussian());
        let est = many_to_one(&d, 7, |_| 1.0, 500, StreamKey::new(4), 1);
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn identity_has_zero_mean_after_one_step() {
        let d = dist(EnvironmentModel::TwoPoint { p_plus: 0.25 });
        let est = many_to_one(&d, 1, |x| x.clamp(-20.0, 20.0), 100_000, StreamKey::new(5), 1);
        assert!(est.mean.abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn spine_and_cascade_sides_agree() {
        let model = EnvironmentModel::standard_gaussian();
        let d = dist(model);
        let n = 6;
        let fs: [fn(f64) -> f64; 3] = [|x| (x <= 0.0) as u8 as f64, |x| (-x.max(0.0)).exp(), |x| x.atan()];
        for (i, f) in fs.into_iter().enumerate() {
            let spine = many_to_one(&d, n, f, 100_000, StreamKey::new(6).child(i as u64), 1);
            let tree = many_to_one_cascade(model, d.cp, n as u32, f, 4000, 60 + i as u64, 1).unwrap();
            assert!(spine.z_distance(&tree) < 3.0, "f{i}: {spine:?} vs {tree:?}");
        }
    }
}
