//! Replica aggregation: fractional moments of the (perturbed) partition
//! functions, log-log exponent fits, the near-critical growth-rate check and
//! the per-replica perturbation bounds.

use serde::{Deserialize, Serialize};

use crate::cascade::{log_partition, Budget, PartitionSample, Perturbation, Sign, TreeSpec};
use crate::environment::{CriticalPoint, EnvironmentModel};
use crate::error::{Error, Result};
use crate::replicas::try_run_replicas;
use crate::stats::{quantile, MeanEstimate};

/// Slope tolerance for the `-gamma/2` exponent on the critical window.
pub const CRITICAL_SLOPE_TOLERANCE: f64 = 0.2;
/// Slope tolerance for the `gamma (2 delta - 3/2)` exponent.
pub const NEAR_CRITICAL_SLOPE_TOLERANCE: f64 = 0.25;
/// Accepted band for the growth-rate median, as multiples of the target.
pub const GROWTH_BAND: (f64, f64) = (0.3, 1.3);

/// `E[W^gamma]` over replicas, where `W` is `W_n` or `W_n^{+-,delta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub n: u32,
    pub gamma: f64,
    pub perturbation: Option<Perturbation>,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl MomentEstimate {
    /// Aggregate per-replica values of `log W`.
    pub fn from_log_partitions(n: u32, gamma: f64, perturbation: Option<Perturbation>, logs: &[f64]) -> Result<Self> {
        check_gamma(gamma)?;
        if logs.len() < 2 {
            return Err(Error::domain("replicas", "need at least 2 replicas for a standard error"));
        }
        let values: Vec<f64> = logs.iter().map(|l| (gamma * l).exp()).collect();
        let est = MeanEstimate::from_samples(&values);
        Ok(MomentEstimate {
            n,
            gamma,
            perturbation,
            mean: est.mean,
            stderr: est.stderr,
            replicas: est.count,
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    // gamma = 1 is the full moment, kept for the closed-form anchor
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain("gamma", "must lie in (0, 1]"));
    }
    Ok(())
}

/// Exponent `theta` of `V` selected by an optional perturbation.
pub fn partition_exponent(n: u32, perturbation: Option<Perturbation>) -> Result<f64> {
    perturbation.map_or(Ok(1.0), |p| p.exponent(n))
}

/// Per-replica `log sum_{|v|=n} exp(-theta V(v))` for trees
/// `(seed, 0..replicas)`, in replica order.
#[allow(clippy::too_many_arguments)]
pub fn log_partition_ensemble(
    model: EnvironmentModel,
    cp: CriticalPoint,
    n: u32,
    theta: f64,
    replicas: u64,
    seed: u64,
    workers: usize,
    budget: Budget,
) -> Result<Vec<f64>> {
    budget.check_enumerate(n)?;
    try_run_replicas(replicas, workers, |r| {
        let spec = TreeSpec::new(model, cp, n, seed, r)?.with_budget(budget);
        log_partition(&spec, theta)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn fractional_moment(
    model: EnvironmentModel,
    cp: CriticalPoint,
    n: u32,
    gamma: f64,
    perturbation: Option<Perturbation>,
    replicas: u64,
    seed: u64,
    workers: usize,
    budget: Budget,
) -> Result<MomentEstimate> {
    check_gamma(gamma)?;
    let theta = partition_exponent(n, perturbation)?;
    let logs = log_partition_ensemble(model, cp, n, theta, replicas, seed, workers, budget)?;
    MomentEstimate::from_log_partitions(n, gamma, perturbation, &logs)
}

/// Predicted growth exponent of `E[W^gamma]` in `n`: `-gamma/2` on the
/// critical window and without perturbation, `gamma (2 delta - 3/2)` for
/// the positive near-critical perturbation, none for the negative one
/// (which grows like `exp(c n^(1 - 2 delta))`).
pub fn moment_exponent_target(gamma: f64, perturbation: Option<Perturbation>) -> Option<f64> {
    match perturbation {
        None => Some(-gamma / 2.0),
        Some(p) if p.delta >= 0.5 => Some(-gamma / 2.0),
        Some(Perturbation { delta, sign: Sign::Plus }) => Some(gamma * (2.0 * delta - 1.5)),
        Some(_) => None,
    }
}

/// Default slope tolerance for the target of [`moment_exponent_target`].
pub fn default_slope_tolerance(perturbation: Option<Perturbation>) -> f64 {
    match perturbation {
        Some(p) if p.delta < 0.5 => NEAR_CRITICAL_SLOPE_TOLERANCE,
        _ => CRITICAL_SLOPE_TOLERANCE,
    }
}

/// Least-squares line through `(log n, log mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n_grid: Vec<f64>,
    pub target_exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Fit `log y = intercept + slope log n` by ordinary least squares.
pub fn fit_power_law(ns: &[f64], ys: &[f64], target: f64, tolerance: f64) -> Result<ExponentFit> {
    if ns.len() != ys.len() {
        return Err(Error::domain("series", "grid and values differ in length"));
    }
    if ns.len() < 3 {
        return Err(Error::domain("n_grid", "need at least 3 grid points"));
    }
    if ns.windows(2).any(|w| !(w[1] > w[0])) || ns[0] <= 0.0 {
        return Err(Error::domain("n_grid", "must be positive and strictly increasing"));
    }
    if let Some(bad) = ys.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::domain("mean", format!("values must be positive and finite, got {bad}")));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ls.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("no spread in log n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ls).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(ExponentFit {
        slope,
        intercept,
        slope_stderr,
        n_grid: ns.to_vec(),
        target_exponent: target,
        tolerance,
        pass: (slope - target).abs() <= tolerance,
    })
}

pub fn fit_exponent(series: &[MomentEstimate], target: f64, tolerance: f64) -> Result<ExponentFit> {
    let ns: Vec<f64> = series.iter().map(|m| m.n as f64).collect();
    let ys: Vec<f64> = series.iter().map(|m| m.mean).collect();
    fit_power_law(&ns, &ys, target, tolerance)
}

/// `log W_n^{-,delta} / n^(1 - 2 delta)` summarized at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: u32,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub delta: f64,
    /// `beta_c^2 lambda''(beta_c) / 2`.
    pub target: f64,
    pub rows: Vec<GrowthRow>,
    pub band: (f64, f64),
    /// Median at the largest `n` lies in `band * target`.
    pub in_band: bool,
    /// `|median - target|` strictly decreases along the grid.
    pub approaches_target: bool,
    pub pass: bool,
}

impl GrowthReport {
    /// Build from per-`n` lists of `log W_n^{-,delta}`.
    pub fn from_log_partitions(cp: &CriticalPoint, delta: f64, per_n: &[(u32, Vec<f64>)]) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::domain("delta", "the growth check needs delta in (0, 1/2)"));
        }
        if per_n.is_empty() {
            return Err(Error::domain("n_grid", "must not be empty"));
        }
        let target = cp.sigma_sq / 2.0;
        let rows: Vec<GrowthRow> = per_n
            .iter()
            .map(|(n, logs)| {
                let scale = (*n as f64).powf(1.0 - 2.0 * delta);
                let ratios: Vec<f64> = logs.iter().map(|l| l / scale).collect();
                GrowthRow {
                    n: *n,
                    median: quantile(&ratios, 0.5),
                    q25: quantile(&ratios, 0.25),
                    q75: quantile(&ratios, 0.75),
                    replicas: ratios.len(),
                }
            })
            .collect();
        let last = rows.last().expect("nonempty").median;
        let in_band = last >= GROWTH_BAND.0 * target && last <= GROWTH_BAND.1 * target;
        let approaches_target = rows
            .windows(2)
            .all(|w| (w[1].median - target).abs() < (w[0].median - target).abs());
        Ok(GrowthReport {
            delta,
            target,
            rows,
            band: GROWTH_BAND,
            in_band,
            approaches_target,
            pass: in_band && approaches_target,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn growth_rate_check(
    model: EnvironmentModel,
    cp: CriticalPoint,
    n_grid: &[u32],
    delta: f64,
    replicas: u64,
    seed: u64,
    workers: usize,
    budget: Budget,
) -> Result<GrowthReport> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::domain("delta", "the growth check needs delta in (0, 1/2)"));
    }
    let p = Perturbation::new(delta, Sign::Minus)?;
    let per_n = n_grid
        .iter()
        .map(|&n| {
            let theta = p.exponent(n)?;
            Ok((n, log_partition_ensemble(model, cp, n, theta, replicas, seed, workers, budget)?))
        })
        .collect::<Result<Vec<_>>>()?;
    GrowthReport::from_log_partitions(&cp, delta, &per_n)
}

/// Slack on the log scale for the perturbation bounds, which hold exactly
/// in real arithmetic.
pub const BOUND_SLACK: f64 = 1e-12;

/// Per-replica perturbation bounds
/// `W^{-,delta} >= exp(eps min V) W` and `W^{+,delta} <= exp(-eps min V) W`
/// with `eps = n^-delta`. Returns `(lower bound holds, upper bound holds)`.
pub fn perturbation_bounds_hold(sample: &PartitionSample, delta: f64) -> Result<(bool, bool)> {
    let (Some(minus), Some(plus)) = (sample.log_wn_minus_delta, sample.log_wn_plus_delta) else {
        return Err(Error::domain("delta", "sample was computed without perturbations"));
    };
    let eps = (sample.n as f64).powf(-delta);
    let lower = sample.log_wn + eps * sample.min_v;
    let upper = sample.log_wn - eps * sample.min_v;
    let slack = |x: f64| BOUND_SLACK * (1.0 + x.abs());
    Ok((minus >= lower - slack(lower), plus <= upper + slack(upper)))
}
