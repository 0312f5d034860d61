//! One function per subcommand. Each returns the CSV table and the
//! `results` block of the JSON summary; writing is left to the caller.

use std::collections::BTreeMap;

use dptree::cascade::{
    critical_window, gibbs_sample_path, leaf_energies, log_partition, PartitionSample,
    Perturbation, Sign, TreeSpec,
};
use dptree::environment::{annealed_perturbed_moment, solve_beta_c};
use dptree::estimators::{
    default_slope_tolerance, fit_exponent, moment_exponent_target, partition_exponent, perturbation_bounds_hold,
    GrowthReport, MomentEstimate,
};
use dptree::replicas::try_run_replicas;
use dptree::rng::{Purpose, StreamKey};
use dptree::rwfunctional::{bm_functional_quadrature, mc_functional, FunctionalSpec};
use dptree::spine::{many_to_one, many_to_one_cascade, SpineIncrementDist};
use dptree::stats::{chi_square_pooled, median, MeanEstimate};
use dptree::{CriticalPoint, EnvironmentModel};
use serde::Deserialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{num, opt_num, Table};

pub type Outcome = Result<(Table, Value), CliError>;

pub const CRITICAL_COLUMNS: &[&str] = &["quantity", "value"];
pub const ENUMERATE_COLUMNS: &[&str] = &["replica", "n", "log_Wn", "log_Wn_minus", "log_Wn_plus", "min_V", "max_V"];
pub const GIBBS_COLUMNS: &[&str] = &["sample", "leaf", "V_n"];
pub const SPINE_COLUMNS: &[&str] = &["function", "side", "n", "estimate", "stderr"];
pub const RW_FUNCTIONAL_COLUMNS: &[&str] = &["n", "method", "estimate", "stderr_or_tol"];
pub const MOMENTS_COLUMNS: &[&str] = &["n", "gamma", "sign", "delta", "mean", "stderr", "replicas"];
pub const FIT_COLUMNS: &[&str] = &[
    "gamma", "sign", "delta", "slope", "intercept", "slope_stderr", "target", "tolerance", "pass",
];

/// Largest `n` for which `gibbs` tests the draws against the exact law.
pub const GIBBS_EXACT_CAP: u32 = 16;
/// Cells with fewer expected draws are pooled before the chi-square test.
const MIN_EXPECTED_COUNT: f64 = 5.0;
/// Combined-stderr distance below which the two sides of the many-to-one
/// identity count as agreeing.
pub const SPINE_Z_LIMIT: f64 = 3.0;
/// Relative gap allowed between the walk functional and its Brownian
/// surrogate.
pub const FUNCTIONAL_AGREEMENT: f64 = 0.25;
/// Allowed max/min ratio of `quadrature / log n` over the grid.
pub const FUNCTIONAL_BAND: f64 = 3.0;

fn critical_point(model: &EnvironmentModel) -> Result<CriticalPoint, CliError> {
    Ok(solve_beta_c(model)?)
}

fn estimate(e: &MeanEstimate) -> Value {
    json!({ "mean": e.mean, "stderr": e.stderr, "count": e.count })
}

fn sign_str(p: Option<Perturbation>) -> &'static str {
    p.map_or("none", |p| p.sign.as_str())
}

pub fn critical(s: &Settings) -> Outcome {
    let mut table = Table::new(CRITICAL_COLUMNS);
    match solve_beta_c(&s.model()) {
        Ok(cp) => {
            let rows = [
                ("beta_c", cp.beta_c),
                ("lambda_c", cp.lambda_c),
                ("lambda_prime_c", cp.lambda_prime_c),
                ("lambda_second_c", cp.lambda_second_c),
                ("sigma_sq", cp.sigma_sq),
                ("shift", cp.shift()),
                ("residual", cp.residual()),
            ];
            table.push(vec!["finite".into(), "true".into()]);
            for (k, v) in rows {
                table.push(vec![k.into(), num(v)]);
            }
            let results = json!({
                "finite": true,
                "beta_c": cp.beta_c,
                "lambda_c": cp.lambda_c,
                "lambda_prime_c": cp.lambda_prime_c,
                "lambda_second_c": cp.lambda_second_c,
                "sigma_sq": cp.sigma_sq,
                "shift": cp.shift(),
                "residual": cp.residual(),
                "growth_constant": cp.sigma_sq / 2.0,
            });
            Ok((table, results))
        }
        // an infinite critical point is an answer, not a failure
        Err(dptree::Error::NoFiniteCriticalPoint { searched_to }) => {
            table.push(vec!["finite".into(), "false".into()]);
            table.push(vec!["searched_to".into(), num(searched_to)]);
            Ok((table, json!({ "finite": false, "searched_to": searched_to })))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn enumerate(s: &Settings) -> Outcome {
    let model = s.model();
    let cp = critical_point(&model)?;
    let budget = s.budget();
    budget.check_enumerate(s.n)?;
    if let Some(delta) = s.delta {
        Perturbation::new(delta, Sign::Minus)?.exponent(s.n)?;
    }
    let window = critical_window(s.n, s.eps, s.eps_prime)?;
    let samples = try_run_replicas(s.replicas, s.workers, |r| {
        let spec = TreeSpec::new(model, cp, s.n, s.seed, r)?.with_budget(budget);
        PartitionSample::compute_with_window(&spec, s.delta, &[], Some(window))
    })?;

    let mut table = Table::new(ENUMERATE_COLUMNS);
    for p in &samples {
        table.push(vec![
            p.replica_index.to_string(),
            p.n.to_string(),
            num(p.log_wn),
            opt_num(p.log_wn_minus_delta),
            opt_num(p.log_wn_plus_delta),
            num(p.min_v),
            num(p.max_v),
        ]);
    }

    let mean_of = |f: &dyn Fn(&PartitionSample) -> f64| {
        MeanEstimate::from_samples(&samples.iter().map(f).collect::<Vec<_>>())
    };
    let min_vs: Vec<f64> = samples.iter().map(|p| p.min_v).collect();
    let masses: Vec<f64> = samples.iter().filter_map(|p| p.window_mass).collect();
    let mut results = json!({
        "n": s.n,
        "replicas": samples.len(),
        "Wn": estimate(&mean_of(&|p| p.log_wn.exp())),
        "median_min_V": median(&min_vs),
        "window": { "lo": window.0, "hi": window.1, "median_mass": median(&masses) },
    });
    if let Some(delta) = s.delta {
        let (mut lower, mut upper) = (0usize, 0usize);
        for p in &samples {
            let (l, u) = perturbation_bounds_hold(p, delta)?;
            lower += usize::from(!l);
            upper += usize::from(!u);
        }
        let annealed = annealed_perturbed_moment(&model, &cp, s.n, s.n, delta)?.exp();
        results["Wn_minus"] = estimate(&mean_of(&|p| p.log_wn_minus_delta.unwrap_or(f64::NAN).exp()));
        results["Wn_plus"] = estimate(&mean_of(&|p| p.log_wn_plus_delta.unwrap_or(f64::NAN).exp()));
        results["annealed_Wn_minus"] = json!(annealed);
        results["bound_violations"] = json!({ "lower": lower, "upper": upper });
    }
    Ok((table, results))
}

pub fn gibbs(s: &Settings) -> Outcome {
    let model = s.model();
    let cp = critical_point(&model)?;
    let budget = s.budget();
    budget.check_gibbs(s.n)?;
    if s.samples == 0 {
        return Err(CliError::config("samples", "must be at least 1"));
    }
    let spec = TreeSpec::new(model, cp, s.n, s.seed, s.replica)?.with_budget(budget);
    let key = StreamKey::for_purpose(s.seed, Purpose::GibbsDescent).child(s.replica);
    let paths = try_run_replicas(s.samples, s.workers, |k| gibbs_sample_path(&spec, &mut key.child(k).stream()))?;

    let mut table = Table::new(GIBBS_COLUMNS);
    for (k, p) in paths.iter().enumerate() {
        let v = p.energies.last().copied().unwrap_or(0.0);
        table.push(vec![k.to_string(), p.leaf.path().to_string(), num(v)]);
    }

    let (lo, hi) = critical_window(s.n, s.eps, s.eps_prime)?;
    let in_window = paths
        .iter()
        .filter(|p| {
            let v = p.energies.last().copied().unwrap_or(0.0);
            v >= lo && v <= hi
        })
        .count();
    let log_wn = log_partition(&spec, 1.0)?;
    let min = dptree::cascade::min_energy_stats(&spec)?;
    let mut results = json!({
        "n": s.n,
        "replica": s.replica,
        "samples": paths.len(),
        "log_Wn": log_wn,
        "min_V": min.0,
        "argmin_leaf": min.1.path(),
        "window": {
            "lo": lo,
            "hi": hi,
            "exact_mass": dptree::cascade::gibbs_window_mass(&spec, s.eps, s.eps_prime)?,
            "sampled_fraction": in_window as f64 / paths.len() as f64,
        },
    });
    if s.n <= GIBBS_EXACT_CAP {
        let energies = leaf_energies(&spec)?;
        let probabilities: Vec<f64> = energies.iter().map(|v| (-v - log_wn).exp()).collect();
        let mut counts = vec![0u64; energies.len()];
        for p in &paths {
            counts[p.leaf.path() as usize] += 1;
        }
        let (statistic, dof) = chi_square_pooled(&counts, &probabilities, MIN_EXPECTED_COUNT);
        let p_value = if dof == 0 {
            1.0
        } else {
            ChiSquared::new(dof as f64)
                .map_err(|e| CliError::Run(dptree::Error::DegenerateFit(e.to_string())))?
                .sf(statistic)
        };
        results["chi_square"] = json!({ "statistic": statistic, "dof": dof, "p_value": p_value });
    }
    Ok((table, results))
}

type Observable = fn(f64) -> f64;

/// Test functions for the many-to-one identity.
pub const SPINE_FUNCTIONS: &[(&str, Observable)] = &[
    ("indicator_nonpositive", |x| if x <= 0.0 { 1.0 } else { 0.0 }),
    ("exp_neg_positive_part", |x| (-x.max(0.0)).exp()),
];

pub fn spine(s: &Settings) -> Outcome {
    let model = s.model();
    let cp = critical_point(&model)?;
    s.budget().check_enumerate(s.n)?;
    if s.samples < 2 {
        return Err(CliError::config("samples", "need at least 2 spine walks"));
    }
    let dist = SpineIncrementDist::new(model, cp);
    let key = StreamKey::for_purpose(s.seed, Purpose::SpineWalk);
    let mut table = Table::new(SPINE_COLUMNS);
    let mut rows = Vec::new();
    for &(name, f) in SPINE_FUNCTIONS {
        let cascade = many_to_one_cascade(model, cp, s.n, f, s.replicas, s.seed, s.workers)?;
        let walk = many_to_one(&dist, s.n as usize, f, s.samples, key, s.workers);
        for (side, e) in [("cascade", &cascade), ("spine", &walk)] {
            table.push(vec![name.into(), side.into(), s.n.to_string(), num(e.mean), num(e.stderr)]);
        }
        let z = cascade.z_distance(&walk);
        rows.push(json!({
            "function": name,
            "cascade": estimate(&cascade),
            "spine": estimate(&walk),
            "z": z,
            "agree": z < SPINE_Z_LIMIT,
        }));
    }
    Ok((table, json!({ "n": s.n, "z_limit": SPINE_Z_LIMIT, "functions": rows })))
}

pub fn rw_functional(s: &Settings) -> Outcome {
    let model = s.model();
    let cp = critical_point(&model)?;
    let (Some(delta), Some(sign)) = (s.delta, s.sign) else {
        return Err(CliError::config(
            if s.delta.is_none() { "delta" } else { "sign" },
            "rw-functional needs both delta and sign",
        ));
    };
    let spec = FunctionalSpec::new(delta, sign, s.star, s.kappa)?;
    let dist = SpineIncrementDist::new(model, cp);
    let key = StreamKey::for_purpose(s.seed, Purpose::Functional);
    let mut table = Table::new(RW_FUNCTIONAL_COLUMNS);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &n in &s.n_grid {
        let mc = mc_functional(&spec, &dist, n as usize, s.replicas, key.child(n as u64), s.workers)?;
        let quad = bm_functional_quadrature(&spec, cp.sigma_sq, n as f64, s.tol)?;
        table.push(vec![n.to_string(), "mc".into(), num(mc.mean), num(mc.stderr)]);
        table.push(vec![n.to_string(), "quadrature".into(), num(quad.value), num(s.tol)]);
        let relative = (mc.mean - quad.value).abs() / quad.value.abs();
        ratios.push(quad.value / (n as f64).ln());
        rows.push(json!({
            "n": n,
            "mc": estimate(&mc),
            "quadrature": quad.value,
            "quadrature_error_estimate": quad.error_estimate,
            "relative_difference": relative,
            "agree": relative <= FUNCTIONAL_AGREEMENT,
        }));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaling = spec.scaling();
    Ok((
        table,
        json!({
            "alpha": scaling.alpha,
            "g_exponent": scaling.g_exponent,
            "agreement_limit": FUNCTIONAL_AGREEMENT,
            "rows": rows,
            "band": {
                "quadrature_over_log_n": ratios,
                "max_over_min": hi / lo,
                "limit": FUNCTIONAL_BAND,
                "within": lo > 0.0 && hi / lo <= FUNCTIONAL_BAND,
            },
        }),
    ))
}

pub fn moments(s: &Settings) -> Outcome {
    let model = s.model();
    let cp = critical_point(&model)?;
    let perturbation = s.perturbation()?;
    let budget = s.budget();
    if s.replicas < 2 {
        return Err(CliError::config("replicas", "need at least 2 replicas for a standard error"));
    }
    for &n in &s.n_grid {
        budget.check_enumerate(n)?;
        partition_exponent(n, perturbation)?;
    }
    let mut per_n = Vec::new();
    let mut table = Table::new(MOMENTS_COLUMNS);
    let mut series: Vec<Vec<MomentEstimate>> = vec![Vec::new(); s.gamma.len()];
    for &n in &s.n_grid {
        let theta = partition_exponent(n, perturbation)?;
        let logs = try_run_replicas(s.replicas, s.workers, |r| {
            let spec = TreeSpec::new(model, cp, n, s.seed, r)?.with_budget(budget);
            log_partition(&spec, theta)
        })?;
        for (i, &gamma) in s.gamma.iter().enumerate() {
            let m = MomentEstimate::from_log_partitions(n, gamma, perturbation, &logs)?;
            table.push(moment_row(&m));
            series[i].push(m);
        }
        per_n.push((n, logs));
    }
    let fits = series
        .iter()
        .map(|ms| fit_json(ms, s.slope_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = json!({ "fits": fits });
    if let Some(Perturbation { delta, sign: Sign::Minus }) = perturbation {
        if delta < 0.5 {
            results["growth"] = serde_json::to_value(GrowthReport::from_log_partitions(&cp, delta, &per_n)?)
                .map_err(|e| CliError::io("json", e))?;
        }
    }
    Ok((table, results))
}

fn moment_row(m: &MomentEstimate) -> Vec<String> {
    vec![
        m.n.to_string(),
        num(m.gamma),
        sign_str(m.perturbation).into(),
        opt_num(m.perturbation.map(|p| p.delta)),
        num(m.mean),
        num(m.stderr),
        m.replicas.to_string(),
    ]
}

/// Power-law fit of one moment series against its predicted exponent.
/// Series without a prediction (negative perturbation below 1/2) are fitted
/// but carry no verdict.
fn fit_json(series: &[MomentEstimate], slope_tol: Option<f64>) -> Result<Value, CliError> {
    let first = series.first().ok_or_else(|| CliError::config("n_grid", "must not be empty"))?;
    let target = moment_exponent_target(first.gamma, first.perturbation);
    let tolerance = slope_tol.unwrap_or_else(|| default_slope_tolerance(first.perturbation));
    let fit = fit_exponent(series, target.unwrap_or(f64::NAN), tolerance)?;
    Ok(json!({
        "gamma": first.gamma,
        "sign": sign_str(first.perturbation),
        "delta": first.perturbation.map(|p| p.delta),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_stderr": fit.slope_stderr,
        "target": target,
        "tolerance": target.map(|_| tolerance),
        "pass": target.map(|_| fit.pass),
    }))
}

#[derive(Debug, Deserialize)]
struct MomentRow {
    n: u32,
    gamma: f64,
    sign: String,
    delta: Option<f64>,
    mean: f64,
    stderr: f64,
    replicas: usize,
}

pub fn fit_report(s: &Settings) -> Outcome {
    let path = s.input.as_ref().ok_or_else(|| CliError::config("input", "a moments CSV is required"))?;
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::config("input", format!("cannot read {}: {e}", path.display())))?;
    // series keyed by (gamma, sign, delta) bits, in order of first appearance
    type SeriesKey = (u64, String, Option<u64>);
    let mut groups: Vec<(SeriesKey, Vec<MomentEstimate>)> = Vec::new();
    let mut index = BTreeMap::new();
    for (line, row) in reader.deserialize::<MomentRow>().enumerate() {
        let row = row.map_err(|e| CliError::config("input", format!("row {}: {e}", line + 1)))?;
        let perturbation = match (row.sign.as_str(), row.delta) {
            ("none", None) => None,
            (sign, Some(delta)) => Some(Perturbation::new(delta, sign.parse()?)?),
            _ => return Err(CliError::config("input", format!("row {}: sign and delta disagree", line + 1))),
        };
        let key = (row.gamma.to_bits(), row.sign.clone(), row.delta.map(f64::to_bits));
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(MomentEstimate {
            n: row.n,
            gamma: row.gamma,
            perturbation,
            mean: row.mean,
            stderr: row.stderr,
            replicas: row.replicas,
        });
    }
    if groups.is_empty() {
        return Err(CliError::config("input", "no rows"));
    }
    let mut table = Table::new(FIT_COLUMNS);
    let mut fits = Vec::new();
    for (_, mut series) in groups {
        series.sort_by_key(|m| m.n);
        let fit = fit_json(&series, s.slope_tol)?;
        let text = |v: &Value| match v {
            Value::Null => String::new(),
            Value::String(x) => x.clone(),
            Value::Number(x) => x.as_f64().map(num).unwrap_or_default(),
            other => other.to_string(),
        };
        table.push(FIT_COLUMNS.iter().map(|c| text(&fit[*c])).collect());
        fits.push(fit);
    }
    Ok((table, json!({ "fits": fits })))
}
