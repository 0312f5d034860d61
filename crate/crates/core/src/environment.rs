//! Noise laws, their cumulant generating functions, the critical inverse
//! temperature and the closed-form annealed quantities built from them.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Below this |beta| the Uniform01 CGF and its derivatives use their Taylor
/// series; the closed forms cancel catastrophically near the removable
/// singularity at zero.
const UNIFORM_SERIES_CUTOFF: f64 = 1e-2;

/// Lower end of the root bracket for the critical equation.
const BRACKET_LO: f64 = 1e-6;
/// Doubling of the upper bracket stops here and reports an infinite
/// critical point.
const BRACKET_GUARD: f64 = 1e8;

/// An i.i.d. vertex-noise distribution with closed-form CGF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentModel {
    Gaussian { mean: f64, std_dev: f64 },
    /// `omega = +1` with probability `p_plus`, `-1` otherwise.
    /// `p_plus = 1/2` is the Rademacher law.
    TwoPoint { p_plus: f64 },
    Uniform01,
}

impl EnvironmentModel {
    pub fn standard_gaussian() -> Self {
        EnvironmentModel::Gaussian {
            mean: 0.0,
            std_dev: 1.0,
        }
    }

    pub fn rademacher() -> Self {
        EnvironmentModel::TwoPoint { p_plus: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => {
                if !mean.is_finite() {
                    return Err(Error::domain("env_mean", "must be finite"));
                }
                if !(std_dev.is_finite() && std_dev > 0.0) {
                    return Err(Error::domain("env_std", "must be positive and finite"));
                }
            }
            EnvironmentModel::TwoPoint { p_plus } => {
                if !(p_plus > 0.0 && p_plus < 1.0) {
                    return Err(Error::domain("p_plus", "must lie strictly between 0 and 1"));
                }
            }
            EnvironmentModel::Uniform01 => {}
        }
        Ok(())
    }

    /// `lambda(beta) = log E[exp(beta * omega)]`.
    pub fn cgf(&self, beta: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => {
                mean * beta + 0.5 * std_dev * std_dev * beta * beta
            }
            EnvironmentModel::TwoPoint { p_plus } => {
                let z = two_point_logit(p_plus, beta);
                if z >= 0.0 {
                    beta + p_plus.ln() + (-z).exp().ln_1p()
                } else {
                    -beta + (1.0 - p_plus).ln() + z.exp().ln_1p()
                }
            }
            EnvironmentModel::Uniform01 => {
                if beta.abs() < UNIFORM_SERIES_CUTOFF {
                    uniform::cgf_series(beta)
                } else {
                    uniform::cgf_closed(beta)
                }
            }
        }
    }

    /// `lambda'(beta)`, the mean of the `beta`-tilted law.
    pub fn cgf_d1(&self, beta: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => mean + std_dev * std_dev * beta,
            EnvironmentModel::TwoPoint { p_plus } => (0.5 * two_point_logit(p_plus, beta)).tanh(),
            EnvironmentModel::Uniform01 => {
                if beta.abs() < UNIFORM_SERIES_CUTOFF {
                    uniform::d1_series(beta)
                } else {
                    uniform::d1_closed(beta)
                }
            }
        }
    }

    /// `lambda''(beta)`, the variance of the `beta`-tilted law.
    pub fn cgf_d2(&self, beta: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { std_dev, .. } => std_dev * std_dev,
            EnvironmentModel::TwoPoint { p_plus } => {
                let t = (0.5 * two_point_logit(p_plus, beta)).tanh();
                1.0 - t * t
            }
            EnvironmentModel::Uniform01 => {
                if beta.abs() < UNIFORM_SERIES_CUTOFF {
                    uniform::d2_series(beta)
                } else {
                    uniform::d2_closed(beta)
                }
            }
        }
    }

    /// `h(beta) = beta lambda'(beta) - lambda(beta) - log 2`, whose positive
    /// root is the critical inverse temperature. `h` is nondecreasing on
    /// `beta >= 0` since `h'(beta) = beta lambda''(beta)`.
    pub fn critical_residual(&self, beta: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { std_dev, .. } => {
                0.5 * std_dev * std_dev * beta * beta - LN_2
            }
            EnvironmentModel::TwoPoint { p_plus } => {
                // With q the tilted probability of +1:
                // h = -2 beta (1 - q) + log(q / (2 p)), both pieces computed
                // without cancellation so h never rounds above zero when it
                // only approaches it (p = 1/2).
                let z = two_point_logit(p_plus, beta);
                let one_minus_q = logistic(-z);
                let log_q = -log1p_exp(-z);
                -2.0 * beta * one_minus_q + log_q - p_plus.ln() - LN_2
            }
            EnvironmentModel::Uniform01 => beta * self.cgf_d1(beta) - self.cgf(beta) - LN_2,
        }
    }

    /// One draw of `omega`.
    #[inline(always)]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std_dev * z
            }
            EnvironmentModel::TwoPoint { p_plus } => {
                if crate::rng::open01(rng.next_u64()) < p_plus {
                    1.0
                } else {
                    -1.0
                }
            }
            EnvironmentModel::Uniform01 => crate::rng::open01(rng.next_u64()),
        }
    }

    /// One draw of `omega` under the exponentially tilted law with density
    /// proportional to `exp(beta * omega)` against the base law.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> f64 {
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + beta * std_dev * std_dev + std_dev * z
            }
            EnvironmentModel::TwoPoint { p_plus } => {
                let q = logistic(two_point_logit(p_plus, beta));
                if crate::rng::open01(rng.next_u64()) < q {
                    1.0
                } else {
                    -1.0
                }
            }
            EnvironmentModel::Uniform01 => {
                // truncated exponential on [0, 1]: invert the CDF
                let u = crate::rng::open01(rng.next_u64());
                if beta.abs() < 1e-12 {
                    u
                } else if beta > 0.0 {
                    // log(1 + u (e^b - 1)) / b, rearranged around the top end
                    1.0 + ((1.0 - u) * (-beta).exp() + u).ln() / beta
                } else {
                    (u * beta.exp_m1()).ln_1p() / beta
                }
            }
        }
    }

    /// Probability of `omega = +1` under the `beta`-tilted two-point law.
    pub fn tilted_plus_probability(&self, beta: f64) -> Option<f64> {
        match *self {
            EnvironmentModel::TwoPoint { p_plus } => Some(logistic(two_point_logit(p_plus, beta))),
            _ => None,
        }
    }

    /// Atoms `(value, probability)` of a discrete law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            EnvironmentModel::TwoPoint { p_plus } => Some(vec![(1.0, p_plus), (-1.0, 1.0 - p_plus)]),
            _ => None,
        }
    }

    /// `E[f(omega)]` by direct quadrature against the base law (summation for
    /// discrete laws), to within `tol` absolute or relative, whichever is
    /// looser. Independent of the CGF closed forms, so it can serve as a
    /// cross-check for them.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> Result<f64> {
        let opts = QuadOptions {
            abs_tol: tol,
            rel_tol: tol,
            ..QuadOptions::relative(tol)
        };
        match *self {
            EnvironmentModel::Gaussian { mean, std_dev } => {
                let norm = 1.0 / (std_dev * (2.0 * std::f64::consts::PI).sqrt());
                let g = |x: f64| {
                    let z = (x - mean) / std_dev;
                    norm * (-0.5 * z * z).exp() * f(x)
                };
                let width = 40.0 * std_dev;
                let r = integrate(g, mean - width, mean + width, &[mean], opts)?;
                Ok(r.value)
            }
            EnvironmentModel::TwoPoint { p_plus } => Ok(p_plus * f(1.0) + (1.0 - p_plus) * f(-1.0)),
            EnvironmentModel::Uniform01 => {
                Ok(integrate(&f, 0.0, 1.0, &[], opts)?.value)
            }
        }
    }
}

/// CGF of the uniform law on [0, 1]: `log((e^b - 1) / b)`.
mod uniform {
    pub(super) fn cgf_series(b: f64) -> f64 {
        let b2 = b * b;
        b / 2.0 + b2 / 24.0 - b2 * b2 / 2880.0 + b2 * b2 * b2 / 181_440.0
    }

    pub(super) fn cgf_closed(b: f64) -> f64 {
        if b > 0.0 {
            // b + log((1 - e^-b) / b)
            b + (-(-b).exp_m1() / b).ln()
        } else {
            (b.exp_m1() / b).ln()
        }
    }

    pub(super) fn d1_series(b: f64) -> f64 {
        let b2 = b * b;
        0.5 + b / 12.0 - b * b2 / 720.0 + b * b2 * b2 / 30_240.0
    }

    pub(super) fn d1_closed(b: f64) -> f64 {
        // e^b / (e^b - 1) - 1/b without overflow for large |b|
        -1.0 / (-b).exp_m1() - 1.0 / b
    }

    pub(super) fn d2_series(b: f64) -> f64 {
        let b2 = b * b;
        1.0 / 12.0 - b2 / 240.0 + b2 * b2 / 6048.0
    }

    pub(super) fn d2_closed(b: f64) -> f64 {
        let s = (0.5 * b).sinh();
        1.0 / (b * b) - 1.0 / (4.0 * s * s)
    }
}

#[inline]
fn two_point_logit(p_plus: f64, beta: f64) -> f64 {
    2.0 * beta + (p_plus / (1.0 - p_plus)).ln()
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log1p_exp(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// The critical inverse temperature and the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub beta_c: f64,
    pub lambda_c: f64,
    pub lambda_prime_c: f64,
    pub lambda_second_c: f64,
    /// `beta_c^2 lambda''(beta_c)`: the variance of one spine increment.
    pub sigma_sq: f64,
}

impl CriticalPoint {
    fn at(model: &EnvironmentModel, beta_c: f64) -> Self {
        let lambda_second_c = model.cgf_d2(beta_c);
        CriticalPoint {
            beta_c,
            lambda_c: model.cgf(beta_c),
            lambda_prime_c: model.cgf_d1(beta_c),
            lambda_second_c,
            sigma_sq: beta_c * beta_c * lambda_second_c,
        }
    }

    /// `lambda(beta_c) + log 2`, the per-generation shift of the normalized
    /// energy.
    pub fn shift(&self) -> f64 {
        self.lambda_c + LN_2
    }

    /// Residual of the critical equation at the stored constants.
    pub fn residual(&self) -> f64 {
        self.lambda_c + LN_2 - self.beta_c * self.lambda_prime_c
    }
}

/// Solve `lambda(beta) + log 2 = beta lambda'(beta)` on `beta > 0`.
///
/// Brackets with `[1e-6, B]`, doubling `B` until `h(B) > 0`, bisects to a
/// width of 1e-13 and finishes with one guarded Newton step.
pub fn solve_beta_c(model: &EnvironmentModel) -> Result<CriticalPoint> {
    model.validate()?;
    let h = |b: f64| model.critical_residual(b);

    let mut lo = BRACKET_LO;
    if h(lo) >= 0.0 {
        // h(0) = -log 2, so only a pathological law lands here
        return Err(Error::domain("env", "critical equation has no sign change"));
    }
    let mut hi = 1.0;
    while h(hi) <= 0.0 {
        if hi >= BRACKET_GUARD {
            return Err(Error::NoFiniteCriticalPoint { searched_to: hi });
        }
        lo = hi;
        hi *= 2.0;
    }

    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut beta = 0.5 * (lo + hi);
    let slope = beta * model.cgf_d2(beta);
    if slope > 0.0 {
        let polished = beta - h(beta) / slope;
        if polished >= lo && polished <= hi && h(polished).abs() <= h(beta).abs() {
            beta = polished;
        }
    }
    Ok(CriticalPoint::at(model, beta))
}

/// Limiting free energy `lim (1/n) log Z_n(beta)`.
pub fn free_energy(model: &EnvironmentModel, cp: &CriticalPoint, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::domain("beta", "must be non-negative"));
    }
    if beta <= cp.beta_c {
        Ok(model.cgf(beta) + LN_2)
    } else {
        Ok(beta / cp.beta_c * cp.shift())
    }
}

/// `log E[sum_{|v|=k} exp(-(1 - n^-delta) V(v))]`, exact from the CGF.
pub fn annealed_perturbed_moment(
    model: &EnvironmentModel,
    cp: &CriticalPoint,
    k: u32,
    n: u32,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain("delta", "must be positive"));
    }
    if n == 0 {
        return Err(Error::domain("n", "horizon must be at least 1"));
    }
    if k > n {
        return Err(Error::domain("k", "generation must not exceed the horizon"));
    }
    let eps = (n as f64).powf(-delta);
    let per_generation =
        model.cgf((1.0 - eps) * cp.beta_c) - cp.lambda_c + eps * cp.beta_c * cp.lambda_prime_c;
    Ok(k as f64 * per_generation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use proptest::prelude::*;

    fn models() -> Vec<EnvironmentModel> {
        vec![
            EnvironmentModel::standard_gaussian(),
            EnvironmentModel::Gaussian { mean: 0.3, std_dev: 0.7 },
            EnvironmentModel::rademacher(),
            EnvironmentModel::TwoPoint { p_plus: 0.25 },
            EnvironmentModel::Uniform01,
        ]
    }

    fn finite_models() -> Vec<EnvironmentModel> {
        vec![
            EnvironmentModel::standard_gaussian(),
            EnvironmentModel::Gaussian { mean: 0.3, std_dev: 0.7 },
            EnvironmentModel::TwoPoint { p_plus: 0.25 },
            EnvironmentModel::Uniform01,
        ]
    }

    #[test]
    fn cgf_examples() {
        let g = EnvironmentModel::standard_gaussian();
        assert_eq!(g.cgf(0.0), 0.0);
        assert_eq!(g.cgf(2.0), 2.0);
        let r = EnvironmentModel::rademacher();
        assert!((r.cgf(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((r.cgf(1.0) - 0.43378).abs() < 1e-5);
        for m in models() {
            assert!(m.cgf(0.0).abs() < 1e-15, "{m:?}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for m in models() {
            for &b in &[-3.0, -0.5, -0.011, -1e-3, 0.0, 2e-3, 0.0099, 0.3, 1.0, 2.5, 7.0] {
                let h = 1e-5;
                let d1 = (m.cgf(b + h) - m.cgf(b - h)) / (2.0 * h);
                let d2 = (m.cgf_d1(b + h) - m.cgf_d1(b - h)) / (2.0 * h);
                assert!((d1 - m.cgf_d1(b)).abs() < 1e-8, "{m:?} d1 at {b}");
                assert!((d2 - m.cgf_d2(b)).abs() < 1e-7, "{m:?} d2 at {b}");
            }
        }
    }

    #[test]
    fn uniform_series_joins_closed_form() {
        for b in [UNIFORM_SERIES_CUTOFF, -UNIFORM_SERIES_CUTOFF] {
            assert!((uniform::cgf_series(b) - uniform::cgf_closed(b)).abs() < 1e-15);
            assert!((uniform::d1_series(b) - uniform::d1_closed(b)).abs() < 1e-13);
            assert!((uniform::d2_series(b) - uniform::d2_closed(b)).abs() < 1e-11);
        }
        let m = EnvironmentModel::Uniform01;
        assert_eq!(m.cgf_d1(0.0), 0.5);
        assert_eq!(m.cgf_d2(0.0), 1.0 / 12.0);
    }

    #[test]
    fn cgf_agrees_with_quadrature_of_mgf() {
        for m in models() {
            for &b in &[-1.5, 0.4, 1.3] {
                let mgf = m.expectation(|w| (b * w).exp(), 1e-13).unwrap();
                assert!((mgf.ln() - m.cgf(b)).abs() < 1e-11, "{m:?} at {b}");
            }
        }
    }

    #[test]
    fn gaussian_critical_point() {
        let cp = solve_beta_c(&EnvironmentModel::standard_gaussian()).unwrap();
        assert!((cp.beta_c - (2.0 * LN_2).sqrt()).abs() < 1e-12);
        assert!((cp.beta_c - 1.1774).abs() < 1e-4);
        assert!((cp.sigma_sq - 2.0 * LN_2).abs() < 1e-12);
        assert_eq!(cp.sigma_sq, cp.beta_c * cp.beta_c * cp.lambda_second_c);
        // shifting the mean does not move beta_c; scaling the spread does
        let shifted = solve_beta_c(&EnvironmentModel::Gaussian { mean: 5.0, std_dev: 1.0 }).unwrap();
        assert!((shifted.beta_c - cp.beta_c).abs() < 1e-12);
        let narrow = solve_beta_c(&EnvironmentModel::Gaussian { mean: 0.0, std_dev: 0.5 }).unwrap();
        assert!((narrow.beta_c - 2.0 * cp.beta_c).abs() < 1e-11);
    }

    #[test]
    fn rademacher_has_no_finite_critical_point() {
        let err = solve_beta_c(&EnvironmentModel::rademacher()).unwrap_err();
        assert!(matches!(err, Error::NoFiniteCriticalPoint { .. }));
        // h approaches zero from below but never crosses
        let m = EnvironmentModel::rademacher();
        for i in 1..2000 {
            let b = i as f64 * 0.05;
            assert!(m.critical_residual(b) <= 0.0, "h({b}) > 0");
        }
    }

    #[test]
    fn biased_two_point_root_matches_bisection_oracle() {
        let m = EnvironmentModel::TwoPoint { p_plus: 0.25 };
        // oracle: plain bisection on the textbook form of h
        let h = |b: f64| {
            let (p, q) = (0.25f64, 0.75f64);
            let mgf = p * b.exp() + q * (-b).exp();
            b * (p * b.exp() - q * (-b).exp()) / mgf - mgf.ln() - LN_2
        };
        let (mut lo, mut hi) = (0.1, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 { hi = mid } else { lo = mid }
        }
        let cp = solve_beta_c(&m).unwrap();
        assert!((cp.beta_c - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!(cp.residual().abs() < 1e-12);
    }

    #[test]
    fn root_residuals_and_bracket_sign_change() {
        for m in finite_models() {
            let cp = solve_beta_c(&m).unwrap();
            assert!(m.critical_residual(cp.beta_c).abs() <= 1e-12, "{m:?}");
            assert!(cp.residual().abs() <= 1e-10, "{m:?}");
            assert!(m.critical_residual(cp.beta_c - 1e-9) < 0.0);
            assert!(m.critical_residual(cp.beta_c + 1e-9) > 0.0);
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(solve_beta_c(&EnvironmentModel::TwoPoint { p_plus: 1.0 }).is_err());
        assert!(solve_beta_c(&EnvironmentModel::Gaussian { mean: 0.0, std_dev: 0.0 }).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let m = EnvironmentModel::standard_gaussian();
        let cp = solve_beta_c(&m).unwrap();
        assert!((free_energy(&m, &cp, cp.beta_c).unwrap() - 2.0 * LN_2).abs() < 1e-12);
        assert!((free_energy(&m, &cp, 2.0 * cp.beta_c).unwrap() - 4.0 * LN_2).abs() < 1e-12);
        for m in finite_models() {
            let cp = solve_beta_c(&m).unwrap();
            assert!((free_energy(&m, &cp, 0.0).unwrap() - LN_2).abs() < 1e-15);
            let below = free_energy(&m, &cp, cp.beta_c - 1e-9).unwrap();
            let above = free_energy(&m, &cp, cp.beta_c + 1e-9).unwrap();
            assert!((below - above).abs() <= 1e-6);
        }
        assert!(free_energy(&m, &cp, -1.0).is_err());
    }

    #[test]
    fn annealed_moment_examples() {
        let m = EnvironmentModel::standard_gaussian();
        let cp = solve_beta_c(&m).unwrap();
        let full = annealed_perturbed_moment(&m, &cp, 16, 16, 0.25).unwrap();
        assert!((full - 4.0 * LN_2).abs() < 1e-12);
        assert!((full.exp() - 16.0).abs() < 1e-10);
        let one = annealed_perturbed_moment(&m, &cp, 1, 16, 0.25).unwrap();
        assert!((one - LN_2 / 4.0).abs() < 1e-13);
        for m in finite_models() {
            let cp = solve_beta_c(&m).unwrap();
            assert_eq!(annealed_perturbed_moment(&m, &cp, 0, 10, 0.3).unwrap(), 0.0);
        }
        assert!(annealed_perturbed_moment(&m, &cp, 1, 16, 0.0).is_err());
        assert!(annealed_perturbed_moment(&m, &cp, 1, 16, -0.5).is_err());
        assert!(annealed_perturbed_moment(&m, &cp, 17, 16, 0.5).is_err());
    }

    #[test]
    fn annealed_moment_matches_quadrature_at_one_generation() {
        // 2 E[exp(-(1 - eps) V_0)] with V_0 = -beta_c omega + lambda_c + log 2
        for m in finite_models() {
            let cp = solve_beta_c(&m).unwrap();
            for &(n, delta) in &[(16u32, 0.25), (100, 0.6), (8, 0.1)] {
                let eps = (n as f64).powf(-delta);
                let theta = 1.0 - eps;
                let direct = 2.0
                    * m.expectation(|w| (-theta * (-cp.beta_c * w + cp.shift())).exp(), 1e-13)
                        .unwrap();
                let closed = annealed_perturbed_moment(&m, &cp, 1, n, delta).unwrap().exp();
                assert!(((direct - closed) / closed).abs() < 1e-8, "{m:?} n={n} delta={delta}");
            }
        }
    }

    #[test]
    fn tilted_sampler_moments() {
        // tilted mean is lambda'(beta) and variance lambda''(beta)
        for m in finite_models() {
            let beta = 0.9;
            let mut rng = StreamKey::new(11).stream();
            let n = 400_000;
            let xs: Vec<f64> = (0..n).map(|_| m.sample_tilted(beta, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (m.cgf_d2(beta) / n as f64).sqrt();
            assert!((mean - m.cgf_d1(beta)).abs() < 4.0 * se, "{m:?} mean {mean}");
            assert!(((var - m.cgf_d2(beta)) / m.cgf_d2(beta)).abs() < 0.02, "{m:?} var {var}");
        }
    }

    proptest! {
        #[test]
        fn cgf_is_convex(a in -6.0f64..6.0, b in -6.0f64..6.0) {
            for m in models() {
                let mid = m.cgf(0.5 * (a + b));
                prop_assert!(mid <= 0.5 * (m.cgf(a) + m.cgf(b)) + 1e-12);
                prop_assert!(m.cgf_d2(a) >= 0.0);
                prop_assert!(m.cgf(a).is_finite());
            }
        }

        #[test]
        fn residual_is_nondecreasing(a in 0.0f64..20.0, d in 0.0f64..5.0) {
            for m in models() {
                prop_assert!(m.critical_residual(a + d) >= m.critical_residual(a) - 1e-12);
            }
        }
    }
}
