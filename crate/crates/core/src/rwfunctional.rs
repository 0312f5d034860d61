//! The random-walk functional
//! `E_Q[(g(n) * (S_n^+)^alpha) exp(-gamma_n S_n) 1{min S >= -kappa log n, S_n >= 0}]`
//! (with `*` a minimum or a maximum) by Monte Carlo, by exhaustive
//! enumeration for two-point increments, and through its Brownian
//! surrogate by nested adaptive quadrature.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cascade::Sign;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions, QuadResult};
use crate::replicas::run_replicas;
use crate::rng::StreamKey;
use crate::spine::{sample_walk_end_and_min, SpineIncrementDist};
use crate::stats::MeanEstimate;

/// How `g(n)` and `(S_n^+)^alpha` are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Star {
    Max,
    Min,
}

impl Star {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Star::Max => a.max(b),
            Star::Min => a.min(b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Star::Max => "max",
            Star::Min => "min",
        }
    }
}

impl std::str::FromStr for Star {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Star::Max),
            "min" => Ok(Star::Min),
            other => Err(Error::domain("star", format!("expected max or min, got {other:?}"))),
        }
    }
}

/// `alpha` and the growth function `g(n) = n^g_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub alpha: f64,
    pub g_exponent: f64,
}

impl ScalingParams {
    pub fn g(&self, n: f64) -> f64 {
        n.powf(self.g_exponent)
    }
}

/// `alpha = 1, g(n) = n^(1/2)` for `delta >= 1/2` (either sign);
/// `alpha = 3/(2 delta) - 2, g(n) = n^(3/2 - 2 delta)` for
/// `delta < 1/2` with the positive sign.
pub fn scaling_params(delta: f64, sign: Sign) -> Result<ScalingParams> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain("delta", "must be positive"));
    }
    if delta >= 0.5 {
        return Ok(ScalingParams {
            alpha: 1.0,
            g_exponent: 0.5,
        });
    }
    match sign {
        Sign::Plus => Ok(ScalingParams {
            alpha: 1.5 / delta - 2.0,
            g_exponent: 1.5 - 2.0 * delta,
        }),
        Sign::Minus => Err(Error::domain("delta", "the negative sign needs delta >= 1/2")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub delta: f64,
    pub sign: Sign,
    pub star: Star,
    pub kappa: f64,
}

impl FunctionalSpec {
    pub fn new(delta: f64, sign: Sign, star: Star, kappa: f64) -> Result<Self> {
        let spec = FunctionalSpec {
            delta,
            sign,
            star,
            kappa,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        scaling_params(self.delta, self.sign)?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::domain("kappa", "must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn scaling(&self) -> ScalingParams {
        scaling_params(self.delta, self.sign).expect("validated at construction")
    }

    /// `gamma_n = +- n^-delta`.
    pub fn gamma_n(&self, n: f64) -> f64 {
        self.sign.factor() * n.powf(-self.delta)
    }

    /// The integrand for a walk of length `n` ending at `end` with running
    /// minimum `low`.
    #[inline]
    pub fn integrand(&self, n: f64, end: f64, low: f64) -> f64 {
        if end < 0.0 || low < -self.kappa * n.ln() {
            return 0.0;
        }
        let sp = self.scaling();
        self.star.apply(sp.g(n), end.powf(sp.alpha)) * (-self.gamma_n(n) * end).exp()
    }
}

fn check_length(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain("n", "the functional needs n >= 2"));
    }
    Ok(())
}

/// Monte Carlo estimate over `replicas` spine walks; walk `r` draws from
/// `key.child(r)`.
pub fn mc_functional(
    spec: &FunctionalSpec,
    dist: &SpineIncrementDist,
    n: usize,
    replicas: u64,
    key: StreamKey,
    workers: usize,
) -> Result<MeanEstimate> {
    spec.validate()?;
    check_length(n)?;
    if replicas == 0 {
        return Err(Error::domain("replicas", "must be at least 1"));
    }
    let values = run_replicas(replicas, workers, |r| {
        let mut rng = key.child(r).stream();
        let (end, low) = sample_walk_end_and_min(dist, n, &mut rng);
        spec.integrand(n as f64, end, low)
    });
    Ok(MeanEstimate::from_samples(&values))
}

/// Largest walk length [`exact_functional`] will enumerate.
pub const EXACT_MAX_STEPS: usize = 24;

/// The functional computed exactly by summing over all `2^n` increment
/// sequences of a two-point spine law.
pub fn exact_functional(spec: &FunctionalSpec, dist: &SpineIncrementDist, n: usize) -> Result<f64> {
    spec.validate()?;
    check_length(n)?;
    let atoms = dist
        .atoms()
        .ok_or_else(|| Error::domain("env", "exact evaluation needs a two-point environment"))?;
    if n > EXACT_MAX_STEPS {
        return Err(Error::BudgetExceeded {
            operation: "exact_functional",
            n: n as u32,
            cap: EXACT_MAX_STEPS as u32,
        });
    }
    let mut total = 0.0;
    for word in 0..1u64 << n {
        let (mut s, mut low, mut p) = (0.0, 0.0f64, 1.0);
        for step in 0..n {
            let (x, q) = atoms[(word >> step) as usize & 1];
            s += x;
            low = low.min(s);
            p *= q;
        }
        total += p * spec.integrand(n as f64, s, low);
    }
    Ok(total)
}

/// Joint density of `(B_t, max_{s <= t} B_s)` at `(x, m)`:
/// `2 (2m - x) / (t sqrt(2 pi t)) exp(-(2m - x)^2 / (2t))` on `x <= m, m > 0`.
pub fn bm_joint_density(x: f64, m: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("t", "must be positive"));
    }
    if !(m > 0.0) || x > m {
        return Ok(0.0);
    }
    let y = 2.0 * m - x;
    Ok(2.0 * y / (t * (2.0 * PI * t).sqrt()) * (-y * y / (2.0 * t)).exp())
}

/// Inner-integral truncation in units of `sqrt(t)`. Beyond it the Gaussian
/// factor is below `exp(-450)`, which swamps every polynomial factor and the
/// `exp(sigma |x| / sqrt(t))` growth allowed for the negative sign.
pub const INNER_CUTOFF_SDS: f64 = 30.0;

/// Brownian surrogate of the functional at time `t = n`, for a walk with
/// increment variance `sigma_sq`:
///
/// `(2/sqrt(2 pi)) t^(-3/2) int_0^{kappa log t / sigma} int_{-30 sqrt t}^0
///   (g(t) * (sigma (-x))^alpha) exp(gamma_t sigma x) (2m - x) exp(-(2m - x)^2 / (2t)) dx dm`
///
/// which is the functional evaluated for `sigma B` after reflecting `B`.
/// The inner integral runs to absolute tolerance `tol / (2 c M)` and the
/// outer to `tol / 2`, so the total error stays within `tol` up to the
/// reliability of the error estimates.
pub fn bm_functional_quadrature(spec: &FunctionalSpec, sigma_sq: f64, n: f64, tol: f64) -> Result<QuadResult> {
    spec.validate()?;
    if !(n >= 2.0 && n.is_finite()) {
        return Err(Error::domain("n", "the functional needs n >= 2"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::domain("sigma_sq", "must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol", "must be positive"));
    }
    let t = n;
    let sigma = sigma_sq.sqrt();
    let sp = spec.scaling();
    let g = sp.g(t);
    let gamma = spec.gamma_n(t);
    let top = spec.kappa * t.ln() / sigma;
    if top == 0.0 {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let c = 2.0 / (2.0 * PI).sqrt() * t.powf(-1.5);
    let low = -INNER_CUTOFF_SDS * t.sqrt();
    // where g and (sigma |x|)^alpha cross
    let kink = -g.powf(1.0 / sp.alpha) / sigma;
    let inner_opts = QuadOptions::absolute(0.5 * tol / (c * top));
    let failure: Cell<Option<Error>> = Cell::new(None);
    let mut evaluations = 0usize;

    let inner = |m: f64| -> f64 {
        let h = |x: f64| {
            let y = 2.0 * m - x;
            spec.star.apply(g, (-sigma * x).powf(sp.alpha)) * (gamma * sigma * x - y * y / (2.0 * t)).exp() * y
        };
        let mut breaks = Vec::with_capacity(2);
        for b in [kink, 2.0 * m - t.sqrt()] {
            if b > low && b < 0.0 {
                breaks.push(b);
            }
        }
        match integrate(h, low, 0.0, &breaks, inner_opts) {
            Ok(r) => r.value,
            Err(e) => {
                let first = failure.take().unwrap_or(e);
                failure.set(Some(first));
                0.0
            }
        }
    };
    let outer = integrate(
        |m| {
            evaluations += 1;
            c * inner(m)
        },
        0.0,
        top,
        &[],
        QuadOptions::absolute(0.5 * tol),
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let mut r = outer?;
    r.error_estimate += 0.5 * tol;
    r.evaluations = evaluations;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{solve_beta_c, EnvironmentModel};

    fn dist(model: EnvironmentModel) -> SpineIncrementDist {
        SpineIncrementDist::new(model, solve_beta_c(&model).unwrap())
    }

    #[test]
    fn scaling_examples() {
        let p = scaling_params(0.75, Sign::Plus).unwrap();
        assert_eq!((p.alpha, p.g_exponent), (1.0, 0.5));
        let p = scaling_params(0.3, Sign::Plus).unwrap();
        assert!((p.alpha - 3.0).abs() < 1e-12);
        assert!((p.g_exponent - 0.9).abs() < 1e-12);
        let p = scaling_params(0.5, Sign::Plus).unwrap();
        assert_eq!(p.alpha, 1.0);
        assert_eq!(scaling_params(0.6, Sign::Minus).unwrap().alpha, 1.0);
        assert!(scaling_params(0.3, Sign::Minus).is_err());
        assert!(scaling_params(0.0, Sign::Plus).is_err());
        assert!(FunctionalSpec::new(0.6, Sign::Plus, Star::Max, -1.0).is_err());
    }

    #[test]
    fn growth_function_matches_endpoint_scale() {
        for n in [4.0f64, 64.0, 1000.0] {
            // n^(alpha/2) = g(n) on the critical window
            for delta in [0.5, 0.8] {
                let p = scaling_params(delta, Sign::Minus).unwrap();
                assert!((n.powf(p.alpha / 2.0) - p.g(n)).abs() < 1e-12 * p.g(n));
            }
            // below it, (n^delta)^alpha = g(n) <= n^(alpha/2)
            for delta in [0.1, 0.25, 0.3, 0.45] {
                let p = scaling_params(delta, Sign::Plus).unwrap();
                assert!((n.powf(delta).powf(p.alpha) - p.g(n)).abs() < 1e-10 * p.g(n));
                assert!(p.g(n) <= n.powf(p.alpha / 2.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn star_and_integrand() {
        assert_eq!(Star::Max.apply(1.0, 2.0), 2.0);
        assert_eq!(Star::Min.apply(1.0, 2.0), 1.0);
        let s = FunctionalSpec::new(0.6, Sign::Plus, Star::Max, 1.0).unwrap();
        assert_eq!(s.integrand(16.0, -0.1, 0.0), 0.0);
        assert_eq!(s.integrand(16.0, 3.0, -16f64.ln() - 1e-9), 0.0);
        let want = 4.0f64.max(3.0) * (-(16f64.powf(-0.6)) * 3.0).exp();
        assert!((s.integrand(16.0, 3.0, -1.0) - want).abs() < 1e-15);
    }

    #[test]
    fn two_steps_by_hand() {
        let d = dist(EnvironmentModel::TwoPoint { p_plus: 0.25 });
        let atoms = d.atoms().unwrap();
        for star in [Star::Max, Star::Min] {
            let spec = FunctionalSpec::new(0.6, Sign::Plus, star, 0.0).unwrap();
            let mut want = 0.0;
            for &(a, pa) in &atoms {
                for &(b, pb) in &atoms {
                    let (s1, s2) = (a, a + b);
                    if s1 >= 0.0 && s2 >= 0.0 {
                        want += pa * pb * star.apply(2f64.sqrt(), s2) * (-(2f64.powf(-0.6)) * s2).exp();
                    }
                }
            }
            let got = exact_functional(&spec, &d, 2).unwrap();
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
            assert!(got > 0.0);
            let mc = mc_functional(&spec, &d, 2, 200_000, StreamKey::new(9), 1).unwrap();
            assert!((mc.mean - want).abs() < 3.0 * mc.stderr, "{mc:?} vs {want}");
        }
    }

    #[test]
    fn exact_agrees_with_monte_carlo_on_longer_walks() {
        let d = dist(EnvironmentModel::TwoPoint { p_plus: 0.25 });
        let spec = FunctionalSpec::new(0.3, Sign::Plus, Star::Min, 2.0).unwrap();
        let exact = exact_functional(&spec, &d, 14).unwrap();
        let mc = mc_functional(&spec, &d, 14, 100_000, StreamKey::new(10), 1).unwrap();
        assert!((mc.mean - exact).abs() < 3.0 * mc.stderr, "{mc:?} vs {exact}");
        assert!(exact_functional(&spec, &dist(EnvironmentModel::standard_gaussian()), 4).is_err());
        assert!(exact_functional(&spec, &d, 25).is_err());
    }

    #[test]
    fn monte_carlo_is_nonnegative_and_validated() {
        let d = dist(EnvironmentModel::standard_gaussian());
        let spec = FunctionalSpec::new(0.6, Sign::Minus, Star::Max, 3.0).unwrap();
        let mc = mc_functional(&spec, &d, 32, 2000, StreamKey::new(11), 1).unwrap();
        assert!(mc.mean >= 0.0);
        assert!(mc_functional(&spec, &d, 1, 10, StreamKey::new(11), 1).is_err());
        assert!(mc_functional(&spec, &d, 8, 0, StreamKey::new(11), 1).is_err());
    }

    #[test]
    fn joint_density_values_and_support() {
        let v = bm_joint_density(0.0, 1.0, 1.0).unwrap();
        let want = 4.0 / (2.0 * PI).sqrt() * (-2.0f64).exp();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.21597).abs() < 1e-5);
        assert_eq!(bm_joint_density(2.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(bm_joint_density(-1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(bm_joint_density(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn joint_density_is_normalized() {
        let opts = QuadOptions::absolute(1e-11);
        let total = integrate(
            |m| integrate(|x| bm_joint_density(x, m, 1.0).unwrap(), -40.0, m, &[], opts).unwrap().value,
            0.0,
            20.0,
            &[],
            QuadOptions::absolute(1e-9),
        )
        .unwrap()
        .value;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn quadrature_limits() {
        let sigma_sq = 2.0 * std::f64::consts::LN_2;
        let spec = FunctionalSpec::new(0.6, Sign::Plus, Star::Max, 0.0).unwrap();
        assert_eq!(bm_functional_quadrature(&spec, sigma_sq, 64.0, 1e-8).unwrap().value, 0.0);
        let at = |kappa: f64| {
            let s = FunctionalSpec { kappa, ..spec };
            bm_functional_quadrature(&s, sigma_sq, 256.0, 1e-9).unwrap().value
        };
        let (a, b, c) = (at(1.0), at(5.0), at(10.0));
        assert!(0.0 < a && a <= b && b <= c, "{a} {b} {c}");
        assert!(bm_functional_quadrature(&spec, 0.0, 64.0, 1e-8).is_err());
        assert!(bm_functional_quadrature(&spec, sigma_sq, 1.0, 1e-8).is_err());
    }

    #[test]
    fn quadrature_tracks_monte_carlo() {
        let model = EnvironmentModel::standard_gaussian();
        let d = dist(model);
        let spec = FunctionalSpec::new(0.6, Sign::Plus, Star::Max, 10.0).unwrap();
        let q = bm_functional_quadrature(&spec, d.variance(), 64.0, 1e-8).unwrap().value;
        let mc = mc_functional(&spec, &d, 64, 40_000, StreamKey::new(12), 1).unwrap();
        assert!((mc.mean / q - 1.0).abs() < 0.25, "{mc:?} vs {q}");
    }
}
