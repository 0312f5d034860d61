//! Small descriptive statistics used by the estimators.

use serde::{Deserialize, Serialize};

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                count,
            };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            f64::NAN
        };
        MeanEstimate { mean, stderr, count }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_distance(&self, other: &MeanEstimate) -> f64 {
        (self.mean - other.mean).abs() / self.stderr.hypot(other.stderr)
    }
}

/// Quantile with linear interpolation between order statistics (the
/// "type 7" rule). `xs` need not be sorted.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Pearson goodness-of-fit statistic with cells of expected count below
/// `min_expected` pooled (in index order) into neighbours. Returns the
/// statistic and its degrees of freedom (pooled cells minus one).
pub fn chi_square_pooled(observed: &[u64], probabilities: &[f64], min_expected: f64) -> (f64, usize) {
    assert_eq!(observed.len(), probabilities.len());
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        o_acc += o as f64;
        e_acc += p * total as f64;
        if e_acc >= min_expected {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => cells.push((o_acc, e_acc)),
        }
    }
    let stat = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, cells.len().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(MeanEstimate::from_samples(&[]).mean.is_nan());
        assert_eq!(MeanEstimate::from_samples(&[1.0, 1.0]).stderr, 0.0);
    }

    #[test]
    fn quantiles() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
        assert_eq!(quantile(&xs, 1.0), 5.0);
    }

    #[test]
    fn chi_square_pooling() {
        let (s, dof) = chi_square_pooled(&[50, 50], &[0.5, 0.5], 5.0);
        assert_eq!((s, dof), (0.0, 1));
        // the two small trailing cells are folded into their neighbour
        let (s, dof) = chi_square_pooled(&[48, 48, 2, 2], &[0.48, 0.48, 0.02, 0.02], 5.0);
        assert_eq!(dof, 1);
        assert!(s.abs() < 1e-12);
    }
}
