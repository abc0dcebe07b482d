//! Summary statistics and Kolmogorov–Smirnov tests.

use serde::Serialize;

use crate::scalar::pairwise_sum;

/// Two-sided 1% critical coefficient of the Kolmogorov distribution.
pub const KS_COEFF: f64 = 1.63;
/// Extra one-sample allowance for time-discretization bias (m ≥ 4000).
pub const DISCRETIZATION_ALLOWANCE: f64 = 0.001;

/// Mean, unbiased variance and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2, "summary needs at least two values");
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = pairwise_sum(&dev) / (n - 1) as f64;
        Summary { n, mean, variance, std_error: (variance / n as f64).sqrt() }
    }

    /// `|mean − target| / SE`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

/// Standard error of the sample variance, from the fourth central moment.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let s = Summary::of(xs);
    let d: Vec<f64> = xs.iter().map(|x| (x - s.mean) * (x - s.mean)).collect();
    Summary::of(&d).std_error
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn one_sample_threshold(n: usize) -> f64 {
    KS_COEFF / (n as f64).sqrt()
}

pub fn two_sample_threshold(n: usize, m: usize) -> f64 {
    KS_COEFF * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup_x |F_N(x) − F(x)|`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// `sup_x |F_N(x) − G_M(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Delete-one-block jackknife: `estimate(None)` on all data and
/// `estimate(Some(b))` with block `b` removed. Returns `(value, SE)`.
pub fn jackknife(blocks: usize, estimate: impl Fn(Option<usize>) -> f64) -> (f64, f64) {
    assert!(blocks >= 2);
    let full = estimate(None);
    let leave: Vec<f64> = (0..blocks).map(|b| estimate(Some(b))).collect();
    let m = pairwise_sum(&leave) / blocks as f64;
    let dev: Vec<f64> = leave.iter().map(|x| (x - m) * (x - m)).collect();
    let k = blocks as f64;
    (full, ((k - 1.0) / k * pairwise_sum(&dev)).sqrt())
}

/// Block of the `i`-th of `n` observations split into `blocks` contiguous blocks.
pub fn block_of(i: usize, n: usize, blocks: usize) -> usize {
    i * blocks / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn ks_one_sample_exact_small() {
        // Uniform CDF, points 0.1, 0.5, 0.9: gaps max(0.1, 1/3-0.1, ...)
        let d = ks_one_sample(&[0.9, 0.1, 0.5], |x| x);
        let expect: f64 = [0.1, 1.0 / 3.0 - 0.1, 0.5 - 1.0 / 3.0, 2.0 / 3.0 - 0.5, 0.9 - 2.0 / 3.0, 1.0 - 0.9]
            .into_iter()
            .fold(0.0, f64::max);
        assert!((d - expect).abs() < 1e-15);
    }

    #[test]
    fn ks_two_sample_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        // ties across samples are resolved before comparing
        assert!((ks_two_sample(&[1.0, 2.0, 2.0, 3.0], &[2.0, 5.0]) - 0.5).abs() < 1e-15);
        assert!((two_sample_threshold(100_000, 100_000) - 0.00729).abs() < 1e-5);
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64).collect();
        let (m, se) = jackknife(100, |skip| {
            let kept: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, x)| *x).collect();
            kept.iter().sum::<f64>() / kept.len() as f64
        });
        let s = Summary::of(&xs);
        assert!((m - s.mean).abs() < 1e-12);
        assert!((se - s.std_error).abs() < 1e-10);
        assert_eq!(block_of(99, 100, 20), 19);
    }
}
