//! Reductions and small statistical routines shared by the estimators.
//!
//! All sums go through [`pairwise_sum`], whose tree shape depends only on the
//! input length. Together with index-ordered parallel maps this makes every
//! reported number independent of the worker count.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, DiscreteCDF};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

const LEAF: usize = 32;

/// Sum in a fixed binary tree over blocks of 32.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n == 1 {
            return Self { mean, std_error: 0.0, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self { mean, std_error: (var / n as f64).sqrt(), n }
    }

    /// Does `value` lie within `k` standard errors of the mean?
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Unbiased sample variance and the standard error of that variance.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let d2: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let d4: Vec<f64> = xs.iter().map(|x| (x - mean).powi(4)).collect();
    let m2 = pairwise_sum(&d2) / n;
    let m4 = pairwise_sum(&d4) / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (var, se)
}

/// Sample covariance and a normal-approximation standard error.
pub fn covariance_with_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let est = MeanEstimate::from_samples(&prods);
    (est.mean * n / (n - 1.0), est.std_error)
}

/// Least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope. Propagated from per-point errors when
    /// those are supplied, otherwise from the residuals.
    pub slope_se: f64,
}

pub fn ols(xs: &[f64], ys: &[f64], y_se: Option<&[f64]>) -> LineFit {
    let n = xs.len();
    assert!(n >= 2 && ys.len() == n);
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = match y_se {
        Some(se) => xs
            .iter()
            .zip(se)
            .map(|(x, s)| ((x - mx) / sxx * s).powi(2))
            .sum::<f64>()
            .sqrt(),
        None if n > 2 => {
            let rss: f64 = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            (rss / (n - 2) as f64 / sxx).sqrt()
        }
        None => 0.0,
    };
    LineFit { slope, intercept, slope_se }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// One-sided binomial test: is observing `k` or more successes in `n` trials
/// still plausible at level `alpha` when the success probability is `p`?
pub fn binomial_upper_test(k: u64, n: u64, p: f64, alpha: f64) -> bool {
    if k == 0 {
        return true;
    }
    let dist = statrs::distribution::Binomial::new(p, n).expect("valid binomial");
    let tail = 1.0 - dist.cdf(k - 1);
    tail >= alpha
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    statrs::distribution::Normal::standard().inverse_cdf(p)
}

/// Bootstrap standard error of the mean of `xs`.
pub fn bootstrap_mean_se<R: Rng>(xs: &[f64], resamples: usize, rng: &mut R) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mut means = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = xs[rng.random_range(0..n)];
        }
        means.push(pairwise_sum(&buf) / n as f64);
    }
    let est = MeanEstimate::from_samples(&means);
    est.std_error * (resamples as f64).sqrt()
}

/// Weighted isotonic (non-decreasing) regression by pool-adjacent-violators.
pub fn isotonic_increasing(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(ws) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (y1, w1, n1) = blocks[blocks.len() - 2];
            let (y2, w2, n2) = blocks[blocks.len() - 1];
            if y1 <= y2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((y1 * w1 + y2 * w2) / (w1 + w2), w1 + w2, n1 + n2);
        }
    }
    blocks.into_iter().flat_map(|(y, _, n)| std::iter::repeat_n(y, n)).collect()
}

/// Weighted isotonic non-increasing regression.
pub fn isotonic_decreasing(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
    isotonic_increasing(&neg, ws).into_iter().map(|y| -y).collect()
}

/// Weighted least-squares projection of `(xs, ys)` onto functions that are
/// concave and non-decreasing on the grid `xs` (strictly increasing).
///
/// Dykstra's alternating projections over the half-spaces
/// `slope_i >= slope_{i+1}` and `slope_last >= 0`.
pub fn concave_nondecreasing_projection(xs: &[f64], ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(ys.len() == n && ws.len() == n);
    if n < 2 {
        return ys.to_vec();
    }
    // Each constraint is a·f >= 0 with sparse a.
    let mut constraints: Vec<Vec<(usize, f64)>> = Vec::new();
    for i in 0..n.saturating_sub(2) {
        let h1 = xs[i + 1] - xs[i];
        let h2 = xs[i + 2] - xs[i + 1];
        // (f1-f0)/h1 - (f2-f1)/h2 >= 0
        constraints.push(vec![(i, -1.0 / h1), (i + 1, 1.0 / h1 + 1.0 / h2), (i + 2, -1.0 / h2)]);
    }
    let h = xs[n - 1] - xs[n - 2];
    constraints.push(vec![(n - 2, -1.0 / h), (n - 1, 1.0 / h)]);

    let feasible = |f: &[f64]| {
        constraints
            .iter()
            .all(|c| c.iter().map(|&(i, a)| a * f[i]).sum::<f64>() >= -1e-12)
    };
    if feasible(ys) {
        return ys.to_vec();
    }

    let mut f = ys.to_vec();
    let mut corrections = vec![vec![0.0; n]; constraints.len()];
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for (c, corr) in constraints.iter().zip(corrections.iter_mut()) {
            let z: Vec<f64> = f.iter().zip(corr.iter()).map(|(a, b)| a + b).collect();
            // Projection onto {a·f >= 0} in the metric sum w_i f_i^2.
            let dot: f64 = c.iter().map(|&(i, a)| a * z[i]).sum();
            let mut proj = z.clone();
            if dot < 0.0 {
                let norm: f64 = c.iter().map(|&(i, a)| a * a / ws[i]).sum();
                for &(i, a) in c {
                    proj[i] -= dot * a / ws[i] / norm;
                }
            }
            for i in 0..n {
                corr[i] = z[i] - proj[i];
                change = change.max((proj[i] - f[i]).abs());
            }
            f = proj;
        }
        if change < 1e-13 && feasible(&f) {
            break;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_sum() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn ols_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let fit = ols(&xs, &ys, None);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-10);
    }

    #[test]
    fn pava_pools_violators() {
        let y = isotonic_increasing(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(y, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn concave_projection_keeps_concave_input() {
        let xs = [0.0, 1.0, 2.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        assert_eq!(concave_nondecreasing_projection(&xs, &ys, &[1.0; 4]), ys);
    }

    #[test]
    fn concave_projection_fixes_a_kink() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 1.2, 2.5];
        let f = concave_nondecreasing_projection(&xs, &ys, &[1.0; 4]);
        for i in 0..2 {
            let s1 = f[i + 1] - f[i];
            let s2 = f[i + 2] - f[i + 1];
            assert!(s1 >= s2 - 1e-9, "{f:?}");
        }
        assert!(f[3] >= f[2] - 1e-9);
        // The least-squares projection onto a cone through a line fit: slope
        // sequence becomes constant here.
        let resid: f64 = f.iter().zip(ys).map(|(a, b)| a - b).sum();
        assert!(resid.abs() < 1e-6);
    }

    #[test]
    fn ks_detects_shift() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-6);
        assert!(ks_two_sample(&a, &a).1 > 0.99);
    }

    #[test]
    fn binomial_test_behaviour() {
        assert!(binomial_upper_test(0, 10_000, 1e-6, 0.01));
        assert!(!binomial_upper_test(5, 10_000, 1e-6, 0.01));
    }
}
