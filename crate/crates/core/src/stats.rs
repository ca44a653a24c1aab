//! Test statistics used by the experiment harness.

use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::rng::Rng;

/// Midranks (1-based) of `values`; ties share the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve of scores `positive` against `negative`, in the
/// Mann–Whitney form `P(X > Y) + P(X = Y)/2`.
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    let (m, n) = (positive.len(), negative.len());
    assert!(m > 0 && n > 0, "AUC needs both classes");
    let all: Vec<f64> = positive.iter().chain(negative).copied().collect();
    let ranks = midranks(&all);
    let rank_sum: f64 = ranks[..m].iter().sum();
    (rank_sum - (m * (m + 1)) as f64 / 2.0) / (m * n) as f64
}

/// Percentile interval of `statistic` over `resamples` bootstrap draws of
/// the index set `0..n`.
pub fn bootstrap_interval<S>(n: usize, resamples: usize, level: f64, rng: &mut Rng, mut statistic: S) -> (f64, f64)
where
    S: FnMut(&[usize]) -> f64,
{
    stratified_bootstrap_interval(&[n], resamples, level, rng, |idx| statistic(&idx[0]))
}

/// Percentile bootstrap with independent resampling inside each stratum:
/// `statistic` receives one index vector per entry of `sizes`.
pub fn stratified_bootstrap_interval<S>(sizes: &[usize], resamples: usize, level: f64, rng: &mut Rng, mut statistic: S) -> (f64, f64)
where
    S: FnMut(&[Vec<usize>]) -> f64,
{
    let mut idx: Vec<Vec<usize>> = sizes.iter().map(|&n| vec![0; n]).collect();
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            for (v, &n) in idx.iter_mut().zip(sizes) {
                for i in v.iter_mut() {
                    *i = rng.random_range(0..n);
                }
            }
            statistic(&idx)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| values[((q * resamples as f64) as usize).min(resamples - 1)];
    (at(tail), at(1.0 - tail))
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    // The series converges slowly near zero, where the value is 1 anyway.
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous `cdf`.
pub fn ks_one_sample<C: Fn(f64) -> f64>(sample: &[f64], cdf: C) -> TestResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let en = n.sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

/// Pearson chi-square goodness of fit with `df = cells − 1 − fitted`.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], fitted: usize) -> TestResult {
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let df = (observed.len() - 1 - fitted) as f64;
    let p_value = 1.0 - ChiSquared::new(df).expect("positive degrees of freedom").cdf(statistic);
    TestResult { statistic, p_value }
}

/// Welch's two-sided two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> TestResult {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se = (sa + sb).sqrt();
    if se == 0.0 {
        let p_value = if ma == mb { 1.0 } else { 0.0 };
        return TestResult { statistic: 0.0, p_value };
    }
    let t = (ma - mb) / se;
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    TestResult {
        statistic: t,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean with its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_var(values);
    (mean, (var / values.len() as f64).sqrt())
}
