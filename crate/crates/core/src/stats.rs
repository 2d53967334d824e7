//! Test statistics and verdicts: Kolmogorov–Smirnov (one and two sample),
//! chi-square goodness of fit, least-squares slopes, and the `TestReport`
//! record every experiment produces.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Threshold for distributional tests.
pub const P_THRESHOLD: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            weights: None,
        }
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != values.len() {
            return invalid("weights and values differ in length");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || !(weights.iter().sum::<f64>() > 0.0) {
            return invalid("weights must be nonnegative with a positive sum");
        }
        Ok(Self {
            values,
            weights: Some(weights),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Kish effective sample size; the plain count when unweighted.
    pub fn effective_size(&self) -> f64 {
        match &self.weights {
            None => self.values.len() as f64,
            Some(w) => {
                let s: f64 = w.iter().sum();
                let s2: f64 = w.iter().map(|x| x * x).sum();
                s * s / s2
            }
        }
    }

    /// Distinct sorted values with the ECDF value just after each.
    fn ecdf_steps(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = match &self.weights {
            None => self.values.iter().map(|&v| (v, 1.0)).collect(),
            Some(w) => self.values.iter().copied().zip(w.iter().copied()).collect(),
        };
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut steps: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (v, w) in pairs {
            acc += w;
            match steps.last_mut() {
                Some(last) if last.0 == v => last.1 = acc / total,
                _ => steps.push((v, acc / total)),
            }
        }
        steps
    }
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // series converges slowly here and the value is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test: `D = sup |ECDF − cdf|` with the asymptotic p-value.
pub fn ks_one_sample(sample: &EmpiricalSample, cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return invalid("KS test on an empty sample");
    }
    let mut d: f64 = 0.0;
    let mut before = 0.0;
    for (v, after) in sample.ecdf_steps() {
        let f = cdf(v);
        d = d.max((f - before).abs()).max((after - f).abs());
        before = after;
    }
    let p = kolmogorov_survival(sample.effective_size().sqrt() * d);
    Ok((d, p))
}

/// Two-sample KS test with effective size `n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &EmpiricalSample, b: &EmpiricalSample) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return invalid("KS test on an empty sample");
    }
    let sa = a.ecdf_steps();
    let sb = b.ecdf_steps();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let va = sa.get(i).map_or(f64::INFINITY, |s| s.0);
        let vb = sb.get(j).map_or(f64::INFINITY, |s| s.0);
        let v = va.min(vb);
        if va == v {
            fa = sa[i].1;
            i += 1;
        }
        if vb == v {
            fb = sb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let (na, nb) = (a.effective_size(), b.effective_size());
    let p = kolmogorov_survival((na * nb / (na + nb)).sqrt() * d);
    Ok((d, p))
}

/// Pearson chi-square statistic, degrees of freedom and upper-tail p-value.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<(f64, usize, f64)> {
    if observed.len() != expected.len() {
        return invalid("observed and expected differ in length");
    }
    if observed.len() < 2 {
        return invalid("chi-square needs at least two categories");
    }
    if expected.iter().any(|e| !(*e > 0.0)) {
        return invalid("expected counts must be positive");
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let df = observed.len() - 1;
    let p = ChiSquared::new(df as f64)
        .map(|dist| dist.sf(stat))
        .unwrap_or(f64::NAN);
    Ok((stat, df, p))
}

/// Ordinary least squares slope and its standard error.
pub fn regression_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return invalid("x and y differ in length");
    }
    let n = x.len();
    if n < 3 {
        return invalid("regression needs at least three points");
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 1e-300) {
        return invalid("x values are all equal");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok((slope, se))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// One named verdict.
///
/// `p_value` carries the p-value of a distributional test, or the signed gap
/// between estimate and target for a tolerance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub seed: u64,
    pub replicates: u64,
}

impl TestReport {
    /// Distributional test, passing when `p > P_THRESHOLD`.
    pub fn from_p_value(name: impl Into<String>, statistic: f64, p: f64, seed: u64, replicates: u64) -> Self {
        Self {
            name: name.into(),
            statistic,
            p_value: p,
            pass: p > P_THRESHOLD,
            seed,
            replicates,
        }
    }

    /// Absolute tolerance check: passes when `|estimate − target| ≤ tol`.
    pub fn within(name: impl Into<String>, estimate: f64, target: f64, tol: f64, seed: u64, replicates: u64) -> Self {
        let gap = estimate - target;
        Self {
            name: name.into(),
            statistic: estimate,
            p_value: gap,
            pass: gap.abs() <= tol,
            seed,
            replicates,
        }
    }

    /// Relative tolerance check; the gap is `(estimate − target) / |target|`.
    pub fn within_relative(
        name: impl Into<String>,
        estimate: f64,
        target: f64,
        rel_tol: f64,
        seed: u64,
        replicates: u64,
    ) -> Self {
        let gap = (estimate - target) / target.abs();
        Self {
            name: name.into(),
            statistic: estimate,
            p_value: gap,
            pass: gap.abs() <= rel_tol,
            seed,
            replicates,
        }
    }
}

impl std::fmt::Display for TestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<44} statistic={:.6} p/gap={:.6} seed={} n={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.p_value,
            self.seed,
            self.replicates
        )
    }
}

pub fn reports_to_json(reports: &[TestReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

pub fn reports_to_csv(reports: &[TestReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).expect("reports serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent evaluation of the Kolmogorov series with many terms.
    fn kolmogorov_oracle(lambda: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..=2000 {
            let k = k as f64;
            s += (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        2.0 * s
    }

    #[test]
    fn exact_quantiles_give_half_step() {
        let n = 200;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let (d, _) = ks_one_sample(&EmpiricalSample::new(xs), |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn critical_value_at_five_percent() {
        // bisection on the oracle series
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if kolmogorov_oracle(mid) > 0.05 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.3581).abs() < 1e-3);
        let crit = lo / 100f64.sqrt();
        assert!((crit - 0.1358).abs() < 1e-4);
        assert!((kolmogorov_survival(lo) - 0.05).abs() < 1e-9);
        for lambda in [0.3, 0.6, 1.0, 1.5, 2.5] {
            assert!((kolmogorov_survival(lambda) - kolmogorov_oracle(lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_sample_is_far_from_continuous() {
        let (d, _) = ks_one_sample(&EmpiricalSample::new(vec![0.3; 50]), |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d >= 0.5);
    }

    #[test]
    fn empty_samples_rejected() {
        let empty = EmpiricalSample::new(vec![]);
        assert!(ks_one_sample(&empty, |x| x).is_err());
        assert!(ks_two_sample(&empty, &EmpiricalSample::new(vec![1.0])).is_err());
    }

    #[test]
    fn two_sample_edges() {
        let a = EmpiricalSample::new(vec![0.1, 0.5, 0.7, 0.9]);
        let (d, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b = EmpiricalSample::new(vec![2.0, 3.0, 4.0]);
        assert_eq!(ks_two_sample(&a, &b).unwrap().0, 1.0);
    }

    #[test]
    fn two_sample_null_rejection_rate() {
        let trials = 500;
        let mut rejections = 0;
        for t in 0..trials {
            let mut rng = replicate_rng(99, "ks2-calibration", t);
            let a: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
            let (_, p) = ks_two_sample(&EmpiricalSample::new(a), &EmpiricalSample::new(b)).unwrap();
            if p < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn one_sample_null_rejection_rate() {
        let trials = 500;
        let mut rejections = 0;
        for t in 0..trials {
            let mut rng = replicate_rng(98, "ks1-calibration", t);
            let a: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            let (_, p) = ks_one_sample(&EmpiricalSample::new(a), |x| x.clamp(0.0, 1.0)).unwrap();
            if p < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn chi_square_arithmetic() {
        let (s, df, _) = chi_square_gof(&[10, 20], &[15.0, 15.0]).unwrap();
        assert!((s - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(df, 1);
        let (s, df, p) = chi_square_gof(&[5, 5, 5, 5, 5, 5], &[5.0; 6]).unwrap();
        assert_eq!((s, df), (0.0, 5));
        assert!((p - 1.0).abs() < 1e-12);
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
        assert!(chi_square_gof(&[1, 2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn regression_cases() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let (s, se) = regression_slope(&x, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && se < 1e-12);
        let (s, _) = regression_slope(&x, &[4.0; 4]).unwrap();
        assert_eq!(s, 0.0);
        assert!(regression_slope(&[1.0; 4], &x).is_err());
        assert!(regression_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());

        let mut rng = replicate_rng(5, "ols", 0);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + rng.random_range(-1.0..1.0)).collect();
        let (s, se) = regression_slope(&xs, &ys).unwrap();
        assert!((s - 3.0).abs() < 3.0 * se);
    }

    #[test]
    fn report_serialization_schema() {
        let r = TestReport::within("x", 1.02, 1.0, 0.05, 3, 10);
        assert!(r.pass);
        let json = reports_to_json(std::slice::from_ref(&r));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let keys: Vec<&String> = v[0].as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 6);
        let csv = reports_to_csv(&[r]);
        assert_eq!(csv.lines().next().unwrap(), "name,statistic,p_value,pass,seed,replicates");
    }

    proptest! {
        #[test]
        fn chi_square_ignores_category_order(
            obs in proptest::collection::vec(0u64..50, 2..8),
            rot in 0usize..8,
        ) {
            let exp: Vec<f64> = obs.iter().enumerate().map(|(i, _)| 5.0 + i as f64).collect();
            let (s1, _, _) = chi_square_gof(&obs, &exp).unwrap();
            let k = rot % obs.len();
            let mut o2 = obs.clone();
            let mut e2 = exp.clone();
            o2.rotate_left(k);
            e2.rotate_left(k);
            let (s2, _, _) = chi_square_gof(&o2, &e2).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-9 * s1.max(1.0));
        }

        #[test]
        fn ks_statistic_is_a_probability_gap(xs in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
            let (d, p) = ks_one_sample(&EmpiricalSample::new(xs), |x| 1.0 / (1.0 + (-x).exp())).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
