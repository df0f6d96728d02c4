use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Largest effective sample size evaluated with the exact null distribution.
pub const EXACT_THRESHOLD: usize = 25;

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal-approx",
        }
    }
}

/// Paired observations with their scan identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub ids: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedSample {
    pub fn new(ids: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != ids.len() {
            return Err(Error::Pairing(format!(
                "lengths differ: {} ids, {} x, {} y",
                ids.len(),
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Pairing("empty sample".into()));
        }
        let mut sorted: Vec<&String> = ids.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Pairing(format!("duplicate id {}", w[0])));
        }
        if let Some(v) = x.iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite observation {v}")));
        }
        Ok(PairedSample { ids, x, y })
    }

    /// Sample without meaningful ids (ids are the positions).
    pub fn unlabeled(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ids = (0..x.len()).map(|i| i.to_string()).collect();
        PairedSample::new(ids, x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub n_effective: usize,
    /// min(W+, W-).
    pub w_statistic: f64,
    pub w_plus: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
    pub mean_x: f64,
    pub mean_y: f64,
    pub alpha: f64,
}

impl PairedTestResult {
    pub fn significant(&self) -> bool {
        self.p_two_sided < self.alpha
    }
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
/// Also returns the sizes of tie groups larger than one.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Number of sign assignments giving each value of W+ for ranks 1..=n.
/// Entry `s` counts subsets of {1..n} summing to `s`.
pub fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided Wilcoxon signed-rank test on `x - y`. Zero differences are
/// dropped. Small tie-free samples use the exact null distribution, all
/// others the normal approximation with tie correction and no continuity
/// correction.
pub fn wilcoxon_signed_rank(s: &PairedSample) -> Result<PairedTestResult> {
    wilcoxon_signed_rank_with_alpha(s, DEFAULT_ALPHA)
}

pub fn wilcoxon_signed_rank_with_alpha(s: &PairedSample, alpha: f64) -> Result<PairedTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha {alpha} not in (0, 1)")));
    }
    if s.is_empty() {
        return Err(Error::Pairing("empty sample".into()));
    }
    let n = s.len();
    let mean_x = s.x.iter().sum::<f64>() / n as f64;
    let mean_y = s.y.iter().sum::<f64>() / n as f64;

    let diffs: Vec<f64> = s
        .x
        .iter()
        .zip(&s.y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let m = diffs.len();
    if m == 0 {
        return Err(Error::DegenerateSample);
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (m * (m + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let w_statistic = w_plus.min(w_minus);

    let (p, method) = if m <= EXACT_THRESHOLD && ties.is_empty() {
        // Tie-free ranks are integers, so W+ is too.
        let w = w_plus.round() as usize;
        let counts = signed_rank_counts(m);
        let all = 2f64.powi(m as i32);
        let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
        let upper: f64 = counts[w..].iter().sum::<f64>() / all;
        ((2.0 * lower.min(upper)).min(1.0), TestMethod::Exact)
    } else {
        let mf = m as f64;
        let mu = mf * (mf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term;
        let z = (w_plus - mu) / var.sqrt();
        let p = erfc(z.abs() / std::f64::consts::SQRT_2);
        (p.min(1.0), TestMethod::NormalApprox)
    };

    Ok(PairedTestResult {
        n,
        n_effective: m,
        w_statistic,
        w_plus,
        p_two_sided: p,
        method,
        mean_x,
        mean_y,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test(d: &[f64]) -> PairedTestResult {
        let zeros = vec![0.0; d.len()];
        wilcoxon_signed_rank(&PairedSample::unlabeled(d.to_vec(), zeros).unwrap()).unwrap()
    }

    #[test]
    fn all_same_sign_small_samples() {
        let r = test(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert_eq!(r.method, TestMethod::Exact);
        assert_eq!(r.p_two_sided, 0.015625);
        assert_eq!(r.w_statistic, 0.0);
        let r = test(&[-1.0, -2.0, -3.0, -4.0]);
        assert_eq!(r.p_two_sided, 0.125);
    }

    #[test]
    fn three_differences() {
        let r = test(&[1.0, -2.0, 3.0]);
        assert_eq!(r.w_plus, 4.0);
        assert_eq!(r.w_statistic, 2.0);
        assert_eq!(r.p_two_sided, 0.75);
    }

    #[test]
    fn single_pair_has_p_one() {
        let r = test(&[0.3]);
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.n_effective, 1);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = test(&[0.0, 1.0, 0.0, 2.0]);
        assert_eq!(r.n, 4);
        assert_eq!(r.n_effective, 2);
        assert_eq!(r.p_two_sided, 0.5);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let s = PairedSample::unlabeled(vec![0.5, 0.7], vec![0.5, 0.7]).unwrap();
        assert!(matches!(wilcoxon_signed_rank(&s), Err(Error::DegenerateSample)));
    }

    #[test]
    fn ties_force_normal_approximation() {
        let r = test(&[1.0, 1.0, -2.0, 3.0, 4.0]);
        assert_eq!(r.method, TestMethod::NormalApprox);
        // W+ = 1.5 + 1.5 + 4 + 5 = 12, mu = 7.5,
        // var = 5*6*11/24 - (8-2)/48 = 13.75 - 0.125
        let z: f64 = (12.0 - 7.5) / 13.625f64.sqrt();
        let expected = 2.0 * normal_cdf(-z);
        assert!((r.p_two_sided - expected).abs() < 1e-15);
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let r = test(&d);
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert_eq!(r.n_effective, 30);
        assert!(r.p_two_sided > 0.0 && r.p_two_sided < 1.0);
    }

    #[test]
    fn counts_match_subset_sums() {
        let c = signed_rank_counts(3);
        assert_eq!(c, vec![1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0]);
        let c = signed_rank_counts(25);
        assert_eq!(c.iter().sum::<f64>(), 2f64.powi(25));
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        // Phi(-1.959963984540054) = 0.025
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-13);
        // Phi(-5) = 2.866515718791939e-7
        assert!((normal_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_alpha_and_duplicate_ids() {
        let s = PairedSample::unlabeled(vec![1.0], vec![0.0]).unwrap();
        assert!(wilcoxon_signed_rank_with_alpha(&s, 0.0).is_err());
        assert!(PairedSample::new(vec!["a".into(), "a".into()], vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
        assert!(PairedSample::unlabeled(vec![1.0], vec![]).is_err());
    }
}
