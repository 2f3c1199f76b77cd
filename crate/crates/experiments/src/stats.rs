//! Small summary statistics.

use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x), &ranks(y))
}

/// Paired differences `a - b` summarized for a sign test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSummary {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub positive: usize,
    pub negative: usize,
    /// Two-sided sign-test p-value; zero differences are dropped.
    pub sign_test_p: f64,
}

pub fn paired(a: &[f64], b: &[f64]) -> PairedSummary {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let positive = d.iter().filter(|&&v| v > 0.0).count();
    let negative = d.iter().filter(|&&v| v < 0.0).count();
    PairedSummary {
        n: d.len(),
        mean_diff: mean(&d),
        sd_diff: sd(&d),
        positive,
        negative,
        sign_test_p: sign_test(positive, negative),
    }
}

pub fn sign_test(positive: usize, negative: usize) -> f64 {
    let n = (positive + negative) as u64;
    if n == 0 {
        return 1.0;
    }
    let k = positive.min(negative) as u64;
    let b = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * b.cdf(k)).min(1.0)
}
