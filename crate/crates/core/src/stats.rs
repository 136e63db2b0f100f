//! Rank tests: Mann-Whitney U, Wilcoxon signed-rank, and Bonferroni
//! adjustment.
//!
//! Small samples use the exact permutation distribution of the observed
//! midranks (ties included); larger samples use the normal approximation
//! with tie-corrected variance and a continuity correction of 0.5.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest `n + m` (Mann-Whitney) or `n` (Wilcoxon) tested exactly by default.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// First sample (or the differences) shifted down.
    Less,
    /// First sample (or the differences) shifted up.
    Greater,
    TwoSided,
}

impl Alternative {
    pub fn is_one_sided(self) -> bool {
        self != Alternative::TwoSided
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    NormalApproximation,
}

/// How to choose between the exact and approximate null distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MethodChoice {
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub method: Method,
    pub alternative: Alternative,
}

/// Midranks (1-based) of `values` and the tie sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn std_normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(z)
}

fn check_finite(sample: &[f64], name: &str) -> Result<()> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{name} contains a non-finite value")));
    }
    Ok(())
}

/// Tail probabilities `P(S ≤ s)` and `P(S ≥ s)` of an exact distribution
/// given as counts over doubled statistic values.
fn tails(counts: &[f64], observed2: usize) -> (f64, f64) {
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=observed2.min(counts.len() - 1)].iter().sum();
    let upper: f64 = counts[observed2.min(counts.len())..].iter().sum();
    (lower / total, upper / total)
}

fn combine(alt: Alternative, lower: f64, upper: f64) -> f64 {
    let p = match alt {
        Alternative::Less => lower,
        Alternative::Greater => upper,
        Alternative::TwoSided => 2.0 * lower.min(upper),
    };
    p.clamp(0.0, 1.0)
}

fn normal_p(alt: Alternative, stat: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return 1.0;
    }
    let sd = var.sqrt();
    let p = match alt {
        Alternative::Less => std_normal_cdf((stat - mean + 0.5) / sd),
        Alternative::Greater => 1.0 - std_normal_cdf((stat - mean - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((stat - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * (1.0 - std_normal_cdf(z))
        }
    };
    p.clamp(0.0, 1.0)
}

/// Mann-Whitney U test of `x` against `y`. The statistic is `U_x`, the
/// number of `(x, y)` pairs with `x > y` (ties count one half);
/// `Alternative::Less` means `x` tends to be smaller.
pub fn mann_whitney_u(x: &[f64], y: &[f64], alt: Alternative) -> Result<TestResult> {
    mann_whitney_u_with(x, y, alt, MethodChoice::Auto)
}

pub fn mann_whitney_u_with(x: &[f64], y: &[f64], alt: Alternative, choice: MethodChoice) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::validation("Mann-Whitney U needs two nonempty samples"));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;
    let exact = match choice {
        MethodChoice::Auto => n + m <= EXACT_LIMIT,
        MethodChoice::Exact => true,
        MethodChoice::Normal => false,
    };
    let p_value = if exact {
        // Subsets of size n drawn from the doubled midranks: counts[j][s].
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![vec![0.0f64; max_sum + 1]; n + 1];
        counts[0][0] = 1.0;
        for &r in &doubled {
            for j in (1..=n).rev() {
                let (lo, hi) = counts.split_at_mut(j);
                for s in (r..=max_sum).rev() {
                    hi[0][s] += lo[j - 1][s - r];
                }
            }
        }
        // U_x = R_x − n(n+1)/2, so doubled rank sums map one-to-one onto U.
        let observed2 = (2.0 * rank_sum).round() as usize;
        let (lower, upper) = tails(&counts[n], observed2);
        combine(alt, lower, upper)
    } else {
        let big_n = (n + m) as f64;
        let mean = (n * m) as f64 / 2.0;
        let var = (n * m) as f64 / 12.0 * ((big_n + 1.0) - tie_sum(&ties) / (big_n * (big_n - 1.0)));
        normal_p(alt, u, mean, var)
    };
    Ok(TestResult {
        statistic: u,
        p_value,
        n,
        m: Some(m),
        method: if exact { Method::Exact } else { Method::NormalApproximation },
        alternative: alt,
    })
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped. The reported statistic is `min(T+, T−)`; `Alternative::Greater`
/// means the differences tend to be positive.
pub fn wilcoxon_signed_rank(diffs: &[f64], alt: Alternative) -> Result<TestResult> {
    wilcoxon_signed_rank_with(diffs, alt, MethodChoice::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], alt: Alternative, choice: MethodChoice) -> Result<TestResult> {
    check_finite(diffs, "differences")?;
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::validation("all paired differences are zero"));
    }
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let t_plus: f64 = ranks.iter().zip(&nonzero).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let t_minus = total - t_plus;
    let exact = match choice {
        MethodChoice::Auto => n <= EXACT_LIMIT,
        MethodChoice::Exact => true,
        MethodChoice::Normal => false,
    };
    let p_value = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed2 = (2.0 * t_plus).round() as usize;
        let (lower, upper) = tails(&counts, observed2);
        combine(alt, lower, upper)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        normal_p(alt, t_plus, mean, var)
    };
    Ok(TestResult {
        statistic: t_plus.min(t_minus),
        p_value,
        n,
        m: None,
        method: if exact { Method::Exact } else { Method::NormalApproximation },
        alternative: alt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adjusted {
    pub p_adjusted: f64,
    pub reject: bool,
}

/// Bonferroni adjustment `min(1, p·k)` with a decision at `alpha`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<Adjusted>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation(format!("p-value {p} is outside [0, 1]")));
    }
    let k = p_values.len() as f64;
    Ok(p_values
        .iter()
        .map(|&p| {
            let p_adjusted = (p * k).min(1.0);
            Adjusted { p_adjusted, reject: p_adjusted < alpha }
        })
        .collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
