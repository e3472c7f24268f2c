//! Rank-based and parametric tests used by the survey and analytics stages.
//!
//! Distribution tails come from `statrs`; everything else (ranking, tie
//! corrections, the test statistics themselves) is computed here.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestMethod {
    KruskalWallis,
    Dunn,
    WelchT,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for t/chi-square tests; number of groups for Dunn.
    pub df_or_groups: f64,
    pub method: TestMethod,
}

/// Standardizes each column to mean 0 and sample standard deviation 1.
///
/// Constant columns map to all zeros.
pub fn zscore_by_variable(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let n = matrix.len();
    if n < 2 {
        return Err(StatsError::TooFewRows(n));
    }
    let p = matrix[0].len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != p {
            return Err(StatsError::Ragged {
                row,
                got: r.len(),
                expected: p,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let mut out = vec![vec![0.0; p]; n];
    for col in 0..p {
        let column: Vec<f64> = matrix.iter().map(|r| r[col]).collect();
        let mean = mean(&column);
        let sd = sample_variance(&column, mean).sqrt();
        if sd == 0.0 {
            continue;
        }
        for (row, v) in column.iter().enumerate() {
            out[row][col] = (v - mean) / sd;
        }
    }
    Ok(out)
}

/// Per-respondent standardization: each row to mean 0, sample sd 1.
/// Diagnostic alternative to [`zscore_by_variable`].
pub fn zscore_by_row(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let transposed = transpose(matrix)?;
    transpose(&zscore_by_variable(&transposed)?)
}

fn transpose(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let p = matrix.first().map_or(0, Vec::len);
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != p {
            return Err(StatsError::Ragged {
                row,
                got: r.len(),
                expected: p,
            });
        }
    }
    Ok((0..p)
        .map(|c| matrix.iter().map(|r| r[c]).collect())
        .collect())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Average ranks (1-based) plus the tie term sum(t^3 - t) over tie groups.
pub fn average_ranks(xs: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j share the average of ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn normal_two_sided(z: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * dist.sf(z.abs())).clamp(0.0, 1.0)
}

/// Spearman rank correlation with average ranks for ties.
///
/// The p-value uses the t approximation with n - 2 degrees of freedom rather
/// than an exact permutation distribution.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (rx, _) = average_ranks(x);
    let (ry, _) = average_ranks(y);
    let rho = pearson(&rx, &ry)?;
    let df = x.len() as f64 - 2.0;
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * (df / ((1.0 + rho) * (1.0 - rho))).sqrt();
        t_two_sided(t, df)
    };
    Ok(TestResult {
        statistic: rho,
        p_value,
        df_or_groups: df,
        method: TestMethod::Spearman,
    })
}

struct PooledRanks {
    mean_ranks: Vec<f64>,
    sizes: Vec<f64>,
    total: f64,
    ties: f64,
}

fn pooled_ranks<G: AsRef<[f64]>>(groups: &[G]) -> Result<PooledRanks, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    let mut pooled = Vec::new();
    let mut labels = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let group = group.as_ref();
        if group.is_empty() {
            return Err(StatsError::EmptyGroup(g));
        }
        check_finite(group)?;
        pooled.extend_from_slice(group);
        labels.extend(std::iter::repeat_n(g, group.len()));
    }
    let (ranks, ties) = average_ranks(&pooled);
    let mut sums = vec![0.0; groups.len()];
    for (r, &g) in ranks.iter().zip(&labels) {
        sums[g] += r;
    }
    let sizes: Vec<f64> = groups.iter().map(|g| g.as_ref().len() as f64).collect();
    let mean_ranks = sums.iter().zip(&sizes).map(|(s, n)| s / n).collect();
    Ok(PooledRanks {
        mean_ranks,
        sizes,
        total: pooled.len() as f64,
        ties,
    })
}

/// Kruskal-Wallis H test with tie correction.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<TestResult, StatsError> {
    let pr = pooled_ranks(groups)?;
    let n = pr.total;
    if n < groups.len() as f64 + 1.0 {
        return Err(StatsError::TooFewSamples {
            needed: groups.len() + 1,
            got: n as usize,
        });
    }
    let correction = 1.0 - pr.ties / (n * n * n - n);
    if correction <= 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    let sum_term: f64 = pr
        .mean_ranks
        .iter()
        .zip(&pr.sizes)
        .map(|(r, ni)| ni * r * r)
        .sum();
    let h_raw = 12.0 / (n * (n + 1.0)) * sum_term - 3.0 * (n + 1.0);
    let h = (h_raw / correction).max(0.0);
    let df = groups.len() as f64 - 1.0;
    let p_value = ChiSquared::new(df).expect("df > 0").sf(h).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: h,
        p_value,
        df_or_groups: df,
        method: TestMethod::KruskalWallis,
    })
}

/// One pairwise Dunn comparison. `z` is positive when group `i` ranks higher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DunnComparison {
    pub i: usize,
    pub j: usize,
    pub result: TestResult,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnMatrix {
    pub mean_ranks: Vec<f64>,
    /// Upper-triangle comparisons in (i, j) lexicographic order, i < j.
    pub pairs: Vec<DunnComparison>,
}

impl DunnMatrix {
    pub fn groups(&self) -> usize {
        self.mean_ranks.len()
    }

    /// Comparison of `a` against `b`, oriented so positive z means `a` ranks higher.
    pub fn get(&self, a: usize, b: usize) -> Option<DunnComparison> {
        if a == b {
            return None;
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let mut cmp = *self.pairs.iter().find(|c| c.i == i && c.j == j)?;
        if a > b {
            cmp.i = a;
            cmp.j = b;
            cmp.result.statistic = -cmp.result.statistic;
        }
        Some(cmp)
    }

    /// Full k x k matrix of z statistics (zero diagonal, antisymmetric).
    pub fn z_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.groups();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| self.get(a, b).map_or(0.0, |c| c.result.statistic))
                    .collect()
            })
            .collect()
    }
}

/// Dunn's pairwise post-hoc test with tie-corrected pooled rank variance.
pub fn dunn_posthoc<G: AsRef<[f64]>>(groups: &[G]) -> Result<DunnMatrix, StatsError> {
    let pr = pooled_ranks(groups)?;
    let n = pr.total;
    let variance = n * (n + 1.0) / 12.0 - pr.ties / (12.0 * (n - 1.0));
    if variance <= 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    let k = groups.len();
    let comparisons = (k * (k - 1) / 2) as f64;
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let se = (variance * (1.0 / pr.sizes[i] + 1.0 / pr.sizes[j])).sqrt();
            let z = (pr.mean_ranks[i] - pr.mean_ranks[j]) / se;
            let p = normal_two_sided(z);
            pairs.push(DunnComparison {
                i,
                j,
                result: TestResult {
                    statistic: z,
                    p_value: p,
                    df_or_groups: k as f64,
                    method: TestMethod::Dunn,
                },
                p_bonferroni: (p * comparisons).min(1.0),
            });
        }
    }
    Ok(DunnMatrix {
        mean_ranks: pr.mean_ranks,
        pairs,
    })
}

/// Welch's unequal-variance two-sample t test (two-sided).
///
/// Positive statistic means `sample_a` has the larger mean.
pub fn welch_t(sample_a: &[f64], sample_b: &[f64]) -> Result<TestResult, StatsError> {
    for s in [sample_a, sample_b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: s.len(),
            });
        }
        check_finite(s)?;
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let va = sample_variance(sample_a, ma) / na;
    let vb = sample_variance(sample_b, mb) / nb;
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::BothConstant);
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided(t, df),
        df_or_groups: df,
        method: TestMethod::WelchT,
    })
}
