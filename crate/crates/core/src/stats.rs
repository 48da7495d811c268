//! Two-sample Mann-Whitney U test and the improved / worsened / none verdict.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Per-seed values of one metric under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub metric: String,
    pub condition: String,
}

impl SampleSet {
    pub fn new(metric: &str, condition: &str, values: Vec<f64>) -> Self {
        Self {
            values,
            metric: metric.into(),
            condition: condition.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Improved,
    Worsened,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact below 8 observations per side, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// One-sided in the direction the samples point to.
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// U of the first sample: its rank sum minus `n (n + 1) / 2`.
    pub u_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    pub direction: Direction,
    pub exact: bool,
    /// All pooled values identical.
    pub degenerate: bool,
}

/// Midranks (1-based) of the pooled values, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Every achievable U of the first sample under relabeling of the pooled ranks.
fn exact_u_distribution(ranks: &[f64], n_a: usize) -> Vec<f64> {
    fn walk(ranks: &[f64], start: usize, left: usize, sum: f64, out: &mut Vec<f64>) {
        if left == 0 {
            out.push(sum);
            return;
        }
        for i in start..=ranks.len() - left {
            walk(ranks, i + 1, left - 1, sum + ranks[i], out);
        }
    }
    let mut sums = Vec::new();
    walk(ranks, 0, n_a, 0.0, &mut sums);
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    sums.into_iter().map(|s| s - offset).collect()
}

pub fn mann_whitney_u(a: &SampleSet, b: &SampleSet, alpha: f64) -> Result<TestResult> {
    mann_whitney_u_with(a, b, alpha, PValueMethod::Auto, Sidedness::TwoSided)
}

pub fn mann_whitney_u_with(
    a: &SampleSet,
    b: &SampleSet,
    alpha: f64,
    method: PValueMethod,
    sidedness: Sidedness,
) -> Result<TestResult> {
    let (n_a, n_b) = (a.values.len(), b.values.len());
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidParameter("Mann-Whitney needs non-empty samples".into()));
    }
    if a.values.iter().chain(&b.values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("Mann-Whitney samples must be finite".into()));
    }
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let u_a = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let mean = (n_a * n_b) as f64 / 2.0;

    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(TestResult {
            u_statistic: u_a,
            p_value: 1.0,
            significant: false,
            direction: Direction::None,
            exact: false,
            degenerate: true,
        });
    }

    // Positive when the second sample tends to be larger.
    let lean = match median(&b.values).total_cmp(&median(&a.values)) {
        std::cmp::Ordering::Equal => mean - u_a,
        ord => {
            if ord == std::cmp::Ordering::Greater {
                1.0
            } else {
                -1.0
            }
        }
    };

    let exact = match method {
        PValueMethod::Exact => true,
        PValueMethod::Normal => false,
        PValueMethod::Auto => n_a.min(n_b) < 8,
    };
    let p_value = if exact {
        let dist = exact_u_distribution(&ranks, n_a);
        let total = dist.len() as f64;
        let tol = 1e-9;
        let hits = match sidedness {
            Sidedness::TwoSided => {
                let observed = (u_a - mean).abs();
                dist.iter().filter(|&&u| (u - mean).abs() >= observed - tol).count()
            }
            // b larger means small U for a
            Sidedness::OneSided if lean >= 0.0 => dist.iter().filter(|&&u| u <= u_a + tol).count(),
            Sidedness::OneSided => dist.iter().filter(|&&u| u >= u_a - tol).count(),
        };
        hits as f64 / total
    } else {
        let n = (n_a + n_b) as f64;
        let mut tie_term = 0.0;
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let upper_tail = 0.5 * erfc(z / std::f64::consts::SQRT_2);
        match sidedness {
            Sidedness::TwoSided => 2.0 * upper_tail,
            Sidedness::OneSided => {
                let towards = if lean >= 0.0 { u_a <= mean } else { u_a >= mean };
                if towards {
                    upper_tail
                } else {
                    1.0 - upper_tail
                }
            }
        }
    };
    let p_value = p_value.clamp(0.0, 1.0);
    let significant = p_value < alpha;
    let direction = match (significant, lean > 0.0, lean < 0.0) {
        (true, true, _) => Direction::Improved,
        (true, _, true) => Direction::Worsened,
        _ => Direction::None,
    };
    Ok(TestResult {
        u_statistic: u_a,
        p_value,
        significant,
        direction,
        exact,
        degenerate: false,
    })
}

/// Tests `treatment` against `baseline`; "improved" means the treatment is
/// stochastically larger.
pub fn compare_conditions(baseline: &SampleSet, treatment: &SampleSet, alpha: f64) -> Result<TestResult> {
    compare_conditions_with(baseline, treatment, alpha, Sidedness::TwoSided)
}

pub fn compare_conditions_with(
    baseline: &SampleSet,
    treatment: &SampleSet,
    alpha: f64,
    sidedness: Sidedness,
) -> Result<TestResult> {
    if baseline.metric != treatment.metric {
        return Err(Error::MetricMismatch(baseline.metric.clone(), treatment.metric.clone()));
    }
    mann_whitney_u_with(baseline, treatment, alpha, PValueMethod::Auto, sidedness)
}
