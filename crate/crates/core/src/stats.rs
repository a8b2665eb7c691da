//! Rank-based tests and boxplot summaries over metric groups.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(String),
    #[error("duplicate group label {0}")]
    DuplicateGroup(String),
    #[error("non-finite value in group {0}")]
    NonFinite(String),
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("all values are identical, the statistic is undefined")]
    DegenerateGroups,
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Labelled samples in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGroups {
    groups: Vec<(String, Vec<f64>)>,
}

impl MetricGroups {
    pub fn new(groups: Vec<(String, Vec<f64>)>) -> Result<Self, StatsError> {
        if groups.len() < 2 {
            return Err(StatsError::TooFewGroups(groups.len()));
        }
        for (i, (label, values)) in groups.iter().enumerate() {
            if values.is_empty() {
                return Err(StatsError::EmptyGroup(label.clone()));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(label.clone()));
            }
            if groups[..i].iter().any(|(l, _)| l == label) {
                return Err(StatsError::DuplicateGroup(label.clone()));
            }
        }
        Ok(MetricGroups { groups })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|(l, _)| l.as_str())
    }

    pub fn groups(&self) -> &[(String, Vec<f64>)] {
        &self.groups
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.groups.iter().find(|(l, _)| l == label).map(|(_, v)| v.as_slice())
    }
}

/// Midranks (1-based) of `values` and the tie term Σ(t³−t).
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
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
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

// Lanczos approximation, g = 7, n = 9.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Upper regularized incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Lower regularized incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper tail of the chi-squared distribution.
pub fn chi_squared_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Complementary error function through erfc(x) = Q(1/2, x²).
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

/// Two-sided tail of a standard normal.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

pub fn kruskal_wallis(groups: &MetricGroups) -> Result<KruskalWallis, StatsError> {
    let all: Vec<f64> = groups.groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let n = all.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations(n));
    }
    let (ranks, ties) = midranks(&all);
    let nf = n as f64;
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(StatsError::DegenerateGroups);
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for (_, values) in &groups.groups {
        let r: f64 = ranks[offset..offset + values.len()].iter().sum();
        sum += r * r / values.len() as f64;
        offset += values.len();
    }
    let h = ((12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0)) / correction).max(0.0);
    let df = groups.groups.len() - 1;
    Ok(KruskalWallis { h, df, p: chi_squared_sf(h, df) })
}

/// Exact enumeration below this combined size when there are no ties.
pub const EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMode {
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOptions {
    pub mode: WilcoxonMode,
    pub continuity_correction: bool,
}

impl Default for WilcoxonOptions {
    fn default() -> Self {
        WilcoxonOptions { mode: WilcoxonMode::Auto, continuity_correction: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], opts: WilcoxonOptions) -> Result<RankSum, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite value".into()));
    }
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&all);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let exact = match opts.mode {
        WilcoxonMode::Exact => true,
        WilcoxonMode::Normal => false,
        WilcoxonMode::Auto => all.len() <= EXACT_CUTOFF && ties == 0.0,
    };
    let p = if exact {
        exact_p(&ranks, a.len(), ra)
    } else {
        let n = na + nb;
        let mean = na * nb / 2.0;
        let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let mut diff = u - mean;
            if opts.continuity_correction {
                diff -= 0.5 * diff.signum();
            }
            normal_two_sided(diff / var.sqrt())
        }
    };
    Ok(RankSum { u, p_two_sided: p, exact })
}

/// Permutation p of the first-sample rank sum, counting subsets over
/// doubled midranks so ties stay integral.
fn exact_p(ranks: &[f64], na: usize, ra: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    for (seen, &r) in doubled.iter().enumerate() {
        for k in (1..=na.min(seen + 1)).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let row = &mut upper[0];
            for s in (r..=max_sum).rev() {
                row[s] += prev[s - r];
            }
        }
    }
    let observed = (2.0 * ra).round() as usize;
    let row = &ways[na];
    let total: f64 = row.iter().sum();
    let lower: f64 = row[..=observed].iter().sum();
    let upper: f64 = row[observed..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

pub fn bonferroni(alpha: f64, m: usize) -> Result<f64, StatsError> {
    if m == 0 {
        return Err(StatsError::InvalidArgument("m must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(alpha / m as f64)
}

/// Sample quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub notch_low: f64,
    pub notch_high: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplot_summary(values: &[f64]) -> Result<BoxplotSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile(&sorted, 0.5);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let half_notch = 1.57 * iqr / (sorted.len() as f64).sqrt();
    let (fence_low, fence_high) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|&v| v >= fence_low && v <= fence_high);
    Ok(BoxplotSummary {
        n: sorted.len(),
        median,
        q1,
        q3,
        iqr,
        notch_low: median - half_notch,
        notch_high: median + half_notch,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: sorted.iter().copied().filter(|&v| v < fence_low || v > fence_high).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    pub u: f64,
    pub p: f64,
    pub exact: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub alpha: f64,
    pub threshold: f64,
    pub labels: Vec<String>,
    pub pairs: Vec<PairResult>,
    /// Symmetric p-value matrix in label order, 1 on the diagonal.
    pub p_matrix: Vec<Vec<f64>>,
    pub significant: Vec<Vec<bool>>,
}

pub fn pairwise_comparison_report(
    groups: &MetricGroups,
    alpha: f64,
    opts: WilcoxonOptions,
) -> Result<PairwiseReport, StatsError> {
    let k = groups.groups.len();
    let index_pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let threshold = bonferroni(alpha, index_pairs.len())?;
    let tests: Vec<RankSum> = index_pairs
        .par_iter()
        .map(|&(i, j)| wilcoxon_rank_sum(&groups.groups[i].1, &groups.groups[j].1, opts))
        .collect::<Result<_, _>>()?;
    let mut p_matrix = vec![vec![1.0; k]; k];
    let mut significant = vec![vec![false; k]; k];
    let mut pairs = Vec::with_capacity(tests.len());
    for (&(i, j), test) in index_pairs.iter().zip(&tests) {
        let sig = test.p_two_sided < threshold;
        p_matrix[i][j] = test.p_two_sided;
        p_matrix[j][i] = test.p_two_sided;
        significant[i][j] = sig;
        significant[j][i] = sig;
        pairs.push(PairResult {
            a: groups.groups[i].0.clone(),
            b: groups.groups[j].0.clone(),
            u: test.u,
            p: test.p_two_sided,
            exact: test.exact,
            significant: sig,
        });
    }
    Ok(PairwiseReport {
        alpha,
        threshold,
        labels: groups.labels().map(str::to_string).collect(),
        pairs,
        p_matrix,
        significant,
    })
}

/// Full analysis of one metric: omnibus test, pairwise tests, boxplots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub metric: String,
    pub test: String,
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
    pub degenerate: bool,
    pub significant_pairs: Vec<[String; 2]>,
    pub pairwise: PairwiseReport,
    pub boxplots: Vec<(String, BoxplotSummary)>,
}

pub fn analyze(
    metric: &str,
    groups: &MetricGroups,
    alpha: f64,
    opts: WilcoxonOptions,
) -> Result<StatsReport, StatsError> {
    let (kw, degenerate) = match kruskal_wallis(groups) {
        Ok(kw) => (kw, false),
        Err(StatsError::DegenerateGroups) => {
            (KruskalWallis { h: 0.0, df: groups.groups.len() - 1, p: 1.0 }, true)
        }
        Err(e) => return Err(e),
    };
    let pairwise = pairwise_comparison_report(groups, alpha, opts)?;
    let boxplots = groups
        .groups
        .iter()
        .map(|(l, v)| Ok((l.clone(), boxplot_summary(v)?)))
        .collect::<Result<_, StatsError>>()?;
    Ok(StatsReport {
        metric: metric.to_string(),
        test: "kruskal_wallis".into(),
        statistic: kw.h,
        df: kw.df,
        p: kw.p,
        degenerate,
        significant_pairs: pairwise
            .pairs
            .iter()
            .filter(|p| p.significant)
            .map(|p| [p.a.clone(), p.b.clone()])
            .collect(),
        pairwise,
        boxplots,
    })
}

/// Boxplot rows, one per (metric, group).
pub fn boxplot_csv(reports: &[StatsReport]) -> String {
    let mut out = String::from(
        "metric,group,n,median,q1,q3,iqr,notch_low,notch_high,whisker_low,whisker_high,outliers\n",
    );
    for report in reports {
        for (label, b) in &report.boxplots {
            let outliers: Vec<String> = b.outliers.iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                report.metric,
                label,
                b.n,
                b.median,
                b.q1,
                b.q3,
                b.iqr,
                b.notch_low,
                b.notch_high,
                b.whisker_low,
                b.whisker_high,
                outliers.join(";")
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
    use statrs::function::gamma as sgamma;

    fn groups(parts: &[(&str, &[f64])]) -> MetricGroups {
        MetricGroups::new(parts.iter().map(|(l, v)| (l.to_string(), v.to_vec())).collect()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
        }
    }

    #[test]
    fn incomplete_gamma_matches_reference() {
        for &a in &[0.5, 1.0, 2.5, 3.0, 7.0, 25.0, 150.0] {
            for &x in &[1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0, 200.0] {
                let q = gamma_q(a, x);
                let reference = sgamma::gamma_ur(a, x);
                if reference > 1e-280 {
                    assert!(rel(q, reference) <= 1e-10, "Q({a},{x}) {q} vs {reference}");
                }
                assert!(rel(gamma_p(a, x), sgamma::gamma_lr(a, x)) <= 1e-10 || sgamma::gamma_lr(a, x) < 1e-280);
            }
            assert!((ln_gamma(a) - sgamma::ln_gamma(a)).abs() <= 1e-10 * sgamma::ln_gamma(a).abs().max(1.0));
        }
    }

    #[test]
    fn erfc_and_chi_squared() {
        for &x in &[-2.0, -0.3, 0.0, 0.4, 1.0, 3.0, 6.0] {
            assert!(rel(erfc(x), statrs::function::erf::erfc(x)) < 1e-10, "erfc({x})");
        }
        for df in 1..8 {
            let chi = ChiSquared::new(df as f64).unwrap();
            for &x in &[0.2, 1.0, 3.857, 10.0, 40.0] {
                assert!(rel(chi_squared_sf(x, df), chi.sf(x)) < 1e-9, "df {df} x {x}: {} vs {}", chi_squared_sf(x, df), chi.sf(x));
            }
        }
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(rel(normal_two_sided(1.96), 2.0 * (1.0 - n.cdf(1.96))) < 1e-9);
    }

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, 6.0);
    }

    /// H from its definition, without the shortcut formula.
    fn kw_oracle(g: &MetricGroups) -> f64 {
        let all: Vec<f64> = g.groups().iter().flat_map(|(_, v)| v.clone()).collect();
        let n = all.len() as f64;
        let rank = |x: f64| {
            let below = all.iter().filter(|&&v| v < x).count() as f64;
            let equal = all.iter().filter(|&&v| v == x).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let grand = (n + 1.0) / 2.0;
        let mut h = 0.0;
        for (_, v) in g.groups() {
            let mean: f64 = v.iter().map(|&x| rank(x)).sum::<f64>() / v.len() as f64;
            h += v.len() as f64 * (mean - grand).powi(2);
        }
        let mut ties = 0.0;
        let mut seen: Vec<f64> = Vec::new();
        for &x in &all {
            if !seen.contains(&x) {
                seen.push(x);
                let t = all.iter().filter(|&&v| v == x).count() as f64;
                ties += t.powi(3) - t;
            }
        }
        12.0 / (n * (n + 1.0)) * h / (1.0 - ties / (n.powi(3) - n))
    }

    #[test]
    fn kruskal_wallis_anchor() {
        let g = groups(&[("a", &[1.0, 2.0, 3.0]), ("b", &[4.0, 5.0, 6.0])]);
        let kw = kruskal_wallis(&g).unwrap();
        assert!((kw.h - 3.857).abs() < 1e-3);
        assert!((kw.h - 27.0 / 7.0).abs() < 1e-12);
        assert_eq!(kw.df, 1);
        assert!((kw.h - kw_oracle(&g)).abs() < 1e-12);

        let same = groups(&[("a", &[1.0, 2.0, 3.0]), ("b", &[1.0, 2.0, 3.0])]);
        let kw = kruskal_wallis(&same).unwrap();
        assert!(kw.h.abs() < 1e-12 && (kw.p - 1.0).abs() < 1e-12);

        let flat = groups(&[("a", &[2.0, 2.0]), ("b", &[2.0])]);
        assert_eq!(kruskal_wallis(&flat), Err(StatsError::DegenerateGroups));
        let short = groups(&[("a", &[1.0]), ("b", &[2.0])]);
        assert_eq!(kruskal_wallis(&short), Err(StatsError::TooFewObservations(2)));
    }

    #[test]
    fn six_group_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parts: Vec<(String, Vec<f64>)> = (0..6)
            .map(|g| (format!("g{g}"), (0..40).map(|_| rng.gen::<f64>() + g as f64 * 0.3).collect()))
            .collect();
        let g = MetricGroups::new(parts).unwrap();
        let kw = kruskal_wallis(&g).unwrap();
        assert_eq!(kw.df, 5);
        assert!(kw.p < 0.001);
        assert!((kw.h - kw_oracle(&g)).abs() < 1e-9 * kw.h);
    }

    #[test]
    fn group_validation() {
        assert!(matches!(MetricGroups::new(vec![("a".into(), vec![1.0])]), Err(StatsError::TooFewGroups(1))));
        assert!(matches!(
            MetricGroups::new(vec![("a".into(), vec![1.0]), ("b".into(), vec![])]),
            Err(StatsError::EmptyGroup(_))
        ));
        assert!(matches!(
            MetricGroups::new(vec![("a".into(), vec![1.0]), ("a".into(), vec![2.0])]),
            Err(StatsError::DuplicateGroup(_))
        ));
    }

    /// Two-sided permutation p by listing every subset.
    fn enumeration_oracle(a: &[f64], b: &[f64]) -> f64 {
        let all: Vec<f64> = a.iter().chain(b).copied().collect();
        let (ranks, _) = midranks(&all);
        let n = all.len();
        let observed: f64 = ranks[..a.len()].iter().sum();
        let (mut lo, mut hi, mut total) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            total += 1;
            if s <= observed + 1e-9 {
                lo += 1;
            }
            if s >= observed - 1e-9 {
                hi += 1;
            }
        }
        (2.0 * lo.min(hi) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn exact_rank_sum_anchors() {
        let exact = WilcoxonOptions { mode: WilcoxonMode::Exact, ..Default::default() };
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], exact).unwrap();
        assert!((r.p_two_sided - 0.1).abs() < 1e-9);
        assert_eq!(r.u, 0.0);
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], exact).unwrap();
        assert!((r.p_two_sided - 1.0).abs() < 1e-9);
        let auto = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], WilcoxonOptions::default()).unwrap();
        assert!(auto.exact);
        let tied = wilcoxon_rank_sum(&[1.0, 2.0, 2.0], &[4.0, 5.0, 6.0], WilcoxonOptions::default()).unwrap();
        assert!(!tied.exact);
        assert_eq!(wilcoxon_rank_sum(&[], &[1.0], exact), Err(StatsError::EmptySample));
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let exact = WilcoxonOptions { mode: WilcoxonMode::Exact, ..Default::default() };
        for _ in 0..200 {
            let na = rng.gen_range(1..7);
            let nb = rng.gen_range(1..7);
            let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(0..6) as f64).collect();
            let p = wilcoxon_rank_sum(&a, &b, exact).unwrap().p_two_sided;
            assert!((p - enumeration_oracle(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn normal_mode_reference() {
        // a=[1..5], b=[6..10]: U=0, mean 12.5, var 22.9167, corrected z = -12/4.787
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [6.0, 7.0, 8.0, 9.0, 10.0];
        let normal = WilcoxonOptions { mode: WilcoxonMode::Normal, continuity_correction: true };
        let r = wilcoxon_rank_sum(&a, &b, normal).unwrap();
        let z = -12.0 / (25.0f64 * 11.0 / 12.0).sqrt();
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(rel(r.p_two_sided, 2.0 * n.cdf(z)) < 1e-9);
        let raw = wilcoxon_rank_sum(&a, &b, WilcoxonOptions { continuity_correction: false, ..normal }).unwrap();
        assert!(raw.p_two_sided < r.p_two_sided);
        let flat = wilcoxon_rank_sum(&[1.0, 1.0], &[1.0], normal).unwrap();
        assert_eq!(flat.p_two_sided, 1.0);
    }

    #[test]
    fn shifted_normals_are_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut rejections = 0;
        for _ in 0..1000 {
            let a: Vec<f64> = (0..200).map(|_| rng.sample(n)).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.sample(n) + 1.0).collect();
            if wilcoxon_rank_sum(&a, &b, WilcoxonOptions::default()).unwrap().p_two_sided < 0.001 {
                rejections += 1;
            }
        }
        assert_eq!(rejections, 1000);
    }

    #[test]
    fn bonferroni_values() {
        assert!((bonferroni(0.05, 6).unwrap() - 0.05 / 6.0).abs() < 1e-15);
        assert!((bonferroni(0.05, 6).unwrap() - 0.008_333_333_333).abs() < 1e-9);
        assert_eq!(bonferroni(0.05, 1).unwrap(), 0.05);
        assert!((bonferroni(0.05, 10).unwrap() - 0.005).abs() < 1e-15);
        assert!(bonferroni(0.05, 0).is_err());
        assert!(bonferroni(1.5, 2).is_err());
    }

    #[test]
    fn boxplots() {
        let b = boxplot_summary(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3, b.iqr), (3.0, 2.0, 4.0, 2.0));
        assert!((b.notch_low - (3.0 - 1.57 * 2.0 / 5f64.sqrt())).abs() < 1e-12);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 5.0));
        let one = boxplot_summary(&[7.0]).unwrap();
        assert_eq!((one.median, one.q1, one.q3), (7.0, 7.0, 7.0));
        assert!(one.outliers.is_empty());
        let flat = boxplot_summary(&[2.0; 6]).unwrap();
        assert_eq!((flat.iqr, flat.notch_low, flat.notch_high), (0.0, 2.0, 2.0));
        let out = boxplot_summary(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(out.outliers, vec![100.0]);
        assert_eq!(out.whisker_high, 4.0);
        assert_eq!(boxplot_summary(&[]), Err(StatsError::EmptySample));
    }

    #[test]
    fn pairwise_reports() {
        let exact = WilcoxonOptions { mode: WilcoxonMode::Exact, ..Default::default() };
        let base: &[f64] = &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let same = groups(&[("a", base), ("b", base), ("c", base), ("d", base)]);
        let r = pairwise_comparison_report(&same, 0.05, exact).unwrap();
        assert_eq!(r.pairs.len(), 6);
        assert!((r.threshold - 0.05 / 6.0).abs() < 1e-15);
        assert!(r.pairs.iter().all(|p| !p.significant));

        let far: Vec<f64> = (0..8).map(|i| 100.0 + i as f64).collect();
        let low: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let mid: Vec<f64> = (0..8).map(|i| 1.0 + i as f64 * 0.5).collect();
        let g = groups(&[("low", &low), ("mid", &mid), ("far", &far), ("mid2", &mid)]);
        let normal = WilcoxonOptions::default();
        let r = pairwise_comparison_report(&g, 0.05, normal).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.p_matrix[i][j], r.p_matrix[j][i]);
                assert_eq!(r.significant[i][j], r.significant[j][i]);
            }
        }
        let pair = r.pairs.iter().find(|p| p.a == "low" && p.b == "far").unwrap();
        let oracle = wilcoxon_rank_sum(&low, &far, exact).unwrap().p_two_sided;
        assert!(oracle < r.threshold && pair.significant);
        assert!(!r.significant[1][3]);
    }

    #[test]
    fn degenerate_analysis_reports_zero() {
        let flat = groups(&[("a", &[1.0, 1.0]), ("b", &[1.0, 1.0])]);
        let report = analyze("gc", &flat, 0.05, WilcoxonOptions::default()).unwrap();
        assert!(report.degenerate);
        assert_eq!((report.statistic, report.p), (0.0, 1.0));
        assert!(boxplot_csv(&[report]).lines().count() == 3);
    }

    #[test]
    fn kruskal_and_exact_agree_on_significance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..100 {
            let na = rng.gen_range(5..7);
            let nb = 12 - na;
            let shift = rng.gen_range(0.0..2.0);
            let a: Vec<f64> = (0..na).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.gen::<f64>() + shift).collect();
            let g = groups(&[("a", &a), ("b", &b)]);
            let p_kw = kruskal_wallis(&g).unwrap().p;
            let p_ex = wilcoxon_rank_sum(&a, &b, WilcoxonOptions::default()).unwrap();
            assert!(p_ex.exact);
            let p_ex = p_ex.p_two_sided;
            if (p_kw < 0.05) != (p_ex < 0.05) {
                assert!((p_kw - 0.05).abs() <= 0.01 && (p_ex - 0.05).abs() <= 0.01, "kw {p_kw} exact {p_ex}");
            }
            checked += 1;
        }
        assert_eq!(checked, 100);
    }

    proptest! {
        #[test]
        fn kruskal_is_rank_invariant(parts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 1..8), 2..5)) {
            let labelled: Vec<(String, Vec<f64>)> = parts.iter().enumerate().map(|(i, v)| (format!("g{i}"), v.clone())).collect();
            let transformed: Vec<(String, Vec<f64>)> = labelled.iter().map(|(l, v)| (l.clone(), v.iter().map(|x| x.exp()).collect())).collect();
            let a = MetricGroups::new(labelled).unwrap();
            let b = MetricGroups::new(transformed).unwrap();
            match (kruskal_wallis(&a), kruskal_wallis(&b)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.h, y.h),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }

        #[test]
        fn rank_sum_is_symmetric(a in prop::collection::vec(0u8..10, 1..8), b in prop::collection::vec(0u8..10, 1..8), exact in any::<bool>()) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let mode = if exact { WilcoxonMode::Exact } else { WilcoxonMode::Normal };
            let opts = WilcoxonOptions { mode, ..Default::default() };
            let x = wilcoxon_rank_sum(&a, &b, opts).unwrap();
            let y = wilcoxon_rank_sum(&b, &a, opts).unwrap();
            prop_assert!((x.p_two_sided - y.p_two_sided).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x.p_two_sided));
            prop_assert!((x.u + y.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        }

        #[test]
        fn bonferroni_round_trip(alpha in 1e-6f64..0.999, m in 1usize..1000) {
            let adjusted = bonferroni(alpha, m).unwrap();
            prop_assert!((adjusted * m as f64 - alpha).abs() <= 2.0 * f64::EPSILON * alpha);
        }

        #[test]
        fn boxplot_ordering(values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let b = boxplot_summary(&values).unwrap();
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            prop_assert!(b.whisker_low <= b.whisker_high);
            prop_assert_eq!(b.outliers.len() + values.iter().filter(|&&v| v >= b.whisker_low && v <= b.whisker_high).count(), values.len());
        }
    }
}
