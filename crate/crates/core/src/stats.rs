//! Statistical kernels: Wilcoxon rank-sum test, per-worker standardization,
//! Pearson and Spearman correlation.
//!
//! The rank-sum test uses midranks for ties. When the pooled sample is small
//! (`n_a + n_b <= EXACT_THRESHOLD`) and no value occurs in both samples, the
//! p-value is the exact permutation probability; otherwise a normal
//! approximation with tie correction and a 0.5 continuity correction is used.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest pooled sample size for which the exact distribution is used.
pub const EXACT_THRESHOLD: usize = 20;

/// Largest pooled sample size [`exact_rank_sum_p`] accepts (counts stay in `u64`).
pub const EXACT_LIMIT: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("non-finite value in sample {0}")]
    NonFinite(&'static str),
    #[error("pooled sample size {0} exceeds exact enumeration limit {EXACT_LIMIT}")]
    TooLargeForExact(usize),
    #[error("worker {worker_id} is degenerate: {reason}")]
    DegenerateWorker { worker_id: String, reason: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// H1: the first sample is stochastically greater than the second.
    Greater,
    Less,
    TwoSided,
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::Greater => "greater",
            Alternative::Less => "less",
            Alternative::TwoSided => "two_sided",
        })
    }
}

impl std::str::FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            other => Err(format!("unknown alternative {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample: its midrank sum minus `n_a(n_a+1)/2`.
    pub u_statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub method: RankSumMethod,
    pub n_a: usize,
    pub n_b: usize,
}

/// Midranks (1-based, ties averaged) of `values`, in input order.
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
        // positions start..end share ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("a"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("b"));
    }
    Ok(())
}

/// True when some value occurs in both samples.
pub fn has_cross_sample_ties(a: &[f64], b: &[f64]) -> bool {
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    a.iter()
        .any(|x| sorted_b.binary_search_by(|y| y.total_cmp(x)).is_ok())
}

/// Wilcoxon rank-sum (Mann-Whitney) test of `a` against `b`.
///
/// `Alternative::Greater` tests whether `a` tends to take larger values than
/// `b`. The p-value of `less` on `(a, b)` is computed as `greater` on
/// `(b, a)`, so the two are bit-identical.
pub fn rank_sum_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<RankSumResult, StatsError> {
    check_samples(a, b)?;
    let n_a = a.len();
    let n_b = b.len();
    let exact = n_a + n_b <= EXACT_THRESHOLD && !has_cross_sample_ties(a, b);

    let (first, second) = match alternative {
        Alternative::Less => (b, a),
        _ => (a, b),
    };
    let pooled: Vec<f64> = first.iter().chain(second).copied().collect();
    let ranks = midranks(&pooled);
    let n_first = first.len();

    let p_value = if exact {
        exact_p_from_ranks(&ranks, n_first, alternative.one_sided_as_greater())
    } else {
        normal_p_from_ranks(&ranks, n_first, alternative.one_sided_as_greater())
    };

    let rank_sum_a: f64 = match alternative {
        Alternative::Less => ranks[n_b..].iter().sum(),
        _ => ranks[..n_a].iter().sum(),
    };
    let u_statistic = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;

    Ok(RankSumResult {
        u_statistic,
        p_value: p_value.clamp(0.0, 1.0),
        alternative,
        method: if exact { RankSumMethod::Exact } else { RankSumMethod::NormalApprox },
        n_a,
        n_b,
    })
}

/// Exact permutation p-value under midranks, regardless of ties or threshold.
///
/// Counts, over all `C(n_a+n_b, n_a)` ways of relabelling the pooled values,
/// how many produce a rank sum for `a` at least as extreme as the observed one.
pub fn exact_rank_sum_p(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64, StatsError> {
    check_samples(a, b)?;
    let total = a.len() + b.len();
    if total > EXACT_LIMIT {
        return Err(StatsError::TooLargeForExact(total));
    }
    let (first, second) = match alternative {
        Alternative::Less => (b, a),
        _ => (a, b),
    };
    let pooled: Vec<f64> = first.iter().chain(second).copied().collect();
    let ranks = midranks(&pooled);
    Ok(exact_p_from_ranks(&ranks, first.len(), alternative.one_sided_as_greater()))
}

#[derive(Clone, Copy)]
enum Tail {
    Upper,
    Both,
}

impl Alternative {
    fn one_sided_as_greater(self) -> Tail {
        match self {
            Alternative::Greater | Alternative::Less => Tail::Upper,
            Alternative::TwoSided => Tail::Both,
        }
    }
}

/// Permutation distribution of the rank sum of `k` items drawn from `ranks`.
///
/// Midranks are multiples of 1/2, so doubled ranks are integers and the
/// distribution is a table of counts indexed by doubled sum.
fn rank_sum_counts(ranks: &[f64], k: usize) -> Vec<u64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with doubled sum s
    let mut counts = vec![vec![0u64; max_sum + 1]; k + 1];
    counts[0][0] = 1;
    for (seen, &r) in doubled.iter().enumerate() {
        let top = k.min(seen + 1);
        for j in (1..=top).rev() {
            let (lower, upper) = counts.split_at_mut(j);
            let prev = &lower[j - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                let add = prev[s - r];
                if add != 0 {
                    cur[s] += add;
                }
            }
        }
    }
    counts.swap_remove(k)
}

fn exact_p_from_ranks(ranks: &[f64], n_first: usize, tail: Tail) -> f64 {
    let counts = rank_sum_counts(ranks, n_first);
    let observed: usize = ranks[..n_first].iter().map(|r| (r * 2.0).round() as usize).sum();
    let total: u64 = counts.iter().sum();
    let hits: u64 = match tail {
        Tail::Upper => counts[observed..].iter().sum(),
        Tail::Both => {
            // doubled expected sum: n_first * (N + 1)
            let center = (n_first * (ranks.len() + 1)) as i64;
            let dev = (observed as i64 - center).abs();
            counts
                .iter()
                .enumerate()
                .filter(|(s, _)| (*s as i64 - center).abs() >= dev)
                .map(|(_, c)| *c)
                .sum()
        }
    };
    hits as f64 / total as f64
}

fn normal_p_from_ranks(ranks: &[f64], n_first: usize, tail: Tail) -> f64 {
    let n1 = n_first as f64;
    let n2 = (ranks.len() - n_first) as f64;
    let n = n1 + n2;
    let rank_sum: f64 = ranks[..n_first].iter().sum();
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;

    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
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
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        // every pooled value identical
        return 1.0;
    }
    let sd = variance.sqrt();
    let std_normal = Normal::standard();
    match tail {
        Tail::Upper => {
            let z = (u - mean - 0.5) / sd;
            std_normal.sf(z)
        }
        Tail::Both => {
            let z = ((u - mean).abs() - 0.5) / sd;
            (2.0 * std_normal.sf(z)).min(1.0)
        }
    }
}

/// One worker's score on one item, before standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerScore<K> {
    pub item: K,
    /// Only genuine items receive a z-score; QC items still shape mean and sd.
    pub genuine: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedJudgment<K> {
    pub worker_id: String,
    pub item: K,
    pub raw: f64,
    pub z: f64,
}

/// Mean and sample standard deviation (n-1 divisor).
pub fn mean_and_sample_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Per-worker z-scores `z = (x - mean) / sd`.
///
/// Mean and sample sd are taken over every score the worker gave (QC items
/// included); z-scores are emitted for genuine items only, in input order,
/// workers in key order.
pub fn standardize<K: Clone>(
    by_worker: &BTreeMap<String, Vec<WorkerScore<K>>>,
) -> Result<Vec<StandardizedJudgment<K>>, StatsError> {
    let mut out = Vec::new();
    for (worker_id, scores) in by_worker {
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::DegenerateWorker {
                worker_id: worker_id.clone(),
                reason: "non-finite score".into(),
            });
        }
        let (mean, sd) = mean_and_sample_sd(&values).ok_or_else(|| StatsError::DegenerateWorker {
            worker_id: worker_id.clone(),
            reason: format!("{} judgment(s), need at least 2", values.len()),
        })?;
        if !(sd > 0.0) {
            return Err(StatsError::DegenerateWorker {
                worker_id: worker_id.clone(),
                reason: "constant scores (sd = 0)".into(),
            });
        }
        out.extend(scores.iter().filter(|s| s.genuine).map(|s| StandardizedJudgment {
            worker_id: worker_id.clone(),
            item: s.item.clone(),
            raw: s.score,
            z: (s.score - mean) / sd,
        }));
    }
    Ok(out)
}

/// Sample Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewObservations(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson on midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&midranks(x), &midranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    /// Brute-force oracle: enumerate every subset of pooled indices of size n_a.
    fn brute_force_p(a: &[f64], b: &[f64], alt: Alternative) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let n = pooled.len();
        let k = a.len();
        let observed: f64 = ranks[..k].iter().sum();
        let center = k as f64 * (n as f64 + 1.0) / 2.0;
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            total += 1;
            let extreme = match alt {
                Alternative::Greater => s >= observed,
                Alternative::Less => s <= observed,
                Alternative::TwoSided => (s - center).abs() >= (observed - center).abs(),
            };
            if extreme {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1., 2., 2., 4., 5.]), vec![1., 2.5, 2.5, 4., 5.]);
        assert_eq!(midranks(&[3., 3., 3.]), vec![2., 2., 2.]);
        assert_eq!(midranks(&[10., -1.]), vec![2., 1.]);
    }

    #[test]
    fn separated_triples_exact_p() {
        let r = rank_sum_test(&[4., 5., 6.], &[1., 2., 3.], Alternative::Greater).unwrap();
        assert_eq!(r.method, RankSumMethod::Exact);
        assert_eq!(brute_force_p(&[4., 5., 6.], &[1., 2., 3.], Alternative::Greater), 0.05);
        assert_eq!(r.p_value, 0.05);
        assert_eq!(r.u_statistic, 9.0);
    }

    #[test]
    fn singleton_below_four() {
        let a = [10.];
        let b = [20., 30., 40., 50.];
        // the singleton takes rank 1 in every one of the 5 placements that is at least as large
        assert_eq!(brute_force_p(&a, &b, Alternative::Greater), 1.0);
        assert_eq!(brute_force_p(&a, &b, Alternative::Less), 0.2);
        assert_eq!(rank_sum_test(&a, &b, Alternative::Greater).unwrap().p_value, 1.0);
        assert_eq!(rank_sum_test(&a, &b, Alternative::Less).unwrap().p_value, 0.2);
    }

    #[test]
    fn identical_samples_two_sided() {
        let r = rank_sum_test(&[1., 2., 3.], &[1., 2., 3.], Alternative::TwoSided).unwrap();
        assert_eq!(r.method, RankSumMethod::NormalApprox);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_sample_rejected() {
        assert_eq!(rank_sum_test(&[], &[1.], Alternative::Greater), Err(StatsError::EmptySample("a")));
        assert_eq!(rank_sum_test(&[1.], &[], Alternative::Greater), Err(StatsError::EmptySample("b")));
    }

    #[test]
    fn all_tied_pool_gives_unit_p() {
        let r = rank_sum_test(&[5.; 15], &[5.; 15], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn large_samples_use_normal_approx() {
        let a: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let b: Vec<f64> = (0..15).map(|v| v as f64 + 0.5).collect();
        let r = rank_sum_test(&a, &b, Alternative::Less).unwrap();
        assert_eq!(r.method, RankSumMethod::NormalApprox);
        assert!(r.p_value > 0.3 && r.p_value < 0.5, "{}", r.p_value);
    }

    #[test]
    fn exact_with_ties_matches_oracle() {
        let a = [1., 2., 2., 7.];
        let b = [2., 3., 7., 7., 9.];
        for alt in [Alternative::Greater, Alternative::Less, Alternative::TwoSided] {
            assert_close!(exact_rank_sum_p(&a, &b, alt).unwrap(), brute_force_p(&a, &b, alt), 1e-12);
        }
    }

    #[test]
    fn standardize_hand_computed() {
        let mut by_worker = BTreeMap::new();
        by_worker.insert(
            "w".to_string(),
            vec![
                WorkerScore { item: 0, genuine: true, score: 0. },
                WorkerScore { item: 1, genuine: true, score: 50. },
                WorkerScore { item: 2, genuine: true, score: 100. },
            ],
        );
        let z = standardize(&by_worker).unwrap();
        assert_eq!(z[1].z, 0.0);
        assert_eq!(z[2].z, 1.0);
        assert_eq!(z[0].z, -1.0);
    }

    #[test]
    fn standardize_skips_qc_but_uses_their_scores() {
        let mut by_worker = BTreeMap::new();
        by_worker.insert(
            "w".to_string(),
            vec![
                WorkerScore { item: "g", genuine: true, score: 50. },
                WorkerScore { item: "q1", genuine: false, score: 0. },
                WorkerScore { item: "q2", genuine: false, score: 100. },
            ],
        );
        let z = standardize(&by_worker).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].item, "g");
        assert_eq!(z[0].z, 0.0);
    }

    #[test]
    fn constant_scorer_is_degenerate() {
        let mut by_worker = BTreeMap::new();
        by_worker.insert(
            "flat".to_string(),
            [70., 70., 70.].iter().enumerate().map(|(i, &s)| WorkerScore { item: i, genuine: true, score: s }).collect(),
        );
        assert!(matches!(standardize(&by_worker), Err(StatsError::DegenerateWorker { worker_id, .. }) if worker_id == "flat"));
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[3., 1., 2.], &[3., 1., 2.]).unwrap(), 1.0);
        assert_eq!(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        // x centered (-1,0,1); y mean 7/3, centered (-4/3,-1/3,5/3): sxy=3, sxx=2, syy=42/9
        let expected = 3.0 / (2.0f64 * 42.0 / 9.0).sqrt();
        assert_close!(pearson(&[1., 2., 3.], &[1., 2., 4.]).unwrap(), expected, 1e-15);
        assert_close!(expected, 0.9820, 5e-5);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1., 2.], &[1.]), Err(StatsError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[1., 1.], &[1., 2.]), Err(StatsError::ZeroVariance("x")));
        assert_eq!(pearson(&[1.], &[1.]), Err(StatsError::TooFewObservations(1)));
    }

    #[test]
    fn spearman_is_rank_based() {
        assert_eq!(spearman(&[1., 2., 3., 4.], &[1., 8., 27., 64.]).unwrap(), 1.0);
    }

    fn small_int_sample(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0i32..=12).prop_map(f64::from), 1..=max_len)
    }

    proptest! {
        #[test]
        fn exact_matches_brute_force(a in small_int_sample(6), b in small_int_sample(6)) {
            for alt in [Alternative::Greater, Alternative::Less, Alternative::TwoSided] {
                let oracle = brute_force_p(&a, &b, alt);
                prop_assert!((exact_rank_sum_p(&a, &b, alt).unwrap() - oracle).abs() <= 1e-12);
                let r = rank_sum_test(&a, &b, alt).unwrap();
                if r.method == RankSumMethod::Exact {
                    prop_assert!((r.p_value - oracle).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn greater_and_swapped_less_agree(a in small_int_sample(15), b in small_int_sample(15)) {
            let g = rank_sum_test(&a, &b, Alternative::Greater).unwrap();
            let l = rank_sum_test(&b, &a, Alternative::Less).unwrap();
            prop_assert_eq!(g.p_value.to_bits(), l.p_value.to_bits());
        }

        #[test]
        fn invariant_under_monotone_transform(a in small_int_sample(12), b in small_int_sample(12)) {
            let f = |v: &f64| (v * 0.3).exp() * 3.0 - 7.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            for alt in [Alternative::Greater, Alternative::Less, Alternative::TwoSided] {
                let p = rank_sum_test(&a, &b, alt).unwrap().p_value;
                let q = rank_sum_test(&ta, &tb, alt).unwrap().p_value;
                prop_assert_eq!(p, q);
            }
        }

        #[test]
        fn one_sided_tails_cover_everything(a in small_int_sample(12), b in small_int_sample(12)) {
            let g = rank_sum_test(&a, &b, Alternative::Greater).unwrap().p_value;
            let l = rank_sum_test(&a, &b, Alternative::Less).unwrap().p_value;
            prop_assert!(g + l >= 1.0 - 1e-12);
        }

        #[test]
        fn standardized_scores_have_unit_moments(
            scores in prop::collection::vec(0.0f64..=100.0, 3..60),
        ) {
            let distinct = scores.iter().any(|s| (s - scores[0]).abs() > 1e-6);
            prop_assume!(distinct);
            let mut by_worker = BTreeMap::new();
            by_worker.insert("w".to_string(), scores.iter().enumerate()
                .map(|(i, &s)| WorkerScore { item: i, genuine: true, score: s }).collect::<Vec<_>>());
            let z: Vec<f64> = standardize(&by_worker).unwrap().iter().map(|j| j.z).collect();
            let (m, sd) = mean_and_sample_sd(&z).unwrap();
            prop_assert!(m.abs() <= 1e-10);
            prop_assert!((sd - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn pearson_affine_invariant(
            pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = pearson(&x, &y);
            prop_assume!(r.is_ok());
            let tx: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            let r2 = pearson(&tx, &y).unwrap();
            prop_assert!((r.unwrap() - r2).abs() <= 1e-12);
        }
    }
}
