//! System scorecards, pairwise significance and self-replication.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qc::KeptJudgment;
use crate::stats::{pearson, rank_sum_test, Alternative, StatsError};

pub const DEFAULT_LEVELS: [f64; 3] = [0.05, 0.01, 0.001];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("judgment references unknown system {0:?}")]
    UnknownSystem(String),
    #[error("need at least 2 systems, got {0}")]
    TooFewSystems(usize),
    #[error("system {system:?} has {n} judgment(s), need at least 2")]
    TooFewJudgments { system: String, n: usize },
    #[error("runs cover different systems (only in a: {only_a:?}, only in b: {only_b:?})")]
    SystemSetMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("significance levels must lie in (0, 1)")]
    InvalidLevels,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScorecard {
    pub system_id: String,
    pub raw_avg: f64,
    pub z_avg: f64,
    pub n_judgments: usize,
    pub rank: usize,
}

/// Mean of values summed in sorted order, so the result does not depend
/// on input order.
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn z_key(z: f64) -> i64 {
    (z * 100.0).round() as i64
}

/// Best first: z rounded to two decimals, then raw average, then system id.
pub fn compare_scorecards(a: &SystemScorecard, b: &SystemScorecard) -> Ordering {
    z_key(b.z_avg)
        .cmp(&z_key(a.z_avg))
        .then_with(|| b.raw_avg.total_cmp(&a.raw_avg))
        .then_with(|| a.system_id.cmp(&b.system_id))
}

/// Sorts best first and assigns 1-based ranks.
pub fn rank_scorecards(cards: &mut [SystemScorecard]) {
    cards.sort_by(compare_scorecards);
    for (i, c) in cards.iter_mut().enumerate() {
        c.rank = i + 1;
    }
}

/// Per-system means over kept judgments. Systems in `known` without
/// judgments are left out.
pub fn system_scores(kept: &[KeptJudgment], known: &BTreeSet<String>) -> Result<Vec<SystemScorecard>, RankingError> {
    let mut pools: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for k in kept {
        if !known.contains(&k.system_id) {
            return Err(RankingError::UnknownSystem(k.system_id.clone()));
        }
        let e = pools.entry(&k.system_id).or_default();
        e.0.push(k.raw);
        e.1.push(k.z);
    }
    let mut cards: Vec<SystemScorecard> = pools
        .into_iter()
        .map(|(sys, (raw, z))| SystemScorecard {
            system_id: sys.to_string(),
            raw_avg: order_free_mean(&raw),
            z_avg: order_free_mean(&z),
            n_judgments: raw.len(),
            rank: 0,
        })
        .collect();
    rank_scorecards(&mut cards);
    Ok(cards)
}

/// z-score pools per system, ready for [`significance_matrix`].
pub fn z_pools(kept: &[KeptJudgment]) -> BTreeMap<String, Vec<f64>> {
    let mut pools: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for k in kept {
        pools.entry(k.system_id.clone()).or_default().push(k.z);
    }
    pools
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    /// Best first by mean z.
    pub systems: Vec<String>,
    pub levels: Vec<f64>,
    pub z_avg: Vec<f64>,
    pub n_judgments: Vec<usize>,
    /// `diff[i][j] = z_avg[i] - z_avg[j]`; `None` on the diagonal.
    pub diff: Vec<Vec<Option<f64>>>,
    /// One-sided p for "row greater than column".
    pub p_value: Vec<Vec<Option<f64>>>,
    /// Number of levels the p-value clears, 0 to `levels.len()`.
    pub stars: Vec<Vec<Option<u8>>>,
}

impl SignificanceMatrix {
    pub fn index_of(&self, system: &str) -> Option<usize> {
        self.systems.iter().position(|s| s == system)
    }

    pub fn star_string(n: u8) -> String {
        "*".repeat(n as usize)
    }
}

pub fn significance_matrix(
    pools: &BTreeMap<String, Vec<f64>>,
    levels: &[f64],
) -> Result<SignificanceMatrix, RankingError> {
    if pools.len() < 2 {
        return Err(RankingError::TooFewSystems(pools.len()));
    }
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(RankingError::InvalidLevels);
    }
    for (sys, z) in pools {
        if z.len() < 2 {
            return Err(RankingError::TooFewJudgments { system: sys.clone(), n: z.len() });
        }
    }
    let mut order: Vec<(&String, f64)> = pools.iter().map(|(s, z)| (s, order_free_mean(z))).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let n = order.len();
    let mut diff = vec![vec![None; n]; n];
    let mut p_value = vec![vec![None; n]; n];
    let mut stars = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&pools[order[i].0], &pools[order[j].0]);
            let p = rank_sum_test(a, b, Alternative::Greater)?.p_value;
            diff[i][j] = Some(order[i].1 - order[j].1);
            p_value[i][j] = Some(p);
            stars[i][j] = Some(levels.iter().filter(|l| p < **l).count() as u8);
        }
    }
    Ok(SignificanceMatrix {
        systems: order.iter().map(|(s, _)| (*s).clone()).collect(),
        levels: levels.to_vec(),
        z_avg: order.iter().map(|(_, z)| *z).collect(),
        n_judgments: order.iter().map(|(s, _)| pools[*s].len()).collect(),
        diff,
        p_value,
        stars,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixViolation {
    pub row: usize,
    pub col: usize,
    pub rule: &'static str,
}

/// Checks antisymmetry, one-sided star exclusivity, star monotonicity and
/// the empty diagonal.
pub fn check_matrix(m: &SignificanceMatrix) -> Vec<MatrixViolation> {
    let mut out = Vec::new();
    let n = m.systems.len();
    let mut levels = m.levels.clone();
    levels.sort_by(|a, b| b.total_cmp(a));
    for i in 0..n {
        for j in 0..n {
            let v = |rule| MatrixViolation { row: i, col: j, rule };
            if i == j {
                if m.diff[i][j].is_some() || m.stars[i][j].is_some() || m.p_value[i][j].is_some() {
                    out.push(v("diagonal"));
                }
                continue;
            }
            match (m.diff[i][j], m.diff[j][i]) {
                (Some(a), Some(b)) if (a + b).abs() <= 1e-12 => {}
                _ => out.push(v("antisymmetry")),
            }
            let (Some(s), Some(t)) = (m.stars[i][j], m.stars[j][i]) else {
                out.push(v("missing_stars"));
                continue;
            };
            if s > 0 && t > 0 {
                out.push(v("exclusivity"));
            }
            if let Some(p) = m.p_value[i][j] {
                let expected = levels.iter().take_while(|l| p < **l).count() as u8;
                if expected != s {
                    out.push(v("monotonicity"));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub system_id: String,
    pub z_a: f64,
    pub z_b: f64,
    pub raw_a: f64,
    pub raw_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub r: f64,
    pub points: Vec<ScatterPoint>,
}

/// Pearson correlation of per-system z averages across two runs.
pub fn replication_correlation(
    run_a: &[SystemScorecard],
    run_b: &[SystemScorecard],
) -> Result<Replication, RankingError> {
    let a: BTreeMap<&str, &SystemScorecard> = run_a.iter().map(|c| (c.system_id.as_str(), c)).collect();
    let b: BTreeMap<&str, &SystemScorecard> = run_b.iter().map(|c| (c.system_id.as_str(), c)).collect();
    let only_a: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).map(|k| k.to_string()).collect();
    let only_b: Vec<String> = b.keys().filter(|k| !a.contains_key(*k)).map(|k| k.to_string()).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(RankingError::SystemSetMismatch { only_a, only_b });
    }
    let points: Vec<ScatterPoint> = a
        .iter()
        .map(|(sys, ca)| ScatterPoint {
            system_id: sys.to_string(),
            z_a: ca.z_avg,
            z_b: b[sys].z_avg,
            raw_a: ca.raw_avg,
            raw_b: b[sys].raw_avg,
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.z_a).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.z_b).collect();
    Ok(Replication { r: pearson(&xs, &ys)?, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hitgen::Condition;
    use proptest::prelude::*;

    fn card(sys: &str, z: f64, raw: f64) -> SystemScorecard {
        SystemScorecard { system_id: sys.into(), raw_avg: raw, z_avg: z, n_judgments: 1, rank: 0 }
    }

    fn kept(sys: &str, raw: f64, z: f64) -> KeptJudgment {
        KeptJudgment {
            worker_id: "w".into(),
            hit_id: "h".into(),
            item_index: 0,
            condition: Condition::TextOnly,
            system_id: sys.into(),
            seg_id: "s".into(),
            doc_id: "d".into(),
            raw,
            z,
        }
    }

    #[test]
    fn raw_breaks_z_tie() {
        let mut cards = vec![card("Online-G", 0.19, 68.76), card("PROMT", 0.19, 69.63)];
        rank_scorecards(&mut cards);
        assert_eq!(cards[0].system_id, "PROMT");
        assert_eq!(cards[1].rank, 2);
    }

    #[test]
    fn three_way_tie_at_two_decimals() {
        let mut cards = vec![
            card("JDExploreAcademy", 0.05, 72.89),
            card("Lan-Bridge", 0.05, 68.29),
            card("LT22", 0.05, 74.36),
        ];
        for (i, s) in ["A", "B", "C", "D", "E", "F"].iter().enumerate() {
            cards.push(card(s, 0.5 - i as f64 * 0.05, 80.0));
        }
        rank_scorecards(&mut cards);
        let rank = |s: &str| cards.iter().find(|c| c.system_id == s).unwrap().rank;
        assert_eq!((rank("LT22"), rank("JDExploreAcademy"), rank("Lan-Bridge")), (7, 8, 9));
    }

    #[test]
    fn rounding_decides_tie() {
        let mut cards = vec![card("a", 0.194, 60.0), card("b", 0.186, 70.0)];
        rank_scorecards(&mut cards);
        assert_eq!(cards[0].system_id, "b");
        let mut cards = vec![card("a", 0.196, 60.0), card("b", 0.184, 70.0)];
        rank_scorecards(&mut cards);
        assert_eq!(cards[0].system_id, "a");
    }

    #[test]
    fn single_system_rank_one() {
        let known = BTreeSet::from(["only".to_string()]);
        let cards = system_scores(&[kept("only", 10.0, -3.0)], &known).unwrap();
        assert_eq!(cards[0].rank, 1);
    }

    #[test]
    fn unknown_system_rejected() {
        let known = BTreeSet::from(["a".to_string()]);
        assert_eq!(
            system_scores(&[kept("b", 1.0, 0.0)], &known),
            Err(RankingError::UnknownSystem("b".into()))
        );
    }

    #[test]
    fn separated_pools_star_one_way() {
        let pools = BTreeMap::from([
            ("hi".to_string(), vec![2.0, 3.0, 4.0]),
            ("lo".to_string(), vec![-4.0, -3.0, -2.0]),
        ]);
        let m = significance_matrix(&pools, &DEFAULT_LEVELS).unwrap();
        assert_eq!(m.systems, vec!["hi", "lo"]);
        assert!((m.p_value[0][1].unwrap() - 0.05).abs() < 1e-15);
        // p = 0.05 is not below 0.05
        assert_eq!(m.stars[0][1], Some(0));
        assert_eq!(m.stars[1][0], Some(0));

        let m = significance_matrix(&pools, &[0.051, 0.01]).unwrap();
        assert_eq!(m.stars[0][1], Some(1));
        assert_eq!(m.stars[1][0], Some(0));
        assert!(check_matrix(&m).is_empty());
    }

    #[test]
    fn identical_pools_no_stars() {
        let z = vec![0.1, -0.3, 0.7, 1.2];
        let pools = BTreeMap::from([("a".to_string(), z.clone()), ("b".to_string(), z)]);
        let m = significance_matrix(&pools, &DEFAULT_LEVELS).unwrap();
        assert_eq!(m.stars[0][1], Some(0));
        assert_eq!(m.stars[1][0], Some(0));
        assert_eq!(m.diff[0][1], Some(0.0));
        assert_eq!(m.diff[0][0], None);
    }

    #[test]
    fn matrix_preconditions() {
        let one = BTreeMap::from([("a".to_string(), vec![1.0, 2.0])]);
        assert_eq!(significance_matrix(&one, &DEFAULT_LEVELS), Err(RankingError::TooFewSystems(1)));
        let thin = BTreeMap::from([("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![1.0])]);
        assert!(matches!(significance_matrix(&thin, &DEFAULT_LEVELS), Err(RankingError::TooFewJudgments { .. })));
    }

    #[test]
    fn replication_identity_and_reversal() {
        let a: Vec<SystemScorecard> = (0..10).map(|i| card(&format!("s{i}"), i as f64 * 0.1 - 0.45, 50.0)).collect();
        assert_eq!(replication_correlation(&a, &a).unwrap().r, 1.0);
        let b: Vec<SystemScorecard> =
            (0..10).map(|i| card(&format!("s{i}"), (9 - i) as f64 * 0.1 - 0.45, 50.0)).collect();
        assert!((replication_correlation(&a, &b).unwrap().r + 1.0).abs() < 1e-12);
        let mut c = a.clone();
        c.pop();
        assert!(matches!(replication_correlation(&a, &c), Err(RankingError::SystemSetMismatch { .. })));
    }

    proptest! {
        #[test]
        fn ranking_ignores_input_order(mut rows in prop::collection::vec((0usize..5, 0.0f64..100.0, -2.0f64..2.0), 5..60), seed in any::<u64>()) {
            let known: BTreeSet<String> = (0..5).map(|i| format!("s{i}")).collect();
            let kept_a: Vec<KeptJudgment> = rows.iter().map(|(s, r, z)| kept(&format!("s{s}"), *r, *z)).collect();
            use rand::seq::SliceRandom;
            rows.shuffle(&mut crate::seeds::rng_from_seed(seed));
            let kept_b: Vec<KeptJudgment> = rows.iter().map(|(s, r, z)| kept(&format!("s{s}"), *r, *z)).collect();
            prop_assert_eq!(system_scores(&kept_a, &known).unwrap(), system_scores(&kept_b, &known).unwrap());
        }

        #[test]
        fn shift_keeps_stars_and_diffs(pools in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2..30), 2..6), c in -5.0f64..5.0) {
            let base: BTreeMap<String, Vec<f64>> = pools.iter().enumerate().map(|(i, z)| (format!("s{i}"), z.clone())).collect();
            let shifted: BTreeMap<String, Vec<f64>> = base.iter().map(|(k, z)| (k.clone(), z.iter().map(|v| v + c).collect())).collect();
            let m0 = significance_matrix(&base, &DEFAULT_LEVELS).unwrap();
            let m1 = significance_matrix(&shifted, &DEFAULT_LEVELS).unwrap();
            prop_assert!(check_matrix(&m0).is_empty());
            for a in &m0.systems {
                for b in &m0.systems {
                    let (i0, j0) = (m0.index_of(a).unwrap(), m0.index_of(b).unwrap());
                    let (i1, j1) = (m1.index_of(a).unwrap(), m1.index_of(b).unwrap());
                    prop_assert_eq!(m0.stars[i0][j0], m1.stars[i1][j1]);
                    if let (Some(d0), Some(d1)) = (m0.diff[i0][j0], m1.diff[i1][j1]) {
                        prop_assert!((d0 - d1).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
