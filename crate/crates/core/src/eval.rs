//! Ranking metrics with label-sharing relevance.
//!
//! A gallery item is relevant to a query when their label rows share at
//! least one active class. Rankings are lists of gallery positions, best
//! first.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{shares_label, MultiHotLabels};

/// Divisor used by average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApDenominator {
    /// Number of relevant items inside the top `R`.
    #[default]
    RetrievedRelevant,
    /// `min(R, relevant items in the whole gallery)`.
    MinRTotal,
}

impl FromStr for ApDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieved" => Ok(Self::RetrievedRelevant),
            "min-r-total" => Ok(Self::MinRTotal),
            other => Err(Error::Config(format!(
                "unknown AP denominator {other:?} (expected retrieved or min-r-total)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceJudge {
    query: MultiHotLabels,
    gallery: MultiHotLabels,
    totals: Vec<usize>,
}

impl RelevanceJudge {
    pub fn new(query: MultiHotLabels, gallery: MultiHotLabels) -> Result<Self> {
        if query.classes() != gallery.classes() && !query.is_empty() && !gallery.is_empty() {
            return Err(Error::shape(format!(
                "query labels have {} classes, gallery labels {}",
                query.classes(),
                gallery.classes()
            )));
        }
        let totals = query
            .rows()
            .iter()
            .map(|q| gallery.rows().iter().filter(|g| shares_label(q, g)).count())
            .collect();
        Ok(Self { query, gallery, totals })
    }

    pub fn queries(&self) -> usize {
        self.query.len()
    }

    pub fn gallery_len(&self) -> usize {
        self.gallery.len()
    }

    pub fn relevant(&self, query: usize, gallery: usize) -> bool {
        shares_label(self.query.row(query), self.gallery.row(gallery))
    }

    /// Relevant gallery items for `query` across the whole gallery.
    pub fn total_relevant(&self, query: usize) -> usize {
        self.totals[query]
    }

    /// Relevance flags along a ranking.
    pub fn flags(&self, query: usize, ranking: &[usize]) -> Result<Vec<bool>> {
        ranking
            .iter()
            .map(|&g| {
                if g >= self.gallery.len() {
                    Err(Error::Range(format!(
                        "gallery id {g} out of range for {} gallery labels",
                        self.gallery.len()
                    )))
                } else {
                    Ok(self.relevant(query, g))
                }
            })
            .collect()
    }

    fn check_rankings(&self, rankings: &[Vec<usize>]) -> Result<()> {
        if rankings.len() != self.queries() {
            return Err(Error::Alignment(format!(
                "{} rankings for {} query label rows",
                rankings.len(),
                self.queries()
            )));
        }
        Ok(())
    }
}

fn check_cutoff(name: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param(format!("{name} must be at least 1")));
    }
    Ok(())
}

/// AP over the first `r` flags, divided by the relevant count inside them.
pub fn average_precision_at(rel: &[bool], r: usize) -> Result<f64> {
    average_precision_with(rel, r, 0, ApDenominator::RetrievedRelevant)
}

/// AP with an explicit denominator. `total_relevant` is only read for
/// [`ApDenominator::MinRTotal`].
pub fn average_precision_with(rel: &[bool], r: usize, total_relevant: usize, denom: ApDenominator) -> Result<f64> {
    check_cutoff("R", r)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &flag) in rel.iter().take(r).enumerate() {
        if flag {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let divisor = match denom {
        ApDenominator::RetrievedRelevant => hits,
        ApDenominator::MinRTotal => r.min(total_relevant),
    };
    Ok(if divisor == 0 { 0.0 } else { sum / divisor as f64 })
}

fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean AP@R. Queries with no relevant gallery item are left out; if every
/// query is left out the result is 0.
pub fn map_at(rankings: &[Vec<usize>], judge: &RelevanceJudge, r: usize) -> Result<f64> {
    map_at_with(rankings, judge, r, ApDenominator::RetrievedRelevant)
}

pub fn map_at_with(rankings: &[Vec<usize>], judge: &RelevanceJudge, r: usize, denom: ApDenominator) -> Result<f64> {
    check_cutoff("R", r)?;
    judge.check_rankings(rankings)?;
    let mut aps = Vec::with_capacity(rankings.len());
    for (q, ranking) in rankings.iter().enumerate() {
        let total = judge.total_relevant(q);
        if total == 0 {
            continue;
        }
        let flags = judge.flags(q, ranking)?;
        aps.push(average_precision_with(&flags, r, total, denom)?);
    }
    Ok(mean_or_zero(&aps))
}

fn cutoffs(n_top: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut out: Vec<usize> = (stride..=n_top).step_by(stride).collect();
    if out.last() != Some(&n_top) {
        out.push(n_top);
    }
    out
}

/// Mean precision@n over all queries for `n` in `stride, 2*stride, ...,
/// n_top` (the last cutoff is always `n_top`). Positions past the end of a
/// short ranking count as misses.
pub fn precision_curve(
    rankings: &[Vec<usize>],
    judge: &RelevanceJudge,
    n_top: usize,
    stride: usize,
) -> Result<Vec<(usize, f64)>> {
    check_cutoff("N_top", n_top)?;
    judge.check_rankings(rankings)?;
    let prefix = hit_prefixes(rankings, judge, n_top)?;
    Ok(cutoffs(n_top, stride)
        .into_iter()
        .map(|n| {
            let per_query: Vec<f64> = prefix.iter().map(|p| p[n] as f64 / n as f64).collect();
            (n, mean_or_zero(&per_query))
        })
        .collect())
}

/// Mean recall@n over queries that have at least one relevant gallery item.
pub fn recall_at(rankings: &[Vec<usize>], judge: &RelevanceJudge, n: usize) -> Result<f64> {
    Ok(recall_curve(rankings, judge, n, n)?.last().map_or(0.0, |p| p.1))
}

/// Recall at the same cutoffs [`precision_curve`] uses.
pub fn recall_curve(
    rankings: &[Vec<usize>],
    judge: &RelevanceJudge,
    n_top: usize,
    stride: usize,
) -> Result<Vec<(usize, f64)>> {
    check_cutoff("N_recall", n_top)?;
    judge.check_rankings(rankings)?;
    let prefix = hit_prefixes(rankings, judge, n_top)?;
    Ok(cutoffs(n_top, stride)
        .into_iter()
        .map(|n| {
            let per_query: Vec<f64> = prefix
                .iter()
                .enumerate()
                .filter(|(q, _)| judge.total_relevant(*q) > 0)
                .map(|(q, p)| p[n] as f64 / judge.total_relevant(q) as f64)
                .collect();
            (n, mean_or_zero(&per_query))
        })
        .collect())
}

/// `out[q][n]` = relevant items among the first `n` of ranking `q`, for
/// `n` in `0..=limit`.
fn hit_prefixes(rankings: &[Vec<usize>], judge: &RelevanceJudge, limit: usize) -> Result<Vec<Vec<usize>>> {
    rankings
        .iter()
        .enumerate()
        .map(|(q, ranking)| {
            let flags = judge.flags(q, &ranking[..ranking.len().min(limit)])?;
            let mut prefix = Vec::with_capacity(limit + 1);
            prefix.push(0);
            let mut hits = 0;
            for i in 0..limit {
                if flags.get(i).copied().unwrap_or(false) {
                    hits += 1;
                }
                prefix.push(hits);
            }
            Ok(prefix)
        })
        .collect()
}

/// Two-column CSV with the given header.
pub fn curve_csv(header: &str, points: &[(usize, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (n, v) in points {
        out.push_str(&format!("{n},{v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn judge_from(q: &[Vec<usize>], g: &[Vec<usize>], classes: usize) -> RelevanceJudge {
        RelevanceJudge::new(
            MultiHotLabels::from_active(classes, q).unwrap(),
            MultiHotLabels::from_active(classes, g).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ap_hand_cases() {
        let ap = average_precision_at(&[true, false, true, false], 4).unwrap();
        assert!((ap - 0.833_333_333_333_333_3).abs() < 1e-12);
        assert_eq!(average_precision_at(&[true; 5], 5).unwrap(), 1.0);
        assert_eq!(average_precision_at(&[false; 5], 5).unwrap(), 0.0);
        assert_eq!(average_precision_at(&[false, true], 1).unwrap(), 0.0);
        assert!(average_precision_at(&[true], 0).is_err());
    }

    #[test]
    fn ap_min_r_total() {
        // two retrieved of four relevant, R = 4 -> (1 + 2/3) / 4
        let ap = average_precision_with(&[true, false, true, false], 4, 4, ApDenominator::MinRTotal).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 4.0).abs() < 1e-12);
        let ap = average_precision_with(&[true, false, true, false], 4, 2, ApDenominator::MinRTotal).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn map_mean_and_exclusion() {
        let judge = judge_from(&[vec![0], vec![1], vec![2]], &[vec![0], vec![1]], 3);
        let rankings = vec![vec![0, 1], vec![0, 1], vec![0, 1]];
        // query 0 AP 1, query 1 AP 0.5, query 2 excluded
        assert!((map_at(&rankings, &judge, 2).unwrap() - 0.75).abs() < 1e-12);
        assert!(map_at(&rankings[..2], &judge, 2).is_err());
    }

    #[test]
    fn map_single_and_pair() {
        let judge = judge_from(&[vec![0]], &[vec![0], vec![1]], 2);
        let ap = average_precision_at(&[false, true], 2).unwrap();
        assert_eq!(map_at(&[vec![1, 0]], &judge, 2).unwrap(), ap);
        let judge = judge_from(&[vec![0], vec![1]], &[vec![0], vec![1]], 2);
        assert_eq!(map_at(&[vec![0], vec![0]], &judge, 1).unwrap(), 0.5);
    }

    #[test]
    fn precision_examples() {
        let judge = judge_from(&[vec![0]], &[vec![0], vec![1], vec![0], vec![1]], 2);
        let curve = precision_curve(&[vec![0, 1, 2, 3]], &judge, 4, 1).unwrap();
        assert_eq!(curve, vec![(1, 1.0), (2, 0.5), (3, 2.0 / 3.0), (4, 0.5)]);
        let curve = precision_curve(&[vec![0, 2]], &judge, 5, 2).unwrap();
        assert_eq!(curve.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 4, 5]);
        assert_eq!(curve[0].1, 1.0);
        assert_eq!(curve[2].1, 0.4);
    }

    #[test]
    fn recall_examples() {
        let g: Vec<Vec<usize>> = (0..10).map(|i| vec![usize::from(i >= 6)]).collect();
        let judge = judge_from(&[vec![0], vec![2]], &g, 3);
        // 6 relevant, 3 in the top 4; second query has none and is excluded
        let rankings = vec![vec![0, 6, 1, 2, 7], vec![0, 1]];
        assert_eq!(recall_at(&rankings, &judge, 4).unwrap(), 0.5);
        let all = vec![vec![0, 1, 2, 3, 4, 5], vec![]];
        assert_eq!(recall_at(&all, &judge, 6).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_gallery_id() {
        let judge = judge_from(&[vec![0]], &[vec![0]], 1);
        assert!(matches!(map_at(&[vec![3]], &judge, 1), Err(Error::Range(_))));
    }

    #[test]
    fn curve_csv_schema() {
        assert_eq!(
            curve_csv("cutoff,precision", &[(1, 1.0), (2, 0.5)]),
            "cutoff,precision\n1,1\n2,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn ap_bounded(rel in prop::collection::vec(any::<bool>(), 1..60), r in 1usize..80) {
            let ap = average_precision_at(&rel, r).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
        }

        #[test]
        fn ap_ignores_order_after_last_hit(rel in prop::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let r = rel.len();
            let last = rel.iter().rposition(|&f| f).unwrap_or(0);
            let mut shuffled = rel.clone();
            let mut tail: Vec<bool> = shuffled[last + 1..].to_vec();
            let mut rng = crate::numerics::SeededRng::new(seed);
            rng.shuffle(&mut tail);
            shuffled.splice(last + 1.., tail);
            prop_assert_eq!(average_precision_at(&rel, r).unwrap(), average_precision_at(&shuffled, r).unwrap());
        }

        #[test]
        fn recall_monotone(seed in any::<u64>()) {
            let mut rng = crate::numerics::SeededRng::new(seed);
            let g: Vec<Vec<usize>> = (0..30).map(|_| vec![rng.below(4)]).collect();
            let q: Vec<Vec<usize>> = (0..5).map(|_| vec![rng.below(4)]).collect();
            let judge = judge_from(&q, &g, 4);
            let rankings: Vec<Vec<usize>> = (0..5).map(|_| {
                let mut ids: Vec<usize> = (0..30).collect();
                rng.shuffle(&mut ids);
                ids
            }).collect();
            let curve = recall_curve(&rankings, &judge, 30, 1).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-15));
            let p1 = precision_curve(&rankings[..1], &judge_from(&q[..1], &g, 4), 1, 1).unwrap();
            prop_assert!(p1[0].1 == 0.0 || p1[0].1 == 1.0);
        }
    }

    #[test]
    fn random_ranking_map_near_relevance_fraction() {
        let mut rng = crate::numerics::SeededRng::new(11);
        // one class of five relevant for each query: p = 0.2
        let g: Vec<Vec<usize>> = (0..1000).map(|i| vec![i % 5]).collect();
        let q: Vec<Vec<usize>> = (0..100).map(|i| vec![i % 5]).collect();
        let judge = judge_from(&q, &g, 5);
        let rankings: Vec<Vec<usize>> = (0..100)
            .map(|_| {
                let mut ids: Vec<usize> = (0..1000).collect();
                rng.shuffle(&mut ids);
                ids
            })
            .collect();
        let map = map_at_with(&rankings, &judge, 1000, ApDenominator::MinRTotal).unwrap();
        assert!((map - 0.2).abs() < 0.05, "{map}");
    }
}
