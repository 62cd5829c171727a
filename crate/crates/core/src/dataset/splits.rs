//! Cluster-atomic train/validate/test assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotations::{Annotations, PatchRecord, Split};
use super::category::{Category, NUM_CATEGORIES};
use crate::error::{Error, Result};

pub const MIN_TEST_SEGMENTS: usize = 75;
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

pub type CategoryCounts = [usize; NUM_CATEGORIES];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Target fractions of segments for train, validate and test.
    pub ratios: [f64; 3],
    pub min_test_segments: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            ratios: DEFAULT_RATIOS,
            min_test_segments: MIN_TEST_SEGMENTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub clusters: BTreeMap<String, Split>,
    /// Categories whose test quota could not be met.
    pub flagged: Vec<Category>,
}

impl SplitAssignment {
    pub fn split_of(&self, cluster: &str) -> Option<Split> {
        self.clusters.get(cluster).copied()
    }
}

/// Segment counts per cluster, given photo → cluster ids.
pub fn cluster_segment_counts(annotations: &Annotations) -> BTreeMap<String, CategoryCounts> {
    let clusters = annotations.clusters();
    let mut counts: BTreeMap<String, CategoryCounts> = clusters
        .values()
        .map(|c| (c.clone(), [0; NUM_CATEGORIES]))
        .collect();
    for seg in &annotations.segments {
        let cluster = clusters.get(&seg.photo_id).cloned().unwrap_or_else(|| seg.photo_id.clone());
        counts.entry(cluster).or_insert([0; NUM_CATEGORIES])[seg.category.id()] += 1;
    }
    counts
}

/// Assigns whole clusters to splits. Rarest categories first, the clusters
/// richest in a category move to test until its quota is met; the rest are
/// dealt in shuffled order to whichever split holds the fewest segments
/// relative to its target ratio.
pub fn assign_splits(
    clusters: &BTreeMap<String, CategoryCounts>,
    options: SplitOptions,
    seed: u64,
) -> Result<SplitAssignment> {
    let sum: f64 = options.ratios.iter().sum();
    if options.ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {:?} must be non-negative and sum to 1", options.ratios)));
    }
    if clusters.is_empty() {
        return Ok(SplitAssignment::default());
    }

    let mut order: Vec<(&String, &CategoryCounts)> = clusters.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut totals = [0usize; NUM_CATEGORIES];
    for (_, c) in &order {
        for (t, v) in totals.iter_mut().zip(c.iter()) {
            *t += v;
        }
    }
    let mut by_rarity: Vec<usize> = (0..NUM_CATEGORIES).filter(|&c| totals[c] > 0).collect();
    by_rarity.sort_by_key(|&c| (totals[c], c));

    let mut st = State {
        assigned: vec![None; order.len()],
        test: [0; NUM_CATEGORIES],
        size: [0.0; 3],
    };
    if options.ratios[2] > 0.0 {
        for &cat in &by_rarity {
            if totals[cat] < options.min_test_segments {
                continue;
            }
            while st.test[cat] < options.min_test_segments {
                // ties keep shuffled order
                let best = (0..order.len())
                    .filter(|&i| st.assigned[i].is_none() && order[i].1[cat] > 0)
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if order[b].1[cat] >= order[i].1[cat] => Some(b),
                        _ => Some(i),
                    });
                match best {
                    Some(i) => st.place(i, Split::Test, order[i].1),
                    None => break,
                }
            }
        }
    }

    for i in 0..order.len() {
        if st.assigned[i].is_some() {
            continue;
        }
        // fullest relative to its target loses; ties to the earlier split
        let fill = |s: Split| st.size[s as usize] / options.ratios[s as usize];
        let s = Split::ALL
            .into_iter()
            .filter(|&s| options.ratios[s as usize] > 0.0)
            .min_by(|&a, &b| fill(a).total_cmp(&fill(b)))
            .expect("ratios sum to 1");
        st.place(i, s, order[i].1);
    }

    let flagged = (0..NUM_CATEGORIES)
        .filter(|&c| totals[c] > 0 && st.test[c] < options.min_test_segments)
        .map(|c| Category::ALL[c])
        .collect::<Vec<_>>();
    if !flagged.is_empty() {
        log::warn!("test split below quota for: {flagged:?}");
    }
    let assigned = st.assigned;
    let clusters = order
        .iter()
        .zip(assigned)
        .map(|((id, _), s)| ((*id).clone(), s.expect("every cluster placed")))
        .collect();
    Ok(SplitAssignment { clusters, flagged })
}

/// Stamps each patch with the split of its photo's cluster. Photos missing
/// from `photo_clusters` are their own cluster.
pub fn label_patches(
    patches: &mut [PatchRecord],
    photo_clusters: &BTreeMap<String, String>,
    assignment: &SplitAssignment,
) -> Result<()> {
    for p in patches {
        let cluster = photo_clusters.get(&p.photo_id).unwrap_or(&p.photo_id);
        p.split = Some(
            assignment
                .split_of(cluster)
                .ok_or_else(|| Error::invalid(format!("cluster {cluster} has no split")))?,
        );
    }
    Ok(())
}

fn weight(c: &CategoryCounts) -> f64 {
    c.iter().sum::<usize>() as f64 + 1.0
}

struct State {
    assigned: Vec<Option<Split>>,
    test: CategoryCounts,
    size: [f64; 3],
}

impl State {
    fn place(&mut self, i: usize, s: Split, counts: &CategoryCounts) {
        self.assigned[i] = Some(s);
        self.size[s as usize] += weight(counts);
        if s == Split::Test {
            for (t, v) in self.test.iter_mut().zip(counts) {
                *t += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(Category, usize)]) -> CategoryCounts {
        let mut c = [0; NUM_CATEGORIES];
        for &(cat, n) in pairs {
            c[cat.id()] = n;
        }
        c
    }

    #[test]
    fn empty_and_single() {
        let a = assign_splits(&BTreeMap::new(), SplitOptions::default(), 0).unwrap();
        assert!(a.clusters.is_empty());
        let one = BTreeMap::from([("c".to_string(), counts(&[(Category::Wood, 3)]))]);
        let a = assign_splits(&one, SplitOptions::default(), 0).unwrap();
        assert_eq!(a.clusters.len(), 1);
        assert_eq!(a.flagged, vec![Category::Wood]);
    }

    #[test]
    fn rejects_bad_ratios() {
        let opts = SplitOptions {
            ratios: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(assign_splits(&BTreeMap::new(), opts, 0).is_err());
    }

    #[test]
    fn quota_met_when_feasible() {
        let mut clusters = BTreeMap::new();
        for i in 0..40 {
            clusters.insert(format!("c{i:02}"), counts(&[(Category::Sky, 1), (Category::Wood, 5 + i % 3)]));
        }
        let opts = SplitOptions {
            min_test_segments: 10,
            ..Default::default()
        };
        let a = assign_splits(&clusters, opts, 4).unwrap();
        let test_sky: usize = a
            .clusters
            .iter()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(c, _)| clusters[c][Category::Sky.id()])
            .sum();
        assert!(test_sky >= 10);
        assert!(a.flagged.is_empty());
        assert!(a.clusters.values().any(|s| *s == Split::Train));
        assert_eq!(a, assign_splits(&clusters, opts, 4).unwrap());
    }
}
