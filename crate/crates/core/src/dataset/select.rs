//! Greedy choice of fully annotated evaluation photos.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::annotations::Annotations;
use super::category::NUM_CATEGORIES;
use super::splits::CategoryCounts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoCounts {
    pub photo_id: String,
    pub segments: CategoryCounts,
    pub clicks: CategoryCounts,
}

impl PhotoCounts {
    pub fn total(&self) -> usize {
        self.segments.iter().chain(&self.clicks).sum()
    }
}

/// Per-photo annotation counts, ordered by photo id.
pub fn annotation_counts(annotations: &Annotations) -> Vec<PhotoCounts> {
    let mut map: BTreeMap<&str, PhotoCounts> = BTreeMap::new();
    for id in annotations.photos.keys() {
        map.entry(id).or_insert_with(|| empty(id));
    }
    for s in &annotations.segments {
        map.entry(&s.photo_id).or_insert_with(|| empty(&s.photo_id)).segments[s.category.id()] += 1;
    }
    for c in &annotations.clicks {
        map.entry(&c.photo_id).or_insert_with(|| empty(&c.photo_id)).clicks[c.category.id()] += 1;
    }
    map.into_values().collect()
}

fn empty(id: &str) -> PhotoCounts {
    PhotoCounts {
        photo_id: id.to_string(),
        segments: [0; NUM_CATEGORIES],
        clicks: [0; NUM_CATEGORIES],
    }
}

/// `Σ_c ln(1 + annotations of category c)` over a set of photos.
pub fn coverage_score<'a>(photos: impl IntoIterator<Item = &'a PhotoCounts>) -> f64 {
    score(&totals(photos))
}

fn totals<'a>(photos: impl IntoIterator<Item = &'a PhotoCounts>) -> CategoryCounts {
    let mut t = [0; NUM_CATEGORIES];
    for p in photos {
        for c in 0..NUM_CATEGORIES {
            t[c] += p.segments[c] + p.clicks[c];
        }
    }
    t
}

fn score(totals: &CategoryCounts) -> f64 {
    totals.iter().map(|&n| (n as f64).ln_1p()).sum()
}

/// Picks `k` photos greedily by marginal coverage gain; ties go to the
/// photo with more annotations, then the smaller id. Returns ids in pick
/// order.
pub fn select_eval_photos(photos: &[PhotoCounts], k: usize) -> Result<Vec<String>> {
    if k > photos.len() {
        return Err(Error::invalid(format!("cannot pick {k} of {} photos", photos.len())));
    }
    let mut taken = vec![false; photos.len()];
    let mut current = [0usize; NUM_CATEGORIES];
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let base = score(&current);
        let gain = |p: &PhotoCounts| {
            let mut t = current;
            for c in 0..NUM_CATEGORIES {
                t[c] += p.segments[c] + p.clicks[c];
            }
            score(&t) - base
        };
        let best = (0..photos.len())
            .filter(|&i| !taken[i])
            .map(|i| (i, gain(&photos[i])))
            .reduce(|a, b| {
                let (pa, pb) = (&photos[a.0], &photos[b.0]);
                let better = b
                    .1
                    .total_cmp(&a.1)
                    .then(pb.total().cmp(&pa.total()))
                    .then(pa.photo_id.cmp(&pb.photo_id));
                if better.is_gt() {
                    b
                } else {
                    a
                }
            })
            .expect("k does not exceed the photo count");
        taken[best.0] = true;
        let p = &photos[best.0];
        for c in 0..NUM_CATEGORIES {
            current[c] += p.segments[c] + p.clicks[c];
        }
        picks.push(p.photo_id.clone());
    }
    Ok(picks)
}
