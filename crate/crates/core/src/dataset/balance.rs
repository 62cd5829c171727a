//! Class-balanced patch stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::annotations::PatchRecord;
use super::category::{Category, NUM_CATEGORIES};
use crate::error::{Error, Result};

/// Endless stream cycling through the categories in id order, drawing one
/// uniformly random record of each per round.
pub struct BalancedStream<'a> {
    groups: Vec<Vec<&'a PatchRecord>>,
    next: usize,
    rng: ChaCha8Rng,
}

pub fn balanced_batches(records: &[PatchRecord], seed: u64) -> Result<BalancedStream<'_>> {
    let mut groups: Vec<Vec<&PatchRecord>> = vec![Vec::new(); NUM_CATEGORIES];
    for r in records {
        groups[r.category.id()].push(r);
    }
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!(
            "category {:?} has no patches",
            Category::ALL[empty].name()
        )));
    }
    Ok(BalancedStream {
        groups,
        next: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl<'a> Iterator for BalancedStream<'a> {
    type Item = &'a PatchRecord;

    fn next(&mut self) -> Option<&'a PatchRecord> {
        let group = &self.groups[self.next];
        self.next = (self.next + 1) % NUM_CATEGORIES;
        Some(group[self.rng.random_range(0..group.len())])
    }
}
