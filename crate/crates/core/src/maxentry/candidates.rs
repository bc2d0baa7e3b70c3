use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::Serialize;

use crate::ctd::{Ctd, MultiIndex};
use crate::error::{Error, Result};

/// A location proposed by a search, with the value of the original tensor there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub index: MultiIndex,
    pub value: f64,
}

struct Entry {
    magnitude: f64,
    positions: Vec<usize>,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on magnitude; lexicographically smaller positions first on ties.
        self.magnitude
            .total_cmp(&other.magnitude)
            .then_with(|| other.positions.cmp(&self.positions))
    }
}

/// The `count` largest-magnitude entries of term `l` of `y`, best first.
fn term_top_locations(y: &Ctd, l: usize, count: usize) -> Vec<MultiIndex> {
    let d = y.dims();
    let sorted: Vec<Vec<(usize, f64)>> = (0..d)
        .map(|j| {
            let col = y.factor(j).column(l);
            let mut v: Vec<(usize, f64)> = col.iter().map(|x| x.abs()).enumerate().collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            v
        })
        .collect();
    let magnitude = |pos: &[usize]| pos.iter().zip(&sorted).map(|(&p, s)| s[p].1).product::<f64>();

    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = vec![0; d];
    seen.insert(start.clone());
    heap.push(Entry { magnitude: magnitude(&start), positions: start });
    let mut out = Vec::with_capacity(count);
    while let Some(Entry { positions, .. }) = heap.pop() {
        out.push(MultiIndex::new(positions.iter().zip(&sorted).map(|(&p, s)| s[p].0).collect()));
        if out.len() == count {
            break;
        }
        for j in 0..d {
            if positions[j] + 1 < sorted[j].len() {
                let mut next = positions.clone();
                next[j] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Entry { magnitude: magnitude(&next), positions: next });
                }
            }
        }
    }
    out
}

/// Candidate maxima of `u` read off the terms of an iterate `y`.
///
/// Each term of `y` proposes its `max_per_term` largest entries (with one,
/// the per-dimension argmax of the absolute factors). Duplicates are merged,
/// every location is evaluated on `u`, and the list is sorted by `|value|`
/// descending.
pub fn extract_candidates(y: &Ctd, u: &Ctd, max_per_term: usize) -> Result<Vec<Candidate>> {
    if y.modes() != u.modes() {
        return Err(Error::Shape(format!("modes {:?} vs {:?}", y.modes(), u.modes())));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for l in 0..y.rank() {
        for index in term_top_locations(y, l, max_per_term.max(1)) {
            if seen.insert(index.clone()) {
                let value = u.eval_unchecked(index.as_slice());
                out.push(Candidate { index, value });
            }
        }
    }
    out.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then_with(|| a.index.cmp(&b.index)));
    Ok(out)
}
