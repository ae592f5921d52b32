//! Hyper-resolution over one agent's domain clause.
//!
//! The domain clause `x=d_1 ∨ … ∨ x=d_m` resolved against one stored
//! nogood per value yields the union of the chosen tails as a new nogood.
//! Full generation takes the whole cross product of the buckets;
//! incremental generation keeps only the combinations that use at least one
//! tail added since the previous round. Each distinct resolvent is
//! reported once with its multiplicity, in canonical nogood order.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use rustc_hash::FxHashMap;

use crate::kb::{Buckets, NogoodStore, Policy};
use crate::model::{is_false_nogood, Literal, Nogood};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GenerationBatch {
    /// Each distinct resolvent with the number of tail combinations that
    /// produced it. Iteration order is canonical nogood order.
    pub counts: BTreeMap<Nogood, u64>,
    /// Number of surviving combination events, duplicates included.
    pub raw_count: u64,
}

impl GenerationBatch {
    pub fn is_empty(&self) -> bool {
        self.raw_count == 0
    }

    pub fn contains_refutation(&self) -> bool {
        self.counts.contains_key(&Nogood::empty())
    }

    /// Distinct resolvents in the order agents send them.
    pub fn distinct(&self) -> impl Iterator<Item = &Nogood> + '_ {
        self.counts.keys()
    }

    pub fn distinct_len(&self) -> usize {
        self.counts.len()
    }

    pub fn distinct_set(&self) -> BTreeSet<Nogood> {
        self.counts.keys().cloned().collect()
    }
}

/// Resolves over the whole cross product of the store's buckets.
pub fn generate_full(store: &NogoodStore, policy: Policy) -> GenerationBatch {
    generate(store.buckets(), store.buckets(), policy)
}

/// Resolves over the combinations that pick at least one tail from
/// `new_tails`. Tails in `new_tails` that are no longer in the store's
/// buckets are ignored.
pub fn generate_incremental(store: &NogoodStore, new_tails: &Buckets, policy: Policy) -> GenerationBatch {
    generate(store.buckets(), new_tails, policy)
}

/// Folds the buckets one at a time, keeping each distinct partial union
/// with its multiplicity and whether it already used a new tail. The number
/// of states is bounded by the number of distinct literal subsets rather
/// than by the size of the cross product.
fn generate(buckets: &Buckets, new_tails: &Buckets, policy: Policy) -> GenerationBatch {
    let mut batch = GenerationBatch::default();
    if buckets.is_empty() || buckets.values().any(BTreeSet::is_empty) {
        return batch;
    }
    let columns: Vec<Vec<(&Nogood, bool)>> = buckets
        .iter()
        .map(|(d, tails)| {
            let fresh = new_tails.get(d);
            tails
                .iter()
                .map(|t| (t.as_nogood(), fresh.is_some_and(|f| f.contains(t))))
                .collect()
        })
        .collect();
    if !columns.iter().flatten().any(|(_, new)| *new) {
        return batch;
    }
    // Unions are order-free, so fold the columns holding new tails first:
    // partial unions without a new tail then die early.
    let mut columns = columns;
    columns.sort_by_key(|c| (!c.iter().any(|(_, new)| *new), c.len()));
    let filter_false = policy.filters_false();

    let literals: BTreeSet<Literal> = columns
        .iter()
        .flatten()
        .flat_map(|(n, _)| n.literals().iter().copied())
        .collect();
    let results: Vec<(Nogood, u64)> = if literals.len() <= 128 {
        let literals: Vec<Literal> = literals.into_iter().collect();
        let bit = |l: &Literal| 1u128 << literals.binary_search(l).expect("indexed above");
        let mut var_masks: Vec<u128> = Vec::new();
        for (i, l) in literals.iter().enumerate() {
            if i == 0 || literals[i - 1].var != l.var {
                var_masks.push(0);
            }
            *var_masks.last_mut().expect("pushed") |= 1 << i;
        }
        var_masks.retain(|m| m.count_ones() > 1);
        let masked: Vec<Vec<(u128, bool)>> = columns
            .iter()
            .map(|c| {
                c.iter()
                    .map(|(n, new)| (n.literals().iter().map(bit).fold(0, |a, b| a | b), *new))
                    .collect()
            })
            .collect();
        let is_false = |m: &u128| var_masks.iter().any(|v| (m & v).count_ones() > 1);
        let unions = if literals.len() <= SUBSET_BITS {
            let mut unions = subset_convolve(&masked, literals.len());
            if filter_false {
                unions.retain(|(m, _)| !is_false(m));
            }
            unions
        } else {
            fold(&masked, 0u128, |a, b| a | b, is_false, filter_false)
        };
        unions
            .into_iter()
            .map(|(m, c)| {
                let n: Nogood = literals
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| m >> i & 1 == 1)
                    .map(|(_, l)| *l)
                    .collect();
                (n, c)
            })
            .collect()
    } else {
        let owned: Vec<Vec<(Nogood, bool)>> = columns
            .iter()
            .map(|c| c.iter().map(|(n, new)| ((*n).clone(), *new)).collect())
            .collect();
        fold(&owned, Nogood::empty(), Nogood::union, is_false_nogood, filter_false)
    };
    for (n, mult) in results {
        batch.raw_count += mult;
        *batch.counts.entry(n).or_insert(0) += mult;
    }
    batch
}

/// Up to this many distinct literals, unions are counted with subset-sum
/// transforms over every literal subset.
const SUBSET_BITS: usize = 16;

/// Counts, for every literal mask, the combinations whose union is exactly
/// that mask and that use at least one new tail. Combination counts are
/// the OR-convolution of the per-column mask histograms; the incremental
/// part is all combinations minus the all-old ones. Arithmetic wraps, which
/// is exact because every final count fits in a u64.
fn subset_convolve(columns: &[Vec<(u128, bool)>], bits: usize) -> Vec<(u128, u64)> {
    let size = 1usize << bits;
    let zeta = |keep_new: bool, col: &[(u128, bool)]| {
        let mut f = vec![0u64; size];
        for (m, new) in col {
            if keep_new || !new {
                f[*m as usize] += 1;
            }
        }
        for i in 0..bits {
            for m in 0..size {
                if m >> i & 1 == 1 {
                    f[m] = f[m].wrapping_add(f[m ^ 1 << i]);
                }
            }
        }
        f
    };
    let mut all = vec![1u64; size];
    let mut old = vec![1u64; size];
    for col in columns {
        for (acc, x) in all.iter_mut().zip(zeta(true, col)) {
            *acc = acc.wrapping_mul(x);
        }
        for (acc, x) in old.iter_mut().zip(zeta(false, col)) {
            *acc = acc.wrapping_mul(x);
        }
    }
    let mut f: Vec<u64> = all.iter().zip(&old).map(|(a, o)| a.wrapping_sub(*o)).collect();
    for i in 0..bits {
        for m in 0..size {
            if m >> i & 1 == 1 {
                f[m] = f[m].wrapping_sub(f[m ^ 1 << i]);
            }
        }
    }
    f.into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(m, c)| (m as u128, c))
        .collect()
}

/// The dynamic program behind `generate`, over any union-closed
/// representation of tails. Returns the final unions that used a new tail.
fn fold<K, U, F>(columns: &[Vec<(K, bool)>], empty: K, union: U, is_false: F, filter_false: bool) -> Vec<(K, u64)>
where
    K: Clone + Eq + Hash,
    U: Fn(&K, &K) -> K,
    F: Fn(&K) -> bool,
{
    // new_in_suffix[i]: some column at index >= i has a new tail
    let mut new_in_suffix = vec![false; columns.len() + 1];
    for i in (0..columns.len()).rev() {
        new_in_suffix[i] = new_in_suffix[i + 1] || columns[i].iter().any(|(_, new)| *new);
    }
    let mut states: FxHashMap<(K, bool), u64> = FxHashMap::default();
    states.insert((empty, false), 1);
    for (col, tails) in columns.iter().enumerate() {
        let mut next: FxHashMap<(K, bool), u64> = FxHashMap::default();
        next.reserve(states.len());
        for ((acc, has_new), mult) in &states {
            for (tail, is_new) in tails {
                let used_new = *has_new || *is_new;
                // an all-old prefix must still meet a new tail later on
                if !used_new && !new_in_suffix[col + 1] {
                    continue;
                }
                let u = union(acc, tail);
                // supersets of a false nogood are false too
                if filter_false && is_false(&u) {
                    continue;
                }
                *next.entry((u, used_new)).or_insert(0) += mult;
            }
        }
        states = next;
    }
    states
        .into_iter()
        .filter(|((_, has_new), _)| *has_new)
        .map(|((k, _), c)| (k, c))
        .collect()
}
