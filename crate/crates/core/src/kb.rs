//! Per-agent knowledge base.
//!
//! Nogoods held by the agent owning variable `x` are indexed by the value
//! of their `x` literal: bucket `d` holds the *tail* of every stored nogood
//! containing `x=d`, that is the nogood with `x=d` removed. A unit nogood
//! `¬(x=d)` contributes the empty tail.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_false_nogood, is_subset, CspInstance, Literal, Nogood, Value, VarId};

/// How the knowledge base treats incoming nogoods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Duplicate detection only.
    Baseline,
    /// Duplicate detection, false-nogood filtering and subsumption
    /// elimination in both directions.
    Ekbm,
}

impl Policy {
    pub fn filters_false(self) -> bool {
        matches!(self, Policy::Ekbm)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Baseline => "baseline",
            Policy::Ekbm => "ekbm",
        })
    }
}

/// The remainder of a stored nogood once the owner literal is removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tail(Nogood);

impl Tail {
    pub fn new(n: Nogood) -> Self {
        Tail(n)
    }

    pub fn epsilon() -> Self {
        Tail(Nogood::empty())
    }

    pub fn is_epsilon(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_nogood(&self) -> &Nogood {
        &self.0
    }

    pub fn into_nogood(self) -> Nogood {
        self.0
    }
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_epsilon() {
            return f.write_str("ε");
        }
        let lits: Vec<String> = self.0.literals().iter().map(|l| l.to_string()).collect();
        f.write_str(&lits.join(" ∧ "))
    }
}

pub type Buckets = BTreeMap<Value, BTreeSet<Tail>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateStatus {
    DroppedDuplicate,
    DroppedSubsumed,
    Added,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub status: UpdateStatus,
    /// Stored nogoods removed because the received one subsumes them.
    pub eliminated: Vec<Nogood>,
}

impl UpdateOutcome {
    fn dropped(status: UpdateStatus) -> Self {
        UpdateOutcome {
            status,
            eliminated: Vec::new(),
        }
    }

    pub fn is_added(&self) -> bool {
        self.status == UpdateStatus::Added
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("nogood {nogood} has no literal of {owner}")]
    NotForOwner { owner: VarId, nogood: Nogood },
    #[error("nogood {nogood} assigns {owner} a value outside its domain")]
    OutOfDomain { owner: VarId, nogood: Nogood },
}

#[derive(Clone, Debug)]
pub struct NogoodStore {
    owner: VarId,
    domain: Vec<Value>,
    buckets: Buckets,
    stored: BTreeSet<Nogood>,
    new_tails: Buckets,
}

impl NogoodStore {
    /// An empty store for `owner` over `domain`.
    pub fn empty(owner: VarId, domain: &[Value]) -> Self {
        let buckets: Buckets = domain.iter().map(|&d| (d, BTreeSet::new())).collect();
        NogoodStore {
            owner,
            domain: domain.to_vec(),
            new_tails: buckets.clone(),
            buckets,
            stored: BTreeSet::new(),
        }
    }

    /// Loads every initial nogood of `inst` that mentions `owner`.
    ///
    /// Under [`Policy::Ekbm`] the initial nogoods go through [`update`](Self::update)
    /// so the store starts out free of false and subsumed nogoods. Every
    /// loaded tail is marked new.
    pub fn init(owner: VarId, inst: &CspInstance, policy: Policy) -> Self {
        let mut store = NogoodStore::empty(owner, inst.domain(owner));
        for n in inst.nogoods().iter().filter(|n| n.mentions(owner)) {
            store
                .update(n.clone(), policy)
                .expect("validated instance routes only owner nogoods");
        }
        store
    }

    pub fn owner(&self) -> VarId {
        self.owner
    }

    pub fn domain(&self) -> &[Value] {
        &self.domain
    }

    pub fn buckets(&self) -> &Buckets {
        &self.buckets
    }

    pub fn bucket(&self, d: Value) -> Option<&BTreeSet<Tail>> {
        self.buckets.get(&d)
    }

    pub fn new_tails(&self) -> &Buckets {
        &self.new_tails
    }

    pub fn stored(&self) -> &BTreeSet<Nogood> {
        &self.stored
    }

    pub fn contains(&self, n: &Nogood) -> bool {
        self.stored.contains(n)
    }

    /// Number of stored nogoods; the domain clause is not counted.
    pub fn store_size(&self) -> usize {
        self.stored.len()
    }

    pub fn has_new_tails(&self) -> bool {
        self.new_tails.values().any(|t| !t.is_empty())
    }

    /// Returns the tails added since the previous call and clears them.
    pub fn take_new_tails(&mut self) -> Buckets {
        let fresh: Buckets = self.domain.iter().map(|&d| (d, BTreeSet::new())).collect();
        std::mem::replace(&mut self.new_tails, fresh)
    }

    fn owner_literals(&self, n: &Nogood) -> Vec<Literal> {
        n.literals_of(self.owner).copied().collect()
    }

    /// Offers `received` to the store.
    pub fn update(&mut self, received: Nogood, policy: Policy) -> Result<UpdateOutcome, KbError> {
        let owner_lits = self.owner_literals(&received);
        if owner_lits.is_empty() {
            return Err(KbError::NotForOwner {
                owner: self.owner,
                nogood: received,
            });
        }
        if owner_lits.iter().any(|l| !self.buckets.contains_key(&l.val)) {
            return Err(KbError::OutOfDomain {
                owner: self.owner,
                nogood: received,
            });
        }
        if self.stored.contains(&received) {
            return Ok(UpdateOutcome::dropped(UpdateStatus::DroppedDuplicate));
        }
        match policy {
            Policy::Baseline => {
                for lit in &owner_lits {
                    self.insert_tail(lit.val, Tail(received.without(lit)));
                }
                self.stored.insert(received);
                Ok(UpdateOutcome {
                    status: UpdateStatus::Added,
                    eliminated: Vec::new(),
                })
            }
            Policy::Ekbm => {
                if is_false_nogood(&received) {
                    return Ok(UpdateOutcome::dropped(UpdateStatus::DroppedDuplicate));
                }
                // exactly one owner literal from here on
                let lit = owner_lits[0];
                let tail = Tail(received.without(&lit));
                let bucket = &self.buckets[&lit.val];
                // A stored nogood subsumes `received` iff it shares the owner
                // literal and its tail is a subset of ours.
                if bucket.iter().any(|b| is_subset(b.0.literals(), tail.0.literals())) {
                    return Ok(UpdateOutcome::dropped(UpdateStatus::DroppedSubsumed));
                }
                let doomed: Vec<Tail> = bucket
                    .iter()
                    .filter(|b| is_subset(tail.0.literals(), b.0.literals()))
                    .cloned()
                    .collect();
                let mut eliminated = Vec::with_capacity(doomed.len());
                for b in doomed {
                    let full = b.0.union(&Nogood::from_iter([lit]));
                    self.remove_tail(lit.val, &b);
                    self.stored.remove(&full);
                    eliminated.push(full);
                }
                eliminated.sort();
                self.insert_tail(lit.val, tail);
                self.stored.insert(received);
                Ok(UpdateOutcome {
                    status: UpdateStatus::Added,
                    eliminated,
                })
            }
        }
    }

    fn insert_tail(&mut self, d: Value, t: Tail) {
        self.new_tails.entry(d).or_default().insert(t.clone());
        self.buckets.entry(d).or_default().insert(t);
    }

    fn remove_tail(&mut self, d: Value, t: &Tail) {
        if let Some(b) = self.buckets.get_mut(&d) {
            b.remove(t);
        }
        if let Some(b) = self.new_tails.get_mut(&d) {
            b.remove(t);
        }
    }

    /// Recomputes the buckets from the stored nogoods and checks that they
    /// match the maintained index, and that new tails are bucket members.
    pub fn is_coherent(&self) -> bool {
        let mut derived: Buckets = self.domain.iter().map(|&d| (d, BTreeSet::new())).collect();
        for n in &self.stored {
            for lit in n.literals_of(self.owner) {
                derived.entry(lit.val).or_default().insert(Tail(n.without(lit)));
            }
        }
        derived == self.buckets
            && self
                .new_tails
                .iter()
                .all(|(d, ts)| ts.iter().all(|t| self.buckets[d].contains(t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complete_graph_coloring, ng, subsumes};

    fn tails(ts: &[&[(u32, u32)]]) -> BTreeSet<Tail> {
        ts.iter().map(|t| Tail(ng(t))).collect()
    }

    #[test]
    fn init_builds_buckets_from_triangle() {
        let inst = complete_graph_coloring(3, 2);
        for policy in [Policy::Baseline, Policy::Ekbm] {
            let s = NogoodStore::init(VarId(0), &inst, policy);
            assert_eq!(s.bucket(Value(1)).unwrap(), &tails(&[&[(1, 1)], &[(2, 1)]]));
            assert_eq!(s.bucket(Value(2)).unwrap(), &tails(&[&[(1, 2)], &[(2, 2)]]));
            assert_eq!(s.store_size(), 4);
            assert!(s.is_coherent());
        }
    }

    #[test]
    fn init_without_owner_nogoods_is_empty() {
        let inst = CspInstance::uniform(2, 2).with_nogoods([ng(&[(1, 1)])]);
        let s = NogoodStore::init(VarId(0), &inst, Policy::Ekbm);
        assert!(s.buckets().values().all(|b| b.is_empty()));
        assert_eq!(s.store_size(), 0);
    }

    #[test]
    fn unit_nogood_gives_epsilon_tail() {
        let inst = CspInstance::uniform(2, 2).with_nogoods([ng(&[(0, 1)])]);
        let s = NogoodStore::init(VarId(0), &inst, Policy::Baseline);
        assert!(s.bucket(Value(1)).unwrap().contains(&Tail::epsilon()));
    }

    fn x1_after_round_one() -> NogoodStore {
        let inst = complete_graph_coloring(3, 2);
        let mut s = NogoodStore::init(VarId(0), &inst, Policy::Ekbm);
        for n in [
            ng(&[(0, 1), (2, 2)]),
            ng(&[(0, 2), (2, 1)]),
            ng(&[(0, 1), (1, 2)]),
            ng(&[(0, 2), (1, 1)]),
        ] {
            assert!(s.update(n, Policy::Ekbm).unwrap().is_added());
        }
        s
    }

    #[test]
    fn unit_nogood_eliminates_four() {
        let mut s = x1_after_round_one();
        let out = s.update(ng(&[(0, 1)]), Policy::Ekbm).unwrap();
        assert_eq!(out.status, UpdateStatus::Added);
        let mut expected = vec![
            ng(&[(0, 1), (1, 1)]),
            ng(&[(0, 1), (2, 1)]),
            ng(&[(0, 1), (2, 2)]),
            ng(&[(0, 1), (1, 2)]),
        ];
        expected.sort();
        assert_eq!(out.eliminated, expected);
        assert_eq!(s.store_size(), 5);
        assert!(s.is_coherent());

        let out = s.update(ng(&[(0, 2)]), Policy::Ekbm).unwrap();
        assert_eq!(out.eliminated.len(), 4);
        assert_eq!(s.store_size(), 2);
    }

    #[test]
    fn duplicates_and_subsumed_are_dropped() {
        let mut s = x1_after_round_one();
        let dup = s.update(ng(&[(0, 1), (1, 1)]), Policy::Ekbm).unwrap();
        assert_eq!(dup.status, UpdateStatus::DroppedDuplicate);
        s.update(ng(&[(0, 1)]), Policy::Ekbm).unwrap();
        let sub = s.update(ng(&[(0, 1), (1, 2)]), Policy::Ekbm).unwrap();
        assert_eq!(sub.status, UpdateStatus::DroppedSubsumed);
        assert!(sub.eliminated.is_empty());
    }

    #[test]
    fn baseline_keeps_false_and_subsumed() {
        let inst = complete_graph_coloring(3, 2);
        let mut s = NogoodStore::init(VarId(0), &inst, Policy::Baseline);
        let out = s.update(ng(&[(0, 1), (0, 2)]), Policy::Baseline).unwrap();
        assert!(out.is_added());
        // a self-contradictory nogood lands in both buckets
        assert!(s.bucket(Value(1)).unwrap().contains(&Tail(ng(&[(0, 2)]))));
        assert!(s.bucket(Value(2)).unwrap().contains(&Tail(ng(&[(0, 1)]))));
        s.update(ng(&[(0, 1)]), Policy::Baseline).unwrap();
        assert_eq!(s.store_size(), 6);
        assert!(s.is_coherent());
    }

    #[test]
    fn ekbm_rejects_false_nogood() {
        let inst = complete_graph_coloring(3, 2);
        let mut s = NogoodStore::init(VarId(0), &inst, Policy::Ekbm);
        let out = s.update(ng(&[(0, 1), (0, 2)]), Policy::Ekbm).unwrap();
        assert_eq!(out.status, UpdateStatus::DroppedDuplicate);
        assert_eq!(s.store_size(), 4);
    }

    #[test]
    fn routing_errors() {
        let inst = complete_graph_coloring(3, 2);
        let mut s = NogoodStore::init(VarId(0), &inst, Policy::Ekbm);
        assert!(matches!(
            s.update(ng(&[(1, 1)]), Policy::Ekbm),
            Err(KbError::NotForOwner { .. })
        ));
        assert!(matches!(
            s.update(ng(&[(0, 7)]), Policy::Ekbm),
            Err(KbError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn take_new_tails_clears() {
        let inst = complete_graph_coloring(3, 2);
        let mut s = NogoodStore::init(VarId(0), &inst, Policy::Ekbm);
        let first = s.take_new_tails();
        assert_eq!(first[&Value(1)], tails(&[&[(1, 1)], &[(2, 1)]]));
        assert_eq!(first[&Value(2)], tails(&[&[(1, 2)], &[(2, 2)]]));
        let second = s.take_new_tails();
        assert!(second.values().all(|t| t.is_empty()));
    }

    #[test]
    fn eliminated_tails_leave_new_tails() {
        // nothing taken yet: initial and round-1 tails are all still new
        let mut s = x1_after_round_one();
        let out = s.update(ng(&[(0, 2), (1, 1), (2, 2)]), Policy::Ekbm).unwrap();
        assert_eq!(out.status, UpdateStatus::DroppedSubsumed);
        s.update(ng(&[(0, 1)]), Policy::Ekbm).unwrap();
        let fresh = s.take_new_tails();
        // the four eliminated x1=1 tails are gone from the new set as well
        assert_eq!(fresh[&Value(1)], tails(&[&[]]));
        assert_eq!(fresh[&Value(2)], tails(&[&[(1, 1)], &[(1, 2)], &[(2, 1)], &[(2, 2)]]));
        assert_eq!(s.bucket(Value(1)).unwrap(), &tails(&[&[]]));
        assert_eq!(
            s.bucket(Value(2)).unwrap(),
            &tails(&[&[(1, 1)], &[(1, 2)], &[(2, 1)], &[(2, 2)]])
        );
    }

    #[test]
    fn ekbm_store_stays_subsumption_free() {
        let mut s = x1_after_round_one();
        for n in [
            ng(&[(0, 1), (1, 1), (2, 2)]),
            ng(&[(0, 2)]),
            ng(&[(0, 1), (2, 1), (1, 2)]),
        ] {
            s.update(n, Policy::Ekbm).unwrap();
        }
        for a in s.stored() {
            for b in s.stored() {
                assert!(a == b || !subsumes(a, b));
            }
        }
    }
}
