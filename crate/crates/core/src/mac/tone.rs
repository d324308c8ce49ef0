use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Transaction identifier.
pub type TxnId = u64;

/// Out-of-band busy tones. Each node owns one tone identity; a tone is audible
/// while at least one transaction holds it.
#[derive(Clone, Debug, Default)]
pub struct ToneBoard {
    holders: BTreeMap<usize, BTreeSet<TxnId>>,
    starts: BTreeMap<usize, u64>,
    ends: BTreeMap<usize, u64>,
}

impl ToneBoard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `txn` as a holder of `owner`'s tone. Returns whether the tone was
    /// silent before.
    pub fn start(&mut self, owner: usize, txn: TxnId) -> Result<bool> {
        let set = self.holders.entry(owner).or_default();
        let was_silent = set.is_empty();
        if !set.insert(txn) {
            return Err(Error::Invariant(format!("tone {owner} already held by transaction {txn}")));
        }
        *self.starts.entry(owner).or_default() += 1;
        Ok(was_silent)
    }

    /// Releases `txn`'s hold on `owner`'s tone. Returns whether the tone is
    /// now silent.
    pub fn end(&mut self, owner: usize, txn: TxnId) -> Result<bool> {
        let set = self.holders.entry(owner).or_default();
        if !set.remove(&txn) {
            return Err(Error::Invariant(format!("tone {owner} end without start for transaction {txn}")));
        }
        *self.ends.entry(owner).or_default() += 1;
        Ok(set.is_empty())
    }

    pub fn is_active(&self, owner: usize) -> bool {
        self.holders.get(&owner).is_some_and(|s| !s.is_empty())
    }

    /// Exchanges currently holding `owner`'s tone.
    pub fn holders(&self, owner: usize) -> impl Iterator<Item = TxnId> + '_ {
        self.holders.get(&owner).into_iter().flatten().copied()
    }

    pub fn is_held_by(&self, owner: usize, txn: TxnId) -> bool {
        self.holders.get(&owner).is_some_and(|s| s.contains(&txn))
    }

    /// Whether a transaction other than `txn` holds `owner`'s tone.
    pub fn held_by_other(&self, owner: usize, txn: TxnId) -> bool {
        self.holders.get(&owner).is_some_and(|s| s.iter().any(|&t| t != txn))
    }

    pub fn starts(&self, owner: usize) -> u64 {
        self.starts.get(&owner).copied().unwrap_or(0)
    }

    pub fn ends(&self, owner: usize) -> u64 {
        self.ends.get(&owner).copied().unwrap_or(0)
    }

    pub fn any_active(&self) -> bool {
        self.holders.values().any(|s| !s.is_empty())
    }
}
