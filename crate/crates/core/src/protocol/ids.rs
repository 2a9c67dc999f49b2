//! Locally-unique identifiers and the 256-entry blacklist used to draw them.

use std::fmt;

use rand::Rng;

use super::ProtocolError;

/// 8-bit identifier, unique only within a two-hop communication neighbourhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalId(pub u8);

impl fmt::Display for LocalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Disambiguates two agents that happen to share an id during duplicate detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Nonce(pub u8);

/// Fixed-size bitset over the whole id space.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
pub struct IdSet([u64; 4]);

impl IdSet {
    pub const fn new() -> Self {
        IdSet([0; 4])
    }

    pub fn full() -> Self {
        IdSet([u64::MAX; 4])
    }

    pub fn insert(&mut self, id: LocalId) -> bool {
        let (word, bit) = (id.0 as usize / 64, id.0 as usize % 64);
        let fresh = self.0[word] & (1 << bit) == 0;
        self.0[word] |= 1 << bit;
        fresh
    }

    pub fn remove(&mut self, id: LocalId) {
        let (word, bit) = (id.0 as usize / 64, id.0 as usize % 64);
        self.0[word] &= !(1 << bit);
    }

    pub fn contains(&self, id: LocalId) -> bool {
        let (word, bit) = (id.0 as usize / 64, id.0 as usize % 64);
        self.0[word] & (1 << bit) != 0
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&w| w == u64::MAX)
    }

    pub fn union(&self, other: &IdSet) -> IdSet {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            *a |= *b;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = LocalId> + '_ {
        (0..=255u8).map(LocalId).filter(move |id| self.contains(*id))
    }
}

impl FromIterator<LocalId> for IdSet {
    fn from_iter<T: IntoIterator<Item = LocalId>>(iter: T) -> Self {
        let mut set = IdSet::new();
        for id in iter {
            set.insert(id);
        }
        set
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|id| id.0)).finish()
    }
}

/// Draws an id uniformly from the ids not in `blacklist`, by rejection.
pub fn pick_fresh_id<R: Rng + ?Sized>(blacklist: &IdSet, rng: &mut R) -> Result<LocalId, ProtocolError> {
    if blacklist.is_full() {
        return Err(ProtocolError::FullBlacklist);
    }
    loop {
        let candidate = LocalId(rng.gen::<u8>());
        if !blacklist.contains(candidate) {
            return Ok(candidate);
        }
    }
}
