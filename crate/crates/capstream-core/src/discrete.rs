//! Discrete capped sample-and-hold over unit-weight streams.
//!
//! An element of key x is scored by drawing a uniform bucket b in {0,..,l-1}
//! and hashing (b, x); the key's seed is the minimum element score.  With
//! l = 1 every element of a key gets the same score (distinct sampling); with
//! l = infinity every element gets an independent uniform (classic
//! sample-and-hold).  Fixed-threshold sampling caches a key once an element
//! scores below tau and counts subsequent elements; fixed-size sampling keeps
//! k cached keys, lazily re-scoring counted elements on eviction.

use crate::error::{Error, Result};
use crate::random::{mix3, unit_from_bits, FastMap, KeyHasher, RandomSource, UnitStream};
use crate::types::{Element, Ell, Key};
use std::collections::BTreeMap;

const TAG_ELEMENT: u64 = 0xd151;
const TAG_RESCORE: u64 = 0xd152;

/// Element score under the l-bucket scheme, Hash(floor(l*u), x).
/// For l = infinity the fresh uniform itself is the score.
pub fn score_element_discrete(hasher: &KeyHasher, ell: Ell, key: Key, u: f64) -> f64 {
    match ell {
        Ell::Finite(l) => hasher.bucket(((u * l as f64) as u64).min(l - 1), key),
        Ell::Infinite => u,
    }
}

/// Output of the discrete samplers: cached keys with partial counts, the
/// (final) threshold, and the parameters the estimators need.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSample {
    pub ell: Ell,
    /// Fixed threshold, or the (k+1)-st smallest seed (1.0, the score
    /// supremum, if the cache never filled).
    pub tau: f64,
    /// Sample size bound in fixed-size mode.
    pub k: Option<usize>,
    pub entries: BTreeMap<Key, u64>,
}

impl DiscreteSample {
    pub fn max_count(&self) -> u64 {
        self.entries.values().copied().max().unwrap_or(0)
    }
}

fn require_unit_weight(elem: &Element) -> Result<()> {
    if elem.weight != 1.0 {
        return Err(Error::NonUnitWeight(elem.weight));
    }
    Ok(())
}

/// Fixed-threshold sampler: caches a key on the first element whose score
/// falls below tau, then counts every later element of that key.
pub struct DiscreteFixedTau {
    ell: Ell,
    tau: f64,
    hasher: KeyHasher,
    draws: UnitStream,
    counts: FastMap<u64>,
}

impl DiscreteFixedTau {
    pub fn new(ell: Ell, tau: f64, hasher: KeyHasher, source: &RandomSource) -> Result<Self> {
        ell.validate()?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be in (0,1], got {tau}"
            )));
        }
        Ok(DiscreteFixedTau {
            ell,
            tau,
            hasher,
            draws: source.stream(TAG_ELEMENT),
            counts: FastMap::default(),
        })
    }

    pub fn push(&mut self, elem: Element) -> Result<()> {
        require_unit_weight(&elem)?;
        if let Some(c) = self.counts.get_mut(&elem.key) {
            *c += 1;
            return Ok(());
        }
        let score =
            score_element_discrete(&self.hasher, self.ell, elem.key, self.draws.next_unit());
        if score < self.tau {
            self.counts.insert(elem.key, 1);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn finish(self) -> DiscreteSample {
        DiscreteSample {
            ell: self.ell,
            tau: self.tau,
            k: None,
            entries: self.counts.into_iter().collect(),
        }
    }
}

struct CachedKey {
    count: u64,
    seed: f64,
    /// Base of this key's eviction re-score stream; fresh per admission so a
    /// re-admitted key never reuses earlier draws.
    rescore_base: u64,
    rescore_ctr: u64,
    generation: u64,
}

/// Max-heap item ordered by (seed, key); `generation` invalidates stale copies.
#[derive(PartialEq)]
struct HeapItem {
    seed: f64,
    key: Key,
    generation: u64,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.seed
            .total_cmp(&other.seed)
            .then(self.key.cmp(&other.key))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Fixed-size sampler: keeps at most k cached keys with lazily maintained
/// seeds.  On overflow the key with maximum current seed is popped, the
/// threshold drops to that seed, and the popped key's counted elements are
/// re-scored one by one until the count empties (evict) or a score lands
/// below the new threshold (reinsert).
pub struct DiscreteFixedK {
    ell: Ell,
    k: usize,
    tau: f64,
    hasher: KeyHasher,
    master: u64,
    draws: UnitStream,
    entries: FastMap<CachedKey>,
    heap: std::collections::BinaryHeap<HeapItem>,
    admissions: u64,
    versions: u64,
}

impl DiscreteFixedK {
    pub fn new(ell: Ell, k: usize, hasher: KeyHasher, source: &RandomSource) -> Result<Self> {
        ell.validate()?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        Ok(DiscreteFixedK {
            ell,
            k,
            tau: 1.0, // supremum of the score range
            hasher,
            master: source.master(),
            draws: source.stream(TAG_ELEMENT),
            entries: FastMap::default(),
            heap: std::collections::BinaryHeap::new(),
            admissions: 0,
            versions: 0,
        })
    }

    /// Current threshold: 1 until the cache first overflows, then the seed of
    /// the most recent eviction.  Strictly decreasing across evictions.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn rescore(&mut self, key: Key) -> f64 {
        let entry = self.entries.get_mut(&key).expect("rescoring a cached key");
        let u = unit_from_bits(mix3(entry.rescore_base, entry.rescore_ctr, 0));
        entry.rescore_ctr += 1;
        score_element_discrete(&self.hasher, self.ell, key, u)
    }

    pub fn push(&mut self, elem: Element) -> Result<()> {
        require_unit_weight(&elem)?;
        if let Some(entry) = self.entries.get_mut(&elem.key) {
            entry.count += 1;
            return Ok(());
        }
        let score =
            score_element_discrete(&self.hasher, self.ell, elem.key, self.draws.next_unit());
        if score >= self.tau {
            return Ok(());
        }
        self.admissions += 1;
        // generations are globally unique so stale heap items can never be
        // mistaken for a re-admitted key's current seed
        self.versions += 1;
        self.entries.insert(
            elem.key,
            CachedKey {
                count: 1,
                seed: score,
                rescore_base: mix3(self.master, TAG_RESCORE, self.admissions),
                rescore_ctr: 0,
                generation: self.versions,
            },
        );
        self.heap.push(HeapItem {
            seed: score,
            key: elem.key,
            generation: self.versions,
        });
        while self.entries.len() > self.k {
            self.evict_one();
        }
        Ok(())
    }

    fn evict_one(&mut self) {
        // Pop the cached key with maximum current seed, skipping stale heap
        // copies left behind by earlier reinsertions.
        let key = loop {
            let item = self.heap.pop().expect("heap tracks every cached key");
            match self.entries.get(&item.key) {
                Some(e) if e.generation == item.generation => break item.key,
                _ => continue,
            }
        };
        self.tau = self.entries[&key].seed;
        loop {
            let e = &self.entries[&key];
            if e.count == 0 || e.seed < self.tau {
                break;
            }
            let s = self.rescore(key);
            let e = self.entries.get_mut(&key).unwrap();
            e.count -= 1;
            e.seed = s;
        }
        let e = self.entries.get_mut(&key).unwrap();
        if e.count == 0 {
            self.entries.remove(&key);
        } else {
            self.versions += 1;
            e.generation = self.versions;
            self.heap.push(HeapItem {
                seed: e.seed,
                key,
                generation: e.generation,
            });
        }
    }

    pub fn finish(self) -> DiscreteSample {
        DiscreteSample {
            ell: self.ell,
            tau: self.tau,
            k: Some(self.k),
            entries: self
                .entries
                .into_iter()
                .map(|(k, e)| (k, e.count))
                .collect(),
        }
    }
}

/// Run fixed-threshold sampling over a whole stream.
pub fn sample_fixed_tau_discrete<I>(
    stream: I,
    ell: Ell,
    tau: f64,
    hasher: KeyHasher,
    source: &RandomSource,
) -> Result<DiscreteSample>
where
    I: IntoIterator<Item = Element>,
{
    let mut s = DiscreteFixedTau::new(ell, tau, hasher, source)?;
    for elem in stream {
        s.push(elem)?;
    }
    Ok(s.finish())
}

/// Run fixed-size sampling over a whole stream.
pub fn sample_fixed_k_discrete<I>(
    stream: I,
    ell: Ell,
    k: usize,
    hasher: KeyHasher,
    source: &RandomSource,
) -> Result<DiscreteSample>
where
    I: IntoIterator<Item = Element>,
{
    let mut s = DiscreteFixedK::new(ell, k, hasher, source)?;
    for elem in stream {
        s.push(elem)?;
    }
    Ok(s.finish())
}
