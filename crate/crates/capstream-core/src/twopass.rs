//! Two-pass sampling with mergeable per-shard summaries.
//!
//! Pass I identifies the sampled keys from per-key minimum element scores;
//! pass II accumulates exact weights for exactly those keys.  Both summaries
//! merge (min for seeds, addition for weights), so the passes can run
//! sharded or distributed.
//!
//! Element scores here are pure functions of (hash seed, key, ordinal of the
//! element within its key), not of stream position: that is what makes a
//! sharded run reproduce the unsharded summary bit for bit when all elements
//! of a key live on one shard.  The draws remain independent across (key,
//! ordinal) pairs, so the sampled-key distribution is the same as the
//! one-pass samplers'.

use crate::error::{Error, Result};
use crate::random::{mix4, unit_from_bits, FastMap, KeyHasher};
use crate::types::{Element, Ell, Key, Threshold};
use std::collections::BTreeMap;

const TAG_TP_DRAW: u64 = 0x7b07;

/// Scoring scheme shared by pass I and the coordinated samplers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    Discrete(Ell),
    Continuous(f64),
}

impl Scheme {
    fn score_sup(&self) -> Threshold {
        match self {
            Scheme::Discrete(_) => Threshold::Finite(1.0),
            Scheme::Continuous(_) => Threshold::Infinite,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Discrete(ell) => write!(f, "scheme=d ell={ell}"),
            Scheme::Continuous(ell) => write!(f, "scheme=c ell={ell}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SummaryMode {
    FixedThreshold(f64),
    FixedSize(usize),
}

/// Per-element uniform draw for the two-pass scoring contract.
#[inline]
pub(crate) fn coordinated_unit(hash_seed: u64, key: Key, ordinal: u64) -> f64 {
    unit_from_bits(mix4(hash_seed, TAG_TP_DRAW, key, ordinal))
}

/// Fully evaluated element score for the j-th element (1-based) of a key.
pub fn coordinated_score(
    scheme: Scheme,
    hasher: &KeyHasher,
    key: Key,
    weight: f64,
    ordinal: u64,
) -> f64 {
    let u = coordinated_unit(hasher.seed(), key, ordinal);
    match scheme {
        Scheme::Discrete(ell) => crate::discrete::score_element_discrete(hasher, ell, key, u),
        Scheme::Continuous(ell) => {
            crate::continuous::score_element_continuous(hasher, ell, key, weight, u)
        }
    }
}

/// Pass-I result: sampled keys with their minimum element scores, plus the
/// threshold (for fixed-size: the (k+1)-st smallest seed, or the score
/// supremum while fewer than k+1 keys exist).
#[derive(Clone, Debug, PartialEq)]
pub struct PassOneSummary {
    pub scheme: Scheme,
    pub mode: SummaryMode,
    pub hash_seed: u64,
    pub entries: BTreeMap<Key, f64>,
    pub tau: Threshold,
}

impl PassOneSummary {
    pub fn sampled_keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.entries.keys().copied()
    }

    /// Merge two shard summaries into the summary of the union of their
    /// inputs.  Commutative and associative; the empty summary is the
    /// identity.
    pub fn merge(&self, other: &PassOneSummary) -> Result<PassOneSummary> {
        if self.scheme != other.scheme {
            return Err(Error::MergeMismatch("scheme".into()));
        }
        if self.mode != other.mode {
            return Err(Error::MergeMismatch("mode".into()));
        }
        if self.hash_seed != other.hash_seed {
            return Err(Error::MergeMismatch("hash seed".into()));
        }
        let mut entries = self.entries.clone();
        for (&key, &seed) in &other.entries {
            entries
                .entry(key)
                .and_modify(|s| *s = s.min(seed))
                .or_insert(seed);
        }
        match self.mode {
            SummaryMode::FixedThreshold(_) => Ok(PassOneSummary {
                scheme: self.scheme,
                mode: self.mode,
                hash_seed: self.hash_seed,
                entries,
                tau: self.tau,
            }),
            SummaryMode::FixedSize(k) => {
                // pool = union entries plus the dropped (k+1)-st seeds; the
                // merged bottom-k and threshold are read off the sorted pool
                let mut pool: Vec<(f64, bool, Key)> = entries
                    .iter()
                    .map(|(&key, &seed)| (seed, false, key))
                    .collect();
                for t in [self.tau, other.tau] {
                    if let Threshold::Finite(t) = t {
                        pool.push((t, true, Key::MAX));
                    }
                }
                pool.sort_unstable_by(|a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                });
                let tau = if pool.len() > k {
                    Threshold::Finite(pool[k].0)
                } else {
                    self.scheme.score_sup()
                };
                let kept: BTreeMap<Key, f64> = pool
                    .into_iter()
                    .take(k)
                    .filter(|(_, marker, _)| !marker)
                    .map(|(seed, _, key)| (key, seed))
                    .collect();
                Ok(PassOneSummary {
                    scheme: self.scheme,
                    mode: self.mode,
                    hash_seed: self.hash_seed,
                    entries: kept,
                    tau,
                })
            }
        }
    }
}

/// Streaming builder for pass I.
///
/// Fixed-size mode internally tracks the k+1 keys with smallest current
/// minimum seeds (the extra slot carries the threshold); a key whose seed
/// drops later re-enters through the admission bound, so the final state is
/// exactly the bottom-(k+1) of the fully evaluated seeds.
pub struct PassOneBuilder {
    scheme: Scheme,
    mode: SummaryMode,
    hasher: KeyHasher,
    ordinals: FastMap<u64>,
    entries: FastMap<f64>,
    // fixed-size admission bound: pairs at or above it can never matter
    bound: Option<(f64, Key)>,
}

impl PassOneBuilder {
    pub fn new(scheme: Scheme, mode: SummaryMode, hasher: KeyHasher) -> Result<Self> {
        match scheme {
            Scheme::Discrete(ell) => ell.validate()?,
            Scheme::Continuous(ell) => {
                if !(ell > 0.0) || !ell.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "ell must be positive and finite, got {ell}"
                    )));
                }
            }
        }
        match mode {
            SummaryMode::FixedThreshold(tau) if !(tau > 0.0) => {
                return Err(Error::InvalidParameter(format!(
                    "tau must be positive, got {tau}"
                )));
            }
            SummaryMode::FixedSize(0) => {
                return Err(Error::InvalidParameter("k must be >= 1".into()));
            }
            _ => {}
        }
        Ok(PassOneBuilder {
            scheme,
            mode,
            hasher,
            ordinals: FastMap::default(),
            entries: FastMap::default(),
            bound: None,
        })
    }

    pub fn push(&mut self, elem: Element) -> Result<()> {
        if !(elem.weight > 0.0) || !elem.weight.is_finite() {
            return Err(Error::InvalidWeight(elem.weight));
        }
        if let (Scheme::Discrete(_), true) = (self.scheme, elem.weight != 1.0) {
            return Err(Error::NonUnitWeight(elem.weight));
        }
        let ordinal = {
            let c = self.ordinals.entry(elem.key).or_insert(0);
            *c += 1;
            *c
        };
        let score = coordinated_score(self.scheme, &self.hasher, elem.key, elem.weight, ordinal);
        match self.mode {
            SummaryMode::FixedThreshold(tau) => {
                if score < tau {
                    self.entries
                        .entry(elem.key)
                        .and_modify(|s| *s = s.min(score))
                        .or_insert(score);
                }
            }
            SummaryMode::FixedSize(k) => {
                if let Some(existing) = self.entries.get_mut(&elem.key) {
                    if score < *existing {
                        *existing = score;
                    }
                    return Ok(());
                }
                if let Some(bound) = self.bound {
                    if (score, elem.key) >= bound {
                        return Ok(());
                    }
                }
                self.entries.insert(elem.key, score);
                if self.entries.len() > k + 1 {
                    let worst = self
                        .entries
                        .iter()
                        .map(|(&key, &seed)| (seed, key))
                        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                        .unwrap();
                    self.entries.remove(&worst.1);
                    self.bound = Some(worst);
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> PassOneSummary {
        match self.mode {
            SummaryMode::FixedThreshold(tau) => PassOneSummary {
                scheme: self.scheme,
                mode: self.mode,
                hash_seed: self.hasher.seed(),
                entries: self.entries.into_iter().collect(),
                tau: Threshold::Finite(tau),
            },
            SummaryMode::FixedSize(k) => {
                let mut sorted: Vec<(f64, Key)> = self
                    .entries
                    .into_iter()
                    .map(|(key, seed)| (seed, key))
                    .collect();
                sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let tau = if sorted.len() > k {
                    Threshold::Finite(sorted[k].0)
                } else {
                    self.scheme.score_sup()
                };
                PassOneSummary {
                    scheme: self.scheme,
                    mode: self.mode,
                    hash_seed: self.hasher.seed(),
                    entries: sorted
                        .into_iter()
                        .take(k)
                        .map(|(seed, key)| (key, seed))
                        .collect(),
                    tau,
                }
            }
        }
    }
}

/// Pass-II result: exact accumulated weight per sampled key.
#[derive(Clone, Debug, PartialEq)]
pub struct PassTwoSummary {
    pub weights: BTreeMap<Key, f64>,
}

impl PassTwoSummary {
    /// Key-wise addition of weights.
    pub fn merge(&self, other: &PassTwoSummary) -> PassTwoSummary {
        let mut weights = self.weights.clone();
        for (&key, &w) in &other.weights {
            *weights.entry(key).or_insert(0.0) += w;
        }
        PassTwoSummary { weights }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Key, f64)> + '_ {
        self.weights.iter().map(|(&k, &w)| (k, w))
    }
}

/// Accumulate exact weights over a stream, restricted to pass-I keys.
pub fn pass_two<I>(stream: I, sampled: &PassOneSummary) -> Result<PassTwoSummary>
where
    I: IntoIterator<Item = Element>,
{
    let mut weights: BTreeMap<Key, f64> = sampled.sampled_keys().map(|k| (k, 0.0)).collect();
    for elem in stream {
        if !(elem.weight > 0.0) || !elem.weight.is_finite() {
            return Err(Error::InvalidWeight(elem.weight));
        }
        if let Some(w) = weights.get_mut(&elem.key) {
            *w += elem.weight;
        }
    }
    Ok(PassTwoSummary { weights })
}

/// Run pass I over a whole stream.
pub fn pass_one<I>(
    stream: I,
    scheme: Scheme,
    mode: SummaryMode,
    hasher: KeyHasher,
) -> Result<PassOneSummary>
where
    I: IntoIterator<Item = Element>,
{
    let mut b = PassOneBuilder::new(scheme, mode, hasher)?;
    for elem in stream {
        b.push(elem)?;
    }
    Ok(b.finish())
}
