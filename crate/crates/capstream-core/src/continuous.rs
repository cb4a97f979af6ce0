//! Continuous capped sample-and-hold for arbitrary positive element weights.
//!
//! Each key has a base hash KeyBase(x) = Hash(x)/l.  An element (x, w) draws
//! v ~ Exp(w) and scores KeyBase(x) if v <= 1/l, else v; the key seed is the
//! minimum element score.  The fixed-size sampler never stores seeds: the
//! current threshold captures them implicitly, and an eviction re-simulates
//! the threshold decrease needed to push one key (or a batch) out, adjusting
//! the surviving counters accordingly.

use crate::error::{Error, Result};
use crate::random::{exp_from_unit, FastMap, KeyHasher, RandomSource, UnitStream};
use crate::types::{Element, Key, Threshold};
use std::collections::BTreeMap;

const TAG_ELEMENT: u64 = 0xc011;
const TAG_EVICT_U: u64 = 0xc0e1;
const TAG_EVICT_R: u64 = 0xc0e2;

/// KeyBase(x) = Hash(x)/l, uniform on [0, 1/l).  Recomputed on demand rather
/// than stored.
#[inline]
pub fn key_base(hasher: &KeyHasher, ell: f64, key: Key) -> f64 {
    hasher.unit(key) / ell
}

/// Element score: v ~ Exp(w) (realized from `u`), replaced by the key base
/// when it falls at or below 1/l.
pub fn score_element_continuous(hasher: &KeyHasher, ell: f64, key: Key, w: f64, u: f64) -> f64 {
    let v = exp_from_unit(u, w);
    if v <= 1.0 / ell {
        key_base(hasher, ell, key)
    } else {
        v
    }
}

/// Output of the continuous samplers: cached keys with partial counts in
/// (0, w_x], plus the final threshold (infinite if a fixed-size cache never
/// filled).
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSample {
    pub ell: f64,
    pub tau: Threshold,
    pub k: Option<usize>,
    pub entries: BTreeMap<Key, f64>,
}

fn validate_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ell must be positive and finite, got {ell}"
        )));
    }
    Ok(())
}

/// Fixed-threshold sampler.  An uncached element (x, w) draws
/// Delta ~ Exp[max(tau, 1/l)] and is admitted iff Delta < w and
/// KeyBase(x) < min(tau, 1/l); the counter starts at w - Delta and cached
/// keys accumulate their full weights.
pub struct ContinuousFixedTau {
    ell: f64,
    tau: f64,
    hasher: KeyHasher,
    draws: UnitStream,
    counts: FastMap<f64>,
}

impl ContinuousFixedTau {
    pub fn new(ell: f64, tau: f64, hasher: KeyHasher, source: &RandomSource) -> Result<Self> {
        validate_ell(ell)?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        Ok(ContinuousFixedTau {
            ell,
            tau,
            hasher,
            draws: source.stream(TAG_ELEMENT),
            counts: FastMap::default(),
        })
    }

    pub fn push(&mut self, elem: Element) -> Result<()> {
        if !(elem.weight > 0.0) || !elem.weight.is_finite() {
            return Err(Error::InvalidWeight(elem.weight));
        }
        if let Some(c) = self.counts.get_mut(&elem.key) {
            *c += elem.weight;
            return Ok(());
        }
        let rate = self.tau.max(1.0 / self.ell);
        let delta = exp_from_unit(self.draws.next_unit(), rate);
        if delta < elem.weight
            && key_base(&self.hasher, self.ell, elem.key) < self.tau.min(1.0 / self.ell)
        {
            self.counts.insert(elem.key, elem.weight - delta);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn finish(self) -> ContinuousSample {
        ContinuousSample {
            ell: self.ell,
            tau: Threshold::Finite(self.tau),
            k: None,
            entries: self.counts.into_iter().collect(),
        }
    }
}

/// Fixed-size sampler with simulated threshold decrease.
///
/// The threshold starts at infinity (everything admitted with its full
/// weight).  On overflow, per-key randomization (u_x, r_x) determines the
/// eviction threshold z_x of every cached key; the new threshold is the
/// largest z (or the ceil(delta*k)-th largest in batch mode), keys at or
/// above it leave, and surviving counters shrink as if the run had used the
/// lower threshold all along.  Once tau*l drops to 1 or below the scheme
/// degenerates to distinct sampling on key bases.
pub struct ContinuousFixedK {
    ell: f64,
    k: usize,
    batch_fraction: f64,
    tau: Threshold,
    hasher: KeyHasher,
    source: RandomSource,
    draws: UnitStream,
    counts: FastMap<f64>,
    eviction_events: u64,
    eviction_passes: u64,
}

impl ContinuousFixedK {
    pub fn new(ell: f64, k: usize, hasher: KeyHasher, source: &RandomSource) -> Result<Self> {
        Self::with_batch_eviction(ell, k, 0.0, hasher, source)
    }

    /// `batch_fraction` delta in [0,1): evict ceil(delta*k) keys per pass
    /// instead of one.  Zero evicts one key at a time.
    pub fn with_batch_eviction(
        ell: f64,
        k: usize,
        batch_fraction: f64,
        hasher: KeyHasher,
        source: &RandomSource,
    ) -> Result<Self> {
        validate_ell(ell)?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&batch_fraction) {
            return Err(Error::InvalidParameter(format!(
                "batch eviction fraction must be in [0,1), got {batch_fraction}"
            )));
        }
        Ok(ContinuousFixedK {
            ell,
            k,
            batch_fraction,
            tau: Threshold::Infinite,
            hasher,
            source: *source,
            draws: source.stream(TAG_ELEMENT),
            counts: FastMap::default(),
            eviction_events: 0,
            eviction_passes: 0,
        })
    }

    pub fn tau(&self) -> Threshold {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of eviction passes performed so far (each pass scans the cache).
    pub fn eviction_passes(&self) -> u64 {
        self.eviction_passes
    }

    pub fn push(&mut self, elem: Element) -> Result<()> {
        if !(elem.weight > 0.0) || !elem.weight.is_finite() {
            return Err(Error::InvalidWeight(elem.weight));
        }
        if let Some(c) = self.counts.get_mut(&elem.key) {
            *c += elem.weight;
            return Ok(());
        }
        let admitted = match self.tau {
            // Exp[max(1/l, inf)] is identically zero: everything enters
            Threshold::Infinite => {
                self.counts.insert(elem.key, elem.weight);
                true
            }
            Threshold::Finite(tau) => {
                let delta = exp_from_unit(self.draws.next_unit(), tau.max(1.0 / self.ell));
                if delta < elem.weight
                    && (tau * self.ell > 1.0 || key_base(&self.hasher, self.ell, elem.key) < tau)
                {
                    self.counts.insert(elem.key, elem.weight - delta);
                    true
                } else {
                    false
                }
            }
        };
        if admitted && self.counts.len() > self.k {
            self.evict();
        }
        Ok(())
    }

    fn evict(&mut self) {
        self.eviction_passes += 1;
        let batch = ((self.batch_fraction * self.k as f64).ceil() as usize).max(1);
        let in_distinct_regime = match self.tau {
            Threshold::Infinite => false,
            Threshold::Finite(t) => t * self.ell <= 1.0,
        };
        if in_distinct_regime {
            // distinct sampling: pop the largest key bases, no adjustment
            let mut bases: Vec<(f64, Key)> = self
                .counts
                .keys()
                .map(|&key| (key_base(&self.hasher, self.ell, key), key))
                .collect();
            bases.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            let cutoff = bases[batch - 1].0;
            for &(_, key) in &bases[..batch] {
                self.counts.remove(&key);
            }
            self.tau = Threshold::Finite(cutoff);
            return;
        }

        let event = self.eviction_events;
        self.eviction_events += 1;
        struct Draw {
            key: Key,
            z: f64,
            u: f64,
            r: f64,
        }
        let mut draws: Vec<Draw> = Vec::with_capacity(self.counts.len());
        for (&key, &count) in &self.counts {
            let u = self.source.unit_at(TAG_EVICT_U, event, key);
            let r = self.source.unit_at(TAG_EVICT_R, event, key);
            let candidate = exp_from_unit(r, count);
            let mut z = match self.tau {
                Threshold::Infinite => candidate,
                Threshold::Finite(t) => candidate.min(t * u),
            };
            if z <= 1.0 / self.ell {
                z = key_base(&self.hasher, self.ell, key);
            }
            draws.push(Draw { key, z, u, r });
        }
        // descending by (z, key); the first `batch` entries leave
        draws.sort_unstable_by(|a, b| b.z.total_cmp(&a.z).then(b.key.cmp(&a.key)));
        let new_tau = draws[batch - 1].z;
        for d in &draws[..batch] {
            self.counts.remove(&d.key);
        }
        // survivors: counters adjust as if sampled at the lower threshold
        let old_tau = self.tau;
        let adj_rate = new_tau.max(1.0 / self.ell);
        for d in &draws[batch..] {
            let adjust = match old_tau {
                Threshold::Infinite => true,
                Threshold::Finite(t) => d.u > adj_rate / t,
            };
            if adjust {
                let c = self.counts.get_mut(&d.key).unwrap();
                *c -= exp_from_unit(d.r, adj_rate);
                assert!(
                    *c > 0.0,
                    "surviving counter for key {} went non-positive",
                    d.key
                );
            }
        }
        self.tau = Threshold::Finite(new_tau);
    }

    pub fn finish(self) -> ContinuousSample {
        ContinuousSample {
            ell: self.ell,
            tau: self.tau,
            k: Some(self.k),
            entries: self.counts.into_iter().collect(),
        }
    }
}

pub fn sample_fixed_tau_continuous<I>(
    stream: I,
    ell: f64,
    tau: f64,
    hasher: KeyHasher,
    source: &RandomSource,
) -> Result<ContinuousSample>
where
    I: IntoIterator<Item = Element>,
{
    let mut s = ContinuousFixedTau::new(ell, tau, hasher, source)?;
    for elem in stream {
        s.push(elem)?;
    }
    Ok(s.finish())
}

pub fn sample_fixed_k_continuous<I>(
    stream: I,
    ell: f64,
    k: usize,
    hasher: KeyHasher,
    source: &RandomSource,
) -> Result<ContinuousSample>
where
    I: IntoIterator<Item = Element>,
{
    let mut s = ContinuousFixedK::new(ell, k, hasher, source)?;
    for elem in stream {
        s.push(elem)?;
    }
    Ok(s.finish())
}
