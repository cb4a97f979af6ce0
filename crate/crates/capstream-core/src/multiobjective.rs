//! Multi-objective coordinated samples: one union sample that serves every
//! cap parameter in a set L.
//!
//! Coordination gives each key two random variables, h = Hash(x) and
//! y ~ Exp(w_x) (the minimum of its elements' exponential draws, shared with
//! the continuous two-pass scoring).  The seed for cap parameter l is h/l
//! when y <= 1/l and y otherwise, so membership in the fixed-k sample S_l
//! holds on a contiguous interval of l and the union S_L stays near
//! k ln(number of active keys) even for L = (0, infinity).
//!
//! Estimation is two-pass: each sampled key gets the probability that it
//! enters at least one S_l (a union of origin-anchored rectangles in the
//! (y, h) plane), and the estimator is inverse-probability over S_L.

use crate::error::{Error, Result};
use crate::random::{exp_from_unit, FastMap, KeyHasher};
use crate::twopass::coordinated_unit;
use crate::types::{Element, FrequencyFunction, Key, SegmentPredicate, Threshold};
use std::collections::BTreeMap;

/// The set L of cap parameters a multi-objective sample covers.
#[derive(Clone, Debug, PartialEq)]
pub enum CapSet {
    /// Finite list of cap parameters (typically a geometric grid).
    Grid(Vec<f64>),
    /// The full interval (0, infinity): every cap parameter at once.
    AllPositive,
}

impl CapSet {
    pub fn geometric(base: f64, factor: f64, count: usize) -> Result<CapSet> {
        if count == 0 {
            return Err(Error::EmptyCapSet);
        }
        let mut caps = Vec::with_capacity(count);
        let mut v = base;
        for _ in 0..count {
            caps.push(v);
            v *= factor;
        }
        Ok(CapSet::Grid(caps))
    }
}

impl std::fmt::Display for CapSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CapSet::Grid(caps) => {
                let list: Vec<String> = caps.iter().map(|c| c.to_string()).collect();
                write!(f, "{}", list.join(","))
            }
            CapSet::AllPositive => write!(f, "interval"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiSampleEntry {
    pub weight: f64,
    /// Probability that the key enters at least one per-l sample, fixing the
    /// randomization of all other keys.
    pub phi: f64,
}

/// One materialized grid point: its threshold and the k+1 smallest seeds,
/// enough to answer leave-one-out threshold queries in O(1).
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub ell: f64,
    pub tau: Threshold,
    bottom: Vec<(f64, Key)>,
    k: usize,
}

impl GridPoint {
    /// Keys of the fixed-k sample at this grid point.
    pub fn sample_keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.bottom.iter().take(self.k).map(|&(_, k)| k)
    }

    /// k-th smallest seed among all keys other than `key`.
    pub fn threshold_without(&self, key: Key) -> Threshold {
        // excluding a sampled key shifts the (k+1)-st seed into k-th place;
        // excluding anything else leaves the k-th seed where it was
        let in_sample = self.bottom.iter().take(self.k).any(|&(_, k)| k == key);
        let idx = if in_sample { self.k } else { self.k - 1 };
        match self.bottom.get(idx) {
            Some(&(seed, _)) => Threshold::Finite(seed),
            None => Threshold::Infinite,
        }
    }
}

/// Union sample over a cap-parameter set, with exact weights and inclusion
/// probabilities per sampled key.
#[derive(Clone, Debug)]
pub struct MultiSample {
    pub k: usize,
    pub caps: CapSet,
    pub entries: BTreeMap<Key, MultiSampleEntry>,
    /// Materialized per-l structure (grid sets only).
    pub grid: Vec<GridPoint>,
}

impl MultiSample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Coordinated per-key randomization, derived from the two-pass scoring
/// contract: h = Hash(x) and y = min over the key's elements of their
/// exponential draws, so y ~ Exp[w_x].
fn coordinate_keys(elements: &[Element], hasher: &KeyHasher) -> Result<FastMap<(f64, f64, f64)>> {
    let mut ordinals: FastMap<u64> = FastMap::default();
    let mut keys: FastMap<(f64, f64, f64)> = FastMap::default(); // w, y, h
    for e in elements {
        if !(e.weight > 0.0) || !e.weight.is_finite() {
            return Err(Error::InvalidWeight(e.weight));
        }
        let ord = ordinals.entry(e.key).or_insert(0);
        *ord += 1;
        let v = exp_from_unit(coordinated_unit(hasher.seed(), e.key, *ord), e.weight);
        let entry = keys
            .entry(e.key)
            .or_insert_with(|| (0.0, f64::INFINITY, hasher.unit(e.key)));
        entry.0 += e.weight;
        entry.1 = entry.1.min(v);
    }
    Ok(keys)
}

#[inline]
fn seed_for(ell: f64, y: f64, h: f64) -> f64 {
    if y <= 1.0 / ell {
        h / ell
    } else {
        y
    }
}

/// Rectangle for one cap parameter: the key is in S_l iff y < Y and h < H.
#[inline]
fn rectangle(ell: f64, tau_without: Threshold) -> (f64, f64) {
    match tau_without {
        Threshold::Infinite => (f64::INFINITY, 1.0),
        Threshold::Finite(t) => (t.max(1.0 / ell), (ell * t).min(1.0)),
    }
}

/// Probability over (y ~ Exp(w), h ~ U(0,1)) of the union of origin-anchored
/// rectangles [0,Y) x [0,H): sort by Y descending, sweep with the running
/// maximum of H.
pub fn rect_union_probability(w: f64, rects: &[(f64, f64)]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = rects.to_vec();
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let cdf = |y: f64| -> f64 { -(-w * y).exp_m1() };
    let mut total = 0.0;
    let mut h_run: f64 = 0.0;
    for i in 0..sorted.len() {
        h_run = h_run.max(sorted[i].1);
        let y_next = sorted.get(i + 1).map(|r| r.0).unwrap_or(0.0);
        total += (cdf(sorted[i].0) - cdf(y_next)) * h_run;
    }
    total
}

/// Build the union sample over an (unaggregated) element stream with exact
/// weights taken from full aggregation, i.e. the two-pass setting.
pub fn build_multi_sample(
    elements: &[Element],
    k: usize,
    caps: &CapSet,
    hasher: &KeyHasher,
) -> Result<MultiSample> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if let CapSet::Grid(list) = caps {
        if list.is_empty() {
            return Err(Error::EmptyCapSet);
        }
        if list.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(
                "cap parameters must be positive".into(),
            ));
        }
    }
    let keys = coordinate_keys(elements, hasher)?;
    match caps {
        CapSet::Grid(list) => build_grid(&keys, k, list, caps),
        CapSet::AllPositive => build_interval(&keys, k, caps),
    }
}

fn build_grid(
    keys: &FastMap<(f64, f64, f64)>,
    k: usize,
    list: &[f64],
    caps: &CapSet,
) -> Result<MultiSample> {
    let mut ells: Vec<f64> = list.to_vec();
    ells.sort_unstable_by(|a, b| b.total_cmp(a));
    ells.dedup();
    let mut grid = Vec::with_capacity(ells.len());
    for &ell in &ells {
        let mut seeds: Vec<(f64, Key)> = keys
            .iter()
            .map(|(&key, &(_, y, h))| (seed_for(ell, y, h), key))
            .collect();
        seeds.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        seeds.truncate(k + 1);
        let tau = if seeds.len() > k {
            Threshold::Finite(seeds[k].0)
        } else {
            Threshold::Infinite
        };
        grid.push(GridPoint {
            ell,
            tau,
            bottom: seeds,
            k,
        });
    }
    let mut union: Vec<Key> = grid.iter().flat_map(|g| g.sample_keys()).collect();
    union.sort_unstable();
    union.dedup();
    let mut entries = BTreeMap::new();
    for key in union {
        let (w, _, _) = keys[&key];
        let rects: Vec<(f64, f64)> = grid
            .iter()
            .map(|g| rectangle(g.ell, g.threshold_without(key)))
            .collect();
        let phi = rect_union_probability(w, &rects);
        assert!(
            phi > 0.0,
            "sampled key {key} has zero inclusion probability"
        );
        entries.insert(key, MultiSampleEntry { weight: w, phi });
    }
    Ok(MultiSample {
        k,
        caps: caps.clone(),
        entries,
        grid,
    })
}

fn build_interval(keys: &FastMap<(f64, f64, f64)>, k: usize, caps: &CapSet) -> Result<MultiSample> {
    // keys in increasing y order; S_L membership is decided when a key joins
    // the prefix (its h must be among the k smallest so far) or by being in
    // the first k of the order
    let mut order: Vec<(f64, f64, Key, f64)> = keys
        .iter()
        .map(|(&key, &(w, y, h))| (y, h, key, w))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

    let mut member: Vec<Key> = Vec::new();
    {
        // max-heap over the k smallest h values seen so far
        let mut heap: std::collections::BinaryHeap<(OrdF64, Key)> =
            std::collections::BinaryHeap::new();
        for (i, &(_, h, key, _)) in order.iter().enumerate() {
            if i < k {
                member.push(key);
                heap.push((OrdF64(h), key));
            } else if h < heap.peek().unwrap().0 .0 {
                member.push(key);
                heap.pop();
                heap.push((OrdF64(h), key));
            }
        }
    }

    let mut entries = BTreeMap::new();
    for &key in &member {
        let (w, _, _) = keys[&key];
        let rects = interval_rectangles(&order, k, key);
        let phi = rect_union_probability(w, &rects);
        assert!(
            phi > 0.0,
            "sampled key {key} has zero inclusion probability"
        );
        entries.insert(key, MultiSampleEntry { weight: w, phi });
    }
    Ok(MultiSample {
        k,
        caps: caps.clone(),
        entries,
        grid: Vec::new(),
    })
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Leave-one-out rectangles for the interval L = (0, infinity).
///
/// With the other keys in increasing y order, the k-th smallest seed as a
/// function of t = 1/l is constant (the k-th smallest y) while fewer than k
/// others have y <= t, and afterwards is H_j * t where H_j is the k-th
/// smallest hash among the first j others.  Each constant-H stretch
/// contributes one dominant rectangle, evaluated at its largest t.
fn interval_rectangles(order: &[(f64, f64, Key, f64)], k: usize, exclude: Key) -> Vec<(f64, f64)> {
    let mut rects = Vec::new();
    let mut heap: std::collections::BinaryHeap<OrdF64> = std::collections::BinaryHeap::new();
    let mut kth_y = None;
    let mut current_h: Option<f64> = None;
    let mut seen = 0usize;
    for &(y, h, key, _) in order.iter().filter(|&&(_, _, key, _)| key != exclude) {
        seen += 1;
        if seen <= k {
            heap.push(OrdF64(h));
            if seen == k {
                kth_y = Some(y);
                current_h = Some(heap.peek().unwrap().0);
            }
            continue;
        }
        let top = heap.peek().unwrap().0;
        if h < top {
            // H is about to drop: close the stretch at this key's y
            rects.push((y, current_h.unwrap()));
            heap.pop();
            heap.push(OrdF64(h));
            current_h = Some(heap.peek().unwrap().0);
        }
        let _ = key;
    }
    match (kth_y, current_h) {
        (Some(y), Some(h)) => {
            // membership for the largest l values: y below the k-th smallest y
            rects.push((y, 1.0));
            // membership as l -> 0: h among the k smallest hashes overall
            rects.push((f64::INFINITY, h));
        }
        _ => {
            // fewer than k other keys: always sampled
            rects.push((f64::INFINITY, 1.0));
        }
    }
    rects
}

/// Inverse-probability estimate over the union sample.
pub fn estimate_multi(
    sample: &MultiSample,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
) -> f64 {
    sample
        .entries
        .iter()
        .filter(|(key, _)| segment.contains(**key))
        .map(|(_, e)| f.value(e.weight) / e.phi)
        .sum()
}
