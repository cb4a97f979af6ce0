//! Domain types shared by all samplers and estimators.

use crate::error::{Error, Result};
use crate::random::{FastSet, KeyHasher};

/// Canonical 64-bit key identifier.  Arbitrary byte-string keys are mapped to
/// this space at ingest ([`KeyHasher::canonicalize`]); collisions are ignored
/// at the scales this crate targets.
pub type Key = u64;

/// One stream record: a key and a positive weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Element {
    pub key: Key,
    pub weight: f64,
}

impl Element {
    pub fn new(key: Key, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidWeight(weight));
        }
        Ok(Element { key, weight })
    }

    /// Unit-weight element, as required by the discrete samplers.
    pub fn unit(key: Key) -> Self {
        Element { key, weight: 1.0 }
    }
}

/// Aggregated view of one key: its total weight over all elements.
/// `weight == 0` encodes an inactive key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyRecord {
    pub key: Key,
    pub weight: f64,
}

/// The discrete cap parameter: an integer >= 1, or infinity (classic
/// sample-and-hold).  Infinity is a distinct variant rather than a large
/// integer so its scoring path can skip bucket hashing entirely.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ell {
    Finite(u64),
    Infinite,
}

impl Ell {
    pub fn validate(&self) -> Result<()> {
        match self {
            Ell::Finite(0) => Err(Error::InvalidParameter("ell must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Ell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ell::Finite(l) => write!(f, "{l}"),
            Ell::Infinite => write!(f, "inf"),
        }
    }
}

/// A sampling threshold that may not have become finite yet (fixed-size
/// continuous samples start at infinity).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Finite(f64),
    Infinite,
}

impl Threshold {
    pub fn as_f64(&self) -> f64 {
        match self {
            Threshold::Finite(t) => *t,
            Threshold::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Threshold::Finite(_))
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Finite(t) => write!(f, "{t}"),
            Threshold::Infinite => write!(f, "inf"),
        }
    }
}

/// The statistic f applied to key weights.  All built-ins satisfy f(0) = 0 and
/// are nonnegative and monotone non-decreasing.
///
/// The discrete estimation path evaluates f at integers; the continuous path
/// additionally needs a derivative, defined almost everywhere.  Custom tables
/// carry integer values only and are rejected by the continuous path.
#[derive(Clone, Debug, PartialEq)]
pub enum FrequencyFunction {
    /// cap_T(y) = min{y, T}.
    Cap(f64),
    /// y^p for p > 0.
    Moment(f64),
    /// Number of active keys; identical to cap_1 under unit weights.
    Distinct,
    /// Identity (sum of weights); cap_infinity.
    Sum,
    /// Tabled values f(0), f(1), ...; f(0) must be 0.  Arguments past the end
    /// of the table evaluate to the last entry.
    Table(Vec<f64>),
}

impl FrequencyFunction {
    pub fn cap(t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cap parameter must be positive, got {t}"
            )));
        }
        Ok(FrequencyFunction::Cap(t))
    }

    pub fn moment(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moment exponent must be positive, got {p}"
            )));
        }
        Ok(FrequencyFunction::Moment(p))
    }

    /// f(w) for a real argument w >= 0.  Total: returns 0 at w = 0.
    pub fn value(&self, w: f64) -> f64 {
        debug_assert!(w >= 0.0);
        if w == 0.0 {
            return 0.0;
        }
        match self {
            FrequencyFunction::Cap(t) => w.min(*t),
            FrequencyFunction::Moment(p) => w.powf(*p),
            FrequencyFunction::Distinct => w.min(1.0),
            FrequencyFunction::Sum => w,
            FrequencyFunction::Table(v) => {
                let i = (w.floor() as usize).min(v.len().saturating_sub(1));
                v.get(i).copied().unwrap_or(0.0)
            }
        }
    }

    /// f(i) on the nonnegative integers (the discrete estimation path).
    pub fn value_at(&self, i: u64) -> f64 {
        self.value(i as f64)
    }

    /// f'(c) for c > 0, defined almost everywhere.  At the kink of a cap
    /// function (c == T) this returns the right derivative 0, matching the
    /// indicator I(c < T) used by the cap estimators.
    pub fn derivative(&self, c: f64) -> Result<f64> {
        debug_assert!(c > 0.0);
        match self {
            FrequencyFunction::Cap(t) => Ok(if c < *t { 1.0 } else { 0.0 }),
            FrequencyFunction::Moment(p) => Ok(p * c.powf(p - 1.0)),
            FrequencyFunction::Distinct => Ok(if c < 1.0 { 1.0 } else { 0.0 }),
            FrequencyFunction::Sum => Ok(1.0),
            FrequencyFunction::Table(_) => Err(Error::NoDerivative),
        }
    }
}

impl std::fmt::Display for FrequencyFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrequencyFunction::Cap(t) => write!(f, "cap:{t}"),
            FrequencyFunction::Moment(p) => write!(f, "moment:{p}"),
            FrequencyFunction::Distinct => write!(f, "distinct"),
            FrequencyFunction::Sum => write!(f, "sum"),
            FrequencyFunction::Table(v) => write!(f, "table:{}", v.len()),
        }
    }
}

/// Selection predicate over the key population.  Membership is deterministic
/// and pure.
#[derive(Clone, Debug)]
pub enum SegmentPredicate {
    All,
    /// Explicit key set (canonical identifiers).
    Keys(FastSet),
    /// Pseudo-random segment: keys whose segment hash falls in [lo, hi).
    HashRange {
        hasher: KeyHasher,
        lo: f64,
        hi: f64,
    },
}

impl SegmentPredicate {
    pub fn keys<I: IntoIterator<Item = Key>>(keys: I) -> Self {
        SegmentPredicate::Keys(keys.into_iter().collect())
    }

    pub fn contains(&self, key: Key) -> bool {
        match self {
            SegmentPredicate::All => true,
            SegmentPredicate::Keys(set) => set.contains(&key),
            SegmentPredicate::HashRange { hasher, lo, hi } => {
                let u = hasher.unit(key);
                *lo <= u && u < *hi
            }
        }
    }
}

impl std::fmt::Display for SegmentPredicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegmentPredicate::All => write!(f, "all"),
            SegmentPredicate::Keys(set) => write!(f, "keys:{}", set.len()),
            SegmentPredicate::HashRange { lo, hi, .. } => write!(f, "hashrange:[{lo},{hi})"),
        }
    }
}
