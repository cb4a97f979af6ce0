//! Estimation for discrete capped sample-and-hold.
//!
//! Sampling acts on the count distribution as an upper-triangular Toeplitz
//! transform built from phi, where phi_i is the probability that the i-th
//! element of a key is the first one counted.  Inverting the transform gives
//! psi, and folding a frequency function through psi gives per-count
//! estimation coefficients beta.  The cumulative sum of phi is the inclusion
//! probability used by the two-pass inverse-probability estimator.

use crate::discrete::DiscreteSample;
use crate::error::{Error, Result};
use crate::types::{Ell, FrequencyFunction, Key, SegmentPredicate};
use std::collections::BTreeMap;
use std::io::Write;

/// Probability table `a[i][j-1]` = P(exactly j buckets used by the first i
/// elements of a key], for i = 1..=rows, j = 1..=min(i, ell).
pub fn compute_a_table(ell: u64, rows: usize) -> Vec<Vec<f64>> {
    let lf = ell as f64;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for i in 1..=rows {
        let width = i.min(ell as usize);
        let mut row = vec![0.0; width];
        if i == 1 {
            row[0] = 1.0;
        } else {
            let prev = &table[i - 2];
            for j in 1..=width {
                let stay = prev.get(j - 1).copied().unwrap_or(0.0) * j as f64 / lf;
                let grow = if j >= 2 {
                    prev.get(j - 2).copied().unwrap_or(0.0) * (lf - (j as f64 - 1.0)) / lf
                } else {
                    0.0
                };
                row[j - 1] = stay + grow;
            }
        }
        table.push(row);
    }
    table
}

/// First-counted-element probabilities phi_1..phi_len for the given scheme.
pub fn compute_phi(ell: Ell, tau: f64, len: usize) -> Vec<f64> {
    debug_assert!(tau > 0.0 && tau <= 1.0);
    let mut phi = vec![0.0; len.max(1)];
    phi[0] = tau;
    match ell {
        Ell::Infinite => {
            // classic sample-and-hold: geometric
            let q = 1.0 - tau;
            for i in 1..phi.len() {
                phi[i] = phi[i - 1] * q;
            }
        }
        Ell::Finite(l) => {
            let lf = l as f64;
            // track a_{i,j} for j <= l-1 only; the j = l state is absorbing
            // and contributes nothing to phi
            let cap_j = (l.saturating_sub(1) as usize).min(phi.len());
            let mut row = vec![0.0f64; cap_j];
            if cap_j >= 1 {
                row[0] = 1.0; // a_{1,1}
            }
            let q = 1.0 - tau;
            for i in 2..=phi.len() {
                let hi = (i - 1).min(cap_j);
                let mut s = 0.0;
                let mut qj = 1.0;
                for j in 1..=hi {
                    qj *= q;
                    s += row[j - 1] * qj * (lf - j as f64);
                }
                phi[i - 1] = tau * s / lf;
                // advance row to a_{i,.}, descending so the previous row is
                // read before being overwritten
                for j in (1..=i.min(cap_j)).rev() {
                    let stay = row[j - 1] * j as f64 / lf;
                    let grow = if j >= 2 {
                        row[j - 2] * (lf - (j as f64 - 1.0)) / lf
                    } else {
                        0.0
                    };
                    row[j - 1] = stay + grow;
                }
                if row.iter().sum::<f64>() < 1e-18 {
                    break; // converged to the absorbing state; rest of phi is 0
                }
            }
        }
    }
    phi
}

/// Neumaier-compensated accumulation.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, term: f64) {
        let t = self.sum + term;
        self.comp += if self.sum.abs() >= term.abs() {
            (self.sum - t) + term
        } else {
            (term - t) + self.sum
        };
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Double-double scalar used by the extended-precision fallback when the
/// inverse-identity residual of the plain recurrence is too large.
mod dd {
    #[derive(Clone, Copy, Default)]
    pub struct Dd {
        pub hi: f64,
        pub lo: f64,
    }

    #[inline]
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    #[inline]
    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        let e = a.mul_add(b, -p);
        Dd { hi: p, lo: e }
    }

    impl Dd {
        pub fn from(x: f64) -> Dd {
            Dd { hi: x, lo: 0.0 }
        }

        pub fn add(self, other: Dd) -> Dd {
            let s = two_sum(self.hi, other.hi);
            let lo = s.lo + self.lo + other.lo;
            let r = two_sum(s.hi, lo);
            Dd { hi: r.hi, lo: r.lo }
        }

        pub fn mul_f64(self, x: f64) -> Dd {
            let p = two_prod(self.hi, x);
            let lo = self.lo.mul_add(x, p.lo);
            let r = two_sum(p.hi, lo);
            Dd { hi: r.hi, lo: r.lo }
        }

        pub fn div_f64(self, d: f64) -> Dd {
            let q0 = self.hi / d;
            // remainder = self - q0*d, in double-double
            let p = two_prod(q0, d);
            let r_hi = self.hi - p.hi;
            let r_lo = self.lo - p.lo;
            let q1 = (r_hi + r_lo) / d;
            let r = two_sum(q0, q1);
            Dd { hi: r.hi, lo: r.lo }
        }

        pub fn neg(self) -> Dd {
            Dd {
                hi: -self.hi,
                lo: -self.lo,
            }
        }

        pub fn to_f64(self) -> f64 {
            self.hi + self.lo
        }
    }
}

fn compute_psi_plain(phi: &[f64]) -> Result<Vec<f64>> {
    let phi1 = phi[0];
    if phi1 <= 0.0 {
        return Err(Error::DegenerateThreshold);
    }
    let mut psi = vec![0.0; phi.len()];
    psi[0] = 1.0 / phi1;
    for i in 2..=phi.len() {
        let mut acc = Compensated::default();
        for j in 1..i {
            acc.add(phi[i - j] * psi[j - 1]);
        }
        psi[i - 1] = -acc.value() / phi1;
    }
    Ok(psi)
}

fn compute_psi_extended(phi: &[f64]) -> Result<Vec<f64>> {
    use dd::Dd;
    let phi1 = phi[0];
    if phi1 <= 0.0 {
        return Err(Error::DegenerateThreshold);
    }
    let mut psi = vec![Dd::default(); phi.len()];
    psi[0] = Dd::from(1.0).div_f64(phi1);
    for i in 2..=phi.len() {
        let mut acc = Dd::default();
        for j in 1..i {
            acc = acc.add(psi[j - 1].mul_f64(phi[i - j]));
        }
        psi[i - 1] = acc.neg().div_f64(phi1);
    }
    Ok(psi.into_iter().map(Dd::to_f64).collect())
}

/// Transform inverse psi_1..psi_M for the given phi, solved iteratively from
/// psi_1 = 1/phi_1.  Falls back to extended precision if the residual of the
/// inverse identity exceeds 1e-6.
pub fn compute_psi(phi: &[f64]) -> Result<Vec<f64>> {
    let psi = compute_psi_plain(phi)?;
    if inverse_identity_residual(phi, &psi) > 1e-6 {
        return compute_psi_extended(phi);
    }
    Ok(psi)
}

/// max_n |(psi * phi)_n - [n == 1]| over the leading block: the departure of
/// Y(psi) Y(phi) from the identity.
pub fn inverse_identity_residual(phi: &[f64], psi: &[f64]) -> f64 {
    let m = phi.len().min(psi.len());
    let mut worst: f64 = 0.0;
    for n in 1..=m {
        let mut acc = Compensated::default();
        for j in 1..=n {
            acc.add(psi[j - 1] * phi[n - j]);
        }
        let target = if n == 1 { 1.0 } else { 0.0 };
        worst = worst.max((acc.value() - target).abs());
    }
    worst
}

/// Truncation length M = ceil(min{l (ln l + 10), (1/tau) (ln(1/tau) + 10)}).
/// Entries past M are negligible; callers additionally cap M by the largest
/// index the sample actually needs.
pub fn truncation_len(ell: Ell, tau: f64) -> usize {
    let tau_inv = 1.0 / tau;
    let tau_bound = tau_inv * (tau_inv.ln().max(0.0) + 10.0);
    let bound = match ell {
        Ell::Finite(l) => {
            let lf = l as f64;
            (lf * (lf.ln().max(0.0) + 10.0)).min(tau_bound)
        }
        Ell::Infinite => tau_bound,
    };
    (bound.ceil() as usize).max(1)
}

/// The phi / psi pair for one (ell, tau), with the cumulative inclusion
/// probabilities.  Beta coefficients are materialized on demand for the count
/// values present in a sample.
#[derive(Clone, Debug)]
pub struct DiscreteCoefficients {
    ell: Ell,
    tau: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    phi_cum: Vec<f64>,
}

impl DiscreteCoefficients {
    /// Coefficients long enough to serve indices up to `need` (counts or
    /// weights), subject to the truncation bound.
    pub fn new(ell: Ell, tau: f64, need: usize) -> Result<Self> {
        let len = truncation_len(ell, tau).min(need.max(1));
        Self::with_len(ell, tau, len)
    }

    /// Coefficients of an exact length, ignoring the truncation bound.
    /// Meant for diagnostics and algebraic checks; `new` is the right
    /// constructor for estimation.
    pub fn with_len(ell: Ell, tau: f64, len: usize) -> Result<Self> {
        ell.validate()?;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be in (0,1], got {tau}"
            )));
        }
        let len = len.max(1);
        let phi = compute_phi(ell, tau, len);
        let psi = match ell {
            // closed forms: psi = (1/tau, -(1-tau)/tau, 0, 0, ...)
            Ell::Infinite => {
                let mut psi = vec![0.0; len];
                psi[0] = 1.0 / tau;
                if len > 1 {
                    psi[1] = -(1.0 - tau) / tau;
                }
                psi
            }
            Ell::Finite(_) => compute_psi(&phi)?,
        };
        let mut phi_cum = Vec::with_capacity(len);
        let mut acc = Compensated::default();
        for &p in &phi {
            acc.add(p);
            phi_cum.push(acc.value());
        }
        Ok(DiscreteCoefficients {
            ell,
            tau,
            phi,
            psi,
            phi_cum,
        })
    }

    /// Coefficients sized for a sample, using its reported threshold.
    pub fn for_sample(sample: &DiscreteSample) -> Result<Self> {
        Self::new(sample.ell, sample.tau, sample.max_count() as usize + 1)
    }

    pub fn ell(&self) -> Ell {
        self.ell
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// P[key of weight w is sampled] = sum of the first w entries of phi,
    /// constant past the truncation point.  Zero for w = 0 (inactive key).
    pub fn inclusion_probability(&self, w: u64) -> f64 {
        if w == 0 {
            return 0.0;
        }
        let idx = (w as usize).min(self.phi_cum.len());
        self.phi_cum[idx - 1]
    }

    /// Estimation coefficient beta_c = sum_{j=1}^{min(M,c)} psi_j f(c-j+1).
    pub fn beta(&self, f: &FrequencyFunction, count: u64) -> f64 {
        let hi = (count as usize).min(self.psi.len());
        let mut acc = Compensated::default();
        for j in 1..=hi {
            acc.add(self.psi[j - 1] * f.value_at(count - j as u64 + 1));
        }
        acc.value()
    }

    pub fn inverse_identity_residual(&self) -> f64 {
        inverse_identity_residual(&self.phi, &self.psi)
    }

    /// Debug dump: `i<TAB>phi<TAB>psi<TAB>beta` rows for i = 1..=upto.
    pub fn write_table<W: Write>(
        &self,
        f: &FrequencyFunction,
        upto: u64,
        out: &mut W,
    ) -> Result<()> {
        for i in 1..=upto {
            let idx = i as usize;
            let phi = self.phi.get(idx - 1).copied().unwrap_or(0.0);
            let psi = self.psi.get(idx - 1).copied().unwrap_or(0.0);
            writeln!(out, "{i}\t{phi}\t{psi}\t{}", self.beta(f, i))?;
        }
        Ok(())
    }
}

/// Histogram of observed counts over the sampled keys of a segment: `o[c]` is
/// the number of keys in the sample-segment intersection with count c.
pub fn observed_counts(sample: &DiscreteSample, segment: &SegmentPredicate) -> BTreeMap<u64, u64> {
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    for (key, count) in &sample.entries {
        if segment.contains(*key) {
            *histogram.entry(*count).or_insert(0) += 1;
        }
    }
    histogram
}

/// Streaming estimate: sum of beta over sampled keys in the segment,
/// evaluated once per distinct observed count.
pub fn estimate_1pass_with(
    coefficients: &DiscreteCoefficients,
    sample: &DiscreteSample,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
) -> f64 {
    observed_counts(sample, segment)
        .into_iter()
        .map(|(count, mult)| mult as f64 * coefficients.beta(f, count))
        .sum()
}

/// Streaming estimate of Q(f, H) from a discrete sample.
pub fn estimate_discrete_1pass(
    sample: &DiscreteSample,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
) -> Result<f64> {
    let coefficients = DiscreteCoefficients::for_sample(sample)?;
    Ok(estimate_1pass_with(&coefficients, sample, f, segment))
}

/// Two-pass inverse-probability estimate from exact weights of sampled keys.
pub fn estimate_discrete_2pass<I>(
    pairs: I,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
    coefficients: &DiscreteCoefficients,
) -> Result<f64>
where
    I: IntoIterator<Item = (Key, u64)>,
{
    let mut total = 0.0;
    for (key, w) in pairs {
        if !segment.contains(key) {
            continue;
        }
        let contribution = f.value_at(w);
        if contribution == 0.0 {
            continue;
        }
        let p = coefficients.inclusion_probability(w);
        if p <= 0.0 {
            return Err(Error::ZeroInclusion(w as f64));
        }
        total += contribution / p;
    }
    Ok(total)
}
