//! Small statistics helpers: streaming moments and goodness-of-fit utilities
//! used by the simulation harness and the verification suites.

/// Streaming mean/variance accumulator (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divides by n).
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Coefficient of variation: std dev / mean.
    pub fn cv(&self) -> f64 {
        self.std_dev() / self.mean
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n;
        self.mean = mean;
        self.n += other.n;
    }
}

/// One-sample Kolmogorov-Smirnov statistic against an arbitrary CDF.
/// `sorted` must be ascending.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    d
}

/// KS statistic against U[0,1).
pub fn ks_statistic_uniform(sorted: &[f64]) -> f64 {
    ks_statistic(sorted, |x| x.clamp(0.0, 1.0))
}

/// Asymptotic KS critical value at significance `alpha` (two-sided).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    // c(alpha) = sqrt(-ln(alpha/2)/2); 1.6276 at alpha = 0.01
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c / (n as f64).sqrt()
}
