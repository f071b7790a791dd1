//! Small statistical helpers: empirical CDFs, Kolmogorov–Smirnov statistics
//! and the Dvoretzky–Kiefer–Wolfowitz band.
//!
//! These back the sampler-fidelity checks and the simulator exactness test;
//! they are deliberately independent of the samplers they judge.

/// Sorted empirical sample. Construction rejects NaNs by panicking early.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "empty sample");
        assert!(samples.iter().all(|v| !v.is_nan()), "NaN in sample");
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample that is <= `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.sorted.partition_point(|v| *v <= x);
        idx as f64 / self.sorted.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// One-sample KS statistic `sup_x |F_n(x) - F(x)|` against a reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(ecdf: &Ecdf, cdf: F) -> f64 {
    let n = ecdf.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in ecdf.values().iter().enumerate() {
        let f = cdf(*x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    d
}

/// Asymptotic one-sample KS critical value `c(alpha) / sqrt(n)`;
/// `c = 1.628` at the 99% level.
pub fn ks_critical_99(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Two-sample KS statistic `sup_x |F_n(x) - G_m(x)|` by a merge walk.
/// Ties across the two samples are handled by advancing both sides through
/// the tied value before comparing.
pub fn ks_two_sample(a: &Ecdf, b: &Ecdf) -> f64 {
    let (xs, ys) = (a.values(), b.values());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Two-sample KS critical value at level `alpha`:
/// `c(alpha) * sqrt((n+m)/(n*m))` with `c = sqrt(-ln(alpha/2)/2)`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Half-width of the DKW confidence band at confidence `1 - alpha`:
/// `sqrt(ln(2/alpha) / (2n))`.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Sample median (average of the two middle order statistics for even n).
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile of an unsorted slice, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}
