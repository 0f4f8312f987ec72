//! Empirical-distribution queries over a residual sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size for point-density estimates.
pub const MIN_DENSITY_SAMPLE: usize = 20;

/// Default number of raw moments summed by [`EmpiricalDistribution::moment_l1_sum`].
pub const DEFAULT_MOMENT_TERMS: u32 = 300;

/// Sorted sample with read-only distribution queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sample: Vec<f64>,
}

/// Result of a point-density query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointDensity {
    Finite(f64),
    /// Zero-spread sample: all mass sits on a single value.
    Spike,
}

impl PointDensity {
    pub fn finite(self) -> Option<f64> {
        match self {
            PointDensity::Finite(v) => Some(v),
            PointDensity::Spike => None,
        }
    }
}

/// `Σ|ν_k|` over `k = 1..=terms`, stopped early if a term leaves the f64 range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSum {
    pub value: f64,
    /// First order that saturated; `value` is the partial sum below it.
    pub truncated_at: Option<u32>,
}

impl EmpiricalDistribution {
    pub fn new(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InsufficientSample { needed: 1, got: 0 });
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        sample.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sample })
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn mean(&self) -> f64 {
        self.sample.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n − 1 denominator; 0 for a single point).
    pub fn std_dev(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    /// Linear-interpolated quantile (type 7).
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.len();
        let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        self.sample[lo] + (h - lo as f64) * (self.sample[hi] - self.sample[lo])
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    /// Right-continuous ECDF: fraction of sample values `<= x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sample.partition_point(|v| *v <= x) as f64 / self.len() as f64
    }

    /// Largest vertical distance between the ECDF and a reference CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.len() as f64;
        self.sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max)
    }

    /// `0.9 · min(sd, IQR/1.34) · N^(-1/5)`; falls back to whichever spread is
    /// nonzero. Zero means the sample is a single repeated value.
    pub fn silverman_bandwidth(&self) -> f64 {
        let sd = self.std_dev();
        let iqr = self.iqr() / 1.34;
        let spread = match (sd > 0.0, iqr > 0.0) {
            (true, true) => sd.min(iqr),
            (true, false) => sd,
            (false, true) => iqr,
            (false, false) => 0.0,
        };
        0.9 * spread * (self.len() as f64).powf(-0.2)
    }

    /// Gaussian-kernel density at `x` with Silverman's bandwidth.
    pub fn density_at(&self, x: f64) -> Result<PointDensity> {
        self.require_density_sample()?;
        let h = self.silverman_bandwidth();
        if h == 0.0 {
            return Ok(PointDensity::Spike);
        }
        Ok(PointDensity::Finite(self.kde_with_bandwidth(x, h)))
    }

    pub fn kde_with_bandwidth(&self, x: f64, h: f64) -> f64 {
        const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
        // Kernel mass beyond 9 bandwidths is below 1e-17 relative.
        let lo = self.sample.partition_point(|v| *v < x - 9.0 * h);
        let hi = self.sample.partition_point(|v| *v <= x + 9.0 * h);
        let s: f64 = self.sample[lo..hi]
            .iter()
            .map(|v| {
                let u = (x - v) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        s * INV_SQRT_2PI / (self.len() as f64 * h)
    }

    /// Histogram estimate at `x`: Freedman–Diaconis bins, heights linearly
    /// interpolated between neighbouring bin centres.
    pub fn density_at_histogram(&self, x: f64) -> Result<PointDensity> {
        self.require_density_sample()?;
        let (lo, hi) = (self.sample[0], self.sample[self.len() - 1]);
        if hi == lo {
            return Ok(PointDensity::Spike);
        }
        let n = self.len() as f64;
        let mut width = 2.0 * self.iqr() * n.powf(-1.0 / 3.0);
        if !(width > 0.0) {
            width = (hi - lo) / n.sqrt().ceil();
        }
        let bins = (((hi - lo) / width).ceil() as usize).max(1);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in &self.sample {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let height = |b: isize| -> f64 {
            if b < 0 || b as usize >= bins {
                0.0
            } else {
                counts[b as usize] as f64 / (n * width)
            }
        };
        let pos = (x - lo) / width - 0.5;
        let left = pos.floor();
        let frac = pos - left;
        let left = left as isize;
        Ok(PointDensity::Finite(
            (1.0 - frac) * height(left) + frac * height(left + 1),
        ))
    }

    fn require_density_sample(&self) -> Result<()> {
        if self.len() < MIN_DENSITY_SAMPLE {
            return Err(Error::InsufficientSample {
                needed: MIN_DENSITY_SAMPLE,
                got: self.len(),
            });
        }
        Ok(())
    }

    /// Empirical mass of `[-kappa, kappa]`, computed as `F(κ) − F(−κ)`.
    pub fn interval_mass(&self, kappa: f64) -> Result<f64> {
        if !(kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
        }
        Ok(self.ecdf(kappa) - self.ecdf(-kappa))
    }

    /// `(1/N) Σ x_i^k`, evaluated as `M^k · mean((x/M)^k)` with `M = max|x|`
    /// so intermediate terms stay in range.
    pub fn raw_moment(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("moment order must be at least 1"));
        }
        let scale = self.sample[0].abs().max(self.sample[self.len() - 1].abs());
        if scale == 0.0 {
            return Ok(0.0);
        }
        let inner = self.sample.iter().map(|x| (x / scale).powi(k as i32)).sum::<f64>() / self.len() as f64;
        if inner == 0.0 {
            return Ok(0.0);
        }
        let log_mag = inner.abs().ln() + k as f64 * scale.ln();
        if log_mag >= f64::MAX.ln() {
            return Err(Error::Saturated { order: k });
        }
        Ok(inner * scale.powi(k as i32))
    }

    /// `Σ_{k=1..terms} |ν_k|`, truncated at the first saturating order.
    pub fn moment_l1_sum(&self, terms: u32) -> Result<MomentSum> {
        if terms == 0 {
            return Err(Error::invalid("moment_l1_sum needs at least one term"));
        }
        let mut value = 0.0;
        for k in 1..=terms {
            match self.raw_moment(k) {
                Ok(v) => {
                    let next = value + v.abs();
                    if !next.is_finite() {
                        return Ok(MomentSum {
                            value,
                            truncated_at: Some(k),
                        });
                    }
                    value = next;
                }
                Err(Error::Saturated { order }) => {
                    return Ok(MomentSum {
                        value,
                        truncated_at: Some(order),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(MomentSum {
            value,
            truncated_at: None,
        })
    }
}

/// Half-width of the DKW band: `sqrt(ln(2/α) / (2N))`.
pub fn dkw_epsilon(alpha: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    if n == 0 {
        return Err(Error::invalid("DKW band needs N >= 1"));
    }
    Ok(((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}
