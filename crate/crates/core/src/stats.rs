//! Small numeric helpers: moments, the Gaussian CDF and kernel densities.

use statrs::function::erf::erf;

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn population_std(xs: &[f64]) -> f64 {
    population_variance(xs).sqrt()
}

/// Unbiased sample variance (divides by n - 1); zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + erf((x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Gaussian kernel density estimate evaluated exactly at any point.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    pub fn new(points: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData("kernel density needs at least one point".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invariant("kernel density points must be finite"));
        }
        Ok(Self { points, bandwidth })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        self.points
            .iter()
            .map(|p| normal_pdf(x, *p, self.bandwidth))
            .sum::<f64>()
            / self.points.len() as f64
    }

    /// Log density, computed with log-sum-exp so that it stays finite far
    /// from every point.
    pub fn log_density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let logs: Vec<f64> = self
            .points
            .iter()
            .map(|p| -0.5 * ((x - p) / h).powi(2))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        top + sum.ln() - (h * (2.0 * std::f64::consts::PI).sqrt()).ln() - (self.points.len() as f64).ln()
    }

    /// Silverman's rule-of-thumb bandwidth, never below `min_bandwidth`.
    pub fn silverman(points: &[f64], min_bandwidth: f64) -> f64 {
        if points.len() < 2 {
            return min_bandwidth;
        }
        let sd = sample_variance(points).sqrt();
        (1.06 * sd * (points.len() as f64).powf(-0.2)).max(min_bandwidth)
    }
}

/// A density discretized into equal-width bins over `[lo, lo + step * bins)`,
/// normalized so that the bins integrate to one. Lookups outside the grid use
/// the edge bin.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl GridDensity {
    /// Evaluates `kde` at bin centers and normalizes.
    pub fn from_kde(kde: &Kde, lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "bad grid [{lo}, {hi}] with step {step}"
            )));
        }
        let bins = ((hi - lo) / step).round().max(1.0) as usize;
        let raw: Vec<f64> = (0..bins)
            .map(|i| kde.density(lo + (i as f64 + 0.5) * step))
            .collect();
        Self::from_values(lo, step, raw)
    }

    /// Builds a grid from raw non-negative bin heights, normalizing them.
    pub fn from_values(lo: f64, step: f64, mut values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum::<f64>() * step;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InsufficientData(
                "density has no mass on its grid".into(),
            ));
        }
        for v in &mut values {
            *v /= total;
        }
        Ok(Self { lo, step, values })
    }

    /// Wraps bin heights that are already normalized, as read back from a file.
    pub fn from_normalized(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invariant("density bins must be finite and non-negative"));
        }
        let total = values.iter().sum::<f64>() * step;
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invariant(format!("density integrates to {total}, not 1")));
        }
        Ok(Self { lo, step, values })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.step).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.values.len() - 1)
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.values[self.bin(x)]
    }

    /// Riemann sum of the stored density; one up to rounding.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step
    }
}
