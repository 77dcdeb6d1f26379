//! Integer weight sampling with a calibrated mean.
//!
//! Each family is a continuous distribution rounded to the nearest integer.
//! A raw draw outside `[1, capacity]` is redrawn up to 16 times and the last
//! out-of-range draw is clipped; the resulting probability mass function is
//! computed exactly. One family parameter (location for Uniform and Gaussian,
//! scale for Weibull) is solved by bisection so that the mean of that pmf equals
//! `ratio * capacity`. Draws are taken by inverse CDF over stratified uniforms,
//! which keeps the sample mean within a fraction of a unit of the target.

use rand::Rng;
use statrs::function::erf::erf;

use super::WeightDistribution;

const WEIBULL_SHAPE: f64 = 1.5;
const BISECTION_STEPS: usize = 200;
/// Redraws allowed before an out-of-range draw is clipped.
const REDRAWS: u32 = 16;

#[derive(Debug, Clone)]
pub struct WeightSampler {
    /// `cumulative[k]` is P(weight <= k + 1).
    cumulative: Vec<f64>,
    mean: f64,
    param: f64,
}

impl WeightSampler {
    /// Builds a sampler over `1..=capacity` whose mean is `ratio * capacity`
    /// (up to what the support permits).
    pub fn new(dist: WeightDistribution, capacity: u32, ratio: f64) -> Self {
        assert!(capacity >= 1, "capacity must be positive");
        let cap = capacity as f64;
        let target = (ratio * cap).clamp(1.0, cap);
        let family = Family::new(dist, target, cap);
        let (lo, hi) = family.param_range(target, cap);

        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if draw_mean(&family, mid, capacity) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let param = 0.5 * (lo + hi);
        let pmf = draw_pmf(&family, param, capacity);
        let mean = pmf.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { cumulative, mean, param }
    }

    /// Mean of the discretized distribution.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Calibrated family parameter: the location for Uniform and Gaussian,
    /// the scale for Weibull.
    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn capacity(&self) -> u32 {
        self.cumulative.len() as u32
    }

    /// Weight whose CDF first reaches `u` (`u` in `[0, 1)`).
    pub fn quantile(&self, u: f64) -> u32 {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        (idx.min(self.cumulative.len() - 1) + 1) as u32
    }

    /// Draws `n` weights in stratified order: the `i`-th draw comes from the
    /// `i`-th of `n` equal-probability strata. Callers shuffle or sort.
    pub fn sample_stratified<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u32> {
        (0..n)
            .map(|i| {
                let u = (i as f64 + rng.gen::<f64>()) / n as f64;
                self.quantile(u.min(1.0 - f64::EPSILON))
            })
            .collect()
    }
}

enum Family {
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
    Weibull,
}

impl Family {
    fn new(dist: WeightDistribution, target: f64, cap: f64) -> Self {
        match dist {
            WeightDistribution::Uniform => Family::Uniform {
                half_width: (target - 0.5).min(cap + 0.5 - target).max(0.5),
            },
            WeightDistribution::Gaussian => Family::Gaussian { sigma: (target / 4.0).max(1e-3) },
            WeightDistribution::Weibull => Family::Weibull,
        }
    }

    fn param_range(&self, target: f64, cap: f64) -> (f64, f64) {
        match self {
            Family::Uniform { .. } | Family::Gaussian { .. } => (target - 2.0 * cap, target + 2.0 * cap),
            Family::Weibull => (1e-6, 50.0 * cap),
        }
    }

    fn cdf(&self, param: f64, x: f64) -> f64 {
        match self {
            Family::Uniform { half_width } => {
                ((x - (param - half_width)) / (2.0 * half_width)).clamp(0.0, 1.0)
            }
            Family::Gaussian { sigma } => 0.5 * (1.0 + erf((x - param) / (sigma * std::f64::consts::SQRT_2))),
            Family::Weibull => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(x / param).powf(WEIBULL_SHAPE)).exp()
                }
            }
        }
    }
}

fn draw_pmf(family: &Family, param: f64, capacity: u32) -> Vec<f64> {
    let cap = capacity as f64;
    let below = family.cdf(param, 0.5);
    let above = (1.0 - family.cdf(param, cap + 0.5)).max(0.0);
    let out = (below + above).min(1.0);
    // P(accepted on one of the 1 + REDRAWS attempts) / P(in range), as a finite sum.
    let accept_scale: f64 = (0..=REDRAWS).map(|j| out.powi(j as i32)).sum();
    let clipped = out.powi(REDRAWS as i32);
    let mut pmf: Vec<f64> = (1..=capacity)
        .map(|k| {
            let k = k as f64;
            (family.cdf(param, k + 0.5) - family.cdf(param, k - 0.5)).max(0.0) * accept_scale
        })
        .collect();
    pmf[0] += below * clipped;
    let last = pmf.len() - 1;
    pmf[last] += above * clipped;
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

fn draw_mean(family: &Family, param: f64, capacity: u32) -> f64 {
    draw_pmf(family, param, capacity)
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum()
}
