//! Decay kernel bases.
//!
//! Impact functions are parameterized as weighted sums of `L` predefined
//! nonnegative kernels, `phi_{cc'}(t) = sum_l a_{cc'l} g_l(t)`. Both the
//! likelihood and the simulator need point evaluations `g_l(t)`, interval
//! integrals, and the total mass on `[0, inf)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A basis of `L` nonnegative decay kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelBasis {
    /// `g_l(t) = exp(-w_l t)` with decay rate `w_l > 0`.
    Exponential { rates: Vec<f64> },
    /// `g_l(t) = exp(-(t - c_l)^2 / (2 s_l^2))` with center `c_l` and
    /// bandwidth `s_l > 0`.
    Gaussian { centers: Vec<f64>, bandwidths: Vec<f64> },
}

impl KernelBasis {
    pub fn exponential(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("kernel basis needs at least one kernel".into()));
        }
        if rates.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::Config("exponential decay rates must be positive".into()));
        }
        Ok(KernelBasis::Exponential { rates })
    }

    pub fn single_exponential(rate: f64) -> Result<Self> {
        Self::exponential(vec![rate])
    }

    pub fn gaussian(centers: Vec<f64>, bandwidths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != bandwidths.len() {
            return Err(Error::Config(
                "gaussian basis needs matching nonempty centers and bandwidths".into(),
            ));
        }
        if centers.iter().any(|c| !c.is_finite())
            || bandwidths.iter().any(|&s| !s.is_finite() || s <= 0.0)
        {
            return Err(Error::Config("gaussian bandwidths must be positive".into()));
        }
        Ok(KernelBasis::Gaussian { centers, bandwidths })
    }

    /// Number of kernels `L`.
    pub fn len(&self) -> usize {
        match self {
            KernelBasis::Exponential { rates } => rates.len(),
            KernelBasis::Gaussian { centers, .. } => centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point evaluation `g_l(t)`; zero for `t < 0`.
    pub fn eval(&self, l: usize, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            KernelBasis::Exponential { rates } => (-rates[l] * t).exp(),
            KernelBasis::Gaussian { centers, bandwidths } => {
                let z = (t - centers[l]) / bandwidths[l];
                (-0.5 * z * z).exp()
            }
        }
    }

    /// Interval integral `\int_a^b g_l(u) du` for `0 <= a <= b`.
    ///
    /// Exponential kernels use the closed form `(exp(-w a) - exp(-w b)) / w`;
    /// Gaussian kernels go through the standard normal CDF.
    pub fn integrate(&self, l: usize, a: f64, b: f64) -> f64 {
        debug_assert!(a >= 0.0 && b >= a);
        if b <= a {
            return 0.0;
        }
        match self {
            KernelBasis::Exponential { rates } => {
                let w = rates[l];
                ((-w * a).exp() - (-w * b).exp()) / w
            }
            KernelBasis::Gaussian { centers, bandwidths } => {
                let (c, s) = (centers[l], bandwidths[l]);
                let scale = s * (2.0 * std::f64::consts::PI).sqrt();
                scale * (normal_cdf((b - c) / s) - normal_cdf((a - c) / s))
            }
        }
    }

    /// Total mass `\int_0^inf g_l(u) du`.
    pub fn total_mass(&self, l: usize) -> f64 {
        match self {
            KernelBasis::Exponential { rates } => 1.0 / rates[l],
            KernelBasis::Gaussian { centers, bandwidths } => {
                let (c, s) = (centers[l], bandwidths[l]);
                let scale = s * (2.0 * std::f64::consts::PI).sqrt();
                scale * normal_cdf(c / s)
            }
        }
    }

    /// Energy bound `G = max_l sup_{t >= 0} g_l(t)^2`.
    pub fn energy_bound(&self) -> f64 {
        match self {
            // sup attained at t = 0 where every exponential equals 1.
            KernelBasis::Exponential { .. } => 1.0,
            KernelBasis::Gaussian { centers, bandwidths } => centers
                .iter()
                .zip(bandwidths)
                .map(|(&c, &s)| {
                    let peak = if c >= 0.0 {
                        1.0
                    } else {
                        let z = c / s;
                        (-0.5 * z * z).exp()
                    };
                    peak * peak
                })
                .fold(0.0, f64::max),
        }
    }
}

/// Standard normal CDF by the Abramowitz-Stegun 26.2.17 rational
/// approximation, |error| < 7.5e-8.
pub fn normal_cdf(x: f64) -> f64 {
    const P: f64 = 0.2316419;
    const B: [f64; 5] = [0.319381530, -0.356563782, 1.781477937, -1.821255978, 1.330274429];
    let z = x.abs();
    let k = 1.0 / (1.0 + P * z);
    let mut poly = 0.0;
    for &b in B.iter().rev() {
        poly = (poly + b) * k;
    }
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = 1.0 - pdf * poly;
    if x >= 0.0 {
        upper
    } else {
        1.0 - upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_point_values() {
        let basis = KernelBasis::single_exponential(1.0).unwrap();
        assert_relative_eq!(basis.eval(0, 0.0), 1.0);
        assert_relative_eq!(basis.eval(0, 1.0), (-1.0f64).exp());
        assert_eq!(basis.eval(0, -0.5), 0.0);
    }

    #[test]
    fn exponential_interval_closed_form() {
        let basis = KernelBasis::exponential(vec![2.0]).unwrap();
        // (e^{-2a} - e^{-2b}) / 2
        let expect = ((-2.0f64 * 0.25).exp() - (-2.0f64 * 1.5).exp()) / 2.0;
        assert_relative_eq!(basis.integrate(0, 0.25, 1.5), expect, max_relative = 1e-15);
        assert_relative_eq!(basis.total_mass(0), 0.5);
    }

    #[test]
    fn unit_interval_integral_matches_hand_value() {
        // \int_0^1 e^{-s} ds = 1 - e^{-1}
        let basis = KernelBasis::single_exponential(1.0).unwrap();
        assert_relative_eq!(
            basis.integrate(0, 0.0, 1.0),
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn normal_cdf_reference_points() {
        // Reference values accurate to well beyond the 1e-7 approximation error.
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-7);
        assert_relative_eq!(normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-7);
        assert_relative_eq!(normal_cdf(-1.0), 0.15865525393145705, epsilon = 1e-7);
        assert_relative_eq!(normal_cdf(2.5), 0.9937903346742238, epsilon = 1e-7);
    }

    #[test]
    fn gaussian_integral_against_simpson() {
        let basis = KernelBasis::gaussian(vec![1.0], vec![0.5]).unwrap();
        // Fixed-grid Simpson with a fine step as an independent check.
        let (a, b) = (0.2, 2.0);
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut acc = basis.eval(0, a) + basis.eval(0, b);
        for i in 1..n {
            let t = a + i as f64 * h;
            acc += basis.eval(0, t) * if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        let simpson = acc * h / 3.0;
        assert_relative_eq!(basis.integrate(0, a, b), simpson, epsilon = 1e-7);
    }

    #[test]
    fn energy_bound_is_one_for_standard_bases() {
        assert_eq!(KernelBasis::exponential(vec![0.5, 2.0]).unwrap().energy_bound(), 1.0);
        assert_eq!(
            KernelBasis::gaussian(vec![1.0, 3.0], vec![1.0, 1.0]).unwrap().energy_bound(),
            1.0
        );
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(KernelBasis::exponential(vec![]).is_err());
        assert!(KernelBasis::exponential(vec![-1.0]).is_err());
        assert!(KernelBasis::gaussian(vec![1.0], vec![0.0]).is_err());
        assert!(KernelBasis::gaussian(vec![1.0], vec![1.0, 2.0]).is_err());
    }
}
