//! Reference distributions and their population Bergsma kernels.
//!
//! For a distribution `F` the kernel is built from the mean absolute
//! deviation about a point, `g_F(z) = E|z - Z|`, and the mean difference
//! `g(F) = E|Z1 - Z2|`:
//!
//! ```text
//! h_F(z1, z2) = -1/2 * ( |z1 - z2| - g_F(z1) - g_F(z2) + g(F) )
//! ```
//!
//! All six families have closed forms for both quantities. A quadrature
//! route is kept alongside as an independent check.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared as ChiSquaredCdf, Continuous, ContinuousCDF};
use statrs::function::erf::{erf, erfc_inv};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Mass left outside the truncated integration domain.
const TRUNCATION_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ReferenceDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Laplace { location: f64, scale: f64 },
    Logistic { location: f64, scale: f64 },
    ChiSquare { df: f64 },
}

/// Default degrees of freedom for the chi-square reference.
pub const DEFAULT_CHI_SQUARE_DF: f64 = 3.0;

impl Default for ReferenceDistribution {
    fn default() -> Self {
        Self::standard_normal()
    }
}

impl ReferenceDistribution {
    pub fn standard_normal() -> Self {
        ReferenceDistribution::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn standard_uniform() -> Self {
        ReferenceDistribution::Uniform { low: 0.0, high: 1.0 }
    }

    /// The six families used for robustness studies, each in standard form.
    pub fn reference_set() -> [ReferenceDistribution; 6] {
        [
            Self::standard_normal(),
            Self::standard_uniform(),
            ReferenceDistribution::Exponential { rate: 1.0 },
            ReferenceDistribution::Laplace {
                location: 0.0,
                scale: 1.0,
            },
            ReferenceDistribution::Logistic {
                location: 0.0,
                scale: 1.0,
            },
            ReferenceDistribution::ChiSquare {
                df: DEFAULT_CHI_SQUARE_DF,
            },
        ]
    }

    pub fn family(&self) -> &'static str {
        match self {
            ReferenceDistribution::Normal { .. } => "normal",
            ReferenceDistribution::Uniform { .. } => "uniform",
            ReferenceDistribution::Exponential { .. } => "exponential",
            ReferenceDistribution::Laplace { .. } => "laplace",
            ReferenceDistribution::Logistic { .. } => "logistic",
            ReferenceDistribution::ChiSquare { .. } => "chi_square",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ReferenceDistribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            ReferenceDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && high > low,
            ReferenceDistribution::Exponential { rate } => rate.is_finite() && rate > 0.0,
            ReferenceDistribution::Laplace { location, scale }
            | ReferenceDistribution::Logistic { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
            ReferenceDistribution::ChiSquare { df } => df.is_finite() && df > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid parameters for {self}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, .. } => mean,
            ReferenceDistribution::Uniform { low, high } => 0.5 * (low + high),
            ReferenceDistribution::Exponential { rate } => 1.0 / rate,
            ReferenceDistribution::Laplace { location, .. } | ReferenceDistribution::Logistic { location, .. } => {
                location
            }
            ReferenceDistribution::ChiSquare { df } => df,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ReferenceDistribution::Normal { sd, .. } => sd * sd,
            ReferenceDistribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            ReferenceDistribution::Exponential { rate } => 1.0 / (rate * rate),
            ReferenceDistribution::Laplace { scale, .. } => 2.0 * scale * scale,
            ReferenceDistribution::Logistic { scale, .. } => scale * scale * PI * PI / 3.0,
            ReferenceDistribution::ChiSquare { df } => 2.0 * df,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(
            self,
            ReferenceDistribution::Exponential { .. } | ReferenceDistribution::ChiSquare { .. }
        )
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => {
                let u = (x - mean) / sd;
                INV_SQRT_2PI * (-0.5 * u * u).exp() / sd
            }
            ReferenceDistribution::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            ReferenceDistribution::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            ReferenceDistribution::Laplace { location, scale } => (-(x - location).abs() / scale).exp() / (2.0 * scale),
            ReferenceDistribution::Logistic { location, scale } => {
                let e = (-(x - location).abs() / scale).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
            ReferenceDistribution::ChiSquare { df } => chi_square(df).pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            ReferenceDistribution::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            ReferenceDistribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            ReferenceDistribution::Laplace { location, scale } => {
                let u = (x - location) / scale;
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
            ReferenceDistribution::Logistic { location, scale } => 1.0 / (1.0 + (-(x - location) / scale).exp()),
            ReferenceDistribution::ChiSquare { df } => chi_square(df).cdf(x),
        }
    }

    /// Inverse distribution function for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => mean + sd * std_normal_quantile(p),
            ReferenceDistribution::Uniform { low, high } => low + p * (high - low),
            ReferenceDistribution::Exponential { rate } => -(-p).ln_1p() / rate,
            ReferenceDistribution::Laplace { location, scale } => {
                if p < 0.5 {
                    location + scale * (2.0 * p).ln()
                } else {
                    location - scale * (2.0 * (1.0 - p)).ln()
                }
            }
            ReferenceDistribution::Logistic { location, scale } => location + scale * (p / (1.0 - p)).ln(),
            ReferenceDistribution::ChiSquare { df } => chi_square(df).inverse_cdf(p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            ReferenceDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ReferenceDistribution::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            ReferenceDistribution::Laplace { location, scale } => {
                // Inverse CDF on (-1/2, 1/2).
                let u = open_unit(rng) - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            ReferenceDistribution::Logistic { location, scale } => {
                let u = open_unit(rng);
                location + scale * (u / (1.0 - u)).ln()
            }
            ReferenceDistribution::ChiSquare { df } => {
                ChiSquared::new(df).expect("validated degrees of freedom").sample(rng)
            }
        }
    }

    /// `g_F(z) = E|z - Z|`, in closed form.
    pub fn mean_abs_deviation_at(&self, z: f64) -> f64 {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => {
                let u = (z - mean) / sd;
                sd * (2.0 * INV_SQRT_2PI * (-0.5 * u * u).exp() + u * erf(u / SQRT_2))
            }
            ReferenceDistribution::Uniform { low, high } => {
                if z < low || z > high {
                    (z - 0.5 * (low + high)).abs()
                } else {
                    ((z - low).powi(2) + (high - z).powi(2)) / (2.0 * (high - low))
                }
            }
            ReferenceDistribution::Exponential { rate } => {
                if z < 0.0 {
                    1.0 / rate - z
                } else {
                    z - 1.0 / rate + 2.0 * (-rate * z).exp() / rate
                }
            }
            ReferenceDistribution::Laplace { location, scale } => {
                let a = (z - location).abs();
                a + scale * (-a / scale).exp()
            }
            ReferenceDistribution::Logistic { location, scale } => {
                // E|u - Y| = u + 2 s ln(1 + e^{-u/s}), written symmetrically.
                let a = (z - location).abs();
                a + 2.0 * scale * (-a / scale).exp().ln_1p()
            }
            ReferenceDistribution::ChiSquare { df } => {
                if z <= 0.0 {
                    df - z
                } else {
                    let shape = 0.5 * df;
                    let upper_mean = df * gamma_ur(shape + 1.0, 0.5 * z);
                    let upper_mass = gamma_ur(shape, 0.5 * z);
                    z - df + 2.0 * (upper_mean - z * upper_mass)
                }
            }
        }
    }

    /// `g(F) = E|Z1 - Z2|`, the mean difference, in closed form.
    pub fn mean_difference(&self) -> f64 {
        match *self {
            ReferenceDistribution::Normal { sd, .. } => 2.0 * sd / PI.sqrt(),
            ReferenceDistribution::Uniform { low, high } => (high - low) / 3.0,
            ReferenceDistribution::Exponential { rate } => 1.0 / rate,
            ReferenceDistribution::Laplace { scale, .. } => 1.5 * scale,
            ReferenceDistribution::Logistic { scale, .. } => 2.0 * scale,
            ReferenceDistribution::ChiSquare { df } => {
                // Gamma(shape a, scale 2): 2 * 2 * Gamma(a + 1/2) / (sqrt(pi) Gamma(a)).
                let a = 0.5 * df;
                4.0 * (ln_gamma(a + 0.5) - ln_gamma(a)).exp() / PI.sqrt()
            }
        }
    }

    /// Finite interval holding all but `TRUNCATION_MASS` of the distribution.
    pub fn truncated_support(&self) -> (f64, f64) {
        match *self {
            ReferenceDistribution::Uniform { low, high } => (low, high),
            ReferenceDistribution::Exponential { .. } => (0.0, self.quantile(1.0 - TRUNCATION_MASS)),
            ReferenceDistribution::ChiSquare { .. } => (0.0, self.quantile(1.0 - 0.5 * TRUNCATION_MASS)),
            _ => (
                self.quantile(0.5 * TRUNCATION_MASS),
                self.quantile(1.0 - 0.5 * TRUNCATION_MASS),
            ),
        }
    }

    /// `g_F(z)` by adaptive quadrature of `|z - x| f(x)` on the truncated support.
    pub fn mean_abs_deviation_at_by_quadrature(&self, z: f64, abs_tol: f64) -> Result<f64> {
        let (lo, hi) = self.truncated_support();
        let f = |x: f64| (z - x).abs() * self.pdf(x);
        // Split at z and at any kink of the density so each piece is smooth.
        let mut cuts = vec![lo, hi, z];
        if let ReferenceDistribution::Laplace { location, .. } = *self {
            cuts.push(location);
        }
        cuts.retain(|&c| (lo..=hi).contains(&c));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pieces = (cuts.len() - 1) as f64;
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            total += quadrature::integrate(f, pair[0], pair[1], abs_tol / pieces)?;
        }
        Ok(total)
    }

    /// `g(F)` by quadrature of `g_F(z) f(z)`, using the closed-form `g_F`.
    pub fn mean_difference_by_quadrature(&self, abs_tol: f64) -> Result<f64> {
        let (lo, hi) = self.truncated_support();
        let mid = self.quantile(0.5);
        let f = |x: f64| self.mean_abs_deviation_at(x) * self.pdf(x);
        Ok(quadrature::integrate(f, lo, mid, 0.5 * abs_tol)? + quadrature::integrate(f, mid, hi, 0.5 * abs_tol)?)
    }
}

impl fmt::Display for ReferenceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ReferenceDistribution::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            ReferenceDistribution::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
            ReferenceDistribution::Exponential { rate } => write!(f, "exponential:{rate}"),
            ReferenceDistribution::Laplace { location, scale } => write!(f, "laplace:{location},{scale}"),
            ReferenceDistribution::Logistic { location, scale } => {
                write!(f, "logistic:{location},{scale}")
            }
            ReferenceDistribution::ChiSquare { df } => write!(f, "chi_square:{df}"),
        }
    }
}

/// Parses `family` or `family:p1[,p2]`, e.g. `normal`, `laplace:0,2`, `chi-square:5`.
impl FromStr for ReferenceDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let params: Vec<f64> = match params {
            None => Vec::new(),
            Some(p) => p
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad distribution parameter '{v}' in '{s}'")))
                })
                .collect::<Result<_>>()?,
        };
        let arg = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        let expect_at_most = |n: usize| {
            if params.len() > n {
                Err(Error::InvalidParameter(format!(
                    "'{name}' takes at most {n} parameters, got {}",
                    params.len()
                )))
            } else {
                Ok(())
            }
        };
        let normalized = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let dist = match normalized.as_str() {
            "normal" | "gaussian" => {
                expect_at_most(2)?;
                ReferenceDistribution::Normal {
                    mean: arg(0, 0.0),
                    sd: arg(1, 1.0),
                }
            }
            "uniform" => {
                expect_at_most(2)?;
                ReferenceDistribution::Uniform {
                    low: arg(0, 0.0),
                    high: arg(1, 1.0),
                }
            }
            "exponential" | "exp" => {
                expect_at_most(1)?;
                ReferenceDistribution::Exponential { rate: arg(0, 1.0) }
            }
            "laplace" => {
                expect_at_most(2)?;
                ReferenceDistribution::Laplace {
                    location: arg(0, 0.0),
                    scale: arg(1, 1.0),
                }
            }
            "logistic" => {
                expect_at_most(2)?;
                ReferenceDistribution::Logistic {
                    location: arg(0, 0.0),
                    scale: arg(1, 1.0),
                }
            }
            "chi_square" | "chisquare" | "chisq" | "chi2" => {
                expect_at_most(1)?;
                ReferenceDistribution::ChiSquare {
                    df: arg(0, DEFAULT_CHI_SQUARE_DF),
                }
            }
            _ => return Err(Error::UnsupportedDistribution(s.to_string())),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// `g_F(z)` for a reference distribution.
pub fn population_g(dist: &ReferenceDistribution, z: f64) -> Result<f64> {
    dist.validate()?;
    if !z.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(dist.mean_abs_deviation_at(z))
}

/// Population Bergsma kernel `h_F(z1, z2)`.
pub fn population_kernel(dist: &ReferenceDistribution, z1: f64, z2: f64) -> Result<f64> {
    dist.validate()?;
    if !z1.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    if !z2.is_finite() {
        return Err(Error::NonFinite { index: 1 });
    }
    Ok(kernel_unchecked(dist, z1, z2, dist.mean_difference()))
}

#[inline]
pub(crate) fn kernel_unchecked(dist: &ReferenceDistribution, z1: f64, z2: f64, gf: f64) -> f64 {
    -0.5 * ((z1 - z2).abs() - dist.mean_abs_deviation_at(z1) - dist.mean_abs_deviation_at(z2) + gf)
}

fn chi_square(df: f64) -> ChiSquaredCdf {
    ChiSquaredCdf::new(df).expect("validated degrees of freedom")
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub(crate) fn std_normal_cdf(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-u / SQRT_2)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}
