//! Spatially dependent panels.
//!
//! Each time point draws an independent noise vector `eps` over the regions
//! and maps it through
//!
//! * SMA: `y = (I + theta W) eps`
//! * SAR: `y = (I - theta W)^{-1} eps`
//!
//! so rows stay i.i.d. over time while columns are dependent.

use nalgebra::{DMatrix, DVector, Schur, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::ReferenceDistribution;
use crate::error::{Error, Result};
use crate::panel::SpatialPanel;
use crate::rng::{stream_rng, Stream};
use crate::statistic::sb_value;
use crate::timeseries::{moments, Moments};
use crate::weights::ProximityMatrix;

/// Condition estimate beyond which `I - theta W` is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// Condition estimate beyond which a warning is logged.
pub const WARN_CONDITION: f64 = 1e3;

/// Theta grid of the dependence studies.
pub const THETA_GRID: [f64; 6] = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceModel {
    Sma,
    Sar,
}

impl std::str::FromStr for DependenceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sma" => Ok(DependenceModel::Sma),
            "sar" => Ok(DependenceModel::Sar),
            _ => Err(Error::InvalidParameter(format!(
                "unknown model '{s}' (expected sar or sma)"
            ))),
        }
    }
}

impl std::fmt::Display for DependenceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DependenceModel::Sma => "sma",
            DependenceModel::Sar => "sar",
        })
    }
}

/// A validated dependence model with its linear map prepared once.
#[derive(Debug, Clone)]
pub struct DependenceSpec {
    model: DependenceModel,
    theta: f64,
    weights: ProximityMatrix,
    noise: ReferenceDistribution,
    filter: Filter,
    condition: f64,
}

#[derive(Debug, Clone)]
enum Filter {
    Identity,
    Multiply(DMatrix<f64>),
    Solve(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl DependenceSpec {
    pub fn new(
        model: DependenceModel,
        theta: f64,
        weights: ProximityMatrix,
        noise: ReferenceDistribution,
    ) -> Result<Self> {
        noise.validate()?;
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta must be finite, got {theta}")));
        }
        let r = weights.len();
        let w = DMatrix::from_row_slice(r, r, weights.as_slice());
        let identity = DMatrix::<f64>::identity(r, r);

        if model == DependenceModel::Sar {
            let bound = if weights.is_standardized() {
                1.0
            } else {
                1.0 / spectral_radius(&w)
            };
            if theta.abs() >= bound {
                return Err(Error::InvalidParameter(format!(
                    "SAR requires |theta| < {bound}, got {theta}"
                )));
            }
        }

        let (filter, condition) = if theta == 0.0 {
            (Filter::Identity, 1.0)
        } else {
            match model {
                DependenceModel::Sma => {
                    let m = &identity + &w * theta;
                    (Filter::Multiply(m), 1.0)
                }
                DependenceModel::Sar => {
                    let a = &identity - &w * theta;
                    let condition = condition_number(&a);
                    if condition.is_nan() || condition > SINGULAR_CONDITION {
                        return Err(Error::SingularSystem { condition });
                    }
                    if condition > WARN_CONDITION {
                        log::warn!("I - theta*W is ill-conditioned (condition estimate {condition:.3e})");
                    }
                    (Filter::Solve(a.lu()), condition)
                }
            }
        };
        Ok(DependenceSpec {
            model,
            theta,
            weights,
            noise,
            filter,
            condition,
        })
    }

    /// Standard normal noise.
    pub fn gaussian(model: DependenceModel, theta: f64, weights: ProximityMatrix) -> Result<Self> {
        Self::new(model, theta, weights, ReferenceDistribution::standard_normal())
    }

    pub fn model(&self) -> DependenceModel {
        self.model
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn weights(&self) -> &ProximityMatrix {
        &self.weights
    }

    pub fn noise(&self) -> &ReferenceDistribution {
        &self.noise
    }

    /// 2-norm condition number of the map applied to the noise (1 for SMA).
    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    fn apply(&self, eps: DVector<f64>) -> DVector<f64> {
        match &self.filter {
            Filter::Identity => eps,
            Filter::Multiply(m) => m * eps,
            Filter::Solve(lu) => lu.solve(&eps).expect("factorization checked non-singular"),
        }
    }
}

fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    if w.relative_eq(&w.transpose(), 1e-12, 1e-12) {
        return w.clone().symmetric_eigenvalues().amax();
    }
    if let Some(schur) = Schur::try_new(w.clone(), f64::EPSILON, 10_000) {
        return schur.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    }
    // Gelfand's formula on repeated squares, renormalized to stay finite.
    let mut m = w.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..30 {
        let n = m.norm();
        if n == 0.0 {
            return 0.0;
        }
        m /= n;
        log_scale += n.ln() / power;
        m = &m * &m;
        power *= 2.0;
    }
    log_scale.exp()
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// i.i.d. panel for replicate `index`, drawn one time row at a time.
pub fn noise_panel(
    dist: &ReferenceDistribution,
    times: usize,
    regions: usize,
    seed: u64,
    index: u64,
) -> Result<SpatialPanel> {
    let mut rng = stream_rng(seed, Stream::Panel, index);
    let mut columns = vec![0.0; times * regions];
    for t in 0..times {
        for i in 0..regions {
            columns[i * times + t] = dist.sample(&mut rng);
        }
    }
    SpatialPanel::from_column_major(times, regions, columns, None)
}

/// Simulated panel for replicate `index`; replicate 0 is [`simulate_panel`].
pub fn simulate_panel_replicate(spec: &DependenceSpec, times: usize, seed: u64, index: u64) -> Result<SpatialPanel> {
    if times < SpatialPanel::MIN_TIMES {
        return Err(Error::Size(format!("need at least 3 time points, got {times}")));
    }
    let r = spec.weights.len();
    let noise = noise_panel(&spec.noise, times, r, seed, index)?;
    let labels = Some(spec.weights.labels().to_vec());
    if matches!(spec.filter, Filter::Identity) {
        return SpatialPanel::from_column_major(times, r, noise.columns().flatten().copied().collect(), labels);
    }
    let mut columns = vec![0.0; times * r];
    for t in 0..times {
        let y = spec.apply(DVector::from_vec(noise.row(t)));
        for i in 0..r {
            columns[i * times + t] = y[i];
        }
    }
    SpatialPanel::from_column_major(times, r, columns, labels)
}

pub fn simulate_panel(spec: &DependenceSpec, times: usize, seed: u64) -> Result<SpatialPanel> {
    simulate_panel_replicate(spec, times, seed, 0)
}

/// `S~_B` samples and their moments at one theta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub model: DependenceModel,
    pub theta: f64,
    pub samples: Vec<f64>,
    pub summary: Moments,
}

/// Simulates `reps` values of `S~_B` at each theta.
///
/// Replicate `r` uses the same noise stream at every theta (common random
/// numbers), and at theta = 0 coincides with replicate `r` of
/// [`crate::null::monte_carlo_null`] under the same seed.
pub fn theta_sweep(
    model: DependenceModel,
    w: &ProximityMatrix,
    thetas: &[f64],
    times: usize,
    reps: usize,
    seed: u64,
    noise: &ReferenceDistribution,
) -> Result<Vec<SweepPoint>> {
    if reps < 4 {
        return Err(Error::SampleSize { needed: 4, got: reps });
    }
    thetas
        .iter()
        .map(|&theta| {
            let spec = DependenceSpec::new(model, theta, w.clone(), *noise)?;
            let samples = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let panel = simulate_panel_replicate(&spec, times, seed, r as u64)?;
                    sb_value(&panel, w)
                })
                .collect::<Result<Vec<f64>>>()?;
            let summary = moments(&samples)?;
            Ok(SweepPoint {
                model,
                theta,
                samples,
                summary,
            })
        })
        .collect()
}
